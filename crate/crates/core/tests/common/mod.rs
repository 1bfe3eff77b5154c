//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use fourns::bitree::OrderedBiTree;
use fourns::measure::GaussianSampler;
use fourns::spectral::FourierState;
use fourns::Complex64;

/// `Σ_{n1−n2+n3=n} u_{n1} ū_{n2} u_{n3}` for `|n| ≤ N` by brute force.
pub fn direct_cubic(u: &[Complex64]) -> Vec<Complex64> {
    let big = (u.len() / 2) as i64;
    let at = |n: i64| u[(n + big) as usize];
    (-big..=big)
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n1 in -big..=big {
                for n2 in -big..=big {
                    let n3 = n - n1 + n2;
                    if n3.abs() <= big {
                        acc += at(n1) * at(n2).conj() * at(n3);
                    }
                }
            }
            acc
        })
        .collect()
}

/// `(|u|² − 2Σ|u|²)u` on `|n| ≤ N` from the brute-force convolution.
pub fn direct_renorm(u: &[Complex64]) -> Vec<Complex64> {
    let mass: f64 = u.iter().map(|c| c.norm_sqr()).sum();
    direct_cubic(u).into_iter().zip(u).map(|(c, &x)| c - 2.0 * mass * x).collect()
}

pub fn factored_phi(n1: i64, n2: i64, n3: i64, n: i64) -> i128 {
    let (a, b, c, d) = (n1 as i128, n2 as i128, n3 as i128, n as i128);
    (a - b) * (a - d) * (a * a + b * b + c * c + d * d + 2 * (a + c) * (a + c))
}

pub fn factored_mu(n1: i64, n3: i64, n: i64) -> i128 {
    -2 * (n - n1) as i128 * (n - n3) as i128
}

/// Every frequency tuple on the tree's nodes with entries in `[−N, N]` that
/// satisfies the index-function rules, by exhaustive search.
pub fn brute_force_assignments(tree: &OrderedBiTree, cutoff: usize) -> BTreeSet<Vec<i64>> {
    let big = cutoff as i64;
    let len = tree.nodes.len();
    let mut out = BTreeSet::new();
    let mut tuple = vec![-big; len];
    loop {
        let ok = tuple[0] == tuple[1]
            && tree.nodes.iter().enumerate().all(|(a, node)| match node.children {
                None => true,
                Some([x, y, z]) => {
                    let (na, n1, n2, n3) = (tuple[a], tuple[x], tuple[y], tuple[z]);
                    na == n1 - n2 + n3 && na != n1 && na != n3 && n2 != n1 && n2 != n3
                }
            });
        if ok {
            out.insert(tuple.clone());
        }
        let mut k = 0;
        loop {
            if k == len {
                return out;
            }
            if tuple[k] < big {
                tuple[k] += 1;
                break;
            }
            tuple[k] = -big;
            k += 1;
        }
    }
}

pub fn mu_sample(s: f64, m: usize, seed: u64, index: u64) -> FourierState {
    GaussianSampler::new(s, m, seed).sample_at(index)
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}
