//! Gaussian measures on Fourier coefficients and Monte Carlo estimators for
//! the weighted measures.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{flow_to, DynamicsError};
use crate::normal_form::{EnergyFunctional, NormalFormError};
use crate::spectral::{bracket, sobolev_distance, sobolev_norm, FourierState};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
}

/// Draws `û(n) = a · g_n / ⟨n⟩^s`, `|n| ≤ M`, with `g_n` standard complex
/// Gaussians (`E|g_n|² = 1`). Sample `i` comes from its own ChaCha stream, so
/// results do not depend on how samples are scheduled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSampler {
    pub s: f64,
    pub m: usize,
    pub seed: u64,
    /// Overall amplitude `a`; 1 for the measure itself.
    pub amplitude: f64,
    next: u64,
}

impl GaussianSampler {
    pub fn new(s: f64, m: usize, seed: u64) -> Self {
        GaussianSampler { s, m, seed, amplitude: 1.0, next: 0 }
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn sample_at(&self, index: u64) -> FourierState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let scale = self.amplitude * std::f64::consts::FRAC_1_SQRT_2;
        FourierState::from_fn(self.m, |n| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * (scale / bracket(n).powf(self.s))
        })
    }

    /// Next sample of the sequential stream.
    pub fn sample(&mut self) -> FourierState {
        let u = self.sample_at(self.next);
        self.next += 1;
        u
    }
}

pub trait Region: Sync {
    fn contains(&self, u: &FourierState) -> bool;
}

/// Closed ball `‖u − center‖_{H^r} ≤ radius` (centered at 0 when `center`
/// is `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Option<FourierState>,
    pub radius: f64,
    pub r: f64,
}

impl Ball {
    pub fn centered(radius: f64, r: f64) -> Self {
        Ball { center: None, radius, r }
    }
}

impl Region for Ball {
    fn contains(&self, u: &FourierState) -> bool {
        let d = match &self.center {
            Some(c) => sobolev_distance(u, c, self.r),
            None => sobolev_norm(u, self.r),
        };
        d <= self.radius
    }
}

/// `|u_n| ≤ radius` for one fixed frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateBall {
    pub n: i64,
    pub radius: f64,
}

impl Region for CoordinateBall {
    fn contains(&self, u: &FourierState) -> bool {
        u.get(self.n).norm() <= self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Everything;

impl Region for Everything {
    fn contains(&self, _: &FourierState) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nothing;

impl Region for Nothing {
    fn contains(&self, _: &FourierState) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Infinite when no sample landed in the region.
    pub std_err: f64,
    pub n_samples: usize,
    pub hits: usize,
    /// The estimate was accumulated from log-weights.
    pub log_space: bool,
}

impl McEstimate {
    /// Mean and standard error of `1_hit · exp(log_w)` over the samples;
    /// misses contribute zero. Weights are rescaled by the largest log-weight
    /// before exponentiating.
    pub fn from_log_weights(samples: &[Option<f64>]) -> Self {
        let n = samples.len();
        let hits = samples.iter().filter(|x| x.is_some()).count();
        if hits == 0 {
            return McEstimate { mean: 0.0, std_err: f64::INFINITY, n_samples: n, hits, log_space: true };
        }
        let shift = samples.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = samples.iter().map(|x| x.map_or(0.0, |l| (l - shift).exp())).collect();
        let mean = scaled.iter().sum::<f64>() / n as f64;
        let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let factor = shift.exp();
        McEstimate {
            mean: mean * factor,
            std_err: (var / n as f64).sqrt() * factor,
            n_samples: n,
            hits,
            log_space: true,
        }
    }

    /// `|a − b| ≤ k √(σ_a² + σ_b²)`.
    pub fn overlaps(&self, other: &McEstimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.std_err.hypot(other.std_err)
    }
}

fn check_samples(n: usize, min: usize) -> Result<(), MeasureError> {
    if n < min {
        return Err(MeasureError::InvalidConfig(format!("need at least {min} samples, got {n}")));
    }
    Ok(())
}

fn collect<T: Send>(
    n: usize,
    f: impl Fn(u64) -> Result<T, MeasureError> + Sync + Send,
) -> Result<Vec<T>, MeasureError> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// `ρ_{s,N}(A) = E_μ[1_A F_{s,N}]`.
pub fn mc_weighted_measure(
    region: &dyn Region,
    sampler: &GaussianSampler,
    weight: &EnergyFunctional,
    n_samples: usize,
) -> Result<McEstimate, MeasureError> {
    check_samples(n_samples, 100)?;
    let logs = collect(n_samples, |i| {
        let u = sampler.sample_at(i);
        Ok(if region.contains(&u) { Some(weight.log_weight(&u)?) } else { None })
    })?;
    Ok(McEstimate::from_log_weights(&logs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfVariable {
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    /// `|lhs − rhs| / √(σ_l² + σ_r²)`; zero when both agree exactly.
    pub z_score: f64,
    pub overlap: bool,
}

/// Two estimators of `ρ_{s,N}(Φ_N(t)(A))`:
/// `E_μ[1_A(Φ_N(−t)u) F(u)]` and
/// `E_μ[1_A(u) exp(Σ N₀(P_N Φ_N(t)u) − ½‖P_N Φ_N(t)u‖²_{H^s} + ½‖P_N u‖²_{H^s})]`.
pub fn change_of_variable_check(
    region: &dyn Region,
    sampler: &GaussianSampler,
    t: f64,
    weight: &EnergyFunctional,
    dt: f64,
    n_samples: usize,
) -> Result<ChangeOfVariable, MeasureError> {
    check_samples(n_samples, 2)?;
    let n_cut = weight.cutoff();
    let pairs = collect(n_samples, |i| {
        let u = sampler.sample_at(i);
        let back = flow_to(&u, n_cut, dt, -t)?;
        let lhs = if region.contains(&back) { Some(weight.log_weight(&u)?) } else { None };
        let rhs = if region.contains(&u) {
            let fwd = flow_to(&u, n_cut, dt, t)?;
            let plain_now = 0.5 * sobolev_norm(&u.project(n_cut), sampler.s).powi(2);
            let plain_fwd = 0.5 * sobolev_norm(&fwd.project(n_cut), sampler.s).powi(2);
            Some(weight.log_weight(&fwd)? + (plain_now - plain_fwd))
        } else {
            None
        };
        Ok((lhs, rhs))
    })?;
    let (l, r): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let lhs = McEstimate::from_log_weights(&l);
    let rhs = McEstimate::from_log_weights(&r);
    let gap = (lhs.mean - rhs.mean).abs();
    let spread = lhs.std_err.hypot(rhs.std_err);
    let z_score = if gap == 0.0 { 0.0 } else { gap / spread };
    Ok(ChangeOfVariable { lhs, rhs, z_score, overlap: z_score <= 3.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallProbe {
    pub taus: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    /// Least-squares slope of `log ρ` against `τ`.
    pub rate: f64,
}

/// `ρ_{s,N}(Φ_N(τ)(D))` on a grid of times, by the pull-back estimator.
pub fn gronwall_probe(
    region: &dyn Region,
    sampler: &GaussianSampler,
    taus: &[f64],
    weight: &EnergyFunctional,
    dt: f64,
    n_samples: usize,
) -> Result<GronwallProbe, MeasureError> {
    check_samples(n_samples, 2)?;
    let n_cut = weight.cutoff();
    let mut estimates = Vec::with_capacity(taus.len());
    for &tau in taus {
        let logs = collect(n_samples, |i| {
            let u = sampler.sample_at(i);
            let back = flow_to(&u, n_cut, dt, -tau)?;
            Ok(if region.contains(&back) { Some(weight.log_weight(&u)?) } else { None })
        })?;
        estimates.push(McEstimate::from_log_weights(&logs));
    }
    let ys: Vec<f64> = estimates.iter().map(|e| e.mean.ln()).collect();
    Ok(GronwallProbe { taus: taus.to_vec(), rate: slope(taus, &ys), estimates })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub n: usize,
    pub log_f: f64,
    pub f: f64,
}

/// `F_{s,N}(u)` for each cutoff in `n_list`, all with the same `J` and rule.
pub fn weight_convergence_sweep(
    u: &FourierState,
    steps: usize,
    s: f64,
    n_list: &[usize],
    rule: crate::bitree::RegionRule,
) -> Result<Vec<WeightRow>, MeasureError> {
    n_list
        .iter()
        .map(|&n| {
            let log_f = EnergyFunctional::new(steps, s, n, rule)?.log_weight(u)?;
            Ok(WeightRow { n, log_f, f: log_f.exp() })
        })
        .collect()
}

/// `|F(N_k) − F(N_{k−1})|` for consecutive rows.
pub fn cauchy_differences(rows: &[WeightRow]) -> Vec<f64> {
    rows.windows(2).map(|w| (w[1].f - w[0].f).abs()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitree::RegionRule;

    #[test]
    fn determinism_and_streams() {
        let a = GaussianSampler::new(0.35, 4, 9);
        let mut b = a.clone();
        assert_eq!(a.sample_at(0), b.sample());
        assert_eq!(a.sample_at(1), b.sample());
        assert_ne!(a.sample_at(0), a.sample_at(1));
    }

    #[test]
    fn empty_region_is_zero() {
        let sampler = GaussianSampler::new(0.5, 3, 1);
        let w = EnergyFunctional::new(1, 0.5, 2, RegionRule::default()).unwrap();
        let est = mc_weighted_measure(&Nothing, &sampler, &w, 100).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(est.std_err.is_infinite());
        assert!(mc_weighted_measure(&Nothing, &sampler, &w, 10).is_err());
    }

    #[test]
    fn weights_are_positive() {
        let sampler = GaussianSampler::new(0.5, 3, 2).with_amplitude(0.3);
        let w = EnergyFunctional::new(1, 0.5, 2, RegionRule::default()).unwrap();
        let est = mc_weighted_measure(&Everything, &sampler, &w, 200).unwrap();
        assert!(est.mean > 0.0 && est.std_err.is_finite());
        assert_eq!(est.hits, 200);
    }

    #[test]
    fn zero_time_change_of_variable_is_exact() {
        let sampler = GaussianSampler::new(0.35, 4, 3);
        let w = EnergyFunctional::new(2, 0.35, 2, RegionRule::default()).unwrap();
        let ball = Ball::centered(3.0, -0.16);
        let cov = change_of_variable_check(&ball, &sampler, 0.0, &w, 1e-3, 300).unwrap();
        assert_eq!(cov.lhs, cov.rhs);
        assert!(cov.overlap);
    }

    #[test]
    fn slope_of_line() {
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_state_sweep_is_flat() {
        let rows = weight_convergence_sweep(&FourierState::zeros(8), 1, 0.35, &[2, 4, 8], RegionRule::default()).unwrap();
        assert!(rows.iter().all(|r| r.f == 1.0));
    }
}
