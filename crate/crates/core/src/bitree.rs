//! Ordered bi-trees, chronicles, index functions and generation phases.
//!
//! A bi-tree lives in an arena: node 0 is the first root `r1`, node 1 the
//! second root `r2`, and every expansion appends its three children in order.
//! Conjugation parity is carried per node: `r1` is plain, `r2` conjugated, the
//! first and third child inherit the parent's parity and the middle child
//! flips it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{gamma_set, phase_mu, phase_phi, PhaseQuadruple, SpectralError};

pub const DEFAULT_MAX_GENERATIONS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiTreeError {
    #[error("generation count {got} outside 1..={max}")]
    GenerationOutOfRange { got: usize, max: usize },
    #[error("root frequency {n} outside the cutoff {cutoff}")]
    RootOutOfRange { n: i64, cutoff: usize },
    #[error("index {j} outside 1..={len}")]
    IndexOutOfRange { j: usize, len: usize },
    #[error("assignment does not fit the tree: {0}")]
    InvalidAssignment(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Option<[usize; 3]>,
    /// `true` when the node carries a complex conjugate.
    pub conj: bool,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedBiTree {
    pub nodes: Vec<Node>,
    /// `events[j]` is the node expanded at generation `j + 1`.
    pub events: Vec<usize>,
}

impl OrderedBiTree {
    pub const R1: usize = 0;
    pub const R2: usize = 1;

    /// The unique first-generation bi-tree: `r1` expanded, `r2` terminal.
    pub fn first_generation() -> Self {
        let mut t = OrderedBiTree {
            nodes: vec![
                Node { parent: None, children: None, conj: false },
                Node { parent: None, children: None, conj: true },
            ],
            events: Vec::new(),
        };
        t.expand(Self::R1);
        t
    }

    /// Converts a terminal node into a parent of three new terminals.
    ///
    /// Panics if `a` is not a terminal node of this tree.
    pub fn expand(&mut self, a: usize) {
        assert!(self.nodes[a].is_terminal(), "node {a} is not terminal");
        let conj = self.nodes[a].conj;
        let base = self.nodes.len();
        for flip in [false, true, false] {
            self.nodes.push(Node { parent: Some(a), children: None, conj: conj ^ flip });
        }
        self.nodes[a].children = Some([base, base + 1, base + 2]);
        self.events.push(a);
    }

    pub fn generations(&self) -> usize {
        self.events.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Terminal node ids in increasing order.
    pub fn terminals(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| self.nodes[k].is_terminal()).collect()
    }

    pub fn non_terminals(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| !self.nodes[k].is_terminal()).collect()
    }

    /// Structural checks: node counts, three ordered children per parent,
    /// parity rules and a chronicle that only expands existing terminals.
    pub fn validate(&self) -> Result<(), BiTreeError> {
        let j = self.generations();
        let bad = |m: String| Err(BiTreeError::Malformed(m));
        if self.nodes.len() != 3 * j + 2 {
            return bad(format!("{} nodes for {} generations", self.nodes.len(), j));
        }
        if self.terminals().len() != 2 * j + 2 || self.non_terminals().len() != j {
            return bad("terminal/non-terminal split is off".into());
        }
        if j == 0 || self.events[0] != Self::R1 {
            return bad("the first generation must expand r1".into());
        }
        if self.nodes[Self::R1].conj || !self.nodes[Self::R2].conj {
            return bad("root parities must be (plain, conjugate)".into());
        }
        let mut replay = OrderedBiTree {
            nodes: self.nodes[..2].iter().map(|n| Node { children: None, ..n.clone() }).collect(),
            events: Vec::new(),
        };
        for &a in &self.events {
            if a >= replay.nodes.len() || !replay.nodes[a].is_terminal() {
                return bad(format!("event expands node {a}, which is not a current terminal"));
            }
            replay.expand(a);
        }
        if replay != *self {
            return bad("arena does not match the replayed chronicle".into());
        }
        Ok(())
    }

    /// `π_j`: the bi-tree after the first `j` generations.
    pub fn prefix(&self, j: usize) -> Result<OrderedBiTree, BiTreeError> {
        if j == 0 || j > self.generations() {
            return Err(BiTreeError::IndexOutOfRange { j, len: self.generations() });
        }
        let mut nodes = self.nodes[..3 * j + 2].to_vec();
        for node in &mut nodes {
            if let Some(ch) = node.children {
                if ch[0] >= 3 * j + 2 {
                    node.children = None;
                }
            }
        }
        Ok(OrderedBiTree { nodes, events: self.events[..j].to_vec() })
    }

    fn subtree(&self, root: usize) -> Vec<usize> {
        let mut out = vec![root];
        let mut k = 0;
        while k < out.len() {
            if let Some(ch) = self.nodes[out[k]].children {
                out.extend(ch);
            }
            k += 1;
        }
        out.sort_unstable();
        out
    }

    /// `Π_1`: node ids of the tree hanging from `r1`.
    pub fn first_tree(&self) -> Vec<usize> {
        self.subtree(Self::R1)
    }

    /// `Π_2`: node ids of the tree hanging from `r2`.
    pub fn second_tree(&self) -> Vec<usize> {
        self.subtree(Self::R2)
    }

    /// JSON description of the chronicle for audits and golden files.
    pub fn audit_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                serde_json::json!({
                    "id": id,
                    "parent": n.parent,
                    "children": n.children,
                    "conj": n.conj,
                    "terminal": n.is_terminal(),
                })
            })
            .collect();
        serde_json::json!({ "generations": self.generations(), "events": self.events, "nodes": nodes })
    }
}

/// All chronicles of `j` generations, `2^{j−1} j!` of them, in lexicographic
/// order of the terminal positions chosen at each step.
pub fn enumerate_chronicles(j: usize) -> Result<Vec<OrderedBiTree>, BiTreeError> {
    enumerate_chronicles_capped(j, DEFAULT_MAX_GENERATIONS)
}

pub fn enumerate_chronicles_capped(j: usize, max: usize) -> Result<Vec<OrderedBiTree>, BiTreeError> {
    if j == 0 || j > max {
        return Err(BiTreeError::GenerationOutOfRange { got: j, max });
    }
    let mut level = vec![OrderedBiTree::first_generation()];
    for _ in 1..j {
        level = level
            .into_iter()
            .flat_map(|t| {
                t.terminals().into_iter().map(move |a| {
                    let mut child = t.clone();
                    child.expand(a);
                    child
                })
            })
            .collect();
    }
    Ok(level)
}

/// A frequency per node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexAssignment {
    pub freq: Vec<i64>,
}

impl IndexAssignment {
    /// Checks conditions (a)–(c) of an index function on `tree`, with every
    /// frequency bounded by `cutoff`.
    pub fn check(&self, tree: &OrderedBiTree, cutoff: usize) -> Result<(), BiTreeError> {
        let bad = |m: String| Err(BiTreeError::InvalidAssignment(m));
        if self.freq.len() != tree.len() {
            return bad(format!("{} frequencies for {} nodes", self.freq.len(), tree.len()));
        }
        if let Some(k) = self.freq.iter().position(|n| n.unsigned_abs() as usize > cutoff) {
            return bad(format!("node {k} exceeds the cutoff"));
        }
        let f = &self.freq;
        if f[OrderedBiTree::R1] != f[OrderedBiTree::R2] {
            return bad("root frequencies differ".into());
        }
        for a in tree.non_terminals() {
            let [a1, a2, a3] = tree.nodes[a].children.expect("non-terminal");
            if f[a] != f[a1] - f[a2] + f[a3] {
                return bad(format!("node {a} breaks the convolution constraint"));
            }
            if f[a] == f[a1] || f[a] == f[a3] || f[a2] == f[a1] || f[a2] == f[a3] {
                return bad(format!("node {a} is resonant"));
            }
        }
        Ok(())
    }

    /// The quadruple `(n_{a1}, n_{a2}, n_{a3}, n_a)` introduced by each event.
    pub fn quadruples(&self, tree: &OrderedBiTree) -> Vec<PhaseQuadruple> {
        tree.events
            .iter()
            .map(|&a| {
                let [a1, a2, a3] = tree.nodes[a].children.expect("expanded node");
                PhaseQuadruple { n1: self.freq[a1], n2: self.freq[a2], n3: self.freq[a3], n: self.freq[a] }
            })
            .collect()
    }
}

/// Lazy iterator over the index functions of one tree with a fixed root
/// frequency. Each event contributes two free variables `(n_{a1}, n_{a2})`.
pub struct AssignmentIter<'a> {
    tree: &'a OrderedBiTree,
    cutoff: usize,
    /// `gamma[n + N]` lists `Γ_N(n)`.
    gamma: Vec<Vec<PhaseQuadruple>>,
    pos: Vec<usize>,
    freq: Vec<i64>,
    started: bool,
    done: bool,
}

impl<'a> AssignmentIter<'a> {
    fn list(&self, level: usize) -> &[PhaseQuadruple] {
        let n = self.freq[self.tree.events[level]];
        &self.gamma[(n + self.cutoff as i64) as usize]
    }

    /// Depth-first advance: `fresh` restarts `level` at its first candidate,
    /// otherwise the current candidate at `level` is skipped.
    fn seek(&mut self, mut level: usize, mut fresh: bool) -> bool {
        loop {
            if fresh {
                self.pos[level] = 0;
            } else {
                self.pos[level] += 1;
            }
            let p = self.pos[level];
            if let Some(&q) = self.list(level).get(p) {
                let [a1, a2, a3] = self.tree.nodes[self.tree.events[level]].children.expect("expanded");
                self.freq[a1] = q.n1;
                self.freq[a2] = q.n2;
                self.freq[a3] = q.n3;
                if level + 1 == self.pos.len() {
                    return true;
                }
                level += 1;
                fresh = true;
            } else {
                if level == 0 {
                    return false;
                }
                level -= 1;
                fresh = false;
            }
        }
    }

    /// Number of free integer loop variables (two per generation).
    pub fn free_dimensions(&self) -> usize {
        2 * self.pos.len()
    }
}

impl Iterator for AssignmentIter<'_> {
    type Item = IndexAssignment;

    fn next(&mut self) -> Option<IndexAssignment> {
        if self.done {
            return None;
        }
        let found = if self.started {
            self.seek(self.pos.len() - 1, false)
        } else {
            self.started = true;
            self.seek(0, true)
        };
        if found {
            Some(IndexAssignment { freq: self.freq.clone() })
        } else {
            self.done = true;
            None
        }
    }
}

pub fn enumerate_assignments(
    tree: &OrderedBiTree,
    n_root: i64,
    cutoff: usize,
) -> Result<AssignmentIter<'_>, BiTreeError> {
    if n_root.unsigned_abs() as usize > cutoff {
        return Err(BiTreeError::RootOutOfRange { n: n_root, cutoff });
    }
    if tree.generations() == 0 {
        return Err(BiTreeError::GenerationOutOfRange { got: 0, max: DEFAULT_MAX_GENERATIONS });
    }
    let big = cutoff as i64;
    let gamma = (-big..=big).map(|n| gamma_set(n, cutoff).collect()).collect();
    let mut freq = vec![0; tree.len()];
    freq[OrderedBiTree::R1] = n_root;
    freq[OrderedBiTree::R2] = n_root;
    Ok(AssignmentIter {
        tree,
        cutoff,
        gamma,
        pos: vec![0; tree.generations()],
        freq,
        started: false,
        done: false,
    })
}

/// How partial phase sums enter the region predicates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// True signs: generation `j` contributes `ε_j φ(quadruple)`, with
    /// `ε_j = −1` when the expanded node is conjugated.
    #[default]
    Signed,
    /// Every generation contributes `+φ(quadruple)`.
    Unsigned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPhases {
    /// Signed phase of each generation.
    pub phi: Vec<i128>,
    /// `φ` of the generation's quadruple before the sign is applied.
    pub raw_phi: Vec<i128>,
    /// `+1` for a plain expanded node, `−1` for a conjugated one.
    pub sign: Vec<i8>,
    pub mu: Vec<i128>,
    /// Partial sums of `phi`.
    pub phi_tilde: Vec<i128>,
    /// Partial sums of `raw_phi`.
    pub phi_tilde_unsigned: Vec<i128>,
    pub nmax: Vec<i64>,
}

impl GenerationPhases {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn partial_sums(&self, conv: PhaseConvention) -> &[i128] {
        match conv {
            PhaseConvention::Signed => &self.phi_tilde,
            PhaseConvention::Unsigned => &self.phi_tilde_unsigned,
        }
    }
}

pub fn generation_phases(tree: &OrderedBiTree, a: &IndexAssignment) -> Result<GenerationPhases, BiTreeError> {
    if a.freq.len() != tree.len() {
        return Err(BiTreeError::InvalidAssignment("length mismatch".into()));
    }
    let quads = a.quadruples(tree);
    let mut g = GenerationPhases {
        phi: Vec::with_capacity(quads.len()),
        raw_phi: Vec::with_capacity(quads.len()),
        sign: Vec::with_capacity(quads.len()),
        mu: Vec::with_capacity(quads.len()),
        phi_tilde: Vec::with_capacity(quads.len()),
        phi_tilde_unsigned: Vec::with_capacity(quads.len()),
        nmax: Vec::with_capacity(quads.len()),
    };
    let (mut acc, mut acc_u) = (0i128, 0i128);
    for (q, &node) in quads.iter().zip(&tree.events) {
        let raw = phase_phi(q)?;
        let sign: i8 = if tree.nodes[node].conj { -1 } else { 1 };
        let phi = raw * sign as i128;
        acc = acc.checked_add(phi).ok_or(SpectralError::PhaseOverflow)?;
        acc_u = acc_u.checked_add(raw).ok_or(SpectralError::PhaseOverflow)?;
        g.phi.push(phi);
        g.raw_phi.push(raw);
        g.sign.push(sign);
        g.mu.push(phase_mu(q)?);
        g.phi_tilde.push(acc);
        g.phi_tilde_unsigned.push(acc_u);
        g.nmax.push(q.nmax());
    }
    Ok(g)
}

/// Literal form of the region predicates with an explicit constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRule {
    pub c_impl: f64,
    pub convention: PhaseConvention,
}

impl Default for RegionRule {
    fn default() -> Self {
        RegionRule { c_impl: 1.0, convention: PhaseConvention::Signed }
    }
}

impl RegionRule {
    pub fn new(c_impl: f64) -> Self {
        RegionRule { c_impl, ..Default::default() }
    }

    /// `(2j + 4)³`, the width attached to the region of step `j`.
    pub fn width(j: usize) -> f64 {
        let w = (2 * j + 4) as f64;
        w * w * w
    }

    /// Membership of `(…, s_j, s_{j+1})` in `A_j`, from partial sums and the
    /// first-generation phase.
    #[inline]
    pub fn contains(&self, j: usize, next: i128, current: i128, first: i128) -> bool {
        let bound = self.c_impl * Self::width(j);
        let next = (next as f64).abs();
        next <= bound * (current as f64).abs() || next <= bound * (first as f64).abs()
    }
}

/// `𝐧 ∈ A_j`: `|φ̃_{j+1}| ≤ c (2j+4)³ |φ̃_j|` or `|φ̃_{j+1}| ≤ c (2j+4)³ |φ_1|`.
pub fn in_region_aj(g: &GenerationPhases, j: usize, rule: &RegionRule) -> Result<bool, BiTreeError> {
    if j == 0 || j + 1 > g.len() {
        return Err(BiTreeError::IndexOutOfRange { j, len: g.len().saturating_sub(1) });
    }
    let sums = g.partial_sums(rule.convention);
    let first = match rule.convention {
        PhaseConvention::Signed => g.phi[0],
        PhaseConvention::Unsigned => g.raw_phi[0],
    };
    Ok(rule.contains(j, sums[j], sums[j - 1], first))
}
