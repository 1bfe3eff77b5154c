//! Multilinear forms produced by repeated differentiation by parts in the
//! interaction frame, the modified energy and the weight.
//!
//! Every form is a sum over ordered bi-trees and index functions of
//! `Re[c · e^{−iΨ t} · Π_b v_{n_b}^{(±)}]`, with `Ψ` the signed cumulative
//! phase of the tree. A [`FormProgram`] enumerates trees and frequencies once
//! and stores the monomials it needs; evaluation is then a flat sweep.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitree::{
    enumerate_assignments, enumerate_chronicles, generation_phases, in_region_aj, BiTreeError,
    PhaseConvention, RegionRule, DEFAULT_MAX_GENERATIONS,
};
use crate::dynamics::{flow_truncated, free_propagate, interaction_rhs, DynamicsError, FlowConfig};
use crate::spectral::{gamma_set, phase_phi, sobolev_norm, sobolev_weight, FourierState, SobolevIndex};

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error("generation {got} exceeds the cap {max}")]
    GenerationCap { got: usize, max: usize },
    #[error("form kind {kind:?} is not defined at generation {j}")]
    InvalidKind { kind: FormKind, j: usize },
    #[error("zero phase denominator on a retained term at generation {j}")]
    ZeroDenominator { j: usize },
    #[error("phase lower bound violated at generation {j}")]
    PhaseBound { j: usize },
    #[error("cutoff {n} exceeds the state's mode cap {m}")]
    Cutoff { n: usize, m: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    BiTree(#[from] BiTreeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    /// `N^(1)`, the time derivative of `½‖v‖²_{H^s}`.
    Base,
    /// `N₀^(j)`, boundary terms.
    BoundaryN0,
    /// `R^(j)`, resonant insertions.
    ResonantR,
    /// `N₁^(j)`, the part kept on the region `A_{j−1}`.
    RegionN1,
    /// `N₂^(j)`, the part on the complement, expanded further or left over.
    RemainderN2,
    /// `N^(j) = N₁^(j) + N₂^(j)` before the region split.
    Expanded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilinearValue {
    pub value: f64,
    pub generation: usize,
    pub kind: FormKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    Base,
    /// Boundary data of generation `j`: yields `N₀^(j+1)`, `R^(j+1)` and
    /// `dN₀^(j+1)/dt`.
    Boundary,
    Region,
    Remainder,
    /// Uncut generation-`j` term, only stored on request.
    Expanded,
}

#[derive(Clone, Debug)]
struct Monomial {
    gen: u8,
    class: Class,
    coef: Complex64,
    phase: f64,
    start: u32,
    len: u8,
}

/// Which monomial classes a program has to retain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wanted {
    pub base: bool,
    pub boundary: bool,
    pub region: bool,
    pub remainder: bool,
    pub expanded: bool,
}

impl Wanted {
    pub const NONE: Wanted = Wanted { base: false, boundary: false, region: false, remainder: false, expanded: false };
    pub const ALL: Wanted = Wanted { base: true, boundary: true, region: true, remainder: true, expanded: true };
    pub const BOUNDARY: Wanted = Wanted { base: false, boundary: true, region: false, remainder: false, expanded: false };
    /// What `dℰ/dt` needs: region, remainder and boundary (for `R`) terms.
    pub const DERIVATIVE: Wanted = Wanted { base: true, boundary: true, region: true, remainder: true, expanded: false };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramSpec {
    /// Number `J` of differentiation-by-parts steps.
    pub steps: usize,
    pub s: f64,
    pub cutoff: usize,
    pub rule: RegionRule,
    pub wanted: Wanted,
}

/// Values of every form a program carries; vectors are indexed by
/// generation, `0..=J+1`, with unused slots left at zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FormValues {
    pub base: f64,
    pub n0: Vec<f64>,
    pub r: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub expanded: Vec<f64>,
    pub dn0_dt: Vec<f64>,
}

impl FormValues {
    fn zeros(steps: usize) -> Self {
        let z = vec![0.0; steps + 2];
        FormValues {
            base: 0.0,
            n0: z.clone(),
            r: z.clone(),
            n1: z.clone(),
            n2: z.clone(),
            expanded: z.clone(),
            dn0_dt: z,
        }
    }

    pub fn correction_sum(&self) -> f64 {
        self.n0.iter().sum()
    }

    /// `Σ_j (N₁^(j) + R^(j)) + N₂^(J+1)`, the time derivative of the modified
    /// energy after `J ≥ 1` steps; for `J = 0` it is the base form.
    pub fn energy_derivative(&self) -> f64 {
        let steps = self.n0.len() - 2;
        if steps == 0 {
            return self.base;
        }
        let body: f64 = (2..=steps + 1).map(|j| self.n1[j] + self.r[j]).sum();
        body + self.n2[steps + 1]
    }

    pub fn get(&self, kind: FormKind, j: usize) -> f64 {
        let pick = |v: &Vec<f64>| v.get(j).copied().unwrap_or(0.0);
        match kind {
            FormKind::Base => self.base,
            FormKind::BoundaryN0 => pick(&self.n0),
            FormKind::ResonantR => pick(&self.r),
            FormKind::RegionN1 => pick(&self.n1),
            FormKind::RemainderN2 => pick(&self.n2),
            FormKind::Expanded => {
                if j == 1 {
                    self.base
                } else {
                    pick(&self.expanded)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct FormProgram {
    spec: ProgramSpec,
    monomials: Vec<Monomial>,
    /// Packed terminals: `(n + N) << 1 | conj`.
    terms: Vec<u32>,
}

struct Builder<'a> {
    spec: &'a ProgramSpec,
    gamma: Vec<Vec<(i64, i64, i64, i128)>>,
    freq: Vec<i64>,
    conj: Vec<bool>,
    terminal: Vec<bool>,
    signed: Vec<i128>,
    unsigned: Vec<i128>,
    deepest: usize,
    monomials: Vec<Monomial>,
    terms: Vec<u32>,
}

impl Builder<'_> {
    fn emit(&mut self, gen: usize, class: Class, coef: Complex64, phase: i128) {
        let big = self.spec.cutoff as i64;
        let start = self.terms.len() as u32;
        for k in 0..self.freq.len() {
            if self.terminal[k] {
                self.terms.push((((self.freq[k] + big) as u32) << 1) | self.conj[k] as u32);
            }
        }
        let len = (self.terms.len() as u32 - start) as u8;
        self.monomials.push(Monomial { gen: gen as u8, class, coef, phase: phase as f64, start, len });
    }

    fn expand(&mut self, b: usize, n1: i64, n2: i64, n3: i64) {
        let c = self.conj[b];
        self.freq.extend([n1, n2, n3]);
        self.conj.extend([c, !c, c]);
        self.terminal.extend([true, true, true]);
        self.terminal[b] = false;
    }

    fn collapse(&mut self, b: usize) {
        let len = self.freq.len() - 3;
        self.freq.truncate(len);
        self.conj.truncate(len);
        self.terminal.truncate(len);
        self.terminal[b] = true;
    }

    /// Handles one generation-`j` term whose phase sums are already pushed.
    fn visit(&mut self, j: usize, coef: Complex64) -> Result<(), NormalFormError> {
        let steps = self.spec.steps;
        let w = self.spec.wanted;
        let psi = self.signed[j - 1];
        if j == 1 {
            if w.base {
                self.emit(1, Class::Base, coef, psi);
            }
        } else {
            if w.expanded {
                self.emit(j, Class::Expanded, coef, psi);
            }
            let sums = match self.spec.rule.convention {
                PhaseConvention::Signed => &self.signed,
                PhaseConvention::Unsigned => &self.unsigned,
            };
            let (next, cur, first) = (sums[j - 1], sums[j - 2], sums[0]);
            if self.spec.rule.contains(j - 1, next, cur, first) {
                if w.region {
                    self.emit(j, Class::Region, coef, psi);
                }
                return Ok(());
            }
            if j == steps + 1 {
                if w.remainder {
                    self.emit(j, Class::Remainder, coef, psi);
                }
                return Ok(());
            }
            let bound = self.spec.rule.c_impl * RegionRule::width(j - 1);
            let floor = bound * (cur as f64).abs().max((first as f64).abs());
            if (next as f64).abs() <= floor || floor.is_nan() {
                return Err(NormalFormError::PhaseBound { j });
            }
        }
        if j > steps {
            return Ok(());
        }
        if psi == 0 {
            return Err(NormalFormError::ZeroDenominator { j });
        }
        let inv = 1.0 / psi as f64;
        if w.boundary {
            self.emit(j, Class::Boundary, Complex64::i() * coef * inv, psi);
        }
        if j + 1 > self.deepest {
            return Ok(());
        }
        let big = self.spec.cutoff as i64;
        let terminals: Vec<usize> = (0..self.freq.len()).filter(|&k| self.terminal[k]).collect();
        for b in terminals {
            let eps: i128 = if self.conj[b] { -1 } else { 1 };
            let child = -(eps as f64) * coef * inv;
            let idx = (self.freq[b] + big) as usize;
            for q in 0..self.gamma[idx].len() {
                let (n1, n2, n3, raw) = self.gamma[idx][q];
                self.expand(b, n1, n2, n3);
                self.signed.push(psi + eps * raw);
                self.unsigned.push(self.unsigned[j - 1] + raw);
                let res = self.visit(j + 1, child);
                self.signed.pop();
                self.unsigned.pop();
                self.collapse(b);
                res?;
            }
        }
        Ok(())
    }
}

impl FormProgram {
    pub fn compile(spec: ProgramSpec) -> Result<Self, NormalFormError> {
        if spec.steps > DEFAULT_MAX_GENERATIONS {
            return Err(NormalFormError::GenerationCap { got: spec.steps, max: DEFAULT_MAX_GENERATIONS });
        }
        if !(spec.s.is_finite() && spec.rule.c_impl.is_finite() && spec.rule.c_impl >= 0.0) {
            return Err(NormalFormError::InvalidParameter("s and c_impl must be finite, c_impl ≥ 0".into()));
        }
        let big = spec.cutoff as i64;
        let gamma = (-big..=big)
            .map(|n| {
                gamma_set(n, spec.cutoff)
                    .map(|q| Ok((q.n1, q.n2, q.n3, phase_phi(&q).map_err(BiTreeError::from)?)))
                    .collect::<Result<Vec<_>, NormalFormError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let w = spec.wanted;
        let deepest = if w.region || w.remainder || w.expanded {
            spec.steps + 1
        } else if w.boundary {
            spec.steps
        } else {
            1
        };
        let mut b = Builder {
            spec: &spec,
            gamma,
            freq: Vec::new(),
            conj: Vec::new(),
            terminal: Vec::new(),
            signed: Vec::new(),
            unsigned: Vec::new(),
            deepest,
            monomials: Vec::new(),
            terms: Vec::new(),
        };
        for n in -big..=big {
            let c1 = Complex64::new(0.0, -sobolev_weight(n, spec.s));
            b.freq = vec![n, n];
            b.conj = vec![false, true];
            b.terminal = vec![true, true];
            let idx = (n + big) as usize;
            for q in 0..b.gamma[idx].len() {
                let (n1, n2, n3, raw) = b.gamma[idx][q];
                b.expand(0, n1, n2, n3);
                b.signed.push(raw);
                b.unsigned.push(raw);
                let res = b.visit(1, c1);
                b.signed.pop();
                b.unsigned.pop();
                b.collapse(0);
                res?;
            }
        }
        let (monomials, terms) = (b.monomials, b.terms);
        Ok(FormProgram { spec, monomials, terms })
    }

    pub fn spec(&self) -> &ProgramSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    fn slice<'v>(&self, v: &'v FourierState) -> Result<&'v [Complex64], NormalFormError> {
        if self.spec.cutoff > v.cutoff() {
            return Err(NormalFormError::Cutoff { n: self.spec.cutoff, m: v.cutoff() });
        }
        Ok(v.low_slice(self.spec.cutoff))
    }

    /// Evaluates every stored form at the interaction variable `v` and time
    /// `t`. Time derivatives of boundary terms are left at zero.
    pub fn evaluate(&self, v: &FourierState, t: f64) -> Result<FormValues, NormalFormError> {
        let low = self.slice(v)?;
        Ok(self.run(low, t, None))
    }

    /// As [`evaluate`](Self::evaluate), additionally expanding `dN₀/dt` by
    /// the product rule with `∂_t v` from the truncated equation.
    pub fn evaluate_with_derivative(&self, v: &FourierState, t: f64) -> Result<FormValues, NormalFormError> {
        let low = self.slice(v)?;
        let field = interaction_rhs(low, t);
        Ok(self.run(low, t, Some(&field)))
    }

    fn run(&self, low: &[Complex64], t: f64, field: Option<&[Complex64]>) -> FormValues {
        let mut out = FormValues::zeros(self.spec.steps);
        let fetch = |data: &[Complex64], p: u32| {
            let c = data[(p >> 1) as usize];
            if p & 1 == 1 {
                c.conj()
            } else {
                c
            }
        };
        let mut prefix = [Complex64::new(0.0, 0.0); 2 * DEFAULT_MAX_GENERATIONS + 4];
        for m in &self.monomials {
            let terms = &self.terms[m.start as usize..m.start as usize + m.len as usize];
            let rot = if t == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::from_polar(1.0, -m.phase * t) };
            let mut prod = Complex64::new(1.0, 0.0);
            for (k, &p) in terms.iter().enumerate() {
                prefix[k] = prod;
                prod *= fetch(low, p);
            }
            let z = rot * prod;
            let val = (m.coef * z).re;
            let g = m.gen as usize;
            match m.class {
                Class::Base => out.base += val,
                Class::Region => out.n1[g] += val,
                Class::Remainder => out.n2[g] += val,
                Class::Expanded => out.expanded[g] += val,
                Class::Boundary => {
                    out.n0[g + 1] += val;
                    let res: f64 = terms
                        .iter()
                        .map(|&p| {
                            let c = low[(p >> 1) as usize];
                            if p & 1 == 1 {
                                -c.norm_sqr()
                            } else {
                                c.norm_sqr()
                            }
                        })
                        .sum();
                    out.r[g + 1] -= (m.coef * Complex64::i() * res * z).re;
                    if let Some(f) = field {
                        let mut acc = Complex64::new(0.0, -m.phase) * prod;
                        let mut suffix = Complex64::new(1.0, 0.0);
                        for (k, &p) in terms.iter().enumerate().rev() {
                            acc += prefix[k] * fetch(f, p) * suffix;
                            suffix *= fetch(low, p);
                        }
                        out.dn0_dt[g + 1] += (m.coef * rot * acc).re;
                    }
                }
            }
        }
        out
    }
}

/// `−Re i Σ_n Σ_{Γ_N(n)} ⟨n⟩^{2s} e^{−iφt} v_{n1} v̄_{n2} v_{n3} v̄_n`, summed
/// directly over the index sets.
pub fn eval_n1_base(v: &FourierState, t: f64, s: f64, n_cut: usize) -> Result<f64, NormalFormError> {
    if n_cut > v.cutoff() {
        return Err(NormalFormError::Cutoff { n: n_cut, m: v.cutoff() });
    }
    let big = n_cut as i64;
    let mut total = 0.0;
    for n in -big..=big {
        let mut inner = Complex64::new(0.0, 0.0);
        for q in gamma_set(n, n_cut) {
            let phi = phase_phi(&q).map_err(BiTreeError::from)? as f64;
            inner += Complex64::from_polar(1.0, -phi * t) * v.get(q.n1) * v.get(q.n2).conj() * v.get(q.n3);
        }
        total += sobolev_weight(n, s) * (Complex64::new(0.0, -1.0) * inner * v.get(n).conj()).re;
    }
    Ok(total)
}

fn check_generation(j: usize) -> Result<(), NormalFormError> {
    let max = DEFAULT_MAX_GENERATIONS + 1;
    if j == 0 || j > max {
        return Err(NormalFormError::GenerationCap { got: j, max });
    }
    Ok(())
}

/// One form at generation `j` for the interaction variable `v` at time `t`.
pub fn eval_form(
    v: &FourierState,
    t: f64,
    j: usize,
    kind: FormKind,
    s: f64,
    n_cut: usize,
    rule: RegionRule,
) -> Result<MultilinearValue, NormalFormError> {
    check_generation(j)?;
    let ok = match kind {
        FormKind::Base => j == 1,
        FormKind::Expanded => true,
        _ => j >= 2,
    };
    if !ok {
        return Err(NormalFormError::InvalidKind { kind, j });
    }
    let steps = j.saturating_sub(1);
    let wanted = match kind {
        FormKind::Base => Wanted { base: true, ..Wanted::NONE },
        FormKind::BoundaryN0 | FormKind::ResonantR => Wanted::BOUNDARY,
        FormKind::RegionN1 => Wanted { region: true, ..Wanted::NONE },
        FormKind::RemainderN2 => Wanted { remainder: true, ..Wanted::NONE },
        FormKind::Expanded => Wanted { base: true, expanded: true, ..Wanted::NONE },
    };
    let prog = FormProgram::compile(ProgramSpec { steps, s, cutoff: n_cut, rule, wanted })?;
    let values = prog.evaluate(v, t)?;
    Ok(MultilinearValue { value: values.get(kind, j), generation: j, kind })
}

/// Reference evaluation by explicit enumeration of chronicles and index
/// functions, with coefficients from the closed-form product
/// `⟨n⟩^{2s} (−i) Π_{k=2}^{j} (−ε_k / Ψ_{k−1})`.
pub fn eval_form_reference(
    v: &FourierState,
    t: f64,
    j: usize,
    kind: FormKind,
    s: f64,
    n_cut: usize,
    rule: RegionRule,
) -> Result<f64, NormalFormError> {
    check_generation(j)?;
    let tree_gen = match kind {
        FormKind::Base => 1,
        FormKind::BoundaryN0 | FormKind::ResonantR => j - 1,
        _ => j,
    };
    if tree_gen == 0 {
        return Err(NormalFormError::InvalidKind { kind, j });
    }
    let big = n_cut as i64;
    let mut total = 0.0;
    for tree in enumerate_chronicles(tree_gen)? {
        let terminals = tree.terminals();
        for n in -big..=big {
            for a in enumerate_assignments(&tree, n, n_cut)? {
                let g = generation_phases(&tree, &a)?;
                let cut_through = match kind {
                    FormKind::Base => 0,
                    FormKind::Expanded | FormKind::RegionN1 => tree_gen.saturating_sub(2),
                    _ => tree_gen - 1,
                };
                let mut keep = true;
                for k in 1..=cut_through {
                    keep = keep && !in_region_aj(&g, k, &rule)?;
                }
                if kind == FormKind::RegionN1 {
                    keep = keep && tree_gen >= 2 && in_region_aj(&g, tree_gen - 1, &rule)?;
                }
                if !keep {
                    continue;
                }
                let mut coef = Complex64::new(0.0, -sobolev_weight(n, s));
                for k in 2..=tree_gen {
                    coef *= -(g.sign[k - 1] as f64) / g.phi_tilde[k - 2] as f64;
                }
                let psi = g.phi_tilde[tree_gen - 1];
                if matches!(kind, FormKind::BoundaryN0 | FormKind::ResonantR) {
                    if psi == 0 {
                        return Err(NormalFormError::ZeroDenominator { j: tree_gen });
                    }
                    coef *= Complex64::i() / psi as f64;
                }
                let mut prod = Complex64::from_polar(1.0, -(psi as f64) * t);
                let mut res = 0.0;
                for &b in &terminals {
                    let c = v.get(a.freq[b]);
                    if tree.nodes[b].conj {
                        prod *= c.conj();
                        res -= c.norm_sqr();
                    } else {
                        prod *= c;
                        res += c.norm_sqr();
                    }
                }
                total += if kind == FormKind::ResonantR {
                    -(coef * Complex64::i() * res * prod).re
                } else {
                    (coef * prod).re
                };
            }
        }
    }
    Ok(total)
}

/// Both sides of the `J`-step identity at frozen time: the base form against
/// `Σ_{j=2}^{J+1} (dN₀^(j)/dt + R^(j) + N₁^(j)) + N₂^(J+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopeReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn telescoping_residual(
    v: &FourierState,
    t: f64,
    steps: usize,
    s: f64,
    n_cut: usize,
    rule: RegionRule,
) -> Result<TelescopeReport, NormalFormError> {
    if steps == 0 {
        return Err(NormalFormError::InvalidParameter("the identity needs at least one step".into()));
    }
    let prog = FormProgram::compile(ProgramSpec { steps, s, cutoff: n_cut, rule, wanted: Wanted::DERIVATIVE })?;
    let vals = prog.evaluate_with_derivative(v, t)?;
    let lhs = eval_n1_base(v, t, s, n_cut)?;
    let rhs: f64 = (2..=steps + 1).map(|j| vals.dn0_dt[j] + vals.r[j] + vals.n1[j]).sum::<f64>()
        + vals.n2[steps + 1];
    Ok(TelescopeReport { lhs, rhs, residual: (lhs - rhs).abs() / (1.0 + lhs.abs()) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub plain_energy: f64,
    /// `N₀^(j)` for `j = 2, …, J+1`.
    pub corrections: Vec<f64>,
    pub modified_energy: f64,
    pub weight_log_f: f64,
}

/// Modified energy and weight exponent for a fixed number of steps, with the
/// boundary program compiled once.
#[derive(Clone, Debug)]
pub struct EnergyFunctional {
    steps: usize,
    s: f64,
    cutoff: usize,
    boundary: Option<FormProgram>,
}

impl EnergyFunctional {
    pub fn new(steps: usize, s: f64, cutoff: usize, rule: RegionRule) -> Result<Self, NormalFormError> {
        let boundary = if steps == 0 {
            None
        } else {
            Some(FormProgram::compile(ProgramSpec { steps, s, cutoff, rule, wanted: Wanted::BOUNDARY })?)
        };
        Ok(EnergyFunctional { steps, s, cutoff, boundary })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn corrections(&self, v: &FourierState, t: f64) -> Result<Vec<f64>, NormalFormError> {
        match &self.boundary {
            None => Ok(Vec::new()),
            Some(p) => Ok(p.evaluate(v, t)?.n0[2..].to_vec()),
        }
    }

    /// `ℰ_N` of `u` at time `t`, through `v = S(−t) P_N u`.
    pub fn report(&self, u: &FourierState, t: f64) -> Result<EnergyReport, NormalFormError> {
        if self.cutoff > u.cutoff() {
            return Err(NormalFormError::Cutoff { n: self.cutoff, m: u.cutoff() });
        }
        let low = u.project(self.cutoff);
        let plain = 0.5 * sobolev_norm(&low, self.s).powi(2);
        let v = free_propagate(&low, -t);
        let corrections = self.corrections(&v, t)?;
        let log_f: f64 = corrections.iter().sum();
        Ok(EnergyReport { plain_energy: plain, modified_energy: plain - log_f, weight_log_f: log_f, corrections })
    }

    /// `log F_{s,N}(u) = Σ_j N₀^(j)(P_N u)`.
    pub fn log_weight(&self, u: &FourierState) -> Result<f64, NormalFormError> {
        if self.cutoff > u.cutoff() {
            return Err(NormalFormError::Cutoff { n: self.cutoff, m: u.cutoff() });
        }
        Ok(self.corrections(u, 0.0)?.iter().sum())
    }
}

pub fn modified_energy(
    u: &FourierState,
    t: f64,
    steps: usize,
    s: f64,
    n_cut: usize,
    rule: RegionRule,
) -> Result<EnergyReport, NormalFormError> {
    EnergyFunctional::new(steps, s, n_cut, rule)?.report(u, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightValue {
    pub log_f: f64,
    /// `exp(log_f)`, infinite when it overflows.
    pub f: f64,
    pub overflow: bool,
}

impl WeightValue {
    pub fn from_log(log_f: f64) -> Self {
        let f = log_f.exp();
        WeightValue { log_f, f, overflow: !f.is_finite() }
    }
}

pub fn weight_f(
    u: &FourierState,
    steps: usize,
    s: f64,
    n_cut: usize,
    rule: RegionRule,
) -> Result<WeightValue, NormalFormError> {
    Ok(WeightValue::from_log(EnergyFunctional::new(steps, s, n_cut, rule)?.log_weight(u)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub steps: usize,
    /// `sup_t |dℰ/dt|` from the closed-form derivative.
    pub sup_analytic: f64,
    /// `sup_t |dℰ/dt|` from centered differences of `ℰ` samples.
    pub sup_finite_difference: f64,
    /// `max_t` of the gap between the two derivatives (interior samples).
    pub max_discrepancy: f64,
}

/// Time derivative of the modified energy along a truncated trajectory,
/// analytically and by centered differences, for each number of steps.
pub fn energy_drift(
    u0: &FourierState,
    cfg: &FlowConfig,
    steps_list: &[usize],
    s: f64,
    rule: RegionRule,
) -> Result<Vec<DriftRow>, NormalFormError> {
    let traj = flow_truncated(u0, &cfg.clone().with_record_every(1))?;
    let t0 = u0.time();
    let mut rows = Vec::with_capacity(steps_list.len());
    for &steps in steps_list {
        let functional = EnergyFunctional::new(steps, s, cfg.n, rule)?;
        let deriv = FormProgram::compile(ProgramSpec {
            steps,
            s,
            cutoff: cfg.n,
            rule,
            wanted: Wanted { expanded: false, boundary: steps > 0, ..Wanted::DERIVATIVE },
        })?;
        let mut energy = Vec::with_capacity(traj.len());
        let mut analytic = Vec::with_capacity(traj.len());
        for st in &traj.states {
            let tau = st.time() - t0;
            energy.push(functional.report(st, tau)?.modified_energy);
            let v = free_propagate(&st.project(cfg.n), -tau);
            analytic.push(deriv.evaluate(&v, tau)?.energy_derivative());
        }
        let times: Vec<f64> = traj.states.iter().map(|st| st.time()).collect();
        let mut sup_fd: f64 = 0.0;
        let mut gap: f64 = 0.0;
        for k in 1..energy.len().saturating_sub(1) {
            let fd = (energy[k + 1] - energy[k - 1]) / (times[k + 1] - times[k - 1]);
            sup_fd = sup_fd.max(fd.abs());
            gap = gap.max((fd - analytic[k]).abs());
        }
        rows.push(DriftRow {
            steps,
            sup_analytic: analytic.iter().fold(0.0, |a, x| a.max(x.abs())),
            sup_finite_difference: sup_fd,
            max_discrepancy: gap,
        });
    }
    Ok(rows)
}

/// Largest `|form(v)|` over random inputs normalized to `‖v‖_{H^σ} = 1`:
/// an empirical lower bound on the operator norm of the form.
pub fn estimate_form_norm(
    j: usize,
    kind: FormKind,
    index: SobolevIndex,
    n_cut: usize,
    trials: usize,
    seed: u64,
    rule: RegionRule,
) -> Result<f64, NormalFormError> {
    if trials == 0 {
        return Err(NormalFormError::InvalidParameter("at least one trial is required".into()));
    }
    check_generation(j)?;
    let steps = j.saturating_sub(1);
    let prog = FormProgram::compile(ProgramSpec { steps, s: index.s, cutoff: n_cut, rule, wanted: Wanted::ALL })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 0.0;
    for _ in 0..trials {
        let v = FourierState::from_fn(n_cut, |_| {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let norm = sobolev_norm(&v, index.sigma);
        if norm == 0.0 {
            continue;
        }
        let v = v.scaled(1.0 / norm);
        sup = sup.max(prog.evaluate(&v, 0.0)?.get(kind, j).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n_cut: usize, seed: u64) -> FourierState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FourierState::from_fn(n_cut, |_| {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)) * 0.5
        })
    }

    #[test]
    fn zero_state_gives_zero_forms() {
        let z = FourierState::zeros(2);
        let prog = FormProgram::compile(ProgramSpec {
            steps: 2,
            s: 0.35,
            cutoff: 2,
            rule: RegionRule::new(0.01),
            wanted: Wanted::ALL,
        })
        .unwrap();
        let vals = prog.evaluate_with_derivative(&z, 0.4).unwrap();
        assert_eq!(vals, FormValues::zeros(2));
        assert_eq!(eval_n1_base(&z, 0.1, 0.5, 2).unwrap(), 0.0);
    }

    #[test]
    fn single_mode_has_no_base_form() {
        let v = FourierState::single_mode(3, 1, Complex64::new(0.4, 0.2));
        assert_eq!(eval_n1_base(&v, 0.3, 0.35, 3).unwrap(), 0.0);
    }

    #[test]
    fn base_matches_direct_sum() {
        let v = state(3, 4);
        let direct = eval_n1_base(&v, 0.2, 0.35, 3).unwrap();
        let prog = eval_form(&v, 0.2, 1, FormKind::Base, 0.35, 3, RegionRule::default()).unwrap();
        assert!((direct - prog.value).abs() < 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn invalid_kinds_and_caps() {
        let v = state(1, 0);
        assert!(eval_form(&v, 0.0, 2, FormKind::Base, 0.3, 1, RegionRule::default()).is_err());
        assert!(eval_form(&v, 0.0, 1, FormKind::BoundaryN0, 0.3, 1, RegionRule::default()).is_err());
        assert!(eval_form(&v, 0.0, 8, FormKind::RegionN1, 0.3, 1, RegionRule::default()).is_err());
        let idx = SobolevIndex::new(0.35, 0.01).unwrap();
        assert!(estimate_form_norm(2, FormKind::BoundaryN0, idx, 1, 0, 1, RegionRule::default()).is_err());
    }

    #[test]
    fn telescoping_one_step() {
        let v = state(2, 11);
        let rep = telescoping_residual(&v, 0.3, 1, 0.35, 2, RegionRule::default()).unwrap();
        assert!(rep.residual < 1e-10, "{rep:?}");
    }

    #[test]
    fn energy_report_identity() {
        let u = state(2, 5);
        let rep = modified_energy(&u, 0.25, 2, 0.5, 2, RegionRule::new(0.05)).unwrap();
        assert_eq!(rep.corrections.len(), 2);
        assert!((rep.modified_energy + rep.weight_log_f - rep.plain_energy).abs() < 1e-14 * rep.plain_energy.max(1.0));
        let w = weight_f(&u, 2, 0.5, 2, RegionRule::new(0.05)).unwrap();
        assert!(w.f > 0.0 && !w.overflow);
    }

    #[test]
    fn zero_steps_mean_unit_weight() {
        let u = state(2, 8);
        let w = weight_f(&u, 0, 0.35, 2, RegionRule::default()).unwrap();
        assert_eq!(w.log_f, 0.0);
        assert_eq!(w.f, 1.0);
    }
}
