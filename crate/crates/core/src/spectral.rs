//! Fourier-side state, Sobolev norms, phase functions and the renormalized
//! cubic nonlinearity.
//!
//! Coefficients are indexed by `n ∈ {-M, ..., M}` and stored contiguously with
//! `n = 0` in the middle. The spatial mean `⨍|u|² dx` is identified with
//! `Σ |u_n|²`; physical-space grids only exist inside the padded transforms.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest mode cap for which all quartic phase sums stay inside `i128`
/// with a wide margin.
pub const MAX_CUTOFF: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("mode vector has length {0}, expected an odd length 2M+1")]
    InvalidLength(usize),
    #[error("coefficient at n = {0} is not finite")]
    NonFinite(i64),
    #[error("cutoff {0} exceeds the supported maximum {MAX_CUTOFF}")]
    CutoffTooLarge(usize),
    #[error("truncation N = {n} exceeds the mode cap M = {m}")]
    TruncationAboveCap { n: usize, m: usize },
    #[error("quadruple ({n1}, {n2}, {n3}, {n}) violates n = n1 - n2 + n3")]
    NotConvolution { n1: i64, n2: i64, n3: i64, n: i64 },
    #[error("integer overflow while evaluating a phase")]
    PhaseOverflow,
    #[error("invalid Sobolev index: {0}")]
    InvalidSobolevIndex(String),
}

/// Japanese bracket `⟨n⟩ = (1 + n²)^{1/2}`.
#[inline]
pub fn bracket(n: i64) -> f64 {
    let n = n as f64;
    (1.0 + n * n).sqrt()
}

/// `⟨n⟩^{2r}`.
#[inline]
pub fn sobolev_weight(n: i64, r: f64) -> f64 {
    let n = n as f64;
    (1.0 + n * n).powf(r)
}

/// Fourier coefficients `u_n`, `|n| ≤ M`, stamped with a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierState {
    modes: Vec<Complex64>,
    cutoff: usize,
    time: f64,
}

impl FourierState {
    pub fn zeros(cutoff: usize) -> Self {
        FourierState {
            modes: vec![Complex64::new(0.0, 0.0); 2 * cutoff + 1],
            cutoff,
            time: 0.0,
        }
    }

    pub fn from_modes(modes: Vec<Complex64>, time: f64) -> Result<Self, SpectralError> {
        if modes.len().is_multiple_of(2) {
            return Err(SpectralError::InvalidLength(modes.len()));
        }
        let cutoff = modes.len() / 2;
        if cutoff > MAX_CUTOFF {
            return Err(SpectralError::CutoffTooLarge(cutoff));
        }
        if let Some(k) = modes.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(SpectralError::NonFinite(k as i64 - cutoff as i64));
        }
        Ok(FourierState { modes, cutoff, time })
    }

    pub fn from_fn(cutoff: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let m = cutoff as i64;
        FourierState {
            modes: (-m..=m).map(&mut f).collect(),
            cutoff,
            time: 0.0,
        }
    }

    /// `c e^{inx}` inside a state with mode cap `cutoff`.
    pub fn single_mode(cutoff: usize, n: i64, c: Complex64) -> Self {
        let mut st = FourierState::zeros(cutoff);
        st.set(n, c);
        st
    }

    #[inline]
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[inline]
    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    #[inline]
    pub fn modes_mut(&mut self) -> &mut [Complex64] {
        &mut self.modes
    }

    pub fn into_modes(self) -> Vec<Complex64> {
        self.modes
    }

    #[inline]
    pub fn index_of(&self, n: i64) -> Option<usize> {
        let m = self.cutoff as i64;
        (n.abs() <= m).then(|| (n + m) as usize)
    }

    /// Coefficient at frequency `n`; zero outside the stored range.
    #[inline]
    pub fn get(&self, n: i64) -> Complex64 {
        self.index_of(n)
            .map(|k| self.modes[k])
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// Panics if `|n| > M`.
    pub fn set(&mut self, n: i64, c: Complex64) {
        let k = self
            .index_of(n)
            .unwrap_or_else(|| panic!("frequency {n} outside |n| <= {}", self.cutoff));
        self.modes[k] = c;
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let m = self.cutoff as i64;
        self.modes.iter().enumerate().map(move |(k, &c)| (k as i64 - m, c))
    }

    pub fn is_finite(&self) -> bool {
        self.modes.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.modes.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Dirichlet projection `P_{≤N}`; the mode cap is kept.
    pub fn project(&self, n_cut: usize) -> FourierState {
        let mut out = self.clone();
        let m = self.cutoff as i64;
        for (k, c) in out.modes.iter_mut().enumerate() {
            if (k as i64 - m).unsigned_abs() as usize > n_cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `P_{>N}` with the mode cap kept.
    pub fn high_part(&self, n_cut: usize) -> FourierState {
        let mut out = self.clone();
        let m = self.cutoff as i64;
        for (k, c) in out.modes.iter_mut().enumerate() {
            if (k as i64 - m).unsigned_abs() as usize <= n_cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// Re-embed into a state with a different mode cap, zero-padding or
    /// dropping frequencies as needed.
    pub fn resized(&self, cutoff: usize) -> FourierState {
        let mut out = FourierState::zeros(cutoff);
        out.time = self.time;
        let m = cutoff.min(self.cutoff) as i64;
        for n in -m..=m {
            out.set(n, self.get(n));
        }
        out
    }

    /// The centered slice `u_n`, `|n| ≤ N`.
    pub fn low_slice(&self, n_cut: usize) -> &[Complex64] {
        let m = self.cutoff;
        &self.modes[m - n_cut..=m + n_cut]
    }

    pub fn scaled(&self, lambda: f64) -> FourierState {
        let mut out = self.clone();
        for c in &mut out.modes {
            *c *= lambda;
        }
        out
    }

    /// Support bound: the largest `|n|` with a nonzero coefficient.
    pub fn support_radius(&self) -> Option<usize> {
        self.iter()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(n, _)| n.unsigned_abs() as usize)
            .max()
    }
}

impl fmt::Display for FourierState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourierState(M = {}, t = {})", self.cutoff, self.time)
    }
}

/// `( Σ ⟨n⟩^{2r} |u_n|² )^{1/2}`.
pub fn sobolev_norm(state: &FourierState, r: f64) -> f64 {
    state
        .iter()
        .map(|(n, c)| sobolev_weight(n, r) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `‖a − b‖_{H^r}`, comparing coefficient by coefficient over the union of
/// both ranges.
pub fn sobolev_distance(a: &FourierState, b: &FourierState, r: f64) -> f64 {
    let m = a.cutoff().max(b.cutoff()) as i64;
    (-m..=m)
        .map(|n| sobolev_weight(n, r) * (a.get(n) - b.get(n)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Regularity bookkeeping: `σ = s − 1/2 − ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    pub s: f64,
    pub eps: f64,
    pub sigma: f64,
}

impl SobolevIndex {
    pub const DEFAULT_EPS: f64 = 0.01;

    /// Requires `s > 0` and a small `ε ∈ (0, 1/2)`.
    pub fn new(s: f64, eps: f64) -> Result<Self, SpectralError> {
        if !s.is_finite() || s <= 0.0 {
            return Err(SpectralError::InvalidSobolevIndex(format!(
                "s must be a positive finite number, got {s}"
            )));
        }
        if !eps.is_finite() || eps <= 0.0 || eps >= 0.5 {
            return Err(SpectralError::InvalidSobolevIndex(format!(
                "eps must lie in (0, 1/2), got {eps}"
            )));
        }
        let sigma = s - 0.5 - eps;
        if sigma >= s - 0.5 {
            return Err(SpectralError::InvalidSobolevIndex(format!(
                "sigma = {sigma} is not below s - 1/2"
            )));
        }
        Ok(SobolevIndex { s, eps, sigma })
    }

    pub fn with_default_eps(s: f64) -> Result<Self, SpectralError> {
        Self::new(s, Self::DEFAULT_EPS)
    }
}

/// Frequencies `(n1, n2, n3, n)` with `n = n1 − n2 + n3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseQuadruple {
    pub n1: i64,
    pub n2: i64,
    pub n3: i64,
    pub n: i64,
}

impl PhaseQuadruple {
    pub fn new(n1: i64, n2: i64, n3: i64) -> Self {
        PhaseQuadruple { n1, n2, n3, n: n1 - n2 + n3 }
    }

    pub fn from_parts(n1: i64, n2: i64, n3: i64, n: i64) -> Result<Self, SpectralError> {
        if n != n1 - n2 + n3 {
            return Err(SpectralError::NotConvolution { n1, n2, n3, n });
        }
        Ok(PhaseQuadruple { n1, n2, n3, n })
    }

    /// Membership in `Γ(n)`: `n1 ≠ n` and `n3 ≠ n`.
    pub fn is_nonresonant(&self) -> bool {
        self.n1 != self.n && self.n3 != self.n
    }

    pub fn nmax(&self) -> i64 {
        self.n1.abs().max(self.n2.abs()).max(self.n3.abs()).max(self.n.abs())
    }
}

fn checked_pow(x: i64, e: u32) -> Result<i128, SpectralError> {
    (x as i128).checked_pow(e).ok_or(SpectralError::PhaseOverflow)
}

fn alternating_sum(q: &PhaseQuadruple, e: u32) -> Result<i128, SpectralError> {
    let a = checked_pow(q.n1, e)?;
    let b = checked_pow(q.n2, e)?;
    let c = checked_pow(q.n3, e)?;
    let d = checked_pow(q.n, e)?;
    a.checked_sub(b)
        .and_then(|x| x.checked_add(c))
        .and_then(|x| x.checked_sub(d))
        .ok_or(SpectralError::PhaseOverflow)
}

/// Fourth-order phase `n1⁴ − n2⁴ + n3⁴ − n⁴`, exact.
pub fn phase_phi(q: &PhaseQuadruple) -> Result<i128, SpectralError> {
    alternating_sum(q, 4)
}

/// Second-order phase `n1² − n2² + n3² − n²`, exact.
pub fn phase_mu(q: &PhaseQuadruple) -> Result<i128, SpectralError> {
    alternating_sum(q, 2)
}

/// Iterator over `Γ_N(n)` in lexicographic `(n1, n2)` order.
pub fn gamma_set(n: i64, n_cut: usize) -> impl Iterator<Item = PhaseQuadruple> {
    let big = n_cut as i64;
    (-big..=big).flat_map(move |n1| {
        (-big..=big).filter_map(move |n2| {
            let n3 = n - n1 + n2;
            (n3.abs() <= big && n1 != n && n3 != n).then_some(PhaseQuadruple { n1, n2, n3, n })
        })
    })
}

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn fast_length(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// Zero-padded FFT evaluation of the cubic convolution
/// `Σ_{n1−n2+n3=n} u_{n1} ū_{n2} u_{n3}` for inputs supported on `|n| ≤ N`.
///
/// The grid has at least `3(2N+1)` points, so nothing aliases back onto
/// `|n| ≤ N`.
pub struct CubicConvolver {
    cutoff: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CubicConvolver {
    pub const PADDING: usize = 3;

    pub fn new(cutoff: usize) -> Self {
        let len = fast_length(Self::PADDING * (2 * cutoff + 1));
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        CubicConvolver {
            cutoff,
            len,
            forward,
            inverse,
            buf: vec![Complex64::new(0.0, 0.0); len],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn grid_len(&self) -> usize {
        self.len
    }

    fn load_grid(&mut self, u: &[Complex64]) {
        let n = self.cutoff as i64;
        let len = self.len as i64;
        self.buf.fill(Complex64::new(0.0, 0.0));
        for (k, &c) in u.iter().enumerate() {
            let freq = k as i64 - n;
            self.buf[freq.rem_euclid(len) as usize] = c;
        }
        self.inverse
            .process_with_scratch(&mut self.buf, &mut self.scratch);
    }

    /// Writes the convolution into `out` (both slices have length `2N+1`).
    pub fn cubic(&mut self, u: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(u.len(), 2 * self.cutoff + 1);
        debug_assert_eq!(out.len(), u.len());
        self.load_grid(u);
        for z in &mut self.buf {
            *z *= z.norm_sqr();
        }
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let n = self.cutoff as i64;
        let len = self.len as i64;
        let inv_len = 1.0 / self.len as f64;
        for (k, o) in out.iter_mut().enumerate() {
            let freq = k as i64 - n;
            *o = self.buf[freq.rem_euclid(len) as usize] * inv_len;
        }
    }

    /// Grid mean of `|u|⁴`, i.e. `Σ_{n1−n2+n3−n4=0} u1 ū2 u3 ū4`.
    pub fn quartic_mean(&mut self, u: &[Complex64]) -> f64 {
        self.load_grid(u);
        let total: f64 = self.buf.iter().map(|z| z.norm_sqr() * z.norm_sqr()).sum();
        total / self.len as f64
    }

    /// `Σ_{Γ_N(n)} u_{n1} ū_{n2} u_{n3}`: the full convolution with the
    /// `n1 = n` and `n3 = n` contributions removed.
    pub fn gamma_sum(&mut self, u: &[Complex64], out: &mut [Complex64]) {
        self.cubic(u, out);
        let mass: f64 = u.iter().map(|c| c.norm_sqr()).sum();
        for (o, &c) in out.iter_mut().zip(u) {
            *o += c * (c.norm_sqr() - 2.0 * mass);
        }
    }
}

impl fmt::Debug for CubicConvolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CubicConvolver")
            .field("cutoff", &self.cutoff)
            .field("len", &self.len)
            .finish()
    }
}

/// Precomputed list of all `(n, n1, n2, n3)` with `(n1, n2, n3) ∈ Γ_N(n)`,
/// stored as slice offsets. For small `N` a direct sweep over this list is
/// cheaper than two padded transforms.
#[derive(Clone, Debug)]
pub struct GammaTable {
    cutoff: usize,
    entries: Vec<[u32; 4]>,
}

impl GammaTable {
    pub fn new(cutoff: usize) -> Self {
        let big = cutoff as i64;
        let off = |k: i64| (k + big) as u32;
        let entries = (-big..=big)
            .flat_map(|n| gamma_set(n, cutoff))
            .map(|q| [off(q.n), off(q.n1), off(q.n2), off(q.n3)])
            .collect();
        GammaTable { cutoff, entries }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gamma_sum(&self, u: &[Complex64], out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        for &[n, a, b, c] in &self.entries {
            out[n as usize] += u[a as usize] * u[b as usize].conj() * u[c as usize];
        }
    }
}

/// Evaluator for `Σ_{Γ_N(n)} u_{n1} ū_{n2} u_{n3}`: a direct table sweep for
/// small cutoffs and the padded FFT otherwise.
#[derive(Debug)]
pub enum GammaEngine {
    Table(GammaTable),
    Fft(CubicConvolver),
}

impl GammaEngine {
    /// Largest cutoff for which the table sweep is chosen.
    pub const TABLE_MAX_CUTOFF: usize = 3;

    pub fn new(cutoff: usize) -> Self {
        if cutoff <= Self::TABLE_MAX_CUTOFF {
            GammaEngine::Table(GammaTable::new(cutoff))
        } else {
            GammaEngine::Fft(CubicConvolver::new(cutoff))
        }
    }

    pub fn cutoff(&self) -> usize {
        match self {
            GammaEngine::Table(t) => t.cutoff(),
            GammaEngine::Fft(c) => c.cutoff(),
        }
    }

    pub fn gamma_sum(&mut self, u: &[Complex64], out: &mut [Complex64]) {
        match self {
            GammaEngine::Table(t) => t.gamma_sum(u, out),
            GammaEngine::Fft(c) => c.gamma_sum(u, out),
        }
    }
}

fn check_truncation(state: &FourierState, n_cut: usize) -> Result<(), SpectralError> {
    if n_cut > state.cutoff() {
        return Err(SpectralError::TruncationAboveCap { n: n_cut, m: state.cutoff() });
    }
    Ok(())
}

fn embed(template: &FourierState, n_cut: usize, low: &[Complex64]) -> FourierState {
    let mut out = FourierState::zeros(template.cutoff()).with_time(template.time());
    let m = template.cutoff();
    out.modes_mut()[m - n_cut..=m + n_cut].copy_from_slice(low);
    out
}

/// `P_{≤N} 𝒩(P_{≤N} u)` with `𝒩(u) = (|u|² − 2⨍|u|²) u`.
pub fn renorm_nonlinearity(state: &FourierState, n_cut: usize) -> Result<FourierState, SpectralError> {
    check_truncation(state, n_cut)?;
    let low = state.low_slice(n_cut);
    let mut out = vec![Complex64::new(0.0, 0.0); low.len()];
    let mut conv = CubicConvolver::new(n_cut);
    conv.cubic(low, &mut out);
    let mass: f64 = low.iter().map(|c| c.norm_sqr()).sum();
    for (o, &c) in out.iter_mut().zip(low) {
        *o -= 2.0 * mass * c;
    }
    Ok(embed(state, n_cut, &out))
}

/// Splits the truncated nonlinearity into its `Γ_N`-restricted part and the
/// resonant part `|u_n|² u_n`, so that `−i·nonres + i·res = −i·𝒩`.
pub fn split_resonant(
    state: &FourierState,
    n_cut: usize,
) -> Result<(FourierState, FourierState), SpectralError> {
    check_truncation(state, n_cut)?;
    let low = state.low_slice(n_cut);
    let mut nonres = vec![Complex64::new(0.0, 0.0); low.len()];
    CubicConvolver::new(n_cut).gamma_sum(low, &mut nonres);
    let res: Vec<Complex64> = low.iter().map(|&c| c * c.norm_sqr()).collect();
    Ok((embed(state, n_cut, &nonres), embed(state, n_cut, &res)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn norm_of_unit_modes() {
        let st = FourierState::single_mode(4, 0, c(1.0, 0.0));
        assert_eq!(sobolev_norm(&st, 3.7), 1.0);
        let st = FourierState::single_mode(4, 1, c(1.0, 0.0));
        assert_relative_eq!(sobolev_norm(&st, 1.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_even_length_and_nan() {
        assert_eq!(
            FourierState::from_modes(vec![c(0.0, 0.0); 4], 0.0),
            Err(SpectralError::InvalidLength(4))
        );
        let mut modes = vec![c(0.0, 0.0); 5];
        modes[1] = c(f64::NAN, 0.0);
        assert_eq!(FourierState::from_modes(modes, 0.0), Err(SpectralError::NonFinite(-1)));
    }

    #[test]
    fn phase_examples() {
        let q = PhaseQuadruple::from_parts(2, 1, 0, 1).unwrap();
        assert_eq!(phase_phi(&q).unwrap(), 14);
        assert_eq!(phase_mu(&q).unwrap(), 2);
        let z = PhaseQuadruple::new(0, 0, 0);
        assert_eq!(phase_phi(&z).unwrap(), 0);
        assert_eq!(phase_mu(&z).unwrap(), 0);
        assert!(PhaseQuadruple::from_parts(1, 1, 1, 3).is_err());
    }

    #[test]
    fn phase_overflow_is_reported() {
        let q = PhaseQuadruple::new(i64::MAX / 2, 0, 0);
        assert_eq!(phase_phi(&q), Err(SpectralError::PhaseOverflow));
    }

    #[test]
    fn gamma_small_cases() {
        assert_eq!(gamma_set(0, 0).count(), 0);
        let got: Vec<_> = gamma_set(0, 1).map(|q| (q.n1, q.n2, q.n3)).collect();
        let mut brute = Vec::new();
        for n1 in -1..=1i64 {
            for n2 in -1..=1i64 {
                for n3 in -1..=1i64 {
                    if n1 - n2 + n3 == 0 && n1 != 0 && n3 != 0 {
                        brute.push((n1, n2, n3));
                    }
                }
            }
        }
        assert_eq!(got, brute);
        assert_eq!(got, vec![(-1, 0, 1), (1, 0, -1)]);
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_length(7), 8);
        assert_eq!(fast_length(15), 15);
        assert_eq!(fast_length(51), 54);
        assert_eq!(fast_length(1), 1);
    }

    #[test]
    fn nonlinearity_of_zero_and_single_mode() {
        let z = FourierState::zeros(5);
        let out = renorm_nonlinearity(&z, 3).unwrap();
        assert!(out.modes().iter().all(|c| c.norm() == 0.0));

        let amp = c(0.7, -0.4);
        let st = FourierState::single_mode(5, 2, amp);
        let out = renorm_nonlinearity(&st, 3).unwrap();
        let expect = -amp * amp.norm_sqr();
        for (n, v) in out.iter() {
            if n == 2 {
                assert_relative_eq!(v.re, expect.re, epsilon = 1e-14);
                assert_relative_eq!(v.im, expect.im, epsilon = 1e-14);
            } else {
                assert!(v.norm() < 1e-14, "n = {n}: {v}");
            }
        }
    }

    #[test]
    fn truncation_above_cap_rejected() {
        let st = FourierState::zeros(2);
        assert!(renorm_nonlinearity(&st, 3).is_err());
        assert!(split_resonant(&st, 3).is_err());
    }

    #[test]
    fn split_single_mode() {
        let amp = c(0.3, 0.9);
        let st = FourierState::single_mode(4, -1, amp);
        let (nonres, res) = split_resonant(&st, 2).unwrap();
        assert!(nonres.max_abs() < 1e-15);
        assert_relative_eq!((res.get(-1) - amp * amp.norm_sqr()).norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn table_and_fft_agree() {
        for n_cut in 0..6usize {
            let u: Vec<Complex64> = (0..2 * n_cut + 1)
                .map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 1.3).cos()))
                .collect();
            let mut a = vec![c(0.0, 0.0); u.len()];
            let mut b = a.clone();
            GammaTable::new(n_cut).gamma_sum(&u, &mut a);
            CubicConvolver::new(n_cut).gamma_sum(&u, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-12, "N = {n_cut}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn projection_and_resize() {
        let st = FourierState::from_fn(3, |n| c(n as f64, 1.0));
        let p = st.project(1);
        assert_eq!(p.get(2), c(0.0, 0.0));
        assert_eq!(p.get(-1), c(-1.0, 1.0));
        let h = st.high_part(1);
        assert_eq!(h.get(1), c(0.0, 0.0));
        assert_eq!(h.get(-3), c(-3.0, 1.0));
        let r = st.resized(5);
        assert_eq!(r.get(3), st.get(3));
        assert_eq!(r.get(5), c(0.0, 0.0));
        assert_eq!(r.resized(3), st);
        assert_eq!(st.support_radius(), Some(3));
    }

    #[test]
    fn sobolev_index_bookkeeping() {
        let k = SobolevIndex::new(0.35, 0.01).unwrap();
        assert_relative_eq!(k.sigma, -0.16, epsilon = 1e-15);
        assert!(SobolevIndex::new(-1.0, 0.7).is_err());
        assert!(SobolevIndex::new(0.4, 0.0).is_err());
    }
}
