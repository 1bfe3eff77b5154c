//! Time integration of the frequency-truncated flow, the two gauge
//! transforms, the gauged system and flow-level experiments.
//!
//! Low modes `|n| ≤ N` are advanced by classical RK4 applied to the
//! interaction variable `v_n = e^{itn⁴} u_n`, so the quartic dispersion is
//! integrated exactly. High modes `N < |n| ≤ M` only rotate.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{sobolev_distance, CubicConvolver, FourierState, GammaEngine, SpectralError};

/// Any coefficient above this modulus aborts the integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("blow-up guard tripped at t = {t}: max |u_n| = {max_abs:e} (time step too large?)")]
    BlowUp { t: f64, max_abs: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// RK4 on `v = S(−t)u` for the renormalized truncated equation.
    InteractionRk4,
    /// RK4 on the gauged variable, mapped back through the inverse gauge.
    GaugedRk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Truncation cutoff: modes `|n| ≤ n` evolve nonlinearly.
    pub n: usize,
    /// Ambient mode cap.
    pub m: usize,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Store every `record_every`-th step (the final state is always kept).
    pub record_every: usize,
}

impl FlowConfig {
    pub const DEFAULT_DT: f64 = 1e-3;

    pub fn new(n: usize, m: usize, t_final: f64) -> Self {
        FlowConfig {
            n,
            m,
            dt: Self::DEFAULT_DT,
            t_final,
            scheme: Scheme::InteractionRk4,
            record_every: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "t_final must be finite and non-negative, got {}",
                self.t_final
            )));
        }
        if self.n > self.m {
            return Err(DynamicsError::InvalidConfig(format!(
                "cutoff N = {} exceeds mode cap M = {}",
                self.n, self.m
            )));
        }
        if self.record_every == 0 {
            return Err(DynamicsError::InvalidConfig("record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        step_count(self.t_final, self.dt)
    }
}

fn step_count(t: f64, dt: f64) -> usize {
    if t == 0.0 {
        0
    } else {
        ((t.abs() / dt).round() as usize).max(1)
    }
}

/// Sampled states of one flow, in increasing step order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<FourierState>,
}

impl Trajectory {
    pub fn initial(&self) -> &FourierState {
        &self.states[0]
    }

    pub fn last(&self) -> &FourierState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(FourierState::time).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Long-format CSV: one row `(t, n, re, im)` per stored coefficient.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DynamicsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n", "re", "im"])?;
        for st in &self.states {
            for (n, c) in st.iter() {
                w.write_record(&[
                    st.time().to_string(),
                    n.to_string(),
                    c.re.to_string(),
                    c.im.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-mode linear phase `e^{iτω_n}`, refreshed lazily.
struct Rotor {
    omega: Vec<f64>,
    tau: f64,
    phase: Vec<Complex64>,
}

impl Rotor {
    fn new(omega: Vec<f64>) -> Self {
        let len = omega.len();
        Rotor { omega, tau: f64::NAN, phase: vec![Complex64::new(1.0, 0.0); len] }
    }

    fn quartic(n_cut: usize) -> Self {
        let big = n_cut as i64;
        Rotor::new((-big..=big).map(|n| (n as f64).powi(4)).collect())
    }

    fn at(&mut self, tau: f64) -> &[Complex64] {
        if tau != self.tau {
            for (p, &w) in self.phase.iter_mut().zip(&self.omega) {
                *p = Complex64::from_polar(1.0, w * tau);
            }
            self.tau = tau;
        }
        &self.phase
    }
}

/// Right-hand side `f(τ, v, out)` of a low-mode ODE in some rotating frame.
trait FrameField {
    fn eval(&mut self, tau: f64, v: &[Complex64], out: &mut [Complex64]);
}

/// Which cubic term drives the low modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cubic {
    /// `(|u|² − 2Σ|u|²)u`.
    Renormalized,
    /// `|u|²u` without the counterterm.
    Plain,
}

struct InteractionField {
    engine: GammaEngine,
    rotor: Rotor,
    cubic: Cubic,
    u: Vec<Complex64>,
    g: Vec<Complex64>,
}

impl InteractionField {
    fn new(n_cut: usize, cubic: Cubic) -> Self {
        let len = 2 * n_cut + 1;
        InteractionField {
            engine: GammaEngine::new(n_cut),
            rotor: Rotor::quartic(n_cut),
            cubic,
            u: vec![Complex64::new(0.0, 0.0); len],
            g: vec![Complex64::new(0.0, 0.0); len],
        }
    }
}

impl FrameField for InteractionField {
    fn eval(&mut self, tau: f64, v: &[Complex64], out: &mut [Complex64]) {
        let phase = self.rotor.at(tau);
        for ((u, &vn), p) in self.u.iter_mut().zip(v).zip(phase) {
            *u = vn * p.conj();
        }
        self.engine.gamma_sum(&self.u, &mut self.g);
        let extra = match self.cubic {
            Cubic::Renormalized => 0.0,
            Cubic::Plain => 2.0 * self.u.iter().map(|c| c.norm_sqr()).sum::<f64>(),
        };
        let minus_i = Complex64::new(0.0, -1.0);
        for (k, o) in out.iter_mut().enumerate() {
            let un = self.u[k];
            let nl = self.g[k] + un * (extra - un.norm_sqr());
            *o = minus_i * phase[k] * nl;
        }
    }
}

/// Gauged low-mode field in the frame `w_n = e^{itn⁴} J(u)_n`:
/// `∂_t w_n = −i [e^{itω_n} Σ_Γ(z)_n − (|w_n|² − a_n) w_n]`, where
/// `ω_n = n⁴ − a_n` and `z_m = e^{−itω_m} w_m`.
struct GaugedField {
    engine: GammaEngine,
    rotor: Rotor,
    a: Vec<f64>,
    z: Vec<Complex64>,
    g: Vec<Complex64>,
}

impl FrameField for GaugedField {
    fn eval(&mut self, tau: f64, w: &[Complex64], out: &mut [Complex64]) {
        let phase = self.rotor.at(tau);
        for ((z, &wn), p) in self.z.iter_mut().zip(w).zip(phase) {
            *z = wn * p.conj();
        }
        self.engine.gamma_sum(&self.z, &mut self.g);
        let minus_i = Complex64::new(0.0, -1.0);
        for (k, o) in out.iter_mut().enumerate() {
            let wn = w[k];
            *o = minus_i * (phase[k] * self.g[k] - wn * (wn.norm_sqr() - self.a[k]));
        }
    }
}

struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4 {
    fn new(len: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); len];
        Rk4 { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    fn step(&mut self, f: &mut dyn FrameField, tau: f64, h: f64, v: &mut [Complex64]) {
        let half = 0.5 * h;
        f.eval(tau, v, &mut self.k1);
        for ((t, &x), &k) in self.tmp.iter_mut().zip(v.iter()).zip(&self.k1) {
            *t = x + k * half;
        }
        f.eval(tau + half, &self.tmp, &mut self.k2);
        for ((t, &x), &k) in self.tmp.iter_mut().zip(v.iter()).zip(&self.k2) {
            *t = x + k * half;
        }
        f.eval(tau + half, &self.tmp, &mut self.k3);
        for ((t, &x), &k) in self.tmp.iter_mut().zip(v.iter()).zip(&self.k3) {
            *t = x + k * h;
        }
        f.eval(tau + h, &self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for (k, x) in v.iter_mut().enumerate() {
            *x += (self.k1[k] + 2.0 * (self.k2[k] + self.k3[k]) + self.k4[k]) * sixth;
        }
    }
}

/// Integrates a low-mode frame ODE from `τ = 0` to `τ = t` and calls
/// `record(step, τ, v)` on every `every`-th step and on the last one.
fn integrate(
    field: &mut dyn FrameField,
    mut v: Vec<Complex64>,
    t: f64,
    dt: f64,
    every: usize,
    mut record: impl FnMut(f64, &[Complex64]),
) -> Result<Vec<Complex64>, DynamicsError> {
    let steps = step_count(t, dt);
    record(0.0, &v);
    if steps == 0 {
        return Ok(v);
    }
    let h = t / steps as f64;
    let mut rk = Rk4::new(v.len());
    for k in 0..steps {
        let tau = k as f64 * h;
        rk.step(field, tau, h, &mut v);
        let max_abs = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max_abs.is_nan() || max_abs > BLOW_UP_THRESHOLD {
            return Err(DynamicsError::BlowUp { t: tau + h, max_abs });
        }
        let done = k + 1;
        if done % every == 0 || done == steps {
            let tau_next = if done == steps { t } else { done as f64 * h };
            record(tau_next, &v);
        }
    }
    Ok(v)
}

fn quartic(n: i64) -> f64 {
    (n as f64).powi(4)
}

/// Assemble `u(t0 + τ)` from a low-mode frame vector and the initial data.
/// `frame_to_u(k, n)` gives the factor mapping the frame variable back to
/// the solution, `high(n)` the rotation of a high mode.
fn assemble(
    u0: &FourierState,
    n_cut: usize,
    tau: f64,
    low: &[Complex64],
    low_rate: impl Fn(i64) -> f64,
    high_rate: impl Fn(i64) -> f64,
) -> FourierState {
    let m = u0.cutoff();
    let big = n_cut as i64;
    let mut out = FourierState::zeros(m).with_time(u0.time() + tau);
    for (n, c) in u0.iter() {
        let val = if n.abs() <= big {
            low[(n + big) as usize] * Complex64::from_polar(1.0, -low_rate(n) * tau)
        } else {
            c * Complex64::from_polar(1.0, -high_rate(n) * tau)
        };
        out.set(n, val);
    }
    out
}

fn check_cutoff(u0: &FourierState, n_cut: usize) -> Result<(), DynamicsError> {
    if n_cut > u0.cutoff() {
        return Err(SpectralError::TruncationAboveCap { n: n_cut, m: u0.cutoff() }.into());
    }
    Ok(())
}

fn run_interaction(
    u0: &FourierState,
    n_cut: usize,
    dt: f64,
    t: f64,
    every: usize,
    cubic: Cubic,
) -> Result<Trajectory, DynamicsError> {
    check_cutoff(u0, n_cut)?;
    let mut field = InteractionField::new(n_cut, cubic);
    let mut states = Vec::new();
    integrate(&mut field, u0.low_slice(n_cut).to_vec(), t, dt, every, |tau, v| {
        states.push(assemble(u0, n_cut, tau, v, quartic, quartic));
    })?;
    Ok(Trajectory { states })
}

/// `S(t)u`: the free quartic flow, `u_n ↦ e^{−itn⁴} u_n` on every stored mode.
/// The interaction variable is `v = S(−t)u`.
pub fn free_propagate(u: &FourierState, t: f64) -> FourierState {
    let mut out = u.clone();
    let m = u.cutoff() as i64;
    for (k, c) in out.modes_mut().iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -quartic(k as i64 - m) * t);
    }
    out
}

/// `∂_t v_n = −i Σ_{Γ_N(n)} e^{−iφt} v_{n1} v̄_{n2} v_{n3} + i|v_n|² v_n` for the
/// centered slice `v` of length `2N+1`.
pub fn interaction_rhs(v: &[Complex64], t: f64) -> Vec<Complex64> {
    let mut field = InteractionField::new(v.len() / 2, Cubic::Renormalized);
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    field.eval(t, v, &mut out);
    out
}

/// `Φ_N(t)` for the renormalized truncated equation, sampled per `cfg`.
pub fn flow_truncated(u0: &FourierState, cfg: &FlowConfig) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    if u0.cutoff() != cfg.m {
        return Err(DynamicsError::InvalidConfig(format!(
            "state has mode cap {} but the configuration says M = {}",
            u0.cutoff(),
            cfg.m
        )));
    }
    match cfg.scheme {
        Scheme::InteractionRk4 => {
            run_interaction(u0, cfg.n, cfg.dt, cfg.t_final, cfg.record_every, Cubic::Renormalized)
        }
        Scheme::GaugedRk4 => {
            let g = GaugeData::from_initial(u0);
            let traj = flow_gauged(u0, cfg)?;
            Ok(Trajectory {
                states: traj
                    .states
                    .iter()
                    .map(|st| gauge_j(st, &g, st.time() - u0.time(), GaugeDirection::Inverse))
                    .collect(),
            })
        }
    }
}

/// `Φ_N(t) u0` for any real `t`, returning only the final state.
pub fn flow_to(u0: &FourierState, n_cut: usize, dt: f64, t: f64) -> Result<FourierState, DynamicsError> {
    if !(dt.is_finite() && dt > 0.0 && t.is_finite()) {
        return Err(DynamicsError::InvalidConfig(format!("need dt > 0 and finite t, got dt = {dt}, t = {t}")));
    }
    let steps = step_count(t, dt).max(1);
    let traj = run_interaction(u0, n_cut, dt, t, steps, Cubic::Renormalized)?;
    Ok(traj.last().clone())
}

/// The same truncation of the equation without the Wick counterterm,
/// `i∂_t u = ∂⁴u + P_N(|P_N u|² P_N u)`.
pub fn flow_plain_truncated(u0: &FourierState, cfg: &FlowConfig) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    run_interaction(u0, cfg.n, cfg.dt, cfg.t_final, cfg.record_every, Cubic::Plain)
}

/// `Σ |u_n|²`.
pub fn mass(state: &FourierState) -> f64 {
    state.modes().iter().map(|c| c.norm_sqr()).sum()
}

/// Mass of the low modes `|n| ≤ N`.
pub fn low_mass(state: &FourierState, n_cut: usize) -> f64 {
    state.low_slice(n_cut).iter().map(|c| c.norm_sqr()).sum()
}

/// Conserved energy of the renormalized truncated flow on `E_N`:
/// `H = Σ n⁴|u_n|² + ½ Σ_{n1−n2+n3−n4=0} u_{n1}ū_{n2}u_{n3}ū_{n4} − (Σ|u_n|²)²`,
/// all sums over `|n| ≤ N`. The flow is `i∂_t u_n = ∂H/∂ū_n`.
pub fn hamiltonian(state: &FourierState, n_cut: usize) -> Result<f64, DynamicsError> {
    check_cutoff(state, n_cut)?;
    let low = state.low_slice(n_cut);
    let big = n_cut as i64;
    let kinetic: f64 = low
        .iter()
        .enumerate()
        .map(|(k, c)| quartic(k as i64 - big) * c.norm_sqr())
        .sum();
    let quartic_term = CubicConvolver::new(n_cut).quartic_mean(low);
    let m = low_mass(state, n_cut);
    Ok(kinetic + 0.5 * quartic_term - m * m)
}

/// `𝒢`: multiply the low modes of each state by `e^{2iτ Σ_{|n|≤N}|u_n(τ)|²}`,
/// `τ` measured from the first state.
pub fn gauge_g(traj: &Trajectory, n_cut: usize) -> Trajectory {
    let t0 = traj.initial().time();
    let states = traj
        .states
        .iter()
        .map(|st| {
            let tau = st.time() - t0;
            let rot = Complex64::from_polar(1.0, 2.0 * tau * low_mass(st, n_cut));
            let mut out = st.clone();
            let m = st.cutoff();
            for c in &mut out.modes_mut()[m - n_cut..=m + n_cut] {
                *c *= rot;
            }
            out
        })
        .collect();
    Trajectory { states }
}

/// Squared moduli `|û₀(n)|²` of the initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeData {
    pub u0_sq: Vec<f64>,
}

impl GaugeData {
    pub fn from_initial(u0: &FourierState) -> Self {
        GaugeData { u0_sq: u0.modes().iter().map(|c| c.norm_sqr()).collect() }
    }

    pub fn cutoff(&self) -> usize {
        self.u0_sq.len() / 2
    }

    pub fn get(&self, n: i64) -> f64 {
        let m = self.cutoff() as i64;
        if n.abs() > m {
            0.0
        } else {
            self.u0_sq[(n + m) as usize]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeDirection {
    Forward,
    Inverse,
}

/// `𝒥`: forward multiplies `u_n` by `e^{−iτ|û₀(n)|²}`, inverse by the
/// conjugate phase; `τ` is the elapsed time since the data `u0` was given.
pub fn gauge_j(state: &FourierState, g: &GaugeData, tau: f64, dir: GaugeDirection) -> FourierState {
    let sign = match dir {
        GaugeDirection::Forward => -1.0,
        GaugeDirection::Inverse => 1.0,
    };
    let mut out = state.clone();
    let m = state.cutoff() as i64;
    for (k, c) in out.modes_mut().iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, sign * tau * g.get(k as i64 - m));
    }
    out
}

/// The gauged truncated flow `𝒥(Φ_N(t)u0)`, integrated directly: low modes
/// carry the phase-corrected cubic term plus the diagonal
/// `(|v_n|² − |û₀(n)|²)v_n` term, high modes follow `e^{−it(n⁴ + |û₀(n)|²)}`.
pub fn flow_gauged(u0: &FourierState, cfg: &FlowConfig) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    check_cutoff(u0, cfg.n)?;
    let n_cut = cfg.n;
    let big = n_cut as i64;
    let g = GaugeData::from_initial(u0);
    let a: Vec<f64> = (-big..=big).map(|n| g.get(n)).collect();
    let omega: Vec<f64> = (-big..=big).zip(&a).map(|(n, &an)| quartic(n) - an).collect();
    let mut field = GaugedField {
        engine: GammaEngine::new(n_cut),
        rotor: Rotor::new(omega),
        a,
        z: vec![Complex64::new(0.0, 0.0); 2 * n_cut + 1],
        g: vec![Complex64::new(0.0, 0.0); 2 * n_cut + 1],
    };
    let mut states = Vec::new();
    integrate(
        &mut field,
        u0.low_slice(n_cut).to_vec(),
        cfg.t_final,
        cfg.dt,
        cfg.record_every,
        |tau, w| states.push(assemble(u0, n_cut, tau, w, quartic, |n| quartic(n) + g.get(n))),
    )?;
    Ok(Trajectory { states })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub distance: f64,
}

/// `‖Φ_{N_ref}(t)u0 − Φ_N(t)u0‖_{H^σ}` for each `N`, with
/// `N_ref = 2 max(N_list)` standing in for the untruncated flow. The state is
/// embedded with mode cap `N_ref` (missing modes are zero).
pub fn convergence_experiment(
    u0: &FourierState,
    t: f64,
    n_list: &[usize],
    sigma: f64,
    dt: f64,
) -> Result<Vec<ConvergenceRow>, DynamicsError> {
    let n_ref = 2 * n_list.iter().copied().max().ok_or_else(|| {
        DynamicsError::InvalidConfig("empty cutoff list".into())
    })?;
    let base = u0.resized(n_ref.max(u0.cutoff()));
    let reference = flow_to(&base, n_ref, dt, t)?;
    n_list
        .iter()
        .map(|&n| {
            let approx = flow_to(&base, n, dt, t)?;
            Ok(ConvergenceRow { n, distance: sobolev_distance(&reference, &approx, sigma) })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub det: f64,
    /// The same determinant with a doubled difference step.
    pub det_coarse: f64,
    pub sensitivity: f64,
    pub ill_conditioned: bool,
}

/// `|det D(u_N(0) ↦ u_N(t))|` in real coordinates `(Re u_n, Im u_n)`,
/// `|n| ≤ N`, by central differences.
pub fn jacobian_det(
    u0: &FourierState,
    t: f64,
    n_cut: usize,
    dt: f64,
    fd_step: f64,
) -> Result<JacobianReport, DynamicsError> {
    if n_cut > 2 {
        return Err(DynamicsError::InvalidConfig(format!(
            "finite-difference Jacobian is limited to N ≤ 2, got {n_cut}"
        )));
    }
    check_cutoff(u0, n_cut)?;
    if t == 0.0 {
        return Ok(JacobianReport { det: 1.0, det_coarse: 1.0, sensitivity: 0.0, ill_conditioned: false });
    }
    let det = fd_det(u0, t, n_cut, dt, fd_step)?;
    let det_coarse = fd_det(u0, t, n_cut, dt, 2.0 * fd_step)?;
    let sensitivity = (det - det_coarse).abs();
    Ok(JacobianReport { det, det_coarse, sensitivity, ill_conditioned: sensitivity > 1e-6 })
}

fn fd_det(u0: &FourierState, t: f64, n_cut: usize, dt: f64, h: f64) -> Result<f64, DynamicsError> {
    let low = u0.project(n_cut).resized(n_cut);
    let dim = 2 * (2 * n_cut + 1);
    let coords = |st: &FourierState| -> Vec<f64> {
        st.modes().iter().flat_map(|c| [c.re, c.im]).collect()
    };
    let perturbed = |k: usize, delta: f64| -> Result<Vec<f64>, DynamicsError> {
        let mut st = low.clone();
        let c = &mut st.modes_mut()[k / 2];
        if k.is_multiple_of(2) {
            c.re += delta;
        } else {
            c.im += delta;
        }
        Ok(coords(&flow_to(&st, n_cut, dt, t)?))
    };
    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..dim {
        let plus = perturbed(k, h)?;
        let minus = perturbed(k, -h)?;
        for r in 0..dim {
            jac[(r, k)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    Ok(jac.determinant().abs())
}

/// Flow summary serialized next to trajectory CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub t_final: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub mass_drift: f64,
    pub hamiltonian_initial: f64,
    pub hamiltonian_final: f64,
    pub hamiltonian_drift: f64,
    pub sup_norm_sigma: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
}

/// Relative invariant drifts (sup over the stored states) and the largest
/// `H^σ` norm seen along a trajectory.
pub fn summarize(traj: &Trajectory, cfg: &FlowConfig, sigma: f64) -> Result<FlowSummary, DynamicsError> {
    let first = traj.initial();
    let m0 = mass(first);
    let h0 = hamiltonian(first, cfg.n)?;
    let mut mass_drift: f64 = 0.0;
    let mut ham_drift: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for st in &traj.states {
        mass_drift = mass_drift.max(if m0 == 0.0 { mass(st) } else { rel(m0, mass(st)) });
        let h = hamiltonian(st, cfg.n)?;
        ham_drift = ham_drift.max(if h0 == 0.0 { h.abs() } else { rel(h0, h) });
        sup = sup.max(crate::spectral::sobolev_norm(st, sigma));
    }
    let last = traj.last();
    Ok(FlowSummary {
        n: cfg.n,
        m: cfg.m,
        dt: cfg.dt,
        t_final: cfg.t_final,
        mass_initial: m0,
        mass_final: mass(last),
        mass_drift,
        hamiltonian_initial: h0,
        hamiltonian_final: hamiltonian(last, cfg.n)?,
        hamiltonian_drift: ham_drift,
        sup_norm_sigma: sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample_state(m: usize, seed: u64) -> FourierState {
        let mut x = seed as f64 + 0.5;
        FourierState::from_fn(m, |n| {
            x = (x * 12.9898 + 78.233).sin() * 43758.5453;
            let a = x.fract();
            x = (x * 7.13 + 1.1).sin() * 9631.77;
            let b = x.fract();
            c(a, b) * 0.6 / (1.0 + (n * n) as f64).powf(0.35)
        })
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = FlowConfig::new(3, 5, 0.2).with_record_every(50);
        let traj = flow_truncated(&FourierState::zeros(5), &cfg).unwrap();
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
        let traj = flow_gauged(&FourierState::zeros(5), &cfg).unwrap();
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn record_schedule() {
        let cfg = FlowConfig::new(2, 2, 0.01).with_record_every(3);
        let traj = flow_truncated(&sample_state(2, 1), &cfg).unwrap();
        let times = traj.times();
        assert_eq!(times.len(), 5);
        assert_eq!(times[0], 0.0);
        assert_eq!(*times.last().unwrap(), 0.01);
    }

    #[test]
    fn single_mode_closed_form() {
        let amp = c(0.8, -0.3);
        let u0 = FourierState::single_mode(4, 2, amp);
        let cfg = FlowConfig::new(3, 4, 1.0).with_record_every(1000);
        let u = flow_truncated(&u0, &cfg).unwrap();
        let exact = amp * Complex64::from_polar(1.0, -(16.0 - amp.norm_sqr()));
        assert!((u.last().get(2) - exact).norm() / amp.norm() < 1e-8);
    }

    #[test]
    fn high_modes_rotate_linearly() {
        let u0 = sample_state(5, 3);
        let u = flow_to(&u0, 2, 1e-3, 0.3).unwrap();
        for n in [3i64, -4, 5] {
            let expect = u0.get(n) * Complex64::from_polar(1.0, -quartic(n) * 0.3);
            assert!((u.get(n) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn gauge_j_roundtrip_and_identity_at_zero() {
        let u0 = sample_state(4, 9);
        let g = GaugeData::from_initial(&u0);
        assert_eq!(gauge_j(&u0, &g, 0.0, GaugeDirection::Forward), u0);
        let f = gauge_j(&u0, &g, 0.7, GaugeDirection::Forward);
        let b = gauge_j(&f, &g, 0.7, GaugeDirection::Inverse);
        assert!(sobolev_distance(&b, &u0, 0.0) < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        assert!(FlowConfig::new(5, 3, 1.0).validate().is_err());
        assert!(FlowConfig::new(1, 3, 1.0).with_dt(0.0).validate().is_err());
        assert!(FlowConfig::new(1, 3, -1.0).validate().is_err());
        assert!(FlowConfig::new(1, 3, 1.0).with_record_every(0).validate().is_err());
    }

    #[test]
    fn blow_up_guard() {
        let u0 = FourierState::from_fn(2, |_| c(1e3, 0.0));
        let err = flow_to(&u0, 2, 0.5, 5.0).unwrap_err();
        assert!(matches!(err, DynamicsError::BlowUp { .. }), "{err}");
    }

    #[test]
    fn csv_layout() {
        let cfg = FlowConfig::new(1, 1, 0.002);
        let traj = flow_truncated(&sample_state(1, 2), &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,n,re,im"));
        assert_eq!(lines.count(), 3 * 3);
    }
}
