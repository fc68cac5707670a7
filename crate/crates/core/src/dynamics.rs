//! Damped, Poisson-forced point-vortex system.
//!
//! Between forcing jumps the positions follow `ẋ_i = Σ_{j≠i} ξ_j(t) K_δ(x_i, x_j)` with
//! intensities `ξ_j(t) = a_j e^{-θ(t - b_j)}` recomputed from the birth time `b_j` at every
//! evaluation, never integrated. The ODE is advanced by the Dormand–Prince 5(4) pair
//! with local extrapolation. At a jump the new atom is appended so that the state at
//! the jump time already contains it.
//!
//! When test functions are supplied the stepper also carries, as extra ODE components,
//! `∫⟨f, ω⟩`, `∫ :⟨H_f, ω⊗ω⟩:` and `∫ e^{θs} :⟨H_f, ω⊗ω⟩:`, so the weak formulation can
//! be checked on exactly the grid the positions were computed on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{Atom, EventStream, VortexEnsemble, VortexEvent};
use crate::kernels::TorusKernel;
use crate::random::LawParams;
use crate::spectral::TestFunction;
use crate::torus::{minimal_image, TorusPoint, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("near collision at t = {time}: min pair distance {distance:e} below abort threshold")]
    NearCollision { time: f64, distance: f64 },
    #[error("step size underflow at t = {time} (min pair distance {distance:e})")]
    StepUnderflow { time: f64, distance: f64 },
    #[error("event at t = {event} lies before the current time {now}")]
    EventInPast { event: f64, now: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("snapshot times must be increasing and within [0, {horizon}]")]
    InvalidSnapshots { horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    #[default]
    Abort,
    /// Keep integrating the smoothed system and count the close approach.
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_pair_distance_abort: f64,
    pub collision_policy: CollisionPolicy,
    /// Use `K_δ` instead of `K`.
    pub smoothing: bool,
    /// With the nonlinearity off the positions are frozen and only the linear
    /// damped-and-forced part remains.
    pub nonlinear: bool,
}

impl IntegratorConfig {
    /// Defaults tied to the physics: `max_step = 0.1/(Nλ)`, abort below `δ/10`.
    pub fn for_params(params: &LawParams, reg_delta: f64) -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.1 / params.rate(),
            min_pair_distance_abort: reg_delta / 10.0,
            collision_policy: CollisionPolicy::Abort,
            smoothing: true,
            nonlinear: true,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(DynamicsError::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(DynamicsError::InvalidConfig("max_step must be positive".into()));
        }
        if !(self.min_pair_distance_abort >= 0.0) {
            return Err(DynamicsError::InvalidConfig(
                "min_pair_distance_abort must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A materialised vortex. Intensity at time `t` is `amplitude·e^{-θ(t - birth_time)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub birth_time: f64,
    pub amplitude: f64,
    pub position: TorusPoint,
}

impl Vortex {
    pub fn sign(&self) -> i8 {
        if self.amplitude < 0.0 {
            -1
        } else {
            1
        }
    }

    #[inline]
    pub fn intensity(&self, theta: f64, t: f64) -> f64 {
        self.amplitude * (-theta * (t - self.birth_time)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub time: f64,
    /// Sorted by birth time.
    pub vortices: Vec<Vortex>,
}

impl SimulationState {
    /// State at time zero whose atoms carry the given intensities.
    pub fn from_ensemble(omega: &VortexEnsemble) -> Self {
        Self {
            time: 0.0,
            vortices: omega
                .atoms()
                .iter()
                .map(|a| Vortex {
                    birth_time: 0.0,
                    amplitude: a.intensity,
                    position: a.position,
                })
                .collect(),
        }
    }

    pub fn ensemble(&self, theta: f64) -> VortexEnsemble {
        let atoms = self
            .vortices
            .iter()
            .map(|v| Atom {
                intensity: v.intensity(theta, self.time),
                position: v.position,
            })
            .collect();
        VortexEnsemble::from_atoms(atoms).expect("decayed intensities stay nonzero")
    }

    pub fn positions(&self) -> Vec<TorusPoint> {
        self.vortices.iter().map(|v| v.position).collect()
    }
}

/// Minimum torus distance over pairs; `+∞` with fewer than two vortices.
pub fn min_pair_distance(state: &SimulationState) -> f64 {
    let p = &state.vortices;
    let mut best = f64::INFINITY;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            best = best.min(p[i].position.distance(&p[j].position));
        }
    }
    best
}

fn min_pair_distance_raw(xy: &[f64]) -> f64 {
    let n = xy.len() / 2;
    let mut best2 = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = minimal_image(xy[2 * i] - xy[2 * j]);
            let dy = minimal_image(xy[2 * i + 1] - xy[2 * j + 1]);
            best2 = best2.min(dx * dx + dy * dy);
        }
    }
    best2.sqrt()
}

/// `Σ_{i≠j} (k - G_δ(x_i, x_j))` with `k = sup G_δ`, so every summand is nonnegative.
pub fn lyapunov(state: &SimulationState, kernel: &TorusKernel) -> f64 {
    let k = kernel.sup_smoothed_green();
    let p = &state.vortices;
    let mut sum = 0.0;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            sum += k - kernel.smoothed_green(p[i].position, p[j].position);
        }
    }
    2.0 * sum
}

/// Row of the diagnostics trace, one per snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub time: f64,
    pub n_vortices: usize,
    pub min_pair_distance: f64,
    pub lyapunov: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub min_pair_distance: f64,
    pub close_approaches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub ensemble: VortexEnsemble,
}

/// Weak-form bookkeeping for one test function at one snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakFormRecord {
    pub time: f64,
    pub function: String,
    /// `⟨f, ω_t⟩`
    pub pairing: f64,
    /// `⟨f, ω_0⟩`
    pub initial_pairing: f64,
    /// `∫₀ᵗ ⟨f, ω_s⟩ ds`
    pub linear_integral: f64,
    /// `∫₀ᵗ :⟨H_f, ω_s⊗ω_s⟩: ds`
    pub nonlinear_integral: f64,
    /// `∫₀ᵗ e^{θs} :⟨H_f, ω_s⊗ω_s⟩: ds`
    pub weighted_nonlinear_integral: f64,
    /// `⟨f, Σ_t⟩ = Σ_{t_i ≤ t} σ_i f(x_i)/√N`
    pub forcing: f64,
    /// `Σ_{t_i ≤ t} e^{-θ(t - t_i)} σ_i f(x_i)/√N`
    pub decayed_forcing: f64,
    /// `⟨f,ω_t⟩ - ⟨f,ω_0⟩ + θ∫⟨f,ω⟩ - ∫:⟨H_f⟩: - ⟨f,Σ_t⟩`
    pub integral_residual: f64,
    /// `⟨f,ω_t⟩ - e^{-θt}⟨f,ω_0⟩ - e^{-θt}∫e^{θs}:⟨H_f⟩: - Σ e^{-θ(t-t_i)}σ_i f(x_i)/√N`
    pub variation_residual: f64,
    /// Sup over the step grid so far of the magnitudes of the summands.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub stats: StepStats,
    pub weak_form: Vec<WeakFormRecord>,
    pub final_state: SimulationState,
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Number of accumulator slots per test function.
const ACC: usize = 3;

/// The vector field. State layout: `[accumulators (3 per test function) | x₀, y₀, x₁, y₁, …]`.
struct Field<'a> {
    kernel: &'a TorusKernel,
    theta: f64,
    smoothing: bool,
    nonlinear: bool,
    tests: &'a [TestFunction],
    amplitude: Vec<f64>,
    birth: Vec<f64>,
}

impl Field<'_> {
    fn offset(&self) -> usize {
        ACC * self.tests.len()
    }

    #[inline]
    fn pair_kernel(&self, r: Vec2) -> Vec2 {
        if self.smoothing {
            self.kernel.eval_smoothed_separation(r).biot_savart()
        } else {
            self.kernel.eval_separation(r).biot_savart()
        }
    }

    fn eval(&self, t: f64, y: &[f64], out: &mut [f64], grads: &mut Vec<Vec2>) {
        let off = self.offset();
        let n = self.amplitude.len();
        let m = self.tests.len();
        let xy = &y[off..];
        let xi: Vec<f64> = (0..n)
            .map(|i| self.amplitude[i] * (-self.theta * (t - self.birth[i])).exp())
            .collect();
        // ∇f at every vortex, `grads[i*m + f]`
        grads.clear();
        for (f_idx, f) in self.tests.iter().enumerate() {
            let mut pairing = 0.0;
            for i in 0..n {
                let p = TorusPoint::new(xy[2 * i], xy[2 * i + 1]);
                pairing += xi[i] * f.value(p);
            }
            out[ACC * f_idx] = pairing;
            out[ACC * f_idx + 1] = 0.0;
            out[ACC * f_idx + 2] = 0.0;
        }
        if self.nonlinear && m > 0 {
            grads.resize(n * m, Vec2::ZERO);
            for i in 0..n {
                let p = TorusPoint::new(xy[2 * i], xy[2 * i + 1]);
                for (f_idx, f) in self.tests.iter().enumerate() {
                    grads[i * m + f_idx] = f.gradient(p);
                }
            }
        }
        let vel = &mut out[off..];
        vel.iter_mut().for_each(|v| *v = 0.0);
        if !self.nonlinear {
            return;
        }
        let mut h_sum = vec![0.0; m];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = Vec2::new(
                    minimal_image(xy[2 * i] - xy[2 * j]),
                    minimal_image(xy[2 * i + 1] - xy[2 * j + 1]),
                );
                let k = self.pair_kernel(r);
                vel[2 * i] += xi[j] * k.x;
                vel[2 * i + 1] += xi[j] * k.y;
                vel[2 * j] -= xi[i] * k.x;
                vel[2 * j + 1] -= xi[i] * k.y;
                if m > 0 {
                    // both orderings of the pair: 2·ξ_iξ_j·½K·(∇f_i - ∇f_j)
                    let w = xi[i] * xi[j];
                    for (f_idx, h) in h_sum.iter_mut().enumerate() {
                        let dg = grads[i * m + f_idx] - grads[j * m + f_idx];
                        *h += w * k.dot(dg);
                    }
                }
            }
        }
        let growth = (self.theta * t).exp();
        for (f_idx, h) in h_sum.into_iter().enumerate() {
            out[ACC * f_idx + 1] = h;
            out[ACC * f_idx + 2] = growth * h;
        }
    }
}

struct Stepper {
    dim: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    grads: Vec<Vec2>,
    fsal_valid: bool,
    h: f64,
}

impl Stepper {
    fn new() -> Self {
        Self {
            dim: 0,
            k: Default::default(),
            tmp: Vec::new(),
            y_new: Vec::new(),
            grads: Vec::new(),
            fsal_valid: false,
            h: 0.0,
        }
    }

    fn resize(&mut self, dim: usize) {
        self.dim = dim;
        for k in &mut self.k {
            k.resize(dim, 0.0);
        }
        self.tmp.resize(dim, 0.0);
        self.y_new.resize(dim, 0.0);
        self.fsal_valid = false;
    }
}

/// Integrates the vortex system described by a kernel, physical parameters and an
/// [`IntegratorConfig`].
pub struct Simulator<'a> {
    kernel: &'a TorusKernel,
    params: LawParams,
    icfg: IntegratorConfig,
}

struct Segment<'s> {
    y: &'s mut Vec<f64>,
    t: &'s mut f64,
    stats: &'s mut StepStats,
    scales: &'s mut [f64],
}

impl<'a> Simulator<'a> {
    pub fn new(kernel: &'a TorusKernel, params: LawParams, icfg: IntegratorConfig) -> Result<Self, DynamicsError> {
        icfg.validate()?;
        params
            .validate()
            .map_err(|e| DynamicsError::InvalidConfig(e.to_string()))?;
        Ok(Self { kernel, params, icfg })
    }

    pub fn params(&self) -> &LawParams {
        &self.params
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.icfg
    }

    fn field<'f>(&'f self, state: &SimulationState, tests: &'f [TestFunction]) -> Field<'f> {
        Field {
            kernel: self.kernel,
            theta: self.params.theta,
            smoothing: self.icfg.smoothing,
            nonlinear: self.icfg.nonlinear,
            tests,
            amplitude: state.vortices.iter().map(|v| v.amplitude).collect(),
            birth: state.vortices.iter().map(|v| v.birth_time).collect(),
        }
    }

    /// Velocities of all vortices at the state's time.
    pub fn drift(&self, state: &SimulationState) -> Vec<Vec2> {
        let field = self.field(state, &[]);
        let y: Vec<f64> = state
            .vortices
            .iter()
            .flat_map(|v| [v.position.u(), v.position.v()])
            .collect();
        let mut out = vec![0.0; y.len()];
        field.eval(state.time, &y, &mut out, &mut Vec::new());
        out.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
    }

    /// Advance the positions from `state.time` to `t_end` (which may lie in the past).
    /// The caller guarantees no forcing event falls in between.
    pub fn integrate_between_jumps(
        &self,
        state: &SimulationState,
        t_end: f64,
    ) -> Result<(SimulationState, StepStats), DynamicsError> {
        let field = self.field(state, &[]);
        let mut y: Vec<f64> = state
            .vortices
            .iter()
            .flat_map(|v| [v.position.u(), v.position.v()])
            .collect();
        let mut t = state.time;
        let mut stats = StepStats {
            min_pair_distance: f64::INFINITY,
            ..Default::default()
        };
        let mut stepper = Stepper::new();
        stepper.resize(y.len());
        let mut seg = Segment {
            y: &mut y,
            t: &mut t,
            stats: &mut stats,
            scales: &mut [],
        };
        self.advance(&field, &mut stepper, &mut seg, t_end)?;
        let mut out = state.clone();
        out.time = t_end;
        for (v, c) in out.vortices.iter_mut().zip(y.chunks_exact(2)) {
            v.position = TorusPoint::new(c[0], c[1]);
        }
        Ok((out, stats))
    }

    /// Append the event's vortex. Cadlag: the returned state at the event time contains it.
    pub fn inject_vortex(&self, state: &mut SimulationState, event: &VortexEvent) -> Result<(), DynamicsError> {
        if event.birth_time < state.time {
            return Err(DynamicsError::EventInPast {
                event: event.birth_time,
                now: state.time,
            });
        }
        state.time = event.birth_time;
        state.vortices.push(Vortex {
            birth_time: event.birth_time,
            amplitude: event.sign_f64() / self.params.n().sqrt(),
            position: event.position,
        });
        Ok(())
    }

    fn advance(
        &self,
        field: &Field<'_>,
        st: &mut Stepper,
        seg: &mut Segment<'_>,
        t_end: f64,
    ) -> Result<(), DynamicsError> {
        let span = t_end - *seg.t;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let off = field.offset();
        let n_pos = seg.y.len() - off;
        let static_positions = !self.icfg.nonlinear || n_pos <= 2;
        if st.h == 0.0 {
            st.h = self.icfg.max_step.min(span.abs());
        }
        if !st.fsal_valid {
            field.eval(*seg.t, seg.y, &mut st.k[0], &mut st.grads);
            seg.stats.rhs_evals += 1;
            st.fsal_valid = true;
        }
        let (rtol, atol) = (self.icfg.rel_tol, self.icfg.abs_tol);
        let mut last_distance = min_pair_distance_raw(&seg.y[off..]);
        loop {
            let remaining = t_end - *seg.t;
            if remaining * dir <= 0.0 {
                break;
            }
            let mut h = st.h.min(self.icfg.max_step).min(remaining.abs());
            let last = h >= remaining.abs() * (1.0 - 1e-12);
            if last {
                h = remaining.abs();
            }
            let hs = dir * h;
            let t0 = *seg.t;
            for s in 1..7 {
                for i in 0..st.dim {
                    let mut acc = 0.0;
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        acc += a * st.k[j][i];
                    }
                    st.tmp[i] = seg.y[i] + hs * acc;
                }
                let (_, rest) = st.k.split_at_mut(s);
                field.eval(t0 + C[s] * hs, &st.tmp, &mut rest[0], &mut st.grads);
            }
            seg.stats.rhs_evals += 6;
            // stage 7 was evaluated at the 5th-order solution, which `tmp` holds
            st.y_new.copy_from_slice(&st.tmp);
            let mut err: f64 = 0.0;
            for i in 0..st.dim {
                let mut e = 0.0;
                for (j, c) in E.iter().enumerate() {
                    e += c * st.k[j][i];
                }
                let scale = if i >= off {
                    // positions live on the unit cell, measure them against it
                    atol + rtol
                } else {
                    atol + rtol * seg.y[i].abs().max(st.y_new[i].abs())
                };
                err = err.max((hs * e).abs() / scale);
            }
            if !err.is_finite() {
                err = 1e10;
            }
            if err <= 1.0 {
                *seg.t = if last { t_end } else { t0 + hs };
                std::mem::swap(seg.y, &mut st.y_new);
                st.k.swap(0, 6);
                seg.stats.accepted += 1;
                for c in seg.y[off..].iter_mut() {
                    if !(0.0..1.0).contains(c) {
                        *c = c.rem_euclid(1.0);
                        if *c >= 1.0 {
                            *c = 0.0;
                        }
                    }
                }
                if !static_positions {
                    last_distance = min_pair_distance_raw(&seg.y[off..]);
                }
                seg.stats.min_pair_distance = seg.stats.min_pair_distance.min(last_distance);
                self.track_scales(field, seg, off);
                if last_distance < self.icfg.min_pair_distance_abort {
                    match self.icfg.collision_policy {
                        CollisionPolicy::Abort => {
                            return Err(DynamicsError::NearCollision {
                                time: *seg.t,
                                distance: last_distance,
                            })
                        }
                        CollisionPolicy::Continue => seg.stats.close_approaches += 1,
                    }
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a step shortened to land on t_end says nothing against the old proposal
                st.h = if last { st.h.max(h * grow) } else { h * grow };
            } else {
                seg.stats.rejected += 1;
                st.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if st.h < 1e-14 * (1.0 + t0.abs()) {
                    return Err(DynamicsError::StepUnderflow {
                        time: t0,
                        distance: last_distance,
                    });
                }
            }
        }
        Ok(())
    }

    fn track_scales(&self, field: &Field<'_>, seg: &mut Segment<'_>, off: usize) {
        if seg.scales.is_empty() {
            return;
        }
        let theta = self.params.theta;
        let n = field.amplitude.len();
        let xy = &seg.y[off..];
        for (f_idx, f) in field.tests.iter().enumerate() {
            let mut pairing = 0.0;
            for i in 0..n {
                let xi = field.amplitude[i] * (-theta * (*seg.t - field.birth[i])).exp();
                pairing += xi * f.value(TorusPoint::new(xy[2 * i], xy[2 * i + 1]));
            }
            let a = &seg.y[ACC * f_idx..ACC * f_idx + ACC];
            let damp = (-theta * *seg.t).exp();
            let mag = pairing
                .abs()
                .max(theta * a[0].abs())
                .max(a[1].abs())
                .max(damp * a[2].abs());
            seg.scales[f_idx] = seg.scales[f_idx].max(mag);
        }
    }

    /// Runs from `initial` at time 0 through every forcing event, recording the ensemble
    /// at each snapshot time (after any jump at that time).
    pub fn simulate(
        &self,
        initial: &VortexEnsemble,
        forcing: &EventStream,
        snapshot_times: &[f64],
        tests: &[TestFunction],
    ) -> Result<SimulationOutput, DynamicsError> {
        let horizon = forcing.horizon();
        let ordered = snapshot_times.windows(2).all(|w| w[0] < w[1]);
        if !ordered || snapshot_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
            return Err(DynamicsError::InvalidSnapshots { horizon });
        }
        let theta = self.params.theta;
        let inv_sqrt_n = 1.0 / self.params.n().sqrt();
        let mut state = SimulationState::from_ensemble(initial);
        let m = tests.len();
        let initial_pairing: Vec<f64> = tests.iter().map(|f| f.pair(initial)).collect();
        let mut forcing_sum = vec![0.0; m];
        let mut scales: Vec<f64> = initial_pairing.iter().map(|p| p.abs()).collect();

        let mut y: Vec<f64> = vec![0.0; ACC * m];
        y.extend(state.vortices.iter().flat_map(|v| [v.position.u(), v.position.v()]));
        let mut t = 0.0;
        let mut stats = StepStats {
            min_pair_distance: min_pair_distance(&state),
            ..Default::default()
        };
        let mut stepper = Stepper::new();
        stepper.resize(y.len());

        let mut out = SimulationOutput {
            snapshots: Vec::with_capacity(snapshot_times.len()),
            diagnostics: Vec::with_capacity(snapshot_times.len()),
            stats: StepStats::default(),
            weak_form: Vec::new(),
            final_state: state.clone(),
        };
        let events = forcing.events();
        let (mut next_event, mut next_snap) = (0usize, 0usize);
        loop {
            let te = events.get(next_event).map(|e| e.birth_time);
            let ts = snapshot_times.get(next_snap).copied();
            let target = match (te, ts) {
                (None, None) => break,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (Some(a), Some(b)) => a.min(b),
            };
            {
                let field = self.field(&state, tests);
                let mut seg = Segment {
                    y: &mut y,
                    t: &mut t,
                    stats: &mut stats,
                    scales: &mut scales,
                };
                self.advance(&field, &mut stepper, &mut seg, target)?;
            }
            t = target;
            state.time = t;
            let mut injected = false;
            while next_event < events.len() && events[next_event].birth_time <= t {
                let e = &events[next_event];
                self.inject_vortex(&mut state, e)?;
                y.push(e.position.u());
                y.push(e.position.v());
                for (f_idx, f) in tests.iter().enumerate() {
                    forcing_sum[f_idx] += e.sign_f64() * inv_sqrt_n * f.value(e.position);
                }
                next_event += 1;
                injected = true;
            }
            if injected {
                stepper.resize(y.len());
                let off = ACC * m;
                let d = min_pair_distance_raw(&y[off..]);
                stats.min_pair_distance = stats.min_pair_distance.min(d);
            }
            if ts == Some(t) {
                let off = ACC * m;
                for (v, c) in state.vortices.iter_mut().zip(y[off..].chunks_exact(2)) {
                    v.position = TorusPoint::new(c[0], c[1]);
                }
                let ensemble = state.ensemble(theta);
                out.diagnostics.push(DiagnosticRow {
                    time: t,
                    n_vortices: state.vortices.len(),
                    min_pair_distance: min_pair_distance(&state),
                    lyapunov: lyapunov(&state, self.kernel),
                    steps: stats.accepted,
                });
                for (f_idx, f) in tests.iter().enumerate() {
                    let pairing = f.pair(&ensemble);
                    let a = &y[ACC * f_idx..ACC * f_idx + ACC];
                    let decayed: f64 = events[..next_event]
                        .iter()
                        .map(|e| e.sign_f64() * inv_sqrt_n * (-theta * (t - e.birth_time)).exp() * f.value(e.position))
                        .sum();
                    let damp = (-theta * t).exp();
                    let scale = scales[f_idx]
                        .max(pairing.abs())
                        .max(forcing_sum[f_idx].abs())
                        .max(decayed.abs());
                    scales[f_idx] = scale;
                    out.weak_form.push(WeakFormRecord {
                        time: t,
                        function: f.name.clone(),
                        pairing,
                        initial_pairing: initial_pairing[f_idx],
                        linear_integral: a[0],
                        nonlinear_integral: a[1],
                        weighted_nonlinear_integral: a[2],
                        forcing: forcing_sum[f_idx],
                        decayed_forcing: decayed,
                        integral_residual: pairing - initial_pairing[f_idx] + theta * a[0]
                            - a[1]
                            - forcing_sum[f_idx],
                        variation_residual: pairing - damp * initial_pairing[f_idx] - damp * a[2] - decayed,
                        scale,
                    });
                }
                out.snapshots.push(Snapshot { time: t, ensemble });
                next_snap += 1;
            }
        }
        let off = ACC * m;
        for (v, c) in state.vortices.iter_mut().zip(y[off..].chunks_exact(2)) {
            v.position = TorusPoint::new(c[0], c[1]);
        }
        out.stats = stats;
        out.final_state = state;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelConfig;

    fn kernel() -> TorusKernel {
        TorusKernel::new(KernelConfig {
            k_max: 16,
            ..KernelConfig::default()
        })
        .unwrap()
    }

    fn params(theta: f64) -> LawParams {
        LawParams::new(1.0, theta, 1.0, 1).unwrap()
    }

    #[test]
    fn lone_vortex_does_not_move() {
        let k = kernel();
        let sim = Simulator::new(&k, params(0.0), IntegratorConfig::for_params(&params(0.0), 1e-3)).unwrap();
        let mut omega = VortexEnsemble::new();
        omega.push(1.0, TorusPoint::new(0.3, 0.6)).unwrap();
        let state = SimulationState::from_ensemble(&omega);
        assert_eq!(sim.drift(&state), vec![Vec2::ZERO]);
    }

    #[test]
    fn injection_in_the_past_fails() {
        let k = kernel();
        let p = params(1.0);
        let sim = Simulator::new(&k, p, IntegratorConfig::for_params(&p, 1e-3)).unwrap();
        let mut state = SimulationState::from_ensemble(&VortexEnsemble::new());
        state.time = 1.0;
        let e = VortexEvent::new(0.5, 1, TorusPoint::origin()).unwrap();
        assert!(matches!(sim.inject_vortex(&mut state, &e), Err(DynamicsError::EventInPast { .. })));
    }

    #[test]
    fn pure_decay_without_forcing() {
        let k = kernel();
        let p = params(2.0);
        let sim = Simulator::new(&k, p, IntegratorConfig::for_params(&p, 1e-3)).unwrap();
        let mut omega = VortexEnsemble::new();
        omega.push(0.5, TorusPoint::new(0.1, 0.1)).unwrap();
        omega.push(-0.25, TorusPoint::new(0.6, 0.4)).unwrap();
        let out = sim
            .simulate(&omega, &EventStream::empty(1.0), &[0.5, 1.0], &[])
            .unwrap();
        let last = &out.snapshots[1].ensemble;
        assert_eq!(last.len(), 2);
        assert!((last.atoms()[0].intensity - 0.5 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((last.atoms()[1].intensity + 0.25 * (-2.0f64).exp()).abs() < 1e-15);
    }
}
