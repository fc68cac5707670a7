//! Samplers for the forcing, the decayed Poisson measure and white noise, closed-form
//! evaluators of their Laplace and characteristic functionals, and exact OU updates.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{Atom, EventStream, VortexEnsemble, VortexEvent};
use crate::spectral::{half_lattice, FourierCoefficients};
use crate::torus::TorusPoint;

/// Atoms whose intensity would fall below this are never materialised when `M = ∞`.
pub const INTENSITY_FLOOR: f64 = 1e-8;

/// Tolerance of the adaptive time quadrature in the functional evaluators.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Side of the lattice used to average over the torus.
pub const SPACE_GRID: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("test function is not finite at ({0}, {1})")]
    NonFinite(f64, f64),
}

/// Physical parameters `(λ, θ, M, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub lambda: f64,
    pub theta: f64,
    /// May be `f64::INFINITY`.
    pub big_m: f64,
    pub n_scaling: u32,
}

impl LawParams {
    pub fn new(lambda: f64, theta: f64, big_m: f64, n_scaling: u32) -> Result<Self, LawError> {
        let p = Self {
            lambda,
            theta,
            big_m,
            n_scaling,
        };
        p.validate()?;
        Ok(p)
    }

    /// `θ = 0` is admitted for finite `M` so that undamped deterministic runs share the type.
    pub fn validate(&self) -> Result<(), LawError> {
        let bad = |name, reason: String| Err(LawError::InvalidParameter { name, reason });
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be positive and finite, got {}", self.lambda));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return bad("theta", format!("must be nonnegative and finite, got {}", self.theta));
        }
        if !(self.big_m >= 0.0) {
            return bad("big_m", format!("must be nonnegative, got {}", self.big_m));
        }
        if self.theta == 0.0 && self.big_m.is_infinite() {
            return bad("big_m", "an infinite age range needs theta > 0".into());
        }
        if self.n_scaling == 0 {
            return bad("n_scaling", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        f64::from(self.n_scaling)
    }

    /// Jump rate `Nλ` of the forcing.
    pub fn rate(&self) -> f64 {
        self.n() * self.lambda
    }

    /// Age at which `e^{-θ a}` reaches [`INTENSITY_FLOOR`].
    pub fn age_cutoff(&self) -> f64 {
        if self.theta == 0.0 {
            f64::INFINITY
        } else {
            -INTENSITY_FLOOR.ln() / self.theta
        }
    }

    /// Effective age range `min(M, age_cutoff)`.
    pub fn m_eff(&self) -> f64 {
        self.big_m.min(self.age_cutoff())
    }

    /// Second-moment mass `(λ/2θ) e^{-2θ·M_eff} C` dropped by truncating `M = ∞`.
    pub fn truncation_tail(&self, delta_norm_sq: f64) -> f64 {
        if self.big_m.is_finite() && self.big_m <= self.age_cutoff() {
            0.0
        } else {
            self.lambda / (2.0 * self.theta) * (-2.0 * self.theta * self.m_eff()).exp() * delta_norm_sq
        }
    }

    pub fn with_m(&self, big_m: f64) -> Self {
        Self { big_m, ..*self }
    }

    pub fn with_n(&self, n_scaling: u32) -> Self {
        Self { n_scaling, ..*self }
    }
}

/// Stream tags separating the independent random ingredients of one sample index.
pub mod tags {
    pub const XI: u64 = 0x5849;
    pub const FORCING: u64 = 0x464f;
    pub const NOISE: u64 = 0x4e4f;
    pub const POSITIONS: u64 = 0x504f;
    pub const OU: u64 = 0x4f55;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, tag, index)`. ChaCha's stream id carries the index,
/// so neighbouring indices never share keystream.
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed ^ splitmix(tag);
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Poisson forcing of rate `Nλ` on `[0, horizon]` with uniform signs and positions.
pub fn sample_forcing<R: Rng + ?Sized>(params: &LawParams, horizon: f64, rng: &mut R) -> EventStream {
    let mut events = Vec::new();
    let gaps = Exp::new(params.rate()).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            break;
        }
        let sign = random_sign(rng);
        let position = TorusPoint::random(rng);
        events.push(VortexEvent::new(t, sign, position).expect("sign is ±1"));
    }
    EventStream::new(horizon, events).expect("ordered by construction")
}

/// One atom of the decayed Poisson measure before scaling: age, sign, position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgedVortex {
    pub age: f64,
    pub sign: i8,
    pub position: TorusPoint,
}

impl AgedVortex {
    pub fn intensity(&self, theta: f64, n: f64) -> f64 {
        f64::from(self.sign) * (-theta * self.age).exp() / n.sqrt()
    }
}

/// Raw atoms of `Ξ^{Nλ,θ}_M`: Poisson(`Nλ·M_eff`) many, ages uniform on `[0, M_eff]`.
pub fn sample_xi_aged<R: Rng + ?Sized>(params: &LawParams, rng: &mut R) -> Vec<AgedVortex> {
    let m = params.m_eff();
    let mean = params.rate() * m;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    (0..count)
        .map(|_| {
            let age = m * rng.random::<f64>();
            let sign = random_sign(rng);
            let position = TorusPoint::random(rng);
            AgedVortex { age, sign, position }
        })
        .collect()
}

/// Sample of `Ξ^{Nλ,θ}_M / √N`.
pub fn sample_xi<R: Rng + ?Sized>(params: &LawParams, rng: &mut R) -> VortexEnsemble {
    let n = params.n();
    let atoms = sample_xi_aged(params, rng)
        .into_iter()
        .map(|a| Atom {
            intensity: a.intensity(params.theta, n),
            position: a.position,
        })
        .collect();
    VortexEnsemble::from_atoms(atoms).expect("intensities above the floor are nonzero")
}

/// A quadrature result and its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
}

/// Adaptive Simpson on `[a, b]`, returning the integral and the error estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        let (l, le) = step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
        let (r, re) = step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        (l + r, le + re)
    }
    if b <= a {
        return (0.0, 0.0);
    }
    // a few forced bisections so narrow features are not missed
    let pieces = 8;
    let h = (b - a) / pieces as f64;
    let mut total = (0.0, 0.0);
    for p in 0..pieces {
        let (x0, x1) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (f0, f1, fmid) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
        let whole = h / 6.0 * (f0 + 4.0 * fmid + f1);
        let (v, e) = step(f, x0, x1, f0, fmid, f1, whole, tol / pieces as f64, 40);
        total.0 += v;
        total.1 += e;
    }
    total
}

/// Values of `f` on the `SPACE_GRID²` lattice, merged into (value, weight) pairs.
fn space_distribution<F: Fn(TorusPoint) -> f64>(f: &F) -> Result<Vec<(f64, f64)>, LawError> {
    let n = SPACE_GRID;
    let mut vals = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
            let y = f(TorusPoint::new(u, v));
            if !y.is_finite() {
                return Err(LawError::NonFinite(u, v));
            }
            vals.push(y);
        }
    }
    vals.sort_by(f64::total_cmp);
    let w = 1.0 / (n * n) as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for y in vals {
        match out.last_mut() {
            Some(last) if last.0 == y => last.1 += w,
            _ => out.push((y, w)),
        }
    }
    Ok(out)
}

/// Lévy exponent `Nλ ∫₀^{M_eff} ∫ φ(α e^{-θt} f(x)/√N) dx dt` for a sign-averaged `φ`.
fn levy_exponent<F, P>(f: &F, alpha: f64, params: &LawParams, phi: P) -> Result<Quadrature<f64>, LawError>
where
    F: Fn(TorusPoint) -> f64,
    P: Fn(f64) -> f64,
{
    params.validate()?;
    let dist = space_distribution(f)?;
    let m = params.m_eff();
    if alpha == 0.0 || m == 0.0 {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let scale = alpha / params.n().sqrt();
    let theta = params.theta;
    let integrand = |t: f64| {
        let amp = scale * (-theta * t).exp();
        dist.iter().map(|&(y, w)| w * phi(amp * y)).sum::<f64>()
    };
    let (val, err) = adaptive_simpson(&integrand, 0.0, m, QUADRATURE_TOL / params.rate());
    Ok(Quadrature {
        value: params.rate() * val,
        error: params.rate() * err,
    })
}

/// `E exp(α⟨f, Ξ/√N⟩)`; the sign average turns `e^a - 1` into `cosh a - 1 = 2 sinh²(a/2)`.
pub fn laplace_functional_xi<F: Fn(TorusPoint) -> f64>(
    f: &F,
    alpha: f64,
    params: &LawParams,
) -> Result<Quadrature<f64>, LawError> {
    let e = levy_exponent(f, alpha, params, |a| 2.0 * (0.5 * a).sinh().powi(2))?;
    let value = e.value.exp();
    Ok(Quadrature {
        value,
        error: value * e.error,
    })
}

/// `E exp(iα⟨f, Ξ/√N⟩)`; real because the signs are symmetric.
pub fn characteristic_functional_xi<F: Fn(TorusPoint) -> f64>(
    f: &F,
    alpha: f64,
    params: &LawParams,
) -> Result<Quadrature<Complex64>, LawError> {
    let e = levy_exponent(f, alpha, params, |a| -2.0 * (0.5 * a).sin().powi(2))?;
    let value = e.value.exp();
    Ok(Quadrature {
        value: Complex64::new(value, 0.0),
        error: value * e.error,
    })
}

/// `E exp(i⟨f, cη⟩) = exp(-c²‖f‖²/2)` for white noise `η`.
pub fn characteristic_functional_gaussian(f_l2_norm_sq: f64, c: f64) -> f64 {
    (-0.5 * c * c * f_l2_norm_sq).exp()
}

/// Standard complex Gaussian, `E|z|² = 1`.
fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// White noise truncated to `0 < |k| ≤ k_max`: independent modes with `E|⟨η, e_k⟩|² = 1`.
pub fn sample_white_noise<R: Rng + ?Sized>(k_max: usize, rng: &mut R) -> FourierCoefficients {
    let n = half_lattice(k_max).len();
    let coeffs = (0..n).map(|_| complex_normal(rng)).collect();
    FourierCoefficients::from_half_lattice(k_max, coeffs)
}

/// Exact Poissonian OU path `u_t = e^{-θt} u_0 + Σ_{t_i ≤ t} e^{-θ(t - t_i)} σ_i δ_{x_i}/√N`
/// at the requested times (right-continuous at jumps).
pub fn ou_poisson_trajectory(
    initial: &VortexEnsemble,
    forcing: &EventStream,
    theta: f64,
    n_scaling: u32,
    times: &[f64],
) -> Vec<VortexEnsemble> {
    let inv_sqrt_n = 1.0 / f64::from(n_scaling).sqrt();
    times
        .iter()
        .map(|&t| {
            let mut atoms: Vec<Atom> = initial
                .atoms()
                .iter()
                .map(|a| Atom {
                    intensity: a.intensity * (-theta * t).exp(),
                    position: a.position,
                })
                .collect();
            for e in forcing.events().iter().take_while(|e| e.birth_time <= t) {
                atoms.push(Atom {
                    intensity: e.sign_f64() * (-theta * (t - e.birth_time)).exp() * inv_sqrt_n,
                    position: e.position,
                });
            }
            VortexEnsemble::from_atoms(atoms).expect("decayed intensities stay nonzero")
        })
        .collect()
}

/// Exact Gaussian OU path `du = -θu dt + √λ dW` mode by mode, where `W` is a
/// cylindrical Wiener process. `times` must be increasing and start at or after 0.
pub fn ou_gaussian_trajectory<R: Rng + ?Sized>(
    initial: &FourierCoefficients,
    lambda: f64,
    theta: f64,
    times: &[f64],
    rng: &mut R,
) -> Vec<FourierCoefficients> {
    let mut state: Vec<Complex64> = initial.half_values().to_vec();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - now;
        assert!(dt >= 0.0, "times must be increasing");
        let decay = (-theta * dt).exp();
        let sd = if theta > 0.0 {
            (lambda * (1.0 - (-2.0 * theta * dt).exp()) / (2.0 * theta)).sqrt()
        } else {
            (lambda * dt).sqrt()
        };
        for z in &mut state {
            *z = *z * decay + complex_normal(rng) * sd;
        }
        now = t;
        out.push(FourierCoefficients::from_half_lattice(initial.k_max(), state.clone()));
    }
    out
}

/// Per-mode variance `(λ/2θ)(1 - e^{-2θt}(1 - 2θc²/λ))` of the Gaussian OU path started at `cη`.
pub fn ou_gaussian_mode_variance(lambda: f64, theta: f64, c: f64, t: f64) -> f64 {
    lambda / (2.0 * theta) * (1.0 - (-2.0 * theta * t).exp() * (1.0 - 2.0 * theta * c * c / lambda))
}

/// `Σ_i (σ_i f(x_i)/√N)²` over the events of the stream.
pub fn realized_quadratic_variation<F: Fn(TorusPoint) -> f64>(
    stream: &EventStream,
    f: &F,
    n_scaling: u32,
) -> f64 {
    let n = f64::from(n_scaling);
    stream
        .events()
        .iter()
        .map(|e| {
            let y = f(e.position);
            y * y / n
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let (v, e) = adaptive_simpson(&|t: f64| (-t).exp(), 0.0, 3.0, 1e-12);
        assert!((v - (1.0 - (-3.0f64).exp())).abs() < 1e-11);
        assert!(e < 1e-10);
    }

    #[test]
    fn streams_differ_by_index_and_tag() {
        let a: u64 = stream_rng(7, tags::XI, 0).random();
        let b: u64 = stream_rng(7, tags::XI, 1).random();
        let c: u64 = stream_rng(7, tags::FORCING, 0).random();
        let a2: u64 = stream_rng(7, tags::XI, 0).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn params_validation_names_key() {
        let err = LawParams::new(1.0, -1.0, 1.0, 1).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert!(LawParams::new(1.0, 0.0, f64::INFINITY, 1).is_err());
        assert!(LawParams::new(1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn infinite_m_is_truncated_at_floor() {
        let p = LawParams::new(1.0, 2.0, f64::INFINITY, 1).unwrap();
        assert!(((-p.theta * p.m_eff()).exp() - INTENSITY_FLOOR).abs() < 1e-20);
        assert!(p.truncation_tail(1.0) > 0.0);
        assert_eq!(p.with_m(1.0).truncation_tail(1.0), 0.0);
    }

    #[test]
    fn alpha_zero_functionals_are_one() {
        let p = LawParams::new(3.0, 1.0, 2.0, 1).unwrap();
        let f = |x: TorusPoint| (6.0 * x.u()).cos();
        assert_eq!(laplace_functional_xi(&f, 0.0, &p).unwrap().value, 1.0);
        assert_eq!(characteristic_functional_xi(&f, 0.0, &p).unwrap().value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn non_finite_test_function_rejected() {
        let p = LawParams::new(3.0, 1.0, 2.0, 1).unwrap();
        let f = |_x: TorusPoint| f64::NAN;
        assert!(laplace_functional_xi(&f, 1.0, &p).is_err());
    }

    #[test]
    fn gaussian_functional_examples() {
        assert_eq!(characteristic_functional_gaussian(0.0, 3.0), 1.0);
        let v = characteristic_functional_gaussian(2.0 * 2f64.ln(), 1.0);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ou_without_forcing_halves_at_ln2() {
        let mut init = VortexEnsemble::new();
        init.push(0.8, TorusPoint::new(0.1, 0.2)).unwrap();
        init.push(-0.4, TorusPoint::new(0.6, 0.9)).unwrap();
        let path = ou_poisson_trajectory(&init, &EventStream::empty(1.0), 1.0, 1, &[2f64.ln()]);
        let got: Vec<f64> = path[0].atoms().iter().map(|a| a.intensity).collect();
        assert!((got[0] - 0.4).abs() < 1e-15 && (got[1] + 0.2).abs() < 1e-15);
    }
}
