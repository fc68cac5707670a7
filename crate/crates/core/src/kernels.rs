//! Green function of the Laplacian on the torus, its Biot–Savart kernel
//! `K = ∇⊥G`, and the radially blended variants used by the vortex dynamics.
//!
//! The primary definition is spectral: a disc-truncated Fourier sum
//! `G(r) = Σ_{0<|k|≤k_max} e^{2πik·r} / (-4π²|k|²)`, which has zero mean and
//! solves `ΔG = δ - 1` up to the cutoff. Because the lattice disc is invariant
//! under `k₁ → -k₁` and `k₂ → -k₂`, the sum collapses onto the quarter lattice as
//! a bilinear form in `cos(2πk₁a)` and `cos(2πk₂b)`, which is what [`TorusKernel`]
//! evaluates.

use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::VortexEnsemble;
use crate::torus::{minimal_image, TorusPoint, Vec2};

const TWO_PI: f64 = 2.0 * PI;

/// Largest accepted spectral cutoff.
pub const MAX_K: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("singular evaluation: kernel evaluated at coincident points")]
    SingularEvaluation,
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
}

/// Parameters of the spectral kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Spectral cutoff `k_max` of the Fourier sums.
    pub k_max: usize,
    /// Smoothing radius of the blended kernels.
    pub reg_delta: f64,
    /// Number of image rows kept in [`lattice_green`].
    pub lattice_radius: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            k_max: 64,
            reg_delta: 1e-3,
            lattice_radius: 6,
        }
    }
}

impl KernelConfig {
    pub fn new(k_max: usize, reg_delta: f64, lattice_radius: usize) -> Result<Self, KernelError> {
        let cfg = Self {
            k_max,
            reg_delta,
            lattice_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.k_max < 8 || self.k_max > MAX_K {
            return Err(KernelError::InvalidConfig(format!(
                "k_max must lie in [8, {MAX_K}], got {}",
                self.k_max
            )));
        }
        if !(self.reg_delta > 0.0 && self.reg_delta < 0.5) {
            return Err(KernelError::InvalidConfig(format!(
                "reg_delta must lie in (0, 0.5), got {}",
                self.reg_delta
            )));
        }
        if self.lattice_radius == 0 {
            return Err(KernelError::InvalidConfig(
                "lattice_radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Value and gradient (with respect to the separation `x - y`) of a Green function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenValue {
    pub value: f64,
    pub grad: Vec2,
}

impl GreenValue {
    /// The Biot–Savart vector `∇⊥G = (∂₂G, -∂₁G)`.
    #[inline]
    pub fn biot_savart(&self) -> Vec2 {
        self.grad.perp()
    }
}

thread_local! {
    static PHASES: RefCell<Phases> = RefCell::new(Phases::default());
}

#[derive(Default)]
struct Phases {
    ca: Vec<f64>,
    sa: Vec<f64>,
    cb: Vec<f64>,
    sb: Vec<f64>,
}

/// Fills `cos(2πk t)`, `sin(2πk t)` for `k = 0..=k_max` by complex rotation.
#[inline]
fn fill_phases(t: f64, k_max: usize, c: &mut Vec<f64>, s: &mut Vec<f64>) {
    c.clear();
    s.clear();
    let (s1, c1) = (TWO_PI * t).sin_cos();
    let (mut cr, mut sr) = (1.0, 0.0);
    for k in 0..=k_max {
        if k % 16 == 0 && k > 0 {
            // re-anchor to keep rounding growth bounded
            let (sk, ck) = (TWO_PI * t * k as f64).sin_cos();
            cr = ck;
            sr = sk;
        }
        c.push(cr);
        s.push(sr);
        let nc = cr * c1 - sr * s1;
        sr = sr * c1 + cr * s1;
        cr = nc;
    }
}

/// `(Σ w·c, Σ wk·s)` with independent partial sums so the adds pipeline.
#[inline]
fn row_dot(w: &[f64], wk: &[f64], c: &[f64], s: &[f64]) -> (f64, f64) {
    let mut u = [0.0; 4];
    let mut v = [0.0; 4];
    let n = w.len() / 4 * 4;
    for j in (0..n).step_by(4) {
        for l in 0..4 {
            u[l] += w[j + l] * c[j + l];
            v[l] += wk[j + l] * s[j + l];
        }
    }
    for j in n..w.len() {
        u[0] += w[j] * c[j];
        v[0] += wk[j] * s[j];
    }
    ((u[0] + u[1]) + (u[2] + u[3]), (v[0] + v[1]) + (v[2] + v[3]))
}

/// Spectral kernels for one [`KernelConfig`]. Immutable after construction and
/// safe to share between threads.
#[derive(Debug, Clone)]
pub struct TorusKernel {
    cfg: KernelConfig,
    /// Quarter-lattice weights, row `k₁` holds `k₂ = 0..=row_len[k₁]-1`.
    weights: Vec<f64>,
    weights_k2: Vec<f64>,
    row_start: Vec<usize>,
    row_len: Vec<usize>,
    sup_smoothed_green: f64,
}

impl TorusKernel {
    pub fn new(cfg: KernelConfig) -> Result<Self, KernelError> {
        cfg.validate()?;
        let k = cfg.k_max as i64;
        let mut weights = Vec::new();
        let mut weights_k2 = Vec::new();
        let mut row_start = Vec::with_capacity(cfg.k_max + 1);
        let mut row_len = Vec::with_capacity(cfg.k_max + 1);
        for k1 in 0..=k {
            row_start.push(weights.len());
            let mut len = 0;
            for k2 in 0..=k {
                let r2 = k1 * k1 + k2 * k2;
                if r2 > k * k {
                    break;
                }
                let w = if r2 == 0 {
                    0.0
                } else {
                    let mult = (if k1 > 0 { 2.0 } else { 1.0 }) * (if k2 > 0 { 2.0 } else { 1.0 });
                    -mult / (4.0 * PI * PI * r2 as f64)
                };
                weights.push(w);
                weights_k2.push(w * k2 as f64);
                len += 1;
            }
            row_len.push(len);
        }
        let mut kernel = Self {
            cfg,
            weights,
            weights_k2,
            row_start,
            row_len,
            sup_smoothed_green: 0.0,
        };
        kernel.sup_smoothed_green = kernel.locate_sup_green();
        Ok(kernel)
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    /// Truncated Green function and its gradient at separation `r = x - y`.
    /// Defined for every `r`, including `r = 0`.
    pub fn eval_separation(&self, r: Vec2) -> GreenValue {
        let (a, sgn_a) = (r.x.abs(), if r.x < 0.0 { -1.0 } else { 1.0 });
        let (b, sgn_b) = (r.y.abs(), if r.y < 0.0 { -1.0 } else { 1.0 });
        let km = self.cfg.k_max;
        PHASES.with(|cell| {
            let ph = &mut *cell.borrow_mut();
            fill_phases(a, km, &mut ph.ca, &mut ph.sa);
            fill_phases(b, km, &mut ph.cb, &mut ph.sb);
            let (mut g, mut ga, mut gb) = (0.0, 0.0, 0.0);
            for k1 in 0..=km {
                let start = self.row_start[k1];
                let len = self.row_len[k1];
                let w = &self.weights[start..start + len];
                let wk = &self.weights_k2[start..start + len];
                let cb = &ph.cb[..len];
                let sb = &ph.sb[..len];
                let (u, v) = row_dot(w, wk, cb, sb);
                g += ph.ca[k1] * u;
                ga += k1 as f64 * ph.sa[k1] * u;
                gb += ph.ca[k1] * v;
            }
            GreenValue {
                value: g,
                grad: Vec2::new(-TWO_PI * sgn_a * ga, -TWO_PI * sgn_b * gb),
            }
        })
    }

    /// Radial blend of the separation inside the smoothing ball:
    /// `m(d) = (δ² + d²) / 2δ`, so `m(δ) = δ`, `m'(δ) = 1`, `m(0) = δ/2`.
    #[inline]
    pub fn blend_radius(&self, d: f64) -> f64 {
        let delta = self.cfg.reg_delta;
        (delta * delta + d * d) / (2.0 * delta)
    }

    /// Blended Green function `G_δ(r) = G(r·m(|r|)/|r|)` with its exact gradient.
    /// Identical (same floating-point path) to [`Self::eval_separation`] for `|r| ≥ δ`.
    pub fn eval_smoothed_separation(&self, r: Vec2) -> GreenValue {
        let delta = self.cfg.reg_delta;
        let d = r.norm();
        if d >= delta {
            return self.eval_separation(r);
        }
        if d == 0.0 {
            let g = self.eval_separation(Vec2::new(0.5 * delta, 0.0));
            return GreenValue {
                value: g.value,
                grad: Vec2::ZERO,
            };
        }
        let m = self.blend_radius(d);
        let scale = m / d;
        let inner = self.eval_separation(scale * r);
        // Jacobian of r ↦ r m(d)/d is scale·I + (m'(d) - scale) r̂ r̂ᵀ
        let rhat = (1.0 / d) * r;
        let dm = d / delta;
        let radial = inner.grad.dot(rhat);
        let grad = scale * inner.grad + ((dm - scale) * radial) * rhat;
        GreenValue {
            value: inner.value,
            grad,
        }
    }

    /// Spectral Green function `G(x, y)`.
    pub fn green_function(&self, x: TorusPoint, y: TorusPoint) -> Result<f64, KernelError> {
        let r = x.separation(&y);
        if r == Vec2::ZERO {
            return Err(KernelError::SingularEvaluation);
        }
        Ok(self.eval_separation(r).value)
    }

    /// Biot–Savart kernel `K(x, y) = ∇⊥_x G(x, y)`.
    pub fn biot_savart(&self, x: TorusPoint, y: TorusPoint) -> Result<Vec2, KernelError> {
        let r = x.separation(&y);
        if r == Vec2::ZERO {
            return Err(KernelError::SingularEvaluation);
        }
        Ok(self.eval_separation(r).biot_savart())
    }

    pub fn smoothed_green(&self, x: TorusPoint, y: TorusPoint) -> f64 {
        self.eval_smoothed_separation(x.separation(&y)).value
    }

    pub fn smoothed_biot_savart(&self, x: TorusPoint, y: TorusPoint) -> Vec2 {
        self.eval_smoothed_separation(x.separation(&y)).biot_savart()
    }

    /// Velocity `Σ_i ξ_i K_δ(x, x_i)` induced at `x`; an atom sitting exactly at `x` is skipped.
    pub fn velocity_field(&self, omega: &VortexEnsemble, x: TorusPoint) -> Vec2 {
        let mut vel = Vec2::ZERO;
        for atom in omega.atoms() {
            if atom.position == x {
                continue;
            }
            vel += atom.intensity * self.smoothed_biot_savart(x, atom.position);
        }
        vel
    }

    /// `sup G_δ`, the offset that makes the Lyapunov summands nonnegative.
    pub fn sup_smoothed_green(&self) -> f64 {
        self.sup_smoothed_green
    }

    fn locate_sup_green(&self) -> f64 {
        // G is even in each coordinate and symmetric under swapping them,
        // so the triangle 0 ≤ b ≤ a ≤ 1/2 covers every value.
        let n = 96;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=n {
            let a = 0.5 * i as f64 / n as f64;
            for j in 0..=i {
                let b = 0.5 * j as f64 / n as f64;
                let g = self.eval_smoothed_separation(Vec2::new(a, b)).value;
                if g > best.0 {
                    best = (g, a, b);
                }
            }
        }
        // local pattern search around the best node
        let (mut g, mut a, mut b) = best;
        let mut step = 0.5 / n as f64;
        while step > 1e-9 {
            let mut moved = false;
            for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let (na, nb) = (a + da, b + db);
                let cand = self.eval_smoothed_separation(Vec2::new(na, nb)).value;
                if cand > g {
                    g = cand;
                    a = na;
                    b = nb;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        g
    }
}

/// `log|1 - e^{-2π s + 2πi b}|` evaluated without cancellation for small `s`, `b`.
fn log_abs_one_minus(s: f64, b: f64) -> f64 {
    let x = -TWO_PI * s;
    let half = (PI * b).sin();
    let sq = x.exp_m1().powi(2) + 4.0 * x.exp() * half * half;
    0.5 * sq.ln()
}

/// Zero-mean Green function as a renormalised sum over lattice images,
/// `G = -(a² - a + 1/6)/2 + (1/2π) Σ_{m=0}^{L} [log|1 - q^{a+m}| + log|1 - q^{m+1-a}|]`
/// with `q^s = e^{-2π s + 2πi b}` and `L = lattice_radius`. Truncating after `L`
/// image rows leaves an error of order `e^{-2πL}`; unlike the spectral sum it
/// resolves the logarithmic singularity at every scale.
pub fn lattice_green(x: TorusPoint, y: TorusPoint, cfg: &KernelConfig) -> Result<f64, KernelError> {
    let r = x.separation(&y);
    if r == Vec2::ZERO {
        return Err(KernelError::SingularEvaluation);
    }
    Ok(lattice_green_separation(r, cfg.lattice_radius))
}

pub(crate) fn lattice_green_separation(r: Vec2, images: usize) -> f64 {
    // the roles of the two axes are interchangeable; put the larger offset in `a`
    // so the image rows decay fastest
    let (mut a, mut b) = (r.x.abs(), r.y.abs());
    if b > a {
        std::mem::swap(&mut a, &mut b);
    }
    let a = minimal_image(a).abs();
    let mut sum = 0.0;
    for m in 0..=images {
        let m = m as f64;
        sum += log_abs_one_minus(a + m, b) + log_abs_one_minus(m + 1.0 - a, b);
    }
    -(a * a - a + 1.0 / 6.0) / 2.0 + sum / TWO_PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kernel(k: usize) -> TorusKernel {
        TorusKernel::new(KernelConfig {
            k_max: k,
            ..KernelConfig::default()
        })
        .unwrap()
    }

    /// Direct complex sum over the full disc, independent of the quarter-lattice fold.
    fn brute_green(r: Vec2, k_max: i64) -> (f64, Vec2) {
        let (mut g, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for k1 in -k_max..=k_max {
            for k2 in -k_max..=k_max {
                let r2 = k1 * k1 + k2 * k2;
                if r2 == 0 || r2 > k_max * k_max {
                    continue;
                }
                let phase = TWO_PI * (k1 as f64 * r.x + k2 as f64 * r.y);
                let w = -1.0 / (4.0 * PI * PI * r2 as f64);
                g += w * phase.cos();
                gx += -w * TWO_PI * k1 as f64 * phase.sin();
                gy += -w * TWO_PI * k2 as f64 * phase.sin();
            }
        }
        (g, Vec2::new(gx, gy))
    }

    #[test]
    fn quarter_fold_matches_full_disc_sum() {
        let kern = kernel(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = TorusPoint::random(&mut rng);
            let y = TorusPoint::random(&mut rng);
            let r = x.separation(&y);
            let v = kern.eval_separation(r);
            let (g, grad) = brute_green(r, 16);
            assert!((v.value - g).abs() < 1e-12, "{} vs {}", v.value, g);
            assert!((v.grad - grad).norm() < 1e-10);
        }
    }

    #[test]
    fn coincident_points_are_singular() {
        let kern = kernel(8);
        let x = TorusPoint::new(0.2, 0.4);
        assert_eq!(kern.green_function(x, x), Err(KernelError::SingularEvaluation));
        assert_eq!(kern.biot_savart(x, x), Err(KernelError::SingularEvaluation));
        assert_eq!(kern.smoothed_biot_savart(x, x), Vec2::ZERO);
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig::new(4, 1e-3, 6).is_err());
        assert!(KernelConfig::new(16, 0.6, 6).is_err());
        assert!(KernelConfig::new(16, 0.0, 6).is_err());
        assert!(KernelConfig::new(16, 1e-3, 6).is_ok());
    }

    #[test]
    fn blend_radius_is_c1_at_delta() {
        let kern = kernel(8);
        let delta = kern.config().reg_delta;
        assert!((kern.blend_radius(delta) - delta).abs() < 1e-18);
        assert!((kern.blend_radius(0.0) - 0.5 * delta).abs() < 1e-18);
        let h = 1e-9 * delta;
        let slope = (kern.blend_radius(delta) - kern.blend_radius(delta - h)) / h;
        assert!((slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smoothed_equals_unsmoothed_outside_ball() {
        let kern = kernel(32);
        let delta = kern.config().reg_delta;
        let x = TorusPoint::new(0.3, 0.3);
        let y = x.shifted(Vec2::new(2.0 * delta, 0.0));
        assert_eq!(kern.smoothed_green(x, y), kern.green_function(x, y).unwrap());
        assert_eq!(kern.smoothed_biot_savart(x, y), kern.biot_savart(x, y).unwrap());
    }

    #[test]
    fn lattice_green_has_zero_mean() {
        let cfg = KernelConfig::default();
        let n = 128;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                // cell-centred grid avoids the singular node
                let r = Vec2::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                sum += lattice_green_separation(r, cfg.lattice_radius);
            }
        }
        assert!((sum / (n * n) as f64).abs() < 1e-4);
    }

    #[test]
    fn sup_offset_dominates_grid() {
        let kern = kernel(16);
        let sup = kern.sup_smoothed_green();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let x = TorusPoint::random(&mut rng);
            let y = TorusPoint::random(&mut rng);
            assert!(kern.smoothed_green(x, y) <= sup + 1e-14);
        }
    }
}
