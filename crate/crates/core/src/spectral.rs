//! Truncated Fourier representation of distributions on the torus,
//! negative-order Sobolev norms, Wick double couplings and the `H_f` kernel.
//!
//! Coefficients are stored on the half lattice `k₁ > 0` or `k₁ = 0, k₂ > 0`;
//! the other half follows from `c(-k) = conj(c(k))`. The zero mode is never stored.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::VortexEnsemble;
use crate::kernels::{KernelError, TorusKernel};
use crate::torus::{TorusPoint, Vec2};

const TWO_PI: f64 = 2.0 * PI;

/// Half-lattice modes `0 < |k| ≤ k_max`, in a fixed order.
pub fn half_lattice(k_max: usize) -> Vec<(i32, i32)> {
    let k = k_max as i32;
    let mut modes = Vec::new();
    for k1 in 0..=k {
        for k2 in -k..=k {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            if k1 * k1 + k2 * k2 <= k * k {
                modes.push((k1, k2));
            }
        }
    }
    modes
}

#[inline]
fn weight(k: (i32, i32), alpha: f64) -> f64 {
    (1.0 + f64::from(k.0 * k.0 + k.1 * k.1)).powf(alpha)
}

/// Fourier coefficients `c(k) = ⟨u, e^{2πik·x}⟩` of a real distribution, `0 < |k| ≤ k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    k_max: usize,
    modes: Vec<(i32, i32)>,
    coeffs: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn zeros(k_max: usize) -> Self {
        let modes = half_lattice(k_max);
        let coeffs = vec![Complex64::new(0.0, 0.0); modes.len()];
        Self {
            k_max,
            modes,
            coeffs,
        }
    }

    /// Builds from half-lattice values in [`half_lattice`] order.
    pub fn from_half_lattice(k_max: usize, coeffs: Vec<Complex64>) -> Self {
        let modes = half_lattice(k_max);
        assert_eq!(modes.len(), coeffs.len(), "coefficient count mismatch");
        Self {
            k_max,
            modes,
            coeffs,
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn modes(&self) -> &[(i32, i32)] {
        &self.modes
    }

    pub fn half_values(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn index(&self, k: (i32, i32)) -> Option<usize> {
        self.modes.binary_search(&k).ok()
    }

    /// Coefficient at any lattice point; zero outside the band and at `k = 0`.
    pub fn coeff(&self, k: (i32, i32)) -> Complex64 {
        if let Some(i) = self.index(k) {
            return self.coeffs[i];
        }
        if let Some(i) = self.index((-k.0, -k.1)) {
            return self.coeffs[i].conj();
        }
        Complex64::new(0.0, 0.0)
    }

    /// Real duality `⟨a, b⟩ = Σ_k a(k) conj(b(k))` over the full band.
    pub fn pairing(&self, other: &FourierCoefficients) -> f64 {
        assert_eq!(self.k_max, other.k_max, "pairing across different cutoffs");
        2.0 * self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum::<f64>()
    }

    pub fn sub(&self, other: &FourierCoefficients) -> FourierCoefficients {
        assert_eq!(self.k_max, other.k_max);
        FourierCoefficients {
            k_max: self.k_max,
            modes: self.modes.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }
}

/// `c(k) = Σ_i ξ_i e^{-2πik·x_i}` on the half lattice.
pub fn fourier_of_ensemble(omega: &VortexEnsemble, k_max: usize) -> FourierCoefficients {
    let mut out = FourierCoefficients::zeros(k_max);
    let k = k_max as i32;
    let width = (2 * k + 1) as usize;
    let mut eu = vec![Complex64::new(0.0, 0.0); k_max + 1];
    let mut ev = vec![Complex64::new(0.0, 0.0); width];
    for atom in omega.atoms() {
        let (u, v) = (atom.position.u(), atom.position.v());
        for (k1, e) in eu.iter_mut().enumerate() {
            *e = Complex64::from_polar(1.0, -TWO_PI * k1 as f64 * u);
        }
        for (j, e) in ev.iter_mut().enumerate() {
            let k2 = j as i32 - k;
            *e = Complex64::from_polar(1.0, -TWO_PI * f64::from(k2) * v);
        }
        for (c, &(k1, k2)) in out.coeffs.iter_mut().zip(&out.modes) {
            *c += atom.intensity * eu[k1 as usize] * ev[(k2 + k) as usize];
        }
    }
    out
}

/// Truncated `‖u‖²_{H^α} = Σ_{0<|k|≤k_max} (1+|k|²)^α |c(k)|²`.
pub fn sobolev_norm_sq(c: &FourierCoefficients, alpha: f64) -> f64 {
    2.0 * c
        .modes
        .iter()
        .zip(&c.coeffs)
        .map(|(&k, z)| weight(k, alpha) * z.norm_sqr())
        .sum::<f64>()
}

/// `‖δ_x‖²_{H^α}` at the cutoff, `Σ_{0<|k|≤k_max} (1+|k|²)^α`.
pub fn delta_norm_sq(alpha: f64, k_max: usize) -> f64 {
    2.0 * half_lattice(k_max)
        .into_iter()
        .map(|k| weight(k, alpha))
        .sum::<f64>()
}

/// `∫_{|k|>k_max} (1+|k|²)^α dk = π (1+k_max²)^{α+1} / (-α-1)`, for `α < -1`.
pub fn delta_tail_bound(alpha: f64, k_max: usize) -> f64 {
    assert!(alpha < -1.0, "tail integral diverges for alpha >= -1");
    let k2 = (k_max * k_max) as f64;
    PI * (1.0 + k2).powf(alpha + 1.0) / (-alpha - 1.0)
}

/// Translation-invariant kernel with Fourier multiplier `(1+|k|²)^α`,
/// `g(x, y) = Σ_{0<|k|≤k_max} (1+|k|²)^α e^{2πik·(x-y)}`.
pub fn sobolev_kernel(alpha: f64, k_max: usize) -> impl Fn(TorusPoint, TorusPoint) -> f64 {
    let modes: Vec<((i32, i32), f64)> = half_lattice(k_max)
        .into_iter()
        .map(|k| (k, 2.0 * weight(k, alpha)))
        .collect();
    move |x, y| {
        let r = x.separation(&y);
        modes
            .iter()
            .map(|&((k1, k2), w)| w * (TWO_PI * (f64::from(k1) * r.x + f64::from(k2) * r.y)).cos())
            .sum()
    }
}

/// `Σ_{i≠j} ξ_i ξ_j h(x_i, x_j)`; `h` is symmetric and never called on the diagonal.
pub fn double_coupling_offdiag<H>(h: H, omega: &VortexEnsemble) -> f64
where
    H: Fn(TorusPoint, TorusPoint) -> f64,
{
    let atoms = omega.atoms();
    let mut sum = 0.0;
    for i in 0..atoms.len() {
        for j in (i + 1)..atoms.len() {
            sum += atoms[i].intensity * atoms[j].intensity * h(atoms[i].position, atoms[j].position);
        }
    }
    2.0 * sum
}

/// Off-diagonal coupling plus the diagonal `Σ_i ξ_i² h(x_i, x_i)`.
pub fn double_coupling_full<H>(h: H, omega: &VortexEnsemble) -> f64
where
    H: Fn(TorusPoint, TorusPoint) -> f64,
{
    let diag: f64 = omega
        .atoms()
        .iter()
        .map(|a| a.intensity * a.intensity * h(a.position, a.position))
        .sum();
    double_coupling_offdiag(&h, omega) + diag
}

/// One real Fourier term `c·cos(2πk·x) + s·sin(2πk·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: (i32, i32),
    pub cos: f64,
    pub sin: f64,
}

/// A real trigonometric polynomial without constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub name: String,
    terms: Vec<TrigTerm>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, terms: Vec<TrigTerm>) -> Self {
        assert!(
            terms.iter().all(|t| t.k != (0, 0)),
            "test functions carry no constant mode"
        );
        Self {
            name: name.into(),
            terms,
        }
    }

    pub fn cos_mode(k: (i32, i32)) -> Self {
        Self::new(
            format!("cos({},{})", k.0, k.1),
            vec![TrigTerm { k, cos: 1.0, sin: 0.0 }],
        )
    }

    pub fn sin_mode(k: (i32, i32)) -> Self {
        Self::new(
            format!("sin({},{})", k.0, k.1),
            vec![TrigTerm { k, cos: 0.0, sin: 1.0 }],
        )
    }

    pub fn zero() -> Self {
        Self::new("zero", Vec::new())
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn max_mode(&self) -> usize {
        self.terms
            .iter()
            .map(|t| (f64::from(t.k.0 * t.k.0 + t.k.1 * t.k.1)).sqrt().ceil() as usize)
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn value(&self, x: TorusPoint) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let (s, c) = (TWO_PI * (f64::from(t.k.0) * x.u() + f64::from(t.k.1) * x.v())).sin_cos();
                t.cos * c + t.sin * s
            })
            .sum()
    }

    #[inline]
    pub fn gradient(&self, x: TorusPoint) -> Vec2 {
        let mut g = Vec2::ZERO;
        for t in &self.terms {
            let (s, c) = (TWO_PI * (f64::from(t.k.0) * x.u() + f64::from(t.k.1) * x.v())).sin_cos();
            let d = TWO_PI * (t.sin * c - t.cos * s);
            g += d * Vec2::new(f64::from(t.k.0), f64::from(t.k.1));
        }
        g
    }

    /// `‖f‖²_{L²}`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.fourier(self.max_mode().max(1)).pairing(&self.fourier(self.max_mode().max(1)))
    }

    /// `sup |f|` bounded by the sum of term amplitudes.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.hypot(t.sin)).sum()
    }

    /// Fourier coefficients `∫ f e^{-2πik·x} dx`, `(c - i s)/2` on the half lattice.
    pub fn fourier(&self, k_max: usize) -> FourierCoefficients {
        let mut out = FourierCoefficients::zeros(k_max);
        for t in &self.terms {
            let (k, c, s) = if t.k.0 > 0 || (t.k.0 == 0 && t.k.1 > 0) {
                (t.k, t.cos, t.sin)
            } else {
                // cos is even, sin is odd under k → -k
                ((-t.k.0, -t.k.1), t.cos, -t.sin)
            };
            if let Some(i) = out.index(k) {
                out.coeffs[i] += Complex64::new(0.5 * c, -0.5 * s);
            }
        }
        out
    }

    /// `⟨f, ω⟩ = Σ ξ_i f(x_i)`.
    pub fn pair(&self, omega: &VortexEnsemble) -> f64 {
        omega.pair_with(|x| self.value(x))
    }
}

/// Real and imaginary parts of `e_k` for `k ∈ {(1,0), (0,1), (1,1), (1,-1)}`:
/// eight functions, each of squared L² norm 1/2.
pub fn battery() -> Vec<TestFunction> {
    let ks = [(1, 0), (0, 1), (1, 1), (1, -1)];
    let mut out = Vec::with_capacity(8);
    for k in ks {
        out.push(TestFunction::cos_mode(k));
        out.push(TestFunction::sin_mode(k));
    }
    out
}

/// `H_f(x, y) = ½ K(x, y)·(∇f(x) - ∇f(y))`.
pub fn h_f_kernel(
    f: &TestFunction,
    x: TorusPoint,
    y: TorusPoint,
    kernel: &TorusKernel,
) -> Result<f64, KernelError> {
    let k = kernel.biot_savart(x, y)?;
    Ok(h_f_from_velocity(f, k, x, y))
}

/// `H_f` given an already evaluated kernel vector `K(x, y)`.
#[inline]
pub fn h_f_from_velocity(f: &TestFunction, k: Vec2, x: TorusPoint, y: TorusPoint) -> f64 {
    0.5 * k.dot(f.gradient(x) - f.gradient(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_lattice_counts() {
        // |k| = 1 has four points, two of them in the half plane
        assert_eq!(half_lattice(1), vec![(0, 1), (1, 0)]);
        assert_eq!(half_lattice(2).len(), 6);
    }

    #[test]
    fn coefficient_symmetry() {
        let f = TestFunction::new(
            "mix",
            vec![TrigTerm { k: (2, -1), cos: 0.3, sin: -1.2 }],
        );
        let c = f.fourier(3);
        assert_eq!(c.coeff((-2, 1)), c.coeff((2, -1)).conj());
        assert_eq!(c.coeff((0, 0)), Complex64::new(0.0, 0.0));
        assert_eq!(c.coeff((9, 9)), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn negative_mode_terms_fold_correctly() {
        let f = TestFunction::new("n", vec![TrigTerm { k: (-1, 0), cos: 0.0, sin: 1.0 }]);
        let g = TestFunction::new("p", vec![TrigTerm { k: (1, 0), cos: 0.0, sin: -1.0 }]);
        assert_eq!(f.fourier(2), g.fourier(2));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let f = TestFunction::new(
            "mix",
            vec![
                TrigTerm { k: (1, 2), cos: 0.7, sin: 0.2 },
                TrigTerm { k: (0, 1), cos: -0.1, sin: 1.0 },
            ],
        );
        let x = TorusPoint::new(0.31, 0.77);
        let h = 1e-6;
        let g = f.gradient(x);
        let fx = (f.value(x.shifted(Vec2::new(h, 0.0))) - f.value(x.shifted(Vec2::new(-h, 0.0)))) / (2.0 * h);
        let fy = (f.value(x.shifted(Vec2::new(0.0, h))) - f.value(x.shifted(Vec2::new(0.0, -h)))) / (2.0 * h);
        assert!((g.x - fx).abs() < 1e-6 && (g.y - fy).abs() < 1e-6);
    }

    #[test]
    fn battery_norms() {
        let b = battery();
        assert_eq!(b.len(), 8);
        for f in &b {
            assert!((f.l2_norm_sq() - 0.5).abs() < 1e-15);
        }
    }
}
