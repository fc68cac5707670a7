//! Small statistics toolkit for the Monte Carlo checks.

use serde::{Deserialize, Serialize};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_stderr(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanEstimate {
            mean,
            stderr: f64::INFINITY,
            n,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Difference of two independent sample means.
pub fn two_sample_difference(a: &[f64], b: &[f64]) -> MeanEstimate {
    let (ea, eb) = (mean_stderr(a), mean_stderr(b));
    MeanEstimate {
        mean: ea.mean - eb.mean,
        stderr: ea.stderr.hypot(eb.stderr),
        n: ea.n.min(eb.n),
    }
}

/// Mean of paired differences `a_i - b_i`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> MeanEstimate {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_stderr(&d)
}

/// Kolmogorov distribution tail `P(K > x) = 2 Σ (-1)^{k-1} e^{-2k²x²}`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    // the series converges slowly here and the tail is 1 to double precision
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against the uniform law on `[0, 1)`.
/// Returns the statistic `D` and the asymptotic p-value with Stephens' small-sample
/// correction.
pub fn ks_uniform(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let lo = x - i as f64 / n;
        let hi = (i + 1) as f64 / n - x;
        d = d.max(lo).max(hi);
    }
    let sn = n.sqrt();
    (d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d))
}

/// Weighted least-squares line `y = a + b x`; returns `(a, b, stderr of b)`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64, f64) {
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let b = (sw * sxy - sx * sy) / det;
    let a = (sy - b * sx) / sw;
    (a, b, (sw / det).sqrt())
}

/// Fit `log m = a + s log x` with log-scale errors `σ/m`; returns `(s, stderr)`.
pub fn log_log_slope(x: &[f64], m: &[f64], se: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let ls: Vec<f64> = m.iter().zip(se).map(|(m, s)| s / m).collect();
    let (_, b, sb) = weighted_line_fit(&lx, &ly, &ls);
    (b, sb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let e = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_tail_reference_points() {
        // classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn ks_rejects_skewed_sample() {
        let skewed: Vec<f64> = (0..1000).map(|i| (i as f64 / 1000.0).powi(2)).collect();
        assert!(ks_uniform(&skewed).1 < 1e-6);
        let even: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&even).1 > 0.99);
    }

    #[test]
    fn exact_line_recovered() {
        let x = [1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 7.0];
        let (a, b, _) = weighted_line_fit(&x, &y, &[1.0, 1.0, 1.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}
