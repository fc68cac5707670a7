//! Flat TOML run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{CollisionPolicy, IntegratorConfig};
use crate::kernels::{KernelConfig, MAX_K};
use crate::random::LawParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

impl ConfigError {
    /// The offending key, when the error is attributable to one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            ConfigError::Parse(_) => None,
        }
    }
}

/// Age range `M`: a nonnegative number or the token `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BigMRepr", into = "BigMRepr")]
pub struct BigM(pub f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BigMRepr {
    Number(f64),
    Token(String),
}

impl TryFrom<BigMRepr> for BigM {
    type Error = String;

    fn try_from(r: BigMRepr) -> Result<Self, String> {
        match r {
            BigMRepr::Number(v) => Ok(BigM(v)),
            BigMRepr::Token(s) if s == "inf" => Ok(BigM(f64::INFINITY)),
            BigMRepr::Token(s) => Err(format!("big_m: expected a number or \"inf\", got {s:?}")),
        }
    }
}

impl From<BigM> for BigMRepr {
    fn from(m: BigM) -> Self {
        if m.0.is_infinite() {
            BigMRepr::Token("inf".into())
        } else {
            BigMRepr::Number(m.0)
        }
    }
}

/// Every key is optional; see [`RunConfig::default`] for the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lambda: f64,
    pub theta: f64,
    pub big_m: BigM,
    pub n_scaling: u32,
    pub t_end: f64,
    /// Spectral cutoff of the kernel for `simulate` and `kernel-check`, and of Sobolev norms.
    pub k_max: usize,
    /// Kernel cutoff for the Monte Carlo trajectories of `verify`.
    pub mc_k_max: usize,
    pub reg_delta: f64,
    pub lattice_radius: usize,
    pub sobolev_delta: f64,
    /// Defaults to 1e-8 for `simulate` and 1e-6 for `verify`.
    pub rel_tol: Option<f64>,
    /// Defaults to 1e-10 for `simulate` and 1e-9 for `verify`.
    pub abs_tol: Option<f64>,
    /// Defaults to `0.1/(N λ)`.
    pub max_step: Option<f64>,
    pub seed: u64,
    pub n_samples: usize,
    /// Trajectories written by `simulate`.
    pub n_paths: usize,
    /// Defaults to `[t_end]`.
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub nonlinear: bool,
    pub smoothing: bool,
    pub collision_policy: CollisionPolicy,
    /// Multiplies the sample counts of every `verify` check.
    pub sample_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            theta: 1.0,
            big_m: BigM(1.0),
            n_scaling: 1,
            t_end: 1.0,
            k_max: 64,
            mc_k_max: 16,
            reg_delta: 1e-3,
            lattice_radius: 6,
            sobolev_delta: 0.1,
            rel_tol: None,
            abs_tol: None,
            max_step: None,
            seed: 0,
            n_samples: 1000,
            n_paths: 1,
            snapshot_times: Vec::new(),
            output_dir: PathBuf::from("vortex-out"),
            nonlinear: true,
            smoothing: true,
            collision_policy: CollisionPolicy::Abort,
            sample_scale: 1.0,
        }
    }
}

/// Key reference printed by `--help`.
pub const CONFIG_HELP: &str = "\
Config keys (flat TOML, all optional):
  lambda = 10.0            forcing intensity, > 0
  theta = 1.0              damping rate, > 0
  big_m = 1.0              age range of the initial law, >= 0 or \"inf\"
  n_scaling = 1            scaling N, >= 1
  t_end = 1.0              horizon, > 0
  k_max = 64               kernel cutoff (simulate, kernel-check) and Sobolev cutoff
  mc_k_max = 16            kernel cutoff for verify trajectories
  reg_delta = 1e-3         smoothing radius
  lattice_radius = 6       image rows of the lattice reference Green function
  sobolev_delta = 0.1      Sobolev margin, norms in H^(-1-delta)
  rel_tol, abs_tol         integrator tolerances (simulate 1e-8/1e-10, verify 1e-6/1e-9)
  max_step                 step cap, default 0.1/(N lambda)
  seed = 0                 master seed
  n_samples = 1000         draws written by sample
  n_paths = 1              trajectories written by simulate
  snapshot_times = []      sorted within [0, t_end], default [t_end]
  output_dir = \"vortex-out\"
  nonlinear = true         false freezes positions (linear part only)
  smoothing = true         use the smoothed kernel
  collision_policy = \"abort\"  or \"continue\"
  sample_scale = 1.0       multiplies the sample counts of verify checks";

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, reason: impl FnOnce() -> String) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid { key, reason: reason() })
            }
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        check(positive(self.lambda), "lambda", || format!("must be positive, got {}", self.lambda))?;
        check(positive(self.theta), "theta", || format!("must be positive, got {}", self.theta))?;
        check(self.big_m.0 >= 0.0, "big_m", || format!("must be >= 0 or \"inf\", got {}", self.big_m.0))?;
        check(self.n_scaling >= 1, "n_scaling", || "must be at least 1".into())?;
        check(positive(self.t_end), "t_end", || format!("must be positive, got {}", self.t_end))?;
        for (key, k) in [("k_max", self.k_max), ("mc_k_max", self.mc_k_max)] {
            check((8..=MAX_K).contains(&k), key, || format!("must lie in [8, {MAX_K}], got {k}"))?;
        }
        check(self.reg_delta > 0.0 && self.reg_delta < 0.5, "reg_delta", || {
            format!("must lie in (0, 0.5), got {}", self.reg_delta)
        })?;
        check(self.lattice_radius >= 1, "lattice_radius", || "must be at least 1".into())?;
        check(positive(self.sobolev_delta), "sobolev_delta", || {
            format!("must be positive, got {}", self.sobolev_delta)
        })?;
        for (key, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol), ("max_step", self.max_step)] {
            if let Some(v) = v {
                check(positive(v), key, || format!("must be positive, got {v}"))?;
            }
        }
        check(self.n_samples >= 1, "n_samples", || "must be at least 1".into())?;
        check(self.n_paths >= 1, "n_paths", || "must be at least 1".into())?;
        let sorted = self.snapshot_times.windows(2).all(|w| w[0] < w[1]);
        let inside = self.snapshot_times.iter().all(|t| (0.0..=self.t_end).contains(t));
        check(sorted && inside, "snapshot_times", || {
            format!("must be strictly increasing within [0, {}]", self.t_end)
        })?;
        check(positive(self.sample_scale), "sample_scale", || {
            format!("must be positive, got {}", self.sample_scale)
        })?;
        Ok(())
    }

    pub fn law_params(&self) -> LawParams {
        LawParams {
            lambda: self.lambda,
            theta: self.theta,
            big_m: self.big_m.0,
            n_scaling: self.n_scaling,
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            k_max: self.k_max,
            reg_delta: self.reg_delta,
            lattice_radius: self.lattice_radius,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let mut icfg = IntegratorConfig::for_params(&self.law_params(), self.reg_delta);
        icfg.rel_tol = self.rel_tol.unwrap_or(icfg.rel_tol);
        icfg.abs_tol = self.abs_tol.unwrap_or(icfg.abs_tol);
        icfg.max_step = self.max_step.unwrap_or(icfg.max_step);
        icfg.nonlinear = self.nonlinear;
        icfg.smoothing = self.smoothing;
        icfg.collision_policy = self.collision_policy;
        icfg
    }

    pub fn snapshot_grid(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.t_end]
        } else {
            self.snapshot_times.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, without `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("lambda = 2.0\ntheta = 0.5\nt_end = 3.0\nseed = 42\n").unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.k_max, 64);
        assert_eq!(cfg.snapshot_grid(), vec![3.0]);
    }

    #[test]
    fn infinite_age_range() {
        let cfg = parse_config("big_m = \"inf\"").unwrap();
        assert!(cfg.law_params().big_m.is_infinite());
        assert!(parse_config("big_m = \"infinity\"").is_err());
        let round = parse_config(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse_config("theta = -1.0").unwrap_err();
        assert_eq!(e.key(), Some("theta"));
        assert!(e.to_string().contains("theta"));
        let e = parse_config("snapshot_times = [0.5, 0.2]").unwrap_err();
        assert_eq!(e.key(), Some("snapshot_times"));
        let e = parse_config("colour = 3").unwrap_err();
        assert!(e.to_string().contains("colour"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }
}
