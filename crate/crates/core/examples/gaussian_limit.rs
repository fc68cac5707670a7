//! Approach to the Gaussian law as the scaling N grows.

use stochastic_vortices::kernels::KernelConfig;
use stochastic_vortices::verify::{test_gaussian_limit, GaussianLimit, VerifyContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ctx = VerifyContext::new(KernelConfig::default(), 16, 12)?;
    ctx.sample_scale = 0.2;
    let plan = GaussianLimit {
        ns: vec![1, 4, 16],
        ..GaussianLimit::default()
    };
    for r in test_gaussian_limit(&ctx, &plan) {
        println!("{} {:<36} {:+.4} ± {:.4} (ref {:+.4})", if r.pass { "ok  " } else { "FAIL" }, r.name, r.point_estimate, r.stderr, r.reference_value);
    }
    Ok(())
}
