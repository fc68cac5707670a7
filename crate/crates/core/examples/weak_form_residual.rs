//! Weak-form residuals along a few simulated paths.

use stochastic_vortices::kernels::KernelConfig;
use stochastic_vortices::verify::{test_weak_form_residual, VerifyContext, WeakFormResidual};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ctx = VerifyContext::new(KernelConfig::default(), 16, 13)?;
    let plan = WeakFormResidual {
        n_paths: 4,
        ..WeakFormResidual::default()
    };
    for r in test_weak_form_residual(&ctx, &plan) {
        println!("{} {:<45} {:.3} | {}", if r.pass { "ok  " } else { "FAIL" }, r.name, r.point_estimate, r.details);
    }
    Ok(())
}
