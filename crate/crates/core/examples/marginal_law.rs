//! Fixed-time marginal of the nonlinear system against the closed form for Ξ_{M+t}.

use stochastic_vortices::kernels::KernelConfig;
use stochastic_vortices::verify::{test_marginal_law, MarginalLaw, VerifyContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ctx = VerifyContext::new(KernelConfig::default(), 16, 11)?;
    ctx.sample_scale = 0.1;
    for r in test_marginal_law(&ctx, &MarginalLaw::default()) {
        println!("{} {:<40} {:.4} ± {:.4} vs {:.4}", if r.pass { "ok  " } else { "FAIL" }, r.name, r.point_estimate, r.stderr, r.reference_value);
    }
    Ok(())
}
