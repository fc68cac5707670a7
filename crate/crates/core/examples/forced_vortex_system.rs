//! One forced, damped trajectory from the invariant-law initial condition.

use stochastic_vortices::dynamics::{IntegratorConfig, Simulator};
use stochastic_vortices::kernels::{KernelConfig, TorusKernel};
use stochastic_vortices::random::{sample_forcing, sample_xi, stream_rng, tags, LawParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = LawParams::new(10.0, 1.0, 1.0, 1)?;
    let kernel = TorusKernel::new(KernelConfig::new(32, 1e-3, 6)?)?;
    let sim = Simulator::new(&kernel, params, IntegratorConfig::for_params(&params, 1e-3))?;
    let initial = sample_xi(&params, &mut stream_rng(5, tags::XI, 0));
    let forcing = sample_forcing(&params, 2.0, &mut stream_rng(5, tags::FORCING, 0));
    let snaps: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let out = sim.simulate(&initial, &forcing, &snaps, &[])?;
    for d in &out.diagnostics {
        println!(
            "t = {:.2}  vortices {:>3}  min distance {:.4}  L = {:.4}  steps {}",
            d.time, d.n_vortices, d.min_pair_distance, d.lyapunov, d.steps
        );
    }
    println!("{:?}", out.stats);
    Ok(())
}
