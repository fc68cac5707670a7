//! Co-rotating pair of equal vortices without damping or forcing.

use stochastic_vortices::kernels::{KernelConfig, TorusKernel};
use stochastic_vortices::verify::{two_vortex_trace, TwoVortexOrbit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kernel = TorusKernel::new(KernelConfig::default())?;
    let plan = TwoVortexOrbit::default();
    let trace = two_vortex_trace(&kernel, &plan, 1e-10, 20)?;
    for i in 0..trace.times.len() {
        println!(
            "t = {:.2}  d = {:.8}  angle = {:>9.4}  kernel rate = {:.5}",
            trace.times[i], trace.separation[i], trace.angle[i], trace.kernel_rate[i]
        );
    }
    Ok(())
}
