//! Radial sweep of the periodic Biot–Savart kernel against the exact image sum.

use stochastic_vortices::kernels::{lattice_green, KernelConfig, TorusKernel};
use stochastic_vortices::torus::{TorusPoint, Vec2};
use stochastic_vortices::verify::kernel_sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = KernelConfig::default();
    let kernel = TorusKernel::new(cfg)?;
    let y = TorusPoint::new(0.5, 0.5);
    println!("{:>10} {:>12} {:>12} {:>12} {:>10}", "d", "|K|", "d|K|", "G - G_exact", "fd_err");
    for row in kernel_sweep(&kernel, 13, 1e-5) {
        let x = y.shifted(row.d * Vec2::new(0.8, 0.6));
        let gap = kernel.green_function(x, y)? - lattice_green(x, y, &cfg)?;
        println!(
            "{:>10.2e} {:>12.5e} {:>12.5e} {:>12.3e} {:>10.2e}",
            row.d, row.k_norm, row.d_k, gap, row.fd_error
        );
    }
    Ok(())
}
