//! Compound Poisson forcing and the initial law Ξ_M.

use stochastic_vortices::random::{realized_quadratic_variation, sample_forcing, sample_xi, stream_rng, tags, LawParams};
use stochastic_vortices::spectral::TestFunction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = LawParams::new(10.0, 1.0, 2.0, 4)?;
    let f = TestFunction::cos_mode((1, 0));
    let stream = sample_forcing(&params, 1.0, &mut stream_rng(1, tags::FORCING, 0));
    println!("{} jumps on [0, 1] at rate N lambda = {}", stream.len(), params.rate());
    for e in stream.events().iter().take(5) {
        println!("  t = {:.4}  sign {:+}  at ({:.3}, {:.3})", e.birth_time, e.sign(), e.position.u(), e.position.v());
    }
    println!(
        "realized quadratic variation of <f, Sigma>: {:.4} (mean lambda t |f|^2 = {})",
        realized_quadratic_variation(&stream, &|x| f.value(x), params.n_scaling),
        params.lambda * f.l2_norm_sq()
    );
    let xi = sample_xi(&params, &mut stream_rng(1, tags::XI, 0));
    println!("Xi_M draw: {} atoms, total mass {:.4}, <f, Xi> = {:.4}", xi.len(), xi.total_mass(), f.pair(&xi));
    Ok(())
}
