//! Linear part only: Poisson and Gaussian Ornstein–Uhlenbeck paths.

use stochastic_vortices::random::{
    characteristic_functional_xi, ou_gaussian_trajectory, ou_poisson_trajectory, sample_forcing, sample_white_noise,
    sample_xi, stream_rng, tags, LawParams,
};
use stochastic_vortices::spectral::{sobolev_norm_sq, TestFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = LawParams::new(5.0, 1.0, 1.0, 1)?;
    let f = TestFunction::cos_mode((0, 1));
    let times = [0.25, 0.5, 1.0];
    let n = 4000;
    let mut acc = [0.0; 3];
    for i in 0..n {
        let init = sample_xi(&params, &mut stream_rng(2, tags::XI, i));
        let forcing = sample_forcing(&params, 1.0, &mut stream_rng(2, tags::FORCING, i));
        for (a, w) in acc.iter_mut().zip(ou_poisson_trajectory(&init, &forcing, params.theta, 1, &times)) {
            *a += f.pair(&w).cos() / n as f64;
        }
    }
    for (t, a) in times.iter().zip(acc) {
        let exact = characteristic_functional_xi(&|x| f.value(x), 1.0, &params.with_m(params.big_m + t))?;
        println!("t = {t}: E cos<f, w_t> = {a:.4}, closed form {:.4}", exact.value.re);
    }

    let mut rng = stream_rng(2, tags::OU, 0);
    let eta = sample_white_noise(8, &mut rng);
    let path = ou_gaussian_trajectory(&eta, params.lambda, params.theta, &times, &mut rng);
    for (t, w) in times.iter().zip(&path) {
        println!("Gaussian OU t = {t}: |w|^2 in H^-1.1 = {:.4}", sobolev_norm_sq(w, -1.1));
    }
    Ok(())
}
