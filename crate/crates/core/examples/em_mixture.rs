//! Fits a two-component diagonal GMM to a known mixture.

use graphceps::gmm::{self, GmmConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> graphceps::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((4000, 2), |(i, j)| {
        let centre = if i % 2 == 0 { -3.0 } else { 4.0 };
        centre * (j + 1) as f64 + z.sample(&mut rng)
    });
    let fit = gmm::fit_diag_gmm(&x, &GmmConfig { components: 2, ..GmmConfig::default() })?;
    println!("converged {} after {} iterations", fit.converged, fit.log_likelihood.len());
    println!("weights   {:.3}", fit.model.weights);
    println!("means\n{:.3}", fit.model.means);
    println!("variances\n{:.3}", fit.model.variances);
    Ok(())
}
