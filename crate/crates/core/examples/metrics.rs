//! Feature-space metrics on two Gaussian clouds that drift apart.

use latent_inversion::metrics::{density_coverage, feat_dist, knn_dist, FeatureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cloud(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..4).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>())
        .collect()
}

fn main() -> latent_inversion::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let real = cloud(&mut rng, 200, 0.0);
    let target = FeatureSet::new(0, real.clone())?;
    println!("{:>5} {:>8} {:>8} {:>8} {:>8}", "shift", "knn", "feat", "density", "coverage");
    for shift in [0.0, 0.5, 1.0, 2.0] {
        let fake = cloud(&mut rng, 200, shift);
        let (density, coverage) = density_coverage(&real, &fake, 5)?;
        println!(
            "{shift:>5} {:>8.4} {:>8.4} {density:>8.4} {coverage:>8.4}",
            knn_dist(&fake, &target)?,
            feat_dist(&fake, &target)?
        );
    }
    Ok(())
}
