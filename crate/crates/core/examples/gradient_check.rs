//! Compares the analytic gradient of a small network against central
//! finite differences.

use latent_inversion::tensor::{Activation, Matrix, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> latent_inversion::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new(&[4, 8, 4], Activation::Tanh, &mut rng)?;
    let x = Matrix::from_vec(2, 4, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let upstream = Matrix::from_vec(2, 4, vec![1.0; 8])?;
    let loss = |m: &Mlp| -> f64 { m.predict(&x).map(|y| y.values().iter().sum()).unwrap_or(f64::NAN) };

    let trace = net.forward(&x)?;
    let (grads, _) = net.backward(&trace, &upstream)?;
    let h = 1e-6;
    println!("{:>5} {:>14} {:>14}", "param", "analytic", "numeric");
    for i in (0..net.param_count()).step_by(9) {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        println!("{i:>5} {:>14.8} {:>14.8}", grads.values[i], numeric);
    }
    Ok(())
}
