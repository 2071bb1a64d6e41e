//! One environment step against the synthetic oracle: transition, the three
//! reward terms and the query ledger.

use std::sync::Arc;

use latent_inversion::mdp::{env_step, init_state, EnvConfig};
use latent_inversion::oracles::{make_world, MeteredOracle, QueryLedger, QueryPurpose, SyntheticOracle, WhichClassifier, WorldParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> latent_inversion::Result<()> {
    let world = Arc::new(make_world(&WorldParams::default())?);
    let ledger = Arc::new(QueryLedger::default());
    let mut oracle = MeteredOracle::new(Box::new(SyntheticOracle::new(world, WhichClassifier::Target)), ledger.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for alpha in [0.0, 0.5, 0.9] {
        let config = EnvConfig { diversity_factor: alpha, target_class: 3, ..Default::default() };
        let s = init_state(config.latent_dim, &mut rng);
        let a = init_state(config.latent_dim, &mut rng);
        let out = env_step(&s, &a, &mut oracle, &config, 1, QueryPurpose::Training)?;
        println!(
            "alpha {alpha}: r1 {:.3} r2 {:.3} r3 {:.3} reward {:.3} done {} queries {}",
            out.r1, out.r2, out.r3, out.reward, out.done, out.queries_spent
        );
    }
    println!("ledger: {:?}", ledger.counts());
    Ok(())
}
