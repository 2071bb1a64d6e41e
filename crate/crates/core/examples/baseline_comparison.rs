//! Trained agents against random search from the latent prior at the same
//! per-class query budget.

use latent_inversion::agents::Algorithm;
use latent_inversion::harness::{Experiment, ExperimentConfig};

fn main() -> latent_inversion::Result<()> {
    let mut config = ExperimentConfig::default();
    config.max_episodes = 400;
    config.target_classes = vec![4, 8];
    config.agent.hidden_sizes = vec![32, 32];
    config.checkpoint_interval = 0;
    for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
        config.algorithm = alg;
        let summary = Experiment::from_config(config.clone())?.run_attack()?;
        println!(
            "{:>6}: mean best confidence {:.6}, attack accuracy {:.3}, {} queries",
            alg.to_string(),
            summary.mean_best_confidence().unwrap_or(f64::NAN),
            summary.metrics.as_ref().map_or(f64::NAN, |m| m.attack_accuracy),
            summary.queries.total
        );
    }
    let experiment = Experiment::from_config(config)?;
    let random = experiment.random_search_baseline(experiment.attack_query_budget())?;
    println!(
        "random: mean best confidence {:.6}, attack accuracy {:.3}, {} queries",
        random.mean_best_confidence().unwrap_or(f64::NAN),
        random.metrics.as_ref().map_or(f64::NAN, |m| m.attack_accuracy),
        random.queries.total
    );
    Ok(())
}
