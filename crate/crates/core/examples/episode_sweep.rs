//! Exploit accuracy measured at increasing episode counts of one run.

use latent_inversion::harness::{episode_sweep_csv, Experiment, ExperimentConfig};

fn main() -> latent_inversion::Result<()> {
    let mut config = ExperimentConfig::default();
    config.target_classes = vec![6];
    config.agent.hidden_sizes = vec![32, 32];
    config.samples_per_class = 200;
    let rows = Experiment::from_config(config)?.sweep_episodes(&[0, 100, 300, 600])?;
    print!("{}", episode_sweep_csv(&rows));
    Ok(())
}
