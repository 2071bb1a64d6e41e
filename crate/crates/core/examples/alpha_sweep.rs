//! Attack accuracy, density and coverage of exploit samples as the
//! diversity factor grows.

use latent_inversion::harness::{alpha_sweep_csv, Experiment, ExperimentConfig};

fn main() -> latent_inversion::Result<()> {
    let mut config = ExperimentConfig::default();
    config.max_episodes = 300;
    config.target_classes = vec![0];
    config.agent.hidden_sizes = vec![32, 32];
    config.samples_per_class = 300;
    let rows = Experiment::from_config(config)?.sweep_alpha(&[0.0, 0.5, 0.9])?;
    print!("{}", alpha_sweep_csv(&rows));
    Ok(())
}
