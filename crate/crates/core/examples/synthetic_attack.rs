//! A short SAC attack on three classes of the default synthetic world,
//! written to a report directory and read back.

use latent_inversion::harness::{emit_reports, read_reports, Experiment, ExperimentConfig};

fn main() -> latent_inversion::Result<()> {
    let mut config = ExperimentConfig::default();
    config.max_episodes = 600;
    config.target_classes = vec![0, 1, 2];
    config.agent.hidden_sizes = vec![32, 32];
    config.checkpoint_interval = 0;
    let experiment = Experiment::from_config(config)?;
    let summary = experiment.run_attack()?;

    for class in &summary.classes {
        let best = class.best.as_ref().expect("at least one episode");
        let acc = class.metrics.as_ref().map_or(f64::NAN, |m| m.attack_accuracy);
        println!(
            "class {}: best confidence {:.6} at episode {}, evaluation accuracy {acc}, {} queries",
            class.class, best.confidence, best.episode, class.queries.total
        );
    }

    let dir = std::env::temp_dir().join("latent-inversion-example");
    emit_reports(&summary, &dir)?;
    let back = read_reports(&dir)?;
    println!("{} episode rows written to {}", back.episodes.len(), dir.display());
    Ok(())
}
