//! Experiment orchestration: configuration, per-class attack runs, the
//! random-search control, the α and episode sweeps, checkpoints and reports.

mod config;
mod report;
mod run;

pub use config::{ExperimentConfig, OracleSpec, Seeds, SweepSpec};
pub use report::{
    alpha_sweep_csv, emit_reports, episode_sweep_csv, episodes_csv, metrics_csv, parse_episodes_csv, read_reports,
    ALPHA_SWEEP_FILE, CONFIG_FILE, EPISODES_FILE, EPISODES_HEADER, EPISODE_SWEEP_FILE, METRICS_FILE, METRICS_HEADER,
    SUMMARY_FILE,
};
pub use run::{
    derive_seed, AlphaRow, BestLatent, ClassFailure, ClassResult, ClassState, EpisodeLog, EpisodeRow, Experiment,
    RunSummary,
};
