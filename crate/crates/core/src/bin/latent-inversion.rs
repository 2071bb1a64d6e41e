use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use latent_inversion::agents::Algorithm;
use latent_inversion::harness::{
    alpha_sweep_csv, emit_reports, episode_sweep_csv, read_reports, Experiment, ExperimentConfig, OracleSpec,
    RunSummary, ALPHA_SWEEP_FILE, EPISODE_SWEEP_FILE,
};
use latent_inversion::oracles::{make_world, serve, Greeting, OracleResponse, WhichClassifier, PROTOCOL_VERSION};
use latent_inversion::{Error, Result};

/// Query-only latent-space inversion with off-policy agents.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per target class and report its best reconstructions.
    Attack(Common),
    /// Random search from the latent prior at a fixed per-class query budget.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Queries per class; defaults to what `attack` would spend.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Attack accuracy, density and coverage across diversity factors.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated α values; defaults to `[sweep] alphas`.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Attack accuracy at increasing episode counts of one training run.
    SweepEpisodes {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending episode counts; defaults to `[sweep] checkpoints`.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
    },
    /// Re-read and validate a run directory, then print its metrics.
    Report {
        dir: PathBuf,
    },
    /// Serve a synthetic world over the line protocol on stdin/stdout.
    #[command(hide = true)]
    ServeSynth {
        #[command(flatten)]
        common: Common,
        /// Answer with the perturbed evaluation classifier.
        #[arg(long)]
        evaluation: bool,
        /// Announce trusted evaluation and include features in replies.
        #[arg(long)]
        trusted: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for agents and episodes; the world keeps `seeds.world`.
    #[arg(long)]
    seed: Option<u64>,
    /// `synth:[key=value,...]` or `cmd:<command line>`.
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated target classes.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for reports and checkpoints.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Continue from checkpoints in the output directory.
    #[arg(long)]
    resume: bool,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, String, Vec<String>)> {
        let (mut config, text) = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => (ExperimentConfig::default(), String::new()),
        };
        let mut overrides = Vec::new();
        if let Some(seed) = self.seed {
            config.seeds.agent = seed;
            config.seeds.episodes = seed;
            overrides.push(format!("seed={seed}"));
        }
        if let Some(oracle) = &self.oracle {
            config.oracle = oracle.clone();
            overrides.push(format!("oracle={oracle}"));
        }
        if let Some(alg) = self.algorithm {
            config.algorithm = alg;
            overrides.push(format!("algorithm={alg}"));
        }
        if let Some(n) = self.episodes {
            config.max_episodes = n;
            overrides.push(format!("episodes={n}"));
        }
        if !self.classes.is_empty() {
            config.target_classes = self.classes.clone();
            overrides.push(format!("classes={:?}", self.classes));
        }
        if let Some(w) = self.workers {
            config.workers = w;
            overrides.push(format!("workers={w}"));
        }
        if let Some(dir) = &self.output {
            config.output_dir = Some(dir.clone());
            overrides.push(format!("output={}", dir.display()));
        }
        if self.resume {
            config.resume = true;
            overrides.push("resume".into());
        }
        config.validate()?;
        Ok((config, text, overrides))
    }

    fn experiment(&self) -> Result<Experiment> {
        let (config, text, overrides) = self.load()?;
        Ok(Experiment::new(config, text)?.with_overrides(overrides))
    }
}

fn output_dir(experiment: &Experiment, fallback: &str) -> PathBuf {
    experiment
        .config()
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(summary: &RunSummary) {
    println!("method {}  queries {}  evaluation queries {}", summary.method, summary.queries.total, summary.evaluation_queries);
    println!("{:>5} {:>10} {:>10} {:>8} {:>8} {:>9}", "class", "best_conf", "attack_acc", "knn", "feat", "queries");
    for c in &summary.classes {
        let conf = c.best.as_ref().map(|b| b.confidence);
        let m = c.metrics.as_ref();
        println!(
            "{:>5} {:>10} {:>10} {:>8} {:>8} {:>9}",
            c.class,
            fmt_opt(conf),
            fmt_opt(m.map(|m| m.attack_accuracy)),
            fmt_opt(m.and_then(|m| m.knn_dist)),
            fmt_opt(m.and_then(|m| m.feat_dist)),
            c.queries.total
        );
    }
    if let Some(m) = &summary.metrics {
        println!(
            "  all {:>10} {:>10} {:>8} {:>8} {:>9}",
            fmt_opt(summary.mean_best_confidence()),
            fmt_opt(Some(m.attack_accuracy)),
            fmt_opt(m.knn_dist),
            fmt_opt(m.feat_dist),
            m.queries_used
        );
    }
    for f in &summary.failures {
        eprintln!("class {} stopped at episode {}: {}", f.class, f.episode, f.message);
    }
}

fn finish(summary: RunSummary, dir: &Path) -> Result<ExitCode> {
    emit_reports(&summary, dir)?;
    print_summary(&summary);
    println!("reports written to {}", dir.display());
    Ok(match summary.failures.first() {
        Some(f) => ExitCode::from(f.exit_code as u8),
        None => ExitCode::SUCCESS,
    })
}

fn write_table(dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    print!("{body}");
    println!("table written to {}", path.display());
    Ok(())
}

fn serve_synth(common: &Common, evaluation: bool, trusted: bool) -> Result<ExitCode> {
    let (config, _, _) = common.load()?;
    let spec = config.oracle_spec()?;
    if !matches!(spec, OracleSpec::Synthetic(_)) {
        return Err(Error::Config("serve-synth needs a synth: oracle".into()));
    }
    let mut params = spec.world_params(&config.world)?;
    params.seed = config.seeds.world;
    let world = Arc::new(make_world(&params)?);
    let which = if evaluation { WhichClassifier::Evaluation } else { WhichClassifier::Target };
    let greeting = Greeting {
        proto: PROTOCOL_VERSION,
        k: world.latent_dim(),
        num_classes: world.num_classes(),
        d: world.feature_dim(),
        trusted,
    };
    let stdin = BufReader::new(std::io::stdin().lock());
    let stdout = BufWriter::new(std::io::stdout().lock());
    serve(stdin, stdout, greeting, |z| {
        let x = world.generate(z).map_err(|e| e.to_string())?;
        let confidence = world.classify(&x, which).map_err(|e| e.to_string())?;
        Ok(OracleResponse {
            confidence,
            feature: trusted.then_some(x),
        })
    })
    .map_err(|source| Error::Transport { ordinal: 0, source })?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Attack(common) => {
            let e = common.experiment()?;
            let summary = e.run_attack()?;
            finish(summary, &output_dir(&e, "runs/attack"))
        }
        Command::Baseline { common, budget } => {
            let e = common.experiment()?;
            let summary = e.random_search_baseline(budget.unwrap_or_else(|| e.attack_query_budget()))?;
            finish(summary, &output_dir(&e, "runs/baseline"))
        }
        Command::SweepAlpha { common, alphas } => {
            let e = common.experiment()?;
            let alphas = if alphas.is_empty() { e.config().sweep.alphas.clone() } else { alphas };
            let rows = e.sweep_alpha(&alphas)?;
            write_table(&output_dir(&e, "runs/sweep-alpha"), ALPHA_SWEEP_FILE, &alpha_sweep_csv(&rows))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepEpisodes { common, checkpoints } => {
            let e = common.experiment()?;
            let checkpoints = if checkpoints.is_empty() { e.config().sweep.checkpoints.clone() } else { checkpoints };
            let rows = e.sweep_episodes(&checkpoints)?;
            write_table(&output_dir(&e, "runs/sweep-episodes"), EPISODE_SWEEP_FILE, &episode_sweep_csv(&rows))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let summary = read_reports(&dir)?;
            print_summary(&summary);
            println!("{} episode rows", summary.episodes.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::ServeSynth { common, evaluation, trusted } => serve_synth(&common, evaluation, trusted),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
