use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OracleSpec};
use crate::agents::{ActionMode, AgentBundle, ReplayBuffer, TransitionRecord};
use crate::error::{Error, Result};
use crate::mdp::{env_step, init_state, EnvConfig, LatentVector};
use crate::metrics::{attack_accuracy, density_coverage, feat_dist, knn_dist, FeatureSet, MetricsReport};
use crate::oracles::{
    make_world, ExpectedShape, ExternalOracle, FeatureChannel, LedgerCounts, MeteredOracle, Oracle,
    OracleDescriptor, OracleKind, OracleResponse, QueryLedger, QueryPurpose, SyntheticOracle,
    SyntheticWorld, WhichClassifier,
};
use crate::tensor::Matrix;

const STREAM_EPISODE: u64 = 1;
const STREAM_WARMUP: u64 = 2;
const STREAM_RANDOM: u64 = 3;
const STREAM_SAMPLES: u64 = 4;
const STREAM_PRIVATE: u64 = 5;
const STREAM_AGENT: u64 = 6;

/// Mixes `parts` into `base` (splitmix64 finalizer per part).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base;
    for &p in parts {
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// One row of the per-episode log. Sums run over the episode's steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub class: usize,
    pub episode: usize,
    pub init_seed: u64,
    pub reward: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Highest target confidence seen in this class so far.
    pub best_confidence: f64,
    /// Attack queries booked for this class so far, warm-up included.
    pub cumulative_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLatent {
    pub latent: LatentVector,
    pub confidence: f64,
    /// Episode (or query index, for random search) that produced it.
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: usize,
    pub episodes_run: usize,
    pub best: Option<BestLatent>,
    pub queries: LedgerCounts,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFailure {
    pub class: usize,
    pub episode: usize,
    pub exit_code: i32,
    pub message: String,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    /// `sac`, `td3`, `ddpg` or `random-search`.
    pub method: String,
    pub config_echo: String,
    pub overrides: Vec<String>,
    pub classes: Vec<ClassResult>,
    pub metrics: Option<MetricsReport>,
    /// Attack-side queries over all classes.
    pub queries: LedgerCounts,
    pub evaluation_queries: u64,
    pub failures: Vec<ClassFailure>,
    pub wall_clock_secs: f64,
    /// Lives in its own file; see `emit_reports`.
    #[serde(skip)]
    pub episodes: Vec<EpisodeLog>,
}

impl RunSummary {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Copy with the wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> RunSummary {
        RunSummary {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    /// Mean best confidence over classes that found a latent.
    pub fn mean_best_confidence(&self) -> Option<f64> {
        let v: Vec<f64> = self.classes.iter().filter_map(|c| c.best.as_ref()).map(|b| b.confidence).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub attack_acc: f64,
    pub density: Option<f64>,
    pub coverage: Option<f64>,
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episodes: usize,
    pub attack_acc: f64,
}

/// Training state of one class, everything a checkpoint needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassState {
    pub class: usize,
    pub warmed_up: bool,
    pub episodes_done: usize,
    pub agent: AgentBundle,
    pub buffer: ReplayBuffer,
    pub best: Option<BestLatent>,
    pub logs: Vec<EpisodeLog>,
    pub queries: LedgerCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    state: ClassState,
}

trait Evaluator: Oracle + FeatureChannel {}
impl<T: Oracle + FeatureChannel> Evaluator for T {}

/// Evaluation oracle that books its traffic.
struct MeteredEvaluator {
    inner: Box<dyn Evaluator>,
    ledger: Arc<QueryLedger>,
}

impl Oracle for MeteredEvaluator {
    fn descriptor(&self) -> OracleDescriptor {
        self.inner.descriptor()
    }

    fn query(&mut self, latent: &[f64]) -> Result<OracleResponse> {
        self.ledger.record(QueryPurpose::Evaluation);
        self.inner.query(latent)
    }
}

impl MeteredEvaluator {
    fn has_features(&self) -> bool {
        self.inner.descriptor().feature_dim > 0
    }

    fn features(&mut self, latent: &[f64]) -> Result<Vec<f64>> {
        // Only the subprocess channel costs a round trip.
        if self.inner.descriptor().kind == OracleKind::External {
            self.ledger.record(QueryPurpose::Evaluation);
        }
        self.inner.features(latent)
    }
}

enum Source {
    Synthetic(Arc<SyntheticWorld>),
    Command { attack: String, evaluation: String },
}

/// A validated configuration bound to its oracle.
pub struct Experiment {
    config: ExperimentConfig,
    config_echo: String,
    overrides: Vec<String>,
    source: Source,
    latent_dim: usize,
    num_classes: usize,
    feature_dim: Option<usize>,
}

impl Experiment {
    /// `config_echo` is the configuration text exactly as supplied.
    pub fn new(config: ExperimentConfig, config_echo: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let (source, latent_dim, num_classes, feature_dim) = match config.oracle_spec()? {
            spec @ OracleSpec::Synthetic(_) => {
                let mut params = spec.world_params(&config.world)?;
                params.seed = config.seeds.world;
                let world = make_world(&params)?;
                let dims = (world.latent_dim(), world.num_classes(), Some(world.feature_dim()));
                (Source::Synthetic(Arc::new(world)), dims.0, dims.1, dims.2)
            }
            OracleSpec::Command(attack) => {
                let evaluation = match config.evaluation_spec()? {
                    Some(OracleSpec::Command(cmd)) => cmd,
                    _ => attack.clone(),
                };
                let (k, n) = (config.env.latent_dim, config.env.num_classes);
                (Source::Command { attack, evaluation }, k, n, None)
            }
        };
        Ok(Experiment {
            config,
            config_echo: config_echo.into(),
            overrides: Vec::new(),
            source,
            latent_dim,
            num_classes,
            feature_dim,
        })
    }

    /// Builds from the serialized form of `config` as its own echo.
    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        let echo = config.to_toml()?;
        Experiment::new(config, echo)
    }

    /// Records command-line overrides applied on top of the echoed file.
    pub fn with_overrides(mut self, overrides: Vec<String>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn world(&self) -> Option<&Arc<SyntheticWorld>> {
        match &self.source {
            Source::Synthetic(w) => Some(w),
            Source::Command { .. } => None,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn classes(&self) -> Result<Vec<usize>> {
        if self.config.target_classes.is_empty() {
            return Ok((0..self.num_classes).collect());
        }
        let mut seen = vec![false; self.num_classes];
        for &c in &self.config.target_classes {
            if c >= self.num_classes {
                return Err(Error::Config(format!(
                    "target class {c} out of range for {} classes",
                    self.num_classes
                )));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Config(format!("target class {c} listed twice")));
            }
        }
        Ok(self.config.target_classes.clone())
    }

    /// Attack queries one class spends under the default pipeline.
    pub fn attack_query_budget(&self) -> u64 {
        if self.config.max_episodes == 0 {
            return 0;
        }
        2 * (self.config.max_episodes * self.config.env.max_step + self.config.warmup_steps) as u64
    }

    fn expected_shape(&self) -> ExpectedShape {
        ExpectedShape {
            latent_dim: self.latent_dim,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }

    fn attack_oracle(&self) -> Result<Box<dyn Oracle>> {
        Ok(match &self.source {
            Source::Synthetic(w) => Box::new(SyntheticOracle::new(w.clone(), WhichClassifier::Target)),
            Source::Command { attack, .. } => Box::new(ExternalOracle::spawn(attack, self.expected_shape())?),
        })
    }

    fn evaluator(&self, ledger: Arc<QueryLedger>) -> Result<MeteredEvaluator> {
        let inner: Box<dyn Evaluator> = match &self.source {
            Source::Synthetic(w) => Box::new(SyntheticOracle::new(w.clone(), WhichClassifier::Evaluation)),
            Source::Command { evaluation, .. } => Box::new(ExternalOracle::spawn(evaluation, self.expected_shape())?),
        };
        Ok(MeteredEvaluator { inner, ledger })
    }

    /// Private samples of `class` in feature space, when the world has them.
    pub fn private_features(&self, class: usize) -> Result<Option<Vec<Vec<f64>>>> {
        match &self.source {
            Source::Synthetic(w) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seeds.world, &[STREAM_PRIVATE, class as u64]));
                Ok(Some(w.private_features(class, self.config.private_samples, &mut rng)?))
            }
            Source::Command { .. } => Ok(None),
        }
    }

    pub fn env_for(&self, class: usize) -> EnvConfig {
        EnvConfig {
            latent_dim: self.latent_dim,
            num_classes: self.num_classes,
            target_class: class,
            ..self.config.env.clone()
        }
    }

    fn fresh_state(&self, class: usize, env: &EnvConfig) -> Result<ClassState> {
        let seed = derive_seed(self.config.seeds.agent, &[STREAM_AGENT, class as u64]);
        Ok(ClassState {
            class,
            warmed_up: false,
            episodes_done: 0,
            agent: AgentBundle::new(
                self.config.algorithm,
                self.latent_dim,
                env.action_scale,
                self.config.agent.clone(),
                seed,
            )?,
            buffer: ReplayBuffer::new(self.config.agent.replay_capacity, self.latent_dim)?,
            best: None,
            logs: Vec::new(),
            queries: LedgerCounts::default(),
        })
    }

    /// Configuration identity a checkpoint must share to be resumed.
    fn fingerprint(&self) -> String {
        let mut c = self.config.clone();
        c.max_episodes = 0;
        c.resume = false;
        c.output_dir = None;
        c.checkpoint_interval = 0;
        c.workers = 1;
        c.target_classes.clear();
        c.sweep = Default::default();
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn checkpoint_path(&self, class: usize) -> Option<PathBuf> {
        self.config
            .output_dir
            .as_ref()
            .map(|d| d.join("checkpoints").join(format!("class-{class}.json")))
    }

    fn write_checkpoint(&self, state: &ClassState) -> Result<Option<PathBuf>> {
        let Some(path) = self.checkpoint_path(state.class) else {
            return Ok(None);
        };
        let dir = path.parent().expect("checkpoint path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let body = serde_json::to_vec(&Checkpoint {
            fingerprint: self.fingerprint(),
            state: state.clone(),
        })
        .map_err(|e| Error::Parse {
            what: "checkpoint".into(),
            message: e.to_string(),
        })?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(path))
    }

    fn read_checkpoint(&self, path: &Path) -> Result<ClassState> {
        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint = serde_json::from_slice(&body).map_err(|e| Error::Parse {
            what: format!("checkpoint {}", path.display()),
            message: e.to_string(),
        })?;
        if cp.fingerprint != self.fingerprint() {
            return Err(Error::Config(format!(
                "checkpoint {} was written under a different configuration",
                path.display()
            )));
        }
        Ok(cp.state)
    }

    fn initial_state(&self, class: usize, env: &EnvConfig, resumable: bool) -> Result<ClassState> {
        if resumable && self.config.resume {
            if let Some(path) = self.checkpoint_path(class).filter(|p| p.exists()) {
                let state = self.read_checkpoint(&path)?;
                if state.class == class {
                    return Ok(state);
                }
            }
        }
        self.fresh_state(class, env)
    }

    /// Runs warm-up and episodes up to `max_episodes`, calling `hook` with
    /// the agent whenever the completed episode count is in `checkpoints`.
    fn advance(
        &self,
        state: &mut ClassState,
        env: &EnvConfig,
        max_episodes: usize,
        checkpoints: &[usize],
        hook: &mut dyn FnMut(usize, &mut AgentBundle) -> Result<()>,
        write_checkpoints: bool,
    ) -> Result<()> {
        let class = state.class;
        let ledger = Arc::new(QueryLedger::from_counts(state.queries));
        let mut oracle = MeteredOracle::new(self.attack_oracle()?, ledger.clone());
        let k = self.latent_dim;
        let result = (|| -> Result<()> {
            if max_episodes > 0 && !state.warmed_up {
                self.warm_up(state, env, &mut oracle)?;
                state.warmed_up = true;
                state.queries = ledger.counts();
            }
            for ep in state.episodes_done..max_episodes {
                if checkpoints.contains(&ep) {
                    hook(ep, &mut state.agent)?;
                }
                let init_seed = derive_seed(self.config.seeds.episodes, &[STREAM_EPISODE, class as u64, ep as u64]);
                let mut s = init_state(k, &mut ChaCha8Rng::seed_from_u64(init_seed));
                let (mut reward, mut r1, mut r2, mut r3) = (0.0, 0.0, 0.0, 0.0);
                for step in 1..=env.max_step {
                    let a = state.agent.select_action(&s, ActionMode::Explore)?;
                    let out = env_step(&s, &a, &mut oracle, env, step, QueryPurpose::Training)?;
                    reward += out.reward;
                    r1 += out.r1;
                    r2 += out.r2;
                    r3 += out.r3;
                    let confidence = out.state_confidences[class];
                    if state.best.as_ref().is_none_or(|b| confidence > b.confidence) {
                        state.best = Some(BestLatent {
                            latent: out.next_state.clone(),
                            confidence,
                            episode: ep,
                        });
                    }
                    state.buffer.push(TransitionRecord {
                        state: s,
                        action: a,
                        reward: out.reward,
                        next_state: out.next_state.clone(),
                        done: out.done,
                    })?;
                    let batch = state.agent.sample_batch(&state.buffer)?;
                    state.agent.update(&batch).map_err(|e| match e {
                        Error::NonFinite(m) => Error::NonFinite(format!("class {class} episode {ep}: {m}")),
                        other => other,
                    })?;
                    s = out.next_state;
                    if out.done {
                        break;
                    }
                }
                state.queries = ledger.counts();
                state.logs.push(EpisodeLog {
                    class,
                    episode: ep,
                    init_seed,
                    reward,
                    r1,
                    r2,
                    r3,
                    best_confidence: state.best.as_ref().map_or(0.0, |b| b.confidence),
                    cumulative_queries: state.queries.total,
                });
                state.episodes_done = ep + 1;
                let interval = self.config.checkpoint_interval;
                if write_checkpoints && interval > 0 && state.episodes_done % interval == 0 {
                    self.write_checkpoint(state)?;
                }
            }
            if checkpoints.contains(&max_episodes) && state.episodes_done == max_episodes {
                hook(max_episodes, &mut state.agent)?;
            }
            Ok(())
        })();
        state.queries = ledger.counts();
        result
    }

    fn warm_up(&self, state: &mut ClassState, env: &EnvConfig, oracle: &mut MeteredOracle) -> Result<()> {
        let class = state.class as u64;
        let mut steps = 0;
        let mut episode = 0u64;
        while steps < self.config.warmup_steps {
            let seed = derive_seed(self.config.seeds.episodes, &[STREAM_WARMUP, class, episode]);
            let mut s = init_state(self.latent_dim, &mut ChaCha8Rng::seed_from_u64(seed));
            for step in 1..=env.max_step {
                if steps == self.config.warmup_steps {
                    break;
                }
                let a = state.agent.random_action();
                let out = env_step(&s, &a, oracle, env, step, QueryPurpose::WarmUp)?;
                state.buffer.push(TransitionRecord {
                    state: s,
                    action: a,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    done: out.done,
                })?;
                steps += 1;
                s = out.next_state;
                if out.done {
                    break;
                }
            }
            episode += 1;
        }
        Ok(())
    }

    /// Trains a fresh agent for `class` under `env`, without checkpoints.
    pub fn train(&self, class: usize, env: &EnvConfig, max_episodes: usize) -> Result<ClassState> {
        let mut state = self.fresh_state(class, env)?;
        self.advance(&mut state, env, max_episodes, &[], &mut |_, _| Ok(()), false)?;
        Ok(state)
    }

    /// Exploit-mode reconstructions from fresh prior draws. The draws depend
    /// only on the episode seed and class, so they are shared across agents.
    pub fn exploit_samples(&self, agent: &mut AgentBundle, env: &EnvConfig, n: usize) -> Result<Vec<LatentVector>> {
        let k = self.latent_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.seeds.episodes,
            &[STREAM_SAMPLES, env.target_class as u64],
        ));
        let mut values = Vec::with_capacity(n * k);
        for _ in 0..n {
            values.extend(init_state(k, &mut rng).into_inner());
        }
        let mut s = Matrix::from_vec(n, k, values)?;
        let alpha = env.diversity_factor;
        for _ in 0..env.max_step {
            let a = agent.exploit_batch(&s)?;
            for (sv, av) in s.values_mut().iter_mut().zip(a.values()) {
                *sv = alpha * *sv + (1.0 - alpha) * av;
            }
        }
        (0..n).map(|i| LatentVector::new(s.row(i).to_vec())).collect()
    }

    /// Accuracy of `samples` as reconstructions of `class`, plus density and
    /// coverage against the class's private features when available.
    fn score_samples(
        &self,
        class: usize,
        samples: &[LatentVector],
        evaluator: &mut MeteredEvaluator,
    ) -> Result<(f64, Option<(f64, f64)>)> {
        let pairs: Vec<(&LatentVector, usize)> = samples.iter().map(|s| (s, class)).collect();
        let acc = attack_accuracy(&pairs, evaluator)?;
        let dc = match (evaluator.has_features(), self.private_features(class)?) {
            (true, Some(real)) => {
                let fake = samples.iter().map(|s| evaluator.features(s)).collect::<Result<Vec<_>>>()?;
                Some(density_coverage(&real, &fake, self.config.neighbor_k)?)
            }
            _ => None,
        };
        Ok((acc, dc))
    }

    /// Accuracy and feature distances of one best reconstruction. Density and
    /// coverage need more than `neighbor_k` fakes, so they stay `None` here
    /// and come from the sweeps instead.
    fn class_metrics(
        &self,
        class: usize,
        best: &BestLatent,
        queries: u64,
        evaluator: &mut MeteredEvaluator,
    ) -> Result<MetricsReport> {
        let acc = attack_accuracy(&[(&best.latent, class)], evaluator)?;
        let mut report = MetricsReport {
            attack_accuracy: acc,
            knn_dist: None,
            feat_dist: None,
            density: None,
            coverage: None,
            queries_used: queries,
        };
        if let (true, Some(real)) = (evaluator.has_features(), self.private_features(class)?) {
            let fake = vec![evaluator.features(&best.latent)?];
            let target = FeatureSet::new(class, real)?;
            report.knn_dist = Some(knn_dist(&fake, &target)?);
            report.feat_dist = Some(feat_dist(&fake, &target)?);
        }
        Ok(report)
    }

    /// Runs `f` for every class, `workers` at a time, results in class order.
    fn per_class<T: Send>(&self, classes: &[usize], f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
        let workers = self.config.workers.min(classes.len()).max(1);
        if workers == 1 {
            return classes.iter().map(|&c| f(c)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<T>>>> = classes.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= classes.len() {
                        break;
                    }
                    let r = f(classes[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every class ran"))
            .collect()
    }

    fn attack_class(&self, class: usize, eval_ledger: &Arc<QueryLedger>) -> Result<(ClassResult, Vec<EpisodeLog>, Option<ClassFailure>)> {
        let env = self.env_for(class);
        let mut state = self.initial_state(class, &env, true)?;
        let outcome = self.advance(
            &mut state,
            &env,
            self.config.max_episodes,
            &[],
            &mut |_, _| Ok(()),
            true,
        );
        let failure = match outcome {
            Ok(()) => None,
            Err(e) if e.exit_code() == 3 => Some(ClassFailure {
                class,
                episode: state.episodes_done,
                exit_code: e.exit_code(),
                message: e.to_string(),
                checkpoint: self.write_checkpoint(&state)?,
            }),
            Err(e) => return Err(e),
        };
        let metrics = match (&state.best, &failure) {
            (Some(best), None) => {
                let mut evaluator = self.evaluator(eval_ledger.clone())?;
                Some(self.class_metrics(class, best, state.queries.total, &mut evaluator)?)
            }
            _ => None,
        };
        let result = ClassResult {
            class,
            episodes_run: state.episodes_done,
            best: state.best,
            queries: state.queries,
            metrics,
        };
        Ok((result, state.logs, failure))
    }

    /// Trains one agent per target class and scores each class's best
    /// reconstruction with the evaluation oracle.
    pub fn run_attack(&self) -> Result<RunSummary> {
        let start = Instant::now();
        let classes = self.classes()?;
        let eval_ledger = Arc::new(QueryLedger::default());
        let outcomes = self.per_class(&classes, |c| self.attack_class(c, &eval_ledger))?;
        let mut results = Vec::new();
        let mut episodes = Vec::new();
        let mut failures = Vec::new();
        for (r, logs, f) in outcomes {
            results.push(r);
            episodes.extend(logs);
            failures.extend(f);
        }
        Ok(self.summarize(
            self.config.algorithm.to_string(),
            results,
            episodes,
            failures,
            eval_ledger.total(),
            start,
        ))
    }

    /// Per class, `budget` prior draws queried once each; keeps the draw
    /// with the highest target confidence.
    pub fn random_search_baseline(&self, budget: u64) -> Result<RunSummary> {
        if budget == 0 {
            return Err(Error::Config("random search budget must be at least 1".into()));
        }
        let start = Instant::now();
        let classes = self.classes()?;
        let eval_ledger = Arc::new(QueryLedger::default());
        let outcomes = self.per_class(&classes, |class| {
            let ledger = Arc::new(QueryLedger::default());
            let mut oracle = MeteredOracle::new(self.attack_oracle()?, ledger.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seeds.episodes, &[STREAM_RANDOM, class as u64]));
            let mut best: Option<BestLatent> = None;
            let mut failure = None;
            for q in 0..budget {
                let z = init_state(self.latent_dim, &mut rng);
                match oracle.query(&z, QueryPurpose::Training) {
                    Ok(r) => {
                        let confidence = r.confidence[class];
                        if best.as_ref().is_none_or(|b| confidence > b.confidence) {
                            best = Some(BestLatent {
                                latent: z,
                                confidence,
                                episode: q as usize,
                            });
                        }
                    }
                    Err(e) if e.exit_code() == 3 => {
                        failure = Some(ClassFailure {
                            class,
                            episode: q as usize,
                            exit_code: 3,
                            message: e.to_string(),
                            checkpoint: None,
                        });
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let metrics = match (&best, &failure) {
                (Some(b), None) => {
                    let mut evaluator = self.evaluator(eval_ledger.clone())?;
                    Some(self.class_metrics(class, b, ledger.total(), &mut evaluator)?)
                }
                _ => None,
            };
            Ok((
                ClassResult {
                    class,
                    episodes_run: 0,
                    best,
                    queries: ledger.counts(),
                    metrics,
                },
                failure,
            ))
        })?;
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for (r, f) in outcomes {
            results.push(r);
            failures.extend(f);
        }
        Ok(self.summarize("random-search".into(), results, Vec::new(), failures, eval_ledger.total(), start))
    }

    fn summarize(
        &self,
        method: String,
        classes: Vec<ClassResult>,
        episodes: Vec<EpisodeLog>,
        failures: Vec<ClassFailure>,
        evaluation_queries: u64,
        start: Instant,
    ) -> RunSummary {
        let mut queries = LedgerCounts::default();
        for c in &classes {
            queries.total += c.queries.total;
            queries.training += c.queries.training;
            queries.evaluation += c.queries.evaluation;
            queries.warm_up += c.queries.warm_up;
        }
        let reports: Vec<&MetricsReport> = classes.iter().filter_map(|c| c.metrics.as_ref()).collect();
        let metrics = (!reports.is_empty()).then(|| {
            let n = reports.len() as f64;
            let mean = |f: fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
                reports.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / n)
            };
            MetricsReport {
                attack_accuracy: reports.iter().map(|r| r.attack_accuracy).sum::<f64>() / n,
                knn_dist: mean(|r| r.knn_dist),
                feat_dist: mean(|r| r.feat_dist),
                density: mean(|r| r.density),
                coverage: mean(|r| r.coverage),
                queries_used: queries.total,
            }
        });
        RunSummary {
            version: env!("CARGO_PKG_VERSION").into(),
            method,
            config_echo: self.config_echo.clone(),
            overrides: self.overrides.clone(),
            classes,
            metrics,
            queries,
            evaluation_queries,
            failures,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            episodes,
        }
    }

    /// One agent per α and class; each scored on `samples_per_class`
    /// exploit-mode samples.
    pub fn sweep_alpha(&self, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        let classes = self.classes()?;
        let mut rows = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let per_class = self.per_class(&classes, |class| {
                let mut env = self.env_for(class);
                env.diversity_factor = alpha;
                let mut state = self.train(class, &env, self.config.max_episodes)?;
                let samples = self.exploit_samples(&mut state.agent, &env, self.config.samples_per_class)?;
                let mut evaluator = self.evaluator(Arc::new(QueryLedger::default()))?;
                let (acc, dc) = self.score_samples(class, &samples, &mut evaluator)?;
                Ok((acc, dc, state.queries.total))
            })?;
            let n = per_class.len() as f64;
            let dcs: Option<Vec<(f64, f64)>> = per_class.iter().map(|p| p.1).collect();
            rows.push(AlphaRow {
                alpha,
                attack_acc: per_class.iter().map(|p| p.0).sum::<f64>() / n,
                density: dcs.as_ref().map(|v| v.iter().map(|p| p.0).sum::<f64>() / n),
                coverage: dcs.as_ref().map(|v| v.iter().map(|p| p.1).sum::<f64>() / n),
                queries: per_class.iter().map(|p| p.2).sum(),
            });
        }
        Ok(rows)
    }

    /// Trains once up to the last checkpoint, scoring exploit-mode samples
    /// whenever the completed episode count reaches a checkpoint.
    pub fn sweep_episodes(&self, checkpoints: &[usize]) -> Result<Vec<EpisodeRow>> {
        if checkpoints.is_empty() {
            return Err(Error::Config("episode sweep needs at least one checkpoint".into()));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("episode checkpoints must be strictly ascending".into()));
        }
        let last = *checkpoints.last().expect("nonempty");
        let classes = self.classes()?;
        let per_class = self.per_class(&classes, |class| {
            let env = self.env_for(class);
            let mut state = self.fresh_state(class, &env)?;
            let mut evaluator = self.evaluator(Arc::new(QueryLedger::default()))?;
            let mut accs = Vec::with_capacity(checkpoints.len());
            self.advance(
                &mut state,
                &env,
                last,
                checkpoints,
                &mut |_, agent| {
                    let samples = self.exploit_samples(agent, &env, self.config.samples_per_class)?;
                    let pairs: Vec<(&LatentVector, usize)> = samples.iter().map(|s| (s, class)).collect();
                    accs.push(attack_accuracy(&pairs, &mut evaluator)?);
                    Ok(())
                },
                false,
            )?;
            Ok(accs)
        })?;
        let n = per_class.len() as f64;
        Ok(checkpoints
            .iter()
            .enumerate()
            .map(|(i, &episodes)| EpisodeRow {
                episodes,
                attack_acc: per_class.iter().map(|a| a[i]).sum::<f64>() / n,
            })
            .collect())
    }
}
