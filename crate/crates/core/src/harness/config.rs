use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentHyperparams, Algorithm};
use crate::error::{Error, Result};
use crate::mdp::EnvConfig;
use crate::oracles::WorldParams;

/// Where queries go: the in-process synthetic world or a protocol subprocess.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    /// `synth:` followed by optional `key=value` overrides of the `[world]` table.
    Synthetic(Vec<(String, String)>),
    /// `cmd:` followed by a shell command line.
    Command(String),
}

impl OracleSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(rest) = text.strip_prefix("synth:") {
            let mut pairs = Vec::new();
            for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("synthetic parameter {item:?} is not key=value")))?;
                pairs.push((key.trim().to_string(), value.trim().to_string()));
            }
            Ok(OracleSpec::Synthetic(pairs))
        } else if let Some(cmd) = text.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(Error::Config("cmd: oracle needs a command line".into()));
            }
            Ok(OracleSpec::Command(cmd.trim().to_string()))
        } else {
            Err(Error::Config(format!(
                "oracle {text:?} must start with synth: or cmd:"
            )))
        }
    }

    /// `base` with these synthetic overrides applied; `Command` leaves it alone.
    pub fn world_params(&self, base: &WorldParams) -> Result<WorldParams> {
        let OracleSpec::Synthetic(pairs) = self else {
            return Ok(base.clone());
        };
        let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in pairs {
            let parsed: toml::Table = format!("v = {value}")
                .parse()
                .map_err(|e| Error::Config(format!("synthetic parameter {key}={value}: {e}")))?;
            table.insert(key.clone(), parsed["v"].clone());
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("synthetic parameters: {}", e.message())))
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Synthetic(pairs) => {
                f.write_str("synth:")?;
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}={v}")?;
                }
                Ok(())
            }
            OracleSpec::Command(cmd) => write!(f, "cmd:{cmd}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Builds the synthetic world; overrides `world.seed`.
    pub world: u64,
    /// Network initialization, exploration noise and replay sampling.
    pub agent: u64,
    /// Initial states of every episode.
    pub episodes: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            world: 0,
            agent: 1,
            episodes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub checkpoints: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 0.9, 0.97],
            checkpoints: vec![0, 500, 1000, 2000, 4000],
        }
    }
}

/// Everything one experiment needs. Loaded from TOML; every field has a
/// default, so an empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// `synth:[key=value,...]` or `cmd:<command line>`.
    pub oracle: String,
    /// Held-out classifier for attack accuracy. Synthetic oracles use the
    /// world's perturbed classifier; command oracles default to a second
    /// instance of the attack command.
    pub evaluation_oracle: Option<String>,
    pub max_episodes: usize,
    /// Random-action steps before the first update.
    pub warmup_steps: usize,
    pub output_dir: Option<PathBuf>,
    /// Classes to attack; empty means all of them.
    pub target_classes: Vec<usize>,
    /// Exploit-mode samples per class for the sweeps.
    pub samples_per_class: usize,
    /// Private feature samples per class for the feature metrics.
    pub private_samples: usize,
    pub neighbor_k: usize,
    /// Episodes between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    pub resume: bool,
    /// Classes trained concurrently.
    pub workers: usize,
    pub seeds: Seeds,
    /// `target_class` is set per attacked class. Synthetic oracles supply
    /// `latent_dim` and `num_classes` from the world; command oracles must
    /// announce exactly the values given here.
    pub env: EnvConfig,
    pub agent: AgentHyperparams,
    pub world: WorldParams,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::Sac,
            oracle: "synth:".into(),
            evaluation_oracle: None,
            max_episodes: 4000,
            warmup_steps: 256,
            output_dir: None,
            target_classes: Vec::new(),
            samples_per_class: 1000,
            private_samples: 200,
            neighbor_k: crate::metrics::DEFAULT_NEIGHBOR_K,
            checkpoint_interval: 1000,
            resume: false,
            workers: 1,
            seeds: Seeds::default(),
            env: EnvConfig::default(),
            agent: AgentHyperparams::default(),
            world: WorldParams::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn oracle_spec(&self) -> Result<OracleSpec> {
        OracleSpec::parse(&self.oracle)
    }

    pub fn evaluation_spec(&self) -> Result<Option<OracleSpec>> {
        self.evaluation_oracle.as_deref().map(OracleSpec::parse).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.oracle_spec()?;
        if let Some(eval) = self.evaluation_spec()? {
            if matches!(spec, OracleSpec::Synthetic(_)) || matches!(eval, OracleSpec::Synthetic(_)) {
                return Err(Error::Config(
                    "evaluation_oracle only applies to cmd: attack oracles and must itself be cmd:".into(),
                ));
            }
        }
        let mut env = self.env.clone();
        env.target_class = 0;
        env.num_classes = env.num_classes.max(1);
        env.validate()?;
        self.agent.validate()?;
        let positive = [
            ("samples_per_class", self.samples_per_class),
            ("private_samples", self.private_samples),
            ("neighbor_k", self.neighbor_k),
            ("workers", self.workers),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(a) = self.sweep.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("sweep alpha {a} outside [0, 1]")));
        }
        if self.sweep.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep checkpoints must be strictly ascending".into()));
        }
        Ok(())
    }
}
