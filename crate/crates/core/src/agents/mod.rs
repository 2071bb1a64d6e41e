//! Off-policy continuous-control agents.
//!
//! One [`AgentBundle`] holds the networks, target copies and optimizer state
//! of SAC, TD3 or DDPG. Policies act in the unit box `(-1, 1)^k`; the bundle
//! scales actions by `action_scale` on the way out and divides stored
//! actions by it again before they reach a critic.

mod ddpg;
mod replay;
mod sac;
mod td3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use replay::{ReplayBuffer, TransitionRecord};

use crate::error::{Error, Result};
use crate::mdp::LatentVector;
use crate::tensor::{squashed_gaussian_sample, Activation, AdamConfig, AdamState, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sac,
    Td3,
    Ddpg,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sac => "sac",
            Algorithm::Td3 => "td3",
            Algorithm::Ddpg => "ddpg",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sac" => Ok(Algorithm::Sac),
            "td3" => Ok(Algorithm::Td3),
            "ddpg" => Ok(Algorithm::Ddpg),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacParams {
    pub auto_temperature: bool,
    pub initial_temperature: f64,
    /// Defaults to `-k` when unset.
    pub target_entropy: Option<f64>,
}

impl Default for SacParams {
    fn default() -> Self {
        SacParams {
            auto_temperature: true,
            initial_temperature: 1.0,
            target_entropy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Params {
    pub policy_delay: u64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub exploration_noise: f64,
}

impl Default for Td3Params {
    fn default() -> Self {
        Td3Params {
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            exploration_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgParams {
    pub exploration_noise: f64,
}

impl Default for DdpgParams {
    fn default() -> Self {
        DdpgParams {
            exploration_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentHyperparams {
    pub discount: f64,
    pub soft_update: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub sac: SacParams,
    pub td3: Td3Params,
    pub ddpg: DdpgParams,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        AgentHyperparams {
            discount: 0.99,
            soft_update: 0.01,
            learning_rate: 5e-4,
            batch_size: 256,
            replay_capacity: 1_000_000,
            hidden_sizes: vec![256, 256],
            hidden_activation: Activation::Relu,
            sac: SacParams::default(),
            td3: Td3Params::default(),
            ddpg: DdpgParams::default(),
        }
    }
}

impl AgentHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1]", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.soft_update) {
            return Err(Error::Config(format!("soft_update {} outside [0, 1]", self.soft_update)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("batch_size and replay_capacity must be positive".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.td3.policy_delay == 0 {
            return Err(Error::Config("td3 policy_delay must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_losses: Vec<f64>,
    /// `None` when the policy was not stepped (TD3 delay).
    pub policy_loss: Option<f64>,
    /// SAC only: `-mean log π` of the policy batch.
    pub entropy: Option<f64>,
    pub temperature: Option<f64>,
}

/// Networks, targets and optimizer state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBundle {
    algorithm: Algorithm,
    hyper: AgentHyperparams,
    latent_dim: usize,
    action_scale: f64,
    policy: Mlp,
    policy_opt: AdamState,
    policy_target: Option<Mlp>,
    critics: Vec<Mlp>,
    critic_opts: Vec<AdamState>,
    critic_targets: Vec<Mlp>,
    log_temperature: f64,
    temperature_opt: Option<AdamState>,
    rng: ChaCha8Rng,
    updates: u64,
}

/// `target ← (1-τ)·target + τ·online`
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if target.layer_sizes() != online.layer_sizes() {
        return Err(Error::invalid(format!(
            "soft update between shapes {:?} and {:?}",
            target.layer_sizes(),
            online.layer_sizes()
        )));
    }
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let values = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, values).expect("gaussian samples are finite")
}

/// Mini-batch in matrix form with actions mapped back to the unit box.
pub(crate) struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub not_done: Vec<f64>,
}

impl AgentBundle {
    pub fn new(
        algorithm: Algorithm,
        latent_dim: usize,
        action_scale: f64,
        hyper: AgentHyperparams,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if !(action_scale > 0.0) {
            return Err(Error::Config("action_scale must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = latent_dim;
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&hyper.hidden_sizes);
            s.push(output);
            s
        };
        let policy_out = match algorithm {
            Algorithm::Sac => 2 * k,
            Algorithm::Td3 | Algorithm::Ddpg => k,
        };
        let act = hyper.hidden_activation;
        let policy = Mlp::new(&sizes(k, policy_out), act, &mut rng)?;
        let n_critics = match algorithm {
            Algorithm::Sac | Algorithm::Td3 => 2,
            Algorithm::Ddpg => 1,
        };
        let critics = (0..n_critics)
            .map(|_| Mlp::new(&sizes(2 * k, 1), act, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let adam = AdamConfig::with_learning_rate(hyper.learning_rate);
        let policy_opt = AdamState::new(policy.param_count(), adam);
        let critic_opts = critics
            .iter()
            .map(|c| AdamState::new(c.param_count(), adam))
            .collect();
        let policy_target = match algorithm {
            Algorithm::Sac => None,
            _ => Some(policy.clone()),
        };
        let (log_temperature, temperature_opt) = match algorithm {
            Algorithm::Sac => (
                hyper.sac.initial_temperature.ln(),
                hyper.sac.auto_temperature.then(|| AdamState::new(1, adam)),
            ),
            _ => (0.0, None),
        };
        Ok(AgentBundle {
            algorithm,
            latent_dim,
            action_scale,
            policy,
            policy_opt,
            policy_target,
            critic_targets: critics.clone(),
            critics,
            critic_opts,
            log_temperature,
            temperature_opt,
            rng,
            updates: 0,
            hyper,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn hyperparams(&self) -> &AgentHyperparams {
        &self.hyper
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn policy_target(&self) -> Option<&Mlp> {
        self.policy_target.as_ref()
    }

    pub fn critics(&self) -> &[Mlp] {
        &self.critics
    }

    pub fn critic_targets(&self) -> &[Mlp] {
        &self.critic_targets
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn target_entropy(&self) -> f64 {
        self.hyper
            .sac
            .target_entropy
            .unwrap_or(-(self.latent_dim as f64))
    }

    /// Total parameter count across all networks.
    pub fn param_count(&self) -> usize {
        self.policy.param_count()
            + self.policy_target.as_ref().map_or(0, Mlp::param_count)
            + self.critics.iter().chain(&self.critic_targets).map(Mlp::param_count).sum::<usize>()
    }

    fn check_states(&self, states: &Matrix) -> Result<()> {
        if states.cols() != self.latent_dim {
            return Err(Error::invalid(format!(
                "states have dimension {}, agent expects {}",
                states.cols(),
                self.latent_dim
            )));
        }
        Ok(())
    }

    /// Unit-box actions for a batch of states.
    fn unit_actions(&mut self, states: &Matrix, mode: ActionMode) -> Result<Matrix> {
        self.check_states(states)?;
        let k = self.latent_dim;
        let out = self.policy.predict(states)?;
        match (self.algorithm, mode) {
            (Algorithm::Sac, ActionMode::Exploit) => Ok(out.columns(0, k).map(f64::tanh)),
            (Algorithm::Sac, ActionMode::Explore) => {
                let noise = gaussian_matrix(states.rows(), k, 1.0, &mut self.rng);
                let s = squashed_gaussian_sample(&out.columns(0, k), &out.columns(k, 2 * k), &noise)?;
                Ok(s.action)
            }
            (_, ActionMode::Exploit) => Ok(out.map(f64::tanh)),
            (alg, ActionMode::Explore) => {
                let std = match alg {
                    Algorithm::Td3 => self.hyper.td3.exploration_noise,
                    _ => self.hyper.ddpg.exploration_noise,
                };
                let noise = gaussian_matrix(states.rows(), k, std, &mut self.rng);
                let mut a = out.map(f64::tanh);
                for (v, n) in a.values_mut().iter_mut().zip(noise.values()) {
                    *v = (*v + n).clamp(-1.0, 1.0);
                }
                Ok(a)
            }
        }
    }

    /// Action for one state, in latent units (`action_scale · unit box`).
    pub fn select_action(&mut self, state: &[f64], mode: ActionMode) -> Result<LatentVector> {
        let states = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let a = self.unit_actions(&states, mode)?;
        LatentVector::new(a.values().iter().map(|v| v * self.action_scale).collect())
    }

    /// Deterministic actions for many states at once, in latent units.
    pub fn exploit_batch(&mut self, states: &Matrix) -> Result<Matrix> {
        let scale = self.action_scale;
        Ok(self.unit_actions(states, ActionMode::Exploit)?.map(|v| v * scale))
    }

    /// Uniform random action in latent units, drawn from the agent's stream.
    pub fn random_action(&mut self) -> LatentVector {
        let scale = self.action_scale;
        LatentVector::new(
            (0..self.latent_dim)
                .map(|_| scale * self.rng.random_range(-1.0..1.0))
                .collect(),
        )
        .expect("finite")
    }

    /// Uniform replay sample drawn with the agent's own generator.
    pub fn sample_batch(&mut self, buffer: &ReplayBuffer) -> Result<Vec<TransitionRecord>> {
        buffer.sample(self.hyper.batch_size, &mut self.rng)
    }

    pub(crate) fn to_batch(&self, records: &[TransitionRecord]) -> Result<Batch> {
        if records.is_empty() {
            return Err(Error::Unavailable("update needs a nonempty batch".into()));
        }
        let k = self.latent_dim;
        let n = records.len();
        let mut states = Vec::with_capacity(n * k);
        let mut actions = Vec::with_capacity(n * k);
        let mut next_states = Vec::with_capacity(n * k);
        for r in records {
            if r.state.dim() != k || r.action.dim() != k || r.next_state.dim() != k {
                return Err(Error::invalid("transition dimension differs from agent"));
            }
            states.extend_from_slice(&r.state);
            actions.extend(r.action.iter().map(|a| a / self.action_scale));
            next_states.extend_from_slice(&r.next_state);
        }
        Ok(Batch {
            states: Matrix::from_vec(n, k, states)?,
            actions: Matrix::from_vec(n, k, actions)?,
            rewards: records.iter().map(|r| r.reward).collect(),
            next_states: Matrix::from_vec(n, k, next_states)?,
            not_done: records.iter().map(|r| if r.done { 0.0 } else { 1.0 }).collect(),
        })
    }

    /// One gradient update of the agent's algorithm on `records`.
    pub fn update(&mut self, records: &[TransitionRecord]) -> Result<LossReport> {
        match self.algorithm {
            Algorithm::Sac => self.sac_update(records),
            Algorithm::Td3 => {
                let index = self.updates;
                self.td3_update(records, index)
            }
            Algorithm::Ddpg => self.ddpg_update(records),
        }
    }

    /// Critic step toward `targets` for every online critic, computed and
    /// checked before any parameter moves.
    pub(crate) fn critic_step(&mut self, batch: &Batch, targets: &[f64]) -> Result<Vec<f64>> {
        let n = batch.rewards.len() as f64;
        let input = batch.states.hstack(&batch.actions)?;
        let mut staged = Vec::with_capacity(self.critics.len());
        let mut losses = Vec::with_capacity(self.critics.len());
        for (i, critic) in self.critics.iter().enumerate() {
            let trace = critic.forward(&input)?;
            let q = trace.output().values();
            let diff: Vec<f64> = q.iter().zip(targets).map(|(q, y)| q - y).collect();
            let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "critic {i} loss is {loss} at update {}",
                    self.updates
                )));
            }
            let grad = Matrix::from_vec(diff.len(), 1, diff.iter().map(|d| 2.0 * d / n).collect())?;
            let (g, _) = critic.backward(&trace, &grad)?;
            staged.push(g);
            losses.push(loss);
        }
        for ((critic, opt), g) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(staged) {
            opt.step(critic.params_mut(), &g.values)?;
        }
        Ok(losses)
    }

    pub(crate) fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.hyper.soft_update;
        for (t, o) in self.critic_targets.iter_mut().zip(&self.critics) {
            soft_update(t, o, tau)?;
        }
        if let Some(t) = self.policy_target.as_mut() {
            soft_update(t, &self.policy, tau)?;
        }
        Ok(())
    }
}

/// Value of `critic` at `(states, unit_actions)`, one entry per row.
pub(crate) fn q_values(critic: &Mlp, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
    Ok(critic.predict(&states.hstack(actions)?)?.into_values())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(alg: Algorithm) -> AgentBundle {
        let hyper = AgentHyperparams {
            hidden_sizes: vec![16, 16],
            batch_size: 8,
            ..Default::default()
        };
        AgentBundle::new(alg, 4, 1.0, hyper, 7).unwrap()
    }

    #[test]
    fn critic_counts_per_algorithm() {
        assert_eq!(small(Algorithm::Sac).critics().len(), 2);
        assert_eq!(small(Algorithm::Td3).critics().len(), 2);
        assert_eq!(small(Algorithm::Ddpg).critics().len(), 1);
        assert!(small(Algorithm::Sac).policy_target().is_none());
        for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
            let a = small(alg);
            for (t, o) in a.critic_targets().iter().zip(a.critics()) {
                assert_eq!(t.layer_sizes(), o.layer_sizes());
            }
        }
    }

    #[test]
    fn exploit_is_deterministic_and_shaped() {
        for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
            let mut a = small(alg);
            let s = [0.1, -0.4, 2.0, 0.0];
            let x = a.select_action(&s, ActionMode::Exploit).unwrap();
            let y = a.select_action(&s, ActionMode::Exploit).unwrap();
            assert_eq!(x, y);
            assert_eq!(x.dim(), 4);
        }
    }

    #[test]
    fn actions_respect_scale() {
        let hyper = AgentHyperparams { hidden_sizes: vec![8], ..Default::default() };
        for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
            let mut a = AgentBundle::new(alg, 3, 2.5, hyper.clone(), 1).unwrap();
            for i in 0..200 {
                let s = [i as f64 * 0.1, -1.0, 3.0];
                let x = a.select_action(&s, ActionMode::Explore).unwrap();
                assert!(x.iter().all(|v| v.abs() <= 2.5));
            }
        }
    }

    #[test]
    fn sac_exploration_has_spread() {
        let mut a = small(Algorithm::Sac);
        let s = [0.3, 0.3, 0.3, 0.3];
        let draws: Vec<f64> = (0..1000)
            .map(|_| a.select_action(&s, ActionMode::Explore).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / 1000.0;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 999.0;
        assert!(var.sqrt() > 1e-4);
    }

    #[test]
    fn soft_update_endpoints_and_recurrence() {
        let online = Mlp::from_params(&[1, 1], Activation::Relu, vec![1.0, 1.0]).unwrap();
        let mut target = Mlp::from_params(&[1, 1], Activation::Relu, vec![0.0, 0.0]).unwrap();
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.params(), &[0.0, 0.0]);
        for _ in 0..100 {
            soft_update(&mut target, &online, 0.01).unwrap();
        }
        let expected = 1.0 - 0.99f64.powi(100);
        assert!((target.params()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.634).abs() < 1e-3);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());
        let other = Mlp::from_params(&[2, 1], Activation::Relu, vec![0.0; 3]).unwrap();
        assert!(soft_update(&mut target, &other, 0.5).is_err());
    }

    #[test]
    fn target_error_shrinks_by_one_minus_tau() {
        let online = Mlp::from_params(&[1, 2], Activation::Relu, vec![0.5, -2.0, 3.0, 1.0]).unwrap();
        let mut target = Mlp::from_params(&[1, 2], Activation::Relu, vec![0.0; 4]).unwrap();
        let tau = 0.05;
        let err = |t: &Mlp| -> Vec<f64> { t.params().iter().zip(online.params()).map(|(a, b)| b - a).collect() };
        for _ in 0..50 {
            let before = err(&target);
            soft_update(&mut target, &online, tau).unwrap();
            for (a, b) in err(&target).iter().zip(&before) {
                assert!((a / b - (1.0 - tau)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn algorithm_parses() {
        assert_eq!("SAC".parse::<Algorithm>().unwrap(), Algorithm::Sac);
        assert!("ppo".parse::<Algorithm>().is_err());
    }

    #[test]
    fn hyperparam_validation() {
        let bad = AgentHyperparams { discount: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AgentHyperparams { soft_update: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AgentHyperparams { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
