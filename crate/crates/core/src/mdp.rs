//! Latent-space search as a Markov decision process.
//!
//! States and actions are both latent vectors. An action (the guidance
//! vector) pulls the state toward itself, `s' = α·s + (1-α)·a`, and the
//! reward combines log target-class confidences of the new state and of the
//! action with a log margin over the runner-up class:
//!
//! ```text
//! r1 = log max(ε, T_y(G(s')))
//! r2 = log max(ε, T_y(G(a)))
//! r3 = log max(ε, T_y(G(s')) - max_{i≠y} T_i(G(s')))
//! R  = w1·r1 + w2·r2 + w3·r3
//! ```

use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{MeteredOracle, QueryPurpose};

/// A point in the k-dimensional latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("latent vectors need at least one component"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("latent components must be finite"));
        }
        Ok(LatentVector(components))
    }

    pub fn zeros(k: usize) -> Self {
        LatentVector(vec![0.0; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub state: f64,
    pub action: f64,
    pub margin: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            state: 2.0,
            action: 2.0,
            margin: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub latent_dim: usize,
    pub num_classes: usize,
    pub target_class: usize,
    pub diversity_factor: f64,
    pub reward_weights: RewardWeights,
    pub clamp_eps: f64,
    pub max_step: usize,
    /// Multiplier applied to the agent's unit-box actions.
    pub action_scale: f64,
    /// Skip the action query when α = 0 and reuse the state reply.
    pub dedup_queries: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            latent_dim: 16,
            num_classes: 10,
            target_class: 0,
            diversity_factor: 0.0,
            reward_weights: RewardWeights::default(),
            clamp_eps: 1e-7,
            max_step: 1,
            action_scale: 1.0,
            dedup_queries: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.num_classes == 0 {
            return bad("latent_dim and num_classes must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.diversity_factor) {
            return bad(format!("diversity_factor {} outside [0, 1]", self.diversity_factor));
        }
        if !(self.clamp_eps > 0.0) {
            return bad(format!("clamp_eps must be positive, got {}", self.clamp_eps));
        }
        if self.target_class >= self.num_classes {
            return bad(format!(
                "target_class {} out of range for {} classes",
                self.target_class, self.num_classes
            ));
        }
        if self.max_step == 0 {
            return bad("max_step must be at least 1".into());
        }
        if !(self.action_scale > 0.0) || !self.action_scale.is_finite() {
            return bad(format!("action_scale must be positive, got {}", self.action_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: LatentVector,
    pub reward: f64,
    pub done: bool,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub state_confidences: Vec<f64>,
    pub action_confidences: Vec<f64>,
    pub queries_spent: u64,
}

/// Initial state drawn from the standard normal prior.
pub fn init_state<R: Rng + ?Sized>(k: usize, rng: &mut R) -> LatentVector {
    LatentVector((0..k).map(|_| StandardNormal.sample(rng)).collect())
}

pub fn transition(s: &[f64], a: &[f64], alpha: f64) -> Result<LatentVector> {
    if s.len() != a.len() {
        return Err(Error::invalid(format!(
            "state has dimension {}, action {}",
            s.len(),
            a.len()
        )));
    }
    Ok(LatentVector(
        s.iter()
            .zip(a)
            .map(|(s, a)| alpha * s + (1.0 - alpha) * a)
            .collect(),
    ))
}

/// `(r1, r2, r3)` from the two confidence vectors. Both r1 and r2 use the
/// same ε floor as the margin term so rewards stay finite.
pub fn reward_terms(
    state_conf: &[f64],
    action_conf: &[f64],
    target: usize,
    eps: f64,
) -> Result<(f64, f64, f64)> {
    if target >= state_conf.len() || target >= action_conf.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} classes",
            state_conf.len().min(action_conf.len())
        )));
    }
    if state_conf.len() != action_conf.len() {
        return Err(Error::invalid("confidence vectors differ in length"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("clamp eps must be positive, got {eps}")));
    }
    let own = state_conf[target];
    let runner_up = state_conf
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, &c)| c)
        .fold(f64::NEG_INFINITY, f64::max);
    // with a single class there is no competitor; the margin is the confidence itself
    let margin = if runner_up.is_finite() { own - runner_up } else { own };
    Ok((
        own.max(eps).ln(),
        action_conf[target].max(eps).ln(),
        margin.max(eps).ln(),
    ))
}

pub fn total_reward(r1: f64, r2: f64, r3: f64, w: &RewardWeights) -> f64 {
    w.state * r1 + w.action * r2 + w.margin * r3
}

/// One environment step. `step_index` counts from 1; the step is terminal
/// when it equals `max_step`.
pub fn env_step(
    state: &[f64],
    action: &[f64],
    oracle: &mut MeteredOracle,
    config: &EnvConfig,
    step_index: usize,
    purpose: QueryPurpose,
) -> Result<StepOutcome> {
    if state.len() != config.latent_dim || action.len() != config.latent_dim {
        return Err(Error::invalid(format!(
            "state/action dimensions {}/{} differ from latent_dim {}",
            state.len(),
            action.len(),
            config.latent_dim
        )));
    }
    let next_state = transition(state, action, config.diversity_factor)?;
    let before = oracle.ledger().total();
    let state_confidences = oracle.query(&next_state, purpose)?.confidence;
    let action_confidences = if config.dedup_queries && config.diversity_factor == 0.0 {
        state_confidences.clone()
    } else {
        oracle.query(action, purpose)?.confidence
    };
    let queries_spent = oracle.ledger().total() - before;
    let (r1, r2, r3) = reward_terms(
        &state_confidences,
        &action_confidences,
        config.target_class,
        config.clamp_eps,
    )?;
    let reward = total_reward(r1, r2, r3, &config.reward_weights);
    Ok(StepOutcome {
        next_state,
        reward,
        done: step_index >= config.max_step,
        r1,
        r2,
        r3,
        state_confidences,
        action_confidences,
        queries_spent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{make_world, QueryLedger, SyntheticOracle, WhichClassifier, WorldParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn oracle() -> MeteredOracle {
        let world = Arc::new(make_world(&WorldParams::default()).unwrap());
        MeteredOracle::new(
            Box::new(SyntheticOracle::new(world, WhichClassifier::Target)),
            Arc::new(QueryLedger::default()),
        )
    }

    #[test]
    fn init_state_shape_and_determinism() {
        let a = init_state(16, &mut ChaCha8Rng::seed_from_u64(4));
        let b = init_state(16, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a.dim(), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn init_state_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let k = 4;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for _ in 0..n {
            let s = init_state(k, &mut rng);
            for i in 0..k {
                sum[i] += s[i];
                sq[i] += s[i] * s[i];
            }
        }
        for i in 0..k {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn transition_endpoints_and_midpoint() {
        let s = [0.3, -1.2, 4.0];
        let a = [1.0, 2.0, -0.5];
        assert_eq!(&*transition(&s, &a, 0.0).unwrap(), &a);
        assert_eq!(&*transition(&s, &a, 1.0).unwrap(), &s);
        assert_eq!(&*transition(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap(), &[0.5, 0.5]);
        assert!(transition(&[1.0], &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn reward_terms_hand_values() {
        let state = [0.5, 0.3, 0.2];
        let action = [0.4, 0.3, 0.3];
        let (r1, r2, r3) = reward_terms(&state, &action, 0, 1e-7).unwrap();
        assert!((r1 - 0.5f64.ln()).abs() < 1e-12);
        assert!((r2 - 0.4f64.ln()).abs() < 1e-12);
        assert!((r3 - 0.2f64.ln()).abs() < 1e-12);
        assert!((r1 + 0.6931).abs() < 1e-4 && (r2 + 0.9163).abs() < 1e-4 && (r3 + 1.6094).abs() < 1e-4);
    }

    #[test]
    fn margin_clamp_branch() {
        let state = [0.1, 0.5, 0.4];
        let (_, _, r3) = reward_terms(&state, &state, 0, 1e-7).unwrap();
        assert_eq!(r3, (1e-7f64).ln());
        assert!((r3 + 16.118).abs() < 1e-3);
    }

    #[test]
    fn one_hot_gives_zero_terms() {
        let conf = [0.0, 1.0, 0.0];
        let (r1, r2, r3) = reward_terms(&conf, &conf, 1, 1e-7).unwrap();
        assert_eq!((r1, r2, r3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_confidence_is_clamped() {
        let conf = [0.0, 1.0];
        let (r1, r2, _) = reward_terms(&conf, &conf, 0, 1e-7).unwrap();
        assert_eq!(r1, (1e-7f64).ln());
        assert_eq!(r2, (1e-7f64).ln());
    }

    #[test]
    fn bad_class_index_is_rejected() {
        assert!(reward_terms(&[0.5, 0.5], &[0.5, 0.5], 2, 1e-7).is_err());
    }

    #[test]
    fn total_reward_examples() {
        let w = RewardWeights::default();
        let r = total_reward(-0.6931, -0.9163, -1.6094, &w);
        assert!((r + 16.0940).abs() < 1e-3, "{r}");
        assert_eq!(total_reward(0.0, 0.0, 0.0, &w), 0.0);
        let proj = RewardWeights { state: 1.0, action: 0.0, margin: 0.0 };
        assert_eq!(total_reward(-0.3, -5.0, -7.0, &proj), -0.3);
    }

    #[test]
    fn env_step_spends_two_queries_and_terminates() {
        let mut o = oracle();
        let config = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = init_state(16, &mut rng);
        let a = init_state(16, &mut rng);
        let out = env_step(&s, &a, &mut o, &config, 1, QueryPurpose::Training).unwrap();
        assert_eq!(out.queries_spent, 2);
        assert_eq!(o.ledger().total(), 2);
        assert!(out.done);
        // α = 0: both queries hit the same latent
        assert_eq!(out.state_confidences, out.action_confidences);
        assert_eq!(out.r1, out.r2);
        assert_eq!(out.reward, total_reward(out.r1, out.r2, out.r3, &config.reward_weights));
    }

    #[test]
    fn env_step_done_only_on_last_step_and_dedup_halves_queries() {
        let mut o = oracle();
        let config = EnvConfig { max_step: 3, ..Default::default() };
        let s = LatentVector::zeros(16);
        let a = LatentVector::new(vec![0.5; 16]).unwrap();
        assert!(!env_step(&s, &a, &mut o, &config, 1, QueryPurpose::Training).unwrap().done);
        assert!(env_step(&s, &a, &mut o, &config, 3, QueryPurpose::Training).unwrap().done);
        let dedup = EnvConfig { dedup_queries: true, ..Default::default() };
        let out = env_step(&s, &a, &mut o, &dedup, 1, QueryPurpose::Training).unwrap();
        assert_eq!(out.queries_spent, 1);
    }

    #[test]
    fn env_step_is_deterministic() {
        let config = EnvConfig { diversity_factor: 0.4, target_class: 3, ..Default::default() };
        let s = LatentVector::new((0..16).map(|i| i as f64 / 10.0).collect()).unwrap();
        let a = LatentVector::new(vec![-0.2; 16]).unwrap();
        let x = env_step(&s, &a, &mut oracle(), &config, 1, QueryPurpose::Training).unwrap();
        let y = env_step(&s, &a, &mut oracle(), &config, 1, QueryPurpose::Training).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::default().validate().is_ok());
        for bad in [
            EnvConfig { diversity_factor: 1.5, ..Default::default() },
            EnvConfig { clamp_eps: 0.0, ..Default::default() },
            EnvConfig { target_class: 10, ..Default::default() },
            EnvConfig { max_step: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    fn confidences(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.001f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn transition_is_linear(
            s in proptest::collection::vec(-5.0f64..5.0, 6),
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            s2 in proptest::collection::vec(-5.0f64..5.0, 6),
            a2 in proptest::collection::vec(-5.0f64..5.0, 6),
            alpha in 0.0f64..=1.0,
        ) {
            let lhs1 = transition(&s, &a, alpha).unwrap();
            let lhs2 = transition(&s2, &a2, alpha).unwrap();
            let ss: Vec<f64> = s.iter().zip(&s2).map(|(x, y)| x + y).collect();
            let aa: Vec<f64> = a.iter().zip(&a2).map(|(x, y)| x + y).collect();
            let rhs = transition(&ss, &aa, alpha).unwrap();
            for i in 0..6 {
                prop_assert!((lhs1[i] + lhs2[i] - rhs[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn reward_terms_are_ordered_and_nonpositive(state in confidences(5), action in confidences(5), y in 0usize..5) {
            let (r1, r2, r3) = reward_terms(&state, &action, y, 1e-7).unwrap();
            prop_assert!(r3 <= r1);
            prop_assert!(r1 <= 0.0 && r2 <= 0.0 && r3 <= 0.0);
        }

        #[test]
        fn raising_target_confidence_never_lowers_r1_or_r3(state in confidences(4), y in 0usize..4, boost in 0.0f64..1.0) {
            // move `boost` of the remaining mass onto y, scaling the others proportionally
            let own = state[y];
            let new_own = own + boost * (1.0 - own);
            let scale = if own < 1.0 { (1.0 - new_own) / (1.0 - own) } else { 1.0 };
            let boosted: Vec<f64> = state
                .iter()
                .enumerate()
                .map(|(i, &c)| if i == y { new_own } else { c * scale })
                .collect();
            let (r1a, _, r3a) = reward_terms(&state, &state, y, 1e-7).unwrap();
            let (r1b, _, r3b) = reward_terms(&boosted, &boosted, y, 1e-7).unwrap();
            prop_assert!(r1b >= r1a - 1e-12);
            prop_assert!(r3b >= r3a - 1e-12);
        }
    }
}
