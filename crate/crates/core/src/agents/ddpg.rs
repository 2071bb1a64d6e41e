use super::{q_values, AgentBundle, LossReport, TransitionRecord};
use crate::error::{Error, Result};

impl AgentBundle {
    /// Single-critic deterministic policy gradient with target networks.
    pub fn ddpg_update(&mut self, records: &[TransitionRecord]) -> Result<LossReport> {
        let batch = self.to_batch(records)?;
        let n = batch.rewards.len();
        let gamma = self.hyper.discount;
        let target_policy = self
            .policy_target
            .as_ref()
            .ok_or_else(|| Error::invalid("agent has no target policy"))?;
        let next_actions = target_policy.predict(&batch.next_states)?.map(f64::tanh);
        let q = q_values(&self.critic_targets[0], &batch.next_states, &next_actions)?;
        let targets: Vec<f64> = (0..n)
            .map(|i| batch.rewards[i] + gamma * batch.not_done[i] * q[i])
            .collect();
        let critic_losses = self.critic_step(&batch, &targets)?;
        let policy_loss = self.deterministic_policy_step(&batch.states)?;
        self.soft_update_targets()?;
        self.updates += 1;
        Ok(LossReport {
            critic_losses,
            policy_loss: Some(policy_loss),
            entropy: None,
            temperature: None,
        })
    }
}
