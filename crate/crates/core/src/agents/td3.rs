//! Twin delayed deterministic policy gradient.

use super::{gaussian_matrix, q_values, AgentBundle, LossReport, TransitionRecord};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

impl AgentBundle {
    /// Smoothed target-policy actions: `clip(μ'(s') + clip(ε, ±c), ±1)`.
    pub fn td3_target_actions(&mut self, next_states: &Matrix) -> Result<Matrix> {
        let target = self
            .policy_target
            .as_ref()
            .ok_or_else(|| Error::invalid("agent has no target policy"))?;
        let mut a = target.predict(next_states)?.map(f64::tanh);
        let p = &self.hyper.td3;
        let noise = gaussian_matrix(a.rows(), a.cols(), p.target_noise, &mut self.rng);
        for (v, e) in a.values_mut().iter_mut().zip(noise.values()) {
            *v = (*v + e.clamp(-p.noise_clip, p.noise_clip)).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Clipped double-Q critic step every call; policy and target updates
    /// only when `update_index` is a multiple of the policy delay.
    pub fn td3_update(&mut self, records: &[TransitionRecord], update_index: u64) -> Result<LossReport> {
        let batch = self.to_batch(records)?;
        let n = batch.rewards.len();
        let gamma = self.hyper.discount;

        let next_actions = self.td3_target_actions(&batch.next_states)?;
        let q1 = q_values(&self.critic_targets[0], &batch.next_states, &next_actions)?;
        let q2 = q_values(&self.critic_targets[1], &batch.next_states, &next_actions)?;
        let targets: Vec<f64> = (0..n)
            .map(|i| batch.rewards[i] + gamma * batch.not_done[i] * q1[i].min(q2[i]))
            .collect();
        let critic_losses = self.critic_step(&batch, &targets)?;

        let policy_loss = if update_index % self.hyper.td3.policy_delay == 0 {
            let loss = self.deterministic_policy_step(&batch.states)?;
            self.soft_update_targets()?;
            Some(loss)
        } else {
            None
        };
        self.updates += 1;
        Ok(LossReport {
            critic_losses,
            policy_loss,
            entropy: None,
            temperature: None,
        })
    }

    /// Ascends the first critic along `a = tanh(policy(s))`.
    pub(crate) fn deterministic_policy_step(&mut self, states: &Matrix) -> Result<f64> {
        let n = states.rows();
        let k = self.latent_dim;
        let trace = self.policy.forward(states)?;
        let actions = trace.output().map(f64::tanh);
        let input = states.hstack(&actions)?;
        let critic_trace = self.critics[0].forward(&input)?;
        let inv_n = 1.0 / n as f64;
        let loss = -critic_trace.output().values().iter().sum::<f64>() * inv_n;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} policy loss is {loss} at update {}",
                self.algorithm, self.updates
            )));
        }
        let dq = self.critics[0].input_gradient(&critic_trace, &Matrix::from_vec(n, 1, vec![-inv_n; n])?)?;
        let mut out_grad = Matrix::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                let a = actions.get(i, j);
                out_grad.set(i, j, dq.get(i, k + j) * (1.0 - a * a));
            }
        }
        let (g, _) = self.policy.backward(&trace, &out_grad)?;
        self.policy_opt.step(self.policy.params_mut(), &g.values)?;
        Ok(loss)
    }
}
