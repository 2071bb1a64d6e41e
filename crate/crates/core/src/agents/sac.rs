//! Soft actor-critic with twin critics and optional automatic temperature.

use super::{gaussian_matrix, q_values, AgentBundle, LossReport, TransitionRecord};
use crate::error::{Error, Result};
use crate::tensor::{squashed_gaussian_backward, squashed_gaussian_sample, Matrix};

impl AgentBundle {
    /// Soft Bellman critic step, policy step against the smaller critic,
    /// temperature step, then Polyak averaging of the critic targets.
    pub fn sac_update(&mut self, records: &[TransitionRecord]) -> Result<LossReport> {
        let batch = self.to_batch(records)?;
        let n = batch.rewards.len();
        let k = self.latent_dim;
        let gamma = self.hyper.discount;
        let temp = self.temperature();

        // soft Bellman targets
        let next_out = self.policy.predict(&batch.next_states)?;
        let noise = gaussian_matrix(n, k, 1.0, &mut self.rng);
        let next = squashed_gaussian_sample(&next_out.columns(0, k), &next_out.columns(k, 2 * k), &noise)?;
        let q1 = q_values(&self.critic_targets[0], &batch.next_states, &next.action)?;
        let q2 = q_values(&self.critic_targets[1], &batch.next_states, &next.action)?;
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let soft = q1[i].min(q2[i]) - temp * next.log_prob[i];
                batch.rewards[i] + gamma * batch.not_done[i] * soft
            })
            .collect();

        let critic_losses = self.critic_step(&batch, &targets)?;

        // policy: minimize mean(temp·log π(ã|s) - min_i Q_i(s, ã))
        let trace = self.policy.forward(&batch.states)?;
        let out = trace.output();
        let noise = gaussian_matrix(n, k, 1.0, &mut self.rng);
        let sample = squashed_gaussian_sample(&out.columns(0, k), &out.columns(k, 2 * k), &noise)?;
        let input = batch.states.hstack(&sample.action)?;
        let t1 = self.critics[0].forward(&input)?;
        let t2 = self.critics[1].forward(&input)?;
        let (v1, v2) = (t1.output().values(), t2.output().values());
        let inv_n = 1.0 / n as f64;
        let mut g1 = Matrix::zeros(n, 1);
        let mut g2 = Matrix::zeros(n, 1);
        let mut policy_loss = 0.0;
        for i in 0..n {
            let q = if v1[i] <= v2[i] {
                g1.set(i, 0, -inv_n);
                v1[i]
            } else {
                g2.set(i, 0, -inv_n);
                v2[i]
            };
            policy_loss += (temp * sample.log_prob[i] - q) * inv_n;
        }
        if !policy_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "sac policy loss is {policy_loss} at update {}",
                self.updates
            )));
        }
        let d1 = self.critics[0].input_gradient(&t1, &g1)?;
        let d2 = self.critics[1].input_gradient(&t2, &g2)?;
        let mut action_grad = Matrix::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                action_grad.set(i, j, d1.get(i, k + j) + d2.get(i, k + j));
            }
        }
        let logp_grad = vec![temp * inv_n; n];
        let (d_mean, d_log_std) = squashed_gaussian_backward(&sample, &action_grad, &logp_grad)?;
        let out_grad = d_mean.hstack(&d_log_std)?;
        let (pg, _) = self.policy.backward(&trace, &out_grad)?;
        self.policy_opt.step(self.policy.params_mut(), &pg.values)?;

        let mean_log_prob = sample.log_prob.iter().sum::<f64>() * inv_n;
        if let Some(opt) = self.temperature_opt.as_mut() {
            // loss = -log_temp · (log π + target_entropy), log π held fixed
            let grad = -(mean_log_prob + self.hyper.sac.target_entropy.unwrap_or(-(k as f64)));
            let mut p = [self.log_temperature];
            opt.step(&mut p, &[grad])?;
            self.log_temperature = p[0];
        }

        self.soft_update_targets()?;
        self.updates += 1;
        Ok(LossReport {
            critic_losses,
            policy_loss: Some(policy_loss),
            entropy: Some(-mean_log_prob),
            temperature: Some(self.temperature()),
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::agents::{AgentBundle, AgentHyperparams, Algorithm, TransitionRecord};
    use crate::mdp::LatentVector;

    fn record(reward: f64, done: bool) -> TransitionRecord {
        TransitionRecord {
            state: LatentVector::new(vec![0.2, -0.1]).unwrap(),
            action: LatentVector::new(vec![0.5, 0.5]).unwrap(),
            reward,
            next_state: LatentVector::new(vec![0.5, 0.5]).unwrap(),
            done,
        }
    }

    fn agent(tau: f64) -> AgentBundle {
        let hyper = AgentHyperparams {
            hidden_sizes: vec![16],
            soft_update: tau,
            batch_size: 4,
            ..Default::default()
        };
        AgentBundle::new(Algorithm::Sac, 2, 1.0, hyper, 3).unwrap()
    }

    #[test]
    fn tau_one_copies_online_into_targets() {
        let mut a = agent(1.0);
        a.sac_update(&vec![record(-1.0, true); 4]).unwrap();
        for (t, o) in a.critic_targets().iter().zip(a.critics()) {
            assert_eq!(t.params(), o.params());
        }
    }

    #[test]
    fn terminal_batch_targets_reward_only() {
        // With done set the target ignores the next state, so two agents that
        // differ only in their target critics produce the same critic step.
        let mut a = agent(0.01);
        let mut b = a.clone();
        for t in b.critic_targets.iter_mut() {
            t.params_mut().iter_mut().for_each(|p| *p += 0.3);
        }
        let batch = vec![record(-2.0, true); 4];
        let la = a.sac_update(&batch).unwrap();
        let lb = b.sac_update(&batch).unwrap();
        assert_eq!(la.critic_losses, lb.critic_losses);
        assert_eq!(a.critics()[0].params(), b.critics()[0].params());
    }

    #[test]
    fn update_keeps_parameter_counts() {
        let mut a = agent(0.01);
        let before = a.param_count();
        for _ in 0..5 {
            a.sac_update(&[record(-1.0, false), record(0.5, true)]).unwrap();
        }
        assert_eq!(a.param_count(), before);
        assert_eq!(a.update_count(), 5);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(agent(0.01).sac_update(&[]).is_err());
    }
}
