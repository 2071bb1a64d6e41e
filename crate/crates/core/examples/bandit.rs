//! Critics of all three agents learning the value of a one-state bandit
//! with a fixed terminal reward.

use latent_inversion::agents::{AgentBundle, AgentHyperparams, Algorithm, ReplayBuffer, TransitionRecord};
use latent_inversion::mdp::LatentVector;
use latent_inversion::tensor::Matrix;

fn main() -> latent_inversion::Result<()> {
    let reward = 1.5;
    let state = LatentVector::new(vec![0.2])?;
    let action = LatentVector::new(vec![-0.4])?;
    for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
        let hyper = AgentHyperparams { hidden_sizes: vec![32, 32], batch_size: 32, ..Default::default() };
        let mut agent = AgentBundle::new(alg, 1, 1.0, hyper, 3)?;
        let mut buffer = ReplayBuffer::new(4, 1)?;
        buffer.push(TransitionRecord {
            state: state.clone(),
            action: action.clone(),
            reward,
            next_state: action.clone(),
            done: true,
        })?;
        let input = Matrix::from_vec(1, 2, vec![state[0], action[0]])?;
        for step in 0..=2000 {
            if step % 500 == 0 {
                println!("{alg} update {step:>4}: Q = {:.5}", agent.critics()[0].predict(&input)?.get(0, 0));
            }
            let batch = agent.sample_batch(&buffer)?;
            agent.update(&batch)?;
        }
    }
    println!("target value {reward}");
    Ok(())
}
