mod common;

use common::{bandit_critic_value, mlp_gradient_check};
use latent_inversion::agents::Algorithm;

#[test]
fn mlp_gradients_match_central_differences() {
    for seed in 0..3 {
        let (worst, _) = mlp_gradient_check(seed, 100);
        assert!(worst < 1e-4, "seed {seed}: relative error {worst:e}");
    }
}

#[test]
fn critics_converge_on_the_fixed_reward_bandit() {
    for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
        for reward in [1.0, -2.5] {
            let q = bandit_critic_value(alg, reward, 2000, 7);
            assert!((q - reward).abs() < 1e-2, "{alg} reward {reward}: critic {q}");
        }
    }
}
