//! Independent reference implementations shared by the integration and
//! acceptance tests.

#![allow(dead_code)]

use std::time::Instant;

use latent_inversion::agents::{AgentBundle, AgentHyperparams, Algorithm, ReplayBuffer, TransitionRecord};
use latent_inversion::harness::ExperimentConfig;
use latent_inversion::mdp::LatentVector;
use latent_inversion::oracles::SyntheticWorld;
use latent_inversion::tensor::{Activation, AdamConfig, AdamState, Matrix, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).powi(2);
    }
    s.sqrt()
}

pub fn brute_knn_dist(recon: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for r in recon {
        let mut all: Vec<f64> = target.iter().map(|t| dist(r, t)).collect();
        all.sort_by(f64::total_cmp);
        total += all[0];
    }
    total / recon.len() as f64
}

pub fn brute_feat_dist(recon: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let d = target[0].len();
    let mut centroid = vec![0.0; d];
    for j in 0..d {
        let mut s = 0.0;
        for t in target {
            s += t[j];
        }
        centroid[j] = s / target.len() as f64;
    }
    recon.iter().map(|r| dist(r, &centroid)).sum::<f64>() / recon.len() as f64
}

/// Every (fake, real) ball-membership test spelled out; radii from a full
/// sort of each real point's distances to the others.
pub fn brute_density_coverage(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> (f64, f64) {
    let radii: Vec<f64> = (0..real.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..real.len()).filter(|&j| j != i).map(|j| dist(&real[i], &real[j])).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let mut inside = 0usize;
    let mut covered = 0usize;
    for i in 0..real.len() {
        let mut hit = false;
        for f in fake {
            if dist(f, &real[i]) < radii[i] {
                inside += 1;
                hit = true;
            }
        }
        covered += hit as usize;
    }
    (inside as f64 / (k * fake.len()) as f64, covered as f64 / real.len() as f64)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| offset + rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Largest relative error between analytic and central-difference
/// gradients over `coords` random parameter coordinates of a random
/// 4-8-4 network, for the loss `Σ c ⊙ net(x)`.
pub fn mlp_gradient_check(seed: u64, coords: usize) -> (f64, std::time::Duration) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&[4, 8, 4], Activation::Tanh, &mut rng).unwrap();
    let x = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let c = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let loss = |m: &Mlp| -> f64 {
        let out = m.predict(&x).unwrap();
        out.values().iter().zip(c.values()).map(|(o, w)| o * w).sum()
    };
    let trace = net.forward(&x).unwrap();
    let (grads, _) = net.backward(&trace, &c).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng.random_range(0..net.param_count());
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let analytic = grads.values[i];
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    (worst, start.elapsed())
}

/// Critic estimate after `updates` updates on a one-state, one-action
/// bandit with reward `reward` and terminal transitions.
pub fn bandit_critic_value(algorithm: Algorithm, reward: f64, updates: usize, seed: u64) -> f64 {
    let hyper = AgentHyperparams {
        hidden_sizes: vec![32, 32],
        batch_size: 32,
        ..Default::default()
    };
    let mut agent = AgentBundle::new(algorithm, 1, 1.0, hyper, seed).unwrap();
    let state = LatentVector::new(vec![0.25]).unwrap();
    let action = LatentVector::new(vec![-0.5]).unwrap();
    let mut buffer = ReplayBuffer::new(8, 1).unwrap();
    buffer
        .push(TransitionRecord {
            state: state.clone(),
            action: action.clone(),
            reward,
            next_state: action.clone(),
            done: true,
        })
        .unwrap();
    for _ in 0..updates {
        let batch = agent.sample_batch(&buffer).unwrap();
        agent.update(&batch).unwrap();
    }
    let input = Matrix::from_vec(1, 2, vec![state[0], action[0]]).unwrap();
    agent.critics()[0].predict(&input).unwrap().get(0, 0)
}

/// Gradient ascent on `ln T_y(G(z))` using the world's weights directly,
/// from `z = 0`. Returns the reached target confidence.
pub fn direct_optimize(world: &SyntheticWorld, class: usize, steps: usize) -> f64 {
    let k = world.params.latent_dim;
    let d = world.params.feature_dim;
    let t = world.params.temperature;
    let w = &world.generator;
    let mu = &world.target_centroids;
    let mut z = vec![0.0; k];
    let mut adam = AdamState::new(k, AdamConfig::with_learning_rate(0.05));
    let confidence = |z: &[f64]| {
        let x = world.generate(z).unwrap();
        world
            .classify(&x, latent_inversion::oracles::WhichClassifier::Target)
            .unwrap()[class]
    };
    for _ in 0..steps {
        let x: Vec<f64> = (0..d)
            .map(|i| (0..k).map(|j| w.get(i, j) * z[j]).sum::<f64>().tanh())
            .collect();
        let logits: Vec<f64> = (0..mu.rows()).map(|c| -dist(&x, mu.row(c)).powi(2) / t).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        // d ln p_y / dx = (-2(x - μ_y) + 2 Σ_c p_c (x - μ_c)) / t
        let dx: Vec<f64> = (0..d)
            .map(|i| {
                let expected: f64 = (0..mu.rows()).map(|c| p[c] * (x[i] - mu.get(c, i))).sum();
                (-2.0 * (x[i] - mu.get(class, i)) + 2.0 * expected) / t
            })
            .collect();
        let grad: Vec<f64> = (0..k)
            .map(|j| -(0..d).map(|i| dx[i] * (1.0 - x[i] * x[i]) * w.get(i, j)).sum::<f64>())
            .collect();
        adam.step(&mut z, &grad).unwrap();
        if confidence(&z) > 0.999 {
            break;
        }
    }
    confidence(&z)
}

/// A small synthetic experiment that runs in well under a second.
pub fn small_config(max_episodes: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.oracle = "synth:num_classes=3,latent_dim=4,feature_dim=8,separation=1.0".into();
    c.max_episodes = max_episodes;
    c.warmup_steps = 16;
    c.agent.hidden_sizes = vec![16];
    c.agent.batch_size = 16;
    c.samples_per_class = 50;
    c.private_samples = 40;
    c.checkpoint_interval = 0;
    c
}
