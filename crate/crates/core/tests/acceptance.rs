//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use latent_inversion::agents::Algorithm;
use latent_inversion::harness::{read_reports, AlphaRow, Experiment, ExperimentConfig, RunSummary};
use latent_inversion::mdp::{env_step, reward_terms, total_reward, transition, EnvConfig, LatentVector, RewardWeights};
use latent_inversion::metrics::{density_coverage, feat_dist, knn_dist, FeatureSet};
use latent_inversion::oracles::{make_world, MeteredOracle, QueryLedger, QueryPurpose, SyntheticOracle, WhichClassifier, WorldParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
/// Hidden width of every trained agent; the remaining hyperparameters are the defaults.
const HIDDEN: usize = 32;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn gradient() -> Outcome {
    let (worst, elapsed) = common::mlp_gradient_check(11, 100);
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(5),
        format!("worst relative error {worst:.2e} (< 1e-4), {:.2}s (< 5s)", elapsed.as_secs_f64()),
    )
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-4096i32..0) as f64 / 1024.0
}

fn mdp_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();

    for _ in 0..200 {
        let s: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        if *transition(&s, &a, 0.0).unwrap() != a[..] {
            failures.push("alpha=0 does not give s'=a");
        }
        if *transition(&s, &a, 1.0).unwrap() != s[..] {
            failures.push("alpha=1 does not give s'=s");
        }
    }

    let eps: f64 = 1e-7;
    let floor = eps.ln();
    let cases: [(&[f64], f64); 4] = [
        (&[0.0, 1.0], floor),
        (&[1e-12, 1.0 - 1e-12], floor),
        (&[eps, 1.0 - eps], floor),
        (&[2e-7, 1.0 - 2e-7], 2e-7f64.ln()),
    ];
    for (conf, want) in cases {
        let (r1, r2, r3) = reward_terms(conf, conf, 0, eps).unwrap();
        if r1 != want || r2 != want || r3 != floor {
            failures.push("clamp at 1e-7");
        }
    }
    let (_, _, r3) = reward_terms(&[0.6, 0.4], &[0.6, 0.4], 0, eps).unwrap();
    if r3 != (0.6f64 - 0.4).ln() {
        failures.push("unclamped margin");
    }

    for _ in 0..200 {
        let (r1, r2, r3) = (dyadic(&mut rng), dyadic(&mut rng), dyadic(&mut rng));
        let w: [f64; 6] = std::array::from_fn(|_| rng.random_range(0..16) as f64);
        let u = RewardWeights { state: w[0], action: w[1], margin: w[2] };
        let v = RewardWeights { state: w[3], action: w[4], margin: w[5] };
        let sum = RewardWeights { state: w[0] + w[3], action: w[1] + w[4], margin: w[2] + w[5] };
        let scaled = RewardWeights { state: 4.0 * w[0], action: 4.0 * w[1], margin: 4.0 * w[2] };
        if total_reward(r1, r2, r3, &sum) != total_reward(r1, r2, r3, &u) + total_reward(r1, r2, r3, &v) {
            failures.push("additivity in weights");
        }
        if total_reward(r1, r2, r3, &scaled) != 4.0 * total_reward(r1, r2, r3, &u) {
            failures.push("homogeneity in weights");
        }
    }

    let world = Arc::new(make_world(&WorldParams::default()).unwrap());
    let ledger = Arc::new(QueryLedger::default());
    let mut oracle = MeteredOracle::new(Box::new(SyntheticOracle::new(world, WhichClassifier::Target)), ledger.clone());
    for alpha in [0.0, 0.3, 0.9, 1.0] {
        let config = EnvConfig { diversity_factor: alpha, target_class: 4, max_step: 5, ..Default::default() };
        let mut s = LatentVector::new((0..16).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        for step in 1..=5 {
            let a = LatentVector::new((0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let before = ledger.total();
            let out = env_step(&s, &a, &mut oracle, &config, step, QueryPurpose::Training).unwrap();
            if out.queries_spent != 2 || ledger.total() - before != 2 {
                failures.push("two queries per step");
            }
            if out.reward != total_reward(out.r1, out.r2, out.r3, &config.reward_weights) {
                failures.push("reward is the weighted sum");
            }
            s = out.next_state;
        }
    }

    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "alpha endpoints, clamp at 1e-7, linearity in weights, 2 queries per step: all exact".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    )
}

fn bandit() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for alg in [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg] {
        for reward in [1.0, -2.5] {
            let q = common::bandit_critic_value(alg, reward, 2000, 7);
            worst = worst.max((q - reward).abs());
            parts.push(format!("{alg} {q:.4}/{reward}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-2 && elapsed < Duration::from_secs(60),
        format!(
            "worst |Q - r| {worst:.2e} (< 1e-2) after 2000 updates, {:.1}s (< 60s) [{}]",
            elapsed.as_secs_f64(),
            parts.join(", ")
        ),
    )
}

fn trained_config(alg: Algorithm, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.algorithm = alg;
    c.agent.hidden_sizes = vec![HIDDEN, HIDDEN];
    c.checkpoint_interval = 0;
    c.seeds.agent = seed;
    c.seeds.episodes = seed;
    c
}

struct SeedRun {
    attack: RunSummary,
    random: RunSummary,
}

fn attack_runs(alg: Algorithm, with_baseline: bool) -> Vec<SeedRun> {
    SEEDS
        .iter()
        .map(|&seed| {
            let e = Experiment::from_config(trained_config(alg, seed)).unwrap();
            let attack = e.run_attack().unwrap();
            let random = if with_baseline {
                e.random_search_baseline(e.attack_query_budget()).unwrap()
            } else {
                attack.clone()
            };
            SeedRun { attack, random }
        })
        .collect()
}

fn accuracy(s: &RunSummary) -> f64 {
    s.metrics.as_ref().map_or(0.0, |m| m.attack_accuracy)
}

fn end_to_end(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let world = make_world(&WorldParams::default()).unwrap();
    let attainable = (0..world.num_classes())
        .map(|c| common::direct_optimize(&world, c, 3000))
        .fold(f64::INFINITY, f64::min);
    let acc: Vec<f64> = runs.iter().map(|r| accuracy(&r.attack)).collect();
    let rl: Vec<f64> = runs.iter().map(|r| r.attack.mean_best_confidence().unwrap_or(0.0)).collect();
    let rs: Vec<f64> = runs.iter().map(|r| r.random.mean_best_confidence().unwrap_or(0.0)).collect();
    let equal_budget = runs.iter().all(|r| r.attack.queries.total == r.random.queries.total);
    let acc_ok = acc.iter().all(|&a| a >= 0.8);
    let beats = rl.iter().zip(&rs).all(|(a, b)| a > b);
    let pass = attainable > 0.99 && acc_ok && beats && equal_budget && elapsed < Duration::from_secs(900);
    outcome(
        pass,
        format!(
            "direct optimization min conf {attainable:.6} (> 0.99); attack acc {acc:?} (>= 0.8: {acc_ok}); \
             mean best conf SAC {rl:?} vs random search {rs:?} at {} queries (strictly higher: {beats}); {:.0}s (< 900s)",
            runs[0].attack.queries.total,
            elapsed.as_secs_f64()
        ),
    )
}

fn ranking(sac: &[SeedRun], td3: &[SeedRun], ddpg: &[SeedRun]) -> Outcome {
    let med = |runs: &[SeedRun]| median(runs.iter().map(|r| accuracy(&r.attack)).collect());
    let (s, t, d) = (med(sac), med(td3), med(ddpg));
    outcome(
        s >= t - 0.1 && t >= d - 0.1,
        format!("median attack acc SAC {s:.3}, TD3 {t:.3}, DDPG {d:.3} (SAC >= TD3 - 0.1, TD3 >= DDPG - 0.1)"),
    )
}

/// Classes attacked per seed in the diversity sweep.
const DIVERSITY_CLASSES: usize = 3;

fn diversity() -> Outcome {
    let rows: Vec<Vec<AlphaRow>> = SEEDS
        .iter()
        .map(|&seed| {
            let mut c = trained_config(Algorithm::Sac, seed);
            c.target_classes = (0..DIVERSITY_CLASSES).collect();
            Experiment::from_config(c).unwrap().sweep_alpha(&[0.0, 0.9]).unwrap()
        })
        .collect();
    let med = |i: usize, f: fn(&AlphaRow) -> f64| median(rows.iter().map(|r| f(&r[i])).collect());
    let acc = |r: &AlphaRow| r.attack_acc;
    let cov = |r: &AlphaRow| r.coverage.unwrap_or(f64::NAN);
    let den = |r: &AlphaRow| r.density.unwrap_or(f64::NAN);
    let (acc0, acc9) = (med(0, acc), med(1, acc));
    let (cov0, cov9) = (med(0, cov), med(1, cov));
    let (den0, den9) = (med(0, den), med(1, den));
    let variation = (den0.max(den9) - den0.min(den9)) / den0.max(den9);
    outcome(
        cov9 > cov0 && acc0 > acc9 && variation < 0.5,
        format!(
            "medians over {} classes: coverage {cov0:.4} -> {cov9:.4} (must rise: {}), attack acc {acc0:.3} -> {acc9:.3} \
             (must fall: {}), density {den0:.4} -> {den9:.4} (variation {:.0}% < 50%: {})",
            DIVERSITY_CLASSES,
            cov9 > cov0,
            acc0 > acc9,
            100.0 * variation,
            variation < 0.5
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let n = rng.random_range(20..=50);
        let m = rng.random_range(20..=50);
        let d = rng.random_range(2..=8);
        let real = common::random_points(&mut rng, n, d, 0.0);
        let fake = common::random_points(&mut rng, m, d, 0.2 * (trial % 4) as f64);
        let k = rng.random_range(1..=5);
        let (dens, cov) = density_coverage(&real, &fake, k).unwrap();
        let (bd, bc) = common::brute_density_coverage(&real, &fake, k);
        let target = FeatureSet::new(0, real.clone()).unwrap();
        worst = worst
            .max((knn_dist(&fake, &target).unwrap() - common::brute_knn_dist(&fake, &real)).abs())
            .max((feat_dist(&fake, &target).unwrap() - common::brute_feat_dist(&fake, &real)).abs())
            .max((dens - bd).abs())
            .max((cov - bc).abs());
    }
    outcome(worst <= 1e-9, format!("worst deviation from brute force {worst:.2e} over 40 instances (<= 1e-9)"))
}

fn cli_attack(dir: &std::path::Path) -> RunSummary {
    let status = Command::new(env!("CARGO_BIN_EXE_latent-inversion"))
        .args(["attack", "--seed", "9", "--episodes", "40", "--classes", "0,5", "--output"])
        .arg(dir)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    read_reports(dir).unwrap()
}

fn determinism() -> Outcome {
    let mut c = trained_config(Algorithm::Sac, 4);
    c.max_episodes = 300;
    c.target_classes = vec![1, 7];
    let a = Experiment::from_config(c.clone()).unwrap().run_attack().unwrap();
    let b = Experiment::from_config(c).unwrap().run_attack().unwrap();
    let in_process = a.without_timing() == b.without_timing() && a.episodes == b.episodes;

    let dir = tempfile::tempdir().unwrap();
    let (run, first) = (dir.path().join("run"), dir.path().join("first"));
    let x = cli_attack(&run);
    std::fs::rename(&run, &first).unwrap();
    let y = cli_attack(&run);
    let files = ["episodes.csv", "metrics.csv", "config.toml"]
        .iter()
        .all(|f| std::fs::read(first.join(f)).unwrap() == std::fs::read(run.join(f)).unwrap());
    let cli = x.without_timing() == y.without_timing() && x.episodes == y.episodes && files;
    outcome(
        in_process && cli,
        format!(
            "in-process rerun identical: {in_process} ({} episodes); CLI rerun identical logs and summaries: {cli}",
            a.episodes.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("gradient correctness", gradient());
    report("mdp laws", mdp_laws());
    report("bandit fixed points", bandit());
    report("metric oracles", metric_oracles());
    report("determinism", determinism());

    let start = Instant::now();
    let sac = attack_runs(Algorithm::Sac, true);
    report("end-to-end synthetic attack", end_to_end(&sac, start.elapsed()));
    let td3 = attack_runs(Algorithm::Td3, false);
    let ddpg = attack_runs(Algorithm::Ddpg, false);
    report("agent ranking", ranking(&sac, &td3, &ddpg));
    report("diversity trade-off", diversity());

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
