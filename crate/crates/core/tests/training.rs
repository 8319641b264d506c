//! Policy-gradient estimator, rollout baseline and training-loop checks.

mod common;

use common::{forced_log_prob, max_rel_err, numeric_gradient, seeded, tiny};
use rand::Rng;

use windsched::decoder::DecodeMode;
use windsched::seeds::derive_seed;
use windsched::trainer::{self, reinforce_gradient, resume_from, rollout_baseline, Baseline, BaselineMode};
use windsched::{train, CasePreset, Instance, Model, ModelConfig, TrainConfig};

fn micro_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        instances_per_epoch: 24,
        batch_size: 8,
        n_baseline_rollouts: 3,
        model: ModelConfig::micro(4),
        validation_instances: 4,
        ..TrainConfig::desk(CasePreset::DeskA)
    }
}

/// Micro-sized instance (three turbines, two periods of two slots).
fn micro_instance(seed: u64) -> Instance {
    let mut rng = seeded(seed);
    let mut inst = common::random_instance(&mut rng, 3, 2, 2, 2, 2);
    inst.visit_cost = 40.0;
    inst
}

fn micro_model(seed: u64) -> Model {
    let mut config = ModelConfig::micro(2);
    config.decoder.logit_scale = 3.0;
    Model::new(config, seed).unwrap()
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let model = micro_model(1);
    let batch: Vec<Instance> = (0..3).map(micro_instance).collect();
    let seeds = [11u64, 12, 13];
    let b = 250.0;
    let bg = reinforce_gradient(&model, &batch, Baseline::Fixed(b), &seeds).unwrap();

    // the estimator's first draw from each seeded stream is the sampled decode
    let samples: Vec<(Vec<usize>, f64)> = batch
        .iter()
        .zip(seeds)
        .map(|(inst, s)| {
            let sol = model.solve(inst, &DecodeMode::Sample, &mut seeded(s)).unwrap();
            (sol.sequence, sol.sequence_cost)
        })
        .collect();
    let mean_cost = samples.iter().map(|s| s.1).sum::<f64>() / 3.0;
    assert!((bg.mean_cost - mean_cost).abs() < 1e-9);
    assert_eq!(bg.mean_baseline, b);

    let surrogate = |m: &Model| {
        batch
            .iter()
            .zip(&samples)
            .map(|(inst, (seq, cost))| (cost - b) * forced_log_prob(m, inst, seq))
            .sum::<f64>()
            / batch.len() as f64
    };
    let numeric = numeric_gradient(&model, 1e-5, surrogate);
    // the floor is 1e-6 in log-probability units, scaled by the advantages
    let adv = samples.iter().map(|s| (s.1 - b).abs()).sum::<f64>() / 3.0;
    let err = max_rel_err(&bg.grads, &numeric, 1e-6 * adv);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn no_baseline_is_plain_reinforce() {
    let model = micro_model(2);
    let batch: Vec<Instance> = (0..4).map(micro_instance).collect();
    let seeds = [1u64, 2, 3, 4];
    let none = reinforce_gradient(&model, &batch, Baseline::None, &seeds).unwrap();
    let zero = reinforce_gradient(&model, &batch, Baseline::Fixed(0.0), &seeds).unwrap();
    assert_eq!(none.grads, zero.grads);
    assert_eq!(none.mean_baseline, 0.0);
    assert!(none.grad_norm > 0.0);
}

#[test]
fn single_choice_policy_has_baseline_equal_to_cost() {
    let inst = tiny(1, 1, 1);
    let model = micro_model(3);
    let b = rollout_baseline(&model, &inst, 5, &mut seeded(0)).unwrap();
    let sol = model.solve(&inst, &DecodeMode::Sample, &mut seeded(1)).unwrap();
    assert_eq!(b, sol.sequence_cost);
    let bg = reinforce_gradient(&model, &[inst], Baseline::Rollout(4), &[9]).unwrap();
    assert_eq!(bg.mean_cost, bg.mean_baseline);
    assert_eq!(bg.grad_norm, 0.0);
}

#[test]
fn one_rollout_is_one_sample() {
    let inst = micro_instance(4);
    let model = micro_model(4);
    for s in 0..20 {
        let b = rollout_baseline(&model, &inst, 1, &mut seeded(s)).unwrap();
        let sol = model.solve(&inst, &DecodeMode::Sample, &mut seeded(s)).unwrap();
        assert_eq!(b, sol.sequence_cost);
    }
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn rollout_variance_shrinks_with_more_rollouts() {
    let inst = micro_instance(5);
    let model = micro_model(5);
    let reps = 600;
    let var_of = |n: usize, stream: u64| {
        let xs: Vec<f64> = (0..reps)
            .map(|r| rollout_baseline(&model, &inst, n, &mut seeded(derive_seed(stream, &[r]))).unwrap())
            .collect();
        variance(&xs)
    };
    let (v1, v4, v16) = (var_of(1, 1), var_of(4, 2), var_of(16, 3));
    assert!(v1 > 0.0);
    // sampling error of a 600-draw variance is about 6%
    let r4 = v1 / v4;
    let r16 = v1 / v16;
    assert!((3.0..=5.3).contains(&r4), "v1/v4 = {r4}");
    assert!((12.0..=21.3).contains(&r16), "v1/v16 = {r16}");
}

#[test]
fn baseline_leaves_expected_gradient_unchanged() {
    let inst = micro_instance(6);
    let model = micro_model(6);
    let n = 3000;
    let directions: Vec<Vec<Vec<f64>>> = {
        let mut rng = seeded(60);
        (0..3)
            .map(|_| model.store.iter().map(|(_, t)| (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect()
    };
    let project = |g: &[Vec<f64>], u: &[Vec<f64>]| -> f64 {
        g.iter().flatten().zip(u.iter().flatten()).map(|(a, b)| a * b).sum()
    };
    let draws = |baseline: Baseline<'_>, stream: u64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| {
                let s = derive_seed(stream, &[j as u64]);
                let g = reinforce_gradient(&model, std::slice::from_ref(&inst), baseline, &[s]).unwrap().grads;
                directions.iter().map(|u| project(&g, u)).collect()
            })
            .collect()
    };
    let with = draws(Baseline::Rollout(4), 100);
    let without = draws(Baseline::None, 200);
    for d in 0..directions.len() {
        let a: Vec<f64> = with.iter().map(|x| x[d]).collect();
        let b: Vec<f64> = without.iter().map(|x| x[d]).collect();
        let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
        let se = (variance(&a) / n as f64 + variance(&b) / n as f64).sqrt();
        assert!((ma - mb).abs() <= 3.0 * se, "direction {d}: {ma} vs {mb}, se {se}");
        // the baseline should also reduce the spread
        assert!(variance(&a) < variance(&b));
    }
}

#[test]
fn smoke_run_stays_finite() {
    let (_, log) = train(&micro_cfg(), None).unwrap();
    assert_eq!(log.batches.len(), 2 * 3);
    assert_eq!(log.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
    for b in &log.batches {
        assert!(b.mean_cost.is_finite() && b.mean_baseline.is_finite() && b.grad_norm.is_finite());
        assert_eq!(b.skipped, 0);
        assert!(b.step_applied);
    }
    for e in &log.epochs {
        assert!(e.validation_gap_mean.unwrap().is_finite());
        assert!(e.validation_gap_mean.unwrap() >= -1e-9);
        assert_eq!(e.validation_solved, 4);
    }
}

#[test]
fn every_baseline_mode_trains() {
    for mode in [BaselineMode::None, BaselineMode::Rollout, BaselineMode::GreedyRollout] {
        let cfg = TrainConfig {
            epochs: 1,
            baseline: mode,
            baseline_eval_instances: 8,
            validation_instances: 0,
            ..micro_cfg()
        };
        let (m, log) = train(&cfg, None).unwrap();
        assert!(log.batches.iter().all(|b| b.grad_norm.is_finite()));
        assert!(m.store.iter().all(|(_, t)| t.is_finite()));
    }
}

#[test]
fn resume_continues_identical_trajectory() {
    let cfg = TrainConfig {
        epochs: 3,
        ..micro_cfg()
    };
    let full_dir = tempfile::tempdir().unwrap();
    let (full, full_log) = train(&cfg, Some(full_dir.path())).unwrap();

    let split_dir = tempfile::tempdir().unwrap();
    let (_, _) = train(&TrainConfig { epochs: 3, ..cfg.clone() }, Some(split_dir.path())).unwrap();
    let (resumed, resumed_log) = resume_from(split_dir.path(), 1).unwrap();

    assert_eq!(resumed.store, full.store);
    assert_eq!(resumed_log.batches, full_log.batches);
    assert_eq!(resumed_log.epochs, full_log.epochs);
    assert_eq!(trainer::latest_checkpoint(split_dir.path()).unwrap(), Some(3));

    // a run stopped early and resumed with a longer horizon matches too
    let short_dir = tempfile::tempdir().unwrap();
    train(&TrainConfig { epochs: 1, ..cfg.clone() }, Some(short_dir.path())).unwrap();
    let (_, short_log) = trainer::resume(short_dir.path()).unwrap();
    assert_eq!(short_log.epochs.len(), 2);
}

#[test]
fn fixed_seed_reproduces_log_files() {
    let cfg = micro_cfg();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ma, log) = train(&cfg, Some(a.path())).unwrap();
    let (mb, _) = train(&cfg, Some(b.path())).unwrap();
    assert_eq!(ma, mb);
    for f in ["batches.csv", "epochs.csv", "config.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let other = train(&TrainConfig { seed: 2, ..cfg }, None).unwrap().1;
    assert_ne!(other.batches, log.batches);
}
