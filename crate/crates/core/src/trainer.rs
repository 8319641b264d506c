//! REINFORCE training with a sampled-rollout baseline.
//!
//! Every random draw is derived from `(seed, epoch, instance)` so a run is
//! reproducible from its config alone, independent of the worker count, and
//! can resume from any epoch checkpoint onto the same trajectory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::decoder::{self, default_rules, DecodeMode, DecoderCache};
use crate::features::FeatureSet;
use crate::instance::{CasePreset, GeneratorConfig, Instance, InstanceError};
use crate::model::{Model, ModelConfig, ModelError};
use crate::oracle::{gap_percent, solve_exact, Budget, SolveOptions};
use crate::seeds::derive_seed;
use crate::tensor::{AdamConfig, AdamOutcome, Graph};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("no checkpoint found in {0}")]
    NoCheckpoint(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    None,
    /// Mean cost of `n_baseline_rollouts` sampled decodes.
    Rollout,
    /// Greedy decode of a frozen copy of the policy, replaced when the
    /// current policy is significantly better on held-out instances.
    GreedyRollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: CasePreset,
    /// Overrides the preset's scenario count.
    #[serde(default)]
    pub scenarios: Option<usize>,
    pub epochs: usize,
    pub instances_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub baseline: BaselineMode,
    pub n_baseline_rollouts: usize,
    pub seed: u64,
    pub model: ModelConfig,
    /// Held-out instances scored against the exact oracle after every
    /// epoch; 0 disables validation.
    pub validation_instances: usize,
    pub validation_seed: u64,
    pub oracle_time_limit_s: f64,
    /// Significance level of the baseline replacement test.
    #[serde(default = "default_alpha")]
    pub baseline_alpha: f64,
    /// Held-out instances used by the baseline replacement test.
    #[serde(default = "default_baseline_eval")]
    pub baseline_eval_instances: usize,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_baseline_eval() -> usize {
    256
}

impl TrainConfig {
    /// 20 epochs of 2,000 instances on one of the desk cases.
    pub fn desk(preset: CasePreset) -> Self {
        Self {
            preset,
            scenarios: None,
            epochs: 20,
            instances_per_epoch: 2000,
            batch_size: 32,
            learning_rate: 1e-4,
            baseline: BaselineMode::Rollout,
            n_baseline_rollouts: 8,
            seed: 1,
            model: ModelConfig::desk(),
            validation_instances: 100,
            validation_seed: 0x5EED_0F_7E57,
            oracle_time_limit_s: 60.0,
            baseline_alpha: default_alpha(),
            baseline_eval_instances: default_baseline_eval(),
        }
    }

    /// 100 epochs of 25,600 instances with the full-width model. Far beyond
    /// a single workstation; kept for reference.
    pub fn full(preset: CasePreset) -> Self {
        Self {
            epochs: 100,
            instances_per_epoch: 25_600,
            model: ModelConfig::full(),
            validation_instances: if CasePreset::DESK.contains(&preset) { 100 } else { 0 },
            ..Self::desk(preset)
        }
    }

    /// `desk-case-a`, `desk-b`, `full-case3`, ...
    pub fn named(name: &str) -> Result<Self, TrainError> {
        let n = name.to_ascii_lowercase();
        if let Some(rest) = n.strip_prefix("full-") {
            return Ok(Self::full(rest.parse().map_err(TrainError::Config)?));
        }
        let preset: CasePreset = n.parse().map_err(TrainError::Config)?;
        if CasePreset::DESK.contains(&preset) {
            Ok(Self::desk(preset))
        } else {
            Ok(Self::full(preset))
        }
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.instances_per_epoch == 0 || self.batch_size == 0 {
            return bad("instances_per_epoch and batch_size must be positive");
        }
        if self.batch_size > self.instances_per_epoch {
            return bad("batch_size cannot exceed instances_per_epoch");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.baseline == BaselineMode::Rollout && self.n_baseline_rollouts == 0 {
            return bad("n_baseline_rollouts must be at least 1");
        }
        if self.model.encoder.n_locations != self.preset.dims().locations {
            return bad("model n_locations differs from the preset's location count");
        }
        self.model.check()?;
        self.generator(0).check()?;
        Ok(())
    }

    pub fn generator(&self, seed: u64) -> GeneratorConfig {
        let mut g = GeneratorConfig::for_preset(self.preset, seed);
        if let Some(s) = self.scenarios {
            g.dims.scenarios = s;
        }
        g
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.instances_per_epoch.div_ceil(self.batch_size)
    }

    /// Training instance `index` of `epoch` (epochs count from 1).
    pub fn training_instance(&self, epoch: usize, index: usize) -> Result<Instance, InstanceError> {
        self.generator(derive_seed(self.seed, &[epoch as u64, index as u64, 0])).generate()
    }

    pub fn validation_set(&self) -> Result<Vec<Instance>, InstanceError> {
        (0..self.validation_instances)
            .map(|j| self.generator(derive_seed(self.validation_seed, &[u64::MAX, j as u64])).generate())
            .collect()
    }

    fn baseline_eval_set(&self) -> Result<Vec<Instance>, InstanceError> {
        (0..self.baseline_eval_instances)
            .map(|j| self.generator(derive_seed(self.seed, &[u64::MAX - 1, j as u64])).generate())
            .collect()
    }
}

/// Averaged policy gradient of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    /// Per parameter, in store order.
    pub grads: Vec<Vec<f64>>,
    pub mean_cost: f64,
    pub mean_baseline: f64,
    pub grad_norm: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Re-creates the decoder cache of `fwd` as constants on a gradient-free graph.
fn detached_cache(model: &Model, g: &mut Graph, src: &Graph, cache: &DecoderCache) -> (Vec<crate::tensor::Var>, DecoderCache) {
    let vars = model.store.bind(g);
    let copy = |g: &mut Graph, v| g.input(src.value(v).clone());
    let c = DecoderCache {
        h: copy(g, cache.h),
        keys: copy(g, cache.keys),
        values: copy(g, cache.values),
        pointer: copy(g, cache.pointer),
        n_slots: cache.n_slots,
        n_candidates: cache.n_candidates,
    };
    (vars, c)
}

fn sampled_mean(model: &Model, g: &mut Graph, vars: &[crate::tensor::Var], cache: &DecoderCache, fs: &FeatureSet, inst: &Instance, n: usize, rng: &mut ChaCha8Rng) -> Result<f64, ModelError> {
    let net = model.net(vars);
    let rules = default_rules();
    let mut total = 0.0;
    for _ in 0..n {
        total += decoder::decode(g, &net, cache, fs, inst.visit_cost, &DecodeMode::Sample, &rules, rng)?.sequence_cost;
    }
    Ok(total / n as f64)
}

/// Mean sequence cost of `n` sampled decodes, without gradients.
pub fn rollout_baseline(model: &Model, inst: &Instance, n: usize, rng: &mut ChaCha8Rng) -> Result<f64, ModelError> {
    let fs = FeatureSet::from_instance(inst)?;
    let mut g = Graph::no_grad();
    let fwd = model.forward(&mut g, &fs)?;
    sampled_mean(model, &mut g, &fwd.vars, &fwd.cache, &fs, inst, n.max(1), rng)
}

/// Baseline settings for [`reinforce_gradient`].
#[derive(Debug, Clone, Copy)]
pub enum Baseline<'a> {
    None,
    Rollout(usize),
    Greedy(&'a Model),
    /// Uses the given value for every instance.
    Fixed(f64),
}

struct InstanceGrad {
    grads: Vec<Vec<f64>>,
    cost: f64,
    baseline: f64,
}

fn instance_gradient(model: &Model, inst: &Instance, baseline: Baseline<'_>, seed: u64) -> Result<Option<InstanceGrad>, ModelError> {
    let fs = FeatureSet::from_instance(inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &fs)?;
    let d = model.decode(&mut g, &fwd, &fs, inst.visit_cost, &DecodeMode::Sample, &mut rng)?;
    let cost = d.sequence_cost;
    let b = match baseline {
        Baseline::None => 0.0,
        Baseline::Fixed(b) => b,
        Baseline::Rollout(n) => {
            let mut ng = Graph::no_grad();
            let (vars, cache) = detached_cache(model, &mut ng, &g, &fwd.cache);
            sampled_mean(model, &mut ng, &vars, &cache, &fs, inst, n.max(1), &mut rng)?
        }
        Baseline::Greedy(frozen) => frozen.greedy_cost(inst)?,
    };
    if !(cost.is_finite() && b.is_finite() && d.log_prob_value.is_finite()) {
        log::warn!("non-finite cost or log-probability; instance skipped");
        return Ok(None);
    }
    let grads = g.backward(d.log_prob)?;
    let adv = cost - b;
    let per_param = fwd
        .vars
        .iter()
        .zip(model.store.iter())
        .map(|(&v, (_, t))| {
            let mut gv = grads.get_or_zeros(v, t.len());
            gv.iter_mut().for_each(|x| *x *= adv);
            gv
        })
        .collect();
    Ok(Some(InstanceGrad {
        grads: per_param,
        cost,
        baseline: b,
    }))
}

/// `mean((L - b) * grad log p)` over the batch, one sampled decode per
/// instance. `seeds[j]` drives instance `j`'s randomness. Instances run in
/// parallel and are reduced in batch order.
pub fn reinforce_gradient(model: &Model, batch: &[Instance], baseline: Baseline<'_>, seeds: &[u64]) -> Result<BatchGradient, ModelError> {
    assert_eq!(batch.len(), seeds.len(), "one seed per instance");
    let parts: Vec<Option<InstanceGrad>> = batch
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(inst, &s)| instance_gradient(model, inst, baseline, s))
        .collect::<Result<_, _>>()?;
    let mut grads: Vec<Vec<f64>> = model.store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    let (mut cost, mut base, mut used) = (0.0, 0.0, 0usize);
    for p in parts.iter().flatten() {
        for (acc, g) in grads.iter_mut().zip(&p.grads) {
            for (a, x) in acc.iter_mut().zip(g) {
                *a += x;
            }
        }
        cost += p.cost;
        base += p.baseline;
        used += 1;
    }
    let skipped = batch.len() - used;
    let denom = used.max(1) as f64;
    grads.iter_mut().flatten().for_each(|x| *x /= denom);
    let grad_norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    Ok(BatchGradient {
        grads,
        mean_cost: cost / denom,
        mean_baseline: base / denom,
        grad_norm,
        used,
        skipped,
    })
}

impl Model {
    /// Sequence cost of the greedy decode.
    pub fn greedy_cost(&self, inst: &Instance) -> Result<f64, ModelError> {
        let fs = FeatureSet::from_instance(inst)?;
        let mut g = Graph::no_grad();
        let fwd = self.forward(&mut g, &fs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.decode(&mut g, &fwd, &fs, inst.visit_cost, &DecodeMode::Greedy, &mut rng)?.sequence_cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub mean_cost: f64,
    pub mean_baseline: f64,
    pub grad_norm: f64,
    pub skipped: usize,
    pub step_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub mean_train_cost: Option<f64>,
    pub validation_gap_mean: Option<f64>,
    pub validation_cost_mean: Option<f64>,
    pub validation_solved: usize,
    pub baseline_replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub epoch: usize,
    pub train_seconds: f64,
    pub validation_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainLog {
    pub batches: Vec<BatchRecord>,
    pub epochs: Vec<EpochRecord>,
    pub timing: Vec<TimingRecord>,
}

impl TrainLog {
    /// Writes `batches.csv`, `epochs.csv` and `timing.csv`. Only the last
    /// depends on the machine.
    pub fn write_csv(&self, dir: &Path) -> Result<(), TrainError> {
        fn dump<T: Serialize>(path: PathBuf, rows: &[T]) -> Result<(), TrainError> {
            let mut w = csv::Writer::from_path(&path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(io_err(&path))?;
            Ok(())
        }
        dump(dir.join("batches.csv"), &self.batches)?;
        dump(dir.join("epochs.csv"), &self.epochs)?;
        dump(dir.join("timing.csv"), &self.timing)
    }

    pub fn last_validation_gap(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.validation_gap_mean)
    }
}

/// Held-out instances with their proven optima.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub instances: Vec<Instance>,
    /// `None` where the oracle ran out of budget.
    pub optimal: Vec<Option<f64>>,
}

impl ValidationSet {
    pub fn build(instances: Vec<Instance>, time_limit_s: f64) -> Result<Self, TrainError> {
        let opts = SolveOptions {
            budget: Budget::seconds(time_limit_s),
            ..Default::default()
        };
        let optimal = instances
            .par_iter()
            .map(|inst| {
                solve_exact(inst, &opts)
                    .map(|r| r.proved_optimal.then_some(r.value))
                    .map_err(|e| TrainError::Config(format!("validation oracle: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { instances, optimal })
    }

    /// Mean greedy gap over solved instances and mean greedy canonical cost.
    pub fn score(&self, model: &Model) -> Result<(Option<f64>, f64, usize), ModelError> {
        let sols = self
            .instances
            .par_iter()
            .map(|inst| model.greedy(inst, None).map(|s| s.eq11_value))
            .collect::<Result<Vec<_>, _>>()?;
        let gaps: Vec<f64> = sols
            .iter()
            .zip(&self.optimal)
            .filter_map(|(&c, o)| o.map(|o| gap_percent(c, o)))
            .collect();
        let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        let mean_cost = sols.iter().sum::<f64>() / sols.len().max(1) as f64;
        Ok((mean_gap, mean_cost, gaps.len()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeMeta {
    epoch: usize,
    config: TrainConfig,
    log: TrainLog,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("epoch_{epoch:03}.ckpt"))
}

fn baseline_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("baseline_{epoch:03}.ckpt"))
}

/// Where a run stands between epochs.
struct RunState {
    model: Model,
    frozen: Option<Model>,
    log: TrainLog,
    next_epoch: usize,
}

/// Trains from scratch. With `out`, writes `config.json`, a checkpoint per
/// epoch and the log CSVs there.
pub fn train(cfg: &TrainConfig, out: Option<&Path>) -> Result<(Model, TrainLog), TrainError> {
    cfg.check()?;
    let model = Model::new(cfg.model.clone(), derive_seed(cfg.seed, &[u64::MAX - 2]))?;
    let frozen = (cfg.baseline == BaselineMode::GreedyRollout).then(|| model.clone());
    run(
        cfg,
        out,
        RunState {
            model,
            frozen,
            log: TrainLog::default(),
            next_epoch: 0,
        },
    )
}

/// Continues the run in `dir` from its latest epoch checkpoint.
pub fn resume(dir: &Path) -> Result<(Model, TrainLog), TrainError> {
    let latest = latest_checkpoint(dir)?.ok_or_else(|| TrainError::NoCheckpoint(dir.to_path_buf()))?;
    resume_from(dir, latest)
}

/// Continues the run in `dir` from the checkpoint of `epoch`.
pub fn resume_from(dir: &Path, epoch: usize) -> Result<(Model, TrainLog), TrainError> {
    let (model, extra) = Model::load(&checkpoint_path(dir, epoch))?;
    let meta: ResumeMeta = serde_json::from_value(extra)?;
    let frozen = match meta.config.baseline {
        BaselineMode::GreedyRollout => Some(Model::load(&baseline_path(dir, epoch))?.0),
        _ => None,
    };
    let cfg = meta.config.clone();
    run(
        &cfg,
        Some(dir),
        RunState {
            model,
            frozen,
            log: meta.log,
            next_epoch: meta.epoch + 1,
        },
    )
}

pub fn latest_checkpoint(dir: &Path) -> Result<Option<usize>, TrainError> {
    let ck = dir.join("checkpoints");
    if !ck.exists() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(&ck).map_err(io_err(&ck))? {
        let name = entry.map_err(io_err(&ck))?.file_name();
        let name = name.to_string_lossy();
        if let Some(e) = name.strip_prefix("epoch_").and_then(|r| r.strip_suffix(".ckpt")).and_then(|n| n.parse::<usize>().ok()) {
            best = best.max(Some(e));
        }
    }
    Ok(best)
}

fn paired_improvement(cfg: &TrainConfig, candidate: &Model, frozen: &Model, eval: &[Instance]) -> Result<bool, ModelError> {
    let diffs = eval
        .par_iter()
        .map(|inst| Ok(candidate.greedy_cost(inst)? - frozen.greedy_cost(inst)?))
        .collect::<Result<Vec<f64>, ModelError>>()?;
    let n = diffs.len() as f64;
    if n < 2.0 {
        return Ok(false);
    }
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if mean >= 0.0 {
        return Ok(false);
    }
    if var == 0.0 {
        return Ok(true);
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| ModelError::Config(e.to_string()))?;
    Ok(dist.cdf(t) < cfg.baseline_alpha)
}

fn run(cfg: &TrainConfig, out: Option<&Path>, mut st: RunState) -> Result<(Model, TrainLog), TrainError> {
    if let Some(dir) = out {
        let ck = dir.join("checkpoints");
        fs::create_dir_all(&ck).map_err(io_err(&ck))?;
        let p = dir.join("config.json");
        fs::write(&p, serde_json::to_string_pretty(cfg)?).map_err(io_err(&p))?;
    }
    let validation = if cfg.validation_instances > 0 && cfg.epochs >= st.next_epoch {
        Some(ValidationSet::build(cfg.validation_set()?, cfg.oracle_time_limit_s)?)
    } else {
        None
    };
    let baseline_eval = if cfg.baseline == BaselineMode::GreedyRollout {
        cfg.baseline_eval_set()?
    } else {
        Vec::new()
    };
    let adam = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };

    for epoch in st.next_epoch..=cfg.epochs {
        let t0 = Instant::now();
        let mut costs = Vec::new();
        if epoch > 0 {
            for b in 0..cfg.batches_per_epoch() {
                let lo = b * cfg.batch_size;
                let hi = (lo + cfg.batch_size).min(cfg.instances_per_epoch);
                let batch = (lo..hi)
                    .map(|j| cfg.training_instance(epoch, j))
                    .collect::<Result<Vec<_>, _>>()?;
                let seeds: Vec<u64> = (lo..hi).map(|j| derive_seed(cfg.seed, &[epoch as u64, j as u64, 1])).collect();
                let baseline = match (cfg.baseline, &st.frozen) {
                    (BaselineMode::None, _) => Baseline::None,
                    (BaselineMode::Rollout, _) => Baseline::Rollout(cfg.n_baseline_rollouts),
                    (BaselineMode::GreedyRollout, Some(f)) => Baseline::Greedy(f),
                    (BaselineMode::GreedyRollout, None) => unreachable!("frozen policy set at start"),
                };
                let bg = reinforce_gradient(&st.model, &batch, baseline, &seeds)?;
                let applied = if bg.used > 0 {
                    st.model.store.adam_step(&bg.grads, &adam).map_err(ModelError::from)? == AdamOutcome::Applied
                } else {
                    false
                };
                costs.push(bg.mean_cost);
                st.log.batches.push(BatchRecord {
                    epoch,
                    batch: b,
                    mean_cost: bg.mean_cost,
                    mean_baseline: bg.mean_baseline,
                    grad_norm: bg.grad_norm,
                    skipped: bg.skipped,
                    step_applied: applied,
                });
            }
        }
        let train_seconds = t0.elapsed().as_secs_f64();

        let mut replaced = false;
        if epoch > 0 {
            if let Some(frozen) = &st.frozen {
                if paired_improvement(cfg, &st.model, frozen, &baseline_eval)? {
                    st.frozen = Some(st.model.clone());
                    replaced = true;
                }
            }
        }

        let t1 = Instant::now();
        let (gap, vcost, solved) = match &validation {
            Some(v) => {
                let (g, c, n) = v.score(&st.model)?;
                (g, Some(c), n)
            }
            None => (None, None, 0),
        };
        let rec = EpochRecord {
            epoch,
            mean_train_cost: (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64),
            validation_gap_mean: gap,
            validation_cost_mean: vcost,
            validation_solved: solved,
            baseline_replaced: replaced,
        };
        log::info!(
            "epoch {epoch}: train cost {:?}, validation gap {:?}%",
            rec.mean_train_cost,
            rec.validation_gap_mean
        );
        st.log.epochs.push(rec);
        st.log.timing.push(TimingRecord {
            epoch,
            train_seconds,
            validation_seconds: t1.elapsed().as_secs_f64(),
        });

        if let Some(dir) = out {
            let meta = ResumeMeta {
                epoch,
                config: cfg.clone(),
                log: st.log.clone(),
            };
            st.model.save(&checkpoint_path(dir, epoch), serde_json::to_value(&meta)?)?;
            if let Some(f) = &st.frozen {
                f.save(&baseline_path(dir, epoch), serde_json::Value::Null)?;
            }
            st.log.write_csv(dir)?;
        }
    }
    Ok((st.model, st.log))
}
