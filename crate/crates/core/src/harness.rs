//! Experiment runners: optimality-gap studies against the exact oracle,
//! cross-case transfer, schedule plot data and inference timing.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::ScheduleSolution;
use crate::instance::{check_feasible, CasePreset, GeneratorConfig, Instance, InstanceError, Schedule, DEPOT};
use crate::model::{Model, ModelError};
use crate::oracle::{evaluate, gap_percent, solve_exact, Budget, OracleError, SolveOptions};
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{scheduler} produced an infeasible schedule on instance {index}")]
    Infeasible { scheduler: String, index: usize },
}

/// Anything that turns an instance into a schedule.
pub trait Scheduler: Sync {
    fn name(&self) -> String;
    fn schedule(&self, inst: &Instance) -> Result<Schedule, HarnessError>;
}

/// Greedy decoding, optionally padded to `n_candidates` candidates.
#[derive(Debug, Clone, Copy)]
pub struct PolicyScheduler<'a> {
    pub model: &'a Model,
    pub n_candidates: Option<usize>,
}

impl Scheduler for PolicyScheduler<'_> {
    fn name(&self) -> String {
        "policy".into()
    }

    fn schedule(&self, inst: &Instance) -> Result<Schedule, HarnessError> {
        Ok(self.model.greedy(inst, self.n_candidates)?.schedule)
    }
}

/// Replays the oracle's own optimum.
#[derive(Debug, Clone, Copy)]
pub struct OracleReplay {
    pub budget: Budget,
}

impl Scheduler for OracleReplay {
    fn name(&self) -> String {
        "oracle-replay".into()
    }

    fn schedule(&self, inst: &Instance) -> Result<Schedule, HarnessError> {
        let opts = SolveOptions {
            budget: self.budget,
            ..Default::default()
        };
        Ok(solve_exact(inst, &opts)?.schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceGap {
    pub index: usize,
    pub seed: u64,
    pub model_cost: f64,
    pub optimal_cost: f64,
    pub proved_optimal: bool,
    /// Present only for proved optima.
    pub gap_percent: Option<f64>,
    pub model_seconds: f64,
    pub oracle_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n_instances: usize,
    pub n_solved: usize,
    pub pct_solved: f64,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    pub mean_model_seconds: f64,
    pub mean_oracle_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub case: String,
    pub scheduler: String,
    pub rows: Vec<InstanceGap>,
    pub summary: GapSummary,
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). NaN on empty input.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn summarize(rows: &[InstanceGap]) -> GapSummary {
    let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_percent).collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let mean = if n == 0 { f64::NAN } else { gaps.iter().sum::<f64>() / n as f64 };
    let std = if n < 2 {
        0.0
    } else {
        (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let m = rows.len().max(1) as f64;
    GapSummary {
        n_instances: rows.len(),
        n_solved: n,
        pct_solved: 100.0 * n as f64 / m,
        mean,
        q1: quantile(&gaps, 0.25),
        median: quantile(&gaps, 0.5),
        q3: quantile(&gaps, 0.75),
        std,
        mean_model_seconds: rows.iter().map(|r| r.model_seconds).sum::<f64>() / m,
        mean_oracle_seconds: rows.iter().map(|r| r.oracle_seconds).sum::<f64>() / m,
    }
}

impl GapReport {
    /// One row per instance.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_rows(path: &Path) -> Result<Vec<InstanceGap>, HarnessError> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }
}

/// Instance `j` of a study.
pub fn study_instance(preset: CasePreset, seed: u64, j: usize) -> Result<(u64, Instance), InstanceError> {
    let s = derive_seed(seed, &[j as u64]);
    Ok((s, GeneratorConfig::for_preset(preset, s).generate()?))
}

#[derive(Debug, Clone)]
struct OracleRun {
    value: f64,
    proved: bool,
    seconds: f64,
}

fn oracle_runs(instances: &[Instance], budget: Budget) -> Result<Vec<OracleRun>, HarnessError> {
    let opts = SolveOptions {
        budget,
        ..Default::default()
    };
    instances
        .par_iter()
        .map(|inst| {
            let r = solve_exact(inst, &opts)?;
            Ok(OracleRun {
                value: r.value,
                proved: r.proved_optimal,
                seconds: r.wall_time.as_secs_f64(),
            })
        })
        .collect()
}

fn score(
    scheduler: &dyn Scheduler,
    instances: &[(u64, Instance)],
    oracle: &[OracleRun],
) -> Result<Vec<InstanceGap>, HarnessError> {
    instances
        .par_iter()
        .zip(oracle.par_iter())
        .enumerate()
        .map(|(index, ((seed, inst), o))| {
            let t = Instant::now();
            let s = scheduler.schedule(inst)?;
            let model_seconds = t.elapsed().as_secs_f64();
            if !check_feasible(inst, &s)?.feasible {
                return Err(HarnessError::Infeasible {
                    scheduler: scheduler.name(),
                    index,
                });
            }
            let cost = evaluate(inst, &s)?.eq11_value;
            Ok(InstanceGap {
                index,
                seed: *seed,
                model_cost: cost,
                optimal_cost: o.value,
                proved_optimal: o.proved,
                gap_percent: o.proved.then(|| gap_percent(cost, o.value)),
                model_seconds,
                oracle_seconds: o.seconds,
            })
        })
        .collect()
}

/// Scores `scheduler` against proven optima on `n_instances` instances of
/// `preset`. Instances the oracle cannot finish within `budget` are kept
/// in the rows but left out of the gap statistics.
pub fn run_gap_study(
    scheduler: &dyn Scheduler,
    preset: CasePreset,
    n_instances: usize,
    seed: u64,
    budget: Budget,
) -> Result<GapReport, HarnessError> {
    let instances = (0..n_instances)
        .map(|j| study_instance(preset, seed, j))
        .collect::<Result<Vec<_>, _>>()?;
    let plain: Vec<Instance> = instances.iter().map(|(_, i)| i.clone()).collect();
    let oracle = oracle_runs(&plain, budget)?;
    let rows = score(scheduler, &instances, &oracle)?;
    Ok(GapReport {
        case: preset.name().into(),
        scheduler: scheduler.name(),
        summary: summarize(&rows),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub train_case: String,
    pub test_case: String,
    /// Candidate count the test instances were decoded with.
    pub n_candidates: usize,
    pub padded: bool,
    pub summary: GapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub train_cases: Vec<String>,
    pub test_cases: Vec<String>,
    /// `cells[train][test]`.
    pub cells: Vec<Vec<TransferCell>>,
}

impl TransferMatrix {
    pub fn cell(&self, train: CasePreset, test: CasePreset) -> Option<&TransferCell> {
        let r = self.train_cases.iter().position(|c| c == train.name())?;
        let c = self.test_cases.iter().position(|c| c == test.name())?;
        Some(&self.cells[r][c])
    }
}

/// Candidate count of a model trained on `preset`.
pub fn trained_candidates(preset: CasePreset) -> usize {
    let d = preset.dims();
    d.periods * d.capacity
}

/// Evaluates every model on every test case. Smaller test cases are padded
/// with idle candidates up to the training case's candidate count; larger
/// ones are decoded at their own size, the parameters being independent
/// of problem size.
pub fn run_transfer_study(
    models: &[(CasePreset, &Model)],
    test_cases: &[CasePreset],
    n_instances: usize,
    seed: u64,
    budget: Budget,
) -> Result<TransferMatrix, HarnessError> {
    let mut columns = Vec::with_capacity(test_cases.len());
    for &test in test_cases {
        let instances = (0..n_instances)
            .map(|j| study_instance(test, seed, j))
            .collect::<Result<Vec<_>, _>>()?;
        let plain: Vec<Instance> = instances.iter().map(|(_, i)| i.clone()).collect();
        let oracle = oracle_runs(&plain, budget)?;
        columns.push((test, instances, oracle));
    }
    let mut cells = Vec::with_capacity(models.len());
    for &(train, model) in models {
        let mut row = Vec::with_capacity(test_cases.len());
        for (test, instances, oracle) in &columns {
            let native = trained_candidates(*test);
            let target = trained_candidates(train).max(native);
            let sched = PolicyScheduler {
                model,
                n_candidates: Some(target),
            };
            let rows = score(&sched, instances, oracle)?;
            row.push(TransferCell {
                train_case: train.name().into(),
                test_case: test.name().into(),
                n_candidates: target,
                padded: target > native,
                summary: summarize(&rows),
            });
        }
        cells.push(row);
    }
    Ok(TransferMatrix {
        train_cases: models.iter().map(|(p, _)| p.name().into()).collect(),
        test_cases: test_cases.iter().map(|p| p.name().into()).collect(),
        cells,
    })
}

/// One maintenance slot of a schedule, for Gantt-style plotting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotRow {
    pub variant: String,
    pub step: usize,
    /// 1-based.
    pub period: usize,
    /// 1-based slot within the period.
    pub slot: usize,
    /// Turbine index (0-based); idle fillers continue past `I - 1`.
    pub turbine: usize,
    pub location: usize,
    pub is_idle: bool,
    /// Canonical change flag of the period.
    pub delta: bool,
}

/// Rows of a decoded solution in pick order; always `T * M` rows.
pub fn solution_rows(inst: &Instance, sol: &ScheduleSolution, variant: &str) -> Vec<PlotRow> {
    let m = inst.capacity;
    sol.sequence
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let idle = v >= inst.n_turbines;
            PlotRow {
                variant: variant.into(),
                step: k,
                period: k / m + 1,
                slot: k % m + 1,
                turbine: v,
                location: if idle { DEPOT } else { inst.location_of[v] },
                is_idle: idle,
                delta: sol.change_flags[k / m],
            }
        })
        .collect()
}

/// Rows of a bare schedule: each period's turbines by location then index,
/// idle fillers last.
pub fn schedule_rows(inst: &Instance, schedule: &Schedule, variant: &str) -> Result<Vec<PlotRow>, HarnessError> {
    let feas = check_feasible(inst, schedule)?;
    let mut rows = Vec::with_capacity(inst.n_slots());
    let mut next_idle = inst.n_turbines;
    for t in 0..inst.n_periods {
        let mut picks: Vec<usize> = (0..inst.n_turbines).filter(|&i| schedule.get(i, t)).collect();
        picks.sort_by_key(|&i| (inst.location_of[i], i));
        for s in 0..inst.capacity {
            let (turbine, location, is_idle) = match picks.get(s) {
                Some(&i) => (i, inst.location_of[i], false),
                None => {
                    next_idle += 1;
                    (next_idle - 1, DEPOT, true)
                }
            };
            rows.push(PlotRow {
                variant: variant.into(),
                step: t * inst.capacity + s,
                period: t + 1,
                slot: s + 1,
                turbine,
                location,
                is_idle,
                delta: feas.change_flags[t],
            });
        }
    }
    Ok(rows)
}

/// Consecutive real picks at different locations, skipping idle rows.
pub fn location_changes(rows: &[PlotRow]) -> usize {
    let locs: Vec<usize> = rows.iter().filter(|r| !r.is_idle).map(|r| r.location).collect();
    locs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Periods whose canonical change flag is set.
pub fn period_changes(rows: &[PlotRow]) -> usize {
    let mut seen = std::collections::BTreeMap::new();
    for r in rows {
        seen.insert(r.period, r.delta);
    }
    seen.values().filter(|&&d| d).count()
}

/// Schedules `inst` as given and again with the visit cost set to zero,
/// labelling the rows `delta` and `zero-delta`.
pub fn plot_comparison(scheduler: &dyn Scheduler, inst: &Instance) -> Result<Vec<PlotRow>, HarnessError> {
    let mut free = inst.clone();
    free.visit_cost = 0.0;
    let mut rows = schedule_rows(inst, &scheduler.schedule(inst)?, "delta")?;
    rows.extend(schedule_rows(&free, &scheduler.schedule(&free)?, "zero-delta")?);
    Ok(rows)
}

pub fn emit_schedule_plot_data(rows: &[PlotRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTiming {
    pub case: String,
    pub n: usize,
    pub seconds: Vec<f64>,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

/// Wall-clock time of greedy decodes on `n` instances, run one at a time.
pub fn bench_inference(model: &Model, preset: CasePreset, n: usize, seed: u64) -> Result<InferenceTiming, HarnessError> {
    let mut seconds = Vec::with_capacity(n);
    for j in 0..n {
        let (_, inst) = study_instance(preset, seed, j)?;
        let t = Instant::now();
        model.greedy(&inst, None)?;
        seconds.push(t.elapsed().as_secs_f64());
    }
    let mut sorted = seconds.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(InferenceTiming {
        case: preset.name().into(),
        n,
        mean: seconds.iter().sum::<f64>() / n.max(1) as f64,
        p50: quantile(&sorted, 0.5),
        p90: quantile(&sorted, 0.9),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        seconds,
    })
}

/// Study budget in seconds, the form used by configs.
pub fn budget_seconds(s: f64) -> Budget {
    Budget {
        time_limit: Some(Duration::from_secs_f64(s)),
        node_limit: None,
    }
}
