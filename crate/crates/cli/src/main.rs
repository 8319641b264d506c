//! `windsched` command-line tool. Every subcommand takes `--seed`,
//! `--config` and `--out`; outputs are JSON or CSV.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use windsched::decoder::DecodeMode;
use windsched::harness::{
    self, budget_seconds, plot_comparison, run_gap_study, run_transfer_study, schedule_rows, solution_rows, OracleReplay, PolicyScheduler,
    Scheduler,
};
use windsched::instance::{check_feasible, read_instance, write_instance};
use windsched::oracle::{solve_exact, Budget, SearchMode, SolveOptions};
use windsched::trainer::{self, checkpoint_path, latest_checkpoint};
use windsched::{evaluate, CasePreset, FeatureSet, GeneratorConfig, Model, ModelConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "windsched", version, about = "Wind-farm maintenance scheduling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Overrides the seed in `--config`.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Sample,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random instance.
    Generate {
        #[arg(long, default_value = "desk-a")]
        preset: CasePreset,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the maintenance-cost features of an instance.
    Features {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve an instance exactly.
    SolveExact {
        instance: PathBuf,
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[arg(long)]
        node_limit: Option<u64>,
        /// Plain enumeration instead of branch-and-bound.
        #[arg(long)]
        exhaustive: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train a policy; `--out` is the run directory.
    Train {
        #[arg(long, default_value = "desk-case-a")]
        preset: String,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue the run in `--out` from its latest checkpoint.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Decode a schedule with a trained policy.
    Infer {
        instance: PathBuf,
        /// Checkpoint file or run directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: Mode,
        /// Pad to this many candidates.
        #[arg(long)]
        candidates: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Optimality gaps against the exact oracle.
    GapStudy {
        /// Checkpoint file or run directory; replays the oracle when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        preset: Option<CasePreset>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Train-case by test-case gap grid.
    TransferStudy {
        /// `preset=path`, repeatable.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long = "test")]
        tests: Vec<CasePreset>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy-decode timing.
    Bench {
        /// Randomly initialized full-size model when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "case5")]
        preset: CasePreset,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Gantt rows of a schedule as CSV.
    PlotData {
        instance: PathBuf,
        /// Checkpoint file or run directory; the exact oracle when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also schedule with zero visit cost.
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[command(flatten)]
        common: Common,
    },
}

/// `gap-study --config` document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapStudyConfig {
    preset: CasePreset,
    n_instances: usize,
    seed: u64,
    time_limit_s: f64,
}

impl Default for GapStudyConfig {
    fn default() -> Self {
        Self {
            preset: CasePreset::DeskA,
            n_instances: 100,
            seed: 0,
            time_limit_s: 60.0,
        }
    }
}

/// `transfer-study --config` document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransferStudyConfig {
    models: Vec<(CasePreset, PathBuf)>,
    test_cases: Vec<CasePreset>,
    n_instances: usize,
    seed: u64,
    time_limit_s: f64,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    let file = if path.is_dir() {
        let epoch = latest_checkpoint(path)?.with_context(|| format!("no checkpoints in {}", path.display()))?;
        checkpoint_path(path, epoch)
    } else {
        path.to_path_buf()
    };
    Ok(Model::load(&file).with_context(|| format!("loading {}", file.display()))?.0)
}

#[derive(Serialize)]
struct ExactOutput {
    m: Vec<Vec<u8>>,
    crew_locations: Vec<Vec<usize>>,
    delta: Vec<bool>,
    eq1_value: f64,
    eq11_value: f64,
    nodes: u64,
    proved_optimal: bool,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct FeatureDump {
    n_real: usize,
    n_idle: usize,
    n_periods: usize,
    capacity: usize,
    /// `chi[i][t]` over real and idle candidates.
    chi: Vec<Vec<f64>>,
    locations: Vec<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Generate { preset, common } => {
            let mut cfg = match &common.config {
                Some(p) => read_json::<GeneratorConfig>(p)?,
                None => GeneratorConfig::for_preset(preset, 0),
            };
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(dir) = common.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_instance(&cfg.generate()?, &common.out)?;
        }
        Cmd::Features { instance, common } => {
            let fs = FeatureSet::from_instance(&read_instance(&instance)?)?;
            let n = fs.n_candidates();
            write_json(
                &common.out,
                &FeatureDump {
                    n_real: fs.n_real,
                    n_idle: fs.n_idle,
                    n_periods: fs.n_periods,
                    capacity: fs.capacity,
                    chi: (0..n).map(|i| (0..fs.n_periods).map(|t| fs.chi_at(i, t, 0)).collect()).collect(),
                    locations: (0..n).map(|i| fs.location(i)).collect(),
                },
            )?;
        }
        Cmd::SolveExact {
            instance,
            time_limit,
            node_limit,
            exhaustive,
            common,
        } => {
            let inst = read_instance(&instance)?;
            let mut opts = match &common.config {
                Some(p) => read_json::<SolveOptions>(p)?,
                None => SolveOptions::default(),
            };
            opts.budget = Budget {
                time_limit: Some(std::time::Duration::from_secs_f64(time_limit)),
                node_limit,
            };
            if exhaustive {
                opts.mode = SearchMode::Exhaustive;
            }
            let r = solve_exact(&inst, &opts)?;
            let feas = check_feasible(&inst, &r.schedule)?;
            let obj = evaluate(&inst, &r.schedule)?;
            write_json(
                &common.out,
                &ExactOutput {
                    m: r.schedule.to_rows(),
                    crew_locations: feas.crew_locations.iter().map(|s| s.iter().copied().collect()).collect(),
                    delta: feas.change_flags,
                    eq1_value: obj.eq1_value,
                    eq11_value: obj.eq11_value,
                    nodes: r.nodes,
                    proved_optimal: r.proved_optimal,
                    wall_time_s: r.wall_time.as_secs_f64(),
                },
            )?;
        }
        Cmd::Train {
            preset,
            epochs,
            resume,
            common,
        } => {
            let log = if resume {
                trainer::resume(&common.out)?.1
            } else {
                let mut cfg = match &common.config {
                    Some(p) => read_json::<TrainConfig>(p)?,
                    None => TrainConfig::named(&preset)?,
                };
                if let Some(s) = common.seed {
                    cfg.seed = s;
                }
                if let Some(e) = epochs {
                    cfg.epochs = e;
                }
                trainer::train(&cfg, Some(&common.out))?.1
            };
            if let Some(g) = log.last_validation_gap() {
                println!("final validation gap {g:.3}%");
            }
        }
        Cmd::Infer {
            instance,
            model,
            mode,
            candidates,
            common,
        } => {
            let inst = read_instance(&instance)?;
            let model = load_model(&model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(0));
            let mode = match mode {
                Mode::Greedy => DecodeMode::Greedy,
                Mode::Sample => DecodeMode::Sample,
            };
            write_json(&common.out, &model.solve_with(&inst, candidates, &mode, &mut rng)?)?;
        }
        Cmd::GapStudy {
            model,
            preset,
            n,
            time_limit,
            common,
        } => {
            let mut cfg = match &common.config {
                Some(p) => read_json::<GapStudyConfig>(p)?,
                None => GapStudyConfig::default(),
            };
            cfg.preset = preset.unwrap_or(cfg.preset);
            cfg.n_instances = n.unwrap_or(cfg.n_instances);
            cfg.time_limit_s = time_limit.unwrap_or(cfg.time_limit_s);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let budget = budget_seconds(cfg.time_limit_s);
            let loaded = model.as_deref().map(load_model).transpose()?;
            let policy;
            let replay = OracleReplay { budget };
            let scheduler: &dyn Scheduler = match &loaded {
                Some(m) => {
                    policy = PolicyScheduler { model: m, n_candidates: None };
                    &policy
                }
                None => &replay,
            };
            let report = run_gap_study(scheduler, cfg.preset, cfg.n_instances, cfg.seed, budget)?;
            fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("config.json"), &cfg)?;
            write_json(&common.out.join("summary.json"), &report.summary)?;
            report.write_csv(&common.out.join("gaps.csv"))?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Cmd::TransferStudy {
            models,
            tests,
            n,
            time_limit,
            common,
        } => {
            let mut cfg = match &common.config {
                Some(p) => read_json::<TransferStudyConfig>(p)?,
                None => TransferStudyConfig {
                    models: Vec::new(),
                    test_cases: CasePreset::DESK.to_vec(),
                    n_instances: 100,
                    seed: 0,
                    time_limit_s: 60.0,
                },
            };
            for spec in &models {
                let (p, path) = spec.split_once('=').with_context(|| format!("expected preset=path, got `{spec}`"))?;
                cfg.models.push((p.parse().map_err(anyhow::Error::msg)?, PathBuf::from(path)));
            }
            if !tests.is_empty() {
                cfg.test_cases = tests;
            }
            cfg.n_instances = n.unwrap_or(cfg.n_instances);
            cfg.time_limit_s = time_limit.unwrap_or(cfg.time_limit_s);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            if cfg.models.is_empty() {
                bail!("no models given");
            }
            let loaded = cfg.models.iter().map(|(p, path)| Ok((*p, load_model(path)?))).collect::<Result<Vec<_>>>()?;
            let refs: Vec<(CasePreset, &Model)> = loaded.iter().map(|(p, m)| (*p, m)).collect();
            let matrix = run_transfer_study(&refs, &cfg.test_cases, cfg.n_instances, cfg.seed, budget_seconds(cfg.time_limit_s))?;
            fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("config.json"), &cfg)?;
            write_json(&common.out.join("transfer.json"), &matrix)?;
        }
        Cmd::Bench {
            model,
            preset,
            n,
            common,
        } => {
            let model = match &model {
                Some(p) => load_model(p)?,
                None => {
                    let cfg = match &common.config {
                        Some(p) => read_json::<ModelConfig>(p)?,
                        None => {
                            let mut c = ModelConfig::full();
                            c.encoder.n_locations = preset.dims().locations;
                            c
                        }
                    };
                    Model::new(cfg, common.seed.unwrap_or(0))?
                }
            };
            let timing = harness::bench_inference(&model, preset, n, common.seed.unwrap_or(0))?;
            write_json(&common.out, &timing)?;
            println!("{} mean {:.4}s p50 {:.4}s p90 {:.4}s max {:.4}s", timing.case, timing.mean, timing.p50, timing.p90, timing.max);
        }
        Cmd::PlotData {
            instance,
            model,
            compare,
            time_limit,
            common,
        } => {
            let inst = read_instance(&instance)?;
            let loaded = model.as_deref().map(load_model).transpose()?;
            let replay = OracleReplay {
                budget: budget_seconds(time_limit),
            };
            let rows = match (&loaded, compare) {
                (Some(m), false) => solution_rows(&inst, &m.greedy(&inst, None)?, "delta"),
                (Some(m), true) => plot_comparison(&PolicyScheduler { model: m, n_candidates: None }, &inst)?,
                (None, false) => schedule_rows(&inst, &replay.schedule(&inst)?, "delta")?,
                (None, true) => plot_comparison(&replay, &inst)?,
            };
            if let Some(dir) = common.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            harness::emit_schedule_plot_data(&rows, &common.out)?;
        }
    }
    Ok(())
}
