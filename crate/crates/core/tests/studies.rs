//! Gap studies, transfer grid and plot data.

use windsched::harness::{
    budget_seconds, emit_schedule_plot_data, location_changes, period_changes, plot_comparison, quantile,
    run_gap_study, run_transfer_study, schedule_rows, solution_rows, study_instance, summarize, GapReport,
    GapSummary, OracleReplay, PlotRow, PolicyScheduler,
};
use windsched::instance::check_feasible;
use windsched::{CasePreset, Model, ModelConfig};

fn random_model(preset: CasePreset, seed: u64) -> Model {
    Model::new(ModelConfig::micro(preset.dims().locations), seed).unwrap()
}

fn same_gaps(a: &GapSummary, b: &GapSummary) {
    assert_eq!(
        (a.n_instances, a.n_solved, a.mean, a.q1, a.median, a.q3, a.std),
        (b.n_instances, b.n_solved, b.mean, b.q1, b.median, b.q3, b.std)
    );
}

#[test]
fn random_policy_gaps_are_finite_and_feasible() {
    let model = random_model(CasePreset::DeskB, 1);
    let sched = PolicyScheduler {
        model: &model,
        n_candidates: None,
    };
    let report = run_gap_study(&sched, CasePreset::DeskB, 24, 5, budget_seconds(60.0)).unwrap();
    let s = &report.summary;
    assert_eq!((s.n_instances, s.n_solved, s.pct_solved), (24, 24, 100.0));
    assert!(s.q1 <= s.median && s.median <= s.q3);
    for r in &report.rows {
        let g = r.gap_percent.unwrap();
        assert!(g.is_finite() && g >= -1e-9, "{g}");
        let (_, inst) = study_instance(CasePreset::DeskB, 5, r.index).unwrap();
        assert_eq!(r.seed, study_instance(CasePreset::DeskB, 5, r.index).unwrap().0);
        let sol = model.greedy(&inst, None).unwrap();
        assert!(check_feasible(&inst, &sol.schedule).unwrap().feasible);
        assert_eq!(sol.eq11_value, r.model_cost);
    }
}

#[test]
fn csv_rows_reproduce_the_summary() {
    let model = random_model(CasePreset::DeskA, 2);
    let sched = PolicyScheduler {
        model: &model,
        n_candidates: None,
    };
    let report = run_gap_study(&sched, CasePreset::DeskA, 17, 9, budget_seconds(60.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gaps.csv");
    report.write_csv(&path).unwrap();
    let rows = GapReport::read_rows(&path).unwrap();
    assert_eq!(rows, report.rows);
    assert_eq!(summarize(&rows), report.summary);

    // independent recomputation: nearest-rank free quartiles by hand
    let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_percent).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    assert!((mean - report.summary.mean).abs() <= 1e-12 * mean.abs().max(1.0));
    // 17 values: Q1 at h = 4, median at 8, Q3 at 12 exactly
    assert_eq!(gaps.len(), 17);
    assert_eq!(report.summary.q1, gaps[4]);
    assert_eq!(report.summary.median, gaps[8]);
    assert_eq!(report.summary.q3, gaps[12]);
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var.sqrt() - report.summary.std).abs() <= 1e-12 * var.sqrt().max(1.0));
    assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
}

#[test]
fn studies_are_reproducible_from_seed() {
    let model = random_model(CasePreset::DeskA, 3);
    let sched = PolicyScheduler {
        model: &model,
        n_candidates: None,
    };
    let a = run_gap_study(&sched, CasePreset::DeskA, 8, 4, budget_seconds(60.0)).unwrap();
    let b = run_gap_study(&sched, CasePreset::DeskA, 8, 4, budget_seconds(60.0)).unwrap();
    let strip = |r: &GapReport| {
        r.rows
            .iter()
            .map(|x| (x.seed, x.model_cost, x.optimal_cost, x.gap_percent))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn transfer_diagonal_matches_gap_study() {
    let model = random_model(CasePreset::DeskA, 4);
    let budget = budget_seconds(60.0);
    let grid = run_transfer_study(&[(CasePreset::DeskA, &model)], &[CasePreset::DeskA], 10, 7, budget).unwrap();
    let cell = grid.cell(CasePreset::DeskA, CasePreset::DeskA).unwrap();
    assert!(!cell.padded);
    let sched = PolicyScheduler {
        model: &model,
        n_candidates: None,
    };
    let direct = run_gap_study(&sched, CasePreset::DeskA, 10, 7, budget).unwrap();
    same_gaps(&cell.summary, &direct.summary);
}

#[test]
fn larger_model_transfers_feasibly_to_smaller_cases() {
    let model = random_model(CasePreset::DeskC, 5);
    let tests = [CasePreset::DeskA, CasePreset::DeskB, CasePreset::DeskC];
    let grid = run_transfer_study(&[(CasePreset::DeskC, &model)], &tests, 12, 8, budget_seconds(60.0)).unwrap();
    for t in tests {
        let cell = grid.cell(CasePreset::DeskC, t).unwrap();
        assert_eq!(cell.n_candidates, 12);
        assert_eq!(cell.padded, t != CasePreset::DeskC);
        assert_eq!(cell.summary.pct_solved, 100.0);
        assert!(cell.summary.mean.is_finite());
    }
    assert!(grid.cell(CasePreset::DeskA, CasePreset::DeskA).is_none());
}

#[test]
fn plot_rows_cover_every_slot() {
    let model = random_model(CasePreset::DeskB, 6);
    let (_, inst) = study_instance(CasePreset::DeskB, 1, 0).unwrap();
    let sol = model.greedy(&inst, None).unwrap();
    let rows = solution_rows(&inst, &sol, "policy");
    assert_eq!(rows.len(), inst.n_slots());
    assert_eq!(rows.iter().filter(|r| !r.is_idle).count(), inst.n_turbines);
    let by_schedule = schedule_rows(&inst, &sol.schedule, "policy").unwrap();
    assert_eq!(by_schedule.len(), inst.n_slots());
    for r in &rows {
        assert_eq!(r.delta, sol.change_flags[r.period - 1]);
        assert!(r.slot >= 1 && r.slot <= inst.capacity);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.csv");
    emit_schedule_plot_data(&rows, &path).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["variant", "step", "period", "slot", "turbine", "location", "is_idle", "delta"]
    );
    let back: Vec<PlotRow> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, rows);
}

#[test]
fn free_visits_scatter_the_crew() {
    let (_, mut inst) = study_instance(CasePreset::DeskC, 3, 0).unwrap();
    inst.visit_cost = 1e5;
    let rows = plot_comparison(&OracleReplay { budget: budget_seconds(120.0) }, &inst).unwrap();
    let costly: Vec<PlotRow> = rows.iter().filter(|r| r.variant == "delta").cloned().collect();
    let free: Vec<PlotRow> = rows.iter().filter(|r| r.variant == "zero-delta").cloned().collect();
    assert_eq!(costly.len(), inst.n_slots());
    assert_eq!(free.len(), inst.n_slots());
    // crew changes are counted per period, the way the objective charges them
    assert!(
        period_changes(&free) > period_changes(&costly),
        "{} vs {}",
        period_changes(&free),
        period_changes(&costly)
    );
    assert_eq!(period_changes(&costly), 1);
    assert!(location_changes(&costly) >= inst.n_locations - 1);
}

