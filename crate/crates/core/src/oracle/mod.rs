//! Schedule evaluation under both objective forms, and exact search.
//!
//! The profit form maximizes scenario-mean revenue from the optimal
//! second-stage production minus maintenance, failure and visit costs. The
//! cost form minimizes expected scheduling cost (maintenance or failure cost
//! plus lost production) plus visit costs. For any feasible schedule the two
//! sum to the scenario-mean total production value, which this module
//! computes by a third, independent route so the identity can be checked.

mod exact;

pub use exact::{solve_exact, Budget, ExactResult, SearchMode, SolveOptions, DEFAULT_EXACT_CEILING};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{check_feasible, random_feasible_schedule, ConstraintViolation, Instance, InstanceError, Schedule};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("schedule is infeasible: {0:?}")]
    Infeasible(Vec<ConstraintViolation>),
    #[error("instance has {turbines} turbines, above the exact-solve ceiling of {ceiling}")]
    TooLarge { turbines: usize, ceiling: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Both objective values of one schedule with their components. All terms
/// are scenario means except `visit_cost`, which is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub production_revenue: f64,
    pub preventive_cost: f64,
    pub corrective_cost: f64,
    pub visit_cost: f64,
    /// Profit form (maximize).
    pub eq1_value: f64,
    /// Cost form (minimize).
    pub eq11_value: f64,
    /// Scenario-mean value of producing at capacity in every period.
    pub constant_term: f64,
}

impl ObjectiveBreakdown {
    /// `|profit + cost - constant| / |constant|`, absolute when the constant is 0.
    pub fn lemma_residual(&self) -> f64 {
        let r = (self.eq1_value + self.eq11_value - self.constant_term).abs();
        if self.constant_term == 0.0 {
            r
        } else {
            r / self.constant_term.abs()
        }
    }
}

fn require_feasible(inst: &Instance, schedule: &Schedule) -> Result<Vec<bool>, OracleError> {
    let f = check_feasible(inst, schedule)?;
    if !f.feasible {
        return Err(OracleError::Infeasible(f.violations));
    }
    Ok(f.change_flags)
}

/// Optimal second-stage production `y[s][i][t]`, flat `S x I x T`.
///
/// Before failure a turbine produces at capacity unless under maintenance;
/// from its failure period on it produces only if it was maintained in an
/// earlier period.
pub fn recourse_production(inst: &Instance, schedule: &Schedule) -> Result<Vec<f64>, OracleError> {
    require_feasible(inst, schedule)?;
    Ok(recourse_unchecked(inst, schedule))
}

fn recourse_unchecked(inst: &Instance, schedule: &Schedule) -> Vec<f64> {
    let (ni, nt, ns) = (inst.n_turbines, inst.n_periods, inst.n_scenarios);
    let mut y = vec![0.0; ns * ni * nt];
    for s in 0..ns {
        for i in 0..ni {
            let mut maintained_before = 0.0;
            for t in 0..nt {
                let p = inst.production(s, i, t);
                let m = schedule.get(i, t) as u8 as f64;
                y[(s * ni + i) * nt + t] = if inst.before_failure(s, i, t) {
                    p * (1.0 - m)
                } else {
                    p * maintained_before
                };
                maintained_before += m;
            }
        }
    }
    y
}

/// Evaluates a feasible schedule under both objectives.
pub fn evaluate(inst: &Instance, schedule: &Schedule) -> Result<ObjectiveBreakdown, OracleError> {
    let delta = require_feasible(inst, schedule)?;
    let (ni, nt, ns) = (inst.n_turbines, inst.n_periods, inst.n_scenarios);
    let inv_s = 1.0 / ns as f64;
    let y = recourse_unchecked(inst, schedule);

    let mut revenue = 0.0;
    let mut constant = 0.0;
    let mut preventive = 0.0;
    let mut corrective = 0.0;
    let mut lost_pre = 0.0;
    let mut lost_post = 0.0;
    for s in 0..ns {
        for i in 0..ni {
            let f = inst.failure(s, i);
            for t in 0..nt {
                let pi = inst.price(s, t);
                revenue += pi * y[(s * ni + i) * nt + t];
                constant += pi * inst.production(s, i, t);
                if !schedule.get(i, t) {
                    continue;
                }
                if inst.before_failure(s, i, t) {
                    preventive += inst.maint(i, t);
                    lost_pre += pi * inst.production(s, i, t);
                } else {
                    corrective += inst.failure_cost;
                    // production lost from the failure period F through t (1-based)
                    lost_post += (f - 1..=t).map(|l| inst.price(s, l) * inst.production(s, i, l)).sum::<f64>();
                }
            }
        }
    }
    let visit = delta.iter().filter(|&&d| d).count() as f64 * inst.visit_cost;
    let production_revenue = revenue * inv_s;
    let preventive_cost = preventive * inv_s;
    let corrective_cost = corrective * inv_s;
    Ok(ObjectiveBreakdown {
        production_revenue,
        preventive_cost,
        corrective_cost,
        visit_cost: visit,
        eq1_value: production_revenue - preventive_cost - corrective_cost - visit,
        eq11_value: preventive_cost + corrective_cost + (lost_pre + lost_post) * inv_s + visit,
        constant_term: constant * inv_s,
    })
}

/// Profit-form evaluation; identical to [`evaluate`].
pub fn evaluate_eq1(inst: &Instance, schedule: &Schedule) -> Result<ObjectiveBreakdown, OracleError> {
    evaluate(inst, schedule)
}

/// Cost-form evaluation; identical to [`evaluate`].
pub fn evaluate_eq11(inst: &Instance, schedule: &Schedule) -> Result<ObjectiveBreakdown, OracleError> {
    evaluate(inst, schedule)
}

/// Largest relative residual of the profit/cost identity over `n_samples`
/// random feasible schedules.
pub fn lemma_check<R: Rng + ?Sized>(inst: &Instance, n_samples: usize, rng: &mut R) -> f64 {
    (0..n_samples)
        .map(|_| {
            let s = random_feasible_schedule(inst, rng);
            evaluate(inst, &s).map_or(f64::INFINITY, |b| b.lemma_residual())
        })
        .fold(0.0, f64::max)
}

/// Relative optimality gap in percent on the cost form.
pub fn gap_percent(model_cost: f64, optimal_cost: f64) -> f64 {
    (model_cost - optimal_cost) / optimal_cost * 100.0
}
