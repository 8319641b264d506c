//! Problem instances, schedules and the feasibility check.
//!
//! Indices are 0-based internally: turbine `i` in `0..I`, period `t` in
//! `0..T`, scenario `s` in `0..S`. Two quantities keep their 1-based
//! meaning because they are data rather than positions:
//!
//! * `location_of[i]` is in `1..=J`; location `0` is the depot.
//! * `failure_time[s][i]` is a 1-based period in `1..=T+1`, where `T+1`
//!   means the turbine does not fail within the horizon. Period `t`
//!   (0-based) is *before* failure iff `t + 1 < F`.

mod generate;
mod io;

use std::collections::BTreeSet;

pub use generate::{CasePreset, Dims, Distributions, GeneratorConfig, UniformRange};
pub use io::{read_instance, write_instance, InstanceFile, INSTANCE_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Location index reserved for the crew base.
pub const DEPOT: usize = 0;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed instance document: {0}")]
    Malformed(String),
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One maintenance scheduling problem.
///
/// Tensors are flat and row-major: `maint_cost[i*T + t]`,
/// `price[s*T + t]`, `max_production[(s*I + i)*T + t]`,
/// `failure_time[s*I + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n_turbines: usize,
    pub n_periods: usize,
    pub capacity: usize,
    pub n_locations: usize,
    pub n_scenarios: usize,
    pub maint_cost: Vec<f64>,
    pub failure_cost: f64,
    pub visit_cost: f64,
    pub location_of: Vec<usize>,
    pub price: Vec<f64>,
    pub max_production: Vec<f64>,
    pub failure_time: Vec<usize>,
}

impl Instance {
    #[inline]
    pub fn maint(&self, i: usize, t: usize) -> f64 {
        self.maint_cost[i * self.n_periods + t]
    }

    #[inline]
    pub fn price(&self, s: usize, t: usize) -> f64 {
        self.price[s * self.n_periods + t]
    }

    #[inline]
    pub fn production(&self, s: usize, i: usize, t: usize) -> f64 {
        self.max_production[(s * self.n_turbines + i) * self.n_periods + t]
    }

    /// 1-based failure period, `T+1` for none.
    #[inline]
    pub fn failure(&self, s: usize, i: usize) -> usize {
        self.failure_time[s * self.n_turbines + i]
    }

    /// Whether 0-based period `t` lies strictly before the failure of `i` in `s`.
    #[inline]
    pub fn before_failure(&self, s: usize, i: usize, t: usize) -> bool {
        t + 1 < self.failure(s, i)
    }

    /// Number of decoding slots `T * M`.
    pub fn n_slots(&self) -> usize {
        self.n_periods * self.capacity
    }

    /// Checks every structural invariant; never fails, reports instead.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let (ni, nt, ns) = (self.n_turbines, self.n_periods, self.n_scenarios);
        for (name, val) in [
            ("n_turbines", ni),
            ("n_periods", nt),
            ("capacity", self.capacity),
            ("n_locations", self.n_locations),
            ("n_scenarios", ns),
        ] {
            if val == 0 {
                v.push(Violation::ZeroDimension(name));
            }
        }
        let lens = [
            ("maint_cost", self.maint_cost.len(), ni * nt),
            ("location_of", self.location_of.len(), ni),
            ("price", self.price.len(), ns * nt),
            ("max_production", self.max_production.len(), ns * ni * nt),
            ("failure_time", self.failure_time.len(), ns * ni),
        ];
        let mut dims_ok = true;
        for (field, got, expected) in lens {
            if got != expected {
                dims_ok = false;
                v.push(Violation::DimensionMismatch { field, expected, got });
            }
        }
        if nt * self.capacity < ni {
            v.push(Violation::CapacityHorizon {
                periods: nt,
                capacity: self.capacity,
                turbines: ni,
            });
        }
        for (field, vals) in [
            ("maint_cost", &self.maint_cost[..]),
            ("price", &self.price[..]),
            ("max_production", &self.max_production[..]),
            ("failure_cost", std::slice::from_ref(&self.failure_cost)),
            ("visit_cost", std::slice::from_ref(&self.visit_cost)),
        ] {
            if let Some(index) = vals.iter().position(|x| !x.is_finite()) {
                v.push(Violation::NonFinite { field, index });
            } else if let Some(index) = vals.iter().position(|&x| x < 0.0) {
                v.push(Violation::Negative { field, index });
            }
        }
        for (i, &loc) in self.location_of.iter().enumerate() {
            if loc == DEPOT || loc > self.n_locations {
                v.push(Violation::LocationOutOfRange { turbine: i, value: loc });
            }
        }
        if dims_ok {
            for s in 0..ns {
                for i in 0..ni {
                    let f = self.failure(s, i);
                    if f == 0 || f > nt + 1 {
                        v.push(Violation::FailureTimeOutOfRange {
                            scenario: s,
                            turbine: i,
                            value: f,
                        });
                    }
                }
            }
        }
        ValidationReport { violations: v }
    }

    /// Copy with rows of turbines permuted: new turbine `k` is old `perm[k]`.
    pub fn permute_turbines(&self, perm: &[usize]) -> Instance {
        let (ni, nt, ns) = (self.n_turbines, self.n_periods, self.n_scenarios);
        let mut out = self.clone();
        for (k, &old) in perm.iter().enumerate() {
            out.location_of[k] = self.location_of[old];
            out.maint_cost[k * nt..(k + 1) * nt].copy_from_slice(&self.maint_cost[old * nt..(old + 1) * nt]);
            for s in 0..ns {
                out.failure_time[s * ni + k] = self.failure_time[s * ni + old];
                let dst = (s * ni + k) * nt;
                let src = (s * ni + old) * nt;
                out.max_production[dst..dst + nt].copy_from_slice(&self.max_production[src..src + nt]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ZeroDimension(&'static str),
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    /// `T * M < I`: not every turbine can be maintained.
    CapacityHorizon {
        periods: usize,
        capacity: usize,
        turbines: usize,
    },
    NonFinite {
        field: &'static str,
        index: usize,
    },
    Negative {
        field: &'static str,
        index: usize,
    },
    FailureTimeOutOfRange {
        scenario: usize,
        turbine: usize,
        value: usize,
    },
    LocationOutOfRange {
        turbine: usize,
        value: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Binary maintenance matrix `m[i][t]`, stored flat as `maint[i*T + t]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub n_turbines: usize,
    pub n_periods: usize,
    pub maint: Vec<bool>,
}

impl Schedule {
    pub fn empty(n_turbines: usize, n_periods: usize) -> Self {
        Self {
            n_turbines,
            n_periods,
            maint: vec![false; n_turbines * n_periods],
        }
    }

    /// Schedule maintaining turbine `i` exactly at period `periods[i]`.
    pub fn from_periods(periods: &[usize], n_periods: usize) -> Self {
        let mut s = Self::empty(periods.len(), n_periods);
        for (i, &t) in periods.iter().enumerate() {
            s.set(i, t, true);
        }
        s
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> bool {
        self.maint[i * self.n_periods + t]
    }

    #[inline]
    pub fn set(&mut self, i: usize, t: usize, on: bool) {
        self.maint[i * self.n_periods + t] = on;
    }

    /// First maintenance period of each turbine, if any.
    pub fn periods(&self) -> Vec<Option<usize>> {
        (0..self.n_turbines)
            .map(|i| (0..self.n_periods).find(|&t| self.get(i, t)))
            .collect()
    }

    pub fn count_in_period(&self, t: usize) -> usize {
        (0..self.n_turbines).filter(|&i| self.get(i, t)).count()
    }

    pub fn count_for_turbine(&self, i: usize) -> usize {
        (0..self.n_periods).filter(|&t| self.get(i, t)).count()
    }

    /// Rows as 0/1 integers, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_turbines)
            .map(|i| (0..self.n_periods).map(|t| self.get(i, t) as u8).collect())
            .collect()
    }
}

/// Canonical crew positions: the set of locations holding a maintained
/// turbine in each period, or `{DEPOT}` when nothing is maintained.
pub fn crew_locations(inst: &Instance, schedule: &Schedule) -> Vec<BTreeSet<usize>> {
    (0..schedule.n_periods)
        .map(|t| {
            let occ: BTreeSet<usize> = (0..schedule.n_turbines)
                .filter(|&i| schedule.get(i, t))
                .map(|i| inst.location_of[i])
                .collect();
            if occ.is_empty() {
                BTreeSet::from([DEPOT])
            } else {
                occ
            }
        })
        .collect()
}

/// Minimal change flags: `delta[t]` is set iff some site location
/// (`1..=J`, the depot excluded) is occupied at `t-1` and vacated at `t`.
/// `delta[0]` is always unset.
pub fn change_flags(crew: &[BTreeSet<usize>]) -> Vec<bool> {
    let mut out = vec![false; crew.len()];
    for t in 1..crew.len() {
        out[t] = crew[t - 1].iter().any(|&j| j != DEPOT && !crew[t].contains(&j));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum ConstraintViolation {
    /// More than `M` turbines in one period.
    Capacity { period: usize, count: usize },
    /// A turbine maintained zero or several times.
    ExactlyOnce { turbine: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<ConstraintViolation>,
    pub crew_locations: Vec<BTreeSet<usize>>,
    pub change_flags: Vec<bool>,
}

/// Checks the capacity and exactly-once constraints and derives the
/// canonical crew route.
pub fn check_feasible(inst: &Instance, schedule: &Schedule) -> Result<Feasibility, InstanceError> {
    if schedule.n_turbines != inst.n_turbines {
        return Err(InstanceError::Dimension {
            field: "schedule turbines",
            expected: inst.n_turbines,
            got: schedule.n_turbines,
        });
    }
    if schedule.n_periods != inst.n_periods {
        return Err(InstanceError::Dimension {
            field: "schedule periods",
            expected: inst.n_periods,
            got: schedule.n_periods,
        });
    }
    if schedule.maint.len() != inst.n_turbines * inst.n_periods {
        return Err(InstanceError::Dimension {
            field: "schedule matrix",
            expected: inst.n_turbines * inst.n_periods,
            got: schedule.maint.len(),
        });
    }
    let mut violations = Vec::new();
    for t in 0..inst.n_periods {
        let count = schedule.count_in_period(t);
        if count > inst.capacity {
            violations.push(ConstraintViolation::Capacity { period: t, count });
        }
    }
    for i in 0..inst.n_turbines {
        let count = schedule.count_for_turbine(i);
        if count != 1 {
            violations.push(ConstraintViolation::ExactlyOnce { turbine: i, count });
        }
    }
    let crew = crew_locations(inst, schedule);
    let flags = change_flags(&crew);
    Ok(Feasibility {
        feasible: violations.is_empty(),
        violations,
        crew_locations: crew,
        change_flags: flags,
    })
}

/// A uniformly random feasible schedule: turbines take distinct random
/// slots out of the `T * M` available.
pub fn random_feasible_schedule<R: rand::Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Schedule {
    use rand::seq::SliceRandom;
    let mut slots: Vec<usize> = (0..inst.n_slots()).collect();
    slots.shuffle(rng);
    let periods: Vec<usize> = slots[..inst.n_turbines].iter().map(|s| s / inst.capacity).collect();
    Schedule::from_periods(&periods, inst.n_periods)
}
