//! Exact minimization of the cost-form objective for small instances.
//!
//! Depth-first branch and bound over periods. A node is
//! `(period, remaining turbines, sites occupied in the previous period)`;
//! branching picks which remaining turbines (at most `M`) are maintained in
//! the current period. The bound adds, for every remaining turbine, its
//! cheapest cost in any period not yet decided. Visit costs are
//! nonnegative so the bound is admissible. Nodes reached again with no
//! better accumulated cost are pruned.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{evaluate, OracleError};
use crate::features::maintenance_cost_matrix;
use crate::instance::{Instance, Schedule, DEPOT};

pub const DEFAULT_EXACT_CEILING: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
}

impl Budget {
    pub const UNLIMITED: Budget = Budget {
        time_limit: None,
        node_limit: None,
    };

    pub fn seconds(s: f64) -> Self {
        Self {
            time_limit: Some(Duration::from_secs_f64(s)),
            node_limit: None,
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self::seconds(3600.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    BranchAndBound,
    /// Every capacity-feasible assignment, each scored by the full evaluator.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub budget: Budget,
    pub mode: SearchMode,
    pub max_turbines: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            budget: Budget::default(),
            mode: SearchMode::BranchAndBound,
            max_turbines: DEFAULT_EXACT_CEILING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub schedule: Schedule,
    /// Cost-form value of `schedule` from the full evaluator.
    pub value: f64,
    pub nodes: u64,
    pub wall_time: Duration,
    /// False when the budget ran out before the search finished.
    pub proved_optimal: bool,
}

pub fn solve_exact(inst: &Instance, opts: &SolveOptions) -> Result<ExactResult, OracleError> {
    if inst.n_turbines > opts.max_turbines {
        return Err(OracleError::TooLarge {
            turbines: inst.n_turbines,
            ceiling: opts.max_turbines,
        });
    }
    let report = inst.validate();
    if !report.is_ok() {
        return Err(OracleError::InvalidInstance(format!("{:?}", report.violations)));
    }
    if inst.n_locations >= 63 || inst.n_turbines >= 32 {
        return Err(OracleError::InvalidInstance("too many locations or turbines for bitsets".into()));
    }
    let start = Instant::now();
    let (periods, nodes, complete) = match opts.mode {
        SearchMode::BranchAndBound => {
            let mut s = BranchAndBound::new(inst, opts.budget, start);
            s.run();
            (s.best_periods, s.nodes, !s.stopped)
        }
        SearchMode::Exhaustive => {
            let mut s = Exhaustive::new(inst, opts.budget, start);
            s.run();
            (s.best_periods, s.nodes, !s.stopped)
        }
    };
    // out of budget before the first leaf: fall back to filling periods in turbine order
    let periods = periods.unwrap_or_else(|| (0..inst.n_turbines).map(|i| i / inst.capacity).collect());
    let schedule = Schedule::from_periods(&periods, inst.n_periods);
    let value = evaluate(inst, &schedule)?.eq11_value;
    Ok(ExactResult {
        schedule,
        value,
        nodes,
        wall_time: start.elapsed(),
        proved_optimal: complete,
    })
}

struct Limits {
    budget: Budget,
    start: Instant,
}

impl Limits {
    fn exceeded(&self, nodes: u64) -> bool {
        if self.budget.node_limit.is_some_and(|n| nodes >= n) {
            return true;
        }
        // clock reads are not free; sample every 256 nodes
        nodes % 256 == 0 && self.budget.time_limit.is_some_and(|t| self.start.elapsed() >= t)
    }
}

struct BranchAndBound<'a> {
    inst: &'a Instance,
    x: Vec<f64>,
    /// `suffix_min[i * (T+1) + t]` = min over periods `>= t` of `x[i][.]`.
    suffix_min: Vec<f64>,
    site_bit: Vec<u64>,
    limits: Limits,
    best_value: f64,
    best_periods: Option<Vec<usize>>,
    current: Vec<usize>,
    seen: HashMap<(usize, u32, u64), f64>,
    nodes: u64,
    stopped: bool,
}

impl<'a> BranchAndBound<'a> {
    fn new(inst: &'a Instance, budget: Budget, start: Instant) -> Self {
        let (ni, nt) = (inst.n_turbines, inst.n_periods);
        let x = maintenance_cost_matrix(inst);
        let mut suffix_min = vec![f64::INFINITY; ni * (nt + 1)];
        for i in 0..ni {
            for t in (0..nt).rev() {
                suffix_min[i * (nt + 1) + t] = x[i * nt + t].min(suffix_min[i * (nt + 1) + t + 1]);
            }
        }
        let site_bit = inst.location_of.iter().map(|&l| 1u64 << l).collect();
        Self {
            inst,
            x,
            suffix_min,
            site_bit,
            limits: Limits { budget, start },
            best_value: f64::INFINITY,
            best_periods: None,
            current: vec![usize::MAX; ni],
            seen: HashMap::new(),
            nodes: 0,
            stopped: false,
        }
    }

    fn run(&mut self) {
        let all = if self.inst.n_turbines == 32 {
            u32::MAX
        } else {
            (1u32 << self.inst.n_turbines) - 1
        };
        self.visit(0, all, 0, 0.0);
    }

    fn bound(&self, t: usize, remaining: u32) -> f64 {
        let nt1 = self.inst.n_periods + 1;
        bits(remaining).map(|i| self.suffix_min[i * nt1 + t]).sum()
    }

    fn visit(&mut self, t: usize, remaining: u32, prev_sites: u64, cost: f64) {
        if self.stopped {
            return;
        }
        self.nodes += 1;
        if self.limits.exceeded(self.nodes) {
            self.stopped = true;
            return;
        }
        let inst = self.inst;
        let (nt, cap) = (inst.n_periods, inst.capacity);
        if remaining == 0 {
            // the periods left are empty, so the crew leaves its last sites once
            let cost = if t < nt && prev_sites != 0 { cost + inst.visit_cost } else { cost };
            if cost < self.best_value {
                self.best_value = cost;
                self.best_periods = Some(self.current.clone());
            }
            return;
        }
        if t == nt {
            return;
        }
        if cost + self.bound(t, remaining) >= self.best_value {
            return;
        }
        let key = (t, remaining, prev_sites);
        if self.seen.get(&key).is_some_and(|&c| c <= cost) {
            return;
        }
        self.seen.insert(key, cost);

        let left = remaining.count_ones() as usize;
        let later_capacity = cap * (nt - t - 1);
        let min_take = left.saturating_sub(later_capacity);
        let max_take = cap.min(left);
        let pool: Vec<usize> = bits(remaining).collect();

        let mut children: Vec<(f64, u32, u64)> = Vec::new();
        for size in min_take..=max_take {
            for_each_combination(&pool, size, &mut |chosen| {
                let mut mask = 0u32;
                let mut sites = 0u64;
                let mut step = 0.0;
                for &i in chosen {
                    mask |= 1 << i;
                    sites |= self.site_bit[i];
                    step += self.x[i * nt + t];
                }
                // an empty period parks the crew at the depot, which counts as vacating every site
                let vacated = t > 0 && prev_sites & !sites & !(1u64 << DEPOT) != 0;
                if vacated {
                    step += inst.visit_cost;
                }
                children.push((step, mask, sites));
            });
        }
        // cheapest first; stable sort keeps enumeration order on ties
        let nt1 = nt + 1;
        let mut scored: Vec<(f64, f64, u32, u64)> = children
            .into_iter()
            .map(|(step, mask, sites)| {
                let rest = remaining & !mask;
                let lb: f64 = bits(rest).map(|i| self.suffix_min[i * nt1 + t + 1]).sum();
                (step + lb, step, mask, sites)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, step, mask, sites) in scored {
            for i in bits(mask) {
                self.current[i] = t;
            }
            self.visit(t + 1, remaining & !mask, sites, cost + step);
            for i in bits(mask) {
                self.current[i] = usize::MAX;
            }
            if self.stopped {
                return;
            }
        }
    }
}

struct Exhaustive<'a> {
    inst: &'a Instance,
    limits: Limits,
    load: Vec<usize>,
    current: Vec<usize>,
    best_value: f64,
    best_periods: Option<Vec<usize>>,
    nodes: u64,
    stopped: bool,
}

impl<'a> Exhaustive<'a> {
    fn new(inst: &'a Instance, budget: Budget, start: Instant) -> Self {
        Self {
            inst,
            limits: Limits { budget, start },
            load: vec![0; inst.n_periods],
            current: vec![0; inst.n_turbines],
            best_value: f64::INFINITY,
            best_periods: None,
            nodes: 0,
            stopped: false,
        }
    }

    fn run(&mut self) {
        self.assign(0);
    }

    fn assign(&mut self, i: usize) {
        if self.stopped {
            return;
        }
        self.nodes += 1;
        if self.limits.exceeded(self.nodes) {
            self.stopped = true;
            return;
        }
        if i == self.inst.n_turbines {
            let s = Schedule::from_periods(&self.current, self.inst.n_periods);
            let v = evaluate(self.inst, &s).expect("capacity respected by construction").eq11_value;
            if v < self.best_value {
                self.best_value = v;
                self.best_periods = Some(self.current.clone());
            }
            return;
        }
        for t in 0..self.inst.n_periods {
            if self.load[t] < self.inst.capacity {
                self.load[t] += 1;
                self.current[i] = t;
                self.assign(i + 1);
                self.load[t] -= 1;
            }
        }
    }
}

fn bits(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

/// Calls `f` with every `k`-subset of `pool` in lexicographic order.
fn for_each_combination(pool: &[usize], k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(pool: &[usize], k: usize, from: usize, acc: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if acc.len() == k {
            f(acc);
            return;
        }
        let need = k - acc.len();
        for j in from..=pool.len().saturating_sub(need) {
            if pool.len() < need {
                break;
            }
            acc.push(pool[j]);
            rec(pool, k, j + 1, acc, f);
            acc.pop();
        }
    }
    let mut acc = Vec::with_capacity(k);
    rec(pool, k, 0, &mut acc, f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::tiny;

    #[test]
    fn combinations_are_complete() {
        let mut seen = Vec::new();
        for_each_combination(&[1, 3, 5, 7], 2, &mut |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![1, 3]);
        let mut empty = 0;
        for_each_combination(&[1, 2], 0, &mut |_| empty += 1);
        assert_eq!(empty, 1);
    }

    #[test]
    fn single_turbine_picks_cheaper_period() {
        // x = [3, 7]: C + pi*P with pi*P = 1
        let mut inst = tiny(1, 2, 1);
        inst.maint_cost = vec![2.0, 6.0];
        inst.price = vec![1.0, 1.0];
        inst.max_production = vec![1.0, 1.0];
        inst.visit_cost = 0.0;
        let r = solve_exact(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(r.schedule, Schedule::from_periods(&[0], 2));
        assert_eq!(r.value, 3.0);
        assert!(r.proved_optimal);
    }

    #[test]
    fn ceiling_enforced() {
        let inst = tiny(3, 3, 1);
        let opts = SolveOptions {
            max_turbines: 2,
            ..Default::default()
        };
        assert!(matches!(solve_exact(&inst, &opts), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn node_budget_returns_unproven_incumbent() {
        let inst = tiny(6, 4, 2);
        let opts = SolveOptions {
            budget: Budget {
                time_limit: None,
                node_limit: Some(12),
            },
            ..Default::default()
        };
        let r = solve_exact(&inst, &opts).unwrap();
        assert!(!r.proved_optimal);
        let full = solve_exact(&inst, &SolveOptions::default()).unwrap();
        assert!(full.proved_optimal);
        assert!(full.value <= r.value);
    }
}
