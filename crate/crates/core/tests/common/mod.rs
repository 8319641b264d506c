#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use windsched::decoder::DecodeMode;
use windsched::tensor::{Graph, Tensor};
use windsched::{FeatureSet, Instance, Model, Schedule};

/// One scenario, two locations alternating, no failures.
pub fn tiny(ni: usize, nt: usize, m: usize) -> Instance {
    Instance {
        n_turbines: ni,
        n_periods: nt,
        capacity: m,
        n_locations: 2,
        n_scenarios: 1,
        maint_cost: (0..ni * nt).map(|k| 10.0 + k as f64).collect(),
        failure_cost: 100.0,
        visit_cost: 5.0,
        location_of: (0..ni).map(|i| 1 + i % 2).collect(),
        price: vec![2.0; nt],
        max_production: vec![3.0; ni * nt],
        failure_time: vec![nt + 1; ni],
    }
}

/// Small random instance with every field drawn independently.
pub fn random_instance(rng: &mut ChaCha8Rng, ni: usize, nt: usize, m: usize, nj: usize, ns: usize) -> Instance {
    Instance {
        n_turbines: ni,
        n_periods: nt,
        capacity: m,
        n_locations: nj,
        n_scenarios: ns,
        maint_cost: (0..ni * nt).map(|_| rng.random_range(0.0..150.0)).collect(),
        failure_cost: rng.random_range(0.0..400.0),
        visit_cost: rng.random_range(0.0..200.0),
        location_of: (0..ni).map(|_| rng.random_range(1..=nj)).collect(),
        price: (0..ns * nt).map(|_| rng.random_range(0.0..50.0)).collect(),
        max_production: (0..ns * ni * nt).map(|_| rng.random_range(0.0..10.0)).collect(),
        failure_time: (0..ns * ni).map(|_| rng.random_range(1..=nt + 1)).collect(),
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feasible schedule: a random turbine order poured into periods
/// with random spare capacity.
pub fn random_schedule(rng: &mut ChaCha8Rng, inst: &Instance) -> Schedule {
    loop {
        let mut s = Schedule::empty(inst.n_turbines, inst.n_periods);
        let mut load = vec![0usize; inst.n_periods];
        let mut ok = true;
        for i in 0..inst.n_turbines {
            let open: Vec<usize> = (0..inst.n_periods).filter(|&t| load[t] < inst.capacity).collect();
            if open.is_empty() {
                ok = false;
                break;
            }
            let t = open[rng.random_range(0..open.len())];
            load[t] += 1;
            s.set(i, t, true);
        }
        if ok {
            return s;
        }
    }
}

/// `log p(sequence)` under `model`, with its gradient graph.
pub fn forced_log_prob(model: &Model, inst: &Instance, seq: &[usize]) -> f64 {
    let fs = FeatureSet::from_instance(inst).unwrap();
    let mut g = Graph::no_grad();
    let fwd = model.forward(&mut g, &fs).unwrap();
    model
        .decode(&mut g, &fwd, &fs, inst.visit_cost, &DecodeMode::Forced(seq.to_vec()), &mut seeded(0))
        .unwrap()
        .log_prob_value
}

/// Central difference of `f` with respect to every scalar of every parameter.
pub fn numeric_gradient(model: &Model, eps: f64, f: impl Fn(&Model) -> f64) -> Vec<Vec<f64>> {
    let mut work = model.clone();
    let mut out = Vec::new();
    for id in 0..model.store.len() {
        let base = model.store.get(id).clone();
        let mut g = vec![0.0; base.len()];
        for (k, gk) in g.iter_mut().enumerate() {
            let mut plus = base.clone();
            plus.data_mut()[k] += eps;
            work.store.set(id, plus).unwrap();
            let fp = f(&work);
            let mut minus = base.clone();
            minus.data_mut()[k] -= eps;
            work.store.set(id, minus).unwrap();
            let fm = f(&work);
            *gk = (fp - fm) / (2.0 * eps);
        }
        work.store.set(id, base).unwrap();
        out.push(g);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over all entries.
pub fn max_rel_err(a: &[Vec<f64>], b: &[Vec<f64>], floor: f64) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `||a - b|| / max(||a||, ||b||)` per parameter tensor, maximized.
pub fn max_tensor_rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>().sqrt();
            let diff: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            let scale = norm(x).max(norm(y));
            if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
        })
        .fold(0.0, f64::max)
}

pub fn tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// All schedules with every turbine exactly once and at most `M` per period.
pub fn all_schedules(inst: &Instance) -> Vec<Schedule> {
    let (ni, nt) = (inst.n_turbines, inst.n_periods);
    let mut out = Vec::new();
    let mut periods = vec![0usize; ni];
    loop {
        if (0..nt).all(|t| periods.iter().filter(|&&p| p == t).count() <= inst.capacity) {
            out.push(Schedule::from_periods(&periods, nt));
        }
        let mut k = 0;
        loop {
            if k == ni {
                return out;
            }
            periods[k] += 1;
            if periods[k] < nt {
                break;
            }
            periods[k] = 0;
            k += 1;
        }
    }
}

/// Cost of a pick order recomputed from the cost matrix and locations.
pub fn independent_sequence_cost(inst: &Instance, seq: &[usize]) -> f64 {
    let x = windsched::features::maintenance_cost_matrix(inst);
    let mut total = 0.0;
    let mut last: Option<usize> = None;
    for (k, &v) in seq.iter().enumerate() {
        let t = k / inst.capacity;
        let (chi, loc) = if v < inst.n_turbines {
            (x[v * inst.n_periods + t], inst.location_of[v])
        } else {
            (0.0, 0)
        };
        let change = last.is_some_and(|l| l != loc);
        total += chi + if change { inst.visit_cost } else { 0.0 };
        last = Some(loc);
    }
    total
}

/// Scheduling cost per (turbine, period), summed scenario by scenario with
/// 1-based periods as written in the cost definition.
pub fn x_brute(inst: &Instance) -> Vec<Vec<f64>> {
    let (ni, nt, ns) = (inst.n_turbines, inst.n_periods, inst.n_scenarios);
    let mut per_scenario = vec![vec![vec![0.0; nt]; ni]; ns];
    for (s, xs) in per_scenario.iter_mut().enumerate() {
        for (i, row) in xs.iter_mut().enumerate() {
            let f = inst.failure_time[s * ni + i];
            for (t0, cell) in row.iter_mut().enumerate() {
                let t = t0 + 1;
                let pp = |l: usize| inst.price[s * nt + l - 1] * inst.max_production[(s * ni + i) * nt + l - 1];
                *cell = if t < f {
                    inst.maint_cost[i * nt + t0] + pp(t)
                } else {
                    inst.failure_cost + (f..=t).map(pp).sum::<f64>()
                };
            }
        }
    }
    (0..ni)
        .map(|i| (0..nt).map(|t| per_scenario.iter().map(|xs| xs[i][t]).sum::<f64>() / ns as f64).collect())
        .collect()
}

/// Crew-change flags: a site occupied in one period and not in the next.
/// The depot is not a site, so leaving it is free.
pub fn delta_brute(inst: &Instance, m: &Schedule) -> Vec<bool> {
    let sets: Vec<Vec<usize>> = (0..inst.n_periods)
        .map(|t| (0..inst.n_turbines).filter(|&i| m.get(i, t)).map(|i| inst.location_of[i]).collect())
        .collect();
    (0..inst.n_periods)
        .map(|t| t > 0 && sets[t - 1].iter().any(|j| !sets[t].contains(j)))
        .collect()
}
