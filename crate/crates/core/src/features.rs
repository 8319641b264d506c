//! Multi-step embedding inputs.
//!
//! Builds the expected scheduling-cost matrix `x[i][t]`, pads it with
//! zero-cost idle turbines at the depot until there are exactly `T*M`
//! candidates, copies each period across its `M` slots, and broadcasts
//! locations over the same `T x M` grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, DEPOT};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("T*M = {slots} slots cannot hold {turbines} turbines")]
    TooManyTurbines { slots: usize, turbines: usize },
    #[error("cannot pad {have} candidate rows down to {target}")]
    PadTooSmall { have: usize, target: usize },
}

/// Expected cost of maintaining each turbine in each period, averaged over
/// scenarios: before failure the maintenance cost plus the production lost
/// that period; after failure the failure cost plus all production lost
/// from the failure period through `t`. Returned row-major `I x T`.
pub fn maintenance_cost_matrix(inst: &Instance) -> Vec<f64> {
    let (ni, nt, ns) = (inst.n_turbines, inst.n_periods, inst.n_scenarios);
    let mut x = vec![0.0; ni * nt];
    for s in 0..ns {
        for i in 0..ni {
            let f = inst.failure(s, i);
            let mut lost_since_failure = 0.0;
            for t in 0..nt {
                let revenue = inst.price(s, t) * inst.production(s, i, t);
                let v = if inst.before_failure(s, i, t) {
                    inst.maint(i, t) + revenue
                } else {
                    // t+1 >= F: accumulate pi*P over periods F..=t+1 (1-based)
                    debug_assert!(t + 1 >= f);
                    lost_since_failure += revenue;
                    inst.failure_cost + lost_since_failure
                };
                x[i * nt + t] += v;
            }
        }
    }
    let inv = 1.0 / ns as f64;
    x.iter_mut().for_each(|v| *v *= inv);
    x
}

/// Cost matrix and locations with idle rows appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmented {
    pub n_real: usize,
    pub n_idle: usize,
    pub n_periods: usize,
    /// `(I + I') x T`, row-major.
    pub x: Vec<f64>,
    pub locations: Vec<usize>,
}

/// Appends `T*M - I` idle rows (zero cost, depot location).
pub fn augment_idle(x: &[f64], locations: &[usize], n_periods: usize, capacity: usize) -> Result<Augmented, FeatureError> {
    augment_idle_to(x, locations, n_periods, n_periods * capacity)
}

/// Appends idle rows until there are `total_rows` candidates.
pub fn augment_idle_to(x: &[f64], locations: &[usize], n_periods: usize, total_rows: usize) -> Result<Augmented, FeatureError> {
    let n_real = locations.len();
    debug_assert_eq!(x.len(), n_real * n_periods);
    if total_rows < n_real {
        return Err(FeatureError::PadTooSmall {
            have: n_real,
            target: total_rows,
        });
    }
    let n_idle = total_rows - n_real;
    let mut xa = x.to_vec();
    xa.resize(total_rows * n_periods, 0.0);
    let mut la = locations.to_vec();
    la.resize(total_rows, DEPOT);
    Ok(Augmented {
        n_real,
        n_idle,
        n_periods,
        x: xa,
        locations: la,
    })
}

/// `chi[i][t][m] = x[i][t]` for every slot `m < capacity`.
pub fn expand_slots(x_aug: &[f64], n_periods: usize, capacity: usize) -> Vec<f64> {
    debug_assert_eq!(x_aug.len() % n_periods.max(1), 0);
    x_aug.iter().flat_map(|&v| std::iter::repeat_n(v, capacity)).collect()
}

/// `loc[i][t][m] = locations[i]`.
pub fn align_locations(locations: &[usize], n_periods: usize, capacity: usize) -> Vec<usize> {
    locations
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, n_periods * capacity))
        .collect()
}

/// Embedding inputs for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub n_real: usize,
    pub n_idle: usize,
    pub n_periods: usize,
    pub capacity: usize,
    pub n_locations: usize,
    /// `(I + I') x T x M`, row-major. Raw currency unless normalized.
    pub chi: Vec<f64>,
    /// `(I + I') x T x M` location indices.
    pub loc: Vec<usize>,
    /// `chi` has been divided by this factor.
    pub chi_scale: f64,
}

impl FeatureSet {
    pub fn from_instance(inst: &Instance) -> Result<Self, FeatureError> {
        Self::padded(inst, inst.n_slots())
    }

    /// Like [`from_instance`](Self::from_instance) but with `total_rows`
    /// candidates; `total_rows > T*M` leaves spare idle turbines unpicked.
    pub fn padded(inst: &Instance, total_rows: usize) -> Result<Self, FeatureError> {
        if inst.n_slots() < inst.n_turbines {
            return Err(FeatureError::TooManyTurbines {
                slots: inst.n_slots(),
                turbines: inst.n_turbines,
            });
        }
        let x = maintenance_cost_matrix(inst);
        let aug = augment_idle_to(&x, &inst.location_of, inst.n_periods, total_rows)?;
        Ok(Self {
            n_real: aug.n_real,
            n_idle: aug.n_idle,
            n_periods: inst.n_periods,
            capacity: inst.capacity,
            n_locations: inst.n_locations,
            chi: expand_slots(&aug.x, inst.n_periods, inst.capacity),
            loc: align_locations(&aug.locations, inst.n_periods, inst.capacity),
            chi_scale: 1.0,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.n_real + self.n_idle
    }

    pub fn n_slots(&self) -> usize {
        self.n_periods * self.capacity
    }

    #[inline]
    pub fn chi_at(&self, i: usize, t: usize, m: usize) -> f64 {
        self.chi[(i * self.n_periods + t) * self.capacity + m]
    }

    #[inline]
    pub fn location(&self, i: usize) -> usize {
        self.loc[i * self.n_slots()]
    }

    pub fn is_idle(&self, i: usize) -> bool {
        i >= self.n_real
    }

    /// Scales `chi` into `[-1, 1]` by its largest magnitude. All-zero input
    /// is returned unchanged with scale 1.
    pub fn normalize(&self) -> Self {
        let max = self.chi.iter().fold(0.0f64, |a, &v| a.max((v * self.chi_scale).abs()));
        let mut out = self.denormalize();
        if max > 0.0 {
            out.chi.iter_mut().for_each(|v| *v /= max);
            out.chi_scale = max;
        }
        out
    }

    pub fn denormalize(&self) -> Self {
        let mut out = self.clone();
        if self.chi_scale != 1.0 {
            out.chi.iter_mut().for_each(|v| *v *= self.chi_scale);
            out.chi_scale = 1.0;
        }
        out
    }

    /// Width of one token in [`network_input`](Self::network_input).
    pub fn token_width(n_locations: usize) -> usize {
        2 + n_locations
    }

    /// Token matrix for the encoder, one row per (slot, candidate) in
    /// slot-major order (`row = k * (I+I') + i`): `[chi, one_hot(loc)]`
    /// with the one-hot over `0..=J`.
    pub fn network_input(&self) -> Tensor {
        let n = self.n_candidates();
        let k = self.n_slots();
        let w = Self::token_width(self.n_locations);
        let mut data = vec![0.0; k * n * w];
        for slot in 0..k {
            for i in 0..n {
                let row = &mut data[(slot * n + i) * w..][..w];
                row[0] = self.chi[i * k + slot];
                row[1 + self.loc[i * k + slot]] = 1.0;
            }
        }
        Tensor::new(vec![k * n, w], data).expect("sized above")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::tiny;

    fn single(ft: usize) -> Instance {
        let mut inst = tiny(1, 3, 1);
        inst.failure_time = vec![ft];
        inst.maint_cost = vec![10.0; 3];
        inst.failure_cost = 100.0;
        inst.price = vec![2.0, 2.0, 3.0];
        inst.max_production = vec![5.0, 4.0, 5.0];
        inst
    }

    #[test]
    fn pre_failure_branch() {
        // F = 3, period 1: C + pi*P = 10 + 2*5
        let x = maintenance_cost_matrix(&single(3));
        assert_eq!(x[0], 20.0);
    }

    #[test]
    fn post_failure_branch() {
        // F = 2, period 3: Cf + pi_2 P_2 + pi_3 P_3 = 100 + 8 + 15
        let x = maintenance_cost_matrix(&single(2));
        assert_eq!(x[2], 123.0);
        // period 2 is the failure period itself: 100 + 8
        assert_eq!(x[1], 108.0);
    }

    #[test]
    fn idle_augmentation() {
        let x = vec![1.0; 5 * 3];
        let a = augment_idle(&x, &[1, 2, 3, 4, 1], 3, 2).unwrap();
        assert_eq!(a.n_idle, 1);
        assert_eq!(&a.x[15..], &[0.0, 0.0, 0.0]);
        assert_eq!(a.locations[5], DEPOT);
        let full = augment_idle(&vec![1.0; 6 * 3], &[1; 6], 3, 2).unwrap();
        assert_eq!(full.n_idle, 0);
        assert_eq!(full.x, vec![1.0; 18]);
        assert!(augment_idle(&vec![1.0; 7 * 3], &[1; 7], 3, 2).is_err());
    }

    #[test]
    fn augmentation_keeps_column_sums() {
        let x: Vec<f64> = (0..15).map(|k| k as f64 * 1.5).collect();
        let a = augment_idle(&x, &[1, 2, 3, 4, 1], 3, 2).unwrap();
        for t in 0..3 {
            let before: f64 = (0..5).map(|i| x[i * 3 + t]).sum();
            let after: f64 = (0..6).map(|i| a.x[i * 3 + t]).sum();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn expansion_duplicates_columns() {
        // one turbine, T = 3, M = 2: [a, a, b, b, c, c]
        let chi = expand_slots(&[1.0, 2.0, 3.0], 3, 2);
        assert_eq!(chi, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(expand_slots(&[1.0, 2.0, 3.0], 3, 1), vec![1.0, 2.0, 3.0]);
        for m in 0..2 {
            let slice: Vec<f64> = (0..3).map(|t| chi[t * 2 + m]).collect();
            assert_eq!(slice, vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn locations_broadcast() {
        assert_eq!(align_locations(&[2, 0], 2, 2), vec![2, 2, 2, 2, 0, 0, 0, 0]);
        assert_eq!(align_locations(&[3], 2, 1), vec![3, 3]);
    }

    #[test]
    fn normalize_round_trip() {
        let inst = tiny(3, 2, 2);
        let fs = FeatureSet::from_instance(&inst).unwrap();
        let n = fs.normalize();
        assert!(n.chi.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(n.chi.iter().any(|&v| v == 1.0));
        let back = n.denormalize();
        for (a, b) in back.chi.iter().zip(&fs.chi) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        let zero = FeatureSet {
            chi: vec![0.0; fs.chi.len()],
            ..fs.clone()
        };
        assert_eq!(zero.normalize(), zero);
    }

    #[test]
    fn idle_rows_are_zero_at_depot() {
        let inst = tiny(3, 2, 2);
        let fs = FeatureSet::from_instance(&inst).unwrap();
        assert_eq!(fs.n_candidates(), 4);
        for k in 0..4 {
            assert_eq!(fs.chi[3 * 4 + k], 0.0);
            assert_eq!(fs.loc[3 * 4 + k], DEPOT);
        }
    }

    #[test]
    fn network_input_layout() {
        let inst = tiny(1, 1, 2);
        let fs = FeatureSet::from_instance(&inst).unwrap().normalize();
        let x = fs.network_input();
        // 2 slots x 2 candidates, width 1 + (J+1) = 4
        assert_eq!(x.shape(), &[4, 4]);
        assert_eq!(x.row(0), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(x.row(1), &[0.0, 1.0, 0.0, 0.0]);
    }
}
