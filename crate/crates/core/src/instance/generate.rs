//! Synthetic instance generator.
//!
//! Failure times and maintenance-cost curves stand in for prognostic
//! predictions: costs rise linearly toward the end of the horizon and
//! failure times are drawn around a per-turbine mean life.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Instance, InstanceError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub low: f64,
    pub high: f64,
}

impl UniformRange {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn check(&self, name: &str) -> Result<(), InstanceError> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low > self.high {
            return Err(InstanceError::InvalidConfig(format!(
                "range `{name}` must satisfy low <= high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.random_range(self.low..=self.high)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub turbines: usize,
    pub locations: usize,
    pub capacity: usize,
    pub periods: usize,
    pub scenarios: usize,
}

/// Distribution parameters; see the crate README for their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Distributions {
    pub price: UniformRange,
    pub production: UniformRange,
    /// Maintenance cost intercept `c0_i`.
    pub cost_base: UniformRange,
    /// Maintenance cost slope per period.
    pub cost_slope: UniformRange,
    /// Failure cost as a multiple of the mean maintenance cost.
    pub failure_cost_factor: f64,
    pub visit_cost: UniformRange,
    /// Mean failure period as a fraction of `T`.
    pub failure_mean_frac: UniformRange,
    /// Standard deviation of the failure period as a fraction of `T`.
    pub failure_sd_frac: f64,
}

impl Default for Distributions {
    fn default() -> Self {
        Self {
            price: UniformRange::new(20.0, 50.0),
            production: UniformRange::new(0.0, 10.0),
            cost_base: UniformRange::new(50.0, 150.0),
            cost_slope: UniformRange::new(0.0, 5.0),
            failure_cost_factor: 3.0,
            visit_cost: UniformRange::new(50.0, 200.0),
            failure_mean_frac: UniformRange::new(0.3, 1.2),
            failure_sd_frac: 0.15,
        }
    }
}

/// Named problem sizes: the five benchmark cases and three desk-scale cases
/// small enough for exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CasePreset {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    DeskA,
    DeskB,
    DeskC,
}

impl CasePreset {
    pub const ALL: [CasePreset; 8] = [
        Self::Case1,
        Self::Case2,
        Self::Case3,
        Self::Case4,
        Self::Case5,
        Self::DeskA,
        Self::DeskB,
        Self::DeskC,
    ];
    pub const DESK: [CasePreset; 3] = [Self::DeskA, Self::DeskB, Self::DeskC];

    pub fn dims(self) -> Dims {
        let (turbines, periods, scenarios) = match self {
            Self::Case1 => (15, 10, 20),
            Self::Case2 => (25, 15, 20),
            Self::Case3 => (30, 20, 20),
            Self::Case4 => (40, 25, 20),
            Self::Case5 => (50, 30, 20),
            Self::DeskA => (5, 4, 4),
            Self::DeskB => (8, 5, 4),
            Self::DeskC => (10, 6, 4),
        };
        Dims {
            turbines,
            locations: 4,
            capacity: 2,
            periods,
            scenarios,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Case1 => "case1",
            Self::Case2 => "case2",
            Self::Case3 => "case3",
            Self::Case4 => "case4",
            Self::Case5 => "case5",
            Self::DeskA => "desk-a",
            Self::DeskB => "desk-b",
            Self::DeskC => "desk-c",
        }
    }
}

impl fmt::Display for CasePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CasePreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        let norm = norm.strip_prefix("desk-case-").map_or(norm.clone(), |r| format!("desk-{r}"));
        Self::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub dims: Dims,
    #[serde(default)]
    pub distributions: Distributions,
}

impl GeneratorConfig {
    pub fn for_preset(preset: CasePreset, seed: u64) -> Self {
        Self {
            seed,
            dims: preset.dims(),
            distributions: Distributions::default(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn check(&self) -> Result<(), InstanceError> {
        let d = &self.dims;
        if d.turbines == 0 || d.locations == 0 || d.capacity == 0 || d.periods == 0 || d.scenarios == 0 {
            return Err(InstanceError::InvalidConfig("all dimensions must be positive".into()));
        }
        if d.periods * d.capacity < d.turbines {
            return Err(InstanceError::InvalidConfig(format!(
                "T*M = {} cannot cover {} turbines",
                d.periods * d.capacity,
                d.turbines
            )));
        }
        let ds = &self.distributions;
        ds.price.check("price")?;
        ds.production.check("production")?;
        ds.cost_base.check("cost_base")?;
        ds.cost_slope.check("cost_slope")?;
        ds.visit_cost.check("visit_cost")?;
        ds.failure_mean_frac.check("failure_mean_frac")?;
        for (name, r) in [
            ("price", ds.price),
            ("production", ds.production),
            ("cost_base", ds.cost_base),
            ("visit_cost", ds.visit_cost),
        ] {
            if r.low < 0.0 {
                return Err(InstanceError::InvalidConfig(format!("range `{name}` must be nonnegative")));
            }
        }
        if !(ds.failure_cost_factor >= 0.0 && ds.failure_sd_frac >= 0.0) {
            return Err(InstanceError::InvalidConfig(
                "failure_cost_factor and failure_sd_frac must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic in `self`.
    pub fn generate(&self) -> Result<Instance, InstanceError> {
        self.check()?;
        let Dims {
            turbines: ni,
            locations: nj,
            capacity,
            periods: nt,
            scenarios: ns,
        } = self.dims;
        let ds = &self.distributions;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let mut location_of = Vec::with_capacity(ni);
        let mut maint_cost = Vec::with_capacity(ni * nt);
        let mut mean_life = Vec::with_capacity(ni);
        for _ in 0..ni {
            location_of.push(rng.random_range(1..=nj));
            let c0 = ds.cost_base.sample(&mut rng);
            let slope = ds.cost_slope.sample(&mut rng);
            // period index is 1-based in the cost curve
            maint_cost.extend((1..=nt).map(|t| c0 + slope * t as f64));
            mean_life.push(ds.failure_mean_frac.sample(&mut rng) * nt as f64);
        }
        let mean_cost = maint_cost.iter().sum::<f64>() / maint_cost.len() as f64;
        let failure_cost = ds.failure_cost_factor * mean_cost;
        let visit_cost = ds.visit_cost.sample(&mut rng);

        let price: Vec<f64> = (0..ns * nt).map(|_| ds.price.sample(&mut rng)).collect();
        let max_production: Vec<f64> = (0..ns * ni * nt).map(|_| ds.production.sample(&mut rng)).collect();
        let sd = ds.failure_sd_frac * nt as f64;
        let mut failure_time = Vec::with_capacity(ns * ni);
        for _ in 0..ns {
            for &mu in &mean_life {
                let draw = if sd > 0.0 {
                    Normal::new(mu, sd).expect("sd checked positive").sample(&mut rng)
                } else {
                    mu
                };
                failure_time.push(draw.round().clamp(1.0, (nt + 1) as f64) as usize);
            }
        }

        Ok(Instance {
            n_turbines: ni,
            n_periods: nt,
            capacity,
            n_locations: nj,
            n_scenarios: ns,
            maint_cost,
            failure_cost,
            visit_cost,
            location_of,
            price,
            max_production,
            failure_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_benchmark_dimensions() {
        let expect = [(15, 10), (25, 15), (30, 20), (40, 25), (50, 30)];
        for (p, (i, t)) in CasePreset::ALL[..5].iter().zip(expect) {
            let d = p.dims();
            assert_eq!((d.turbines, d.locations, d.capacity, d.periods), (i, 4, 2, t));
        }
    }

    #[test]
    fn case5_generates_valid_instance() {
        let inst = GeneratorConfig::for_preset(CasePreset::Case5, 3).generate().unwrap();
        assert_eq!((inst.n_turbines, inst.n_locations, inst.capacity, inst.n_periods), (50, 4, 2, 30));
        assert!(inst.validate().is_ok());
    }

    #[test]
    fn same_seed_same_instance() {
        let cfg = GeneratorConfig::for_preset(CasePreset::Case1, 99);
        assert_eq!(cfg.generate().unwrap(), cfg.generate().unwrap());
        assert_ne!(cfg.generate().unwrap(), cfg.with_seed(100).generate().unwrap());
    }

    #[test]
    fn inverted_range_rejected() {
        let mut cfg = GeneratorConfig::for_preset(CasePreset::DeskA, 1);
        cfg.distributions.price = UniformRange::new(5.0, 1.0);
        assert!(matches!(cfg.generate(), Err(InstanceError::InvalidConfig(_))));
    }

    #[test]
    fn preset_names_parse() {
        for p in CasePreset::ALL {
            assert_eq!(p.name().parse::<CasePreset>().unwrap(), p);
        }
        assert_eq!("desk-case-a".parse::<CasePreset>().unwrap(), CasePreset::DeskA);
        assert!("case9".parse::<CasePreset>().is_err());
    }
}
