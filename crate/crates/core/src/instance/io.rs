//! Versioned JSON instance documents.
//!
//! Arrays are nested row-major: `maint_cost[i][t]`, `price[s][t]`,
//! `max_production[s][i][t]`, `failure_time[s][i]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Instance, InstanceError};

pub const INSTANCE_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u64,
    pub n_turbines: usize,
    pub n_periods: usize,
    pub capacity: usize,
    pub n_locations: usize,
    pub n_scenarios: usize,
    pub maint_cost: Vec<Vec<f64>>,
    pub failure_cost: f64,
    pub visit_cost: f64,
    pub location_of: Vec<usize>,
    pub price: Vec<Vec<f64>>,
    pub max_production: Vec<Vec<Vec<f64>>>,
    pub failure_time: Vec<Vec<usize>>,
}

fn check_len(field: &'static str, expected: usize, got: usize) -> Result<(), InstanceError> {
    if expected != got {
        return Err(InstanceError::Dimension { field, expected, got });
    }
    Ok(())
}

fn flatten<T: Copy>(field: &'static str, rows: &[Vec<T>], n_rows: usize, n_cols: usize) -> Result<Vec<T>, InstanceError> {
    check_len(field, n_rows, rows.len())?;
    let mut out = Vec::with_capacity(n_rows * n_cols);
    for r in rows {
        check_len(field, n_cols, r.len())?;
        out.extend_from_slice(r);
    }
    Ok(out)
}

fn finite(field: &'static str, vals: &[f64]) -> Result<(), InstanceError> {
    if vals.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(InstanceError::NonFinite(field))
    }
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let (ni, nt, ns) = (inst.n_turbines, inst.n_periods, inst.n_scenarios);
        Self {
            schema_version: INSTANCE_SCHEMA_VERSION,
            n_turbines: ni,
            n_periods: nt,
            capacity: inst.capacity,
            n_locations: inst.n_locations,
            n_scenarios: ns,
            maint_cost: inst.maint_cost.chunks(nt.max(1)).map(<[f64]>::to_vec).collect(),
            failure_cost: inst.failure_cost,
            visit_cost: inst.visit_cost,
            location_of: inst.location_of.clone(),
            price: inst.price.chunks(nt.max(1)).map(<[f64]>::to_vec).collect(),
            max_production: inst
                .max_production
                .chunks((ni * nt).max(1))
                .map(|s| s.chunks(nt.max(1)).map(<[f64]>::to_vec).collect())
                .collect(),
            failure_time: inst.failure_time.chunks(ni.max(1)).map(<[usize]>::to_vec).collect(),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = InstanceError;

    fn try_from(f: InstanceFile) -> Result<Self, Self::Error> {
        if f.schema_version != INSTANCE_SCHEMA_VERSION {
            return Err(InstanceError::SchemaVersion {
                found: f.schema_version,
                expected: INSTANCE_SCHEMA_VERSION,
            });
        }
        let (ni, nt, ns) = (f.n_turbines, f.n_periods, f.n_scenarios);
        let maint_cost = flatten("maint_cost", &f.maint_cost, ni, nt)?;
        let price = flatten("price", &f.price, ns, nt)?;
        check_len("max_production", ns, f.max_production.len())?;
        let mut max_production = Vec::with_capacity(ns * ni * nt);
        for s in &f.max_production {
            max_production.extend(flatten("max_production", s, ni, nt)?);
        }
        let failure_time = flatten("failure_time", &f.failure_time, ns, ni)?;
        check_len("location_of", ni, f.location_of.len())?;
        finite("maint_cost", &maint_cost)?;
        finite("price", &price)?;
        finite("max_production", &max_production)?;
        finite("failure_cost", &[f.failure_cost])?;
        finite("visit_cost", &[f.visit_cost])?;
        Ok(Instance {
            n_turbines: ni,
            n_periods: nt,
            capacity: f.capacity,
            n_locations: f.n_locations,
            n_scenarios: ns,
            maint_cost,
            failure_cost: f.failure_cost,
            visit_cost: f.visit_cost,
            location_of: f.location_of,
            price,
            max_production,
            failure_time,
        })
    }
}

impl Instance {
    pub fn to_json(&self) -> Result<String, InstanceError> {
        finite("maint_cost", &self.maint_cost)?;
        finite("price", &self.price)?;
        finite("max_production", &self.max_production)?;
        finite("failure_cost", &[self.failure_cost])?;
        finite("visit_cost", &[self.visit_cost])?;
        serde_json::to_string_pretty(&InstanceFile::from(self)).map_err(|e| InstanceError::Malformed(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        // Look at the version first so a newer schema gets a version error
        // rather than a confusing field error.
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| InstanceError::Malformed(e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(INSTANCE_SCHEMA_VERSION) => {}
            Some(found) => {
                return Err(InstanceError::SchemaVersion {
                    found,
                    expected: INSTANCE_SCHEMA_VERSION,
                })
            }
            None => return Err(InstanceError::Malformed("missing integer `schema_version`".into())),
        }
        let file: InstanceFile = serde_json::from_value(value).map_err(|e| InstanceError::Malformed(e.to_string()))?;
        file.try_into()
    }
}

pub fn write_instance(inst: &Instance, path: &Path) -> Result<(), InstanceError> {
    std::fs::write(path, inst.to_json()?)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance, InstanceError> {
    Instance::from_json(&std::fs::read_to_string(path)?)
}
