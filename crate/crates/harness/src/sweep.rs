//! One-parameter sweeps over the class prior or the slack.

use std::fmt;
use std::path::Path;

use purl_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, ExperimentResult};
use crate::metrics::{AggregateRow, AGGREGATE_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Eta,
    Beta,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Eta => "eta",
            SweepParam::Beta => "beta",
        })
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepParam::Eta),
            "beta" => Ok(SweepParam::Beta),
            _ => Err(Error::config(format!("unknown sweep parameter {s:?}, expected eta or beta"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    /// The base config with the swept parameter set to `value`.
    pub fn at(&self, value: f64) -> ExperimentConfig {
        let mut c = self.base.clone();
        match self.param {
            SweepParam::Eta => c.purl.eta = value,
            SweepParam::Beta => c.purl.beta = value,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        for &v in &self.values {
            self.at(v).validate().map_err(|e| Error::config(format!("{} = {v}: {e}", self.param)))?;
        }
        Ok(())
    }
}

pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

impl SweepPoint {
    pub fn final_row(&self) -> &AggregateRow {
        self.result.final_row().expect("validated configs evaluate at least once")
    }
}

/// Runs the base experiment at every grid value. With `out`, each run writes to
/// `<param>_<value>/` and `sweep.csv` holds the final-point aggregate per value.
pub fn sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let dir = out.map(|o| o.join(format!("{}_{value}", spec.param)));
        let result = run_experiment(&spec.at(value), dir.as_deref())?;
        if result.final_row().is_none() {
            return Err(Error::config("sweep runs need a positive step budget"));
        }
        points.push(SweepPoint { value, result });
    }
    if let Some(dir) = out {
        write_sweep_csv(spec.param, &points, &dir.join("sweep.csv"))?;
    }
    Ok(points)
}

fn write_sweep_csv(param: SweepParam, points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![param.to_string(), "step".to_string(), "n_seeds".to_string()];
    for c in AGGREGATE_COLUMNS {
        header.extend([format!("{c}_mean"), format!("{c}_lo"), format!("{c}_hi")]);
    }
    w.write_record(&header)?;
    for p in points {
        let row = p.final_row();
        let mut rec = vec![p.value.to_string(), row.step.to_string(), row.n_seeds.to_string()];
        for s in &row.columns {
            match s {
                Some(s) => rec.extend([s.mean.to_string(), s.lo.to_string(), s.hi.to_string()]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
