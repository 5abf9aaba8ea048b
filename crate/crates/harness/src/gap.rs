//! Paired gap-off / gap-on runs of PN-family and nn-PU-family methods.

use std::path::Path;

use purl_core::rewardlearn::{Method, PurlConfig};
use purl_core::Result;

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, ExperimentResult};

pub const GAP_METHODS: [Method; 4] = [Method::Gail, Method::NnPuGail, Method::Pnrl, Method::NnPurl];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pn,
    NnPu,
}

impl Family {
    pub fn of(method: Method) -> Self {
        match method {
            Method::NnPuGail | Method::NnPurl => Family::NnPu,
            _ => Family::Pn,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Pn => "PN",
            Family::NnPu => "nnPU",
        }
    }
}

pub struct GapArm {
    pub method: Method,
    pub no_gap: ExperimentResult,
    pub gap: ExperimentResult,
}

impl GapArm {
    fn finals(&self) -> (Vec<f64>, Vec<f64>) {
        (self.no_gap.final_per_seed("true_return"), self.gap.final_per_seed("true_return"))
    }

    /// Seed-mean final true return without and with the gap.
    pub fn returns(&self) -> (f64, f64) {
        let (a, b) = self.finals();
        (mean(&a), mean(&b))
    }

    /// Mean over seeds of the paired drop `no_gap - gap`.
    pub fn drop(&self) -> f64 {
        let (a, b) = self.finals();
        mean(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
    }

    /// Seed-mean gap return as a fraction of the seed-mean no-gap return.
    pub fn retention(&self) -> f64 {
        let (a, b) = self.returns();
        b / a
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub struct GapStudy {
    pub arms: Vec<GapArm>,
}

impl GapStudy {
    pub fn arm(&self, method: Method) -> Option<&GapArm> {
        self.arms.iter().find(|a| a.method == method)
    }

    /// Mean paired drop over the family's methods.
    pub fn family_drop(&self, family: Family) -> f64 {
        mean(&self.arms.iter().filter(|a| Family::of(a.method) == family).map(GapArm::drop).collect::<Vec<_>>())
    }
}

/// `base` with `method` and its default class prior and slack.
pub fn method_config(base: &ExperimentConfig, method: Method, gap: bool) -> ExperimentConfig {
    let (eta, beta) = PurlConfig::task_defaults(base.task, method.mode());
    ExperimentConfig { method, domain_gap: gap, purl: PurlConfig { eta, beta, ..base.purl.clone() }, ..base.clone() }
}

/// Runs `methods` with the gap off and on over the base config's seeds. With
/// `out`, each run writes to `<method>_gap<0|1>/` and `gap_study.csv` holds
/// one row per method plus one per family.
pub fn domain_gap_study(base: &ExperimentConfig, methods: &[Method], out: Option<&Path>) -> Result<GapStudy> {
    let configs: Vec<[ExperimentConfig; 2]> =
        methods.iter().map(|&m| [method_config(base, m, false), method_config(base, m, true)]).collect();
    // reject every bad config before any training
    for c in configs.iter().flatten() {
        c.validate()?;
    }
    let mut arms = Vec::with_capacity(methods.len());
    for [off, on] in configs {
        let dir = |c: &ExperimentConfig| out.map(|o| o.join(format!("{}_gap{}", c.method, c.domain_gap as u8)));
        let no_gap = run_experiment(&off, dir(&off).as_deref())?;
        let gap = run_experiment(&on, dir(&on).as_deref())?;
        arms.push(GapArm { method: off.method, no_gap, gap });
    }
    let study = GapStudy { arms };
    if let Some(dir) = out {
        write_study_csv(&study, &dir.join("gap_study.csv"))?;
    }
    Ok(study)
}

fn write_study_csv(study: &GapStudy, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "family", "no_gap_true_return", "gap_true_return", "drop", "retention"])?;
    for a in &study.arms {
        let (off, on) = a.returns();
        w.write_record([
            a.method.to_string(),
            Family::of(a.method).name().to_string(),
            off.to_string(),
            on.to_string(),
            a.drop().to_string(),
            a.retention().to_string(),
        ])?;
    }
    for f in [Family::Pn, Family::NnPu] {
        if study.arms.iter().any(|a| Family::of(a.method) == f) {
            let name = format!("{}-family", f.name());
            w.write_record([name.as_str(), f.name(), "", "", &study.family_drop(f).to_string(), ""])?;
        }
    }
    w.flush()?;
    Ok(())
}
