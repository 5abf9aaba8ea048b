//! Per-seed metrics CSVs and their seed aggregate.

use std::path::Path;

use purl_core::rewardlearn::{ClassStats, MetricsRow};
use purl_core::{Error, Result};

pub const METRICS_HEADER: [&str; 14] = [
    "step",
    "seed",
    "true_return",
    "pseudo_return",
    "pos_train_expert",
    "pos_holdout_expert",
    "pos_holdout_failure",
    "pos_replay",
    "sig_train_expert",
    "sig_holdout_expert",
    "sig_holdout_failure",
    "sig_replay",
    "reward_mse_train",
    "correction_active_rate",
];

/// Metric columns averaged across seeds, in aggregate-file order. The last one
/// is not part of the per-seed metrics file and lives in its own file.
pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "true_return",
    "pseudo_return",
    "pos_train_expert",
    "pos_holdout_expert",
    "pos_holdout_failure",
    "pos_replay",
    "sig_train_expert",
    "sig_holdout_expert",
    "sig_holdout_failure",
    "sig_replay",
    "reward_mse_train",
    "correction_active_rate",
    "success_rate",
];

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.96;

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Value of an aggregate column for one row.
pub fn column(row: &MetricsRow, name: &str) -> Option<f64> {
    let pos = |s: Option<ClassStats>| s.map(|c| c.pos);
    let sig = |s: Option<ClassStats>| s.map(|c| c.sig);
    let d = &row.disc;
    match name {
        "true_return" => row.true_return,
        "pseudo_return" => row.pseudo_return,
        "pos_train_expert" => pos(d.train_expert),
        "pos_holdout_expert" => pos(d.holdout_expert),
        "pos_holdout_failure" => pos(d.holdout_failure),
        "pos_replay" => pos(d.replay),
        "sig_train_expert" => sig(d.train_expert),
        "sig_holdout_expert" => sig(d.holdout_expert),
        "sig_holdout_failure" => sig(d.holdout_failure),
        "sig_replay" => sig(d.replay),
        "reward_mse_train" => row.reward_mse_train,
        "correction_active_rate" => Some(row.correction_active_rate),
        "success_rate" => row.success_rate,
        _ => None,
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.seed.to_string()];
        rec.extend(METRICS_HEADER[2..].iter().map(|c| fmt(column(r, c))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_success_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "seed", "success_rate"])?;
    for r in rows {
        w.write_record([r.step.to_string(), r.seed.to_string(), fmt(r.success_rate)])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = Z_95 * sd / (n as f64).sqrt();
        Some(Self { n, mean, lo: mean - half, hi: mean + half })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    pub n_seeds: usize,
    /// One entry per [`AGGREGATE_COLUMNS`] name.
    pub columns: Vec<Option<Summary>>,
}

impl AggregateRow {
    pub fn get(&self, name: &str) -> Option<Summary> {
        AGGREGATE_COLUMNS.iter().position(|c| *c == name).and_then(|i| self.columns[i])
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.get(name).map(|s| s.mean)
    }
}

/// Aggregates per-seed runs evaluated at the same steps.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Result<Vec<AggregateRow>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::usage("seed runs have different evaluation points"));
    }
    let mut out = Vec::with_capacity(first.len());
    for (i, row) in first.iter().enumerate() {
        if runs.iter().any(|r| r[i].step != row.step) {
            return Err(Error::usage("seed runs have different evaluation points"));
        }
        let columns = AGGREGATE_COLUMNS
            .iter()
            .map(|c| {
                let vals: Vec<f64> = runs.iter().filter_map(|r| column(&r[i], c)).collect();
                Summary::of(&vals)
            })
            .collect();
        out.push(AggregateRow { step: row.step, n_seeds: runs.len(), columns });
    }
    Ok(out)
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["step".to_string(), "n_seeds".to_string()];
    for c in AGGREGATE_COLUMNS {
        h.extend([format!("{c}_mean"), format!("{c}_lo"), format!("{c}_hi")]);
    }
    h
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(aggregate_header())?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.n_seeds.to_string()];
        for s in &r.columns {
            rec.extend([fmt(s.map(|s| s.mean)), fmt(s.map(|s| s.lo)), fmt(s.map(|s| s.hi))]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Scale below which returns count as zero in [`hacking`], so ratios between
/// returns near zero do not trigger it.
pub const HACKING_FLOOR: f64 = 1.0;

/// First pair of evaluation points `i < j` at which the learned-reward return
/// at least doubled while the true return gained at most 10%, both relative
/// to `max(|value at i|, HACKING_FLOOR)`. Input is `(pseudo_return, true_return)`
/// per evaluation point in step order.
pub fn hacking(curve: &[(f64, f64)]) -> Option<(usize, usize)> {
    for (i, &(p0, t0)) in curve.iter().enumerate() {
        for (j, &(p1, t1)) in curve.iter().enumerate().skip(i + 1) {
            let pseudo_doubled = p1 - p0 >= p0.abs().max(HACKING_FLOOR);
            let true_stalled = t1 - t0 <= 0.1 * t0.abs().max(HACKING_FLOOR);
            if pseudo_doubled && true_stalled {
                return Some((i, j));
            }
        }
    }
    None
}

/// [`hacking`] on the seed-mean curve of an aggregate.
pub fn aggregate_hacking(rows: &[AggregateRow]) -> Option<(usize, usize)> {
    let curve: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| Some((r.mean("pseudo_return")?, r.mean("true_return")?))).collect();
    hacking(&curve).map(|(i, j)| (rows[i].step, rows[j].step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use purl_core::rewardlearn::DiscStats;

    fn row(step: usize, seed: u64, ret: f64) -> MetricsRow {
        MetricsRow {
            step,
            seed,
            true_return: Some(ret),
            pseudo_return: None,
            success_rate: Some(1.0),
            disc: DiscStats::default(),
            reward_mse_train: None,
            correction_active_rate: 0.25,
        }
    }

    #[test]
    fn confidence_interval_formula() {
        let vals = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = Summary::of(&vals).unwrap();
        let sd = (10.0f64 / 4.0).sqrt();
        assert!((s.mean - 3.0).abs() < 1e-15);
        assert!((s.hi - (3.0 + 1.96 * sd / 5f64.sqrt())).abs() < 1e-12);
        assert!((s.lo - (3.0 - 1.96 * sd / 5f64.sqrt())).abs() < 1e-12);
        assert_eq!(Summary::of(&[2.0]).unwrap().hi, 2.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn aggregate_skips_absent_columns() {
        let runs = vec![vec![row(10, 0, 1.0)], vec![row(10, 1, 3.0)]];
        let agg = aggregate(&runs).unwrap();
        assert_eq!(agg[0].mean("true_return"), Some(2.0));
        assert_eq!(agg[0].get("pseudo_return"), None);
        assert_eq!(agg[0].mean("correction_active_rate"), Some(0.25));
        let ragged = vec![vec![row(10, 0, 1.0)], vec![row(20, 1, 3.0)]];
        assert!(aggregate(&ragged).is_err());
    }

    #[test]
    fn hacking_predicate() {
        // pseudo 5 -> 30 while true return stays flat
        assert_eq!(hacking(&[(5.0, -0.4), (30.0, -0.4)]), Some((0, 1)));
        // true return rises with the pseudo return
        assert_eq!(hacking(&[(5.0, -0.4), (30.0, 0.9)]), None);
        // doubling of a near-zero pseudo return is below the floor
        assert_eq!(hacking(&[(0.1, 0.0), (0.5, 0.0)]), None);
        assert_eq!(hacking(&[(0.0, 0.0), (1.0, 0.1)]), Some((0, 1)));
        // later pair
        assert_eq!(hacking(&[(10.0, 1.0), (12.0, 1.0), (25.0, 1.05)]), Some((0, 2)));
        assert_eq!(hacking(&[(10.0, 1.0), (19.0, 1.0)]), None);
        assert_eq!(hacking(&[]), None);
    }

    #[test]
    fn metrics_file_header_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&[row(5, 3, -0.4)], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,seed,true_return,pseudo_return,pos_train_expert,pos_holdout_expert,pos_holdout_failure,pos_replay,sig_train_expert,sig_holdout_expert,sig_holdout_failure,sig_replay,reward_mse_train,correction_active_rate"
        );
        assert_eq!(lines.next().unwrap(), "5,3,-0.4,,,,,,,,,,,0.25");
    }
}
