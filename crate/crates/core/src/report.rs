//! Plot-ready CSV tables from the result store: one long-format row per
//! (run, split, metric) and seed-aggregated rows per grid point.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusName;
use crate::error::{Error, Result};
use crate::objective::ConstraintKind;
use crate::trainer::{ResultStore, RunRecord};

pub const METRICS: [&str; 5] = ["macro_f", "auprc", "recall", "specificity", "entropy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub corpus: CorpusName,
    pub constraint: ConstraintKind,
    pub layers: usize,
    pub lambda: f64,
    pub seed: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub corpus: CorpusName,
    pub constraint: ConstraintKind,
    pub layers: usize,
    pub lambda: f64,
    pub split: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Restricts a report; every set field must match at least one row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportFilter {
    pub corpus: Option<CorpusName>,
    pub constraint: Option<ConstraintKind>,
    pub layers: Option<usize>,
    pub split: Option<String>,
    /// Empty means every metric.
    pub metrics: Vec<String>,
}

fn record_rows(r: &RunRecord) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for (split, res) in &r.results {
        let m = &res.metrics;
        let values = [
            Some(m.macro_f),
            m.mean_auprc,
            m.mean_recall,
            m.mean_specificity,
            Some(res.mean_entropy),
        ];
        for (name, v) in METRICS.iter().zip(values) {
            if let Some(value) = v {
                rows.push(LongRow {
                    corpus: r.corpus,
                    constraint: r.constraint,
                    layers: r.layers,
                    lambda: r.lambda,
                    seed: r.seed,
                    split: split.clone(),
                    metric: name.to_string(),
                    value,
                });
            }
        }
    }
    rows
}

fn apply<T: Clone>(
    rows: Vec<LongRow>,
    axis: &str,
    wanted: Option<T>,
    get: impl Fn(&LongRow) -> T,
    eq: impl Fn(&T, &T) -> bool,
    show: impl Fn(&T) -> String,
) -> Result<Vec<LongRow>> {
    let Some(w) = wanted else { return Ok(rows) };
    let kept: Vec<LongRow> = rows.into_iter().filter(|r| eq(&get(r), &w)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyAxis(format!("{axis}={}", show(&w))));
    }
    Ok(kept)
}

/// Long-format rows of completed runs, sorted by grid coordinates.
pub fn long_rows(records: &[RunRecord], filter: &ReportFilter) -> Result<Vec<LongRow>> {
    let mut rows: Vec<LongRow> = records
        .iter()
        .filter(|r| r.is_completed())
        .flat_map(record_rows)
        .collect();
    rows = apply(
        rows,
        "corpus",
        filter.corpus,
        |r| r.corpus,
        |a, b| a == b,
        |c| c.to_string(),
    )?;
    rows = apply(
        rows,
        "constraint",
        filter.constraint,
        |r| r.constraint,
        |a, b| a == b,
        |c| c.as_str().into(),
    )?;
    rows = apply(
        rows,
        "layers",
        filter.layers,
        |r| r.layers,
        |a, b| a == b,
        |l| l.to_string(),
    )?;
    rows = apply(
        rows,
        "split",
        filter.split.clone(),
        |r| r.split.clone(),
        |a, b| a == b,
        |s| s.clone(),
    )?;
    if !filter.metrics.is_empty() {
        for m in &filter.metrics {
            if !rows.iter().any(|r| &r.metric == m) {
                return Err(Error::EmptyAxis(format!("metric={m}")));
            }
        }
        rows.retain(|r| filter.metrics.contains(&r.metric));
    }
    rows.sort_by(|a, b| {
        (a.corpus.to_string(), a.constraint.as_str(), a.layers)
            .cmp(&(b.corpus.to_string(), b.constraint.as_str(), b.layers))
            .then(a.lambda.total_cmp(&b.lambda))
            .then((a.seed, &a.split, &a.metric).cmp(&(b.seed, &b.split, &b.metric)))
    });
    Ok(rows)
}

type GroupKey = (String, &'static str, usize, u64, String, String);

/// Mean, min and max over seeds per grid point, split and metric. Rows keep
/// the order of their first appearance in `rows`.
pub fn aggregate(rows: &[LongRow]) -> Vec<AggregateRow> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, (AggregateRow, f64)> = BTreeMap::new();
    for r in rows {
        let key = (
            r.corpus.to_string(),
            r.constraint.as_str(),
            r.layers,
            r.lambda.to_bits(),
            r.split.clone(),
            r.metric.clone(),
        );
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (
                AggregateRow {
                    corpus: r.corpus,
                    constraint: r.constraint,
                    layers: r.layers,
                    lambda: r.lambda,
                    split: r.split.clone(),
                    metric: r.metric.clone(),
                    n: 0,
                    mean: 0.0,
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                },
                0.0,
            )
        });
        entry.0.n += 1;
        entry.1 += r.value;
        entry.0.min = entry.0.min.min(r.value);
        entry.0.max = entry.0.max.max(r.value);
    }
    order
        .into_iter()
        .map(|k| {
            let (mut row, sum) = groups.remove(&k).expect("group exists");
            row.mean = sum / row.n as f64;
            row
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_long_csv(path: &Path) -> Result<Vec<LongRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub long: PathBuf,
    pub aggregated: PathBuf,
    pub n_runs: usize,
    pub n_rows: usize,
}

/// Writes `long.csv` and `aggregated.csv` into `out_dir`.
pub fn report(store: &ResultStore, filter: &ReportFilter, out_dir: &Path) -> Result<ReportFiles> {
    let records = store.records()?;
    let completed = records.iter().filter(|r| r.is_completed()).count();
    if completed == 0 {
        return Err(Error::EmptyStore(store.root().to_path_buf()));
    }
    let rows = long_rows(&records, filter)?;
    let agg = aggregate(&rows);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let long = out_dir.join("long.csv");
    let aggregated = out_dir.join("aggregated.csv");
    write_csv(&long, &rows)?;
    write_csv(&aggregated, &agg)?;
    Ok(ReportFiles {
        long,
        aggregated,
        n_runs: completed,
        n_rows: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, lambda: f64, value: f64) -> LongRow {
        LongRow {
            corpus: CorpusName::Synthetic,
            constraint: ConstraintKind::Entropy,
            layers: 1,
            lambda,
            seed,
            split: "val".into(),
            metric: "auprc".into(),
            value,
        }
    }

    #[test]
    fn aggregates_seeds() {
        let rows = vec![
            row(0, 0.1, 0.4),
            row(1, 0.1, 0.5),
            row(2, 0.1, 0.6),
            row(0, 0.0, 0.9),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].n, 3);
        assert!((agg[0].mean - 0.5).abs() < 1e-12);
        assert_eq!((agg[0].min, agg[0].max), (0.4, 0.6));
        assert_eq!(agg[1].mean, 0.9);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row(0, 0.1, 0.1 + 0.2),
            row(1, 0.02, 1.0 / 3.0),
            row(2, 0.0, 5e-324),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("long.csv");
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_long_csv(&p).unwrap(), rows);
    }

    #[test]
    fn empty_store_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::new(dir.path().join("nothing"));
        let err = report(&store, &ReportFilter::default(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::EmptyStore(_)));
    }
}
