//! Metric collection and emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub queries: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = if k > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

impl MetricsReport {
    /// Builds a report, aggregating rows per `(method, n)` in row order.
    pub fn from_rows(config: ExperimentConfig, rows: Vec<MetricsRow>) -> Self {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &rows {
            let key = (r.method.clone(), r.n);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(method, n)| {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == method && r.n == n)
                    .map(|r| r.accuracy)
                    .collect();
                let (mean, std) = mean_std(&values);
                Aggregate {
                    method,
                    n,
                    mean,
                    std,
                }
            })
            .collect();
        MetricsReport {
            config,
            rows,
            aggregates,
        }
    }

    pub fn aggregate(&self, method: &str, n: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.n == n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n,seed,accuracy,queries,seconds\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method, r.n, r.seed, r.accuracy, r.queries, r.seconds
            )
            .unwrap();
        }
        out
    }
}

/// Writes `metrics.json` and `metrics.csv` into `dir`; returns the paths.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join("metrics.json");
    std::fs::write(&json_path, report.to_json()?)?;
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    Ok(vec![json_path, csv_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, n: usize, seed: u64, accuracy: f64) -> MetricsRow {
        MetricsRow {
            method: method.into(),
            n,
            seed,
            accuracy,
            queries: 100,
            seconds: 0.0,
        }
    }

    #[test]
    fn empty_method_list_gives_zero_rows() {
        let report = MetricsReport::from_rows(ExperimentConfig::default(), vec![]);
        assert!(report.rows.is_empty());
        assert!(report.aggregates.is_empty());
        let parsed = MetricsReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn json_round_trip_reproduces_report() {
        let rows = vec![
            row("ours", 1, 0, 0.8),
            row("ours", 1, 1, 0.9),
            row("prototypical", 1, 0, 0.6),
        ];
        let report = MetricsReport::from_rows(ExperimentConfig::default(), rows);
        let parsed = MetricsReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(parsed, report);
    }

    /// Re-aggregating the CSV rows reproduces the stored aggregates.
    #[test]
    fn csv_reaggregation_matches_aggregates() {
        let rows = vec![
            row("ours", 1, 0, 0.81),
            row("ours", 1, 1, 0.87),
            row("ours", 1, 2, 0.84),
            row("hallucination", 1, 0, 0.7),
            row("hallucination", 1, 1, 0.72),
        ];
        let report = MetricsReport::from_rows(ExperimentConfig::default(), rows);
        let csv = report.to_csv();
        for agg in &report.aggregates {
            let values: Vec<f64> = csv
                .lines()
                .skip(1)
                .map(|l| {
                    let parts: Vec<&str> = l.split(',').collect();
                    (
                        parts[0].to_string(),
                        parts[1].parse::<usize>().unwrap(),
                        parts[3].parse::<f64>().unwrap(),
                    )
                })
                .filter(|(m, n, _)| *m == agg.method && *n == agg.n)
                .map(|(_, _, a)| a)
                .collect();
            let (mean, std) = mean_std(&values);
            assert!((mean - agg.mean).abs() < 1e-12);
            assert!((std - agg.std).abs() < 1e-12);
        }
    }

    #[test]
    fn emit_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = MetricsReport::from_rows(
            ExperimentConfig::default(),
            vec![row("ours", 1, 0, 0.5)],
        );
        let paths = emit_report(&report, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        for p in &paths {
            assert!(p.exists());
        }
        let parsed =
            MetricsReport::from_json(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
        assert_eq!(parsed, report);
    }
}
