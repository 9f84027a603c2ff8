//! Experiment reports: a versioned JSON document, a flat CSV table, and the
//! raw replication records as JSON lines.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentKind, RawConfig};
use crate::error::Result;
use crate::split_vector::MuEstimate;

pub const SCHEMA_VERSION: u32 = 1;

pub const TOLERANCE_NOTE: &str =
    "gate tolerances are engineering choices: the limit theorems state no convergence rates";

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.csv";
pub const RECORDS_FILE: &str = "records.jsonl";

/// A mean (or other estimate) with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub sample_size: usize,
}

impl Estimate {
    pub fn of_sample(values: impl IntoIterator<Item = f64>) -> Estimate {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return Estimate { value: f64::NAN, std_error: f64::NAN, sample_size: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate { value: mean, std_error: (var / n as f64).sqrt(), sample_size: n }
    }
}

/// One statistic at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub n_or_h: u64,
    pub stat: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    pub p_value: Option<f64>,
    pub sample_size: usize,
}

impl StatRow {
    pub fn estimate(n_or_h: u64, stat: impl Into<String>, est: Estimate, target: Option<f64>) -> Self {
        StatRow {
            n_or_h,
            stat: stat.into(),
            value: est.value,
            stderr: Some(est.std_error),
            target,
            p_value: None,
            sample_size: est.sample_size,
        }
    }

    pub fn test(n_or_h: u64, stat: impl Into<String>, statistic: f64, p_value: f64, sample_size: usize) -> Self {
        StatRow {
            n_or_h,
            stat: stat.into(),
            value: statistic,
            stderr: None,
            target: None,
            p_value: Some(p_value),
            sample_size,
        }
    }

    /// `|value - target|`, when a target exists.
    pub fn error(&self) -> Option<f64> {
        self.target.map(|t| (self.value - t).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phase {
    pub n_or_h: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub config: RawConfig,
    pub mu: Option<MuEstimate>,
    pub lattice_span: Option<f64>,
    /// Vertices per ball at the largest grid point.
    pub alpha: Option<Estimate>,
    /// Exponential rate used by the spacing tests.
    pub rate: Option<Estimate>,
    /// Lattice phase recorded per grid point.
    pub phases: Vec<Phase>,
    pub rows: Vec<StatRow>,
    pub gates: Vec<Gate>,
    pub tolerance_note: String,
    pub raw_records: Option<String>,
}

impl ExperimentReport {
    pub fn row(&self, n_or_h: u64, stat: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.n_or_h == n_or_h && r.stat == stat)
    }

    /// Rows of one statistic across the grid, in grid order.
    pub fn series(&self, stat: &str) -> Vec<&StatRow> {
        self.rows.iter().filter(|r| r.stat == stat).collect()
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Columns `experiment,n_or_h,stat,value,stderr,target,p_value,seed`.
    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            experiment: &'a str,
            n_or_h: u64,
            stat: &'a str,
            value: f64,
            stderr: Option<f64>,
            target: Option<f64>,
            p_value: Option<f64>,
            seed: u64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(Line {
                experiment: self.experiment.name(),
                n_or_h: r.n_or_h,
                stat: &r.stat,
                value: r.value,
                stderr: r.stderr,
                target: r.target,
                p_value: r.p_value,
                seed: self.master_seed,
            })
            .expect("row serializes");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub report: PathBuf,
    pub table: PathBuf,
    pub records: PathBuf,
}

/// Writes `report.json`, `report.csv` and `records.jsonl` into `dir`.
pub fn write_outputs(dir: &Path, report: &mut ExperimentReport, records_jsonl: &str) -> Result<OutputPaths> {
    fs::create_dir_all(dir)?;
    let paths = OutputPaths {
        report: dir.join(REPORT_FILE),
        table: dir.join(TABLE_FILE),
        records: dir.join(RECORDS_FILE),
    };
    report.raw_records = Some(RECORDS_FILE.to_string());
    fs::write(&paths.records, records_jsonl)?;
    fs::write(&paths.table, report.to_csv())?;
    fs::write(&paths.report, report.to_json())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates() {
        let e = Estimate::of_sample([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let one = Estimate::of_sample([7.0]);
        assert_eq!((one.value, one.std_error), (7.0, 0.0));
        assert!(Estimate::of_sample(Vec::new()).value.is_nan());
    }

    #[test]
    fn csv_columns() {
        let report = ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: ExperimentKind::ProcessN,
            master_seed: 5,
            config: RawConfig::default(),
            mu: None,
            lattice_span: None,
            alpha: None,
            rate: None,
            phases: vec![],
            rows: vec![
                StatRow::estimate(100, "increment_mean@0:1", Estimate::of_sample([1.0, 3.0]), Some(1.0)),
                StatRow::test(100, "increment_chi2@0:1", 2.5, 0.3, 2),
            ],
            gates: vec![],
            tolerance_note: TOLERANCE_NOTE.into(),
            raw_records: None,
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("experiment,n_or_h,stat,value,stderr,target,p_value,seed"));
        assert_eq!(lines.next(), Some("process_n,100,increment_mean@0:1,2.0,1.0,1.0,,5"));
        assert_eq!(lines.next(), Some("process_n,100,increment_chi2@0:1,2.5,,,0.3,5"));
        assert!(report.to_json().contains("\"schema_version\": 1"));
    }
}
