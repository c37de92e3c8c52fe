//! JSON and CSV report writers.
//!
//! JSON reports wrap the result in an envelope carrying the run's
//! `config_hash`. CSV tables keep a bare header row for plotting tools, so
//! their provenance goes to a `<file>.provenance.json` written beside them.
//! Field order follows struct declaration order; output is byte-stable.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::eval_stats::{BucketCount, CdpReport, ConditionCorrelation, EvalReport};
use crate::qd_metrics::QdReport;
use crate::trainer::TrainLog;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// A result that can be flattened into one CSV table.
pub trait Tabular {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub kind: &'a str,
    pub config_hash: &'a str,
    pub result: &'a T,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, config_hash: &str, result: &T) -> Result<(), ReportError> {
    let env = Envelope {
        kind,
        config_hash,
        result,
    };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(|e| ReportError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn provenance_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

pub fn write_csv<T: Tabular>(path: &Path, kind: &str, config_hash: &str, result: &T) -> Result<(), ReportError> {
    let encode = |e: csv::Error| ReportError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(result.csv_header()).map_err(encode)?;
    for row in result.csv_rows() {
        w.write_record(&row).map_err(encode)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes)?;
    write_json(&provenance_path(path), kind, config_hash, &serde_json::json!({ "table": path.file_name().map(|n| n.to_string_lossy()) }))
}

pub fn write_report<T: Serialize + Tabular>(
    path: &Path,
    format: ReportFormat,
    kind: &str,
    config_hash: &str,
    result: &T,
) -> Result<(), ReportError> {
    match format {
        ReportFormat::Json => write_json(path, kind, config_hash, result),
        ReportFormat::Csv => write_csv(path, kind, config_hash, result),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl Tabular for QdReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "dist_sim",
            "len_sim",
            "ce",
            "self_bleu",
            "n_documents",
            "n_queries",
            "n_pairs",
            "ce_threshold",
            "embed_model",
            "ce_model",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            num(self.dist_sim),
            num(self.len_sim),
            num(self.ce),
            opt(self.self_bleu),
            self.n_documents.to_string(),
            self.n_queries.to_string(),
            self.n_pairs.to_string(),
            num(self.ce_threshold),
            self.backend.embed_model.clone(),
            self.backend.ce_model.clone(),
        ]]
    }
}

impl Tabular for Vec<ConditionCorrelation> {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["condition", "r", "p", "n"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|c| vec![c.condition.clone(), num(c.r), num(c.p), c.n.to_string()])
            .collect()
    }
}

impl Tabular for CdpReport {
    fn csv_header(&self) -> Vec<&'static str> {
        self.conditions.csv_header()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.conditions.csv_rows()
    }
}

impl Tabular for Vec<BucketCount> {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["bucket", "positive", "total"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|b| vec![b.label.clone(), b.positive.to_string(), b.total.to_string()])
            .collect()
    }
}

impl Tabular for EvalReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["query_id", "ndcg"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.per_query.iter().map(|q| vec![q.query_id.clone(), num(q.ndcg)]).collect()
    }
}

impl Tabular for TrainLog {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["step", "epoch", "loss", "lr", "grad_norm"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.steps
            .iter()
            .map(|s| {
                vec![
                    s.step.to_string(),
                    s.epoch.to_string(),
                    num(s.loss),
                    num(s.lr),
                    num(s.grad_norm),
                ]
            })
            .collect()
    }
}
