//! Complexity/diversity analysis over `(cw, delta, condition)` points.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{fit_cw_threshold, pearson_r_p, positive_rate_buckets, BucketCount, StatsError, ThresholdFit};

#[derive(Debug, Error)]
pub enum PointsError {
    #[error("cannot read {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path} has no data rows")]
    Empty { path: String },
    #[error("condition {condition:?}: {source}")]
    Condition {
        condition: String,
        #[source]
        source: StatsError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdpPoint {
    pub cw: f64,
    pub delta: f64,
    pub condition: String,
}

/// Reads a CSV with header `cw,delta,condition` (extra columns ignored).
pub fn load_points(path: &Path) -> Result<Vec<CdpPoint>, PointsError> {
    let csv_err = |source| PointsError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(csv_err)?);
    }
    if out.is_empty() {
        return Err(PointsError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCorrelation {
    pub condition: String,
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdpReport {
    pub alpha: f64,
    pub bucket_boundaries: [f64; 2],
    /// In order of first appearance in the input.
    pub conditions: Vec<ConditionCorrelation>,
    pub n_significant: usize,
    pub threshold: ThresholdFit,
    pub buckets: Vec<BucketCount>,
}

/// Per-condition Pearson correlations, the pooled threshold fit and the
/// positive-rate buckets.
pub fn analyze(points: &[CdpPoint], alpha: f64, boundaries: [f64; 2]) -> Result<CdpReport, PointsError> {
    let mut names: Vec<&str> = Vec::new();
    for p in points {
        if !names.contains(&p.condition.as_str()) {
            names.push(&p.condition);
        }
    }
    let mut conditions = Vec::with_capacity(names.len());
    for name in names {
        let (x, y): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.condition == name)
            .map(|p| (p.cw, p.delta))
            .unzip();
        let c = pearson_r_p(&x, &y).map_err(|source| PointsError::Condition {
            condition: name.to_string(),
            source,
        })?;
        conditions.push(ConditionCorrelation {
            condition: name.to_string(),
            r: c.r,
            p: c.p,
            n: c.n,
        });
    }
    let pooled: Vec<(f64, f64)> = points.iter().map(|p| (p.cw, p.delta)).collect();
    Ok(CdpReport {
        alpha,
        bucket_boundaries: boundaries,
        n_significant: conditions.iter().filter(|c| c.p < alpha).count(),
        conditions,
        threshold: fit_cw_threshold(&pooled)?,
        buckets: positive_rate_buckets(&pooled, boundaries)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_signed_values_and_extra_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cw,delta,condition,note").unwrap();
        writeln!(f, "11.64,+9.9,a,x").unwrap();
        writeln!(f, "8.64,-0.0,a,y").unwrap();
        let pts = load_points(f.path()).unwrap();
        assert_eq!(pts[0].delta, 9.9);
        assert!(pts[1].delta == 0.0 && pts[1].delta.is_sign_negative());
    }

    #[test]
    fn header_only_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cw,delta,condition").unwrap();
        assert!(matches!(load_points(f.path()), Err(PointsError::Empty { .. })));
    }

    #[test]
    fn bad_number_names_the_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cw,delta,condition\nabc,1,a").unwrap();
        let msg = load_points(f.path()).unwrap_err().to_string();
        assert!(msg.contains("cannot read"), "{msg}");
    }

    #[test]
    fn degenerate_condition_is_named() {
        let pts: Vec<CdpPoint> = [(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]
            .iter()
            .map(|&(cw, delta)| CdpPoint {
                cw,
                delta,
                condition: "flat".into(),
            })
            .collect();
        let err = analyze(&pts, 0.05, [7.0, 10.0]).unwrap_err().to_string();
        assert_eq!(err, "condition \"flat\": zero variance in y");
    }
}
