//! Complexity-based sample weights.
//!
//! Every scheme produces batch-normalized weights: the raw per-sample scores
//! of a mini-batch are rescaled so that they sum to the batch size (mean one).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("degenerate batch: zero total CW")]
    ZeroTotalCw,
    #[error("degenerate batch: raw weights sum to zero")]
    ZeroSum,
    #[error("raw weight {0} is negative or not finite")]
    BadRawWeight(f64),
    #[error("kappa must be positive, got {0}")]
    BadKappa(f64),
    #[error("reasoning-index denominator loss must be positive, got {0}")]
    NonPositiveLoss(f64),
    #[error("scheme {0} needs reasoning-index values for every sample")]
    MissingReasoningIndex(WeightScheme),
    #[error("batch has {cws} CW values but {ris} reasoning-index values")]
    LengthMismatch { cws: usize, ris: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    Cw,
    Ri,
    RiTimesCw,
}

impl WeightScheme {
    pub fn needs_reasoning_index(self) -> bool {
        matches!(self, WeightScheme::Ri | WeightScheme::RiTimesCw)
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Cw => "cw",
            WeightScheme::Ri => "ri",
            WeightScheme::RiTimesCw => "ri_times_cw",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "cw" => Ok(Self::Cw),
            "ri" => Ok(Self::Ri),
            "ri_times_cw" | "ri-times-cw" => Ok(Self::RiTimesCw),
            other => Err(format!("unknown weight scheme {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub kappa_cw: f64,
    pub kappa_ri: f64,
    pub scheme: WeightScheme,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            kappa_cw: 100.0,
            kappa_ri: 5.0,
            scheme: WeightScheme::Uniform,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), WeightError> {
        for k in [self.kappa_cw, self.kappa_ri] {
            if !(k > 0.0) {
                return Err(WeightError::BadKappa(k));
            }
        }
        Ok(())
    }
}

fn truncate(cw: u32, kappa: f64) -> f64 {
    (cw as f64).min(kappa)
}

/// CW weights: `min(cw_i, κ) · |B| / Σ_j min(cw_j, κ)`.
pub fn cw_weights(batch_cws: &[u32], kappa: f64) -> Result<Vec<f64>, WeightError> {
    if !(kappa > 0.0) {
        return Err(WeightError::BadKappa(kappa));
    }
    if batch_cws.is_empty() {
        return Err(WeightError::EmptyBatch);
    }
    let truncated: Vec<f64> = batch_cws.iter().map(|&c| truncate(c, kappa)).collect();
    let total: f64 = truncated.iter().sum();
    if total == 0.0 {
        return Err(WeightError::ZeroTotalCw);
    }
    let n = batch_cws.len() as f64;
    Ok(truncated.iter().map(|t| t * n / total).collect())
}

/// Reasoning index: `min(loss_q / loss_q', κ)`.
pub fn reasoning_index(loss_q: f64, loss_q_prime: f64, kappa: f64) -> Result<f64, WeightError> {
    if !(loss_q_prime > 0.0) {
        return Err(WeightError::NonPositiveLoss(loss_q_prime));
    }
    if !(kappa > 0.0) {
        return Err(WeightError::BadKappa(kappa));
    }
    Ok((loss_q / loss_q_prime).min(kappa))
}

/// Rescales nonnegative raw weights to mean one.
pub fn compose_and_normalize(raw: &[f64]) -> Result<Vec<f64>, WeightError> {
    if raw.is_empty() {
        return Err(WeightError::EmptyBatch);
    }
    if let Some(&bad) = raw.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(WeightError::BadRawWeight(bad));
    }
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Err(WeightError::ZeroSum);
    }
    let n = raw.len() as f64;
    Ok(raw.iter().map(|w| w * n / total).collect())
}

/// Weights for one mini-batch under `cfg.scheme`.
///
/// `ris` holds reasoning-index values (already truncated by `κ_ri`) and is
/// only consulted by the RI schemes.
pub fn batch_weights(cfg: &WeightConfig, cws: &[u32], ris: Option<&[f64]>) -> Result<Vec<f64>, WeightError> {
    if cws.is_empty() {
        return Err(WeightError::EmptyBatch);
    }
    let need_ri = || -> Result<&[f64], WeightError> {
        let r = ris.ok_or(WeightError::MissingReasoningIndex(cfg.scheme))?;
        if r.len() != cws.len() {
            return Err(WeightError::LengthMismatch {
                cws: cws.len(),
                ris: r.len(),
            });
        }
        Ok(r)
    };
    match cfg.scheme {
        WeightScheme::Uniform => Ok(vec![1.0; cws.len()]),
        WeightScheme::Cw => cw_weights(cws, cfg.kappa_cw),
        WeightScheme::Ri => compose_and_normalize(need_ri()?),
        WeightScheme::RiTimesCw => {
            let ri = need_ri()?;
            let raw: Vec<f64> = ri
                .iter()
                .zip(cws)
                .map(|(r, &c)| r * truncate(c, cfg.kappa_cw))
                .collect();
            compose_and_normalize(&raw)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cw_examples() {
        assert_eq!(cw_weights(&[4, 4, 4, 4], 100.0).unwrap(), vec![1.0; 4]);
        assert_eq!(cw_weights(&[2, 6], 100.0).unwrap(), vec![0.5, 1.5]);
        let w = cw_weights(&[150, 50], 100.0).unwrap();
        assert_abs_diff_eq!(w[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cw_degenerate_batches() {
        assert_eq!(cw_weights(&[0, 0], 100.0), Err(WeightError::ZeroTotalCw));
        assert_eq!(
            cw_weights(&[0, 0], 100.0).unwrap_err().to_string(),
            "degenerate batch: zero total CW"
        );
        assert_eq!(cw_weights(&[], 100.0), Err(WeightError::EmptyBatch));
        assert_eq!(cw_weights(&[1], 0.0), Err(WeightError::BadKappa(0.0)));
    }

    #[test]
    fn reasoning_index_branches() {
        assert_eq!(reasoning_index(1.0, 1.0, 5.0).unwrap(), 1.0);
        assert_eq!(reasoning_index(10.0, 1.0, 5.0).unwrap(), 5.0);
        assert_eq!(reasoning_index(2.5, 1.0, 5.0).unwrap(), 2.5);
        assert!(reasoning_index(1.0, 0.0, 5.0).is_err());
        assert!(reasoning_index(1.0, -1.0, 5.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(compose_and_normalize(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(compose_and_normalize(&[1.0, 3.0]).unwrap(), vec![0.5, 1.5]);
        assert_eq!(compose_and_normalize(&[0.0, 0.0]), Err(WeightError::ZeroSum));
        assert!(compose_and_normalize(&[-1.0, 2.0]).is_err());
        assert!(compose_and_normalize(&[f64::NAN]).is_err());
    }

    #[test]
    fn ri_times_cw_composition() {
        let cfg = WeightConfig {
            scheme: WeightScheme::RiTimesCw,
            ..Default::default()
        };
        let w = batch_weights(&cfg, &[10, 5], Some(&[1.0, 2.0])).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        assert!(matches!(
            batch_weights(&cfg, &[10, 5], None),
            Err(WeightError::MissingReasoningIndex(_))
        ));
    }

    #[test]
    fn uniform_ignores_cw() {
        let cfg = WeightConfig::default();
        assert_eq!(batch_weights(&cfg, &[0, 9, 3], None).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn scheme_parsing() {
        for s in ["uniform", "cw", "ri", "ri_times_cw"] {
            assert_eq!(s.parse::<WeightScheme>().unwrap().to_string(), s);
        }
        assert!("bogus".parse::<WeightScheme>().is_err());
    }

    proptest! {
        #[test]
        fn mean_one_and_scale_invariance(
            cws in prop::collection::vec(1u32..60, 1..32),
            c in 1u32..5,
        ) {
            let w = cw_weights(&cws, 1e9).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - cws.len() as f64).abs() < 1e-9);
            let scaled: Vec<u32> = cws.iter().map(|x| x * c).collect();
            let ws = cw_weights(&scaled, 1e9).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn truncation_idempotence_and_monotonicity(
            cws in prop::collection::vec(0u32..300, 1..32),
            kappa in 1u32..200,
        ) {
            prop_assume!(cws.iter().any(|&c| c > 0));
            let k = kappa as f64;
            let w = cw_weights(&cws, k).unwrap();
            let truncated: Vec<u32> = cws.iter().map(|&c| c.min(kappa)).collect();
            prop_assert_eq!(&w, &cw_weights(&truncated, f64::INFINITY).unwrap());
            for i in 0..cws.len() {
                for j in 0..cws.len() {
                    if cws[i] <= cws[j] {
                        prop_assert!(w[i] <= w[j]);
                    }
                }
            }
        }
    }
}
