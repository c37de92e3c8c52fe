use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{queries} queries but {docs} documents")]
    LengthMismatch { queries: usize, docs: usize },
    #[error("{weights} weights for a batch of {batch}")]
    WeightCount { weights: usize, batch: usize },
    #[error("in-batch softmax needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, got: usize, expected: usize },
    #[error("vector {0} has zero norm")]
    ZeroVector(usize),
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNce {
    /// `(1/|B|) Σ w_i · loss_i`.
    pub loss: f64,
    /// Unweighted `loss_i`.
    pub per_sample: Vec<f64>,
    pub grad_queries: Vec<Vec<f64>>,
    pub grad_docs: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Weighted InfoNCE over in-batch negatives.
///
/// `loss_i = −log softmax_j(scale · cos(q_i, d_j))` at `j = i`. Inputs need
/// not be unit length; the returned gradients are exact for the cosine form,
/// so for unit inputs they are orthogonal to the input vectors.
pub fn weighted_info_nce(
    queries: &[Vec<f64>],
    docs: &[Vec<f64>],
    weights: &[f64],
    scale: f64,
) -> Result<InfoNce, LossError> {
    let b = queries.len();
    if docs.len() != b {
        return Err(LossError::LengthMismatch {
            queries: b,
            docs: docs.len(),
        });
    }
    if weights.len() != b {
        return Err(LossError::WeightCount {
            weights: weights.len(),
            batch: b,
        });
    }
    if b < 2 {
        return Err(LossError::BatchTooSmall(b));
    }
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(LossError::BadWeight(w));
    }
    let dim = queries[0].len();
    for (i, v) in queries.iter().chain(docs).enumerate() {
        if v.len() != dim {
            return Err(LossError::Dimension {
                index: i,
                got: v.len(),
                expected: dim,
            });
        }
    }

    let unit = |vs: &[Vec<f64>], offset: usize| -> Result<(Vec<Vec<f64>>, Vec<f64>), LossError> {
        let mut out = Vec::with_capacity(vs.len());
        let mut norms = Vec::with_capacity(vs.len());
        for (i, v) in vs.iter().enumerate() {
            let n = norm(v);
            if n == 0.0 {
                return Err(LossError::ZeroVector(offset + i));
            }
            out.push(v.iter().map(|x| x / n).collect());
            norms.push(n);
        }
        Ok((out, norms))
    };
    let (qu, qn) = unit(queries, 0)?;
    let (du, dn) = unit(docs, b)?;

    let bf = b as f64;
    let mut per_sample = Vec::with_capacity(b);
    let mut loss = 0.0;
    // ∂L/∂s_ij where s_ij = scale · cos(q_i, d_j)
    let mut ds = vec![vec![0.0; b]; b];
    for i in 0..b {
        let s: Vec<f64> = du.iter().map(|d| scale * dot(&qu[i], d)).collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let li = if m <= s[i] {
            // the positive is the largest logit: ln(1 + Σ_{j≠i} e^{s_ij − s_ii})
            let rest: f64 = (0..b).filter(|&j| j != i).map(|j| (s[j] - s[i]).exp()).sum();
            rest.ln_1p()
        } else {
            m + z.ln() - s[i]
        };
        per_sample.push(li);
        loss += weights[i] * li / bf;
        for j in 0..b {
            let p = exps[j] / z;
            let delta = if i == j { 1.0 } else { 0.0 };
            ds[i][j] = weights[i] / bf * (p - delta);
        }
    }

    // chain through s_ij = scale · û_i · v̂_j, then through normalization
    let mut gq_unit = vec![vec![0.0; dim]; b];
    let mut gd_unit = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let g = ds[i][j] * scale;
            if g == 0.0 {
                continue;
            }
            for k in 0..dim {
                gq_unit[i][k] += g * du[j][k];
                gd_unit[j][k] += g * qu[i][k];
            }
        }
    }
    let through_norm = |g: &[f64], u: &[f64], n: f64| -> Vec<f64> {
        let along = dot(g, u);
        g.iter().zip(u).map(|(gi, ui)| (gi - ui * along) / n).collect()
    };
    let grad_queries = (0..b).map(|i| through_norm(&gq_unit[i], &qu[i], qn[i])).collect();
    let grad_docs = (0..b).map(|j| through_norm(&gd_unit[j], &du[j], dn[j])).collect();

    Ok(InfoNce {
        loss,
        per_sample,
        grad_queries,
        grad_docs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    #[test]
    fn uniform_similarity_gives_log_batch_size() {
        let q = vec![basis(8, 0); 4];
        let d = vec![basis(8, 1); 4];
        let out = weighted_info_nce(&q, &d, &[1.0; 4], 20.0).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-6);
        assert!((out.loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn loss_is_linear_in_each_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rv = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let q: Vec<_> = (0..3).map(|_| rv(&mut rng)).collect();
        let d: Vec<_> = (0..3).map(|_| rv(&mut rng)).collect();
        let at = |w0: f64| weighted_info_nce(&q, &d, &[w0, 1.0, 1.0], 20.0).unwrap().loss;
        let diff = at(2.0) - at(0.0) - 2.0 * (at(1.0) - at(0.0));
        assert!(diff.abs() < 1e-12);
    }

    #[test]
    fn confident_batch_is_stable() {
        let q: Vec<_> = (0..4).map(|k| basis(8, k)).collect();
        let out = weighted_info_nce(&q, &q, &[1.0; 4], 20.0).unwrap();
        assert!(out.loss > 0.0 && out.loss < 1e-7);
        assert!(out.per_sample.iter().all(|l| l.is_finite() && *l > 0.0));
    }

    #[test]
    fn shape_errors() {
        let v = vec![basis(4, 0); 2];
        assert!(matches!(
            weighted_info_nce(&v, &v[..1], &[1.0, 1.0], 20.0),
            Err(LossError::LengthMismatch { .. })
        ));
        assert!(matches!(
            weighted_info_nce(&v[..1], &v[..1], &[1.0], 20.0),
            Err(LossError::BatchTooSmall(1))
        ));
        assert!(matches!(
            weighted_info_nce(&v, &v, &[1.0, -1.0], 20.0),
            Err(LossError::BadWeight(_))
        ));
        let z = vec![vec![0.0; 4], basis(4, 1)];
        assert_eq!(weighted_info_nce(&z, &v, &[1.0; 2], 20.0), Err(LossError::ZeroVector(0)));
    }
}
