use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::signed_ngram_features;
use crate::par;
use crate::tokenize::tokenize_unicode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderShape {
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub scale: f64,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            hash_dim: 2048,
            embed_dim: 128,
            scale: 20.0,
        }
    }
}

/// Hashed-feature linear encoder: signed unigram and bigram counts times a
/// `hash_dim × embed_dim` projection, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub scale: f64,
    /// Row-major, one row per hash bucket.
    pub projection: Vec<f64>,
}

/// Forward-pass state kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub features: Vec<(usize, f64)>,
    /// Norm of the projected vector before normalization; zero for the
    /// fallback vector.
    pub raw_norm: f64,
    pub vector: Vec<f64>,
}

impl ToyEncoder {
    /// Uniform init in `±sqrt(3 / embed_dim)`, so every row has expected
    /// squared norm one.
    pub fn init(shape: EncoderShape, rng: &mut ChaCha8Rng) -> Self {
        assert!(shape.hash_dim > 0 && shape.embed_dim > 0, "encoder dimensions must be positive");
        let a = (3.0 / shape.embed_dim as f64).sqrt();
        let projection = (0..shape.hash_dim * shape.embed_dim)
            .map(|_| rng.gen_range(-a..a))
            .collect();
        Self {
            hash_dim: shape.hash_dim,
            embed_dim: shape.embed_dim,
            scale: shape.scale,
            projection,
        }
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            hash_dim: self.hash_dim,
            embed_dim: self.embed_dim,
            scale: self.scale,
        }
    }

    pub fn features(&self, text: &str) -> Vec<(usize, f64)> {
        signed_ngram_features(&tokenize_unicode(text), self.hash_dim)
    }

    pub fn row(&self, bucket: usize) -> &[f64] {
        &self.projection[bucket * self.embed_dim..(bucket + 1) * self.embed_dim]
    }

    pub fn forward(&self, text: &str) -> Encoded {
        let features = self.features(text);
        let mut z = vec![0.0; self.embed_dim];
        for &(b, c) in &features {
            for (zi, p) in z.iter_mut().zip(self.row(b)) {
                *zi += c * p;
            }
        }
        let raw_norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if raw_norm == 0.0 || !raw_norm.is_finite() {
            return Encoded {
                features,
                raw_norm: 0.0,
                vector: fallback(self.embed_dim),
            };
        }
        z.iter_mut().for_each(|x| *x /= raw_norm);
        Encoded {
            features,
            raw_norm,
            vector: z,
        }
    }

    /// Unit vector for `text`. Text without features maps to the first basis
    /// vector.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.forward(text).vector
    }

    pub fn encode_batch(&self, texts: &[String]) -> Vec<Vec<f64>> {
        par::map_collect(texts, |t| self.encode(t))
    }

    pub fn forward_batch(&self, texts: &[&str]) -> Vec<Encoded> {
        par::map_collect(texts, |t| self.forward(t))
    }

    /// Accumulates `∂L/∂projection` into `grad` given `∂L/∂vector` for one
    /// encoded text. The fallback vector carries no gradient.
    pub fn accumulate_grad(&self, enc: &Encoded, d_vector: &[f64], grad: &mut [f64]) {
        if enc.raw_norm == 0.0 {
            return;
        }
        let e = &enc.vector;
        let along: f64 = e.iter().zip(d_vector).map(|(a, b)| a * b).sum();
        let dz: Vec<f64> = e
            .iter()
            .zip(d_vector)
            .map(|(ei, gi)| (gi - ei * along) / enc.raw_norm)
            .collect();
        for &(b, c) in &enc.features {
            let row = &mut grad[b * self.embed_dim..(b + 1) * self.embed_dim];
            for (r, d) in row.iter_mut().zip(&dz) {
                *r += c * d;
            }
        }
    }
}

fn fallback(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small() -> ToyEncoder {
        let shape = EncoderShape {
            hash_dim: 64,
            embed_dim: 8,
            scale: 20.0,
        };
        ToyEncoder::init(shape, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn encode_is_deterministic_and_unit() {
        let enc = small();
        let a = enc.encode("the cat sat on the mat");
        assert_eq!(a, enc.encode("the cat sat on the mat"));
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_text_is_first_basis_vector() {
        let enc = small();
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        assert_eq!(enc.encode(""), e1);
        assert_eq!(enc.encode("  ,;  "), e1);
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        let mut enc = small();
        let text = "alpha beta gamma alpha";
        let target: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let f = |enc: &ToyEncoder| -> f64 {
            enc.encode(text).iter().zip(&target).map(|(a, b)| a * b).sum()
        };
        let fwd = enc.forward(text);
        let mut grad = vec![0.0; enc.projection.len()];
        enc.accumulate_grad(&fwd, &target, &mut grad);
        let h = 1e-6;
        for &(b, _) in &fwd.features {
            for k in 0..enc.embed_dim {
                let i = b * enc.embed_dim + k;
                let orig = enc.projection[i];
                enc.projection[i] = orig + h;
                let up = f(&enc);
                enc.projection[i] = orig - h;
                let down = f(&enc);
                enc.projection[i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "bucket {b} dim {k}: {fd} vs {}", grad[i]);
            }
        }
    }
}
