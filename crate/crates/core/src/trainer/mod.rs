//! Desk-scale dense retriever training with weighted InfoNCE.

mod checkpoint;
mod encoder;
pub mod fixture;
mod loss;
mod optim;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, WeightedPair};
use crate::eval_stats::{ndcg_at_k, DocIndex, EvalError, QueryJudgments};
use crate::hashing::canonical_hash;
use crate::weighting::{batch_weights, reasoning_index, WeightConfig, WeightError};

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointHeader, RngState};
pub use encoder::{EncoderShape, Encoded, ToyEncoder};
pub use loss::{weighted_info_nce, InfoNce, LossError};
pub use optim::{clip_global_norm, global_norm, lr_at, optimizer_step, LrSchedule, Moments, StepStats};

/// ChaCha8 streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("need at least {need} training pairs, got {have}")]
    NotEnoughPairs { have: usize, need: usize },
    #[error("pair {index} refers to unknown doc {doc_id}")]
    UnknownDoc { index: usize, doc_id: String },
    #[error("scheme {scheme} needs a reasoning query for every pair; pair {index} has none")]
    MissingReasoningQuery { scheme: String, index: usize },
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("batch at step {step}: {source}")]
    Weight {
        step: u64,
        #[source]
        source: WeightError,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint does not match this run: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub seed: u64,
    pub weight_scheme: WeightConfig,
    pub lr_schedule: LrSchedule,
    pub encoder: EncoderShape,
    /// Fraction of pairs held out for validation NDCG.
    pub val_fraction: f64,
    pub eval_k: usize,
    /// Keep sibling queries of one document out of the same batch.
    pub exclusive_doc_batches: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip: 1.0,
            batch_size: 32,
            epochs: 5,
            seed: 0,
            weight_scheme: WeightConfig::default(),
            lr_schedule: LrSchedule::Cosine,
            encoder: EncoderShape::default(),
            val_fraction: 0.1,
            eval_k: 10,
            exclusive_doc_batches: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0) || !(self.grad_clip >= 0.0) {
            return bad("weight_decay and grad_clip must be nonnegative".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if self.eval_k == 0 {
            return bad("eval_k must be positive".into());
        }
        if self.encoder.hash_dim == 0 || self.encoder.embed_dim == 0 || !(self.encoder.scale > 0.0) {
            return bad("encoder dimensions and scale must be positive".into());
        }
        self.weight_scheme.validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn hash(&self) -> String {
        canonical_hash(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u32,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: u32,
    pub step: u64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    /// Validation NDCG; epoch 0 is the untrained encoder.
    pub evals: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub epoch: u32,
    pub ndcg: f64,
    pub projection: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation encoder (the final one when nothing is held out).
    pub encoder: ToyEncoder,
    pub best_epoch: u32,
    pub best_ndcg: Option<f64>,
    pub initial_ndcg: Option<f64>,
    pub log: TrainLog,
    pub checkpoint: Checkpoint,
}

struct Validation {
    queries: Vec<String>,
    judgments: Vec<QueryJudgments>,
}

/// Resumable training state over borrowed pairs and documents.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    config_hash: String,
    data_hash: String,
    pairs: &'a [WeightedPair],
    corpus: &'a Corpus,
    train_idx: Vec<usize>,
    validation: Validation,
    encoder: ToyEncoder,
    moments: Moments,
    grad: Vec<f64>,
    step: u64,
    epoch: u32,
    rng: ChaCha8Rng,
    total_steps: u64,
    log: TrainLog,
    best: Option<BestSnapshot>,
}

fn data_hash(pairs: &[WeightedPair], corpus: &Corpus) -> String {
    canonical_hash(&(pairs, corpus.docs())).expect("training data serializes")
}

fn batches_per_epoch(n: usize, batch: usize) -> u64 {
    (n / batch + usize::from(n % batch >= 2)) as u64
}

impl<'a> Trainer<'a> {
    pub fn new(pairs: &'a [WeightedPair], corpus: &'a Corpus, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        for (index, p) in pairs.iter().enumerate() {
            if !corpus.contains(&p.doc_id) {
                return Err(TrainError::UnknownDoc {
                    index,
                    doc_id: p.doc_id.clone(),
                });
            }
            if cfg.weight_scheme.scheme.needs_reasoning_index() && p.reasoning_query.is_none() {
                return Err(TrainError::MissingReasoningQuery {
                    scheme: cfg.weight_scheme.scheme.to_string(),
                    index,
                });
            }
        }
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        split_rng.set_stream(STREAM_SPLIT);
        order.shuffle(&mut split_rng);
        let n_val = (pairs.len() as f64 * cfg.val_fraction).floor() as usize;
        let (val, train) = order.split_at(n_val);
        if train.len() < cfg.batch_size {
            return Err(TrainError::NotEnoughPairs {
                have: train.len(),
                need: cfg.batch_size,
            });
        }
        let mut train_idx = train.to_vec();
        train_idx.sort_unstable();
        let mut val_idx = val.to_vec();
        val_idx.sort_unstable();
        let validation = Validation {
            queries: val_idx.iter().map(|&i| pairs[i].query.clone()).collect(),
            judgments: val_idx
                .iter()
                .map(|&i| QueryJudgments::from([(pairs[i].doc_id.clone(), 1)]))
                .collect(),
        };

        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        init_rng.set_stream(STREAM_INIT);
        let encoder = ToyEncoder::init(cfg.encoder, &mut init_rng);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_SHUFFLE);
        let n_params = encoder.projection.len();
        let total_steps = cfg.epochs as u64 * batches_per_epoch(train_idx.len(), cfg.batch_size);

        let mut t = Self {
            config_hash: cfg.hash(),
            data_hash: data_hash(pairs, corpus),
            cfg,
            pairs,
            corpus,
            train_idx,
            validation,
            encoder,
            moments: Moments::zeros(n_params),
            grad: vec![0.0; n_params],
            step: 0,
            epoch: 0,
            rng,
            total_steps,
            log: TrainLog::default(),
            best: None,
        };
        if let Some(ndcg) = t.validate()? {
            t.log.evals.push(EvalRecord { epoch: 0, step: 0, ndcg });
        }
        Ok(t)
    }

    /// Restores a run saved by [`Trainer::checkpoint`]. The config and the
    /// training data must be the ones the checkpoint was written with.
    pub fn resume(ckpt: &Checkpoint, pairs: &'a [WeightedPair], corpus: &'a Corpus) -> Result<Self, TrainError> {
        let h = &ckpt.header;
        let mut t = Self::new(pairs, corpus, h.config.clone())?;
        if t.config_hash != h.config_hash {
            return Err(TrainError::Mismatch("config hash differs".into()));
        }
        if t.data_hash != h.data_hash {
            return Err(TrainError::Mismatch("training pairs or documents differ".into()));
        }
        if ckpt.projection.len() != t.encoder.projection.len() {
            return Err(TrainError::Mismatch("encoder shape differs".into()));
        }
        t.encoder.projection = ckpt.projection.clone();
        t.moments = ckpt.moments.clone();
        t.step = h.step;
        t.epoch = h.epoch;
        t.rng = h.rng.restore()?;
        t.log = h.log.clone();
        t.best = match (&ckpt.best_projection, h.best_epoch, h.best_ndcg) {
            (Some(p), Some(epoch), Some(ndcg)) => Some(BestSnapshot {
                epoch,
                ndcg,
                projection: p.clone(),
            }),
            _ => None,
        };
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &ToyEncoder {
        &self.encoder
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn n_train(&self) -> usize {
        self.train_idx.len()
    }

    pub fn n_validation(&self) -> usize {
        self.validation.queries.len()
    }

    /// Mean validation NDCG@k of the current encoder; `None` when nothing is
    /// held out.
    pub fn validate(&self) -> Result<Option<f64>, TrainError> {
        if self.validation.queries.is_empty() {
            return Ok(None);
        }
        let index = DocIndex::build(&self.encoder, self.corpus.docs());
        let k = self.cfg.eval_k;
        let scores = crate::par::try_map_collect(&self.validation.queries, |q| {
            let qv = self.encoder.encode(q);
            let order = index.rank_vector(&qv);
            let top: Vec<&str> = order.iter().take(k).map(|&i| index.ids[i].as_str()).collect();
            Ok::<_, EvalError>(top)
        })?;
        let mut total = 0.0;
        for (top, j) in scores.iter().zip(&self.validation.judgments) {
            total += ndcg_at_k(top, j, k)?;
        }
        Ok(Some(total / scores.len() as f64))
    }

    fn plan_batches(&mut self) -> Vec<Vec<usize>> {
        let mut order = self.train_idx.clone();
        order.shuffle(&mut self.rng);
        plan_batches(&order, self.pairs, self.cfg.batch_size, self.cfg.exclusive_doc_batches)
    }

    fn train_step(&mut self, batch: &[usize]) -> Result<StepRecord, TrainError> {
        let pairs = self.pairs;
        let corpus = self.corpus;
        let q_texts: Vec<&str> = batch.iter().map(|&i| pairs[i].query.as_str()).collect();
        let d_texts: Vec<&str> = batch
            .iter()
            .map(|&i| corpus.get(&pairs[i].doc_id).expect("doc ids checked").text.as_str())
            .collect();
        let q_enc = self.encoder.forward_batch(&q_texts);
        let d_enc = self.encoder.forward_batch(&d_texts);
        let qv: Vec<Vec<f64>> = q_enc.iter().map(|e| e.vector.clone()).collect();
        let dv: Vec<Vec<f64>> = d_enc.iter().map(|e| e.vector.clone()).collect();
        let scale = self.encoder.scale;
        let step = self.step + 1;

        let wcfg = &self.cfg.weight_scheme;
        let ris = if wcfg.scheme.needs_reasoning_index() {
            let r_texts: Vec<String> = batch
                .iter()
                .map(|&i| pairs[i].reasoning_query.clone().expect("checked at construction"))
                .collect();
            let rv = self.encoder.encode_batch(&r_texts);
            let ones = vec![1.0; batch.len()];
            let lq = weighted_info_nce(&qv, &dv, &ones, scale)?.per_sample;
            let lr = weighted_info_nce(&rv, &dv, &ones, scale)?.per_sample;
            let ri = lq
                .iter()
                .zip(&lr)
                .map(|(a, b)| reasoning_index(*a, *b, wcfg.kappa_ri))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|source| TrainError::Weight { step, source })?;
            Some(ri)
        } else {
            None
        };
        let cws: Vec<u32> = batch.iter().map(|&i| pairs[i].raw_cw).collect();
        let weights =
            batch_weights(wcfg, &cws, ris.as_deref()).map_err(|source| TrainError::Weight { step, source })?;

        let out = weighted_info_nce(&qv, &dv, &weights, scale)?;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        for (enc, g) in q_enc.iter().zip(&out.grad_queries) {
            self.encoder.accumulate_grad(enc, g, &mut self.grad);
        }
        for (enc, g) in d_enc.iter().zip(&out.grad_docs) {
            self.encoder.accumulate_grad(enc, g, &mut self.grad);
        }
        let stats = optimizer_step(
            &mut self.encoder.projection,
            &mut self.grad,
            &mut self.moments,
            &self.cfg,
            step,
            self.total_steps,
        )?;
        self.step = step;
        Ok(StepRecord {
            step,
            epoch: self.epoch,
            loss: out.loss,
            lr: stats.lr,
            grad_norm: stats.grad_norm,
        })
    }

    /// Runs one epoch and, when a validation split exists, records its NDCG.
    pub fn run_epoch(&mut self) -> Result<Option<f64>, TrainError> {
        self.epoch += 1;
        for batch in self.plan_batches() {
            let rec = self.train_step(&batch)?;
            log::debug!("step {} loss {:.6} lr {:.3e}", rec.step, rec.loss, rec.lr);
            self.log.steps.push(rec);
        }
        let ndcg = self.validate()?;
        let improved = match (&self.best, ndcg) {
            (_, None) => true,
            (None, Some(_)) => true,
            (Some(b), Some(n)) => n > b.ndcg,
        };
        if let Some(n) = ndcg {
            self.log.evals.push(EvalRecord {
                epoch: self.epoch,
                step: self.step,
                ndcg: n,
            });
            log::info!("epoch {} validation ndcg@{} {:.4}", self.epoch, self.cfg.eval_k, n);
        }
        if improved {
            self.best = Some(BestSnapshot {
                epoch: self.epoch,
                ndcg: ndcg.unwrap_or(f64::NAN),
                projection: self.encoder.projection.clone(),
            });
        }
        Ok(ndcg)
    }

    /// Trains until the configured epoch count is reached.
    pub fn run(&mut self) -> Result<(), TrainError> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }

    pub fn finish(self) -> TrainOutcome {
        let checkpoint = self.checkpoint();
        let initial_ndcg = self.log.evals.iter().find(|e| e.epoch == 0).map(|e| e.ndcg);
        let has_val = !self.validation.queries.is_empty();
        let (encoder, best_epoch, best_ndcg) = match self.best {
            Some(b) => (
                ToyEncoder {
                    projection: b.projection,
                    ..self.encoder.clone()
                },
                b.epoch,
                has_val.then_some(b.ndcg),
            ),
            None => (self.encoder.clone(), self.epoch, None),
        };
        TrainOutcome {
            encoder,
            best_epoch,
            best_ndcg,
            initial_ndcg,
            log: self.log,
            checkpoint,
        }
    }
}

/// Splits `order` into batches of at most `batch_size`. With `exclusive`,
/// each batch is filled greedily in order with pairs whose document is not
/// already in it. Batches smaller than two are dropped.
pub fn plan_batches(order: &[usize], pairs: &[WeightedPair], batch_size: usize, exclusive: bool) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = if exclusive {
        let mut pending = order.to_vec();
        let mut out = Vec::new();
        while !pending.is_empty() {
            let mut batch = Vec::with_capacity(batch_size);
            let mut docs = HashSet::new();
            let mut rest = Vec::with_capacity(pending.len());
            for i in pending {
                if batch.len() < batch_size && docs.insert(pairs[i].doc_id.as_str()) {
                    batch.push(i);
                } else {
                    rest.push(i);
                }
            }
            out.push(batch);
            pending = rest;
        }
        out
    } else {
        order.chunks(batch_size).map(<[usize]>::to_vec).collect()
    };
    batches.retain(|b| b.len() >= 2);
    batches
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(pairs: &[WeightedPair], corpus: &Corpus, cfg: TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut t = Trainer::new(pairs, corpus, cfg)?;
    t.run()?;
    Ok(t.finish())
}
