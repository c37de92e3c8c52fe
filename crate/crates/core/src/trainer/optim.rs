use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Learning rate at 1-based `step`. Cosine decay starts at the full rate on
/// step 1 and reaches zero after `total_steps` steps; no warmup.
pub fn lr_at(cfg: &TrainConfig, step: u64, total_steps: u64) -> f64 {
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Cosine => {
            let progress = (step.saturating_sub(1) as f64 / total_steps.max(1) as f64).min(1.0);
            cfg.lr * 0.5 * (1.0 + (PI * progress).cos())
        }
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let n = global_norm(grads);
    if max_norm > 0.0 && n > max_norm {
        let s = max_norm / n;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// One AdamW update with decoupled weight decay and bias correction.
///
/// Clipping is applied to `grads` in place first. `step` is 1-based.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &mut [f64],
    moments: &mut Moments,
    cfg: &TrainConfig,
    step: u64,
    total_steps: u64,
) -> Result<StepStats, TrainError> {
    assert_eq!(params.len(), grads.len(), "parameter and gradient shapes differ");
    assert_eq!(params.len(), moments.m.len(), "parameter and moment shapes differ");
    assert!(step >= 1, "optimizer steps are 1-based");
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { step });
    }
    let grad_norm = clip_global_norm(grads, cfg.grad_clip);
    let lr = lr_at(cfg, step, total_steps);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    let decay = 1.0 - lr * cfg.weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * moments.m[i] + (1.0 - b1) * g;
        let v = b2 * moments.v[i] + (1.0 - b2) * g * g;
        moments.m[i] = m;
        moments.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(StepStats {
        lr,
        grad_norm,
        clipped: cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(lr: f64) -> TrainConfig {
        TrainConfig {
            lr,
            weight_decay: 0.0,
            grad_clip: 0.0,
            lr_schedule: LrSchedule::Constant,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let cfg = bare(0.1);
        let mut p = [1.0];
        let mut g = [1.0];
        let mut m = Moments::zeros(1);
        optimizer_step(&mut p, &mut g, &mut m, &cfg, 1, 10).unwrap();
        // m̂ = v̂ = 1, so the update is lr / (1 + eps)
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let cfg = bare(0.1);
        let mut p = [0.3, -2.0, 5.0];
        let mut g = [0.0; 3];
        let mut m = Moments::zeros(3);
        for step in 1..=5 {
            optimizer_step(&mut p, &mut g, &mut m, &cfg, step, 5).unwrap();
        }
        assert_eq!(p, [0.3, -2.0, 5.0]);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let cfg = TrainConfig {
            weight_decay: 0.5,
            ..bare(0.1)
        };
        let mut p = [2.0];
        let mut g = [0.0];
        let mut m = Moments::zeros(1);
        optimizer_step(&mut p, &mut g, &mut m, &cfg, 1, 1).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn clipping_to_unit_norm() {
        let mut g = vec![6.0, 8.0];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 10.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-9);
        let mut small = vec![0.3, 0.4];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let cfg = bare(0.1);
        let mut p = [1.0];
        let mut g = [f64::NAN];
        let mut m = Moments::zeros(1);
        let err = optimizer_step(&mut p, &mut g, &mut m, &cfg, 7, 10).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient at step 7");
        assert_eq!(p, [1.0]);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig {
            lr: 1.0,
            lr_schedule: LrSchedule::Cosine,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(&cfg, 1, 100), 1.0);
        assert!((lr_at(&cfg, 51, 100) - 0.5).abs() < 1e-12);
        assert!(lr_at(&cfg, 101, 100).abs() < 1e-12);
        assert!(lr_at(&cfg, 100, 100) > 0.0);
    }
}
