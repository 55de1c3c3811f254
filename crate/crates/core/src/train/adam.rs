//! ADAM with a step-decayed learning rate. The decay interval is a config
//! knob: desk-scale runs decay every few thousand steps with the same shape
//! as a long production schedule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    /// Curve granularity: a point every this many steps (plus first and last).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_initial: 3e-4,
            lr_decay: 0.1,
            lr_decay_every: 2_000,
            batch_size: 10,
            total_steps: 5_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_initial", self.lr_initial),
            ("lr_decay", self.lr_decay),
            ("eps_hat", self.eps_hat),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && 0.0 < b && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "lr_decay_every, batch_size and log_every must be nonzero".into(),
            ));
        }
        Ok(())
    }

    /// lr(t) = lr_initial · lr_decay^⌊t / lr_decay_every⌋ for the 1-based
    /// training step t.
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.lr_initial * self.lr_decay.powi((t / self.lr_decay_every) as i32)
    }
}

/// What one optimizer call did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Applied { lr: f64 },
    /// Gradients contained NaN/inf; parameters and moments untouched.
    SkippedNonFinite,
}

/// First and second moment estimates, one pair per parameter tensor, in the
/// same flat (group, layer, weight-then-bias) order the model reports its
/// gradients in.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Number of updates actually applied (drives bias correction).
    pub applied: usize,
}

fn tensor_shapes(params: &ModelParams) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    for (_, mlp) in params.groups() {
        for (w, b) in &mlp.layers {
            shapes.push(w.dim());
            shapes.push(b.dim());
        }
    }
    shapes
}

/// The per-tensor update, exposed for direct hand-arithmetic testing.
#[allow(clippy::too_many_arguments)]
pub fn adam_update_tensor(
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps_hat: f64,
    t: usize,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    azip_update(p, g, m, v, lr, beta1, beta2, eps_hat, bc1, bc2);
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps_hat: f64,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps_hat);
    });
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes = tensor_shapes(params);
        AdamState {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            applied: 0,
        }
    }

    /// Applies one update using lr(`sched_step`). Bias correction uses the
    /// count of applied updates, so a skipped step does not dilute the
    /// moments it never touched.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &[Array2<f64>],
        cfg: &TrainConfig,
        sched_step: usize,
    ) -> Result<StepOutcome> {
        if grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient tensors for {} parameter tensors",
                grads.len(),
                self.m.len()
            )));
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Ok(StepOutcome::SkippedNonFinite);
        }
        let lr = cfg.learning_rate(sched_step);
        self.applied += 1;
        let t = self.applied;
        let mut idx = 0;
        for (_, mlp) in params.groups_mut() {
            for (w, b) in &mut mlp.layers {
                for p in [w, b] {
                    let g = &grads[idx];
                    if g.dim() != p.dim() {
                        return Err(Error::ShapeMismatch(format!(
                            "gradient {idx} is {:?}, parameter is {:?}",
                            g.dim(),
                            p.dim()
                        )));
                    }
                    adam_update_tensor(
                        p, g, &mut self.m[idx], &mut self.v[idx], lr, cfg.beta1, cfg.beta2,
                        cfg.eps_hat, t,
                    );
                    idx += 1;
                }
            }
        }
        Ok(StepOutcome::Applied { lr })
    }
}
