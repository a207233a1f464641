//! Adam, global-norm clipping and a plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Matrix;

pub const DEFAULT_LR: f64 = 3e-3;
pub const DEFAULT_CLIP: f64 = 0.5;

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> Result<f64> {
    let norm = grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            context: "gradient norm".into(),
        });
    }
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= k));
    }
    Ok(norm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam", format!("{} params, {} grads", params.len(), grads.len())));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.m[k].len() != p.len() {
                return Err(Error::shape("adam", format!("parameter {k} changed shape")));
            }
            for i in 0..p.len() {
                let gi = g.data[i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                p.data[i] -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("parameter {k} after optimizer step"),
                });
            }
        }
        Ok(())
    }
}

/// Halves the learning rate after more than `patience` evaluations without
/// relative improvement `threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    best: f64,
    bad: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            patience: 3,
            factor: 0.5,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad: 0,
        }
    }
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            ..Self::default()
        }
    }

    /// Records one validation loss; returns the (possibly reduced) rate.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad = 0;
            return lr;
        }
        self.bad += 1;
        if self.bad > self.patience {
            self.bad = 0;
            return lr * self.factor;
        }
        lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}
