//! Finite-difference audit of the full model's loss gradient.

use serde::Serialize;

use super::{batch_gradients, LossWeights};
use crate::case_store::{compute_norm_stats, CaseTrajectory};
use crate::error::Result;
use crate::surrogate::{CaseStatic, ModelConfig, SurrogateParams};

/// Relative errors below this denominator are measured absolutely.
const ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradAudit {
    pub parameter_count: usize,
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub step: f64,
}

/// Compares every analytic parameter gradient of the training loss on
/// `case` with a central difference of step `h`.
pub fn gradient_audit(
    case: &CaseTrajectory,
    config: &ModelConfig,
    weights: &LossWeights,
    seed: u64,
    h: f64,
) -> Result<GradAudit> {
    let stats = compute_norm_stats(&[case])?;
    let st = CaseStatic::from_case(case, config.lambda_max)?;
    let mut params = SurrogateParams::init(config, seed)?;
    // nonzero biases, so bias paths are exercised too
    for (name, m) in params.names.iter().zip(params.tensors.iter_mut()) {
        if name.ends_with("bias") || name.ends_with("b1") || name.ends_with("b2") {
            m.data.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * (i as f64 * 0.7).sin());
        }
    }
    let loss = |p: &SurrogateParams| batch_gradients(p, &[&st], &[case], &stats, weights);
    let (_, grads) = loss(&params)?;
    let mut worst = (0.0, 0, 0);
    for k in 0..params.tensors.len() {
        for i in 0..params.tensors[k].len() {
            let orig = params.tensors[k].data[i];
            params.tensors[k].data[i] = orig + h;
            let plus = loss(&params)?.0;
            params.tensors[k].data[i] = orig - h;
            let minus = loss(&params)?.0;
            params.tensors[k].data[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = grads[k].data[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(ERROR_FLOOR);
            if rel > worst.0 {
                worst = (rel, k, i);
            }
        }
    }
    Ok(GradAudit {
        parameter_count: params.count(),
        max_relative_error: worst.0,
        worst_tensor: params.names[worst.1].clone(),
        worst_index: worst.2,
        step: h,
    })
}
