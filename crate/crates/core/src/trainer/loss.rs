//! Multi-task objective and the displacement smoothness penalty.

use serde::{Deserialize, Serialize};

use crate::case_store::{apply_norm, CaseTrajectory, NormStats};
use crate::error::{Error, Result};
use crate::mesh_graph::Graph;
use crate::surrogate::{BatchInput, BatchTargets, Forward, RolloutResult};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub stress: f64,
    pub rf2: f64,
    pub peeq: f64,
    pub laplacian: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            stress: 1.0,
            rf2: 1.0,
            peeq: 1.0,
            laplacian: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.stress, self.rf2, self.peeq, self.laplacian];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!("loss weights must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// `Σ_i ‖u_i − mean_{j∈N(i)} u_j‖²` over rows of `width` components.
pub fn laplacian_reg(u: &[f64], width: usize, graph: &Graph) -> Result<f64> {
    if u.len() != graph.len() * width {
        return Err(Error::shape("laplacian_reg", format!("{} values for {} nodes", u.len(), graph.len())));
    }
    let mut total = 0.0;
    for i in 0..graph.len() {
        let nb = graph.neighbors(i);
        if nb.is_empty() {
            return Err(Error::IsolatedNode { node: i });
        }
        for c in 0..width {
            let mean = nb.iter().map(|&j| u[j * width + c]).sum::<f64>() / nb.len() as f64;
            let d = u[i * width + c] - mean;
            total += d * d;
        }
    }
    Ok(total)
}

fn weighted(tape: &mut Tape, acc: Option<Var>, term: Var, w: f64) -> Result<Option<Var>> {
    let scaled = if w == 1.0 { term } else { tape.affine(term, w, 0.0) };
    Ok(Some(match acc {
        Some(a) => tape.add(a, scaled)?,
        None => scaled,
    }))
}

/// Batch loss on the tape: the mean over cases of each case's loss, where a
/// case's loss averages every term over frames, points and components.
pub fn multitask_loss(
    tape: &mut Tape,
    fwd: &Forward,
    targets: &BatchTargets,
    batch: &BatchInput,
    w: &LossWeights,
) -> Result<Var> {
    w.validate()?;
    if fwd.frames.len() != targets.n_frames() {
        return Err(Error::shape(
            "multitask_loss",
            format!("{} predicted frames, {} target frames", fwd.frames.len(), targets.n_frames()),
        ));
    }
    let mut acc: Option<Var> = None;
    for (t, f) in fwd.frames.iter().enumerate() {
        let tu = tape.constant(targets.u[t].clone());
        let du = tape.sub(f.u, tu)?;
        let term = tape.weighted_sum_squares(du, batch.disp_weights.clone())?;
        acc = weighted(tape, acc, term, 1.0)?;
        if w.stress > 0.0 {
            let ts = tape.constant(targets.s[t].clone());
            let d = tape.sub(f.s, ts)?;
            let term = tape.weighted_sum_squares(d, batch.elem_weights.clone())?;
            acc = weighted(tape, acc, term, w.stress)?;
        }
        if w.peeq > 0.0 {
            let tp = tape.constant(targets.peeq[t].clone());
            let d = tape.sub(f.peeq, tp)?;
            let term = tape.weighted_sum_squares(d, batch.elem_weights.clone())?;
            acc = weighted(tape, acc, term, w.peeq)?;
        }
        if w.rf2 > 0.0 {
            let tr = tape.constant(targets.rf2[t].clone());
            let d = tape.sub(f.rf2, tr)?;
            let term = tape.weighted_sum_squares(d, batch.case_weights.clone())?;
            acc = weighted(tape, acc, term, w.rf2)?;
        }
        if w.laplacian > 0.0 {
            let smooth = tape.sparse_matmul(&batch.smoothing, f.u)?;
            let term = tape.weighted_sum_squares(smooth, batch.node_weights.clone())?;
            acc = weighted(tape, acc, term, w.laplacian)?;
        }
    }
    let total = acc.ok_or_else(|| Error::InvalidInput("no frames to score".into()))?;
    Ok(tape.affine(total, 1.0 / targets.n_frames() as f64, 0.0))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Loss of one predicted trajectory, evaluated on plain values.
pub fn rollout_loss(
    pred: &RolloutResult,
    case: &CaseTrajectory,
    stats: &NormStats,
    node_graph: &Graph,
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    if pred.n_frames != case.n_frames() || pred.n_nodes != case.n_nodes() || pred.n_elems != case.n_elems() {
        return Err(Error::shape("rollout_loss", "prediction does not match the case"));
    }
    let t = case.n_frames();
    let mut total = mse(&pred.u, &apply_norm(&case.u, 1, &stats.u)?);
    total += w.stress * mse(&pred.s, &apply_norm(&case.s, 1, &stats.s)?);
    total += w.peeq * mse(&pred.peeq, &apply_norm(&case.peeq, 1, &stats.peeq)?);
    total += w.rf2 * mse(&pred.rf2, &apply_norm(&case.rf2, 1, &stats.rf2)?);
    if w.laplacian > 0.0 {
        let n = case.n_nodes();
        let mut lap = 0.0;
        for f in 0..t {
            lap += laplacian_reg(&pred.u[f * n * 3..(f + 1) * n * 3], 3, node_graph)?;
        }
        total += w.laplacian * lap / (t * n) as f64;
    }
    Ok(total)
}
