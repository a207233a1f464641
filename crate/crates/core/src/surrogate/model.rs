//! Recurrent cells, decoder heads and the per-frame step on a tape.

use std::sync::Arc;

use super::batch::{BatchInput, BatchTargets};
use super::params::{CellIdx, Layout, MlpIdx};
use super::{ModelKind, SurrogateParams};
use crate::error::Result;
use crate::tape::{Matrix, SparseOperator, Tape, Var};

/// Source of the history features after frame 0.
#[derive(Clone, Copy)]
pub enum Feedback<'a> {
    /// The model's own predictions.
    Free,
    /// Ground truth (diagnostic only).
    Teacher(&'a BatchTargets),
}

/// Normalized predictions of one frame for a whole batch.
#[derive(Debug, Clone, Copy)]
pub struct FrameOutputs {
    /// `N × 3`.
    pub u: Var,
    /// `E × 1`.
    pub s: Var,
    /// `E × 1`.
    pub peeq: Var,
    /// `B × 1`.
    pub rf2: Var,
    /// Baseline only: nodal stress proxy before averaging onto elements.
    pub s_node: Option<Var>,
    /// Baseline only: nodal plastic-strain proxy.
    pub peeq_node: Option<Var>,
}

/// Handles produced by [`SurrogateParams::forward`].
pub struct Forward {
    pub params: Vec<Var>,
    pub frames: Vec<FrameOutputs>,
}

/// Carried recurrent state; `None` is the zero state.
#[derive(Clone, Copy, Default)]
pub(crate) struct Hidden {
    pub node: Option<Var>,
    pub elem: Option<Var>,
}

/// History inputs for one frame, all normalized.
#[derive(Clone, Copy, Default)]
pub(crate) struct History {
    pub u1: Option<Var>,
    pub u2: Option<Var>,
    pub s1: Option<Var>,
}

pub(crate) fn mlp(tape: &mut Tape, p: &[Var], idx: MlpIdx, x: Var) -> Result<Var> {
    let a = tape.matmul(x, p[idx.w1])?;
    let a = tape.add_row(a, p[idx.b1])?;
    let a = tape.tanh(a);
    let y = tape.matmul(a, p[idx.w2])?;
    tape.add_row(y, p[idx.b2])
}

/// One graph-convolutional GRU step.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell(
    tape: &mut Tape,
    p: &[Var],
    idx: CellIdx,
    lap: &Arc<SparseOperator>,
    order: usize,
    hidden: usize,
    x: Var,
    h: Option<Var>,
) -> Result<Var> {
    let d = hidden;
    let tx = tape.chebyshev(lap, x, order)?;
    let gx = tape.matmul(tx, p[idx.input])?;
    let gx = tape.add_row(gx, p[idx.bias])?;
    let gx_cand = tape.slice_columns(gx, 2 * d, 3 * d)?;
    match h {
        None => {
            // zero state: the reset gate has nothing to act on
            let z_in = tape.slice_columns(gx, 0, d)?;
            let z = tape.sigmoid(z_in);
            let cand = tape.tanh(gx_cand);
            let keep = tape.affine(z, -1.0, 1.0);
            tape.mul(keep, cand)
        }
        Some(h) => {
            let gx_zr = tape.slice_columns(gx, 0, 2 * d)?;
            let th = tape.chebyshev(lap, h, order)?;
            let gh = tape.matmul(th, p[idx.hidden_gates])?;
            let zr_in = tape.add(gx_zr, gh)?;
            let zr = tape.sigmoid(zr_in);
            let z = tape.slice_columns(zr, 0, d)?;
            let r = tape.slice_columns(zr, d, 2 * d)?;
            let rh = tape.mul(r, h)?;
            let trh = tape.chebyshev(lap, rh, order)?;
            let gc = tape.matmul(trh, p[idx.hidden_cand])?;
            let cand_in = tape.add(gx_cand, gc)?;
            let cand = tape.tanh(cand_in);
            let diff = tape.sub(h, cand)?;
            let gated = tape.mul(z, diff)?;
            tape.add(cand, gated)
        }
    }
}

impl SurrogateParams {
    /// Runs the cells and heads for frame `t`. Frame 0 reports the known
    /// undeformed state but still advances the recurrent state.
    pub(crate) fn step(
        &self,
        tape: &mut Tape,
        layout: &Layout,
        p: &[Var],
        batch: &BatchInput,
        t: usize,
        history: History,
        state: Hidden,
    ) -> Result<(FrameOutputs, Hidden)> {
        let cfg = &self.config;
        let (k, d) = (cfg.cheb_order, cfg.hidden);
        let x = batch.features(tape, t, cfg.stress_feedback, history.u1, history.u2, history.s1)?;
        let h_n = cell(tape, p, layout.node_cell, &batch.node_lap, k, d, x, state.node)?;
        let u = mlp(tape, p, layout.u_head, h_n)?;
        let (mut out, h_e) = match (cfg.kind, layout.elem_cell) {
            (ModelKind::Dual, Some(ec)) => {
                let z = tape.sparse_matmul(&batch.node_to_elem, h_n)?;
                let h_e = cell(tape, p, ec, &batch.elem_lap, k, d, z, state.elem)?;
                let s = mlp(tape, p, layout.s_head, h_e)?;
                let raw_p = mlp(tape, p, layout.p_head, h_e)?;
                let sp = tape.softplus(raw_p);
                let peeq = tape.affine(sp, 1.0, -batch.shift.p);
                let pooled = tape.segment_mean(h_e, batch.elem_segments.clone())?;
                let rf2 = mlp(tape, p, layout.rf2_head, pooled)?;
                let out = FrameOutputs {
                    u,
                    s,
                    peeq,
                    rf2,
                    s_node: None,
                    peeq_node: None,
                };
                (out, Some(h_e))
            }
            _ => {
                let s_node = mlp(tape, p, layout.s_head, h_n)?;
                let raw_p = mlp(tape, p, layout.p_head, h_n)?;
                let sp = tape.softplus(raw_p);
                let peeq_node = tape.affine(sp, 1.0, -batch.shift.p);
                let s = tape.sparse_matmul(&batch.node_to_elem, s_node)?;
                let peeq = tape.sparse_matmul(&batch.node_to_elem, peeq_node)?;
                let pooled = tape.segment_mean(h_n, batch.node_segments.clone())?;
                let rf2 = mlp(tape, p, layout.rf2_head, pooled)?;
                let out = FrameOutputs {
                    u,
                    s,
                    peeq,
                    rf2,
                    s_node: Some(s_node),
                    peeq_node: Some(peeq_node),
                };
                (out, None)
            }
        };
        if t == 0 {
            let [u0, s0, p0, r0] = batch.initial_outputs();
            out.u = tape.constant(u0);
            out.s = tape.constant(s0);
            out.peeq = tape.constant(p0);
            out.rf2 = tape.constant(r0);
        }
        Ok((out, Hidden { node: Some(h_n), elem: h_e }))
    }

    /// Records the whole rollout of a batch on one tape so the loss can be
    /// differentiated through every frame.
    pub fn forward(&self, tape: &mut Tape, batch: &BatchInput, feedback: Feedback<'_>) -> Result<Forward> {
        let layout = self.layout();
        let params = self.bind(tape);
        let mut frames: Vec<FrameOutputs> = Vec::with_capacity(batch.n_frames);
        let mut state = Hidden::default();
        let teacher: Option<Vec<(Var, Var)>> = match feedback {
            Feedback::Free => None,
            Feedback::Teacher(targets) => Some(
                (0..batch.n_frames)
                    .map(|t| (tape.constant(targets.u[t].clone()), tape.constant(targets.s[t].clone())))
                    .collect(),
            ),
        };
        for t in 0..batch.n_frames {
            let pick = |back: usize| -> Option<(Var, Var)> {
                let f = t.checked_sub(back)?;
                Some(match &teacher {
                    Some(tv) => tv[f],
                    None => (frames[f].u, frames[f].s),
                })
            };
            let history = History {
                u1: pick(1).map(|v| v.0),
                u2: pick(2).map(|v| v.0),
                s1: pick(1).map(|v| v.1),
            };
            let (out, next) = self.step(tape, &layout, &params, batch, t, history, state)?;
            frames.push(out);
            state = next;
        }
        Ok(Forward { params, frames })
    }
}

/// Copies a value into a fresh tape as a constant.
pub(crate) fn carry(tape: &mut Tape, m: &Matrix) -> Var {
    tape.constant(m.clone())
}
