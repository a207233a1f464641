//! Frame-by-frame inference without gradient bookkeeping.

use serde::Serialize;

use super::batch::{BatchInput, BatchTargets, CaseStatic};
use super::model::{carry, Feedback, Hidden, History};
use super::SurrogateParams;
use crate::case_store::{invert_norm, CaseTrajectory, NormStats};
use crate::error::{Error, Result};
use crate::tape::{Matrix, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    Free,
    Teacher,
}

/// A predicted trajectory of one case, normalized and in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub n_nodes: usize,
    pub n_elems: usize,
    pub n_frames: usize,
    /// `T × N × 3`, normalized.
    pub u: Vec<f64>,
    /// `T × E`, normalized.
    pub s: Vec<f64>,
    pub peeq: Vec<f64>,
    /// `T`, normalized.
    pub rf2: Vec<f64>,
    pub u_phys: Vec<f64>,
    pub s_phys: Vec<f64>,
    pub peeq_phys: Vec<f64>,
    pub rf2_phys: Vec<f64>,
}

impl RolloutResult {
    fn finish(mut self, stats: &NormStats) -> Result<Self> {
        self.u_phys = invert_norm(&self.u, 1, &stats.u)?;
        self.s_phys = invert_norm(&self.s, 1, &stats.s)?;
        self.peeq_phys = invert_norm(&self.peeq, 1, &stats.peeq)?;
        self.rf2_phys = invert_norm(&self.rf2, 1, &stats.rf2)?;
        Ok(self)
    }

    pub fn u_frame(&self, t: usize) -> &[f64] {
        &self.u_phys[t * self.n_nodes * 3..(t + 1) * self.n_nodes * 3]
    }

    pub fn s_frame(&self, t: usize) -> &[f64] {
        &self.s_phys[t * self.n_elems..(t + 1) * self.n_elems]
    }

    pub fn peeq_frame(&self, t: usize) -> &[f64] {
        &self.peeq_phys[t * self.n_elems..(t + 1) * self.n_elems]
    }

    /// The predicted fields in physical units on the mesh, frames and load
    /// set of `case`.
    pub fn to_trajectory(&self, case: &CaseTrajectory) -> Result<CaseTrajectory> {
        if self.n_nodes != case.n_nodes() || self.n_elems != case.n_elems() || self.n_frames != case.n_frames() {
            return Err(Error::shape("to_trajectory", "prediction does not match the case"));
        }
        Ok(CaseTrajectory {
            u: self.u_phys.clone(),
            s: self.s_phys.clone(),
            peeq: self.peeq_phys.clone(),
            rf2: self.rf2_phys.clone(),
            ..case.clone()
        })
    }
}

fn check_finite(m: &Matrix, t: usize, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("{what} at rollout frame {t}"),
        })
    }
}

/// Rolls out every case of a batch; per-case results in batch order.
pub fn rollout_batch(params: &SurrogateParams, batch: &BatchInput, feedback: Feedback<'_>) -> Result<Vec<RolloutResult>> {
    let layout = params.layout();
    let t_count = batch.n_frames;
    let mut h_node: Option<Matrix> = None;
    let mut h_elem: Option<Matrix> = None;
    let mut u_hist: Vec<Matrix> = Vec::with_capacity(t_count);
    let mut s_hist: Vec<Matrix> = Vec::with_capacity(t_count);
    let mut p_hist: Vec<Matrix> = Vec::with_capacity(t_count);
    let mut r_hist: Vec<Matrix> = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut tape = Tape::new();
        let p: Vec<_> = params.tensors.iter().map(|m| carry(&mut tape, m)).collect();
        let state = Hidden {
            node: h_node.as_ref().map(|m| carry(&mut tape, m)),
            elem: h_elem.as_ref().map(|m| carry(&mut tape, m)),
        };
        let (us, ss): (&[Matrix], &[Matrix]) = match feedback {
            Feedback::Free => (&u_hist, &s_hist),
            Feedback::Teacher(tg) => (&tg.u[..t], &tg.s[..t]),
        };
        let mut back = |v: &[Matrix], k: usize| t.checked_sub(k).map(|f| carry(&mut tape, &v[f]));
        let history = History {
            u1: back(us, 1),
            u2: back(us, 2),
            s1: back(ss, 1),
        };
        let (out, next) = params.step(&mut tape, &layout, &p, batch, t, history, state)?;
        for (v, what) in [(out.u, "displacement"), (out.s, "stress"), (out.peeq, "plastic strain"), (out.rf2, "reaction force")] {
            check_finite(tape.value(v), t, what)?;
        }
        let hn = tape.value(next.node.expect("node state")).clone();
        check_finite(&hn, t, "node hidden state")?;
        h_node = Some(hn);
        if let Some(e) = next.elem {
            let he = tape.value(e).clone();
            check_finite(&he, t, "element hidden state")?;
            h_elem = Some(he);
        }
        u_hist.push(tape.value(out.u).clone());
        s_hist.push(tape.value(out.s).clone());
        p_hist.push(tape.value(out.peeq).clone());
        r_hist.push(tape.value(out.rf2).clone());
    }

    let g = &batch.graph;
    (0..batch.n_cases())
        .map(|c| {
            let (n0, nn) = (g.node_offsets[c], g.node_count(c));
            let (e0, ne) = (g.elem_offsets[c], g.elem_count(c));
            let mut r = RolloutResult {
                n_nodes: nn,
                n_elems: ne,
                n_frames: t_count,
                u: Vec::with_capacity(t_count * nn * 3),
                s: Vec::with_capacity(t_count * ne),
                peeq: Vec::with_capacity(t_count * ne),
                rf2: Vec::with_capacity(t_count),
                u_phys: Vec::new(),
                s_phys: Vec::new(),
                peeq_phys: Vec::new(),
                rf2_phys: Vec::new(),
            };
            for t in 0..t_count {
                r.u.extend_from_slice(&u_hist[t].data[n0 * 3..(n0 + nn) * 3]);
                r.s.extend_from_slice(&s_hist[t].data[e0..e0 + ne]);
                r.peeq.extend_from_slice(&p_hist[t].data[e0..e0 + ne]);
                r.rf2.push(r_hist[t].data[c]);
            }
            r.finish(&batch.stats)
        })
        .collect()
}

/// Predicts a full trajectory from static case data. Teacher mode feeds
/// the ground truth in `truth` back instead of the predictions.
pub fn rollout(
    params: &SurrogateParams,
    case: &CaseStatic,
    stats: &NormStats,
    mode: RolloutMode,
    truth: Option<&CaseTrajectory>,
) -> Result<RolloutResult> {
    let batch = BatchInput::new(&[case], stats)?;
    let mut results = match (mode, truth) {
        (RolloutMode::Free, _) => rollout_batch(params, &batch, Feedback::Free)?,
        (RolloutMode::Teacher, Some(tr)) => {
            let targets = BatchTargets::new(&[tr], stats)?;
            rollout_batch(params, &batch, Feedback::Teacher(&targets))?
        }
        (RolloutMode::Teacher, None) => {
            return Err(Error::InvalidInput("teacher rollout needs ground truth".into()));
        }
    };
    Ok(results.remove(0))
}
