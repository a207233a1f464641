//! Static per-batch inputs: normalized geometry, operators, frame features.

use std::sync::Arc;

use crate::case_store::{apply_norm, compute_alpha, CaseTrajectory, NormStats};
use crate::error::{Error, Result};
use crate::mesh_graph::{merge_batch, BatchedGraph, DualGraph, LambdaMax};
use crate::sparse::CsrMatrix;
use crate::tape::{Matrix, SparseOperator, Tape, Var};

/// What a rollout needs to know about a case: geometry, loading, schedule.
/// No response fields.
#[derive(Debug, Clone)]
pub struct CaseStatic {
    pub coords: Vec<[f64; 3]>,
    pub load_nodes: Vec<usize>,
    pub frame_times: Vec<f64>,
    pub graph: DualGraph,
}

impl CaseStatic {
    pub fn from_case(case: &CaseTrajectory, mode: LambdaMax) -> Result<Self> {
        Ok(Self {
            coords: case.coords.clone(),
            load_nodes: case.load_nodes.clone(),
            frame_times: case.frame_times.clone(),
            graph: DualGraph::build(&case.connectivity, case.n_nodes(), mode)?,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.graph.n_elems()
    }

    pub fn n_frames(&self) -> usize {
        self.frame_times.len()
    }
}

/// Column layout of the node feature matrix.
///
/// | columns | content |
/// |---|---|
/// | 0..3 | normalized coordinates |
/// | 3..6 | previous displacement, `u / std_u` |
/// | 6..9 | displacement increment of the last two frames, same scale |
/// | 9 | loading progress in [0, 1] |
/// | 10 | 1 on load-surface nodes, else 0 |
/// | 11 | optional: previous stress averaged to nodes, `s / std_s` |
///
/// Displacement and stress history enter scaled but not shifted, so the
/// undeformed state is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub stress_feedback: bool,
}

impl FeatureLayout {
    pub const COORDS: usize = 0;
    pub const DISPLACEMENT: usize = 3;
    pub const INCREMENT: usize = 6;
    pub const PROGRESS: usize = 9;
    pub const LOAD: usize = 10;
    pub const STRESS: usize = 11;

    pub fn new(stress_feedback: bool) -> Self {
        Self { stress_feedback }
    }

    pub fn width(&self) -> usize {
        if self.stress_feedback {
            12
        } else {
            11
        }
    }
}

/// One or more cases merged into a block-diagonal batch, with every
/// constant the forward pass needs.
pub struct BatchInput {
    pub graph: BatchedGraph,
    pub n_frames: usize,
    pub stats: NormStats,
    coords: Matrix,
    load: Matrix,
    progress: Vec<Matrix>,
    pub(crate) node_lap: Arc<SparseOperator>,
    pub(crate) elem_lap: Arc<SparseOperator>,
    pub(crate) node_to_elem: Arc<SparseOperator>,
    pub(crate) elem_to_node: Option<Arc<SparseOperator>>,
    /// `I - D^-1 A` on the node graph.
    pub(crate) smoothing: Arc<SparseOperator>,
    pub(crate) node_segments: Arc<Vec<usize>>,
    pub(crate) elem_segments: Arc<Vec<usize>>,
    /// `mean / std` per target: the normalized value of a physical zero is
    /// its negative.
    pub(crate) shift: Shifts,
    /// `1 / (B · N_c)` for each node row.
    pub(crate) node_weights: Arc<Vec<f64>>,
    /// `1 / (B · N_c · 3)` for each node row.
    pub(crate) disp_weights: Arc<Vec<f64>>,
    /// `1 / (B · E_c)` for each element row.
    pub(crate) elem_weights: Arc<Vec<f64>>,
    /// `1 / B` per case.
    pub(crate) case_weights: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Shifts {
    pub u: f64,
    pub s: f64,
    pub p: f64,
    pub rf2: f64,
}

fn ratio((mean, std): (f64, f64)) -> f64 {
    mean / std
}

/// Random-walk smoothing operator `I - D^-1 A`.
fn smoothing_operator(graph: &crate::mesh_graph::Graph) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(graph.directed_edge_count() + graph.len());
    for i in 0..graph.len() {
        let d = graph.degree(i);
        if d == 0 {
            return Err(Error::IsolatedNode { node: i });
        }
        triplets.push((i, i, 1.0));
        triplets.extend(graph.neighbors(i).iter().map(|&j| (i, j, -1.0 / d as f64)));
    }
    Ok(CsrMatrix::from_triplets(graph.len(), graph.len(), triplets))
}

impl BatchInput {
    pub fn new(cases: &[&CaseStatic], stats: &NormStats) -> Result<Self> {
        let first = cases
            .first()
            .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let n_frames = first.n_frames();
        if let Some(c) = cases.iter().find(|c| c.n_frames() != n_frames) {
            return Err(Error::InvalidInput(format!(
                "cases in one batch must share the frame count ({} vs {})",
                n_frames,
                c.n_frames()
            )));
        }
        let graphs: Vec<&DualGraph> = cases.iter().map(|c| &c.graph).collect();
        let graph = merge_batch(&graphs)?;
        let n = graph.graph.n_nodes();
        let b = cases.len() as f64;

        let flat: Vec<f64> = cases.iter().flat_map(|c| c.coords.iter().flatten().copied()).collect();
        let coords = Matrix::from_vec(n, 3, apply_norm(&flat, 3, &stats.coords)?);

        let mut load = Matrix::zeros(n, 1);
        let mut progress = vec![Matrix::zeros(n, 1); n_frames];
        let mut node_weights = Vec::with_capacity(n);
        let mut elem_weights = Vec::with_capacity(graph.graph.n_elems());
        for (k, c) in cases.iter().enumerate() {
            let n0 = graph.node_offsets[k];
            for &i in &c.load_nodes {
                if i >= c.n_nodes() {
                    return Err(Error::InvalidCase(format!("load node {i} out of range")));
                }
                load.data[n0 + i] = 1.0;
            }
            let alpha = compute_alpha(&c.frame_times)?;
            for (t, a) in alpha.iter().enumerate() {
                progress[t].data[n0..n0 + c.n_nodes()].iter_mut().for_each(|v| *v = *a);
            }
            node_weights.extend(std::iter::repeat_n(1.0 / (b * c.n_nodes() as f64), c.n_nodes()));
            elem_weights.extend(std::iter::repeat_n(1.0 / (b * c.n_elems() as f64), c.n_elems()));
        }
        let disp_weights = node_weights.iter().map(|w| w / 3.0).collect();

        let g = &graph.graph;
        let elem_to_node = g.incidence.element_to_node_operator().ok().map(|m| Arc::new(SparseOperator::new(m)));
        Ok(Self {
            n_frames,
            stats: stats.clone(),
            coords,
            load,
            progress,
            node_lap: Arc::new(SparseOperator::new((*g.node_laplacian).clone())),
            elem_lap: Arc::new(SparseOperator::new((*g.element_laplacian).clone())),
            node_to_elem: Arc::new(SparseOperator::new(g.incidence.node_to_element_operator())),
            elem_to_node,
            smoothing: Arc::new(SparseOperator::new(smoothing_operator(&g.node_graph)?)),
            node_segments: Arc::new(graph.node_offsets.clone()),
            elem_segments: Arc::new(graph.elem_offsets.clone()),
            shift: Shifts {
                u: ratio(stats.u.scalar()),
                s: ratio(stats.s.scalar()),
                p: ratio(stats.peeq.scalar()),
                rf2: ratio(stats.rf2.scalar()),
            },
            node_weights: Arc::new(node_weights),
            disp_weights: Arc::new(disp_weights),
            elem_weights: Arc::new(elem_weights),
            case_weights: Arc::new(vec![1.0 / b; cases.len()]),
            graph,
        })
    }

    pub fn n_cases(&self) -> usize {
        self.graph.n_cases()
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.graph.n_nodes()
    }

    pub fn n_elems(&self) -> usize {
        self.graph.graph.n_elems()
    }

    /// Frame-0 state in normalized units (physical zeros).
    pub(crate) fn initial_outputs(&self) -> [Matrix; 4] {
        [
            Matrix::filled(self.n_nodes(), 3, -self.shift.u),
            Matrix::filled(self.n_elems(), 1, -self.shift.s),
            Matrix::filled(self.n_elems(), 1, -self.shift.p),
            Matrix::filled(self.n_cases(), 1, -self.shift.rf2),
        ]
    }

    /// Node features of frame `t`. `prev_u`/`prev2_u` are normalized
    /// displacements of frames `t-1`/`t-2`, `prev_s` the normalized element
    /// stress of frame `t-1`; they are ignored where the history is short.
    pub(crate) fn features(
        &self,
        tape: &mut Tape,
        t: usize,
        feedback: bool,
        prev_u: Option<Var>,
        prev2_u: Option<Var>,
        prev_s: Option<Var>,
    ) -> Result<Var> {
        if t >= self.n_frames {
            return Err(Error::InvalidInput(format!("frame {t} of {}", self.n_frames)));
        }
        let n = self.n_nodes();
        let history = |tape: &mut Tape, v: Option<Var>, shift: f64, width: usize| match v {
            Some(v) if t >= 1 => tape.affine(v, 1.0, shift),
            _ => tape.constant(Matrix::zeros(n, width)),
        };
        let disp = history(tape, prev_u, self.shift.u, 3);
        let incr = match (t, prev_u, prev2_u) {
            (2.., Some(_), Some(p2)) => {
                let before = tape.affine(p2, 1.0, self.shift.u);
                tape.sub(disp, before)?
            }
            _ => tape.constant(Matrix::zeros(n, 3)),
        };
        let coords = tape.constant(self.coords.clone());
        let progress = tape.constant(self.progress[t].clone());
        let load = tape.constant(self.load.clone());
        let mut parts = vec![coords, disp, incr, progress, load];
        if feedback {
            let op = self.elem_to_node.clone().ok_or(Error::InvalidInput(
                "stress feedback needs every node to touch an element".into(),
            ))?;
            let fb = match prev_s {
                Some(s) if t >= 1 => {
                    let scaled = tape.affine(s, 1.0, self.shift.s);
                    tape.sparse_matmul(&op, scaled)?
                }
                _ => tape.constant(Matrix::zeros(n, 1)),
            };
            parts.push(fb);
        }
        tape.concat_columns(&parts)
    }
}

/// Normalized ground truth per frame for a batch.
pub struct BatchTargets {
    pub u: Vec<Matrix>,
    pub s: Vec<Matrix>,
    pub peeq: Vec<Matrix>,
    pub rf2: Vec<Matrix>,
}

impl BatchTargets {
    pub fn new(cases: &[&CaseTrajectory], stats: &NormStats) -> Result<Self> {
        let t_count = cases.first().map_or(0, |c| c.n_frames());
        if cases.is_empty() || cases.iter().any(|c| c.n_frames() != t_count) {
            return Err(Error::InvalidInput("targets need a nonempty batch with equal frame counts".into()));
        }
        let stack = |width: usize, f: &dyn Fn(&CaseTrajectory, usize) -> Vec<f64>, st| -> Result<Vec<Matrix>> {
            (0..t_count)
                .map(|t| {
                    let raw: Vec<f64> = cases.iter().flat_map(|c| f(c, t)).collect();
                    let rows = raw.len() / width;
                    Ok(Matrix::from_vec(rows, width, apply_norm(&raw, width, st)?))
                })
                .collect()
        };
        // Targets use one scalar statistic per field, applied to every component.
        let flat_u = |c: &CaseTrajectory, t: usize| c.u_frame(t).to_vec();
        let u = stack(1, &flat_u, &stats.u)?
            .into_iter()
            .map(|m| Matrix::from_vec(m.rows / 3, 3, m.data))
            .collect();
        Ok(Self {
            u,
            s: stack(1, &|c: &CaseTrajectory, t| c.s_frame(t).to_vec(), &stats.s)?,
            peeq: stack(1, &|c: &CaseTrajectory, t| c.peeq_frame(t).to_vec(), &stats.peeq)?,
            rf2: stack(1, &|c: &CaseTrajectory, t| vec![c.rf2[t]], &stats.rf2)?,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.u.len()
    }
}
