//! Named parameter tensors and their layout for both model kinds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::tape::{Matrix, Tape, Var};

/// Indices of one graph-recurrent cell's tensors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellIdx {
    /// `(K+1)·F × 3D`: input filters for update, reset and candidate.
    pub input: usize,
    /// `(K+1)·D × 2D`: hidden filters for update and reset.
    pub hidden_gates: usize,
    /// `(K+1)·D × D`: hidden filter for the candidate.
    pub hidden_cand: usize,
    /// `1 × 3D`.
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Where every tensor lives in [`SurrogateParams::tensors`].
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub node_cell: CellIdx,
    pub elem_cell: Option<CellIdx>,
    pub u_head: MlpIdx,
    pub s_head: MlpIdx,
    pub p_head: MlpIdx,
    pub rf2_head: MlpIdx,
}

struct Builder {
    specs: Vec<(String, usize, usize)>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.specs.push((name, rows, cols));
        self.specs.len() - 1
    }

    fn cell(&mut self, prefix: &str, input: usize, hidden: usize, order: usize) -> CellIdx {
        let k = order + 1;
        CellIdx {
            input: self.add(format!("{prefix}.input_weights"), k * input, 3 * hidden),
            hidden_gates: self.add(format!("{prefix}.hidden_gate_weights"), k * hidden, 2 * hidden),
            hidden_cand: self.add(format!("{prefix}.hidden_candidate_weights"), k * hidden, hidden),
            bias: self.add(format!("{prefix}.bias"), 1, 3 * hidden),
        }
    }

    fn mlp(&mut self, prefix: &str, input: usize, width: usize, output: usize) -> MlpIdx {
        MlpIdx {
            w1: self.add(format!("{prefix}.w1"), input, width),
            b1: self.add(format!("{prefix}.b1"), 1, width),
            w2: self.add(format!("{prefix}.w2"), width, output),
            b2: self.add(format!("{prefix}.b2"), 1, output),
        }
    }
}

pub(crate) fn layout(config: &ModelConfig) -> (Layout, Vec<(String, usize, usize)>) {
    let mut b = Builder { specs: Vec::new() };
    let (d, w, k) = (config.hidden, config.mlp_width, config.cheb_order);
    let node_cell = b.cell("node_cell", config.input_width(), d, k);
    let layout = match config.kind {
        ModelKind::Dual => {
            let elem_cell = b.cell("element_cell", d, d, k);
            Layout {
                node_cell,
                elem_cell: Some(elem_cell),
                u_head: b.mlp("head_u", d, w, 3),
                s_head: b.mlp("head_s", d, w, 1),
                p_head: b.mlp("head_peeq", d, w, 1),
                rf2_head: b.mlp("head_rf2", d, w, 1),
            }
        }
        ModelKind::Baseline => Layout {
            node_cell,
            elem_cell: None,
            u_head: b.mlp("head_u", d, w, 3),
            s_head: b.mlp("head_s_node", d, w, 1),
            p_head: b.mlp("head_peeq_node", d, w, 1),
            rf2_head: b.mlp("head_rf2", d, w, 1),
        },
    };
    (layout, b.specs)
}

/// All trainable tensors of one model, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

fn is_bias(name: &str) -> bool {
    matches!(name.rsplit('.').next(), Some("bias" | "b1" | "b2"))
}

impl SurrogateParams {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (_, specs) = layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (name, rows, cols) in specs {
            let m = if is_bias(&name) {
                Matrix::zeros(rows, cols)
            } else {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect())
            };
            names.push(name);
            tensors.push(m);
        }
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Rebuilds from stored tensors, checking names and shapes against the
    /// layout implied by `config`.
    pub fn from_parts(config: ModelConfig, names: Vec<String>, tensors: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let (_, specs) = layout(&config);
        if specs.len() != names.len() || names.len() != tensors.len() {
            return Err(Error::InvalidInput(format!(
                "model expects {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for ((name, rows, cols), (n, t)) in specs.iter().zip(names.iter().zip(&tensors)) {
            if name != n || t.shape() != (*rows, *cols) {
                return Err(Error::InvalidInput(format!(
                    "tensor {n} {:?} does not match expected {name} {rows}x{cols}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, names, tensors })
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub(crate) fn layout(&self) -> Layout {
        layout(&self.config).0
    }

    /// Registers every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|m| tape.param(m.clone())).collect()
    }
}

/// Parameter count implied by a configuration.
pub fn parameter_count(config: &ModelConfig) -> usize {
    layout(config).1.iter().map(|(_, r, c)| r * c).sum()
}
