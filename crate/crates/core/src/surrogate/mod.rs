//! Dual-graph recurrent surrogate and its node-only baseline.
//!
//! Each frame the node cell evolves `H_n` on the node graph from the frame
//! features; the dual model pools `H_n` onto elements (mean of the eight
//! corners), evolves `H_e` on the element graph and decodes stress and
//! plastic strain there. The baseline decodes nodal proxies and averages
//! them onto elements. Both decode the reaction force from mean-pooled
//! hidden states.

mod batch;
pub(crate) mod model;
pub(crate) mod params;
mod rollout;

use serde::{Deserialize, Serialize};

pub use batch::{BatchInput, BatchTargets, CaseStatic, FeatureLayout};
pub use model::{Feedback, FrameOutputs, Forward};
pub use params::{parameter_count, SurrogateParams};
pub use rollout::{rollout, rollout_batch, RolloutMode, RolloutResult};

use crate::error::{Error, Result};
use crate::mesh_graph::LambdaMax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dual,
    Baseline,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Dual => "dual",
            ModelKind::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden width of both recurrent cells.
    pub hidden: usize,
    /// Width of the two-layer decoder heads.
    pub mlp_width: usize,
    /// Chebyshev filter order.
    pub cheb_order: usize,
    /// Feed the previous stress prediction back to the nodes.
    pub stress_feedback: bool,
    pub lambda_max: LambdaMax,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dual,
            hidden: 256,
            mlp_width: 256,
            cheb_order: 2,
            stress_feedback: false,
            lambda_max: LambdaMax::Two,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn input_width(&self) -> usize {
        FeatureLayout::new(self.stress_feedback).width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.mlp_width == 0 {
            return Err(Error::InvalidInput("hidden and head widths must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
