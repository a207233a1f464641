//! Dual-graph recurrent surrogate for hexahedral finite-element trajectories.
//!
//! The crate is organised bottom-up:
//!
//! - [`case_store`]: on-disk case container, normalization, splits
//! - [`mesh_graph`]: node graph, element graph, incidence, scaled Laplacians
//! - [`projection`]: element ↔ node averaging and the peak-attenuation study
//! - [`tape`] and [`optim`]: reverse-mode differentiation and the optimizer
//! - [`surrogate`]: the dual-graph model, the node-only baseline, rollout
//! - [`trainer`]: loss, training loop, metrics, ablation
//! - [`synth`]: synthetic four-point-bending campaign generator

pub mod case_store;
pub mod error;
pub mod mesh_graph;
pub mod optim;
pub mod projection;
pub mod sparse;
pub mod surrogate;
pub mod synth;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
