//! Simulation cases on disk: a directory with `manifest.json` plus one
//! little-endian binary blob per array.

pub mod blob;
mod campaign;
mod norm;
mod split;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_graph::{validate_connectivity, Hex};

pub use blob::{BlobEntry, Dtype};
pub use campaign::{CampaignEntry, CampaignIndex, CAMPAIGN_FILE};
pub use norm::{apply_norm, compute_norm_stats, invert_norm, ChannelStats, NormStats};
pub use split::{split_cases, SplitAssignment, DEFAULT_SPLIT};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Tolerance for the frame-wise PEEQ monotonicity check.
pub const PEEQ_MONOTONE_TOL: f64 = 1e-9;

/// One simulated loading history on a hexahedral mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseTrajectory {
    /// Node coordinates, mm.
    pub coords: Vec<[f64; 3]>,
    pub connectivity: Vec<Hex>,
    /// Nodal displacement, `[T × N × 3]` row-major, mm.
    pub u: Vec<f64>,
    /// Element von Mises stress, `[T × E]`, MPa.
    pub s: Vec<f64>,
    /// Element equivalent plastic strain, `[T × E]`.
    pub peeq: Vec<f64>,
    /// Global vertical reaction force per frame, kN.
    pub rf2: Vec<f64>,
    pub frame_times: Vec<f64>,
    /// Sorted node indices on the load-application surface.
    pub load_nodes: Vec<usize>,
    /// Load-block centre positions along the beam axis, mm.
    pub load_positions: [f64; 2],
}

impl CaseTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.connectivity.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frame_times.len()
    }

    /// Displacements of frame `t` as an `N × 3` row-major slice.
    pub fn u_frame(&self, t: usize) -> &[f64] {
        let w = self.n_nodes() * 3;
        &self.u[t * w..(t + 1) * w]
    }

    pub fn s_frame(&self, t: usize) -> &[f64] {
        let e = self.n_elems();
        &self.s[t * e..(t + 1) * e]
    }

    pub fn peeq_frame(&self, t: usize) -> &[f64] {
        let e = self.n_elems();
        &self.peeq[t * e..(t + 1) * e]
    }

    /// Checks every structural and physical invariant of a case.
    pub fn validate(&self) -> Result<()> {
        let (n, e, t) = (self.n_nodes(), self.n_elems(), self.n_frames());
        if n < 8 || e < 1 || t < 2 {
            return Err(Error::InvalidCase(format!(
                "need N >= 8, E >= 1, T >= 2; got N={n}, E={e}, T={t}"
            )));
        }
        let expect = |name: &str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected,
                    found,
                })
            }
        };
        expect("u", t * n * 3, self.u.len())?;
        expect("s", t * e, self.s.len())?;
        expect("peeq", t * e, self.peeq.len())?;
        expect("rf2", t, self.rf2.len())?;
        validate_connectivity(&self.connectivity, n)?;
        check_times(&self.frame_times)?;
        let finite = self.coords.iter().flatten().chain(&self.u).chain(&self.s).chain(&self.peeq).chain(&self.rf2);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "case arrays".into(),
            });
        }
        if self.u_frame(0).iter().any(|&v| v != 0.0)
            || self.peeq_frame(0).iter().any(|&v| v != 0.0)
            || self.rf2[0] != 0.0
        {
            return Err(Error::InvalidCase("frame 0 must be the undeformed state".into()));
        }
        if let Some(v) = self.peeq.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidCase(format!("negative PEEQ {v}")));
        }
        for f in 1..t {
            let (prev, cur) = (self.peeq_frame(f - 1), self.peeq_frame(f));
            if let Some(el) = (0..e).find(|&i| cur[i] < prev[i] - PEEQ_MONOTONE_TOL) {
                return Err(Error::InvalidCase(format!("PEEQ decreases at frame {f}, element {el}")));
            }
        }
        if self.load_nodes.is_empty() {
            return Err(Error::InvalidCase("load node set is empty".into()));
        }
        if let Some(&bad) = self.load_nodes.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidCase(format!("load node {bad} outside 0..{n}")));
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    match times.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(Error::NonMonotoneTimes { frame: i + 1 }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseManifest {
    schema_version: u32,
    n_nodes: usize,
    n_elems: usize,
    n_frames: usize,
    dtype: String,
    endianness: String,
    blobs: Vec<BlobEntry>,
    load_positions: [f64; 2],
    load_nodes: Vec<usize>,
}

pub fn save_case(case: &CaseTrajectory, dir: &Path) -> Result<()> {
    case.validate()?;
    write_container(case, dir)
}

/// Writes the container without checking the physical invariants, for
/// predicted trajectories (which need not keep PEEQ monotone, say).
pub fn write_container(case: &CaseTrajectory, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (n, e, t) = (case.n_nodes(), case.n_elems(), case.n_frames());
    let coords: Vec<f64> = case.coords.iter().flatten().copied().collect();
    let conn: Vec<u32> = case.connectivity.iter().flatten().map(|&i| i as u32).collect();
    let blobs = vec![
        blob::write_f64(dir, "coords", vec![n, 3], &coords)?,
        blob::write_u32(dir, "connectivity", vec![e, 8], &conn)?,
        blob::write_f64(dir, "u", vec![t, n, 3], &case.u)?,
        blob::write_f64(dir, "s", vec![t, e], &case.s)?,
        blob::write_f64(dir, "peeq", vec![t, e], &case.peeq)?,
        blob::write_f64(dir, "rf2", vec![t], &case.rf2)?,
        blob::write_f64(dir, "frame_times", vec![t], &case.frame_times)?,
    ];
    let manifest = CaseManifest {
        schema_version: SCHEMA_VERSION,
        n_nodes: n,
        n_elems: e,
        n_frames: t,
        dtype: "f64".into(),
        endianness: "little".into(),
        blobs,
        load_positions: case.load_positions,
        load_nodes: case.load_nodes.clone(),
    };
    blob::write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_case(dir: &Path) -> Result<CaseTrajectory> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let m: CaseManifest = blob::read_json(&manifest_path)?;
    let bad = |detail: String| Error::Manifest {
        path: manifest_path.clone(),
        detail,
    };
    if m.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("unsupported schema version {}", m.schema_version)));
    }
    if m.dtype != "f64" || m.endianness != "little" {
        return Err(bad(format!("unsupported encoding {}/{}", m.dtype, m.endianness)));
    }
    let (n, e, t) = (m.n_nodes, m.n_elems, m.n_frames);
    let get = |name: &str, shape: &[usize]| -> Result<&BlobEntry> {
        let entry = blob::find(dir, &m.blobs, name)?;
        let declared: usize = shape.iter().product();
        if entry.shape != shape {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: declared,
                found: entry.element_count(),
            });
        }
        Ok(entry)
    };
    let coords = blob::read_f64(dir, get("coords", &[n, 3])?)?;
    let conn = blob::read_u32(dir, get("connectivity", &[e, 8])?)?;
    let case = CaseTrajectory {
        coords: coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        connectivity: conn
            .chunks_exact(8)
            .map(|c| std::array::from_fn(|i| c[i] as usize))
            .collect(),
        u: blob::read_f64(dir, get("u", &[t, n, 3])?)?,
        s: blob::read_f64(dir, get("s", &[t, e])?)?,
        peeq: blob::read_f64(dir, get("peeq", &[t, e])?)?,
        rf2: blob::read_f64(dir, get("rf2", &[t])?)?,
        frame_times: blob::read_f64(dir, get("frame_times", &[t])?)?,
        load_nodes: m.load_nodes,
        load_positions: m.load_positions,
    };
    case.validate()?;
    Ok(case)
}

/// Normalized loading progress: first frame maps to 0, last to 1.
pub fn compute_alpha(frame_times: &[f64]) -> Result<Vec<f64>> {
    if frame_times.len() < 2 {
        return Err(Error::InvalidInput("progress needs at least two frames".into()));
    }
    check_times(frame_times)?;
    let (t0, t1) = (frame_times[0], frame_times[frame_times.len() - 1]);
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidInput("frame times have zero span".into()));
    }
    let mut alpha: Vec<f64> = frame_times.iter().map(|t| (t - t0) / span).collect();
    *alpha.last_mut().unwrap() = 1.0;
    Ok(alpha)
}
