//! Synthetic four-point-bending campaigns in the case-container schema.
//!
//! The fields come from closed-form beam theory, not a finite-element
//! solve: Euler-Bernoulli deflection of two point loads on a simply
//! supported span, a bilinear force law for the global response, bending
//! stress plus a bearing concentration under each load block, and a capped
//! stress whose excess accumulates as plastic strain. The point is a
//! plausible, localized, history-dependent field with the right schema, not
//! an accurate simulation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case_store::{save_case, CampaignEntry, CampaignIndex, CaseTrajectory, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::mesh_graph::structured_hex_grid;

/// Beam geometry, supports, load blocks and the calibrated global law.
/// Lengths in mm, forces in kN, stresses in MPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Extent along z.
    pub width: f64,
    /// Extent along y (vertical).
    pub depth: f64,
    /// Extent along x.
    pub length: f64,
    /// Support-to-support distance, centred on the beam.
    pub span: f64,
    pub mesh_size: f64,
    pub yield_force: f64,
    pub ultimate_force: f64,
    pub yield_deflection: f64,
    pub ultimate_deflection: f64,
    pub elastic_modulus: f64,
    /// Load-block centres at zero offset.
    pub baseline_positions: [f64; 2],
    /// Load-block footprint along the span.
    pub block_length: f64,
    pub max_offset: f64,
    pub offset_step: f64,
    pub fields: FieldConstants,
}

/// Constants shaping the element fields, fitted by the calibration example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConstants {
    /// Stress above which the excess turns into plastic strain.
    pub stress_cap: f64,
    /// Fraction of the excess that still shows up as stress.
    pub hardening: f64,
    /// Plastic strain per MPa of excess.
    pub plastic_rate: f64,
    /// Bearing stress directly under a block at the ultimate force.
    pub bearing_peak: f64,
    /// Gaussian widths of the bearing term, in elements along x and y.
    pub bearing_width: [f64; 2],
}

impl Default for FieldConstants {
    fn default() -> Self {
        Self {
            stress_cap: 3.0,
            hardening: 0.7,
            plastic_rate: 1.6e-3,
            bearing_peak: 50.0,
            bearing_width: [1.0, 1.0],
        }
    }
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            width: 150.0,
            depth: 250.0,
            length: 2700.0,
            span: 2400.0,
            mesh_size: 25.0,
            yield_force: 85.0,
            ultimate_force: 102.0,
            yield_deflection: 10.02,
            ultimate_deflection: 33.4,
            elastic_modulus: 32_700.0,
            baseline_positions: [950.0, 1750.0],
            block_length: 100.0,
            max_offset: 200.0,
            offset_step: 25.0,
            fields: FieldConstants::default(),
        }
    }
}

/// Mesh resolution of generated cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshScale {
    /// `mesh_size` elements everywhere (108 × 10 × 6 for the default beam).
    Full,
    /// 12 × 2 × 2 elements over the same beam.
    Tiny,
}

impl MeshScale {
    pub fn name(self) -> &'static str {
        match self {
            MeshScale::Full => "full",
            MeshScale::Tiny => "tiny",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MeshScale::Full),
            "tiny" => Ok(MeshScale::Tiny),
            other => Err(Error::InvalidInput(format!("unknown mesh scale `{other}` (full, tiny)"))),
        }
    }

    /// Elements along x, y, z.
    pub fn dims(self, spec: &BeamSpec) -> [usize; 3] {
        match self {
            MeshScale::Full => [
                (spec.length / spec.mesh_size).round() as usize,
                (spec.depth / spec.mesh_size).round() as usize,
                (spec.width / spec.mesh_size).round() as usize,
            ],
            MeshScale::Tiny => [12, 2, 2],
        }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        let divides = |l: f64| {
            let k = l / self.mesh_size;
            (k - k.round()).abs() < 1e-9
        };
        let checks = [
            (self.span <= self.length, "span exceeds the beam length"),
            (
                divides(self.width) && divides(self.depth) && divides(self.length),
                "mesh size must divide the beam dimensions",
            ),
            (self.yield_force < self.ultimate_force, "yield force must be below the ultimate force"),
            (
                0.0 < self.yield_deflection && self.yield_deflection < self.ultimate_deflection,
                "yield deflection must lie in (0, ultimate deflection)",
            ),
            (self.fields.hardening >= 0.0 && self.fields.plastic_rate >= 0.0, "negative field constants"),
        ];
        match checks.iter().find(|c| !c.0) {
            Some((_, msg)) => Err(Error::InvalidInput((*msg).into())),
            None => Ok(()),
        }
    }

    /// Left and right support positions along x.
    pub fn supports(&self) -> [f64; 2] {
        let a = 0.5 * (self.length - self.span);
        [a, a + self.span]
    }

    pub fn midspan(&self) -> f64 {
        0.5 * self.length
    }

    /// Second moment of area of the cross-section, mm⁴.
    pub fn second_moment(&self) -> f64 {
        self.width * self.depth.powi(3) / 12.0
    }

    /// Total applied force (kN) at a given midspan deflection (mm).
    pub fn force_at(&self, deflection: f64) -> f64 {
        if deflection <= self.yield_deflection {
            self.yield_force * deflection / self.yield_deflection
        } else {
            self.yield_force
                + (self.ultimate_force - self.yield_force) * (deflection - self.yield_deflection)
                    / (self.ultimate_deflection - self.yield_deflection)
        }
    }

    /// Load positions for a pair of offsets, rejecting off-grid or
    /// out-of-range offsets.
    pub fn load_positions(&self, offsets: [f64; 2]) -> Result<[f64; 2]> {
        for o in offsets {
            let k = o / self.offset_step;
            if o.abs() > self.max_offset + 1e-9 || (k - k.round()).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "offset {o} mm is not a multiple of {} within ±{}",
                    self.offset_step, self.max_offset
                )));
            }
        }
        let pos = [self.baseline_positions[0] + offsets[0], self.baseline_positions[1] + offsets[1]];
        let [a, b] = self.supports();
        let half = 0.5 * self.block_length;
        if pos[0] - half <= a || pos[1] + half >= b || pos[0] + half >= pos[1] - half {
            return Err(Error::InvalidInput(format!(
                "load blocks at {pos:?} overlap each other or a support"
            )));
        }
        Ok(pos)
    }
}

/// Deflection (positive downward) of a unit load at `a` on a simply
/// supported span `l`, per unit `EI`, at local coordinate `x`; the
/// overhangs continue rigidly along the end slope. Returns `(v, dv/dx)`.
fn unit_deflection(l: f64, a: f64, x: f64) -> (f64, f64) {
    let b = l - a;
    let inner = |x: f64| {
        if x <= a {
            (
                b * x * (l * l - b * b - x * x) / (6.0 * l),
                b * (l * l - b * b - 3.0 * x * x) / (6.0 * l),
            )
        } else {
            let y = l - x;
            (
                a * y * (l * l - a * a - y * y) / (6.0 * l),
                -a * (l * l - a * a - 3.0 * y * y) / (6.0 * l),
            )
        }
    };
    if x < 0.0 {
        let (_, s) = inner(0.0);
        (s * x, s)
    } else if x > l {
        let (_, s) = inner(l);
        (s * (x - l), s)
    } else {
        inner(x)
    }
}

/// Support reactions (same unit as `force`) for two equal loads sharing a
/// total `force`.
pub fn support_reactions(spec: &BeamSpec, positions: [f64; 2], force: f64) -> [f64; 2] {
    let [a, _] = spec.supports();
    let p = 0.5 * force;
    let mut r = [0.0, 0.0];
    for x in positions {
        let xi = x - a;
        r[0] += p * (spec.span - xi) / spec.span;
        r[1] += p * xi / spec.span;
    }
    r
}

/// Bending moment (kN·mm) at `x` for two equal loads sharing `force`.
pub fn bending_moment(spec: &BeamSpec, positions: [f64; 2], force: f64, x: f64) -> f64 {
    let [a, b] = spec.supports();
    if x <= a || x >= b {
        return 0.0;
    }
    let [ra, _] = support_reactions(spec, positions, force);
    let xi = x - a;
    let mut m = ra * xi;
    for pos in positions {
        m -= 0.5 * force * (x - pos).max(0.0);
    }
    m
}

/// Normalized downward deflection shape (1 at midspan) and its slope.
fn deflection_shape(spec: &BeamSpec, positions: [f64; 2], x: f64) -> (f64, f64) {
    let [a, _] = spec.supports();
    let sum = |x: f64| {
        positions.iter().fold((0.0, 0.0), |acc, &p| {
            let (v, s) = unit_deflection(spec.span, p - a, x - a);
            (acc.0 + v, acc.1 + s)
        })
    };
    let (vm, _) = sum(spec.midspan());
    let (v, s) = sum(x);
    (v / vm, s / vm)
}

/// Top-surface nodes under the two load blocks. The footprint is widened to
/// half an element so every block catches at least one node column.
pub fn load_surface_nodes(spec: &BeamSpec, coords: &[[f64; 3]], positions: [f64; 2], hx: f64) -> Vec<usize> {
    let half = (0.5 * spec.block_length).max(0.5 * hx) + 1e-9;
    coords
        .iter()
        .enumerate()
        .filter(|(_, c)| (c[1] - spec.depth).abs() < 1e-9 && positions.iter().any(|p| (c[0] - p).abs() <= half))
        .map(|(i, _)| i)
        .collect()
}

/// Node closest to the centre of the beam.
pub fn midspan_node(spec: &BeamSpec, coords: &[[f64; 3]]) -> usize {
    let target = [spec.midspan(), 0.5 * spec.depth, 0.5 * spec.width];
    let dist = |c: &[f64; 3]| (0..3).map(|k| (c[k] - target[k]).powi(2)).sum::<f64>();
    (0..coords.len())
        .min_by(|&i, &j| dist(&coords[i]).total_cmp(&dist(&coords[j])))
        .expect("mesh has nodes")
}

/// Elastic (uncapped) element stress at total force `force`.
fn elastic_stress(spec: &BeamSpec, positions: [f64; 2], force: f64, centre: [f64; 3], h: [f64; 3]) -> f64 {
    let ymid = 0.5 * spec.depth;
    // kN·mm → N·mm
    let bending = (bending_moment(spec, positions, force, centre[0]) * 1e3 * (centre[1] - ymid) / spec.second_moment()).abs();
    let f = &spec.fields;
    let scale = force / spec.ultimate_force;
    let depth_term = ((spec.depth - centre[1]) / (f.bearing_width[1] * h[1])).powi(2);
    let bearing: f64 = positions
        .iter()
        .map(|p| {
            let along = ((centre[0] - p) / (f.bearing_width[0] * h[0])).powi(2);
            (-0.5 * (along + depth_term)).exp()
        })
        .sum();
    bending + f.bearing_peak * scale * bearing
}

/// One loading history for the given block offsets.
pub fn generate_case(spec: &BeamSpec, mesh: MeshScale, offsets: [f64; 2], n_frames: usize) -> Result<CaseTrajectory> {
    spec.validate()?;
    if n_frames < 2 {
        return Err(Error::InvalidInput("a case needs at least two frames".into()));
    }
    let positions = spec.load_positions(offsets)?;
    let dims = mesh.dims(spec);
    let h = [
        spec.length / dims[0] as f64,
        spec.depth / dims[1] as f64,
        spec.width / dims[2] as f64,
    ];
    let (coords, connectivity) = structured_hex_grid(dims, h);
    let (n, e) = (coords.len(), connectivity.len());
    let ymid = 0.5 * spec.depth;
    let shape: Vec<(f64, f64)> = coords.iter().map(|c| deflection_shape(spec, positions, c[0])).collect();
    let centres: Vec<[f64; 3]> = connectivity
        .iter()
        .map(|hex| {
            let mut c = [0.0; 3];
            for &i in hex {
                (0..3).for_each(|k| c[k] += coords[i][k] / 8.0);
            }
            c
        })
        .collect();

    let f = &spec.fields;
    let mut u = Vec::with_capacity(n_frames * n * 3);
    let mut s = Vec::with_capacity(n_frames * e);
    let mut peeq = Vec::with_capacity(n_frames * e);
    let mut rf2 = Vec::with_capacity(n_frames);
    let mut frame_times = Vec::with_capacity(n_frames);
    let mut plastic = vec![0.0; e];
    for t in 0..n_frames {
        let p = t as f64 / (n_frames - 1) as f64;
        let delta = p * spec.ultimate_deflection;
        let force = spec.force_at(delta);
        frame_times.push(p);
        rf2.push(force);
        for (c, &(v, slope)) in coords.iter().zip(&shape) {
            u.push((c[1] - ymid) * delta * slope);
            u.push(-delta * v);
            u.push(0.0);
        }
        for (k, centre) in centres.iter().enumerate() {
            let sigma = elastic_stress(spec, positions, force, *centre, h);
            let excess = (sigma - f.stress_cap).max(0.0);
            plastic[k] = f64::max(plastic[k], f.plastic_rate * excess);
            s.push(sigma.min(f.stress_cap) + f.hardening * excess);
            peeq.push(plastic[k]);
        }
    }
    let case = CaseTrajectory {
        load_nodes: load_surface_nodes(spec, &coords, positions, h[0]),
        coords,
        connectivity,
        u,
        s,
        peeq,
        rf2,
        frame_times,
        load_positions: positions,
    };
    case.validate()?;
    Ok(case)
}

/// Which offset pairs to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub mesh: MeshScale,
    pub n_frames: usize,
    pub seed: u64,
    pub offsets: Vec<[f64; 2]>,
}

/// Every offset on the grid `-max..=max` in `step` increments.
pub fn offset_grid(spec: &BeamSpec) -> Vec<f64> {
    let k = (spec.max_offset / spec.offset_step).round() as i64;
    (-k..=k).map(|i| i as f64 * spec.offset_step).collect()
}

impl CampaignSpec {
    /// `count` distinct pairs drawn without replacement from the full grid.
    pub fn sampled(spec: &BeamSpec, mesh: MeshScale, count: usize, n_frames: usize, seed: u64) -> Result<Self> {
        let grid = offset_grid(spec);
        let mut pairs: Vec<[f64; 2]> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| [a, b])).collect();
        if count == 0 || count > pairs.len() {
            return Err(Error::InvalidInput(format!(
                "case count must be in 1..={} for this offset grid",
                pairs.len()
            )));
        }
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pairs.truncate(count);
        Ok(Self {
            mesh,
            n_frames,
            seed,
            offsets: pairs,
        })
    }
}

/// Writes one case directory per offset pair plus `campaign.json`.
pub fn generate_campaign(spec: &BeamSpec, campaign: &CampaignSpec, out_dir: &Path) -> Result<CampaignIndex> {
    for (i, a) in campaign.offsets.iter().enumerate() {
        if campaign.offsets[..i].contains(a) {
            return Err(Error::InvalidInput(format!("duplicate offset pair {a:?}")));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut cases = Vec::with_capacity(campaign.offsets.len());
    for (i, &offsets) in campaign.offsets.iter().enumerate() {
        let case = generate_case(spec, campaign.mesh, offsets, campaign.n_frames)?;
        let dir = format!("case_{i:04}");
        save_case(&case, &out_dir.join(&dir))?;
        cases.push(CampaignEntry {
            dir,
            offsets,
            load_positions: case.load_positions,
        });
    }
    let index = CampaignIndex {
        schema_version: SCHEMA_VERSION,
        mesh_scale: campaign.mesh.name().into(),
        n_frames: campaign.n_frames,
        seed: campaign.seed,
        cases,
        split: None,
    };
    index.save(out_dir)?;
    Ok(index)
}

/// A one-element case with smooth, nonzero fields of every kind, sized for
/// finite-difference audits of the full model.
pub fn single_hex_case(n_frames: usize) -> Result<CaseTrajectory> {
    if n_frames < 2 {
        return Err(Error::InvalidInput("a case needs at least two frames".into()));
    }
    let (coords, connectivity) = structured_hex_grid([1, 1, 1], [100.0, 50.0, 50.0]);
    let mut u = Vec::with_capacity(n_frames * 24);
    let mut s = Vec::with_capacity(n_frames);
    let mut peeq = Vec::with_capacity(n_frames);
    let mut rf2 = Vec::with_capacity(n_frames);
    let mut frame_times = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let p = t as f64 / (n_frames - 1) as f64;
        frame_times.push(p);
        for c in &coords {
            u.push(0.01 * p * c[1]);
            u.push(-0.02 * p * c[0] - 0.3 * p * p);
            u.push(0.005 * p * c[2]);
        }
        s.push(12.0 * p + 3.0 * p * p);
        peeq.push(0.01 * (p - 0.4).max(0.0));
        rf2.push(40.0 * p - 5.0 * p * p);
    }
    let case = CaseTrajectory {
        load_nodes: (0..coords.len()).filter(|&i| coords[i][1] > 0.0).collect(),
        coords,
        connectivity,
        u,
        s,
        peeq,
        rf2,
        frame_times,
        load_positions: [25.0, 75.0],
    };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests;
