//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no glue beyond `JSON.parse`.

use dualgraph::case_store::CaseTrajectory;
use dualgraph::mesh_graph::build_incidence;
use dualgraph::projection::{attenuation_report, element_node_element, Field, Unit};
use dualgraph::synth::{generate_case, midspan_node, BeamSpec, MeshScale};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Frames per generated history; progress is snapped to this grid.
pub const FRAMES: usize = 21;

/// One x–y layer of element values at mid-width, row `j` (bottom to top)
/// holding `nx` values.
#[derive(Debug, Clone, Serialize)]
pub struct Slice {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceView {
    pub frame: usize,
    pub progress: f64,
    pub load_positions: [f64; 2],
    pub field: String,
    pub force_kn: f64,
    pub slice: Slice,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionView {
    pub frame: usize,
    pub field: String,
    pub original: Slice,
    pub projected: Slice,
    pub report: dualgraph::projection::AttenuationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub load_positions: [f64; 2],
    pub deflection_mm: Vec<f64>,
    pub force_kn: Vec<f64>,
}

fn mesh_scale(fine: bool) -> MeshScale {
    if fine {
        MeshScale::Full
    } else {
        MeshScale::Tiny
    }
}

fn frame_of(progress: f64) -> usize {
    (progress.clamp(0.0, 1.0) * (FRAMES - 1) as f64).round() as usize
}

fn field_frame<'a>(case: &'a CaseTrajectory, field: &str, t: usize) -> Result<&'a [f64], String> {
    match field {
        "stress" => Ok(case.s_frame(t)),
        "peeq" => Ok(case.peeq_frame(t)),
        other => Err(format!("unknown field `{other}` (stress, peeq)")),
    }
}

fn mid_layer(values: &[f64], dims: [usize; 3]) -> Slice {
    let [nx, ny, nz] = dims;
    let k = nz / 2;
    let values: Vec<f64> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| i + nx * (j + ny * k)))
        .map(|e| values[e])
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Slice { nx, ny, values, min, max }
}

fn case_for(offsets: [f64; 2], fine: bool) -> Result<(CaseTrajectory, [usize; 3]), String> {
    let spec = BeamSpec::default();
    let mesh = mesh_scale(fine);
    let case = generate_case(&spec, mesh, offsets, FRAMES).map_err(|e| e.to_string())?;
    Ok((case, mesh.dims(&spec)))
}

/// A generated case's field on the mid-width layer at the given progress.
pub fn slice_view(offset_a: f64, offset_b: f64, progress: f64, field: &str, fine: bool) -> Result<SliceView, String> {
    let (case, dims) = case_for([offset_a, offset_b], fine)?;
    let t = frame_of(progress);
    Ok(SliceView {
        frame: t,
        progress: case.frame_times[t],
        load_positions: case.load_positions,
        field: field.into(),
        force_kn: case.rf2[t],
        slice: mid_layer(field_frame(&case, field, t)?, dims),
    })
}

/// Element → node → element round trip of one field, with the peak report.
pub fn projection_view(offset_a: f64, offset_b: f64, progress: f64, field: &str, fine: bool) -> Result<ProjectionView, String> {
    let (case, dims) = case_for([offset_a, offset_b], fine)?;
    let t = frame_of(progress);
    let inc = build_incidence(&case.connectivity, case.n_nodes()).map_err(|e| e.to_string())?;
    let values = field_frame(&case, field, t)?.to_vec();
    let f = Field::scalar(values.clone(), Unit::Normalized);
    let projected = element_node_element(&f, &inc).map_err(|e| e.to_string())?;
    let report = attenuation_report(&f, &inc).map_err(|e| e.to_string())?;
    Ok(ProjectionView {
        frame: t,
        field: field.into(),
        original: mid_layer(&values, dims),
        projected: mid_layer(&projected.values, dims),
        report,
    })
}

/// Midspan deflection against total reaction force over the history.
pub fn force_curve(offset_a: f64, offset_b: f64) -> Result<Curve, String> {
    let (case, _) = case_for([offset_a, offset_b], false)?;
    let mid = midspan_node(&BeamSpec::default(), &case.coords);
    Ok(Curve {
        load_positions: case.load_positions,
        deflection_mm: (0..FRAMES).map(|t| -case.u_frame(t)[mid * 3 + 1]).collect(),
        force_kn: case.rf2.clone(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sliceView)]
pub fn js_slice_view(offset_a: f64, offset_b: f64, progress: f64, field: &str, fine: bool) -> Result<String, JsValue> {
    to_js(slice_view(offset_a, offset_b, progress, field, fine))
}

#[wasm_bindgen(js_name = projectionView)]
pub fn js_projection_view(
    offset_a: f64,
    offset_b: f64,
    progress: f64,
    field: &str,
    fine: bool,
) -> Result<String, JsValue> {
    to_js(projection_view(offset_a, offset_b, progress, field, fine))
}

#[wasm_bindgen(js_name = forceCurve)]
pub fn js_force_curve(offset_a: f64, offset_b: f64) -> Result<String, JsValue> {
    to_js(force_curve(offset_a, offset_b))
}
