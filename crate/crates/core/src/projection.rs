//! Transfers between element and node resolution, and the peak-attenuation
//! study of the element → node → element round trip.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh_graph::Incidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Millimetre,
    Megapascal,
    Dimensionless,
    Kilonewton,
    Normalized,
}

/// Row-major `rows × channels` field sampled on nodes or on elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub channels: usize,
    pub unit: Unit,
}

impl Field {
    pub fn new(values: Vec<f64>, channels: usize, unit: Unit) -> Self {
        assert!(channels > 0 && values.len() % channels == 0);
        Self { values, channels, unit }
    }

    pub fn scalar(values: Vec<f64>, unit: Unit) -> Self {
        Self::new(values, 1, unit)
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.channels
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }
}

/// Node value = mean over incident elements.
pub fn element_to_node(field: &Field, inc: &Incidence) -> Result<Field> {
    if field.rows() != inc.n_elems() {
        return Err(Error::shape(
            "element_to_node",
            format!("{} rows for {} elements", field.rows(), inc.n_elems()),
        ));
    }
    let c = field.channels;
    let mut out = vec![0.0; inc.n_nodes() * c];
    for n in 0..inc.n_nodes() {
        let elems = inc.elements_of(n);
        if elems.is_empty() {
            return Err(Error::OrphanNode { node: n });
        }
        let dst = &mut out[n * c..(n + 1) * c];
        for &e in elems {
            dst.iter_mut().zip(field.row(e)).for_each(|(d, v)| *d += v);
        }
        let inv = 1.0 / elems.len() as f64;
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    Ok(Field::new(out, c, field.unit))
}

/// Element value = one eighth of the sum over its corners.
pub fn node_to_element(field: &Field, inc: &Incidence) -> Result<Field> {
    if field.rows() != inc.n_nodes() {
        return Err(Error::shape(
            "node_to_element",
            format!("{} rows for {} nodes", field.rows(), inc.n_nodes()),
        ));
    }
    let c = field.channels;
    let mut out = vec![0.0; inc.n_elems() * c];
    for e in 0..inc.n_elems() {
        let dst = &mut out[e * c..(e + 1) * c];
        for &n in inc.nodes_of(e) {
            dst.iter_mut().zip(field.row(n)).for_each(|(d, v)| *d += v);
        }
        dst.iter_mut().for_each(|d| *d *= 0.125);
    }
    Ok(Field::new(out, c, field.unit))
}

/// Node-hidden-state pooling onto elements (same averaging as
/// [`node_to_element`], on a `N × D` block).
pub fn aggregate_node_hidden(hidden: &[f64], width: usize, inc: &Incidence) -> Result<Vec<f64>> {
    if width == 0 || hidden.len() != inc.n_nodes() * width {
        return Err(Error::shape(
            "aggregate_node_hidden",
            format!("{} values for {} nodes of width {width}", hidden.len(), inc.n_nodes()),
        ));
    }
    Ok(node_to_element(&Field::new(hidden.to_vec(), width, Unit::Normalized), inc)?.values)
}

pub fn element_node_element(field: &Field, inc: &Incidence) -> Result<Field> {
    node_to_element(&element_to_node(field, inc)?, inc)
}

#[derive(Debug, Clone, Serialize)]
pub struct AttenuationReport {
    pub original_peak: f64,
    pub projected_peak: f64,
    /// `(1 - projected / original) * 100`; 0 when the original peak is not positive.
    pub reduction_percent: f64,
    pub original_peak_element: usize,
    pub projected_peak_element: usize,
    /// Set when the original peak is not positive and no reduction is defined.
    pub nonpositive_peak: bool,
    #[serde(skip)]
    pub abs_difference: Vec<f64>,
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Applies the element → node → element round trip to a scalar element
/// field and compares global maxima.
pub fn attenuation_report(field: &Field, inc: &Incidence) -> Result<AttenuationReport> {
    if field.channels != 1 || field.values.is_empty() {
        return Err(Error::InvalidInput("attenuation study needs a non-empty scalar field".into()));
    }
    let projected = element_node_element(field, inc)?;
    let (orig_at, orig) = argmax(&field.values);
    let (proj_at, proj) = argmax(&projected.values);
    let nonpositive_peak = !(orig > 0.0);
    let reduction_percent = if nonpositive_peak {
        0.0
    } else {
        (1.0 - proj / orig) * 100.0
    };
    Ok(AttenuationReport {
        original_peak: orig,
        projected_peak: proj,
        reduction_percent,
        original_peak_element: orig_at,
        projected_peak_element: proj_at,
        nonpositive_peak,
        abs_difference: field
            .values
            .iter()
            .zip(&projected.values)
            .map(|(a, b)| (a - b).abs())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_graph::{build_incidence, structured_hex_grid};

    fn bar() -> Incidence {
        let (coords, conn) = structured_hex_grid([2, 1, 1], [1.0; 3]);
        build_incidence(&conn, coords.len()).unwrap()
    }

    #[test]
    fn bar_round_trip() {
        let inc = bar();
        let fe = Field::scalar(vec![4.0, 0.0], Unit::Megapascal);
        let fnode = element_to_node(&fe, &inc).unwrap();
        for n in 0..12 {
            let expect = match inc.elements_of(n) {
                [_, _] => 2.0,
                [0] => 4.0,
                _ => 0.0,
            };
            assert_eq!(fnode.values[n], expect);
        }
        let back = node_to_element(&fnode, &inc).unwrap();
        assert_eq!(back.values, vec![3.0, 1.0]);
        let rep = attenuation_report(&fe, &inc).unwrap();
        assert_eq!((rep.original_peak, rep.projected_peak), (4.0, 3.0));
        assert_eq!(rep.reduction_percent, 25.0);
        assert_eq!(rep.abs_difference, vec![1.0, 1.0]);
    }

    #[test]
    fn constants_are_preserved() {
        let inc = bar();
        let c = Field::scalar(vec![2.5, 2.5], Unit::Dimensionless);
        assert_eq!(element_to_node(&c, &inc).unwrap().values, vec![2.5; 12]);
        assert_eq!(element_node_element(&c, &inc).unwrap().values, vec![2.5; 2]);
        let rep = attenuation_report(&c, &inc).unwrap();
        assert_eq!(rep.reduction_percent, 0.0);
        let zeros = Field::scalar(vec![0.0; 12], Unit::Dimensionless);
        assert_eq!(node_to_element(&zeros, &inc).unwrap().values, vec![0.0; 2]);
    }

    #[test]
    fn single_hex_spreads_value() {
        let (_, conn) = structured_hex_grid([1, 1, 1], [1.0; 3]);
        let inc = build_incidence(&conn, 8).unwrap();
        let f = element_to_node(&Field::scalar(vec![7.0], Unit::Megapascal), &inc).unwrap();
        assert_eq!(f.values, vec![7.0; 8]);
    }

    #[test]
    fn zero_peak_is_flagged() {
        let inc = bar();
        let rep = attenuation_report(&Field::scalar(vec![0.0, -1.0], Unit::Megapascal), &inc).unwrap();
        assert!(rep.nonpositive_peak);
        assert_eq!(rep.reduction_percent, 0.0);
    }

    #[test]
    fn orphan_and_shape_errors() {
        let (_, conn) = structured_hex_grid([1, 1, 1], [1.0; 3]);
        let inc = build_incidence(&conn, 9).unwrap();
        assert!(matches!(
            element_to_node(&Field::scalar(vec![1.0], Unit::Megapascal), &inc),
            Err(Error::OrphanNode { node: 8 })
        ));
        assert!(node_to_element(&Field::scalar(vec![1.0; 3], Unit::Megapascal), &inc).is_err());
        assert!(aggregate_node_hidden(&[0.0; 5], 2, &inc).is_err());
    }

    #[test]
    fn hidden_aggregation_matches_scalar_map_and_permutes() {
        let inc = bar();
        let h: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let agg = aggregate_node_hidden(&h, 1, &inc).unwrap();
        let scalar = node_to_element(&Field::scalar(h.clone(), Unit::Normalized), &inc).unwrap();
        assert_eq!(agg, scalar.values);

        // swap the two elements: rows of the output swap with them
        let (coords, conn) = structured_hex_grid([2, 1, 1], [1.0; 3]);
        let swapped = build_incidence(&[conn[1], conn[0]], coords.len()).unwrap();
        let agg2 = aggregate_node_hidden(&h, 1, &swapped).unwrap();
        assert_eq!(agg2, vec![agg[1], agg[0]]);
    }

    #[test]
    fn multichannel_linearity() {
        let inc = bar();
        let f = Field::new(vec![1.0, -2.0, 3.0, 5.0], 2, Unit::Normalized);
        let g = Field::new(vec![0.5, 0.25, -1.0, 4.0], 2, Unit::Normalized);
        let comb = Field::new(
            f.values.iter().zip(&g.values).map(|(a, b)| 2.0 * a - 3.0 * b).collect(),
            2,
            Unit::Normalized,
        );
        let pf = element_node_element(&f, &inc).unwrap();
        let pg = element_node_element(&g, &inc).unwrap();
        let pc = element_node_element(&comb, &inc).unwrap();
        for i in 0..4 {
            assert!((pc.values[i] - (2.0 * pf.values[i] - 3.0 * pg.values[i])).abs() < 1e-12);
        }
    }
}
