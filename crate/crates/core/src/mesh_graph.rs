//! Node graph, element graph and node/element incidence of a hexahedral
//! mesh, plus the rescaled Laplacians the recurrent cells filter with.
//!
//! Corner numbering follows the usual eight-node brick convention: corners
//! 0-3 walk one face counter-clockwise, 4-7 walk the opposite face in the
//! same order, so corner `i + 4` sits across from corner `i`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// The 12 geometric edges of a hexahedron as corner pairs.
pub const HEX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// The six quadrilateral faces of a hexahedron as corner quadruples.
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 7, 6, 5],
    [0, 4, 5, 1],
    [1, 5, 6, 2],
    [2, 6, 7, 3],
    [3, 7, 4, 0],
];

pub type Hex = [usize; 8];

/// Checks index range and distinct corners for every element.
pub fn validate_connectivity(connectivity: &[Hex], n_nodes: usize) -> Result<()> {
    for (e, hex) in connectivity.iter().enumerate() {
        for (a, &n) in hex.iter().enumerate() {
            if n >= n_nodes {
                return Err(Error::IndexOutOfRange {
                    element: e,
                    index: n,
                    n_nodes,
                });
            }
            if hex[..a].contains(&n) {
                return Err(Error::RepeatedNode { element: e, node: n });
            }
        }
    }
    Ok(())
}

/// Structured brick mesh with `dims = [nx, ny, nz]` elements along x, y, z.
///
/// Node `(i, j, k)` has index `i + (nx + 1) * (j + (ny + 1) * k)`; elements
/// are numbered the same way over `(nx, ny, nz)`.
pub fn structured_hex_grid(dims: [usize; 3], spacing: [f64; 3]) -> (Vec<[f64; 3]>, Vec<Hex>) {
    let [nx, ny, nz] = dims;
    let node = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([
                    i as f64 * spacing[0],
                    j as f64 * spacing[1],
                    k as f64 * spacing[2],
                ]);
            }
        }
    }
    let mut connectivity = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                connectivity.push([
                    node(i, j, k),
                    node(i + 1, j, k),
                    node(i + 1, j + 1, k),
                    node(i, j + 1, k),
                    node(i, j, k + 1),
                    node(i + 1, j, k + 1),
                    node(i + 1, j + 1, k + 1),
                    node(i, j + 1, k + 1),
                ]);
            }
        }
    }
    (coords, connectivity)
}

/// Undirected simple graph in adjacency (CSR) form; both directions of
/// every edge are stored and neighbour lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds from undirected pairs. Self-loops are dropped and duplicates
    /// merged.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut directed: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .flat_map(|(a, b)| [(a, b), (b, a)])
            .collect();
        directed.sort_unstable();
        directed.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(a, _) in &directed {
            offsets[a + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            neighbors: directed.into_iter().map(|(_, b)| b).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.degree(i)).collect()
    }

    pub fn directed_edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`, in sorted order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Disjoint union, relabelling each graph by the running vertex count.
    pub fn disjoint_union(graphs: &[&Graph]) -> Self {
        let n = graphs.iter().map(|g| g.len()).sum();
        let mut pairs = Vec::new();
        let mut base = 0;
        for g in graphs {
            pairs.extend(g.edges().into_iter().map(|(a, b)| (a + base, b + base)));
            base += g.len();
        }
        Self::from_pairs(n, pairs)
    }

    /// Induced subgraph on the contiguous vertex range `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let pairs = (start..start + len).flat_map(|i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j >= start && j < start + len)
                .map(move |&j| (i - start, j - start))
        });
        Self::from_pairs(len, pairs.collect::<Vec<_>>())
    }

    /// Histogram of vertex degrees: entry `d` counts vertices of degree `d`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let max = (0..self.len()).map(|i| self.degree(i)).max().unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for i in 0..self.len() {
            hist[self.degree(i)] += 1;
        }
        hist
    }
}

/// Node graph from the 12 corner-pair edges of every element.
pub fn build_node_graph(connectivity: &[Hex], n_nodes: usize) -> Result<Graph> {
    validate_connectivity(connectivity, n_nodes)?;
    let pairs = connectivity
        .iter()
        .flat_map(|hex| HEX_EDGES.iter().map(move |&(a, b)| (hex[a], hex[b])));
    Ok(Graph::from_pairs(n_nodes, pairs.collect::<Vec<_>>()))
}

/// Element graph: two elements are adjacent when they share a four-node
/// face. Faces claimed by more than two elements are rejected.
pub fn build_element_graph(connectivity: &[Hex], n_nodes: usize) -> Result<Graph> {
    validate_connectivity(connectivity, n_nodes)?;
    let mut keyed: Vec<([usize; 4], usize)> = Vec::with_capacity(connectivity.len() * 6);
    for (e, hex) in connectivity.iter().enumerate() {
        for face in &HEX_FACES {
            let mut key = face.map(|c| hex[c]);
            key.sort_unstable();
            keyed.push((key, e));
        }
    }
    keyed.sort_unstable();
    let mut pairs = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == keyed[start].0 {
            end += 1;
        }
        match end - start {
            1 => {}
            2 => pairs.push((keyed[start].1, keyed[start + 1].1)),
            count => {
                return Err(Error::NonManifold {
                    face: keyed[start].0,
                    count,
                })
            }
        }
        start = end;
    }
    Ok(Graph::from_pairs(connectivity.len(), pairs))
}

/// Element-to-corner and node-to-incident-element maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    element_nodes: Vec<Hex>,
    node_offsets: Vec<usize>,
    node_elements: Vec<usize>,
}

impl Incidence {
    pub fn n_nodes(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn n_elems(&self) -> usize {
        self.element_nodes.len()
    }

    /// `V(e)`: the eight corners of element `e`, in connectivity order.
    pub fn nodes_of(&self, e: usize) -> &Hex {
        &self.element_nodes[e]
    }

    /// `E(n)`: elements incident to node `n`, ascending.
    pub fn elements_of(&self, n: usize) -> &[usize] {
        &self.node_elements[self.node_offsets[n]..self.node_offsets[n + 1]]
    }

    /// `E × N` operator averaging the eight corner values of each element.
    pub fn node_to_element_operator(&self) -> CsrMatrix {
        let triplets = self
            .element_nodes
            .iter()
            .enumerate()
            .flat_map(|(e, hex)| hex.iter().map(move |&n| (e, n, 0.125)))
            .collect();
        CsrMatrix::from_triplets(self.n_elems(), self.n_nodes(), triplets)
    }

    /// `N × E` operator averaging the values of the incident elements.
    pub fn element_to_node_operator(&self) -> Result<CsrMatrix> {
        let mut triplets = Vec::with_capacity(self.node_elements.len());
        for n in 0..self.n_nodes() {
            let elems = self.elements_of(n);
            if elems.is_empty() {
                return Err(Error::OrphanNode { node: n });
            }
            let w = 1.0 / elems.len() as f64;
            triplets.extend(elems.iter().map(|&e| (n, e, w)));
        }
        Ok(CsrMatrix::from_triplets(self.n_nodes(), self.n_elems(), triplets))
    }

    pub fn merge(parts: &[&Incidence]) -> Self {
        let mut element_nodes = Vec::new();
        let mut base = 0;
        for inc in parts {
            element_nodes.extend(inc.element_nodes.iter().map(|h| h.map(|n| n + base)));
            base += inc.n_nodes();
        }
        invert(element_nodes, base)
    }
}

fn invert(element_nodes: Vec<Hex>, n_nodes: usize) -> Incidence {
    let mut node_offsets = vec![0usize; n_nodes + 1];
    for hex in &element_nodes {
        for &n in hex {
            node_offsets[n + 1] += 1;
        }
    }
    for i in 0..n_nodes {
        node_offsets[i + 1] += node_offsets[i];
    }
    let mut cursor = node_offsets.clone();
    let mut node_elements = vec![0; node_offsets[n_nodes]];
    // ascending element order falls out of the outer loop
    for (e, hex) in element_nodes.iter().enumerate() {
        for &n in hex {
            node_elements[cursor[n]] = e;
            cursor[n] += 1;
        }
    }
    Incidence {
        element_nodes,
        node_offsets,
        node_elements,
    }
}

pub fn build_incidence(connectivity: &[Hex], n_nodes: usize) -> Result<Incidence> {
    validate_connectivity(connectivity, n_nodes)?;
    Ok(invert(connectivity.to_vec(), n_nodes))
}

/// How the largest Laplacian eigenvalue is obtained for rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMax {
    /// Spectral upper bound of the normalized Laplacian.
    #[default]
    Two,
    PowerIteration,
}

/// `L = I - D^-1/2 A D^-1/2`; isolated vertices get an identity row.
pub fn normalized_laplacian(graph: &Graph) -> CsrMatrix {
    let inv_sqrt: Vec<f64> = graph
        .degrees()
        .into_iter()
        .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut triplets = Vec::with_capacity(graph.directed_edge_count() + graph.len());
    for i in 0..graph.len() {
        triplets.push((i, i, 1.0));
        for &j in graph.neighbors(i) {
            triplets.push((i, j, -inv_sqrt[i] * inv_sqrt[j]));
        }
    }
    CsrMatrix::from_triplets(graph.len(), graph.len(), triplets)
}

/// `D - A`.
pub fn combinatorial_laplacian(graph: &Graph) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(graph.directed_edge_count() + graph.len());
    for i in 0..graph.len() {
        triplets.push((i, i, graph.degree(i) as f64));
        triplets.extend(graph.neighbors(i).iter().map(|&j| (i, j, -1.0)));
    }
    CsrMatrix::from_triplets(graph.len(), graph.len(), triplets)
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// positive semi-definite matrix.
pub fn estimate_lambda_max(m: &CsrMatrix) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let w = m.matmul_dense(&v, 1);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w;
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Rescaled Laplacian `2 L / λ_max - I` used as the Chebyshev argument.
pub fn scaled_laplacian(graph: &Graph, mode: LambdaMax) -> CsrMatrix {
    let lap = normalized_laplacian(graph);
    let lambda = match mode {
        LambdaMax::Two => 2.0,
        LambdaMax::PowerIteration => estimate_lambda_max(&lap).max(1e-12),
    };
    let triplets = lap
        .triplets()
        .map(|(r, c, v)| {
            let mut v = 2.0 * v / lambda;
            if r == c {
                v -= 1.0;
            }
            (r, c, v)
        })
        .collect();
    CsrMatrix::from_triplets(graph.len(), graph.len(), triplets)
}

/// Everything the surrogate needs about one mesh.
#[derive(Debug, Clone)]
pub struct DualGraph {
    pub node_graph: Graph,
    pub element_graph: Graph,
    pub incidence: Incidence,
    pub node_laplacian: Arc<CsrMatrix>,
    pub element_laplacian: Arc<CsrMatrix>,
}

impl DualGraph {
    pub fn build(connectivity: &[Hex], n_nodes: usize, mode: LambdaMax) -> Result<Self> {
        let node_graph = build_node_graph(connectivity, n_nodes)?;
        let element_graph = build_element_graph(connectivity, n_nodes)?;
        let incidence = build_incidence(connectivity, n_nodes)?;
        Ok(Self {
            node_laplacian: Arc::new(scaled_laplacian(&node_graph, mode)),
            element_laplacian: Arc::new(scaled_laplacian(&element_graph, mode)),
            node_graph,
            element_graph,
            incidence,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_graph.len()
    }

    pub fn n_elems(&self) -> usize {
        self.element_graph.len()
    }
}

/// Several cases merged into one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct BatchedGraph {
    pub graph: DualGraph,
    /// Cumulative node counts, `len = cases + 1`.
    pub node_offsets: Vec<usize>,
    /// Cumulative element counts, `len = cases + 1`.
    pub elem_offsets: Vec<usize>,
}

impl BatchedGraph {
    pub fn n_cases(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn node_count(&self, case: usize) -> usize {
        self.node_offsets[case + 1] - self.node_offsets[case]
    }

    pub fn elem_count(&self, case: usize) -> usize {
        self.elem_offsets[case + 1] - self.elem_offsets[case]
    }

    /// Recovers the graph of one case.
    pub fn extract(&self, case: usize) -> DualGraph {
        let (n0, nn) = (self.node_offsets[case], self.node_count(case));
        let (e0, ne) = (self.elem_offsets[case], self.elem_count(case));
        let element_nodes = (e0..e0 + ne)
            .map(|e| self.graph.incidence.nodes_of(e).map(|n| n - n0))
            .collect();
        let slice_sparse = |m: &CsrMatrix, start: usize, len: usize| {
            let triplets = (start..start + len)
                .flat_map(|r| m.row(r).map(move |(c, v)| (r - start, c - start, v)))
                .collect();
            CsrMatrix::from_triplets(len, len, triplets)
        };
        DualGraph {
            node_graph: self.graph.node_graph.slice(n0, nn),
            element_graph: self.graph.element_graph.slice(e0, ne),
            incidence: invert(element_nodes, nn),
            node_laplacian: Arc::new(slice_sparse(&self.graph.node_laplacian, n0, nn)),
            element_laplacian: Arc::new(slice_sparse(&self.graph.element_laplacian, e0, ne)),
        }
    }
}

fn cumulative(counts: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for c in counts {
        out.push(out.last().unwrap() + c);
    }
    out
}

/// Concatenates graphs with per-case index offsets; no cross-case edges.
pub fn merge_batch(cases: &[&DualGraph]) -> Result<BatchedGraph> {
    if cases.is_empty() {
        return Err(Error::InvalidInput("cannot merge an empty batch".into()));
    }
    let node_graphs: Vec<&Graph> = cases.iter().map(|c| &c.node_graph).collect();
    let elem_graphs: Vec<&Graph> = cases.iter().map(|c| &c.element_graph).collect();
    let incidences: Vec<&Incidence> = cases.iter().map(|c| &c.incidence).collect();
    let node_laps: Vec<&CsrMatrix> = cases.iter().map(|c| c.node_laplacian.as_ref()).collect();
    let elem_laps: Vec<&CsrMatrix> = cases.iter().map(|c| c.element_laplacian.as_ref()).collect();
    Ok(BatchedGraph {
        graph: DualGraph {
            node_graph: Graph::disjoint_union(&node_graphs),
            element_graph: Graph::disjoint_union(&elem_graphs),
            incidence: Incidence::merge(&incidences),
            node_laplacian: Arc::new(CsrMatrix::block_diag(&node_laps)),
            element_laplacian: Arc::new(CsrMatrix::block_diag(&elem_laps)),
        },
        node_offsets: cumulative(cases.iter().map(|c| c.n_nodes())),
        elem_offsets: cumulative(cases.iter().map(|c| c.n_elems())),
    })
}
