//! Core domain types: attributed graphs, matching instances, assignments and
//! training samples.
//!
//! Pair tables follow one fixed vectorization convention throughout the
//! project: the node pair `(i, k)` of a `|V1| x |V2|` table lives at flat
//! index `k * |V1| + i` (column-wise), and edge pairs are vectorized the same
//! way over the two edge-list orders.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A directed attributed graph: `n` vertices, an ordered list of arcs, and a
/// fixed-dimension descriptor vector per vertex and per arc.
///
/// Undirected source geometry (e.g. a triangulation) is expected to be
/// expanded into two opposing arcs before construction; the matching
/// constraints distinguish head and tail vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    vertex_descriptors: Vec<Vec<f64>>,
    edge_descriptors: Vec<Vec<f64>>,
}

impl AttributedGraph {
    /// Validates and builds a graph. Arcs must reference valid vertices,
    /// contain no self-loops and no duplicates; descriptor dimensions must be
    /// uniform and finite.
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        vertex_descriptors: Vec<Vec<f64>>,
        edge_descriptors: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(tail, head) in &edges {
            if tail >= n || head >= n {
                return Err(Error::ConstraintViolation(format!(
                    "arc ({tail}, {head}) references a vertex outside 0..{n}"
                )));
            }
            if tail == head {
                return Err(Error::ConstraintViolation(format!(
                    "self-loop at vertex {tail}"
                )));
            }
            if !seen.insert((tail, head)) {
                return Err(Error::ConstraintViolation(format!(
                    "duplicate arc ({tail}, {head})"
                )));
            }
        }
        if vertex_descriptors.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} vertex descriptors for {} vertices",
                vertex_descriptors.len(),
                n
            )));
        }
        if edge_descriptors.len() != edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} edge descriptors for {} arcs",
                edge_descriptors.len(),
                edges.len()
            )));
        }
        check_uniform(&vertex_descriptors, "vertex descriptors")?;
        check_uniform(&edge_descriptors, "edge descriptors")?;
        Ok(AttributedGraph {
            n,
            edges,
            vertex_descriptors,
            edge_descriptors,
        })
    }

    /// Graph with empty (zero-dimensional) descriptors, as produced by the
    /// instance file parser.
    pub fn plain(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let m = edges.len();
        Self::new(n, edges, vec![vec![]; n], vec![vec![]; m])
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn vertex_descriptor(&self, i: usize) -> &[f64] {
        &self.vertex_descriptors[i]
    }

    pub fn edge_descriptor(&self, a: usize) -> &[f64] {
        &self.edge_descriptors[a]
    }

    pub fn vertex_descriptor_dim(&self) -> usize {
        self.vertex_descriptors.first().map_or(0, Vec::len)
    }

    pub fn edge_descriptor_dim(&self) -> usize {
        self.edge_descriptors.first().map_or(0, Vec::len)
    }
}

fn check_uniform(descriptors: &[Vec<f64>], what: &str) -> Result<()> {
    if let Some(first) = descriptors.first() {
        let dim = first.len();
        for d in descriptors {
            if d.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "{what} have mixed dimensions {} and {}",
                    dim,
                    d.len()
                )));
            }
            if !d.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("descriptor"));
            }
        }
    }
    Ok(())
}

/// The dimensions shared by every vectorized quantity of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Shape {
    pub fn node_pairs(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn edge_pairs(&self) -> usize {
        self.m1 * self.m2
    }
}

/// A graph pair together with its node-pair similarity vector `sv` and
/// edge-pair similarity vector `se` — the solvers' sole numeric input.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingInstance {
    g1: AttributedGraph,
    g2: AttributedGraph,
    sv: Vec<f64>,
    se: Vec<f64>,
}

impl MatchingInstance {
    pub fn new(
        g1: AttributedGraph,
        g2: AttributedGraph,
        sv: Vec<f64>,
        se: Vec<f64>,
    ) -> Result<Self> {
        let n_pairs = g1.vertex_count() * g2.vertex_count();
        let e_pairs = g1.edge_count() * g2.edge_count();
        if sv.len() != n_pairs {
            return Err(Error::DimensionMismatch(format!(
                "sv has length {}, expected |V1|*|V2| = {}",
                sv.len(),
                n_pairs
            )));
        }
        if se.len() != e_pairs {
            return Err(Error::DimensionMismatch(format!(
                "se has length {}, expected |E1|*|E2| = {}",
                se.len(),
                e_pairs
            )));
        }
        if !sv.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("sv"));
        }
        if !se.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("se"));
        }
        Ok(MatchingInstance { g1, g2, sv, se })
    }

    pub fn g1(&self) -> &AttributedGraph {
        &self.g1
    }

    pub fn g2(&self) -> &AttributedGraph {
        &self.g2
    }

    pub fn n1(&self) -> usize {
        self.g1.vertex_count()
    }

    pub fn n2(&self) -> usize {
        self.g2.vertex_count()
    }

    pub fn shape(&self) -> Shape {
        Shape {
            n1: self.g1.vertex_count(),
            n2: self.g2.vertex_count(),
            m1: self.g1.edge_count(),
            m2: self.g2.edge_count(),
        }
    }

    pub fn sv(&self) -> &[f64] {
        &self.sv
    }

    pub fn se(&self) -> &[f64] {
        &self.se
    }

    /// Node similarities as a `|V1| x |V2|` matrix (shares the vectorization
    /// order, so this is a plain copy).
    pub fn sv_matrix(&self) -> Matrix {
        Matrix::from_vec(self.n1(), self.n2(), self.sv.clone()).expect("sv length is validated")
    }

    /// Edge similarities as a `|E1| x |E2|` matrix.
    pub fn se_matrix(&self) -> Matrix {
        Matrix::from_vec(self.g1.edge_count(), self.g2.edge_count(), self.se.clone())
            .expect("se length is validated")
    }

    /// Flat index of the node pair `(i, k)`.
    #[inline]
    pub fn node_pair_index(&self, i: usize, k: usize) -> usize {
        k * self.n1() + i
    }

    /// Flat index of the edge pair `(a, b)` over the two edge-list orders.
    #[inline]
    pub fn edge_pair_index(&self, a: usize, b: usize) -> usize {
        b * self.g1.edge_count() + a
    }

    /// Same graph pair with replacement similarity vectors.
    pub fn with_similarities(&self, sv: Vec<f64>, se: Vec<f64>) -> Result<Self> {
        MatchingInstance::new(self.g1.clone(), self.g2.clone(), sv, se)
    }
}

/// A binary node-matching vector `v` and edge-matching vector `e` whose
/// matrix views satisfy the row/column `<= 1` matching constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    v: Vec<bool>,
    e: Vec<bool>,
    shape: Shape,
}

impl Assignment {
    pub fn new(v: Vec<bool>, e: Vec<bool>, shape: Shape) -> Result<Self> {
        if v.len() != shape.node_pairs() {
            return Err(Error::DimensionMismatch(format!(
                "v has length {}, expected {}",
                v.len(),
                shape.node_pairs()
            )));
        }
        if e.len() != shape.edge_pairs() {
            return Err(Error::DimensionMismatch(format!(
                "e has length {}, expected {}",
                e.len(),
                shape.edge_pairs()
            )));
        }
        check_matching_constraints(&v, shape.n1, shape.n2, "v")?;
        check_matching_constraints(&e, shape.m1, shape.m2, "e")?;
        Ok(Assignment { v, e, shape })
    }

    pub fn empty(shape: Shape) -> Self {
        Assignment {
            v: vec![false; shape.node_pairs()],
            e: vec![false; shape.edge_pairs()],
            shape,
        }
    }

    pub fn v(&self) -> &[bool] {
        &self.v
    }

    pub fn e(&self) -> &[bool] {
        &self.e
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Matched node pairs `(i, k)` in vectorization order.
    pub fn matched_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n1 = self.shape.n1;
        self.v
            .iter()
            .enumerate()
            .filter(|(_, &bit)| bit)
            .map(move |(idx, _)| (idx % n1, idx / n1))
    }
}

/// Checks that the matrix view of a binary pair vector has all row and
/// column sums `<= 1`.
pub fn check_matching_constraints(bits: &[bool], rows: usize, cols: usize, what: &str) -> Result<()> {
    if bits.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {}, expected {}",
            bits.len(),
            rows * cols
        )));
    }
    let mut row_sums = vec![0usize; rows];
    let mut col_sums = vec![0usize; cols];
    for (idx, &bit) in bits.iter().enumerate() {
        if bit {
            let i = idx % rows;
            let k = idx / rows;
            row_sums[i] += 1;
            col_sums[k] += 1;
            if row_sums[i] > 1 {
                return Err(Error::ConstraintViolation(format!(
                    "{what}: row {i} matched more than once"
                )));
            }
            if col_sums[k] > 1 {
                return Err(Error::ConstraintViolation(format!(
                    "{what}: column {k} matched more than once"
                )));
            }
        }
    }
    Ok(())
}

/// A graph pair with raw descriptors plus the ground-truth node matching,
/// i.e. one element of a supervised training set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    g1: AttributedGraph,
    g2: AttributedGraph,
    v_gt: Vec<bool>,
}

impl TrainSample {
    pub fn new(g1: AttributedGraph, g2: AttributedGraph, v_gt: Vec<bool>) -> Result<Self> {
        check_matching_constraints(&v_gt, g1.vertex_count(), g2.vertex_count(), "v_gt")?;
        Ok(TrainSample { g1, g2, v_gt })
    }

    pub fn g1(&self) -> &AttributedGraph {
        &self.g1
    }

    pub fn g2(&self) -> &AttributedGraph {
        &self.g2
    }

    pub fn v_gt(&self) -> &[bool] {
        &self.v_gt
    }
}
