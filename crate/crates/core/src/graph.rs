//! Undirected weighted graphs and the symmetric normalization used by every
//! propagation rule in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph on `0..n`. Each edge is stored once with `i < j`, sorted
/// lexicographically; self-loops are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n: usize, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.i >= e.j {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) must satisfy i < j",
                    e.i, e.j
                )));
            }
            if e.j >= n {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.i, e.j
                )));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has invalid weight {}",
                    e.i, e.j, e.weight
                )));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = edges.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::invalid(format!(
                "duplicate edge ({}, {})",
                w[0].i, w[0].j
            )));
        }
        Ok(Graph { n, edges })
    }

    pub fn empty(n: usize) -> Self {
        Graph { n, edges: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Position of edge `(i, j)` (either orientation) in [`Graph::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search_by_key(&key, |e| (e.i, e.j)).ok()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a.set(e.i, e.j, e.weight);
            a.set(e.j, e.i, e.weight);
        }
        a
    }
}

/// `Ã = A + I` as a dense matrix.
pub fn add_self_loops(g: &Graph) -> DenseMatrix {
    let mut a = g.to_dense();
    for i in 0..g.node_count() {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    a
}

/// `Â = D̃^{-1/2} Ã D̃^{-1/2}` with `D̃ = diag(Ã·1)`.
///
/// Entry `(i, j)` is `ã_ij / sqrt(d_i d_j)`; the product under the root
/// commutes, so a symmetric input yields an exactly symmetric output.
pub fn normalize_adjacency(a_tilde: &DenseMatrix) -> Result<DenseMatrix> {
    if !a_tilde.is_square() {
        return Err(Error::shape(
            "normalize_adjacency",
            a_tilde.shape(),
            a_tilde.shape(),
        ));
    }
    if a_tilde.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("adjacency has negative entries"));
    }
    if !a_tilde.is_symmetric() {
        return Err(Error::invalid("adjacency is not symmetric"));
    }
    let degrees = a_tilde.row_sums();
    if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree(i));
    }
    let n = a_tilde.rows();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        a_tilde.get(i, j) / (degrees[i] * degrees[j]).sqrt()
    }))
}
