//! Pre-training subgraph sampling and aggregator normalization.
//!
//! Sampler runs count how often each node (`C_i`) and each edge (`C_ij`)
//! lands in a sampled subgraph. The aggregation matrix holds
//! `γ_ij = C_i / C_ij` on the support of `Ã`, which makes neighbour sums
//! restricted to a sampled subgraph unbiased for the full-graph sum.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::DenseMatrix;
use crate::rng::{self, Stream};

/// Nodes of one sampled subgraph, in draw order, with the parent-graph edges
/// whose endpoints were both drawn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphSample {
    pub nodes: Vec<usize>,
    pub induced_edges: Vec<(usize, usize)>,
}

impl SubgraphSample {
    pub fn membership(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &v in &self.nodes {
            mask[v] = true;
        }
        mask
    }
}

/// Uniform node sampler: `budget` distinct nodes without replacement.
pub fn sample_node_subgraph(
    g: &Graph,
    budget: usize,
    rng: &mut impl rand::Rng,
) -> Result<SubgraphSample> {
    let n = g.node_count();
    if budget == 0 || budget > n {
        return Err(Error::BudgetOutOfRange { budget, nodes: n });
    }
    let nodes = index::sample(rng, n, budget).into_vec();
    let mut mask = vec![false; n];
    for &v in &nodes {
        mask[v] = true;
    }
    let induced_edges = g
        .edges()
        .iter()
        .filter(|e| mask[e.i] && mask[e.j])
        .map(|e| (e.i, e.j))
        .collect();
    Ok(SubgraphSample {
        nodes,
        induced_edges,
    })
}

/// `runs` independent samples; run `r` draws from the stream derived from
/// `(seed, r)`, so any subset of runs can be regenerated on its own.
pub fn sample_runs(g: &Graph, budget: usize, runs: usize, seed: u64) -> Result<Vec<SubgraphSample>> {
    (0..runs)
        .map(|r| {
            let mut rng = rng::derived(seed, Stream::Sampler, r as u64);
            sample_node_subgraph(g, budget, &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCount {
    pub i: usize,
    pub j: usize,
    pub count: u64,
}

/// Appearance counts over sampler runs. `edge_counts` lists one synthetic
/// self-loop `(i, i)` per node (with `C_ii = C_i`) followed by the graph's
/// edges in graph order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationStats {
    pub runs: u64,
    pub node_counts: Vec<u64>,
    pub edge_counts: Vec<EdgeCount>,
}

impl AggregationStats {
    pub fn empty(g: &Graph) -> Self {
        let n = g.node_count();
        let mut edge_counts: Vec<EdgeCount> =
            (0..n).map(|i| EdgeCount { i, j: i, count: 0 }).collect();
        edge_counts.extend(g.edges().iter().map(|e| EdgeCount {
            i: e.i,
            j: e.j,
            count: 0,
        }));
        AggregationStats {
            runs: 0,
            node_counts: vec![0; n],
            edge_counts,
        }
    }

    /// Adds the given samples to the counts.
    pub fn extend(&mut self, g: &Graph, samples: &[SubgraphSample]) -> Result<()> {
        let n = g.node_count();
        if self.node_counts.len() != n || self.edge_counts.len() != n + g.edges().len() {
            return Err(Error::invalid("statistics were accumulated on a different graph"));
        }
        for s in samples {
            let mut seen = vec![false; n];
            for &v in &s.nodes {
                if v >= n {
                    return Err(Error::ForeignSample {
                        what: format!("node {v}"),
                        nodes: n,
                    });
                }
                if seen[v] {
                    return Err(Error::invalid(format!("sample lists node {v} twice")));
                }
                seen[v] = true;
            }
            for &(i, j) in &s.induced_edges {
                let k = g
                    .edge_index(i, j)
                    .filter(|_| seen[i] && seen[j])
                    .ok_or_else(|| Error::ForeignSample {
                        what: format!("edge ({i}, {j})"),
                        nodes: n,
                    })?;
                self.edge_counts[n + k].count += 1;
            }
            for &v in &s.nodes {
                self.node_counts[v] += 1;
                self.edge_counts[v].count += 1;
            }
            self.runs += 1;
        }
        Ok(())
    }

    /// Number of samples in which both endpoints of graph edge `k` appeared.
    pub fn edge_count(&self, k: usize) -> u64 {
        self.edge_counts[self.node_counts.len() + k].count
    }
}

pub fn accumulate_counts(g: &Graph, samples: &[SubgraphSample]) -> Result<AggregationStats> {
    let mut stats = AggregationStats::empty(g);
    stats.extend(g, samples)?;
    Ok(stats)
}

/// The `N × N` aggregation matrix Γ. Row-wise normalized, so generally
/// asymmetric; zero off the support of `Ã`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationMatrix {
    gamma: DenseMatrix,
}

impl AggregationMatrix {
    /// All ones on the support of `Ã` (reduces aggregated diffusion to plain
    /// diffusion).
    pub fn ones_on_support(g: &Graph) -> Self {
        let n = g.node_count();
        let mut gamma = DenseMatrix::identity(n);
        for e in g.edges() {
            gamma.set(e.i, e.j, 1.0);
            gamma.set(e.j, e.i, 1.0);
        }
        AggregationMatrix { gamma }
    }

    /// Wraps an explicit matrix; entries must be finite and nonnegative.
    pub fn from_matrix(gamma: DenseMatrix) -> Result<Self> {
        if !gamma.is_square() {
            return Err(Error::shape("aggregation matrix", gamma.shape(), gamma.shape()));
        }
        if gamma.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("aggregation matrix has negative entries"));
        }
        Ok(AggregationMatrix { gamma })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.gamma
    }

    /// `Â ⊙ Γ`, the propagation operator of the aggregated diffusion rule.
    pub fn operator(&self, a_hat: &DenseMatrix) -> Result<DenseMatrix> {
        a_hat.hadamard(&self.gamma)
    }
}

/// `γ_ij = C_i / max(C_ij, 1)` on every edge, `γ_ii = 1`.
pub fn aggregation_matrix(stats: &AggregationStats, g: &Graph) -> Result<AggregationMatrix> {
    if stats.runs == 0 {
        return Err(Error::EmptyStats);
    }
    let n = g.node_count();
    if stats.node_counts.len() != n || stats.edge_counts.len() != n + g.edges().len() {
        return Err(Error::invalid("statistics do not belong to this graph"));
    }
    let mut gamma = DenseMatrix::identity(n);
    for (k, e) in g.edges().iter().enumerate() {
        let c_ij = stats.edge_count(k).max(1) as f64;
        gamma.set(e.i, e.j, stats.node_counts[e.i] as f64 / c_ij);
        gamma.set(e.j, e.i, stats.node_counts[e.j] as f64 / c_ij);
    }
    Ok(AggregationMatrix { gamma })
}

/// Sampler runs plus the resulting statistics and Γ.
pub fn pretrain_aggregation(
    g: &Graph,
    budget: usize,
    runs: usize,
    seed: u64,
) -> Result<(AggregationStats, AggregationMatrix)> {
    let samples = sample_runs(g, budget, runs, seed)?;
    let stats = accumulate_counts(g, &samples)?;
    let gamma = aggregation_matrix(&stats, g)?;
    Ok((stats, gamma))
}

/// Budget used to estimate Γ for full-batch training when none is given.
pub const FULL_BATCH_BUDGET: usize = 1000;

/// Default sampler budget: the batch budget in sampled mode, otherwise
/// `min(FULL_BATCH_BUDGET, N)`.
pub fn default_budget(n: usize, batch_budget: Option<usize>) -> usize {
    batch_budget.unwrap_or(FULL_BATCH_BUDGET).min(n).max(1)
}

/// Training batches: one batch of all nodes for full-batch mode, otherwise
/// each sample's node set in order, truncated to `batch_budget` nodes
/// (keeping draw order). Smaller samples are not padded.
pub fn minibatches(
    samples: &[SubgraphSample],
    batch_budget: Option<usize>,
    n: usize,
) -> Vec<Vec<usize>> {
    match batch_budget {
        None => vec![(0..n).collect()],
        Some(b) => samples
            .iter()
            .map(|s| s.nodes.iter().copied().take(b.min(n)).collect())
            .collect(),
    }
}

/// `(M H)` restricted to one sample: row `i` of the result sums
/// `M_ij H_j` over sampled `j`, for sampled `i`; other rows are zero.
pub fn restricted_aggregation(
    operator: &DenseMatrix,
    sample: &SubgraphSample,
    h: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = operator.rows();
    if !operator.is_square() || h.rows() != n {
        return Err(Error::shape("restricted_aggregation", operator.shape(), h.shape()));
    }
    let f = h.cols();
    let mut out = DenseMatrix::zeros(n, f);
    for &i in &sample.nodes {
        let m_row = operator.row(i);
        let row = out.row_mut(i);
        for &j in &sample.nodes {
            let m = m_row[j];
            if m == 0.0 {
                continue;
            }
            for (o, &v) in row.iter_mut().zip(h.row(j)) {
                *o += m * v;
            }
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of the full aggregation from subgraph aggregations:
/// row `i` averages the restricted aggregation over the samples containing
/// `i`. With `operator = Â ⊙ Γ` this estimates `Â H`. Rows of nodes never
/// sampled are zero.
pub fn subgraph_estimate(
    operator: &DenseMatrix,
    samples: &[SubgraphSample],
    h: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = operator.rows();
    let mut sum = DenseMatrix::zeros(n, h.cols());
    let mut hits = vec![0u64; n];
    for s in samples {
        let part = restricted_aggregation(operator, s, h)?;
        sum.add_scaled(1.0, &part)?;
        for &v in &s.nodes {
            hits[v] += 1;
        }
    }
    for (i, &c) in hits.iter().enumerate() {
        if c > 0 {
            let inv = 1.0 / c as f64;
            for v in sum.row_mut(i) {
                *v *= inv;
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn path(n: usize) -> Graph {
        Graph::new(
            n,
            (0..n - 1).map(|i| Edge { i, j: i + 1, weight: 1.0 }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exhaustive_and_single_samples() {
        let g = path(5);
        let mut rng = rng::seeded(1);
        let s = sample_node_subgraph(&g, 5, &mut rng).unwrap();
        let mut nodes = s.nodes.clone();
        nodes.sort_unstable();
        assert_eq!(nodes, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.induced_edges.len(), 4);
        let s = sample_node_subgraph(&g, 1, &mut rng).unwrap();
        assert_eq!(s.nodes.len(), 1);
        assert!(s.induced_edges.is_empty());
        assert!(matches!(
            sample_node_subgraph(&g, 0, &mut rng),
            Err(Error::BudgetOutOfRange { .. })
        ));
        assert!(sample_node_subgraph(&g, 6, &mut rng).is_err());
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let g = path(5);
        let a = sample_node_subgraph(&g, 3, &mut rng::seeded(42)).unwrap();
        let b = sample_node_subgraph(&g, 3, &mut rng::seeded(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_runs(&g, 3, 10, 9).unwrap(), sample_runs(&g, 3, 10, 9).unwrap());
    }

    #[test]
    fn exhaustive_counts() {
        let g = path(4);
        let samples = sample_runs(&g, 4, 7, 0).unwrap();
        let stats = accumulate_counts(&g, &samples).unwrap();
        assert_eq!(stats.runs, 7);
        assert!(stats.node_counts.iter().all(|&c| c == 7));
        assert!(stats.edge_counts.iter().all(|e| e.count == 7));
        let gamma = aggregation_matrix(&stats, &g).unwrap();
        let expected = AggregationMatrix::ones_on_support(&g);
        assert_eq!(gamma, expected);
    }

    #[test]
    fn zero_runs() {
        let g = path(4);
        let stats = accumulate_counts(&g, &[]).unwrap();
        assert_eq!(stats.runs, 0);
        assert!(stats.node_counts.iter().all(|&c| c == 0));
        assert!(stats.edge_counts.iter().all(|e| e.count == 0));
        assert!(matches!(aggregation_matrix(&stats, &g), Err(Error::EmptyStats)));
    }

    #[test]
    fn hand_tally_on_path() {
        // path 0-1-2-3
        let g = path(4);
        let samples = vec![
            SubgraphSample { nodes: vec![0, 1], induced_edges: vec![(0, 1)] },
            SubgraphSample { nodes: vec![1, 2, 3], induced_edges: vec![(1, 2), (2, 3)] },
            SubgraphSample { nodes: vec![0, 2], induced_edges: vec![] },
        ];
        let stats = accumulate_counts(&g, &samples).unwrap();
        assert_eq!(stats.node_counts, vec![2, 2, 2, 1]);
        // edges in order (0,1), (1,2), (2,3)
        assert_eq!((0..3).map(|k| stats.edge_count(k)).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert_eq!(stats.edge_counts[..4].iter().map(|e| e.count).collect::<Vec<_>>(), vec![2, 2, 2, 1]);
        let gamma = aggregation_matrix(&stats, &g).unwrap();
        assert_eq!(gamma.matrix().get(0, 1), 2.0);
        assert_eq!(gamma.matrix().get(2, 3), 2.0);
        assert_eq!(gamma.matrix().get(3, 2), 1.0);
        assert_eq!(gamma.matrix().get(0, 2), 0.0);
        for i in 0..4 {
            assert_eq!(gamma.matrix().get(i, i), 1.0);
        }
    }

    #[test]
    fn ratio_example() {
        let g = Graph::new(2, vec![Edge { i: 0, j: 1, weight: 1.0 }]).unwrap();
        let mut stats = AggregationStats::empty(&g);
        stats.runs = 10;
        stats.node_counts = vec![10, 5];
        stats.edge_counts[2].count = 5;
        let gamma = aggregation_matrix(&stats, &g).unwrap();
        assert_eq!(gamma.matrix().get(0, 1), 2.0);
        assert_eq!(gamma.matrix().get(1, 0), 1.0);
    }

    #[test]
    fn never_sampled_edge_uses_unit_denominator() {
        let g = Graph::new(2, vec![Edge { i: 0, j: 1, weight: 1.0 }]).unwrap();
        let samples = vec![
            SubgraphSample { nodes: vec![0], induced_edges: vec![] },
            SubgraphSample { nodes: vec![0], induced_edges: vec![] },
            SubgraphSample { nodes: vec![1], induced_edges: vec![] },
        ];
        let stats = accumulate_counts(&g, &samples).unwrap();
        let gamma = aggregation_matrix(&stats, &g).unwrap();
        assert_eq!(gamma.matrix().get(0, 1), 2.0);
        assert_eq!(gamma.matrix().get(1, 0), 1.0);
    }

    #[test]
    fn foreign_samples_are_rejected() {
        let g = path(3);
        let bad = SubgraphSample { nodes: vec![0, 5], induced_edges: vec![] };
        assert!(matches!(accumulate_counts(&g, &[bad]), Err(Error::ForeignSample { .. })));
        let bad = SubgraphSample { nodes: vec![0, 2], induced_edges: vec![(0, 2)] };
        assert!(matches!(accumulate_counts(&g, &[bad]), Err(Error::ForeignSample { .. })));
    }

    #[test]
    fn batches() {
        let g = path(6);
        let samples = sample_runs(&g, 4, 3, 1).unwrap();
        assert_eq!(minibatches(&samples, None, 6), vec![(0..6).collect::<Vec<_>>()]);
        let b = minibatches(&samples, Some(4), 6);
        assert_eq!(b.len(), 3);
        for (batch, s) in b.iter().zip(&samples) {
            assert_eq!(batch, &s.nodes);
        }
        let full = sample_runs(&g, 6, 2, 1).unwrap();
        for batch in minibatches(&full, Some(6), 6) {
            let mut sorted = batch.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        }
        let truncated = minibatches(&samples, Some(2), 6);
        assert!(truncated.iter().zip(&samples).all(|(b, s)| b[..] == s.nodes[..2]));
    }

    #[test]
    fn restricted_aggregation_with_all_nodes_is_full_product() {
        let g = path(4);
        let op = crate::graph::normalize_adjacency(&crate::graph::add_self_loops(&g)).unwrap();
        let h = DenseMatrix::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let all = SubgraphSample { nodes: vec![0, 1, 2, 3], induced_edges: vec![] };
        assert_eq!(restricted_aggregation(&op, &all, &h).unwrap(), op.matmul(&h).unwrap());
    }

    #[test]
    fn default_budget_examples() {
        assert_eq!(default_budget(300, None), 300);
        assert_eq!(default_budget(5000, None), 1000);
        assert_eq!(default_budget(300, Some(50)), 50);
        assert_eq!(default_budget(30, Some(50)), 30);
    }
}
