//! Depth and batch-size sweeps, and the tiny gradient-check fixture.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::evaluation::{self, PreparedGraph};
use crate::graph::{add_self_loops, normalize_adjacency, Edge, Graph};
use crate::matrix::DenseMatrix;
use crate::model::{Activation, ModelParams};
use crate::rng::{self, Stream};
use crate::sampler::{self, AggregationMatrix};
use crate::training::{self, BatchMode, GradCheckReport, GraphContext, TrainConfig};

pub const DEFAULT_DEPTHS: [usize; 8] = [2, 4, 8, 12, 16, 20, 24, 30];
pub const DEFAULT_BUDGETS: [usize; 5] = [50, 100, 200, 500, 1000];

/// The plain-GCN reduction of `config`: no skip, no identity mapping, Γ = 1.
pub fn gcn_reduction(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        alpha: 0.0,
        beta: 0.0,
        unit_gamma: true,
        ..config.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthPoint {
    pub layers: usize,
    pub angcn_accuracy: f64,
    pub gcn_accuracy: f64,
}

/// Mean k-fold accuracy of AN-GCN and of its GCN reduction at each depth.
/// The population graph and Γ are built once and shared by all points.
pub fn sweep_depth(bundle: &DatasetBundle, config: &TrainConfig, depths: &[usize]) -> Result<Vec<DepthPoint>> {
    let prepared = evaluation::prepare_graph(bundle, config)?;
    let gcn_config = gcn_reduction(config);
    let gcn_prepared = PreparedGraph {
        population: prepared.population.clone(),
        stats: None,
        context: GraphContext::new(
            prepared.population.graph.clone(),
            AggregationMatrix::ones_on_support(&prepared.population.graph),
        )?,
    };
    depths
        .iter()
        .map(|&layers| {
            let an = TrainConfig { layers, ..config.clone() };
            let gcn = TrainConfig { layers, ..gcn_config.clone() };
            Ok(DepthPoint {
                layers,
                angcn_accuracy: evaluation::cross_validate(bundle, &an, &prepared)?.mean_accuracy(),
                gcn_accuracy: evaluation::cross_validate(bundle, &gcn, &gcn_prepared)?.mean_accuracy(),
            })
        })
        .collect()
}

pub fn depth_csv(points: &[DepthPoint]) -> String {
    let mut out = String::from("layers,angcn_accuracy,gcn_accuracy\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.layers, p.angcn_accuracy, p.gcn_accuracy));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchPoint {
    pub requested: usize,
    pub budget: usize,
    pub accuracy: f64,
}

/// Sampled-batch training at each budget; budgets above N are capped at N.
pub fn sweep_batch(bundle: &DatasetBundle, config: &TrainConfig, budgets: &[usize]) -> Result<Vec<BatchPoint>> {
    let prepared = evaluation::prepare_graph(bundle, config)?;
    let n = bundle.len();
    budgets
        .iter()
        .map(|&requested| {
            if requested == 0 {
                return Err(Error::invalid("batch budget must be positive"));
            }
            let budget = requested.min(n);
            let c = TrainConfig {
                batch_mode: BatchMode::Sampled { budget },
                ..config.clone()
            };
            Ok(BatchPoint {
                requested,
                budget,
                accuracy: evaluation::cross_validate(bundle, &c, &prepared)?.mean_accuracy(),
            })
        })
        .collect()
}

/// Grid budgets plus N itself, in ascending order without duplicates.
pub fn default_budget_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = DEFAULT_BUDGETS.to_vec();
    grid.push(n);
    grid.sort_unstable();
    grid.dedup();
    grid
}

pub fn batch_csv(points: &[BatchPoint], n: usize) -> String {
    let mut out = String::new();
    if points.iter().any(|p| p.requested > p.budget) {
        out.push_str(&format!(
            "# budgets above the {n} subjects are capped at {n}; a subgraph cannot exceed the graph\n"
        ));
    }
    out.push_str("requested_budget,budget,accuracy\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.requested, p.budget, p.accuracy));
    }
    out
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Random connected graph: a ring plus each remaining pair with
/// probability `density`, weights uniform in `[0.1, 1)`.
pub fn random_graph(n: usize, density: f64, rng: &mut impl rand::Rng) -> Result<Graph> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let ring = j == i + 1 || (i == 0 && j == n - 1 && n > 2);
            if ring || rng.gen_bool(density) {
                edges.push(Edge {
                    i,
                    j,
                    weight: rng.gen_range(0.1..1.0),
                });
            }
        }
    }
    Graph::new(n, edges)
}

/// Small problem used by `gradcheck`: N = 8, F_in = 5, F_hidden = 4, C = 2,
/// L = 3, sampled Γ.
#[derive(Clone, Debug)]
pub struct GradCheckFixture {
    pub params: ModelParams,
    pub operator: DenseMatrix,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub labeled: Vec<usize>,
}

impl GradCheckFixture {
    pub fn new(seed: u64) -> Result<Self> {
        let (n, f_in, hidden, classes, layers) = (8, 5, 4, 2, 3);
        let mut r = rng::derived(seed, Stream::Synthetic, 0);
        let graph = random_graph(n, 0.3, &mut r)?;
        let (_, gamma) = sampler::pretrain_aggregation(&graph, 4, 50, rng::derive_seed(seed, Stream::Sampler, 0))?;
        let a_hat = normalize_adjacency(&add_self_loops(&graph))?;
        let operator = gamma.operator(&a_hat)?;
        let features = DenseMatrix::from_fn(n, f_in, |_, _| r.gen_range(-1.0..1.0));
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        labels.shuffle(&mut r);
        let mut labeled: Vec<usize> = (0..n).collect();
        labeled.shuffle(&mut r);
        labeled.truncate(6);
        labeled.sort_unstable();
        let mut init = rng::derived(seed, Stream::Init, 0);
        let params = ModelParams::init(&mut init, f_in, hidden, classes, layers, 0.1, 0.3)?;
        Ok(GradCheckFixture {
            params,
            operator,
            features,
            labels,
            labeled,
        })
    }

    pub fn check(&self, activation: Activation) -> Result<GradCheckReport> {
        training::finite_difference_check(
            &self.params,
            &self.operator,
            &self.features,
            &self.labels,
            &self.labeled,
            GRADCHECK_STEP,
            activation,
        )
    }
}

pub fn gradcheck(seed: u64) -> Result<GradCheckReport> {
    GradCheckFixture::new(seed)?.check(Activation::Relu)
}
