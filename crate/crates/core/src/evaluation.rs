//! Graph preparation and stratified k-fold cross-validation.

use serde::Serialize;

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::metrics::{self, CurvePoints, EvalReport};
use crate::model::ModelParams;
use crate::popgraph::{self, PopulationGraph, PopulationGraphSpec};
use crate::rng::{self, Stream};
use crate::sampler::{self, AggregationMatrix, AggregationStats};
use crate::training::{self, BatchMode, EpochRecord, GraphContext, TrainConfig};

/// Population graph, sampler statistics (absent with unit Γ) and the
/// training context built from them.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub population: PopulationGraph,
    pub stats: Option<AggregationStats>,
    pub context: GraphContext,
}

pub fn sampler_budget(config: &TrainConfig, n: usize) -> usize {
    let batch = match config.batch_mode {
        BatchMode::Sampled { budget } => Some(budget),
        BatchMode::FullBatch => None,
    };
    config
        .sampler_budget
        .unwrap_or_else(|| sampler::default_budget(n, batch))
        .min(n)
}

/// Estimates Γ for `graph` as configured: ones on the support when
/// `unit_gamma` is set, otherwise from `sampler_runs` seeded sampler runs.
pub fn estimate_gamma(
    graph: &crate::graph::Graph,
    config: &TrainConfig,
) -> Result<(Option<AggregationStats>, AggregationMatrix)> {
    if config.unit_gamma {
        return Ok((None, AggregationMatrix::ones_on_support(graph)));
    }
    let n = graph.node_count();
    let seed = rng::derive_seed(config.seed, Stream::Sampler, 0);
    let (stats, gamma) =
        sampler::pretrain_aggregation(graph, sampler_budget(config, n), config.sampler_runs, seed)?;
    Ok((Some(stats), gamma))
}

pub fn prepare_graph(bundle: &DatasetBundle, config: &TrainConfig) -> Result<PreparedGraph> {
    bundle.validate()?;
    config.validate()?;
    let population = popgraph::build_population_graph(&PopulationGraphSpec {
        features: &bundle.features,
        measures: &bundle.phenotypes,
        sigma: config.sigma,
    })?;
    let (stats, gamma) = estimate_gamma(&population.graph, config)?;
    let context = GraphContext::new(population.graph.clone(), gamma)?;
    Ok(PreparedGraph {
        population,
        stats,
        context,
    })
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub feature_columns: Vec<usize>,
    pub params: ModelParams,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Mean (or standard deviation) of the per-fold scalar metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub kappa: f64,
    pub mcc: f64,
}

impl MetricSummary {
    fn from_fn(reports: &[&EvalReport], f: impl Fn(&[f64]) -> f64) -> Self {
        let col = |g: fn(&EvalReport) -> f64| f(&reports.iter().map(|r| g(r)).collect::<Vec<_>>());
        MetricSummary {
            accuracy: col(|r| r.accuracy),
            auc: col(|r| r.auc),
            f1: col(|r| r.f1),
            recall: col(|r| r.recall),
            precision: col(|r| r.precision),
            kappa: col(|r| r.kappa),
            mcc: col(|r| r.mcc),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsFile {
    pub dataset: String,
    pub n_subjects: usize,
    pub n_edges: usize,
    pub sigma: f64,
    pub config: TrainConfig,
    pub folds: Vec<FoldMetrics>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
    /// Metrics over the out-of-fold predictions of all folds together.
    pub pooled: EvalReport,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Out-of-fold positive-class probability for every subject.
    pub scores: Vec<f64>,
    pub roc: CurvePoints,
    pub pr: CurvePoints,
    pub metrics: MetricsFile,
}

impl CvResult {
    pub fn mean_accuracy(&self) -> f64 {
        self.metrics.mean.accuracy
    }

    /// `fold,epoch,train_loss,val_loss` rows for every fold.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("fold,epoch,train_loss,val_loss\n");
        for f in &self.folds {
            for r in &f.history {
                out.push_str(&format!("{},{},{},{}\n", f.fold, r.epoch, r.train_loss, r.val_loss));
            }
        }
        out
    }
}

/// Column z-scores over all rows (population standard deviation). Constant
/// columns are only centered.
pub fn standardize_columns(x: &DenseMatrix) -> DenseMatrix {
    let (n, f) = x.shape();
    let mut means = vec![0.0; f];
    let mut scales = vec![0.0; f];
    for j in 0..f {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    DenseMatrix::from_fn(n, f, |i, j| (x.get(i, j) - means[j]) / scales[j])
}

/// Node features as the model sees them before any per-fold selection.
pub fn model_features(bundle: &DatasetBundle, config: &TrainConfig) -> DenseMatrix {
    if config.standardize {
        standardize_columns(&bundle.features)
    } else {
        bundle.features.clone()
    }
}

/// Per-fold RFE on the training rows when configured; all columns otherwise.
fn select_features(
    features: &DenseMatrix,
    labels: &[usize],
    train_idx: &[usize],
    config: &TrainConfig,
) -> Result<Vec<usize>> {
    match config.rfe_dim {
        None => Ok((0..features.cols()).collect()),
        Some(dim) => {
            let rows = features.select_rows(train_idx);
            let y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            let targets = popgraph::signed_targets(&y)?;
            popgraph::rfe_ridge(&rows, &targets, dim.min(features.cols()), config.rfe_lambda, None)
        }
    }
}

/// Trains and evaluates one model per stratified fold. Each fold holds out
/// `val_fraction` of its training portion for early stopping; test nodes
/// stay in the graph unlabeled.
pub fn cross_validate(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    prepared: &PreparedGraph,
) -> Result<CvResult> {
    config.validate()?;
    let n = bundle.len();
    if prepared.context.node_count() != n {
        return Err(Error::invalid(format!(
            "graph has {} nodes, bundle {n} subjects",
            prepared.context.node_count()
        )));
    }
    let labels = &bundle.labels;
    let folds = training::stratified_kfold(
        labels,
        config.folds,
        rng::derive_seed(config.seed, Stream::Folds, 0),
    )?;
    let eval_op = prepared.context.eval_operator(config.batch_mode);
    let all_features = model_features(bundle, config);
    let mut scores = vec![f64::NAN; n];
    let mut results = Vec::with_capacity(folds.len());
    for (k, test_idx) in folds.iter().enumerate() {
        let mut in_test = vec![false; n];
        test_idx.iter().for_each(|&i| in_test[i] = true);
        let train_portion: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let (train_idx, val_idx) = training::stratified_holdout(
            &train_portion,
            labels,
            config.val_fraction,
            rng::derive_seed(config.seed, Stream::Validation, k as u64),
        );
        let columns = select_features(&all_features, labels, &train_idx, config)?;
        let features = if columns.len() == all_features.cols() {
            all_features.clone()
        } else {
            all_features.select_columns(&columns)
        };
        let fold_seed = rng::derive_seed(config.seed, Stream::Init, k as u64);
        let fold_config = TrainConfig {
            seed: fold_seed,
            ..config.clone()
        };
        let outcome = training::train(&fold_config, &prepared.context, &features, labels, &train_idx, &val_idx)?;
        let proba = training::predict_proba(&outcome.params, eval_op, &features)?;
        let fold_scores: Vec<f64> = test_idx.iter().map(|&i| proba.get(i, 1)).collect();
        let fold_truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        for (&i, &s) in test_idx.iter().zip(&fold_scores) {
            scores[i] = s;
        }
        let report = metrics::evaluate(&fold_scores, &fold_truth)?;
        results.push(FoldResult {
            fold: k,
            test_indices: test_idx.clone(),
            feature_columns: columns,
            params: outcome.params,
            seed: fold_seed,
            history: outcome.history,
            best_epoch: outcome.best_epoch,
            report,
        });
    }

    let pooled = metrics::evaluate(&scores, labels)?;
    let roc = metrics::roc_curve(&scores, labels)?;
    let pr = metrics::pr_curve(&scores, labels)?;
    let reports: Vec<&EvalReport> = results.iter().map(|f| &f.report).collect();
    let metrics = MetricsFile {
        dataset: bundle.name.clone(),
        n_subjects: n,
        n_edges: prepared.population.graph.edges().len(),
        sigma: prepared.population.sigma,
        config: config.clone(),
        folds: results
            .iter()
            .map(|f| FoldMetrics {
                fold: f.fold,
                n_test: f.test_indices.len(),
                best_epoch: f.best_epoch,
                epochs_run: f.history.len(),
                report: f.report.clone(),
            })
            .collect(),
        mean: MetricSummary::from_fn(&reports, mean),
        std: MetricSummary::from_fn(&reports, std_dev),
        pooled,
    };
    Ok(CvResult {
        folds: results,
        scores,
        roc,
        pr,
        metrics,
    })
}

/// Convenience wrapper: graph preparation followed by cross-validation.
pub fn run_cv(bundle: &DatasetBundle, config: &TrainConfig) -> Result<(PreparedGraph, CvResult)> {
    let prepared = prepare_graph(bundle, config)?;
    let cv = cross_validate(bundle, config, &prepared)?;
    Ok((prepared, cv))
}
