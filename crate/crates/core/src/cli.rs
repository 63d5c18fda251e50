//! Command-line driver.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{self, Checkpoint, DatasetBundle, SyntheticSpec, CHECKPOINT_VERSION};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::experiments::{self, DEFAULT_DEPTHS};
use crate::io::{write_atomic, write_json};
use crate::metrics;
use crate::popgraph::Sigma;
use crate::training::{self, BatchMode, LossReduction, TrainConfig};

pub const SEED_ENV: &str = "ANGCN_SEED";

#[derive(Parser, Debug)]
#[command(name = "angcn", version, about = "AN-GCN population-graph node classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset bundle.
    Synth(SynthArgs),
    /// Build the population graph and write adjacency.csv.
    BuildGraph(BuildGraphArgs),
    /// Run the subgraph sampler and write the aggregation statistics.
    SampleStats(SampleStatsArgs),
    /// Stratified k-fold training and evaluation.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on its test fold.
    Eval(EvalArgs),
    /// Accuracy against depth for AN-GCN and its GCN reduction.
    SweepDepth(SweepDepthArgs),
    /// Accuracy against sampled batch size.
    SweepBatch(SweepBatchArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub n_subjects: usize,
    #[arg(long, default_value_t = 16)]
    pub n_roi: usize,
    #[arg(long, default_value_t = 2.0)]
    pub class_separation: f64,
    #[arg(long, default_value_t = 0.6)]
    pub phenotype_informativeness: f64,
    #[arg(long, default_value_t = 4)]
    pub n_sites: usize,
    #[arg(long, default_value_t = 2.0)]
    pub age_tau: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

/// Training hyperparameters; unset flags fall back to `--config`, then to
/// the built-in defaults. `--seed` falls back to `ANGCN_SEED` first.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Train on sampled subgraphs of this many nodes instead of full batches.
    #[arg(long)]
    pub batch_budget: Option<usize>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossReduction>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub sampler_runs: Option<usize>,
    #[arg(long)]
    pub sampler_budget: Option<usize>,
    #[arg(long)]
    pub unit_gamma: bool,
    /// `auto` or a positive bandwidth.
    #[arg(long)]
    pub sigma: Option<Sigma>,
    #[arg(long)]
    pub rfe_dim: Option<usize>,
    #[arg(long)]
    pub rfe_lambda: Option<f64>,
    /// Feed raw feature columns to the model instead of z-scores.
    #[arg(long)]
    pub no_standardize: bool,
}

fn parse_loss(s: &str) -> std::result::Result<LossReduction, String> {
    match s {
        "sum" => Ok(LossReduction::Sum),
        "mean" => Ok(LossReduction::Mean),
        other => Err(format!("expected sum or mean, got {other}")),
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c: TrainConfig = match &self.config {
            Some(path) => crate::io::read_json(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(seed => seed, folds => folds, layers => layers, alpha => alpha, beta => beta,
             learning_rate => learning_rate, epochs => max_epochs, patience => patience,
             hidden => hidden_dim, loss => loss, val_fraction => val_fraction,
             sampler_runs => sampler_runs, sigma => sigma, rfe_lambda => rfe_lambda);
        if let Some(b) = self.batch_budget {
            c.batch_mode = BatchMode::Sampled { budget: b };
        }
        if self.sampler_budget.is_some() {
            c.sampler_budget = self.sampler_budget;
        }
        if self.rfe_dim.is_some() {
            c.rfe_dim = self.rfe_dim;
        }
        if self.unit_gamma {
            c.unit_gamma = true;
        }
        if self.no_standardize {
            c.standardize = false;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "auto")]
    pub sigma: Sigma,
}

#[derive(Args, Debug)]
pub struct SampleStatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepDepthArgs {
    /// Dataset bundle; the default synthetic bundle when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SweepBatchArgs {
    /// Dataset bundle; the default synthetic bundle when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, env = SEED_ENV, default_value_t = 7)]
    pub seed: u64,
}

fn load_or_default(data: Option<&Path>) -> Result<DatasetBundle> {
    match data {
        Some(p) => data::load_bundle(p),
        None => data::generate_synthetic(&SyntheticSpec::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs one parsed command. Returns the process exit code for commands
/// whose outcome is a verdict (`gradcheck`).
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                n_subjects: a.n_subjects,
                n_roi: a.n_roi,
                class_separation: a.class_separation,
                phenotype_informativeness: a.phenotype_informativeness,
                n_sites: a.n_sites,
                age_tau: a.age_tau,
                seed: a.seed,
            };
            let bundle = data::generate_synthetic(&spec)?;
            data::save_bundle(&bundle, &a.out)?;
            println!("wrote {} subjects to {}", bundle.len(), a.out.display());
        }
        Command::BuildGraph(a) => {
            let bundle = data::load_bundle(&a.data)?;
            let pg = crate::popgraph::build_population_graph(&crate::popgraph::PopulationGraphSpec {
                features: &bundle.features,
                measures: &bundle.phenotypes,
                sigma: a.sigma,
            })?;
            data::save_adjacency(&pg.graph, &a.out)?;
            println!("{} edges, sigma {}", pg.graph.edges().len(), pg.sigma);
        }
        Command::SampleStats(a) => {
            let config = a.config.resolve()?;
            let bundle = data::load_bundle(&a.data)?;
            let config = TrainConfig {
                unit_gamma: false,
                ..config
            };
            let prepared = evaluation::prepare_graph(&bundle, &config)?;
            let stats = prepared.stats.expect("sampled statistics");
            write_json(&a.out, &stats)?;
            println!(
                "{} runs, budget {}",
                stats.runs,
                evaluation::sampler_budget(&config, bundle.len())
            );
        }
        Command::Train(a) => train(&a)?,
        Command::Eval(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let report = evaluate_checkpoint(&ck, &data::load_bundle(&a.data)?)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::json("eval report", e))?;
            match &a.out {
                Some(p) => write_text(p, &(text + "\n"))?,
                None => {
                    use std::io::Write;
                    let _ = writeln!(std::io::stdout(), "{text}");
                }
            }
        }
        Command::SweepDepth(a) => {
            let config = a.config.resolve()?;
            let bundle = load_or_default(a.data.as_deref())?;
            let depths = a.depths.clone().unwrap_or_else(|| DEFAULT_DEPTHS.to_vec());
            let points = experiments::sweep_depth(&bundle, &config, &depths)?;
            write_text(&a.out, &experiments::depth_csv(&points))?;
            for p in &points {
                println!("L={:<3} angcn {:.4} gcn {:.4}", p.layers, p.angcn_accuracy, p.gcn_accuracy);
            }
        }
        Command::SweepBatch(a) => {
            let config = a.config.resolve()?;
            let bundle = load_or_default(a.data.as_deref())?;
            let budgets = a
                .budgets
                .clone()
                .unwrap_or_else(|| experiments::default_budget_grid(bundle.len()));
            let points = experiments::sweep_batch(&bundle, &config, &budgets)?;
            write_text(&a.out, &experiments::batch_csv(&points, bundle.len()))?;
            for p in &points {
                println!("budget {:<5} accuracy {:.4}", p.budget, p.accuracy);
            }
        }
        Command::Gradcheck(a) => {
            let report = experiments::gradcheck(a.seed)?;
            let pass = report.max_relative_error < experiments::GRADCHECK_TOLERANCE;
            println!(
                "max relative error {:.3e} over {} entries: {}",
                report.max_relative_error,
                report.entries_checked,
                if pass { "ok" } else { "FAILED" }
            );
            return Ok(if pass { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let bundle = data::load_bundle(&a.data)?;
    let (prepared, cv) = evaluation::run_cv(&bundle, &config)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &config)?;
    write_json(&a.out.join("metrics.json"), &cv.metrics)?;
    write_text(&a.out.join("roc.csv"), &cv.roc.to_csv())?;
    write_text(&a.out.join("pr.csv"), &cv.pr.to_csv())?;
    write_text(&a.out.join("history.csv"), &cv.history_csv())?;
    let ck_dir = a.out.join("checkpoints");
    create_dir(&ck_dir)?;
    let digest = data::gamma_digest(prepared.context.gamma.matrix());
    for f in &cv.folds {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: config.clone(),
            params: f.params.clone(),
            gamma_digest: digest.clone(),
            seed: f.seed,
            fold: f.fold,
            test_indices: f.test_indices.clone(),
            feature_columns: f.feature_columns.clone(),
        }
        .save(&ck_dir.join(format!("fold-{:02}.json", f.fold)))?;
    }
    let m = &cv.metrics.mean;
    println!(
        "{} folds: accuracy {:.4} auc {:.4} f1 {:.4} kappa {:.4} mcc {:.4}",
        cv.folds.len(),
        m.accuracy,
        m.auc,
        m.f1,
        m.kappa,
        m.mcc
    );
    Ok(())
}

/// Rebuilds the graph and Γ from the checkpoint's configuration and scores
/// the checkpoint's test fold.
pub fn evaluate_checkpoint(ck: &Checkpoint, bundle: &DatasetBundle) -> Result<metrics::EvalReport> {
    let prepared = evaluation::prepare_graph(bundle, &ck.config)?;
    let digest = data::gamma_digest(prepared.context.gamma.matrix());
    if digest != ck.gamma_digest {
        return Err(Error::SchemaMismatch(
            "aggregation matrix differs from the one the checkpoint was trained with".into(),
        ));
    }
    let features = evaluation::model_features(bundle, &ck.config);
    if ck.feature_columns.iter().any(|&c| c >= features.cols())
        || ck.test_indices.iter().any(|&i| i >= bundle.len())
    {
        return Err(Error::SchemaMismatch("checkpoint does not match this dataset".into()));
    }
    let features = features.select_columns(&ck.feature_columns);
    let op = prepared.context.eval_operator(ck.config.batch_mode);
    let proba = training::predict_proba(&ck.params, op, &features)?;
    let scores: Vec<f64> = ck.test_indices.iter().map(|&i| proba.get(i, 1)).collect();
    let truth: Vec<usize> = ck.test_indices.iter().map(|&i| bundle.labels[i]).collect();
    metrics::evaluate(&scores, &truth)
}

/// Parses `argv` and runs it: 0 on success, 2 on usage errors, 1 on any
/// other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
