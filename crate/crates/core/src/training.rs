//! Loss, reverse-mode gradients, Adam, early stopping and the training loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{add_self_loops, normalize_adjacency, Graph};
use crate::matrix::DenseMatrix;
use crate::model::{self, Activation, ForwardTrace, ModelParams};
use crate::rng::{self, Stream};
use crate::sampler::{self, AggregationMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Sum over labeled nodes.
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BatchMode {
    #[default]
    FullBatch,
    /// Each epoch trains on `⌈N / budget⌉` freshly sampled subgraphs of
    /// `budget` nodes, aggregating with `(Â ⊙ Γ)` restricted to the batch.
    Sampled { budget: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub folds: usize,
    pub alpha: f64,
    pub beta: f64,
    pub layers: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub batch_mode: BatchMode,
    pub loss: LossReduction,
    /// Fraction of each training portion held out for early stopping.
    pub val_fraction: f64,
    /// Pre-training sampler runs used to estimate Γ.
    pub sampler_runs: usize,
    /// Sampler budget for Γ; `None` means the batch budget in sampled mode
    /// and `min(1000, N)` for full batches.
    pub sampler_budget: Option<usize>,
    /// Use Γ = 1 on the support of `Ã` instead of sampler estimates.
    pub unit_gamma: bool,
    pub sigma: crate::popgraph::Sigma,
    /// Optional per-fold ridge RFE down to this many input features.
    pub rfe_dim: Option<usize>,
    pub rfe_lambda: f64,
    /// Z-score every input feature column over all subjects before training.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 150,
            patience: 10,
            folds: 10,
            alpha: 0.1,
            beta: 0.3,
            layers: 10,
            hidden_dim: 64,
            seed: 0,
            batch_mode: BatchMode::FullBatch,
            loss: LossReduction::Sum,
            val_fraction: 0.1,
            sampler_runs: 200,
            sampler_budget: None,
            unit_gamma: false,
            sigma: crate::popgraph::Sigma::Auto,
            rfe_dim: None,
            rfe_lambda: 1.0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.patience < 1 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim must be positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must lie in [0, 1)"));
        }
        if self.sampler_runs == 0 && !self.unit_gamma {
            return Err(Error::invalid("sampler_runs must be positive"));
        }
        if let BatchMode::Sampled { budget: 0 } = self.batch_mode {
            return Err(Error::invalid("batch budget must be positive"));
        }
        Ok(())
    }
}

/// Graph-side inputs of training: the graph, `Â`, Γ and `Â ⊙ Γ`.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub graph: Graph,
    pub a_hat: DenseMatrix,
    pub gamma: AggregationMatrix,
    pub operator: DenseMatrix,
}

impl GraphContext {
    pub fn new(graph: Graph, gamma: AggregationMatrix) -> Result<Self> {
        let a_hat = normalize_adjacency(&add_self_loops(&graph))?;
        let operator = gamma.operator(&a_hat)?;
        Ok(GraphContext {
            graph,
            a_hat,
            gamma,
            operator,
        })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Operator used for full-graph passes under `mode`: `Â ⊙ Γ` for full
    /// batches, `Â` when Γ only debiases subgraph batches.
    pub fn eval_operator(&self, mode: BatchMode) -> &DenseMatrix {
        match mode {
            BatchMode::FullBatch => &self.operator,
            BatchMode::Sampled { .. } => &self.a_hat,
        }
    }
}

/// `−Σ_{i∈labeled} log Ŷ[i, y_i]`, optionally divided by `|labeled|`.
pub fn cross_entropy_with(
    y_hat: &DenseMatrix,
    labels: &[usize],
    labeled: &[usize],
    reduction: LossReduction,
) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if labels.len() != y_hat.rows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: y_hat.rows(),
        });
    }
    let mut loss = 0.0;
    for &i in labeled {
        let c = labels[i];
        if c >= y_hat.cols() {
            return Err(Error::invalid(format!("label {c} of node {i} exceeds class count")));
        }
        loss -= y_hat.get(i, c).ln();
    }
    Ok(match reduction {
        LossReduction::Sum => loss,
        LossReduction::Mean => loss / labeled.len() as f64,
    })
}

/// Summed cross-entropy over the labeled nodes.
pub fn cross_entropy(y_hat: &DenseMatrix, labels: &[usize], labeled: &[usize]) -> Result<f64> {
    cross_entropy_with(y_hat, labels, labeled, LossReduction::Sum)
}

/// Gradients of the loss with respect to every parameter matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub input_projection: DenseMatrix,
    pub layers: Vec<DenseMatrix>,
    pub output_head: DenseMatrix,
}

impl GradientSet {
    pub fn matrices(&self) -> Vec<&DenseMatrix> {
        let mut out = vec![&self.input_projection];
        out.extend(self.layers.iter());
        out.push(&self.output_head);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.matrices().iter().map(|m| m.max_abs()).fold(0.0, f64::max)
    }
}

fn check_trace(trace: &ForwardTrace, params: &ModelParams, operator: &DenseMatrix, x_raw: &DenseMatrix) -> Result<()> {
    let n = x_raw.rows();
    let hidden = params.hidden_dim();
    let mismatch = |what: String| Err(Error::TraceMismatch(what));
    if trace.pre_activations.len() != params.depth()
        || trace.activations.len() != params.depth()
        || trace.diffused.len() != params.depth()
    {
        return mismatch(format!(
            "trace has {} layers, params have {}",
            trace.pre_activations.len(),
            params.depth()
        ));
    }
    if trace.projected_input.shape() != (n, hidden) {
        return mismatch(format!("projected input is {:?}", trace.projected_input.shape()));
    }
    for (l, pre) in trace.pre_activations.iter().enumerate() {
        if pre.shape() != (n, hidden) || trace.activations[l].shape() != (n, hidden) {
            return mismatch(format!("layer {l} has shape {:?}", pre.shape()));
        }
    }
    if trace.logits.shape() != (n, params.classes()) {
        return mismatch(format!("logits are {:?}", trace.logits.shape()));
    }
    if operator.shape() != (n, n) {
        return mismatch(format!("operator is {:?} for {n} nodes", operator.shape()));
    }
    if x_raw.cols() != params.input_dim() {
        return mismatch(format!("input has {} features, params expect {}", x_raw.cols(), params.input_dim()));
    }
    Ok(())
}

/// Reverse-mode gradients of the cross-entropy for a trace produced by
/// [`model::forward_with_operator`] on the same `params`, `operator` and
/// `x_raw`.
///
/// With `G = ∂ℒ/∂pre`, `W' = I + W`, `S = M·H` and projected input `X`:
/// `∂W = β(SᵀG + XᵀG)`, `∂S = (1−α)G + βGW'ᵀ`, `∂H = Mᵀ∂S` and every layer
/// adds `αG + βGW'ᵀ` to `∂X`.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    operator: &DenseMatrix,
    x_raw: &DenseMatrix,
    labels: &[usize],
    labeled: &[usize],
    reduction: LossReduction,
) -> Result<GradientSet> {
    check_trace(trace, params, operator, x_raw)?;
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let n = x_raw.rows();
    let classes = params.classes();
    let y_hat = model::predict(&trace.logits);
    let scale = match reduction {
        LossReduction::Sum => 1.0,
        LossReduction::Mean => 1.0 / labeled.len() as f64,
    };
    let mut d_logits = DenseMatrix::zeros(n, classes);
    for &i in labeled {
        let c = labels[i];
        if c >= classes {
            return Err(Error::invalid(format!("label {c} of node {i} exceeds class count")));
        }
        let row = d_logits.row_mut(i);
        for (k, v) in row.iter_mut().enumerate() {
            let target = if k == c { 1.0 } else { 0.0 };
            *v = scale * (y_hat.get(i, k) - target);
        }
    }

    let output_head = trace.last_hidden().t_matmul(&d_logits)?;
    let mut d_h = d_logits.matmul_t(&params.output_head)?;
    let mut d_x0 = DenseMatrix::zeros(n, params.hidden_dim());
    let (alpha, beta) = (params.alpha, params.beta);
    let mut layer_grads = vec![DenseMatrix::zeros(0, 0); params.depth()];

    for l in (0..params.depth()).rev() {
        let pre = &trace.pre_activations[l];
        let mut g = d_h;
        for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
            *gv *= trace.activation.derivative(p);
        }
        let w_id = params.layers[l].plus_identity()?;
        let s_plus_x = trace.diffused[l].add(&trace.projected_input)?;
        layer_grads[l] = s_plus_x.t_matmul(&g)?.scale(beta);
        let g_wt = g.matmul_t(&w_id)?;
        let mut d_s = g.scale(1.0 - alpha);
        d_s.add_scaled(beta, &g_wt)?;
        d_x0.add_scaled(alpha, &g)?;
        d_x0.add_scaled(beta, &g_wt)?;
        d_h = operator.t_matmul(&d_s)?;
    }
    // H^(0) is the projected input itself.
    d_x0.add_scaled(1.0, &d_h)?;
    let input_projection = x_raw.t_matmul(&d_x0)?;

    Ok(GradientSet {
        input_projection,
        layers: layer_grads,
        output_head,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub timestep: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .matrices()
            .iter()
            .map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
            .collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            timestep: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter entry.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let grad_mats = grads.matrices();
    let param_mats = params.matrices_mut();
    if grad_mats.len() != param_mats.len() || state.first_moment.len() != param_mats.len() {
        return Err(Error::invalid(format!(
            "adam: {} parameter matrices, {} gradients, {} moments",
            param_mats.len(),
            grad_mats.len(),
            state.first_moment.len()
        )));
    }
    for ((p, g), m) in param_mats.iter().zip(&grad_mats).zip(&state.first_moment) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam gradient", p.shape(), g.shape()));
        }
        if p.shape() != m.shape() {
            return Err(Error::shape("adam moment", p.shape(), m.shape()));
        }
    }
    state.timestep += 1;
    let t = state.timestep as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in param_mats
        .into_iter()
        .zip(grad_mats)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Stratified k-fold assignment. Each class is shuffled with the seeded
/// stream and dealt round-robin across folds; the dealing position carries
/// over between classes so fold sizes stay balanced. Folds are returned as
/// ascending index lists.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::ClassTooSmall {
                class: c,
                count: members.len(),
                folds: k,
            });
        }
    }
    let mut rng = rng::derived(seed, Stream::Folds, 0);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified holdout of `fraction` of `indices` (at least one node per
/// class with two or more members when `fraction > 0`). Returns
/// `(kept, held_out)`, both ascending.
pub fn stratified_holdout(
    indices: &[usize],
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let classes = indices.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &i in indices {
        by_class[labels[i]].push(i);
    }
    let mut rng = rng::derived(seed, Stream::Validation, 0);
    let mut kept = Vec::new();
    let mut held = Vec::new();
    for members in &mut by_class {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let mut take = (fraction * members.len() as f64).round() as usize;
        if fraction > 0.0 && take == 0 && members.len() >= 2 {
            take = 1;
        }
        held.extend_from_slice(&members[..take]);
        kept.extend_from_slice(&members[take..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    (kept, held)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping against the best value seen so far; an
/// epoch counts as an improvement only if it strictly lowers the best.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned; `None` when no epoch
    /// ran.
    pub best_epoch: Option<usize>,
}

pub fn class_count(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(2, |m| (m + 1).max(2))
}

/// Trains one model. `features` are the raw node features of every node;
/// only `train_idx` labels drive gradients and `val_idx` drives early
/// stopping (training loss is monitored instead when `val_idx` is empty).
pub fn train(
    config: &TrainConfig,
    ctx: &GraphContext,
    features: &DenseMatrix,
    labels: &[usize],
    train_idx: &[usize],
    val_idx: &[usize],
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = ctx.node_count();
    if features.rows() != n || labels.len() != n {
        return Err(Error::invalid(format!(
            "graph has {n} nodes, features {} rows, labels {}",
            features.rows(),
            labels.len()
        )));
    }
    if train_idx.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let mut in_train = vec![false; n];
    for &i in train_idx {
        if i >= n {
            return Err(Error::invalid(format!("train index {i} out of range")));
        }
        in_train[i] = true;
    }
    if let Some(&i) = val_idx.iter().find(|&&i| i >= n || in_train[i]) {
        return Err(Error::invalid(format!(
            "validation index {i} is out of range or also a training index"
        )));
    }

    let mut init_rng = rng::derived(config.seed, Stream::Init, 0);
    let mut params = ModelParams::init(
        &mut init_rng,
        features.cols(),
        config.hidden_dim,
        class_count(labels),
        config.layers,
        config.alpha,
        config.beta,
    )?;
    let mut history = Vec::new();
    if config.max_epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            best_epoch: None,
        });
    }

    let eval_op = ctx.eval_operator(config.batch_mode);
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = params.clone();
    let mut trace = model::forward_with_operator(&params, eval_op, features, Activation::Relu)?;

    for epoch in 1..=config.max_epochs {
        match config.batch_mode {
            BatchMode::FullBatch => {
                let grads = backward(&trace, &params, eval_op, features, labels, train_idx, config.loss)?;
                adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
            }
            BatchMode::Sampled { budget } => {
                let budget = budget.min(n);
                let batches = n.div_ceil(budget);
                let seed = rng::derive_seed(config.seed, Stream::Minibatch, epoch as u64);
                let samples = sampler::sample_runs(&ctx.graph, budget, batches, seed)?;
                for batch in sampler::minibatches(&samples, Some(budget), n) {
                    let labeled: Vec<usize> = batch
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| in_train[v])
                        .map(|(k, _)| k)
                        .collect();
                    if labeled.is_empty() {
                        continue;
                    }
                    let sub_op = ctx.operator.submatrix(&batch);
                    let sub_x = features.select_rows(&batch);
                    let sub_labels: Vec<usize> = batch.iter().map(|&v| labels[v]).collect();
                    let sub_trace =
                        model::forward_with_operator(&params, &sub_op, &sub_x, Activation::Relu)?;
                    let grads = backward(&sub_trace, &params, &sub_op, &sub_x, &sub_labels, &labeled, config.loss)?;
                    adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
                }
            }
        }

        trace = model::forward_with_operator(&params, eval_op, features, Activation::Relu)?;
        let y_hat = model::predict(&trace.logits);
        let train_loss = cross_entropy_with(&y_hat, labels, train_idx, config.loss)?;
        let val_loss = if val_idx.is_empty() {
            f64::NAN
        } else {
            cross_entropy_with(&y_hat, labels, val_idx, config.loss)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let monitored = if val_idx.is_empty() { train_loss } else { val_loss };
        match stopper.observe(epoch, monitored) {
            StopDecision::Improved => best_params = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch: stopper.best().map(|(e, _)| e),
    })
}

/// Class probabilities for every node under `params`.
pub fn predict_proba(params: &ModelParams, operator: &DenseMatrix, features: &DenseMatrix) -> Result<DenseMatrix> {
    let trace = model::forward_with_operator(params, operator, features, Activation::Relu)?;
    Ok(model::predict(&trace.logits))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(matrix index, row, col)` of the worst entry; matrices are ordered
    /// projection, layers, head.
    pub worst_entry: (usize, usize, usize),
    pub entries_checked: usize,
}

/// Loss of `params` on the given problem.
pub fn loss_at(
    params: &ModelParams,
    operator: &DenseMatrix,
    x_raw: &DenseMatrix,
    labels: &[usize],
    labeled: &[usize],
    activation: Activation,
    reduction: LossReduction,
) -> Result<f64> {
    let trace = model::forward_with_operator(params, operator, x_raw, activation)?;
    cross_entropy_with(&model::predict(&trace.logits), labels, labeled, reduction)
}

/// Compares [`backward`] against central finite differences on every
/// parameter entry, with step `eps · max(1, |θ|)`. The error per entry is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check(
    params: &ModelParams,
    operator: &DenseMatrix,
    x_raw: &DenseMatrix,
    labels: &[usize],
    labeled: &[usize],
    eps: f64,
    activation: Activation,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let reduction = LossReduction::Sum;
    let trace = model::forward_with_operator(params, operator, x_raw, activation)?;
    let grads = backward(&trace, params, operator, x_raw, labels, labeled, reduction)?;
    let analytic = grads.matrices();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: (0, 0, 0),
        entries_checked: 0,
    };
    for (m, grad) in analytic.iter().enumerate() {
        for i in 0..grad.rows() {
            for j in 0..grad.cols() {
                let theta = params.matrices()[m].get(i, j);
                let h = eps * theta.abs().max(1.0);
                probe.matrices_mut()[m].set(i, j, theta + h);
                let plus = loss_at(&probe, operator, x_raw, labels, labeled, activation, reduction)?;
                probe.matrices_mut()[m].set(i, j, theta - h);
                let minus = loss_at(&probe, operator, x_raw, labels, labeled, activation, reduction)?;
                probe.matrices_mut()[m].set(i, j, theta);
                let numeric = (plus - minus) / (2.0 * h);
                let a = grad.get(i, j);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                report.entries_checked += 1;
                if err > report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst_entry = (m, i, j);
                }
            }
        }
    }
    Ok(report)
}
