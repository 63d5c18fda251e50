//! Forward pass of the aggregator-normalization GCN.
//!
//! Each hidden layer computes
//!
//! ```text
//! H' = σ( (1−α)·M·H + β·M·H·(I+W) + α·X + β·X·(I+W) )
//! ```
//!
//! with `M = Â ⊙ Γ` and `X` the projected input. The raw input is projected
//! once to the hidden width (`X = X_raw · P`) and a linear head maps the last
//! hidden state to class logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sampler::AggregationMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_projection: DenseMatrix,
    pub layers: Vec<DenseMatrix>,
    pub output_head: DenseMatrix,
    pub alpha: f64,
    pub beta: f64,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..=limit))
}

impl ModelParams {
    /// Glorot-uniform initialization of every matrix.
    pub fn init(
        rng: &mut impl Rng,
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        layers: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let params = ModelParams {
            input_projection: glorot(rng, input_dim, hidden_dim),
            layers: (0..layers).map(|_| glorot(rng, hidden_dim, hidden_dim)).collect(),
            output_head: glorot(rng, hidden_dim, classes),
            alpha,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let hidden = self.hidden_dim();
        for (l, w) in self.layers.iter().enumerate() {
            if w.shape() != (hidden, hidden) {
                return Err(Error::shape("layer weight", w.shape(), (hidden, hidden)).in_layer(l));
            }
        }
        if self.output_head.rows() != hidden {
            return Err(Error::shape(
                "output head",
                self.output_head.shape(),
                (hidden, self.output_head.cols()),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_projection.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_projection.cols()
    }

    pub fn classes(&self) -> usize {
        self.output_head.cols()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// All weight matrices in a fixed order: projection, layers, head.
    pub fn matrices(&self) -> Vec<&DenseMatrix> {
        let mut out = vec![&self.input_projection];
        out.extend(self.layers.iter());
        out.push(&self.output_head);
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = vec![&mut self.input_projection];
        out.extend(self.layers.iter_mut());
        out.push(&mut self.output_head);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.rows() * m.cols()).sum()
    }
}

/// Pointwise nonlinearity. `Identity` exists for gradient checks without
/// ReLU kinks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Relu => m.map(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Identity => m.clone(),
        }
    }

    /// Derivative at `pre`; the ReLU subgradient at 0 is 0.
    pub(crate) fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub projected_input: DenseMatrix,
    /// `M·H^(ℓ)` for each layer, reused by the backward pass.
    pub diffused: Vec<DenseMatrix>,
    pub pre_activations: Vec<DenseMatrix>,
    pub activations: Vec<DenseMatrix>,
    pub logits: DenseMatrix,
    pub activation: Activation,
}

impl ForwardTrace {
    /// `H^(L)`, or the projected input for a model without hidden layers.
    pub fn last_hidden(&self) -> &DenseMatrix {
        self.activations.last().unwrap_or(&self.projected_input)
    }

    /// Input `H^(ℓ)` of layer `ℓ`.
    pub fn layer_input(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.projected_input
        } else {
            &self.activations[l - 1]
        }
    }
}

/// `S = Â H`.
pub fn feature_diffusion(a_hat: &DenseMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    if !a_hat.is_square() {
        return Err(Error::shape("feature_diffusion", a_hat.shape(), h.shape()));
    }
    a_hat.matmul(h)
}

/// `S = (Â ⊙ Γ) H`.
pub fn aggregated_diffusion(
    a_hat: &DenseMatrix,
    gamma: &AggregationMatrix,
    h: &DenseMatrix,
) -> Result<DenseMatrix> {
    feature_diffusion(&gamma.operator(a_hat)?, h)
}

/// Pre-activation of one layer given its already diffused input `s = M·h`.
fn layer_pre_activation(
    s: &DenseMatrix,
    x0: &DenseMatrix,
    w: &DenseMatrix,
    alpha: f64,
    beta: f64,
) -> Result<DenseMatrix> {
    if s.shape() != x0.shape() {
        return Err(Error::shape("layer input vs projected input", s.shape(), x0.shape()));
    }
    if w.shape() != (s.cols(), s.cols()) {
        return Err(Error::shape("layer weight", w.shape(), (s.cols(), s.cols())));
    }
    let w_id = w.plus_identity()?;
    let s_w = s.matmul(&w_id)?;
    let x_w = x0.matmul(&w_id)?;
    let data = s
        .data()
        .iter()
        .zip(s_w.data())
        .zip(x0.data().iter().zip(x_w.data()))
        .map(|((&sv, &swv), (&xv, &xwv))| (1.0 - alpha) * sv + beta * swv + alpha * xv + beta * xwv)
        .collect();
    DenseMatrix::new(s.rows(), s.cols(), data)
}

/// One propagation layer: returns `(pre_activation, ReLU(pre_activation))`.
pub fn layer_forward(
    h: &DenseMatrix,
    x0: &DenseMatrix,
    operator: &DenseMatrix,
    w: &DenseMatrix,
    alpha: f64,
    beta: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if !operator.is_square() || operator.rows() != h.rows() {
        return Err(Error::shape("layer operator", operator.shape(), h.shape()));
    }
    let s = operator.matmul(h)?;
    let pre = layer_pre_activation(&s, x0, w, alpha, beta)?;
    let act = Activation::Relu.apply(&pre);
    Ok((pre, act))
}

/// Full forward pass with `M = Â ⊙ Γ`.
pub fn forward(
    params: &ModelParams,
    a_hat: &DenseMatrix,
    gamma: &AggregationMatrix,
    x_raw: &DenseMatrix,
) -> Result<ForwardTrace> {
    forward_with_operator(params, &gamma.operator(a_hat)?, x_raw, Activation::Relu)
}

/// Forward pass against a precomputed propagation operator.
pub fn forward_with_operator(
    params: &ModelParams,
    operator: &DenseMatrix,
    x_raw: &DenseMatrix,
    activation: Activation,
) -> Result<ForwardTrace> {
    params.validate()?;
    if !operator.is_square() || operator.rows() != x_raw.rows() {
        return Err(Error::shape("operator vs input", operator.shape(), x_raw.shape()));
    }
    let x0 = x_raw.matmul(&params.input_projection)?;
    let depth = params.depth();
    let mut diffused = Vec::with_capacity(depth);
    let mut pre_activations = Vec::with_capacity(depth);
    let mut activations: Vec<DenseMatrix> = Vec::with_capacity(depth);
    for (l, w) in params.layers.iter().enumerate() {
        let h = activations.last().unwrap_or(&x0);
        let s = operator.matmul(h).map_err(|e| e.in_layer(l))?;
        let pre = layer_pre_activation(&s, &x0, w, params.alpha, params.beta)
            .map_err(|e| e.in_layer(l))?;
        activations.push(activation.apply(&pre));
        pre_activations.push(pre);
        diffused.push(s);
    }
    let logits = activations.last().unwrap_or(&x0).matmul(&params.output_head)?;
    Ok(ForwardTrace {
        projected_input: x0,
        diffused,
        pre_activations,
        activations,
        logits,
        activation,
    })
}

/// Row-wise softmax with max subtraction.
pub fn predict(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{add_self_loops, normalize_adjacency, Edge, Graph};

    fn two_node_operator() -> DenseMatrix {
        DenseMatrix::filled(2, 2, 0.5)
    }

    #[test]
    fn diffusion_examples() {
        let h = DenseMatrix::from_rows(&[[2.0], [4.0]]);
        assert_eq!(
            feature_diffusion(&DenseMatrix::identity(2), &h).unwrap(),
            h
        );
        assert_eq!(
            feature_diffusion(&two_node_operator(), &h).unwrap(),
            DenseMatrix::from_rows(&[[3.0], [3.0]])
        );
        assert!(feature_diffusion(&two_node_operator(), &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn aggregated_diffusion_reduces_and_scales() {
        let g = Graph::new(3, vec![Edge { i: 0, j: 1, weight: 2.0 }, Edge { i: 1, j: 2, weight: 0.5 }]).unwrap();
        let a_hat = normalize_adjacency(&add_self_loops(&g)).unwrap();
        let h = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        let ones = AggregationMatrix::ones_on_support(&g);
        assert_eq!(
            aggregated_diffusion(&a_hat, &ones, &h).unwrap(),
            feature_diffusion(&a_hat, &h).unwrap()
        );
        let twos = AggregationMatrix::from_matrix(ones.matrix().scale(2.0)).unwrap();
        let doubled = aggregated_diffusion(&a_hat, &twos, &h).unwrap();
        let expected = feature_diffusion(&a_hat, &h).unwrap().scale(2.0);
        for (a, b) in doubled.data().iter().zip(expected.data()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn layer_with_full_skip_returns_input() {
        let op = two_node_operator();
        let h = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let x0 = DenseMatrix::from_rows(&[[-1.0, 2.0], [4.0, -0.25]]);
        let w = DenseMatrix::from_rows(&[[0.3, -0.1], [0.2, 0.7]]);
        let (pre, act) = layer_forward(&h, &x0, &op, &w, 1.0, 0.0).unwrap();
        assert_eq!(pre, x0);
        assert_eq!(act, DenseMatrix::from_rows(&[[0.0, 2.0], [4.0, 0.0]]));
    }

    #[test]
    fn layer_without_mixing_is_plain_diffusion() {
        let op = DenseMatrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]);
        let h = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let x0 = DenseMatrix::from_rows(&[[9.0, 9.0], [9.0, 9.0]]);
        let w = DenseMatrix::from_rows(&[[0.3, -0.1], [0.2, 0.7]]);
        let (pre, _) = layer_forward(&h, &x0, &op, &w, 0.0, 0.0).unwrap();
        assert_eq!(pre, op.matmul(&h).unwrap());
    }

    #[test]
    fn four_term_expansion_with_zero_weight() {
        // M = [[0.6, 0.4], [0.4, 0.6]], W = 0 so I + W = I.
        let op = DenseMatrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]);
        let h = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        let x0 = DenseMatrix::from_rows(&[[0.5, -1.0], [2.0, 1.0]]);
        let w = DenseMatrix::zeros(2, 2);
        let (pre, act) = layer_forward(&h, &x0, &op, &w, 0.1, 0.3).unwrap();
        // M h = [[1.8, 0.8], [2.2, 0.2]]
        // pre = 0.9 Mh + 0.3 Mh + 0.1 x0 + 0.3 x0 = 1.2 Mh + 0.4 x0
        let expected = [[2.36, 0.56], [3.44, 0.64]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((pre.get(i, j) - expected[i][j]).abs() < 1e-12);
                assert!((act.get(i, j) - expected[i][j].max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_layer_forward_is_projection_then_head() {
        let mut rng = crate::rng::seeded(2);
        let params = ModelParams::init(&mut rng, 3, 4, 2, 0, 0.1, 0.3).unwrap();
        let x = DenseMatrix::from_fn(5, 3, |i, j| (i as f64) * 0.1 - j as f64);
        let op = DenseMatrix::identity(5);
        let trace = forward_with_operator(&params, &op, &x, Activation::Relu).unwrap();
        let expected = x
            .matmul(&params.input_projection)
            .unwrap()
            .matmul(&params.output_head)
            .unwrap();
        assert_eq!(trace.logits, expected);
        assert!(trace.activations.is_empty());
    }

    #[test]
    fn single_layer_forward_matches_layer_forward() {
        let mut rng = crate::rng::seeded(3);
        let mut params = ModelParams::init(&mut rng, 2, 2, 2, 1, 0.1, 0.3).unwrap();
        params.input_projection = DenseMatrix::identity(2);
        params.layers[0] = DenseMatrix::zeros(2, 2);
        let op = DenseMatrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]);
        let x = DenseMatrix::from_rows(&[[0.5, -1.0], [2.0, 1.0]]);
        let trace = forward_with_operator(&params, &op, &x, Activation::Relu).unwrap();
        let (pre, act) = layer_forward(&x, &x, &op, &params.layers[0], 0.1, 0.3).unwrap();
        assert_eq!(trace.pre_activations[0], pre);
        assert_eq!(trace.activations[0], act);
    }

    #[test]
    fn activations_are_nonnegative() {
        let mut rng = crate::rng::seeded(4);
        let params = ModelParams::init(&mut rng, 3, 5, 2, 4, 0.2, 0.4).unwrap();
        let x = DenseMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let op = DenseMatrix::from_fn(6, 6, |i, j| if i == j { 0.5 } else { 0.1 });
        let trace = forward_with_operator(&params, &op, &x, Activation::Relu).unwrap();
        assert!(trace.activations.iter().all(|a| a.data().iter().all(|&v| v >= 0.0)));
        assert_eq!(trace.activations.len(), 4);
        assert!(trace.activations.iter().all(|a| a.shape() == (6, 5)));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut rng = crate::rng::seeded(5);
        assert!(ModelParams::init(&mut rng, 3, 4, 2, 2, 1.5, 0.0).is_err());
        let mut p = ModelParams::init(&mut rng, 3, 4, 2, 2, 0.5, 0.5).unwrap();
        p.layers[1] = DenseMatrix::zeros(3, 3);
        assert!(matches!(p.validate(), Err(Error::Layer { index: 1, .. })));
    }

    #[test]
    fn softmax_examples() {
        let p = predict(&DenseMatrix::from_rows(&[[0.0, 0.0], [1f64.ln(), 3f64.ln()], [1000.0, 1000.0]]));
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.get(1, 0) - 0.25).abs() < 1e-15 && (p.get(1, 1) - 0.75).abs() < 1e-15);
        assert_eq!(p.row(2), &[0.5, 0.5]);
    }
}
