//! Population graphs: subjects are nodes, imaging features drive a kernel
//! similarity and phenotypic agreement gates and scales each edge.
//!
//! `A_ij = K(i, j) · Σ_t d(M_t(i), M_t(j))` with
//! `K(i, j) = exp(-ρ(x_i, x_j)² / 2σ²)` and `ρ` the correlation distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::matrix::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Qualitative(Vec<String>),
    Quantitative { values: Vec<f64>, tau: f64 },
}

/// A non-imaging per-subject attribute such as sex, site or age.
#[derive(Clone, Debug, PartialEq)]
pub struct PhenotypicMeasure {
    name: String,
    kind: MeasureKind,
}

impl PhenotypicMeasure {
    pub fn qualitative(name: impl Into<String>, values: Vec<String>) -> Self {
        PhenotypicMeasure {
            name: name.into(),
            kind: MeasureKind::Qualitative(values),
        }
    }

    pub fn quantitative(name: impl Into<String>, values: Vec<f64>, tau: f64) -> Result<Self> {
        let name = name.into();
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!(
                "measure {name}: tau must be positive, got {tau}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "measure {name}: non-finite value for subject {i}"
            )));
        }
        Ok(PhenotypicMeasure {
            name,
            kind: MeasureKind::Quantitative { values, tau },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            MeasureKind::Qualitative(v) => v.len(),
            MeasureKind::Quantitative { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Kernel width: explicit, or the median of all pairwise correlation
/// distances.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma {
    #[default]
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Sigma {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Sigma::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected 'auto' or a number, got {s:?}"))?;
        Ok(Sigma::Fixed(v))
    }
}

#[derive(Clone, Debug)]
pub struct PopulationGraphSpec<'a> {
    pub features: &'a DenseMatrix,
    pub measures: &'a [PhenotypicMeasure],
    pub sigma: Sigma,
}

/// `1 − r(x_i, x_j)` where `r` is the Pearson correlation; in `[0, 2]`.
pub fn correlation_distance(xi: &[f64], xj: &[f64]) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::LengthMismatch {
            left: xi.len(),
            right: xj.len(),
        });
    }
    let ci = centered(xi).ok_or(Error::DegenerateVector { subject: None })?;
    let cj = centered(xj).ok_or(Error::DegenerateVector { subject: None })?;
    Ok(centered_distance(&ci, &cj))
}

/// Mean-centered copy and its Euclidean norm; `None` for a constant vector
/// or one shorter than two entries.
fn centered(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    if x.len() < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then_some((c, norm))
}

fn centered_distance((ci, ni): &(Vec<f64>, f64), (cj, nj): &(Vec<f64>, f64)) -> f64 {
    let dot: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
    let r = (dot / (ni * nj)).clamp(-1.0, 1.0);
    1.0 - r
}

pub fn kernel_similarity(rho: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    Ok((-(rho * rho) / (2.0 * sigma * sigma)).exp())
}

/// Agreement indicator for one measure: equality for qualitative values,
/// `|M(i) − M(j)| < τ` for quantitative ones.
pub fn phenotypic_distance(m: &PhenotypicMeasure, i: usize, j: usize) -> u8 {
    let agree = match &m.kind {
        MeasureKind::Qualitative(v) => v[i] == v[j],
        MeasureKind::Quantitative { values, tau } => (values[i] - values[j]).abs() < *tau,
    };
    u8::from(agree)
}

/// Symmetric matrix of correlation distances between feature rows (zero
/// diagonal).
pub fn pairwise_correlation_distances(features: &DenseMatrix) -> Result<DenseMatrix> {
    let n = features.rows();
    let centered_rows = (0..n)
        .map(|i| centered(features.row(i)).ok_or(Error::DegenerateVector { subject: Some(i) }))
        .collect::<Result<Vec<_>>>()?;
    let mut rho = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = centered_distance(&centered_rows[i], &centered_rows[j]);
            rho.set(i, j, d);
            rho.set(j, i, d);
        }
    }
    Ok(rho)
}

/// Median of the strict upper triangle of `rho`; the mean of the two middle
/// values for an even count.
pub fn median_pairwise(rho: &DenseMatrix) -> f64 {
    let n = rho.rows();
    let mut values: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| rho.get(i, j))
        .collect();
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Resolves `Sigma::Auto` against the given distances.
pub fn resolve_sigma(sigma: Sigma, rho: &DenseMatrix) -> Result<f64> {
    let s = match sigma {
        Sigma::Fixed(s) => s,
        Sigma::Auto => median_pairwise(rho),
    };
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonPositiveSigma(s));
    }
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct PopulationGraph {
    pub graph: Graph,
    pub sigma: f64,
}

/// Builds the population adjacency. Pairs with no phenotypic agreement get no
/// edge; the diagonal is left to [`crate::graph::add_self_loops`].
pub fn build_adjacency(spec: &PopulationGraphSpec<'_>) -> Result<Graph> {
    build_population_graph(spec).map(|p| p.graph)
}

pub fn build_population_graph(spec: &PopulationGraphSpec<'_>) -> Result<PopulationGraph> {
    let n = spec.features.rows();
    if n < 2 {
        return Err(Error::invalid("population graph needs at least two subjects"));
    }
    if spec.measures.is_empty() {
        return Err(Error::invalid("population graph needs at least one phenotypic measure"));
    }
    for m in spec.measures {
        if m.len() != n {
            return Err(Error::invalid(format!(
                "measure {} covers {} subjects, features have {n}",
                m.name(),
                m.len()
            )));
        }
    }
    let rho = pairwise_correlation_distances(spec.features)?;
    let sigma = resolve_sigma(spec.sigma, &rho)?;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let agreement: u32 = spec
                .measures
                .iter()
                .map(|m| u32::from(phenotypic_distance(m, i, j)))
                .sum();
            if agreement == 0 {
                continue;
            }
            let weight = kernel_similarity(rho.get(i, j), sigma)? * f64::from(agreement);
            if weight > 0.0 {
                edges.push(Edge { i, j, weight });
            }
        }
    }
    Ok(PopulationGraph {
        graph: Graph::new(n, edges)?,
        sigma,
    })
}

/// Fisher-transforms the strict upper triangle of a correlation matrix and
/// flattens it row by row.
pub fn connectome_features(corr: &DenseMatrix) -> Result<Vec<f64>> {
    if !corr.is_square() {
        return Err(Error::shape("connectome_features", corr.shape(), corr.shape()));
    }
    let n = corr.rows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let r = corr.get(i, j);
            if r.abs() >= 1.0 {
                return Err(Error::OutOfRange { row: i, col: j, value: r });
            }
            out.push(r.atanh());
        }
    }
    Ok(out)
}

/// Inverse of the flattening in [`connectome_features`]: places `values`
/// back on the strict upper triangle of an `n_roi × n_roi` matrix (mirrored,
/// zero diagonal). No inverse Fisher transform is applied.
pub fn unflatten_upper(values: &[f64], n_roi: usize) -> Result<DenseMatrix> {
    if values.len() != n_roi * n_roi.saturating_sub(1) / 2 {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: n_roi * n_roi.saturating_sub(1) / 2,
        });
    }
    let mut m = DenseMatrix::zeros(n_roi, n_roi);
    let mut k = 0;
    for i in 0..n_roi {
        for j in i + 1..n_roi {
            m.set(i, j, values[k]);
            m.set(j, i, values[k]);
            k += 1;
        }
    }
    Ok(m)
}

/// Maps binary class labels to ridge targets `{-1, +1}`.
pub fn signed_targets(labels: &[usize]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(-1.0),
            1 => Ok(1.0),
            other => Err(Error::invalid(format!("binary label expected, got {other}"))),
        })
        .collect()
}

/// Ridge weights `w = (XᵀX + λI)⁻¹ Xᵀy`.
pub fn ridge_weights(x: &DenseMatrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let mut gram = x.t_matmul(x)?;
    for k in 0..gram.rows() {
        gram.set(k, k, gram.get(k, k) + lambda);
    }
    let xty: Vec<f64> = (0..x.cols())
        .map(|c| (0..x.rows()).map(|r| x.get(r, c) * y[r]).sum())
        .collect();
    cholesky_solve(&gram, &xty)
}

/// Solves `A w = b` for symmetric positive definite `A`.
fn cholesky_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let scale = (0..n).map(|k| a.get(k, k).abs()).fold(0.0, f64::max).max(1.0);
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 1e-12 * scale) {
            return Err(Error::SingularSystem { column: j, pivot: d });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * w[k];
        }
        w[i] = s / l.get(i, i);
    }
    Ok(w)
}

/// Recursive feature elimination driven by ridge weights on `±1` targets.
///
/// Each round refits on the surviving columns and drops the `step` columns
/// with the smallest `|w|` (lower original index first on ties), never going
/// below `target_dim`. `step = None` drops 10% of the remaining columns per
/// round (at least one). Returns surviving column indices in ascending order.
pub fn rfe_ridge(
    features: &DenseMatrix,
    targets: &[f64],
    target_dim: usize,
    lambda: f64,
    step: Option<usize>,
) -> Result<Vec<usize>> {
    let f = features.cols();
    if target_dim == 0 || target_dim > f {
        return Err(Error::invalid(format!(
            "target_dim must be in 1..={f}, got {target_dim}"
        )));
    }
    if step == Some(0) {
        return Err(Error::invalid("rfe step must be at least 1"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if let Some(t) = targets.iter().find(|&&t| t != 1.0 && t != -1.0) {
        return Err(Error::invalid(format!("ridge targets must be ±1, got {t}")));
    }
    let mut remaining: Vec<usize> = (0..f).collect();
    while remaining.len() > target_dim {
        let surplus = remaining.len() - target_dim;
        let drop = step
            .unwrap_or_else(|| (remaining.len() / 10).max(1))
            .min(surplus);
        let w = ridge_weights(&features.select_columns(&remaining), targets, lambda)?;
        // weights equal to ~12 significant digits count as ties
        let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let key = |k: usize| {
            if scale > 0.0 {
                (w[k].abs() / scale * 1e12).round()
            } else {
                0.0
            }
        };
        let mut order: Vec<usize> = (0..remaining.len()).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(remaining[a].cmp(&remaining[b])));
        let mut dropped = vec![false; remaining.len()];
        for &k in &order[..drop] {
            dropped[k] = true;
        }
        remaining = remaining
            .iter()
            .zip(&dropped)
            .filter(|(_, &d)| !d)
            .map(|(&c, _)| c)
            .collect();
    }
    Ok(remaining)
}
