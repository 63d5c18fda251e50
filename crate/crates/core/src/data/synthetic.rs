use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::popgraph::{connectome_features, PhenotypicMeasure};
use crate::rng::{self, Stream};

/// Two-class synthetic population shaped like a connectome study: each
/// subject gets an `n_roi × n_roi` correlation matrix whose Fisher-z values
/// are a shared template plus a class shift plus subject noise, along with an
/// acquisition site (class-linked with probability
/// `phenotype_informativeness`) and an age unrelated to the class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_roi: usize,
    /// Mahalanobis distance between the two class means in feature space.
    pub class_separation: f64,
    pub phenotype_informativeness: f64,
    pub n_sites: usize,
    pub age_tau: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_subjects: 300,
            n_roi: 16,
            class_separation: 2.0,
            phenotype_informativeness: 0.6,
            n_sites: 4,
            age_tau: 2.0,
            seed: 0,
        }
    }
}

const NOISE: f64 = 0.1;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 20 {
            return Err(Error::invalid("synthetic data needs at least 20 subjects"));
        }
        if self.n_roi < 3 {
            return Err(Error::invalid("synthetic data needs at least 3 regions"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::invalid("class_separation must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.phenotype_informativeness) {
            return Err(Error::invalid("phenotype_informativeness must lie in [0, 1]"));
        }
        if self.n_sites < 2 || self.n_sites % 2 != 0 {
            return Err(Error::invalid("n_sites must be even and at least 2"));
        }
        if !(self.age_tau > 0.0) {
            return Err(Error::invalid("age_tau must be positive"));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let mut rng = rng::derived(spec.seed, Stream::Synthetic, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = spec.n_subjects;
    let f = spec.n_roi * (spec.n_roi - 1) / 2;

    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    labels.shuffle(&mut rng);

    let template: Vec<f64> = (0..f).map(|_| 0.25 + 0.15 * std_normal.sample(&mut rng)).collect();
    let mut direction: Vec<f64> = (0..f).map(|_| std_normal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut data = Vec::with_capacity(n * f);
    for &y in &labels {
        let shift = (y as f64 - 0.5) * spec.class_separation * NOISE;
        let z: Vec<f64> = (0..f)
            .map(|k| template[k] + shift * direction[k] + NOISE * std_normal.sample(&mut rng))
            .collect();
        let corr = correlation_from_fisher(&z, spec.n_roi);
        data.extend(connectome_features(&corr)?);
    }
    let features = DenseMatrix::new(n, f, data)?;

    let half = spec.n_sites / 2;
    let sites: Vec<String> = labels
        .iter()
        .map(|&y| {
            let site = if rng.gen_bool(spec.phenotype_informativeness) {
                y * half + rng.gen_range(0..half)
            } else {
                rng.gen_range(0..spec.n_sites)
            };
            format!("site-{site}")
        })
        .collect();
    let ages: Vec<f64> = (0..n)
        .map(|_| (rng.gen_range(18.0..45.0_f64) * 10.0).round() / 10.0)
        .collect();

    Ok(DatasetBundle {
        name: format!("synthetic-n{}-sep{}-seed{}", n, spec.class_separation, spec.seed),
        subject_ids: (0..n).map(|i| format!("sub-{i:04}")).collect(),
        features,
        phenotypes: vec![
            PhenotypicMeasure::qualitative("site", sites),
            PhenotypicMeasure::quantitative("age", ages, spec.age_tau)?,
        ],
        labels,
    })
}

fn correlation_from_fisher(z: &[f64], n_roi: usize) -> DenseMatrix {
    let mut corr = DenseMatrix::identity(n_roi);
    let mut k = 0;
    for i in 0..n_roi {
        for j in i + 1..n_roi {
            let r = z[k].tanh();
            corr.set(i, j, r);
            corr.set(j, i, r);
            k += 1;
        }
    }
    corr
}
