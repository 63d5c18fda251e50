use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::ModelParams;
use crate::training::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus what is needed to reproduce the evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
    /// SHA-256 over the little-endian bytes of Γ, row-major.
    pub gamma_digest: String,
    pub seed: u64,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    /// Input feature columns kept by RFE, in order; all columns when RFE is off.
    pub feature_columns: Vec<usize>,
}

pub fn gamma_digest(gamma: &DenseMatrix) -> String {
    let mut h = Sha256::new();
    for v in gamma.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = crate::io::read_json(path)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.params.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut r = rng::seeded(5);
        let params = ModelParams::init(&mut r, 7, 4, 2, 3, 0.1, 0.3).unwrap();
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: TrainConfig::default(),
            params,
            gamma_digest: gamma_digest(&DenseMatrix::identity(3)),
            seed: 5,
            fold: 2,
            test_indices: vec![1, 4, 9],
            feature_columns: (0..7).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.matrices().iter().zip(ck.params.matrices()) {
            let bits = |m: &DenseMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn digest_tracks_values() {
        let a = DenseMatrix::identity(2);
        let mut b = a.clone();
        b.set(0, 1, 1e-300);
        assert_ne!(gamma_digest(&a), gamma_digest(&b));
        assert_eq!(gamma_digest(&a).len(), 64);
    }

    #[test]
    fn rejects_other_versions() {
        let mut r = rng::seeded(1);
        let ck = Checkpoint {
            format_version: 99,
            config: TrainConfig::default(),
            params: ModelParams::init(&mut r, 2, 2, 2, 1, 0.0, 0.0).unwrap(),
            gamma_digest: String::new(),
            seed: 1,
            fold: 0,
            test_indices: vec![],
            feature_columns: vec![0, 1],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        ck.save(&p).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::SchemaMismatch(_))));
    }
}
