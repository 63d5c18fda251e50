//! Datasets, file formats and checkpoints.

mod bundle;
mod checkpoint;
mod synthetic;

pub use bundle::{load_adjacency, load_bundle, save_adjacency, save_bundle, DatasetBundle};
pub use checkpoint::{gamma_digest, Checkpoint, CHECKPOINT_VERSION};
pub use synthetic::{generate_synthetic, SyntheticSpec};
