//! Aggregator-normalization graph convolutional networks (AN-GCN) for
//! semi-supervised node classification on population graphs.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod popgraph;
pub mod rng;
pub mod sampler;
pub mod training;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
