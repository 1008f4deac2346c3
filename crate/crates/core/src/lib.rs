//! Topological pipeline for unsupervised analysis of customer transaction
//! data: Mapper graphs with stability-selected parameters, connectivity-based
//! anomaly detection, persistence-driven segmentation and permutation tests.

pub mod anomaly;
pub mod community;
pub mod dataio;
pub mod error;
pub mod graph_metrics;
pub mod mapper;
pub mod matrix;
pub mod pipeline;
pub mod seed;
pub mod stability;
pub mod stats;
pub mod tomato;
pub mod validate;

pub use error::{Error, Result};
pub use matrix::Matrix;
