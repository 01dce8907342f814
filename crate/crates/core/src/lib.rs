//! Cost-sensitive neighborhood aggregation for node classification on
//! heterophilous graphs, with the MLP and GCN baselines, a contextual
//! stochastic block model lab and routing diagnostics.

pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod csbm;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod model;
pub mod optim;
pub mod rng;
pub mod splits;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
