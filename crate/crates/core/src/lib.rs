//! Topological bias auditing and contrastive debiasing for heterogeneous graphs.

pub mod biasmetrics;
pub mod config;
pub mod encoder;
pub mod error;
pub mod hetgraph;
pub mod hlid;
pub mod htad;
pub mod losses;
pub mod metaweight;
pub mod pipeline;
pub mod seed;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
