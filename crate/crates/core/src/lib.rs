pub mod annotations;
pub mod audio_io;
pub mod breath_stats;
pub mod classifiers;
pub mod cli;
mod container;
pub mod error;
pub mod eval;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod plots;
pub mod postprocess;

pub use error::{Error, Result};
