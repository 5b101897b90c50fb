//! Experiment harness around `bregtv-core`: phantoms, file formats,
//! key=value experiment configs and the `bregtv` command-line tool.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod phantom;
pub mod plot;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentReport};
pub use phantom::{make_phantom, PhantomKind};
