//! Spectral patch-graph localization, cut-out-and-replay memory and
//! low-rank regularized training for multi-label online continual learning.

pub mod assessor;
pub mod cli;
pub mod driver;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod patchgraph;
pub mod replay;
pub mod seeding;
pub mod spectral_cut;
pub mod stream;

pub use error::{Error, Result};
