//! Dual-stream synthetic speech detection.
//!
//! A shared convolutional backbone feeds two streams. The synthesizer stream
//! learns which generator produced a clip; the content stream learns the
//! compression and speed transforms applied to it while being pushed away
//! from synthesizer identity. A final head classifies the concatenation of
//! both stream features as real or fake.

pub mod audio;
pub mod augment;
pub mod error;
pub mod eval;
pub mod exec;
pub mod losses;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod train;
pub mod transforms;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{DualStreamModel, ModelConfig, ModelOutputs};
