//! Complex-valued multi-branch 3D CNN for polarimetric SAR pixel
//! classification: T3 ingestion, patch datasets, complex layers with analytic
//! gradients, Adam training with early stopping, metrics and post-processing,
//! and a Wishart scene generator for desk-scale experiments.

pub mod cvnn;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod tensor;
pub mod train;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use error::{Error, Result};
pub use scene::{Channel, CoherencyImage, LabelMap};
pub use tensor::ComplexTensor;
