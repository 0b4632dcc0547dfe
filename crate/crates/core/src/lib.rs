//! Benign-versus-malignant voice classification benchmark.
//!
//! The numeric core (feature extraction, preprocessing, classifiers, metrics)
//! is generic over [`Scalar`]; datasets, bundles and the benchmark runner use
//! `f64`, for which the aliases below are provided.

pub mod audio;
pub mod benchmark;
pub mod classifiers;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod extract;
pub mod features;
pub mod matrix;
pub mod model_selection;
pub mod persist;
pub mod preprocessing;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod timing;

pub use benchmark::{run_benchmark, CellOutcome, CellStatus, RunSummary};
pub use classifiers::{Algorithm, HyperParams};
pub use config::{CellKey, RunConfig};
pub use dataset::{Label, LabeledDataset, PatientRecord};
pub use error::{Error, Result};
pub use features::FeatureSet;
pub use persist::{load_bundle, save_bundle, ModelBundle};
pub use preprocessing::InputVariant;
pub use scalar::Scalar;

pub type Matrix = matrix::FeatureMatrix<f64>;
pub type Recording = audio::Recording<f64>;
pub type Pipeline = model_selection::FittedPipeline<f64>;
pub type Model = classifiers::FittedModel<f64>;
pub type Preprocessor = preprocessing::Preprocessor<f64>;
