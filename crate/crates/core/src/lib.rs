//! Negative Correlation Extreme Learning Machine (NCELM): an ensemble of
//! random-hidden-layer ridge classifiers trained by a synchronous
//! fixed-point iteration, with full convergence diagnostics — distances
//! between iterates, low-rank Woodbury corrections, inverse-system norm
//! ratios, and computable upper bounds on the diversity parameter.
//!
//! Modules:
//! - [`dataio`]: CSV loading, 1-of-J encoding, standardization, splits.
//! - [`elm`]: the random hidden layer and closed-form ridge base learner.
//! - [`ncelm`]: the ensemble, its update map and the training loop.
//! - [`diagnostics`]: distances, norms, corrections and lambda bounds.
//! - [`trace`]: per-iteration records and the CSV/JSON trace formats.

pub mod dataio;
pub mod diagnostics;
pub mod elm;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ncelm;
pub mod rng;
pub mod trace;

pub use dataio::{Dataset, LabelColumn, StandardizationParams};
pub use elm::{Activation, BaseLearner, HiddenLayer};
pub use error::{NcelmError, Result};
pub use ncelm::{
    train, EnsembleState, FixedPointMap, NcelmConfig, NcelmModel, TrainedEnsemble,
};
pub use trace::{ConvergenceTrace, DiagnosticsReport, IterationRecord};
