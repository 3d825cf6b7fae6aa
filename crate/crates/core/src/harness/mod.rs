//! Two-phase training, evaluation metrics and experiment drivers.

mod checks;
mod config;
mod experiment;
mod metrics;
mod model;
mod optim;
mod train;

pub use checks::{gradient_suite, CheckResult};
pub use config::{ConfigValue, ExperimentConfig};
pub use experiment::*;
pub use metrics::{auroc, average_precision, mean_std};
pub use model::{
    bce_with_logit, Classifier, ClassifierGrads, CodeCache, CodeEncoder, FeatureStack, JointView,
    SingleView, TextEncoder, ViewEncoder,
};
pub use optim::Adam;
pub use train::*;
