//! Label-free model selection for unsupervised domain adaptation.
//!
//! The crate scores candidate models from evaluation dumps (source features,
//! labels and predictions; target features and predictions) with twelve
//! unsupervised metrics, measures how well each metric tracks target
//! accuracy across a model set, and drives hyperparameter search with a
//! tree-structured Parzen estimator.
//!
//! Module map:
//!
//! - [`bundle`]: the `UDAB1` on-disk container and its validation.
//! - [`numerics`]: entropy, correlation, nuclear norm, k-means, AMI.
//! - [`probes`]: small trainable heads with a deterministic L-BFGS trainer.
//! - [`metrics`]: the metric registry.
//! - [`consistency`]: correlation / best-model deviation reports.
//! - [`synth`]: synthetic two-domain scenarios and model sweeps.
//! - [`search`]: search spaces, TPE sampler, median pruner, trial driver.

pub mod bundle;
pub mod consistency;
pub mod metrics;
pub mod numerics;
pub mod probes;
pub mod search;
pub mod synth;

pub use bundle::{read_bundle, write_bundle, BundleError, BundleSet, EvaluationBundle, HyperValue};
pub use metrics::{compute_all, MetricError, MetricName, MetricScore, MetricSeeds};
