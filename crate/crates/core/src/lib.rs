//! Label-free accuracy estimation for a fixed classifier.
//!
//! A classifier's penultimate-layer features on an unlabeled dataset are
//! summarized into a fixed-length, semi-structured vector (per-dimension
//! histograms, cluster centers, farthest-point samples) and a small
//! regression network maps that vector to the classifier's accuracy on the
//! dataset. The crate also ships the scalar baselines this approach is
//! usually compared with, a synthetic meta-set generator that produces
//! shifted datasets with known accuracy, and an experiment harness.
//!
//! Modules:
//!
//! - [`featureset`]: feature collections and the `FSET` binary container
//! - [`represent`]: reference frames and dataset representations
//! - [`baselines`]: softmax-threshold, average-confidence and Fréchet estimators
//! - [`regress`]: the accuracy regressor
//! - [`metaset`]: toy task, toy classifier and shifted-set synthesis
//! - [`harness`]: experiments, RMSE reports and ablations
//! - [`cli`]: the `autoeval` command line

pub mod baselines;
pub mod cli;
pub mod error;
pub mod featureset;
pub mod harness;
mod io_util;
pub mod matrix;
pub mod metaset;
pub mod nn;
pub mod regress;
pub mod represent;

pub use error::{Error, Result};
pub use featureset::FeatureSet;
pub use matrix::Matrix;
