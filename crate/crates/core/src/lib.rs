//! Learning tapestries: collections of residual-resampled prediction threads
//! built from multiview delay embeddings of noisy seasonal series.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`dataio`]: monthly CSV ingest, seasonal aggregation, standardized anomalies.
//! - [`embedding`]: Levina-Bickel intrinsic dimension, delay maps, view enumeration.
//! - [`neighbors`]: exact k-nearest-neighbor search.
//! - [`regression`]: lasso-LARS paths, Mallows Cp selection, residual resampling.
//! - [`tapestry`]: thread ensembles, Gaussian reweighting, predictive densities,
//!   triangular likelihood tables.
//! - [`inference`]: autocovariance-adjusted paired t-tests, FDR control, KS uniformity.
//! - [`scenario`]: three-category what-if conditioning.
//! - [`synth`]: Lorenz-63 and AR(1) benchmark generators.

pub mod dataio;
pub mod embedding;
mod error;
pub mod inference;
pub mod neighbors;
pub mod regression;
pub(crate) mod rng;
pub mod scenario;
pub mod synth;
pub mod tapestry;

pub use error::{Error, Result};
