//! DOA estimation under hybrid analog-digital (HAD) receive front-ends.
//!
//! An analog combining network compresses M antenna outputs into L RF-chain
//! observations before digitization, which breaks the classical
//! full-dimensional estimation pipeline. This crate provides the pieces
//! needed to study and benchmark that regime:
//!
//! - [`array`]: narrowband ULA signal model (steering, snapshots, covariance)
//! - [`combiner`]: the four combining architectures and their constraints
//! - [`recon`]: full-dimensional covariance reconstruction from hybrid
//!   measurements (entry-wise, Toeplitz-lag, and beamspace routes)
//! - [`music`]: MUSIC in the antenna or RF-chain domain
//! - [`scan`]: two-stage wide/narrow beam-sweep estimation
//! - [`pilot`]: pilot-aided virtual-array estimation
//! - [`harness`]: seeded, reproducible Monte Carlo RMSE sweeps
//! - [`config`]/[`output`]: experiment files and CSV/SVG/manifest emission
//!   for the `hadoa` command-line benchmark

pub mod array;
pub mod combiner;
pub mod error;
pub mod linalg;
pub mod recon;
pub mod seed;

pub use array::{ArrayGeometry, NoiseSpec, SnapshotDomain, SnapshotMatrix, SourceScenario};
pub use combiner::{Combiner, CombinerSpec};
pub use error::{Error, Result};
pub use recon::{CovarianceMatrix, CovarianceRole, ReconstructionMode, ReconstructionPlan};
