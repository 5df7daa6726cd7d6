//! Tests of the additivity hypothesis in two-way layouts with one
//! observation per cell.
//!
//! * [`tabular`]: data model, double centering and the residual spectrum.
//! * [`distributions`]: F distribution numerics and seeded random streams.
//! * [`classic`]: Tukey, Mandel, Johnson–Graybill, LBI and Tusell tests.
//! * [`modified`]: the modified Tukey test with permutation and
//!   parametric-bootstrap small-sample adjustments.
//! * [`power`]: mixed-model data generator and power studies.
//! * [`ingest`]: CSV input.
//! * [`cli`]: the `additivity` command-line front end.

pub mod classic;
pub mod cli;
pub mod distributions;
pub mod error;
mod float_serde;
pub mod ingest;
pub mod modified;
pub mod power;
pub mod tabular;

pub use classic::{Method, MonteCarloCritical, RejectionSide, TestOutcome};
pub use distributions::{FParams, RngStream};
pub use error::{AdditivityError, Result};
pub use tabular::{fit_additive, spectrum, AdditiveFit, DataMatrix, SpectrumSummary};
