//! Convergence diagnostics for Markov chain Monte Carlo draws.
//!
//! Rank-normalized split-R̂, folded-split-R̂, bulk/tail/quantile/local
//! effective sample sizes and quantile Monte Carlo standard errors, plus
//! simulated failure scenarios and SVG diagnostic plots.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` case.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain_core;
pub mod cli;
pub mod error;
pub mod ess;
pub mod mcse;
pub mod plots;
pub mod report_io;
pub mod rhat;
pub mod scalar;
pub mod simulate;
pub mod special;
pub mod summary;
pub mod transforms;

pub use chain_core::{
    validate, ChainStat, DiagnosticConfig, DiagnosticsReport, Flag, NonFinitePolicy,
    QuantileEstimate, ValidationFlag,
};
pub use error::{DiagError, Result};
pub use ess::{EssEstimator, EssResult};
pub use mcse::QuantileMcse;
pub use plots::{PlotKind, PlotOptions, RankPlotData};
pub use report_io::{DrawsFileFormat, Layout, ReportFormat};
pub use scalar::Scalar;
pub use simulate::{Manipulation, Process, ScenarioSpec, SweepResult};
pub use summary::{diagnose, summarize};
pub use transforms::SplitDraws;

/// Draws stored as `f64`.
pub type DrawsMatrix = chain_core::DrawsMatrix<f64>;
/// Draws stored as `f32`.
pub type DrawsMatrix32 = chain_core::DrawsMatrix<f32>;
pub type GenericDrawsMatrix<T> = chain_core::DrawsMatrix<T>;
pub type VarianceDecomposition = rhat::VarianceDecomposition<f64>;
pub type AutocorrSpectrum = ess::AutocorrSpectrum<f64>;
