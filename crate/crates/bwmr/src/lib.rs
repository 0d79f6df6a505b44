//! Bayesian weighted Mendelian randomization (BWMR) from GWAS summary statistics.
//!
//! The crate estimates the causal effect of an exposure on an outcome from
//! per-SNP summary statistics. The estimator is a variational EM fit of a
//! hierarchical Gaussian model with Bernoulli-Beta instrument weights that
//! downweight pleiotropic outliers, followed by a linear-response correction
//! of the variational posterior variance. Reference estimators (IVW, Egger,
//! GSMR-lite, RAPS-lite), summary-level and individual-level simulation
//! generators, and GWAS file ingestion round out the toolkit behind the
//! `bwmr` command-line interface.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod gwas;
pub mod lrvb;
pub mod model;
pub mod simulation;
pub mod special;

mod error;

pub use data::SummaryDataset;
pub use error::Error;
pub use lrvb::{estimate, CausalEstimate};
pub use model::{fit_vem, FitResult, ModelConfig, ModelParams, VariationalState};

pub type Result<T> = std::result::Result<T, Error>;
