//! Synthetic benchmark generators and the replication harness.
//!
//! Two families of generators mirror the evaluation designs: direct
//! summary-level draws in five corruption regimes, and an individual-level
//! four-group GWAS pipeline reduced to summary statistics by per-SNP
//! regressions with an instrument-selection step.
//!
//! Randomness contract: every stream is a ChaCha12 counter-based generator.
//! Replicate k of a run seeded with s uses `replicate_seed(s, k)`, a
//! splitmix64 hash of the seed xored with the hashed replicate index, so
//! replicates are independent and the harness can run them in any order or
//! in parallel without changing a single bit of output.

mod individual;
mod oracle;
mod replicate;
mod summary;

pub use individual::gen_individual_level;
pub use oracle::{exact_posterior_oracle, OracleGrid};
pub use replicate::{run_replications, MethodReport, MrMethod, ReplicateRecord, ReplicationReport};
pub use summary::gen_summary_level;

use serde::Serialize;

use crate::{Error, Result};

/// splitmix64 finalizer; the standard 64-bit mixing function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Documented stream splitting: mix the run seed with the mixed replicate
/// index. Feeds `ChaCha12Rng::seed_from_u64`.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(seed ^ splitmix64(replicate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    IndividualFourGroup,
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Selection p-values from an independent exposure replicate; estimates
    /// from the primary exposure dataset. Avoids winner's curse.
    TwoDataset,
    /// Selection and estimation share one exposure dataset.
    Biased,
}

/// Every knob of both generator families. Regimes ignore the fields that do
/// not apply to them.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSpec {
    pub regime: Regime,
    pub beta: f64,
    pub seed: u64,

    // Summary-level regimes.
    pub n_snps: usize,
    pub sigma: f64,
    pub tau: f64,
    pub se_lower: f64,
    pub se_upper: f64,
    pub beta_c: f64,
    pub corrupt_rate: f64,
    pub tau_c: f64,
    pub mix_rate: f64,
    pub laplace_rate: f64,
    /// Randomize which indices are corrupted instead of using the leading
    /// block. Off by default for reproducibility.
    pub shuffle_corrupt: bool,

    // Individual-level regime.
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    pub prop_00: f64,
    pub prop_10: f64,
    pub prop_01: f64,
    pub prop_11: f64,
    pub snr1: f64,
    pub snr2: f64,
    pub sigma_gamma_sq: f64,
    pub sigma_alpha_sq: f64,
    pub pval_threshold: f64,
    pub selection_mode: SelectionMode,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            regime: Regime::Case1,
            beta: 0.0,
            seed: 0,
            n_snps: 100,
            sigma: 0.8,
            tau: 0.2,
            se_lower: 0.3,
            se_upper: 0.5,
            beta_c: 3.0,
            corrupt_rate: 0.2,
            tau_c: 3.0,
            mix_rate: 0.2,
            laplace_rate: 1.0,
            shuffle_corrupt: false,
            n0: 10_000,
            n1: 5_000,
            n2: 5_000,
            prop_00: 0.82,
            prop_10: 0.08,
            prop_01: 0.08,
            prop_11: 0.02,
            snr1: 1.0,
            snr2: 1.0,
            sigma_gamma_sq: 1.0,
            sigma_alpha_sq: 1.0,
            pval_threshold: 1e-5,
            selection_mode: SelectionMode::TwoDataset,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let props = [self.prop_00, self.prop_10, self.prop_01, self.prop_11];
        if props.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidSpec("group proportions must be nonnegative".into()));
        }
        if (props.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec("group proportions must sum to 1".into()));
        }
        if !(self.se_lower > 0.0 && self.se_lower <= self.se_upper) {
            return Err(Error::InvalidSpec("standard-error bounds need 0 < c <= d".into()));
        }
        if !(0.0..1.0).contains(&self.corrupt_rate) || !(0.0..1.0).contains(&self.mix_rate) {
            return Err(Error::InvalidSpec("corrupt_rate and mix_rate must lie in [0, 1)".into()));
        }
        if self.n_snps == 0 || self.n0 == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidSpec("all counts must be positive".into()));
        }
        if !(self.sigma > 0.0) || self.tau < 0.0 {
            return Err(Error::InvalidSpec("sigma must be positive, tau nonnegative".into()));
        }
        Ok(())
    }
}

/// Latent truth retained next to a generated dataset for scoring.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub beta: f64,
    /// True SNP-exposure effects, aligned with the dataset rows.
    pub gamma: Vec<f64>,
    /// True direct (pleiotropic) effects.
    pub alpha: Vec<f64>,
    /// True SNP-outcome effects.
    pub big_gamma: Vec<f64>,
    /// Corruption markers for the Case-2/Case-3 regimes; all false elsewhere.
    pub corrupted: Vec<bool>,
    /// Original SNP indices (individual-level selection only).
    pub selected: Option<Vec<usize>>,
}
