//! The weighted hierarchical model and its variational EM fit.
//!
//! Latent variables: the causal effect `beta`, per-SNP exposure effects
//! `gamma_j`, per-SNP Bernoulli weights `w_j`, and the weight proportion
//! `pi_1` with a Beta(a0, 1) prior. Model parameters: the pleiotropy
//! variance `tau_sq` and the exposure-effect prior variance `sigma_sq`.
//! The variational family is fully factorized: Gaussian factors for `beta`
//! and each `gamma_j`, Bernoulli for each `w_j`, Beta for `pi_1`.

mod elbo;
mod updates;

pub use elbo::compute_elbo;
pub use updates::{e_step, m_step};

use crate::data::SummaryDataset;
use crate::{Error, Result};

pub(crate) const TAU_SQ_FLOOR: f64 = 1e-8;
const SIGMA_SQ_FLOOR: f64 = 1e-12;

/// Fixed hyperparameters and solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Prior variance of beta (sigma_0^2).
    pub sigma0_sq: f64,
    /// Beta prior shape a0; the prior mean weight is a0/(a0+1).
    pub a0: f64,
    pub max_iter: usize,
    /// Relative ELBO change below which the fit stops.
    pub elbo_tol: f64,
    /// Clamp keeping every weight inside (0, 1).
    pub weight_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { sigma0_sq: 1e12, a0: 100.0, max_iter: 5000, elbo_tol: 1e-8, weight_floor: 1e-10 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_sq > 0.0) {
            return Err(Error::InvalidData("sigma0_sq must be > 0".into()));
        }
        if !(self.a0 >= 1.0) {
            return Err(Error::InvalidData("a0 must be >= 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidData("max_iter must be >= 1".into()));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 0.5) {
            return Err(Error::InvalidData("weight_floor must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Model parameters estimated in the M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub tau_sq: f64,
    pub sigma_sq: f64,
}

/// All variational parameters of the factorized posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu_beta: f64,
    pub sigma_beta_sq: f64,
    pub mu_gamma: Vec<f64>,
    pub sigma_gamma_sq: Vec<f64>,
    pub pi_w: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl VariationalState {
    pub fn n(&self) -> usize {
        self.mu_gamma.len()
    }

    /// Sum of the weight probabilities; `a` and `b` are kept equal to
    /// a0 + sum and N + 1 - sum after every E-step.
    pub fn weight_sum(&self) -> f64 {
        self.pi_w.iter().sum()
    }
}

/// Converged (or iteration-capped) fit output.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: VariationalState,
    pub params: ModelParams,
    /// ELBO after each completed E+M iteration.
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Initial state: exposure factors centered on the observed effects, the
/// beta factor centered on the inverse-variance-weighted ratio estimate,
/// weights at their Beta(a0, 1) prior mean. Negating every outcome effect
/// negates mu_beta and leaves all variances and weights unchanged.
pub fn init_state(data: &SummaryDataset, cfg: &ModelConfig) -> Result<(VariationalState, ModelParams)> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall(n));
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        let w = 1.0 / (data.sigma_y[j] * data.sigma_y[j]);
        num += data.big_gamma_hat[j] * data.gamma_hat[j] * w;
        den += data.gamma_hat[j] * data.gamma_hat[j] * w;
    }
    let mu_beta = if den > 0.0 && (num / den).is_finite() { num / den } else { 0.0 };

    let pi0 = cfg.a0 / (cfg.a0 + 1.0);
    let weight_sum = pi0 * n as f64;

    let sigma_sq = (data.gamma_hat.iter().map(|g| g * g).sum::<f64>() / n as f64).max(SIGMA_SQ_FLOOR);

    let resid: Vec<f64> =
        (0..n).map(|j| data.big_gamma_hat[j] - mu_beta * data.gamma_hat[j]).collect();
    let mean = resid.iter().sum::<f64>() / n as f64;
    let tau_sq =
        (resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64).max(TAU_SQ_FLOOR);

    let state = VariationalState {
        mu_beta,
        sigma_beta_sq: 1.0,
        mu_gamma: data.gamma_hat.clone(),
        sigma_gamma_sq: data.sigma_x.iter().map(|s| s * s).collect(),
        pi_w: vec![pi0; n],
        a: cfg.a0 + weight_sum,
        b: n as f64 + 1.0 - weight_sum,
    };
    Ok((state, ModelParams { tau_sq, sigma_sq }))
}

/// Full variational EM fit: alternate E and M steps, stop when the relative
/// ELBO change falls below `elbo_tol` or `max_iter` is reached.
/// Non-convergence is reported through the flag, not as an error.
pub fn fit_vem(data: &SummaryDataset, cfg: &ModelConfig) -> Result<FitResult> {
    let (mut state, mut params) = init_state(data, cfg)?;
    let mut elbo_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iter {
        state = e_step(&state, &params, data, cfg).map_err(|e| e.at_iteration(iter))?;
        params = m_step(&state, &params, data).map_err(|e| e.at_iteration(iter))?;
        let elbo = compute_elbo(&state, &params, data, cfg).map_err(|e| e.at_iteration(iter))?;
        iterations = iter + 1;
        if let Some(&prev) = elbo_trace.last() {
            let rel = (elbo - prev).abs() / (elbo.abs() + 1.0);
            elbo_trace.push(elbo);
            if rel < cfg.elbo_tol {
                converged = true;
                break;
            }
        } else {
            elbo_trace.push(elbo);
        }
    }

    Ok(FitResult { state, params, elbo_trace, iterations, converged })
}

#[cfg(test)]
mod tests;
