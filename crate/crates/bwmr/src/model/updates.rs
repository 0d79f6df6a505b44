//! Closed-form coordinate updates for the E-step and M-step.

use super::{ModelConfig, ModelParams, VariationalState, TAU_SQ_FLOOR};
use crate::data::SummaryDataset;
use crate::special::digamma;
use crate::{Error, Result};

/// Expected squared residual of the weighted outcome likelihood for SNP j:
/// E_q[(Gamma_hat_j - beta * gamma_j)^2].
pub(crate) fn residual_second_moment(
    state: &VariationalState,
    data: &SummaryDataset,
    j: usize,
) -> f64 {
    let beta2 = state.mu_beta * state.mu_beta + state.sigma_beta_sq;
    let gamma2 = state.mu_gamma[j] * state.mu_gamma[j] + state.sigma_gamma_sq[j];
    let g = data.big_gamma_hat[j];
    beta2 * gamma2 - 2.0 * state.mu_beta * state.mu_gamma[j] * g + g * g
}

pub(crate) fn update_beta_block(
    state: &mut VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
    cfg: &ModelConfig,
) {
    let mut precision = 1.0 / cfg.sigma0_sq;
    let mut mean_num = 0.0;
    for j in 0..data.len() {
        let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
        let gamma2 = state.mu_gamma[j] * state.mu_gamma[j] + state.sigma_gamma_sq[j];
        precision += state.pi_w[j] * gamma2 / s2;
        mean_num += state.pi_w[j] * state.mu_gamma[j] * data.big_gamma_hat[j] / s2;
    }
    state.sigma_beta_sq = 1.0 / precision;
    state.mu_beta = mean_num * state.sigma_beta_sq;
}

pub(crate) fn update_gamma_block(
    state: &mut VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
    j: usize,
) {
    let sx2 = data.sigma_x[j] * data.sigma_x[j];
    let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
    let beta2 = state.mu_beta * state.mu_beta + state.sigma_beta_sq;
    let precision = 1.0 / sx2 + state.pi_w[j] * beta2 / s2 + 1.0 / params.sigma_sq;
    state.sigma_gamma_sq[j] = 1.0 / precision;
    state.mu_gamma[j] = (data.gamma_hat[j] / sx2
        + state.pi_w[j] * state.mu_beta * data.big_gamma_hat[j] / s2)
        * state.sigma_gamma_sq[j];
}

pub(crate) fn update_ab(state: &mut VariationalState, cfg: &ModelConfig) {
    let sum = state.weight_sum();
    state.a = cfg.a0 + sum;
    state.b = state.n() as f64 + 1.0 - sum;
}

pub(crate) fn update_w_block(
    state: &mut VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
    cfg: &ModelConfig,
    j: usize,
) {
    let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
    // log q_j1 - log q_j0, both factors in log space.
    let log_ratio = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * s2.ln()
        - residual_second_moment(state, data, j) / (2.0 * s2)
        + digamma(state.a)
        - digamma(state.b);
    let pi = 1.0 / (1.0 + (-log_ratio).exp());
    state.pi_w[j] = pi.clamp(cfg.weight_floor, 1.0 - cfg.weight_floor);
}

/// One E-step sweep: beta block, each gamma block, the Beta factor, each
/// weight, then a final Beta refresh so the a/b identities hold against the
/// updated weights. Every block lands on its conditional optimum, so the
/// sweep never decreases the ELBO.
pub fn e_step(
    state: &VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
    cfg: &ModelConfig,
) -> Result<VariationalState> {
    let mut next = state.clone();
    update_beta_block(&mut next, params, data, cfg);
    for j in 0..data.len() {
        update_gamma_block(&mut next, params, data, j);
    }
    update_ab(&mut next, cfg);
    for j in 0..data.len() {
        update_w_block(&mut next, params, data, cfg, j);
    }
    update_ab(&mut next, cfg);

    let finite = next.mu_beta.is_finite()
        && next.sigma_beta_sq.is_finite()
        && next.sigma_beta_sq > 0.0
        && next.mu_gamma.iter().all(|v| v.is_finite())
        && next.sigma_gamma_sq.iter().all(|v| v.is_finite() && *v > 0.0)
        && next.pi_w.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::numerical("non-finite variational parameter after E-step"));
    }
    Ok(next)
}

/// M-step: exact maximizer for sigma_sq, square-root minorize-maximize
/// update for tau_sq seeded with the previous value.
pub fn m_step(
    state: &VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
) -> Result<ModelParams> {
    let n = data.len() as f64;
    let sigma_sq = state
        .mu_gamma
        .iter()
        .zip(&state.sigma_gamma_sq)
        .map(|(m, v)| m * m + v)
        .sum::<f64>()
        / n;

    let tau_old = params.tau_sq;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..data.len() {
        let s2_old = data.sigma_y[j] * data.sigma_y[j] + tau_old;
        num += state.pi_w[j] * residual_second_moment(state, data, j) * tau_old * tau_old
            / (s2_old * s2_old);
        den += state.pi_w[j] / s2_old;
    }
    let tau_sq = (num / den).sqrt().max(TAU_SQ_FLOOR);

    if !sigma_sq.is_finite() || !(sigma_sq > 0.0) || !tau_sq.is_finite() {
        return Err(Error::numerical("non-finite model parameter after M-step"));
    }
    Ok(ModelParams { tau_sq, sigma_sq })
}
