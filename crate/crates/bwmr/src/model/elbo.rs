//! Evidence lower bound, exact up to additive constants that depend on
//! neither the variational parameters nor (tau_sq, sigma_sq).
//!
//! Dropped constants, listed so every consumer drops the same set: the
//! -N/2 log(2 pi) and -1/2 sum log sigma_x^2 of the exposure likelihood,
//! -1/2 log(2 pi sigma_0^2) of the beta prior, -N/2 log(2 pi) of the
//! exposure-effect prior, log a0 of the Beta prior normalizer, and the
//! 1/2 log(2 pi e) pieces of the Gaussian entropies. The outcome
//! likelihood's -1/2 log(2 pi) is weighted by pi_w and therefore kept.

use super::{ModelConfig, ModelParams, VariationalState};
use crate::data::SummaryDataset;
use crate::special::{digamma, ln_beta};
use crate::{Error, Result};

use super::updates::residual_second_moment;

pub fn compute_elbo(
    state: &VariationalState,
    params: &ModelParams,
    data: &SummaryDataset,
    cfg: &ModelConfig,
) -> Result<f64> {
    let n = data.len();
    if state.sigma_beta_sq <= 0.0 || state.sigma_gamma_sq.iter().any(|v| *v <= 0.0) {
        return Err(Error::numerical("log of non-positive variance in ELBO"));
    }

    let psi_a = digamma(state.a);
    let psi_b = digamma(state.b);
    let psi_ab = digamma(state.a + state.b);
    let e_log_pi = psi_a - psi_ab;
    let e_log_1mpi = psi_b - psi_ab;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut elbo = 0.0;

    // E_q[log Pr(gamma_hat | gamma)]
    for j in 0..n {
        let sx2 = data.sigma_x[j] * data.sigma_x[j];
        let d = data.gamma_hat[j] - state.mu_gamma[j];
        elbo -= (d * d + state.sigma_gamma_sq[j]) / (2.0 * sx2);
    }

    // E_q[log Pr(Gamma_hat | beta, gamma, w)]
    for j in 0..n {
        let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
        elbo += state.pi_w[j]
            * (-0.5 * ln_2pi - 0.5 * s2.ln() - residual_second_moment(state, data, j) / (2.0 * s2));
    }

    // E_q[log Pr(beta)]
    elbo -= (state.mu_beta * state.mu_beta + state.sigma_beta_sq) / (2.0 * cfg.sigma0_sq);

    // E_q[log Pr(gamma)]
    let sum_gamma2: f64 =
        state.mu_gamma.iter().zip(&state.sigma_gamma_sq).map(|(m, v)| m * m + v).sum();
    elbo += -(n as f64 / 2.0) * params.sigma_sq.ln() - sum_gamma2 / (2.0 * params.sigma_sq);

    // E_q[log Pr(w | pi_1)] and E_q[log Pr(pi_1)]
    for &pw in &state.pi_w {
        elbo += pw * e_log_pi + (1.0 - pw) * e_log_1mpi;
    }
    elbo += (cfg.a0 - 1.0) * e_log_pi;

    // Entropies: Gaussian factors, Bernoulli factors, Beta factor.
    elbo += 0.5 * state.sigma_beta_sq.ln();
    elbo += 0.5 * state.sigma_gamma_sq.iter().map(|v| v.ln()).sum::<f64>();
    for &pw in &state.pi_w {
        elbo -= pw * pw.ln() + (1.0 - pw) * (1.0 - pw).ln();
    }
    elbo += ln_beta(state.a, state.b) - (state.a - 1.0) * e_log_pi - (state.b - 1.0) * e_log_1mpi;

    if !elbo.is_finite() {
        return Err(Error::numerical("non-finite ELBO"));
    }
    Ok(elbo)
}
