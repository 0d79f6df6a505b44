//! Brute-force posterior oracle for small instrument counts.
//!
//! Conditional on (tau_sq, sigma_sq), the posterior of beta is available by
//! quadrature: each gamma_j integrates out analytically as a Gaussian
//! convolution, the 2^N weight configurations carry Beta-Bernoulli masses
//! B(a0 + k, 1 + N - k) / B(a0, 1), and the remaining one-dimensional
//! density over beta is summed on a dense grid. Holding the variance
//! parameters at their fitted values isolates the factorization error of
//! the variational approximation, which is what the oracle exists to
//! measure.

use crate::data::SummaryDataset;
use crate::model::{e_step, ModelConfig, ModelParams, VariationalState};
use crate::special::ln_beta;
use crate::{Error, Result};

const MAX_ORACLE_SNPS: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct OracleGrid {
    /// Grid points across the beta axis.
    pub points: usize,
    /// Half-width in units of the mean-field posterior standard deviation.
    pub span_se: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self { points: 4001, span_se: 8.0 }
    }
}

/// Posterior mean and variance of beta by exhaustive enumeration and
/// quadrature. Fails with [`Error::GridTooNarrow`] when the outermost grid
/// cells still carry more than 1e-6 of the posterior mass.
pub fn exact_posterior_oracle(
    data: &SummaryDataset,
    cfg: &ModelConfig,
    params: &ModelParams,
    grid: OracleGrid,
) -> Result<(f64, f64)> {
    let n = data.len();
    if n > MAX_ORACLE_SNPS {
        return Err(Error::InvalidSpec(format!(
            "oracle enumerates 2^N weight vectors; N = {n} exceeds {MAX_ORACLE_SNPS}"
        )));
    }
    if grid.points < 16 {
        return Err(Error::InvalidSpec("oracle grid needs at least 16 points".into()));
    }

    // Grid center and scale from the mean-field solution under the supplied
    // parameters (no M-steps, so the oracle conditions on exactly `params`).
    // Built by hand so the single-instrument cross-checks also work.
    let pi0 = cfg.a0 / (cfg.a0 + 1.0);
    let mut state = VariationalState {
        mu_beta: 0.0,
        sigma_beta_sq: 1.0,
        mu_gamma: data.gamma_hat.clone(),
        sigma_gamma_sq: data.sigma_x.iter().map(|s| s * s).collect(),
        pi_w: vec![pi0; n],
        a: cfg.a0 + pi0 * n as f64,
        b: n as f64 + 1.0 - pi0 * n as f64,
    };
    for _ in 0..2000 {
        state = e_step(&state, params, data, cfg)?;
    }
    let center = state.mu_beta;
    let half_width = grid.span_se * state.sigma_beta_sq.sqrt();

    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    // Per-SNP log masses with w_j = 0: gamma_hat_j ~ N(0, sigma_sq + sigma_x^2).
    let log_c0: Vec<f64> = (0..n)
        .map(|j| {
            let v = params.sigma_sq + data.sigma_x[j] * data.sigma_x[j];
            -0.5 * (ln_2pi + v.ln()) - data.gamma_hat[j] * data.gamma_hat[j] / (2.0 * v)
        })
        .collect();

    // Beta-Bernoulli mass of a weight configuration with k ones.
    let log_bb: Vec<f64> = (0..=n)
        .map(|k| ln_beta(cfg.a0 + k as f64, 1.0 + (n - k) as f64) - ln_beta(cfg.a0, 1.0))
        .collect();

    let points = grid.points;
    let step = 2.0 * half_width / (points - 1) as f64;
    let mut log_density = Vec::with_capacity(points);
    let mut log_c1 = vec![0.0; n];
    let mut mask_terms = vec![0.0f64; 1 << n];

    for i in 0..points {
        let beta = center - half_width + step * i as f64;
        for j in 0..n {
            let sx2 = data.sigma_x[j] * data.sigma_x[j];
            let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
            let a = 1.0 / params.sigma_sq + 1.0 / sx2 + beta * beta / s2;
            let b = data.gamma_hat[j] / sx2 + beta * data.big_gamma_hat[j] / s2;
            let c = data.gamma_hat[j] * data.gamma_hat[j] / sx2
                + data.big_gamma_hat[j] * data.big_gamma_hat[j] / s2;
            log_c1[j] = -ln_2pi
                - 0.5 * (params.sigma_sq.ln() + sx2.ln() + s2.ln())
                - 0.5 * a.ln()
                + b * b / (2.0 * a)
                - c / 2.0;
        }
        let mut max_term = f64::NEG_INFINITY;
        for (mask, term) in mask_terms.iter_mut().enumerate() {
            let mut t = log_bb[mask.count_ones() as usize];
            for (j, (c1, c0)) in log_c1.iter().zip(&log_c0).enumerate() {
                t += if mask >> j & 1 == 1 { *c1 } else { *c0 };
            }
            *term = t;
            max_term = max_term.max(t);
        }
        let sum: f64 = mask_terms.iter().map(|t| (t - max_term).exp()).sum();
        let log_prior = -beta * beta / (2.0 * cfg.sigma0_sq);
        log_density.push(max_term + sum.ln() + log_prior);
    }

    let max_log = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let trapezoid = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let mut mass = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for i in 0..points {
        let beta = center - half_width + step * i as f64;
        let w = trapezoid(i) * (log_density[i] - max_log).exp();
        mass += w;
        m1 += w * beta;
        m2 += w * beta * beta;
    }

    // Outermost trapezoid cells as a fraction of the total mass.
    let edge = 0.5 * ((log_density[0] - max_log).exp() + (log_density[1] - max_log).exp())
        + 0.5 * ((log_density[points - 1] - max_log).exp()
            + (log_density[points - 2] - max_log).exp());
    let edge_fraction = edge / mass;
    if edge_fraction > 1e-6 {
        return Err(Error::GridTooNarrow(edge_fraction));
    }

    let mean = m1 / mass;
    let variance = m2 / mass - mean * mean;
    Ok((mean, variance))
}
