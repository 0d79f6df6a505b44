//! Summary-level generators: five regimes differing in how the true effects
//! are drawn and corrupted, sharing the observation layer
//! gamma_hat ~ N(gamma, sigma_x^2), Gamma_hat ~ N(Gamma, sigma_y^2) with
//! standard errors uniform on [c, d].
//!
//! Draw order is fixed (corruption flags, gamma, alpha, standard errors,
//! observation noise) so a seed pins the dataset bit for bit.

use rand::prelude::*;
use rand_distr::{Distribution, Normal, Uniform};

use super::{GroundTruth, Regime, SimulationSpec};
use crate::data::SummaryDataset;
use crate::{Error, Result};

/// Laplace(rate r) draw by inverse CDF; variance 2 / r^2.
fn sample_laplace<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    if u < 0.5 {
        (2.0 * u).max(1e-300).ln() / rate
    } else {
        -(2.0 * (1.0 - u)).max(1e-300).ln() / rate
    }
}

pub fn gen_summary_level<R: Rng>(
    spec: &SimulationSpec,
    rng: &mut R,
) -> Result<(SummaryDataset, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_snps;
    if matches!(spec.regime, Regime::IndividualFourGroup) {
        return Err(Error::InvalidSpec("gen_summary_level needs a Case-1..5 regime".into()));
    }

    // Corruption flags: the leading round(N*C) indices, optionally shuffled.
    let mut corrupted = vec![false; n];
    if matches!(spec.regime, Regime::Case2 | Regime::Case3) {
        let k = ((n as f64 * spec.corrupt_rate).round() as usize).min(n);
        for flag in corrupted.iter_mut().take(k) {
            *flag = true;
        }
        if spec.shuffle_corrupt {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut shuffled = vec![false; n];
            for &idx in order.iter().take(k) {
                shuffled[idx] = true;
            }
            corrupted = shuffled;
        }
    }

    let base_gamma = Normal::new(0.0, spec.sigma).unwrap();
    let wide_gamma = Normal::new(0.0, (10.0f64).sqrt() * spec.sigma).unwrap();
    let gamma: Vec<f64> = (0..n)
        .map(|_| {
            if matches!(spec.regime, Regime::Case4) && rng.gen::<f64>() < spec.mix_rate {
                wide_gamma.sample(rng)
            } else {
                base_gamma.sample(rng)
            }
        })
        .collect();

    let alpha: Vec<f64> = (0..n)
        .map(|j| match spec.regime {
            Regime::Case3 if corrupted[j] => Normal::new(0.0, spec.tau_c).unwrap().sample(rng),
            Regime::Case5 => spec.tau * sample_laplace(rng, spec.laplace_rate),
            _ => {
                if spec.tau > 0.0 {
                    Normal::new(0.0, spec.tau).unwrap().sample(rng)
                } else {
                    0.0
                }
            }
        })
        .collect();

    let big_gamma: Vec<f64> = (0..n)
        .map(|j| {
            let slope = if matches!(spec.regime, Regime::Case2) && corrupted[j] {
                spec.beta_c
            } else {
                spec.beta
            };
            slope * gamma[j] + alpha[j]
        })
        .collect();

    let se_dist = Uniform::new_inclusive(spec.se_lower, spec.se_upper);
    let sigma_x: Vec<f64> = (0..n).map(|_| se_dist.sample(rng)).collect();
    let sigma_y: Vec<f64> = (0..n).map(|_| se_dist.sample(rng)).collect();

    let gamma_hat: Vec<f64> = (0..n)
        .map(|j| gamma[j] + Normal::new(0.0, sigma_x[j]).unwrap().sample(rng))
        .collect();
    let big_gamma_hat: Vec<f64> = (0..n)
        .map(|j| big_gamma[j] + Normal::new(0.0, sigma_y[j]).unwrap().sample(rng))
        .collect();

    let data = SummaryDataset::new(gamma_hat, sigma_x, big_gamma_hat, sigma_y, None)?;
    let truth = GroundTruth {
        beta: spec.beta,
        gamma,
        alpha,
        big_gamma,
        corrupted,
        selected: None,
    };
    Ok((data, truth))
}
