//! Reference MR estimators: inverse-variance weighting, Egger regression,
//! a GSMR variant with a pairwise outlier filter, and a RAPS variant that
//! maximizes the profile likelihood over a pleiotropy variance component.
//!
//! The GSMR and RAPS implementations deliberately omit LD-aware covariance
//! and robust-loss machinery, hence the `lite` suffix.

use crate::data::SummaryDataset;
use crate::special::two_sided_p;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ivw,
    Egger,
    Gsmr,
    Raps,
}

#[derive(Debug, Clone)]
pub struct BaselineEstimate {
    pub method: Method,
    pub beta_hat: f64,
    pub se: f64,
    pub p_value: f64,
    /// Set when the p-value underflowed below the double-precision floor.
    pub p_underflow: bool,
    /// Egger only.
    pub intercept: Option<f64>,
    pub intercept_se: Option<f64>,
    /// RAPS only.
    pub tau_sq: Option<f64>,
    /// GSMR only: indices excluded by the outlier filter.
    pub removed_snps: Vec<usize>,
}

impl BaselineEstimate {
    fn simple(method: Method, beta_hat: f64, se: f64) -> Self {
        let (p_value, p_underflow) = two_sided_p(beta_hat / se);
        BaselineEstimate {
            method,
            beta_hat,
            se,
            p_value,
            p_underflow,
            intercept: None,
            intercept_se: None,
            tau_sq: None,
            removed_snps: Vec::new(),
        }
    }
}

/// Inverse-variance-weighted ratio estimate with a multiplicative residual
/// variance (divisor N - 1) in the standard error.
pub fn ivw(data: &SummaryDataset) -> Result<BaselineEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientInstruments { got: n, need: 2 });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        let w = 1.0 / (data.sigma_y[j] * data.sigma_y[j]);
        num += data.big_gamma_hat[j] * data.gamma_hat[j] * w;
        den += data.gamma_hat[j] * data.gamma_hat[j] * w;
    }
    if den == 0.0 {
        return Err(Error::UndefinedEstimator("every exposure effect is zero".into()));
    }
    let beta = num / den;
    let mut rss = 0.0;
    for j in 0..n {
        let r = data.big_gamma_hat[j] - beta * data.gamma_hat[j];
        rss += r * r / (data.sigma_y[j] * data.sigma_y[j]);
    }
    let sigma_hat_sq = rss / (n as f64 - 1.0);
    let se = (sigma_hat_sq / den).sqrt();
    Ok(BaselineEstimate::simple(Method::Ivw, beta, se))
}

/// Egger regression: weighted least squares with an unconstrained intercept
/// absorbing directional pleiotropy. Residual variance divisor is N - 2.
pub fn egger(data: &SummaryDataset) -> Result<BaselineEstimate> {
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientInstruments { got: n, need: 3 });
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for j in 0..n {
        let w = 1.0 / (data.sigma_y[j] * data.sigma_y[j]);
        sw += w;
        swx += w * data.gamma_hat[j];
        swy += w * data.big_gamma_hat[j];
        swxx += w * data.gamma_hat[j] * data.gamma_hat[j];
        swxy += w * data.gamma_hat[j] * data.big_gamma_hat[j];
    }
    let xbar_w = swx / sw;
    let sxx = swxx - swx * xbar_w;
    if !(sxx > 1e-12 * swxx.max(1e-300)) {
        return Err(Error::CollinearInstruments);
    }
    let slope = (swxy - swy * xbar_w) / sxx;
    let intercept = (swy - slope * swx) / sw;

    let mut rss = 0.0;
    for j in 0..n {
        let w = 1.0 / (data.sigma_y[j] * data.sigma_y[j]);
        let r = data.big_gamma_hat[j] - intercept - slope * data.gamma_hat[j];
        rss += w * r * r;
    }
    let sigma_hat_sq = rss / (n as f64 - 2.0);
    let se = (sigma_hat_sq / sxx).sqrt();
    let intercept_se = (sigma_hat_sq * (1.0 / sw + xbar_w * xbar_w / sxx)).sqrt();

    let mut est = BaselineEstimate::simple(Method::Egger, slope, se);
    est.intercept = Some(intercept);
    est.intercept_se = Some(intercept_se);
    Ok(est)
}

/// GSMR restricted to uncorrelated instruments, with a pairwise z-test
/// standing in for the published HEIDI-outlier procedure.
///
/// The target instrument is the most exposure-significant SNP among those
/// whose per-SNP ratio falls in the 41%-60% rank band; every other SNP is
/// tested against it and removed below `outlier_alpha`.
pub fn gsmr_lite(data: &SummaryDataset, outlier_alpha: f64) -> Result<BaselineEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientInstruments { got: n, need: 2 });
    }
    if data.gamma_hat.iter().any(|g| *g == 0.0) {
        return Err(Error::UndefinedEstimator(
            "per-SNP ratio undefined: an exposure effect is exactly zero".into(),
        ));
    }
    let ratios: Vec<f64> = (0..n).map(|j| data.big_gamma_hat[j] / data.gamma_hat[j]).collect();
    let ratio_vars: Vec<f64> = (0..n)
        .map(|j| data.sigma_y[j] * data.sigma_y[j] / (data.gamma_hat[j] * data.gamma_hat[j]))
        .collect();

    // Rank band (1-based): ceil(0.41 N) ..= floor(0.60 N), median rank when empty.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| ratios[i].partial_cmp(&ratios[j]).unwrap().then(i.cmp(&j)));
    let lo = (0.41 * n as f64).ceil() as usize;
    let hi = (0.60 * n as f64).floor() as usize;
    let band: Vec<usize> = if lo <= hi {
        order[(lo - 1)..hi].to_vec()
    } else {
        vec![order[(n + 1) / 2 - 1]]
    };
    let exposure_z = |j: usize| (data.gamma_hat[j] / data.sigma_x[j]).abs();
    let target = *band
        .iter()
        .max_by(|&&i, &&j| {
            exposure_z(i).partial_cmp(&exposure_z(j)).unwrap().then(j.cmp(&i))
        })
        .unwrap();

    let mut removed = Vec::new();
    let mut kept = Vec::new();
    for j in 0..n {
        if j == target {
            kept.push(j);
            continue;
        }
        let z = (ratios[j] - ratios[target]) / (ratio_vars[j] + ratio_vars[target]).sqrt();
        let (p, _) = two_sided_p(z);
        if p < outlier_alpha {
            removed.push(j);
        } else {
            kept.push(j);
        }
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientInstruments { got: kept.len(), need: 2 });
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for &j in &kept {
        let w = 1.0
            / (data.sigma_y[j] * data.sigma_y[j]
                + ratios[j] * ratios[j] * data.sigma_x[j] * data.sigma_x[j]);
        num += w * data.gamma_hat[j] * data.big_gamma_hat[j];
        den += w * data.gamma_hat[j] * data.gamma_hat[j];
    }
    let beta = num / den;
    let se = (1.0 / den).sqrt();
    let mut est = BaselineEstimate::simple(Method::Gsmr, beta, se);
    est.removed_snps = removed;
    Ok(est)
}

/// RAPS profile log-likelihood at (beta, tau_sq).
fn raps_loglik(data: &SummaryDataset, beta: f64, tau_sq: f64) -> f64 {
    let mut l = 0.0;
    for j in 0..data.len() {
        let denom = data.sigma_y[j] * data.sigma_y[j]
            + tau_sq
            + beta * beta * data.sigma_x[j] * data.sigma_x[j];
        let r = data.big_gamma_hat[j] - beta * data.gamma_hat[j];
        l += -0.5 * (r * r / denom + (data.sigma_y[j] * data.sigma_y[j] + tau_sq).ln());
    }
    l
}

fn raps_dldbeta(data: &SummaryDataset, beta: f64, tau_sq: f64) -> f64 {
    let mut g = 0.0;
    for j in 0..data.len() {
        let sx2 = data.sigma_x[j] * data.sigma_x[j];
        let denom = data.sigma_y[j] * data.sigma_y[j] + tau_sq + beta * beta * sx2;
        let r = data.big_gamma_hat[j] - beta * data.gamma_hat[j];
        g += (data.gamma_hat[j] * r * denom + beta * sx2 * r * r) / (denom * denom);
    }
    g
}

/// Maximize the profile likelihood over beta at fixed tau_sq: safeguarded
/// Newton on the score, falling back to bisection inside a sign-change
/// bracket around the IVW start.
fn raps_beta_given_tau(data: &SummaryDataset, tau_sq: f64) -> Result<f64> {
    let start = ivw(data)?.beta_hat;
    let scale = start.abs().max(1.0);
    let mut lo = start - scale;
    let mut hi = start + scale;
    let mut expand = 0;
    while raps_dldbeta(data, lo, tau_sq) < 0.0 && expand < 60 {
        lo -= scale * 2f64.powi(expand);
        expand += 1;
    }
    let mut expand = 0;
    while raps_dldbeta(data, hi, tau_sq) > 0.0 && expand < 60 {
        hi += scale * 2f64.powi(expand);
        expand += 1;
    }
    if raps_dldbeta(data, lo, tau_sq) < 0.0 || raps_dldbeta(data, hi, tau_sq) > 0.0 {
        return Err(Error::OptimizationFailure("no score sign change bracket for beta".into()));
    }

    let mut beta = start.clamp(lo, hi);
    for _ in 0..200 {
        let g = raps_dldbeta(data, beta, tau_sq);
        if g.abs() < 1e-13 * (1.0 + data.len() as f64) {
            break;
        }
        if g > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        if hi - lo < 1e-13 * scale {
            break;
        }
        let h = 1e-6 * (1.0 + beta.abs());
        let dg = (raps_dldbeta(data, beta + h, tau_sq) - raps_dldbeta(data, beta - h, tau_sq))
            / (2.0 * h);
        let newton = beta - g / dg;
        beta = if dg.is_finite() && dg < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(beta)
}

fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, usize) {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while hi - lo > tol && iters < 500 {
        iters += 1;
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    (0.5 * (lo + hi), iters)
}

fn raps_estimate_at(data: &SummaryDataset, beta: f64, tau_sq: f64) -> Result<BaselineEstimate> {
    // Observed-information standard error by central differences at a
    // relative step of 1e-6.
    let h = 1e-6 * beta.abs().max(1.0);
    let d2 = (raps_loglik(data, beta + h, tau_sq) - 2.0 * raps_loglik(data, beta, tau_sq)
        + raps_loglik(data, beta - h, tau_sq))
        / (h * h);
    if !(d2 < 0.0) {
        return Err(Error::OptimizationFailure(format!(
            "profile likelihood not concave at optimum (d2 = {d2:e})"
        )));
    }
    let se = (-1.0 / d2).sqrt();
    let mut est = BaselineEstimate::simple(Method::Raps, beta, se);
    est.tau_sq = Some(tau_sq);
    Ok(est)
}

/// Profile-likelihood estimator with a pleiotropy variance component:
/// golden-section search over tau_sq, nested Newton over beta.
pub fn raps_lite(data: &SummaryDataset) -> Result<BaselineEstimate> {
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientInstruments { got: n, need: 3 });
    }
    let beta0 = ivw(data)?.beta_hat;
    let resid_var = {
        let r: Vec<f64> =
            (0..n).map(|j| data.big_gamma_hat[j] - beta0 * data.gamma_hat[j]).collect();
        let mean = r.iter().sum::<f64>() / n as f64;
        r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
    };
    let max_sy2 = data.sigma_y.iter().map(|s| s * s).fold(0.0, f64::max);
    let mut hi = (10.0 * (resid_var + max_sy2)).max(1e-4);

    let mut outer_total = 0usize;
    loop {
        let profile = |tau_sq: f64| match raps_beta_given_tau(data, tau_sq) {
            Ok(b) => raps_loglik(data, b, tau_sq),
            Err(_) => f64::NEG_INFINITY,
        };
        let (tau_sq, iters) = golden_section_max(profile, 0.0, hi, 1e-10 * hi.max(1.0));
        outer_total += iters;
        if outer_total >= 500 {
            return Err(Error::OptimizationFailure(
                "tau_sq search exceeded 500 outer iterations".into(),
            ));
        }
        if tau_sq > 0.9 * hi {
            hi *= 10.0;
            continue;
        }
        let beta = raps_beta_given_tau(data, tau_sq)?;
        return raps_estimate_at(data, beta, tau_sq);
    }
}

/// RAPS with tau_sq pinned instead of profiled; used to cross-check the
/// reduction to IVW when exposure noise vanishes.
pub fn raps_fixed_tau(data: &SummaryDataset, tau_sq: f64) -> Result<BaselineEstimate> {
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientInstruments { got: n, need: 3 });
    }
    let beta = raps_beta_given_tau(data, tau_sq)?;
    raps_estimate_at(data, beta, tau_sq)
}
