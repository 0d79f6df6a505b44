use super::updates::{residual_second_moment, update_ab, update_beta_block, update_gamma_block, update_w_block};
use super::*;
use crate::special::{digamma, ln_beta, trigamma};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta as BetaDist, Distribution, Normal, Uniform};

fn exact_ratio_data() -> SummaryDataset {
    SummaryDataset::new(vec![1.0, 2.0], vec![1.0, 1.0], vec![0.5, 1.0], vec![1.0, 1.0], None)
        .unwrap()
}

fn random_dataset(rng: &mut ChaCha12Rng, n: usize, beta: f64, tau: f64, sigma: f64) -> SummaryDataset {
    let se = Uniform::new(0.3, 0.5);
    let mut g = Vec::with_capacity(n);
    let mut sx = Vec::with_capacity(n);
    let mut gg = Vec::with_capacity(n);
    let mut sy = Vec::with_capacity(n);
    for _ in 0..n {
        let gamma: f64 = Normal::new(0.0, sigma).unwrap().sample(rng);
        let alpha: f64 = Normal::new(0.0, tau).unwrap().sample(rng);
        let sxj = se.sample(rng);
        let syj = se.sample(rng);
        g.push(gamma + Normal::new(0.0, sxj).unwrap().sample(rng));
        sx.push(sxj);
        gg.push(beta * gamma + alpha + Normal::new(0.0, syj).unwrap().sample(rng));
        sy.push(syj);
    }
    SummaryDataset::new(g, sx, gg, sy, None).unwrap()
}

fn random_state(rng: &mut ChaCha12Rng, n: usize, cfg: &ModelConfig) -> VariationalState {
    let mut state = VariationalState {
        mu_beta: Normal::new(0.0, 1.0).unwrap().sample(rng),
        sigma_beta_sq: Uniform::new(0.01, 2.0).sample(rng),
        mu_gamma: (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(rng)).collect(),
        sigma_gamma_sq: (0..n).map(|_| Uniform::new(0.01, 2.0).sample(rng)).collect(),
        pi_w: (0..n).map(|_| Uniform::new(0.05, 0.95).sample(rng)).collect(),
        a: 0.0,
        b: 0.0,
    };
    update_ab(&mut state, cfg);
    state
}

fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
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
    0.5 * (lo + hi)
}

#[test]
fn init_exact_ratio_gives_ivw_mean() {
    let data = exact_ratio_data();
    let (state, _) = init_state(&data, &ModelConfig::default()).unwrap();
    assert!((state.mu_beta - 0.5).abs() < 1e-15);
}

#[test]
fn init_weights_are_prior_mean() {
    let data = exact_ratio_data();
    let cfg = ModelConfig::default();
    let (state, _) = init_state(&data, &cfg).unwrap();
    for &pw in &state.pi_w {
        assert!((pw - 100.0 / 101.0).abs() < 1e-15);
    }
    assert!((state.a - (cfg.a0 + state.weight_sum())).abs() < 1e-12);
    assert!((state.b - (2.0 + 1.0 - state.weight_sum())).abs() < 1e-12);
}

#[test]
fn init_is_sign_equivariant() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let data = random_dataset(&mut rng, 40, 0.3, 0.2, 0.8);
    let flipped = SummaryDataset::new(
        data.gamma_hat.clone(),
        data.sigma_x.clone(),
        data.big_gamma_hat.iter().map(|v| -v).collect(),
        data.sigma_y.clone(),
        None,
    )
    .unwrap();
    let cfg = ModelConfig::default();
    let (s1, p1) = init_state(&data, &cfg).unwrap();
    let (s2, p2) = init_state(&flipped, &cfg).unwrap();
    assert_eq!(s1.mu_beta, -s2.mu_beta);
    assert_eq!(s1.sigma_gamma_sq, s2.sigma_gamma_sq);
    assert_eq!(s1.pi_w, s2.pi_w);
    assert_eq!(p1.tau_sq, p2.tau_sq);
    assert_eq!(p1.sigma_sq, p2.sigma_sq);
}

#[test]
fn init_rejects_single_snp() {
    let err = SummaryDataset::new(vec![1.0], vec![1.0], vec![1.0], vec![1.0], None).unwrap_err();
    assert!(matches!(err, crate::Error::DatasetTooSmall(1)));
}

#[test]
fn e_step_with_zero_weights_returns_prior_beta() {
    let data = exact_ratio_data();
    let cfg = ModelConfig::default();
    let (mut state, params) = init_state(&data, &cfg).unwrap();
    state.pi_w = vec![0.0; data.len()];
    let next = e_step(&state, &params, &data, &cfg).unwrap();
    assert_eq!(next.mu_beta, 0.0);
    assert!((next.sigma_beta_sq - cfg.sigma0_sq).abs() / cfg.sigma0_sq < 1e-14);
}

#[test]
fn e_step_sign_mirror_is_bit_identical() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let data = random_dataset(&mut rng, 25, 0.4, 0.2, 0.8);
    let flipped = SummaryDataset::new(
        data.gamma_hat.clone(),
        data.sigma_x.clone(),
        data.big_gamma_hat.iter().map(|v| -v).collect(),
        data.sigma_y.clone(),
        None,
    )
    .unwrap();
    let cfg = ModelConfig::default();
    let (state, params) = init_state(&data, &cfg).unwrap();
    let mut mirrored = state.clone();
    mirrored.mu_beta = -mirrored.mu_beta;

    let out = e_step(&state, &params, &data, &cfg).unwrap();
    let out_m = e_step(&mirrored, &params, &flipped, &cfg).unwrap();
    assert_eq!(out.mu_beta, -out_m.mu_beta);
    assert_eq!(out.sigma_beta_sq, out_m.sigma_beta_sq);
    assert_eq!(out.mu_gamma, out_m.mu_gamma);
    assert_eq!(out.sigma_gamma_sq, out_m.sigma_gamma_sq);
    assert_eq!(out.pi_w, out_m.pi_w);
}

// Single-instrument fixed point, checked two independent ways: against a
// dense 2-D quadrature of the exact posterior mean of beta, and against a
// direct cyclic maximization of the ELBO over the four Gaussian parameters.
#[test]
fn e_step_single_snp_fixed_point_matches_quadrature() {
    let data = SummaryDataset::new_unchecked(vec![2.0], vec![0.2], vec![1.0], vec![0.2]);
    let cfg = ModelConfig { a0: 1e10, ..ModelConfig::default() };
    let params = ModelParams { tau_sq: 0.0, sigma_sq: 1e12 };
    let mut state = VariationalState {
        mu_beta: 0.5,
        sigma_beta_sq: 1.0,
        mu_gamma: vec![2.0],
        sigma_gamma_sq: vec![0.04],
        pi_w: vec![1.0 - 1e-10],
        a: 1e10 + 1.0,
        b: 1.0,
    };
    for _ in 0..2000 {
        state = e_step(&state, &params, &data, &cfg).unwrap();
    }
    assert!(state.pi_w[0] > 1.0 - 1e-9);

    // Riemann-sum posterior mean over (beta, gamma) with flat-in-range priors.
    let (b_lo, b_hi, nb) = (-0.5, 1.5, 2001);
    let (g_lo, g_hi, ng) = (1.0, 3.0, 1201);
    let mut mass = 0.0;
    let mut mean = 0.0;
    for ib in 0..nb {
        let beta = b_lo + (b_hi - b_lo) * ib as f64 / (nb - 1) as f64;
        for ig in 0..ng {
            let gamma = g_lo + (g_hi - g_lo) * ig as f64 / (ng - 1) as f64;
            let r1 = (2.0 - gamma) / 0.2;
            let r2 = (1.0 - beta * gamma) / 0.2;
            let dens = (-0.5 * (r1 * r1 + r2 * r2)).exp();
            mass += dens;
            mean += beta * dens;
        }
    }
    let quad_mean = mean / mass;
    assert!(
        (state.mu_beta - quad_mean).abs() < 0.02,
        "fixed point {} vs quadrature {}",
        state.mu_beta,
        quad_mean
    );

    // Direct ELBO maximization over (mu_beta, sigma_beta_sq, mu_gamma, sigma_gamma_sq).
    let base = state.clone();
    let eval = |v: [f64; 4]| {
        let mut s = base.clone();
        s.mu_beta = v[0];
        s.sigma_beta_sq = v[1];
        s.mu_gamma[0] = v[2];
        s.sigma_gamma_sq[0] = v[3];
        compute_elbo(&s, &params, &data, &cfg).unwrap()
    };
    let mut v = [0.3, 0.5, 1.8, 0.1];
    for _ in 0..60 {
        for k in 0..4 {
            let (lo, hi) = match k {
                0 => (-1.0, 2.0),
                1 => (1e-6, 2.0),
                2 => (1.0, 3.0),
                _ => (1e-6, 1.0),
            };
            let x = golden_section_max(
                |t| {
                    let mut w = v;
                    w[k] = t;
                    eval(w)
                },
                lo,
                hi,
                80,
            );
            v[k] = x;
        }
    }
    assert!((v[0] - state.mu_beta).abs() < 1e-4, "direct {} vs fixed point {}", v[0], state.mu_beta);
    assert!((v[2] - state.mu_gamma[0]).abs() < 1e-4);
    assert!((v[1] - state.sigma_beta_sq).abs() / state.sigma_beta_sq < 1e-3);
    assert!((v[3] - state.sigma_gamma_sq[0]).abs() / state.sigma_gamma_sq[0] < 1e-3);
}

#[test]
fn m_step_sigma_sq_is_mean_of_second_moments() {
    let data = exact_ratio_data();
    let state = VariationalState {
        mu_beta: 0.0,
        sigma_beta_sq: 1.0,
        mu_gamma: vec![1.0, 1.0],
        sigma_gamma_sq: vec![0.0, 0.0],
        pi_w: vec![0.5, 0.5],
        a: 101.0,
        b: 2.0,
    };
    let params = m_step(&state, &ModelParams { tau_sq: 0.1, sigma_sq: 1.0 }, &data).unwrap();
    assert_eq!(params.sigma_sq, 1.0);
}

// Homogeneous instruments: iterating the tau_sq update converges to
// R - sigma_y^2, the same point a golden-section maximization of the exact
// tau_sq ELBO term finds.
#[test]
fn m_step_tau_fixed_point_matches_golden_section() {
    let n = 8;
    let sigma_y_sq: f64 = 0.5;
    let r_target = 2.0; // B_j = 1 + Gamma_hat^2 with the state below
    let data = SummaryDataset::new(
        vec![0.0; n],
        vec![1.0; n],
        vec![(r_target - 1.0f64).sqrt(); n],
        vec![sigma_y_sq.sqrt(); n],
        None,
    )
    .unwrap();
    let state = VariationalState {
        mu_beta: 0.0,
        sigma_beta_sq: 1.0,
        mu_gamma: vec![0.0; n],
        sigma_gamma_sq: vec![1.0; n],
        pi_w: vec![0.7; n],
        a: 100.0,
        b: 2.0,
    };
    for j in 0..n {
        assert!((residual_second_moment(&state, &data, j) - r_target).abs() < 1e-12);
    }

    let mut params = ModelParams { tau_sq: 0.3, sigma_sq: 1.0 };
    for _ in 0..200 {
        params = m_step(&state, &params, &data).unwrap();
    }
    let expected = r_target - sigma_y_sq;
    assert!((params.tau_sq - expected).abs() < 1e-10, "tau_sq {}", params.tau_sq);

    let elbo_tau = |tau_sq: f64| {
        let s2 = sigma_y_sq + tau_sq;
        n as f64 * 0.7 * (-0.5 * s2.ln() - r_target / (2.0 * s2))
    };
    let best = golden_section_max(elbo_tau, 1e-6, 10.0, 200);
    assert!((best - expected).abs() < 1e-6);
    assert!((params.tau_sq - best).abs() < 1e-6);
}

#[test]
fn m_step_never_decreases_elbo() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let cfg = ModelConfig::default();
    for _ in 0..100 {
        let n = rng.gen_range(3..30);
        let data = random_dataset(&mut rng, n, 0.2, 0.2, 0.8);
        let state = random_state(&mut rng, n, &cfg);
        let params = ModelParams {
            tau_sq: Uniform::new(1e-4, 1.0).sample(&mut rng),
            sigma_sq: Uniform::new(0.1, 2.0).sample(&mut rng),
        };
        let before = compute_elbo(&state, &params, &data, &cfg).unwrap();
        let next = m_step(&state, &params, &data).unwrap();
        let after = compute_elbo(&state, &next, &data, &cfg).unwrap();
        assert!(after >= before - 1e-10, "ELBO dropped: {before} -> {after}");
    }
}

#[test]
fn elbo_sign_symmetry_is_exact() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let data = random_dataset(&mut rng, 15, 0.4, 0.2, 0.8);
    let flipped = SummaryDataset::new(
        data.gamma_hat.clone(),
        data.sigma_x.clone(),
        data.big_gamma_hat.iter().map(|v| -v).collect(),
        data.sigma_y.clone(),
        None,
    )
    .unwrap();
    let cfg = ModelConfig::default();
    let (state, params) = init_state(&data, &cfg).unwrap();
    let mut mirrored = state.clone();
    mirrored.mu_beta = -mirrored.mu_beta;
    let e1 = compute_elbo(&state, &params, &data, &cfg).unwrap();
    let e2 = compute_elbo(&mirrored, &params, &flipped, &cfg).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn each_coordinate_block_update_improves_elbo() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let cfg = ModelConfig::default();
    for _ in 0..200 {
        let n = rng.gen_range(2..12);
        let data = random_dataset(&mut rng, n, 0.3, 0.2, 0.8);
        let state = random_state(&mut rng, n, &cfg);
        let params = ModelParams {
            tau_sq: Uniform::new(1e-4, 1.0).sample(&mut rng),
            sigma_sq: Uniform::new(0.1, 2.0).sample(&mut rng),
        };
        let before = compute_elbo(&state, &params, &data, &cfg).unwrap();

        let mut s = state.clone();
        update_beta_block(&mut s, &params, &data, &cfg);
        assert!(compute_elbo(&s, &params, &data, &cfg).unwrap() >= before - 1e-9);

        let mut s = state.clone();
        update_gamma_block(&mut s, &params, &data, 0);
        assert!(compute_elbo(&s, &params, &data, &cfg).unwrap() >= before - 1e-9);

        let mut s = state.clone();
        update_ab(&mut s, &cfg);
        assert!(compute_elbo(&s, &params, &data, &cfg).unwrap() >= before - 1e-9);

        let mut s = state.clone();
        update_ab(&mut s, &cfg);
        let mid = compute_elbo(&s, &params, &data, &cfg).unwrap();
        update_w_block(&mut s, &params, &data, &cfg, 0);
        assert!(compute_elbo(&s, &params, &data, &cfg).unwrap() >= mid - 1e-9);
    }
}

// Independent Monte-Carlo evaluation of the ELBO: sample z from q, average
// the full complete-data log density, add the analytic entropy, and remove
// the constants compute_elbo drops.
#[test]
fn elbo_matches_monte_carlo_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let n = 2;
    let data = random_dataset(&mut rng, n, 0.5, 0.2, 0.8);
    let cfg = ModelConfig::default();
    let (mut state, params) = init_state(&data, &cfg).unwrap();
    for _ in 0..5 {
        state = e_step(&state, &params, &data, &cfg).unwrap();
    }

    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let samples = 1_000_000usize;
    let beta_d = Normal::new(state.mu_beta, state.sigma_beta_sq.sqrt()).unwrap();
    let gamma_d: Vec<Normal<f64>> = (0..n)
        .map(|j| Normal::new(state.mu_gamma[j], state.sigma_gamma_sq[j].sqrt()).unwrap())
        .collect();
    let pi1_d = BetaDist::new(state.a, state.b).unwrap();

    let mut acc = 0.0;
    for _ in 0..samples {
        let beta: f64 = beta_d.sample(&mut rng);
        let pi1: f64 = pi1_d.sample(&mut rng);
        let mut logp = -0.5 * (ln_2pi + cfg.sigma0_sq.ln()) - beta * beta / (2.0 * cfg.sigma0_sq);
        logp += (cfg.a0 - 1.0) * pi1.ln() + cfg.a0.ln();
        for j in 0..n {
            let gamma: f64 = gamma_d[j].sample(&mut rng);
            let w = rng.gen_bool(state.pi_w[j]);
            let sx2 = data.sigma_x[j] * data.sigma_x[j];
            let dg = data.gamma_hat[j] - gamma;
            logp += -0.5 * (ln_2pi + sx2.ln()) - dg * dg / (2.0 * sx2);
            logp += -0.5 * (ln_2pi + params.sigma_sq.ln()) - gamma * gamma / (2.0 * params.sigma_sq);
            if w {
                let s2 = data.sigma_y[j] * data.sigma_y[j] + params.tau_sq;
                let dr = data.big_gamma_hat[j] - beta * gamma;
                logp += -0.5 * (ln_2pi + s2.ln()) - dr * dr / (2.0 * s2);
                logp += pi1.ln();
            } else {
                logp += (1.0 - pi1).ln();
            }
        }
        acc += logp;
    }
    let e_logp = acc / samples as f64;

    let mut entropy = 0.5 * (ln_2pi + 1.0 + state.sigma_beta_sq.ln());
    for j in 0..n {
        entropy += 0.5 * (ln_2pi + 1.0 + state.sigma_gamma_sq[j].ln());
        let pw = state.pi_w[j];
        entropy -= pw * pw.ln() + (1.0 - pw) * (1.0 - pw).ln();
    }
    entropy += ln_beta(state.a, state.b)
        - (state.a - 1.0) * digamma(state.a)
        - (state.b - 1.0) * digamma(state.b)
        + (state.a + state.b - 2.0) * digamma(state.a + state.b);

    let mc_elbo = e_logp + entropy;

    // Constants compute_elbo drops, re-added here.
    let mut dropped = -0.5 * n as f64 * ln_2pi
        - 0.5 * data.sigma_x.iter().map(|s| (s * s).ln()).sum::<f64>();
    dropped += -0.5 * (ln_2pi + cfg.sigma0_sq.ln());
    dropped += -0.5 * n as f64 * ln_2pi;
    dropped += cfg.a0.ln();
    dropped += 0.5 * (ln_2pi + 1.0) * (n as f64 + 1.0);

    let full = compute_elbo(&state, &params, &data, &cfg).unwrap() + dropped;
    let rel = (full - mc_elbo).abs() / mc_elbo.abs();
    assert!(rel < 1e-2, "analytic {full} vs MC {mc_elbo} (rel {rel})");
}

#[test]
fn fit_degenerate_outcome_goes_to_zero() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let n = 30;
    let gamma_hat: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 0.8).unwrap().sample(&mut rng)).collect();
    let data = SummaryDataset::new(gamma_hat, vec![0.3; n], vec![0.0; n], vec![0.3; n], None).unwrap();
    let fit = fit_vem(&data, &ModelConfig::default()).unwrap();
    assert!(fit.state.mu_beta.abs() < 1e-3);
}

#[test]
fn fit_is_sign_equivariant() {
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let data = random_dataset(&mut rng, 60, 0.4, 0.2, 0.8);
    let flipped = SummaryDataset::new(
        data.gamma_hat.clone(),
        data.sigma_x.clone(),
        data.big_gamma_hat.iter().map(|v| -v).collect(),
        data.sigma_y.clone(),
        None,
    )
    .unwrap();
    let cfg = ModelConfig::default();
    let f1 = fit_vem(&data, &cfg).unwrap();
    let f2 = fit_vem(&flipped, &cfg).unwrap();
    assert!((f1.state.mu_beta + f2.state.mu_beta).abs() < 1e-10);
    assert_eq!(f1.state.sigma_beta_sq, f2.state.sigma_beta_sq);
}

#[test]
fn fit_is_permutation_invariant() {
    let mut rng = ChaCha12Rng::seed_from_u64(33);
    let data = random_dataset(&mut rng, 50, 0.3, 0.2, 0.8);
    let mut order: Vec<usize> = (0..50).collect();
    order.shuffle(&mut rng);
    let permuted = data.permuted(&order);
    let cfg = ModelConfig::default();
    let f1 = fit_vem(&data, &cfg).unwrap();
    let f2 = fit_vem(&permuted, &cfg).unwrap();
    let rel = (f1.state.mu_beta - f2.state.mu_beta).abs() / f1.state.mu_beta.abs().max(1e-12);
    assert!(rel < 1e-9, "mu_beta {} vs {}", f1.state.mu_beta, f2.state.mu_beta);
    let relv = (f1.state.sigma_beta_sq - f2.state.sigma_beta_sq).abs() / f1.state.sigma_beta_sq;
    assert!(relv < 1e-9);
}

#[test]
fn fit_trace_is_monotone_and_state_valid() {
    let mut rng = ChaCha12Rng::seed_from_u64(44);
    for _ in 0..10 {
        let n = rng.gen_range(10..80);
        let data = random_dataset(&mut rng, n, 0.2, 0.3, 0.8);
        let cfg = ModelConfig::default();
        let fit = fit_vem(&data, &cfg).unwrap();
        assert!(fit.converged, "should converge well before 5000 iterations");
        for k in 1..fit.elbo_trace.len() {
            assert!(
                fit.elbo_trace[k] >= fit.elbo_trace[k - 1] - 1e-8,
                "ELBO decreased at step {k}: {} -> {}",
                fit.elbo_trace[k - 1],
                fit.elbo_trace[k]
            );
        }
        assert!(fit.state.sigma_beta_sq > 0.0);
        let sum = fit.state.weight_sum();
        assert!((fit.state.a - (cfg.a0 + sum)).abs() < 1e-9);
        assert!((fit.state.b - (n as f64 + 1.0 - sum)).abs() < 1e-9);
        for &pw in &fit.state.pi_w {
            assert!(pw >= cfg.weight_floor && pw <= 1.0 - cfg.weight_floor);
        }
    }
}

// Approximate scale equivariance: scaling the outcome side by c scales
// mu_beta by c to 1e-3 relative (exact only in the flat-prior limit).
// Approximate scale equivariance: scaling the outcome side by c scales
// mu_beta by c to 1e-3 relative. The weight factors carry the outcome
// density's normalizer, which is not scale-free, so the property only
// holds where the weights stay uniformly saturated; with noisier
// instruments the fitted weight/tau_sq regime itself can shift under
// rescaling and the deviation reaches percent level.
#[test]
fn fit_scale_equivariance_within_tolerance() {
    let mut rng = ChaCha12Rng::seed_from_u64(55);
    let se = Uniform::new(0.002, 0.005);
    let n = 30;
    let (mut g, mut sx, mut gg, mut sy) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let gamma: f64 = Normal::new(0.0, 0.8).unwrap().sample(&mut rng);
        let sxj = se.sample(&mut rng);
        let syj = se.sample(&mut rng);
        g.push(gamma + Normal::new(0.0, sxj).unwrap().sample(&mut rng));
        sx.push(sxj);
        gg.push(0.5 * gamma + Normal::new(0.0, syj).unwrap().sample(&mut rng));
        sy.push(syj);
    }
    let data = SummaryDataset::new(g, sx, gg, sy, None).unwrap();
    let cfg = ModelConfig::default();
    let base = fit_vem(&data, &cfg).unwrap().state.mu_beta;
    for c in [0.5, 2.0, 10.0] {
        let scaled = SummaryDataset::new(
            data.gamma_hat.clone(),
            data.sigma_x.clone(),
            data.big_gamma_hat.iter().map(|v| c * v).collect(),
            data.sigma_y.iter().map(|v| c * v).collect(),
            None,
        )
        .unwrap();
        let got = fit_vem(&scaled, &cfg).unwrap().state.mu_beta;
        assert!(
            (got - c * base).abs() / (c * base).abs() < 1e-3,
            "c = {c}: {got} vs {}",
            c * base
        );
    }
}

// At a converged fit no single-coordinate nudge of 1e-3 may raise the ELBO
// by more than the monotonicity slack.
#[test]
fn converged_state_is_coordinatewise_optimal() {
    let mut rng = ChaCha12Rng::seed_from_u64(66);
    let data = random_dataset(&mut rng, 25, 0.3, 0.2, 0.8);
    let cfg = ModelConfig { elbo_tol: 1e-14, ..ModelConfig::default() };
    let fit = fit_vem(&data, &cfg).unwrap();
    let base = compute_elbo(&fit.state, &fit.params, &data, &cfg).unwrap();
    let eps = 1e-3;

    let mut candidates: Vec<VariationalState> = Vec::new();
    for sign in [-1.0, 1.0] {
        let d = sign * eps;
        let mut s = fit.state.clone();
        s.mu_beta += d;
        candidates.push(s);
        let mut s = fit.state.clone();
        s.sigma_beta_sq += d;
        candidates.push(s);
        for j in 0..data.len() {
            let mut s = fit.state.clone();
            s.mu_gamma[j] += d;
            candidates.push(s);
            let mut s = fit.state.clone();
            s.sigma_gamma_sq[j] += d;
            candidates.push(s);
            let mut s = fit.state.clone();
            s.pi_w[j] += d;
            candidates.push(s);
        }
        let mut s = fit.state.clone();
        s.a += d;
        candidates.push(s);
        let mut s = fit.state.clone();
        s.b += d;
        candidates.push(s);
    }
    for s in candidates {
        let valid = s.sigma_beta_sq > 0.0
            && s.sigma_gamma_sq.iter().all(|v| *v > 0.0)
            && s.pi_w.iter().all(|p| *p > 0.0 && *p < 1.0)
            && s.a > 0.0
            && s.b > 0.0;
        if !valid {
            continue;
        }
        let elbo = compute_elbo(&s, &fit.params, &data, &cfg).unwrap();
        assert!(elbo <= base + 1e-8, "perturbation raised ELBO by {}", elbo - base);
    }
}

// Cross-check the digamma/trigamma pair through the Beta-factor identities
// used by the LRVB gradients: a + b = a0 + N + 1 at a synced state makes
// both Beta gradients vanish.
#[test]
fn synced_beta_factor_has_zero_gradient() {
    let cfg = ModelConfig::default();
    let mut state = VariationalState {
        mu_beta: 0.1,
        sigma_beta_sq: 0.5,
        mu_gamma: vec![0.3; 7],
        sigma_gamma_sq: vec![0.2; 7],
        pi_w: vec![0.9; 7],
        a: 0.0,
        b: 0.0,
    };
    update_ab(&mut state, &cfg);
    let n = 7.0;
    let sum = state.weight_sum();
    let grad_a = trigamma(state.a) * (cfg.a0 - state.a + sum)
        + trigamma(state.a + state.b) * (state.a + state.b - 1.0 - n - cfg.a0);
    assert!(grad_a.abs() < 1e-12);
}
