//! Replication harness: run a generator spec many times, apply a set of
//! estimators to every replicate, and aggregate errors, rejection rates and
//! qq data. Replicates derive independent RNG streams from the run seed, so
//! the harness is free to execute them in parallel; results are collected
//! by replicate index and every aggregate is a sum or a sorted merge, which
//! keeps the report identical whatever the execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{gen_individual_level, gen_summary_level, replicate_seed, Regime, SimulationSpec};
use crate::baselines;
use crate::data::SummaryDataset;
use crate::lrvb;
use crate::model::ModelConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MrMethod {
    Bwmr,
    Ivw,
    Egger,
    Gsmr,
    Raps,
}

impl MrMethod {
    pub const ALL: [MrMethod; 5] =
        [MrMethod::Bwmr, MrMethod::Ivw, MrMethod::Egger, MrMethod::Gsmr, MrMethod::Raps];

    pub fn name(&self) -> &'static str {
        match self {
            MrMethod::Bwmr => "bwmr",
            MrMethod::Ivw => "ivw",
            MrMethod::Egger => "egger",
            MrMethod::Gsmr => "gsmr",
            MrMethod::Raps => "raps",
        }
    }
}

impl std::str::FromStr for MrMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bwmr" => Ok(MrMethod::Bwmr),
            "ivw" => Ok(MrMethod::Ivw),
            "egger" => Ok(MrMethod::Egger),
            "gsmr" => Ok(MrMethod::Gsmr),
            "raps" => Ok(MrMethod::Raps),
            other => Err(format!("unknown method {other:?} (expected bwmr, ivw, egger, gsmr, raps)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_beta: Option<f64>,
    pub sd_beta: Option<f64>,
    /// Fraction of successful replicates with p < 0.05: empirical type-I
    /// error under a null spec, power otherwise.
    pub rejection_rate: Option<f64>,
    pub replicates: Vec<ReplicateRecord>,
    /// (expected, observed) -log10 p pairs sorted by expected quantile.
    pub qq: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationReport {
    pub regime: Regime,
    pub reps: usize,
    pub seed: u64,
    pub true_beta: f64,
    pub methods: Vec<MethodReport>,
}

fn apply_method(method: MrMethod, data: &SummaryDataset) -> Result<(f64, f64, f64)> {
    match method {
        MrMethod::Bwmr => {
            let est = lrvb::estimate(data, &ModelConfig::default())?;
            Ok((est.beta_hat, est.se, est.p_value))
        }
        MrMethod::Ivw => baselines::ivw(data).map(|e| (e.beta_hat, e.se, e.p_value)),
        MrMethod::Egger => baselines::egger(data).map(|e| (e.beta_hat, e.se, e.p_value)),
        MrMethod::Gsmr => baselines::gsmr_lite(data, 0.01).map(|e| (e.beta_hat, e.se, e.p_value)),
        MrMethod::Raps => baselines::raps_lite(data).map(|e| (e.beta_hat, e.se, e.p_value)),
    }
}

fn run_one(spec: &SimulationSpec, methods: &[MrMethod], rep: usize) -> Vec<ReplicateRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(replicate_seed(spec.seed, rep as u64));
    let generated = match spec.regime {
        Regime::IndividualFourGroup => gen_individual_level(spec, &mut rng),
        _ => gen_summary_level(spec, &mut rng),
    };
    match generated {
        Ok((data, _)) => methods
            .iter()
            .map(|&m| match apply_method(m, &data) {
                Ok((beta, se, p)) => ReplicateRecord {
                    rep,
                    beta_hat: Some(beta),
                    se: Some(se),
                    p_value: Some(p),
                    error: None,
                },
                Err(e) => ReplicateRecord {
                    rep,
                    beta_hat: None,
                    se: None,
                    p_value: None,
                    error: Some(e.to_string()),
                },
            })
            .collect(),
        Err(e) => methods
            .iter()
            .map(|_| ReplicateRecord {
                rep,
                beta_hat: None,
                se: None,
                p_value: None,
                error: Some(format!("generation failed: {e}")),
            })
            .collect(),
    }
}

pub fn run_replications(
    spec: &SimulationSpec,
    methods: &[MrMethod],
    reps: usize,
    parallelism: usize,
) -> Result<ReplicationReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidSpec("reps must be >= 1".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<ReplicateRecord>> =
        pool.install(|| (0..reps).into_par_iter().map(|rep| run_one(spec, methods, rep)).collect());

    let methods_out = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let replicates: Vec<ReplicateRecord> =
                per_rep.iter().map(|r| r[mi].clone()).collect();
            let oks: Vec<&ReplicateRecord> =
                replicates.iter().filter(|r| r.beta_hat.is_some()).collect();
            let n_ok = oks.len();
            let (mean_beta, sd_beta, rejection_rate) = if n_ok > 0 {
                let betas: Vec<f64> = oks.iter().map(|r| r.beta_hat.unwrap()).collect();
                let mean = betas.iter().sum::<f64>() / n_ok as f64;
                let var = betas.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>()
                    / (n_ok as f64 - 1.0).max(1.0);
                let rej = oks.iter().filter(|r| r.p_value.unwrap() < 0.05).count() as f64
                    / n_ok as f64;
                (Some(mean), Some(var.sqrt()), Some(rej))
            } else {
                (None, None, None)
            };

            let mut observed: Vec<f64> = oks.iter().map(|r| r.p_value.unwrap()).collect();
            observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Rank i of n gets expected quantile (i - 0.5)/n; pairs are then
            // ordered ascending in expected -log10 p.
            let n = observed.len();
            let mut qq: Vec<(f64, f64)> = observed
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let expected_p = (i as f64 + 0.5) / n as f64;
                    (-expected_p.log10(), -p.max(1e-320).log10())
                })
                .collect();
            qq.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            MethodReport {
                method: method.name(),
                n_ok,
                n_failed: reps - n_ok,
                mean_beta,
                sd_beta,
                rejection_rate,
                replicates,
                qq,
            }
        })
        .collect();

    Ok(ReplicationReport {
        regime: spec.regime,
        reps,
        seed: spec.seed,
        true_beta: spec.beta,
        methods: methods_out,
    })
}
