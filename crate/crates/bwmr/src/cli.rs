//! Command-line front end: `bwmr fit` runs estimators on GWAS summary files,
//! `bwmr simulate` runs the replication harness. Both emit machine-readable
//! output with a provenance block; `--reproducible` suppresses the one
//! timestamp field so identical invocations are byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines;
use crate::gwas;
use crate::lrvb;
use crate::model::ModelConfig;
use crate::simulation::{
    run_replications, MrMethod, Regime, ReplicationReport, SelectionMode, SimulationSpec,
};
use crate::Error as CoreError;

/// Instruments surviving selection beyond this count suggest unclumped input.
const CLUMP_WARNING_THRESHOLD: usize = 5000;

#[derive(Parser, Debug)]
#[command(name = "bwmr", version, about = "Causal effect estimation from GWAS summary statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the causal effect from exposure and outcome summary files.
    Fit(FitArgs),
    /// Run seeded Monte-Carlo replications of a benchmark design.
    Simulate(SimulateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Tsv,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Exposure GWAS TSV (columns snp, effect_allele, other_allele, beta, se, pval[, n]).
    #[arg(long)]
    pub exposure: PathBuf,
    /// Outcome GWAS TSV with the same schema.
    #[arg(long)]
    pub outcome: PathBuf,
    /// Instrument-selection threshold on the exposure p-value.
    #[arg(long, default_value_t = 5e-8)]
    pub pval_threshold: f64,
    /// Comma-separated list from bwmr, ivw, egger, gsmr, raps.
    #[arg(long, default_value = "bwmr")]
    pub methods: String,
    /// Keep palindromic (A/T, C/G) SNPs instead of dropping them.
    #[arg(long)]
    pub keep_palindromic: bool,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Echoed into provenance; estimation itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit the timestamp so identical runs are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeArg {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Individual,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionModeArg {
    TwoDataset,
    Biased,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated list from bwmr, ivw, egger, gsmr, raps.
    #[arg(long, default_value = "bwmr")]
    pub methods: String,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,

    // Summary-level regime parameters.
    #[arg(long, default_value_t = 100)]
    pub n_snps: usize,
    #[arg(long, default_value_t = 0.8)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.3)]
    pub se_lower: f64,
    #[arg(long, default_value_t = 0.5)]
    pub se_upper: f64,
    #[arg(long, default_value_t = 3.0)]
    pub beta_c: f64,
    #[arg(long, default_value_t = 0.2)]
    pub corrupt_rate: f64,
    #[arg(long, default_value_t = 3.0)]
    pub tau_c: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mix_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub laplace_rate: f64,
    /// Randomize which SNPs are corrupted instead of the leading block.
    #[arg(long)]
    pub shuffle_corrupt: bool,

    // Individual-level regime parameters.
    #[arg(long, default_value_t = 10_000)]
    pub n0: usize,
    #[arg(long, default_value_t = 5_000)]
    pub n1: usize,
    #[arg(long, default_value_t = 5_000)]
    pub n2: usize,
    #[arg(long, default_value_t = 0.82)]
    pub prop_00: f64,
    #[arg(long, default_value_t = 0.08)]
    pub prop_10: f64,
    #[arg(long, default_value_t = 0.08)]
    pub prop_01: f64,
    #[arg(long, default_value_t = 0.02)]
    pub prop_11: f64,
    #[arg(long, default_value_t = 1.0)]
    pub snr1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub snr2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_gamma_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_alpha_sq: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub pval_threshold: f64,
    #[arg(long, value_enum, default_value_t = SelectionModeArg::TwoDataset)]
    pub selection_mode: SelectionModeArg,

    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional qq CSV (method, expected_neglog10p, observed_neglog10p).
    #[arg(long)]
    pub qq: Option<PathBuf>,
    /// Worker threads; the BWMR_THREADS environment variable overrides this,
    /// and the default is the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Omit the timestamp so identical runs are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
}

/// Failure carrying the process exit code: 2 for input problems, 3 for
/// numerical ones.
#[derive(Debug)]
pub struct CliFailure {
    pub exit_code: i32,
    pub message: String,
}

impl CliFailure {
    fn input(message: impl Into<String>) -> Self {
        CliFailure { exit_code: 2, message: message.into() }
    }
}

impl From<CoreError> for CliFailure {
    fn from(e: CoreError) -> Self {
        let exit_code = match e {
            CoreError::Numerical { .. }
            | CoreError::DegenerateInference
            | CoreError::InferenceInvalid(_)
            | CoreError::OptimizationFailure(_)
            | CoreError::GridTooNarrow(_) => 3,
            _ => 2,
        };
        CliFailure { exit_code, message: e.to_string() }
    }
}

impl From<gwas::GwasError> for CliFailure {
    fn from(e: gwas::GwasError) -> Self {
        CliFailure::input(e.to_string())
    }
}

/// Round to `digits` significant digits so serialized output is stable.
fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Fixed-significant-digit rendering for tabular output: plain decimal for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("numeric exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exponent >= -4 && exponent < digits as i32 {
        let value: f64 = sci.parse().unwrap();
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        trim(&format!("{value:.decimals$}"))
    } else {
        format!("{}e{}", trim(mantissa), exponent)
    }
}

fn parse_methods(spec: &str) -> Result<Vec<MrMethod>, CliFailure> {
    let mut methods = Vec::new();
    for token in spec.split(',') {
        let m: MrMethod = token.parse().map_err(CliFailure::input)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliFailure::input("no methods requested"));
    }
    Ok(methods)
}

fn sha256_hex(path: &Path) -> Result<String, CliFailure> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliFailure::input(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliFailure> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliFailure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct MethodRecord {
    method: &'static str,
    beta_hat: f64,
    se: f64,
    z: f64,
    pval: f64,
    n_snps: usize,
    n_removed: usize,
    diagnostics: serde_json::Value,
}

#[derive(Serialize)]
struct FitProvenance {
    tool: &'static str,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_unix: Option<u64>,
    exposure_path: String,
    exposure_sha256: String,
    outcome_path: String,
    outcome_sha256: String,
    pval_threshold: f64,
    methods: String,
    keep_palindromic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    n_exposure_rows: usize,
    n_outcome_rows: usize,
    n_multiallelic_dropped: usize,
    n_pairs: usize,
    n_flipped: usize,
    n_dropped_palindromic: usize,
    n_dropped_mismatch: usize,
    n_selected: usize,
}

#[derive(Serialize)]
struct FitOutput {
    results: Vec<MethodRecord>,
    provenance: FitProvenance,
}

fn run_method(
    method: MrMethod,
    data: &crate::SummaryDataset,
) -> Result<MethodRecord, CliFailure> {
    let ids = data.snp_ids.clone().unwrap_or_default();
    let rec = match method {
        MrMethod::Bwmr => {
            let est = lrvb::estimate(data, &ModelConfig::default())?;
            let n_downweighted = est.weights.iter().filter(|w| **w < 0.5).count();
            MethodRecord {
                method: method.name(),
                beta_hat: est.beta_hat,
                se: est.se,
                z: est.z,
                pval: est.p_value,
                n_snps: data.len(),
                n_removed: 0,
                diagnostics: serde_json::json!({
                    "iterations": est.iterations,
                    "converged": est.converged,
                    "se_mfvb": round_sig(est.se_mfvb, 10),
                    "tau_sq": round_sig(est.tau_sq, 10),
                    "sigma_sq": round_sig(est.sigma_sq, 10),
                    "n_downweighted": n_downweighted,
                    "warnings": est.warnings,
                }),
            }
        }
        MrMethod::Ivw => {
            let est = baselines::ivw(data)?;
            MethodRecord {
                method: method.name(),
                beta_hat: est.beta_hat,
                se: est.se,
                z: est.beta_hat / est.se,
                pval: est.p_value,
                n_snps: data.len(),
                n_removed: 0,
                diagnostics: serde_json::json!({}),
            }
        }
        MrMethod::Egger => {
            let est = baselines::egger(data)?;
            MethodRecord {
                method: method.name(),
                beta_hat: est.beta_hat,
                se: est.se,
                z: est.beta_hat / est.se,
                pval: est.p_value,
                n_snps: data.len(),
                n_removed: 0,
                diagnostics: serde_json::json!({
                    "intercept": round_sig(est.intercept.unwrap(), 10),
                    "intercept_se": round_sig(est.intercept_se.unwrap(), 10),
                }),
            }
        }
        MrMethod::Gsmr => {
            let est = baselines::gsmr_lite(data, 0.01)?;
            let removed: Vec<String> = est
                .removed_snps
                .iter()
                .map(|&j| ids.get(j).cloned().unwrap_or_else(|| format!("snp{j}")))
                .collect();
            MethodRecord {
                method: method.name(),
                beta_hat: est.beta_hat,
                se: est.se,
                z: est.beta_hat / est.se,
                pval: est.p_value,
                n_snps: data.len() - est.removed_snps.len(),
                n_removed: est.removed_snps.len(),
                diagnostics: serde_json::json!({ "removed_snps": removed }),
            }
        }
        MrMethod::Raps => {
            let est = baselines::raps_lite(data)?;
            MethodRecord {
                method: method.name(),
                beta_hat: est.beta_hat,
                se: est.se,
                z: est.beta_hat / est.se,
                pval: est.p_value,
                n_snps: data.len(),
                n_removed: 0,
                diagnostics: serde_json::json!({ "tau_sq": round_sig(est.tau_sq.unwrap(), 10) }),
            }
        }
    };
    let mut rec = rec;
    if rec.pval == 0.0 {
        // Tail probability fell below the double-precision floor.
        rec.diagnostics["p_underflow"] = serde_json::Value::Bool(true);
    }
    Ok(MethodRecord {
        beta_hat: round_sig(rec.beta_hat, 10),
        se: round_sig(rec.se, 10),
        z: round_sig(rec.z, 10),
        pval: round_sig(rec.pval, 10),
        ..rec
    })
}

pub fn run_fit(args: &FitArgs) -> Result<(), CliFailure> {
    let methods = parse_methods(&args.methods)?;
    let exposure_sha = sha256_hex(&args.exposure)?;
    let outcome_sha = sha256_hex(&args.outcome)?;
    let exposure = gwas::read_gwas_tsv(&args.exposure)?;
    let outcome = gwas::read_gwas_tsv(&args.outcome)?;
    let harmonized = gwas::harmonize(&exposure, &outcome, !args.keep_palindromic)?;
    let data = gwas::select_instruments(&harmonized.pairs, args.pval_threshold)?;
    if data.len() > CLUMP_WARNING_THRESHOLD {
        eprintln!(
            "warning: {} instruments passed selection; input may not be LD-clumped",
            data.len()
        );
    }

    let mut results = Vec::new();
    for &method in &methods {
        results.push(run_method(method, &data)?);
    }

    // Reproducible runs echo only file names so the bytes do not depend on
    // the invocation directory.
    let path_echo = |p: &std::path::Path| {
        if args.reproducible {
            p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            p.display().to_string()
        }
    };
    let provenance = FitProvenance {
        tool: "bwmr",
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: if args.reproducible { None } else { Some(unix_timestamp()) },
        exposure_path: path_echo(&args.exposure),
        exposure_sha256: exposure_sha,
        outcome_path: path_echo(&args.outcome),
        outcome_sha256: outcome_sha,
        pval_threshold: args.pval_threshold,
        methods: args.methods.clone(),
        keep_palindromic: args.keep_palindromic,
        seed: args.seed,
        n_exposure_rows: exposure.rows.len(),
        n_outcome_rows: outcome.rows.len(),
        n_multiallelic_dropped: exposure.multiallelic_dropped + outcome.multiallelic_dropped,
        n_pairs: harmonized.pairs.len(),
        n_flipped: harmonized.pairs.iter().filter(|p| p.flipped).count(),
        n_dropped_palindromic: harmonized.dropped_palindromic,
        n_dropped_mismatch: harmonized.dropped_mismatch,
        n_selected: data.len(),
    };

    let content = match args.format {
        OutputFormat::Json => {
            let output = FitOutput { results, provenance };
            let mut text = serde_json::to_string_pretty(&output)
                .map_err(|e| CliFailure::input(e.to_string()))?;
            text.push('\n');
            text
        }
        OutputFormat::Tsv => {
            let mut text = String::from("method\tbeta_hat\tse\tz\tpval\tn_snps\n");
            for r in &results {
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.method,
                    format_sig(r.beta_hat, 6),
                    format_sig(r.se, 6),
                    format_sig(r.z, 6),
                    format_sig(r.pval, 6),
                    r.n_snps
                ));
            }
            text
        }
    };
    write_output(&args.out, &content)
}

fn build_spec(args: &SimulateArgs) -> SimulationSpec {
    SimulationSpec {
        regime: match args.regime {
            RegimeArg::Case1 => Regime::Case1,
            RegimeArg::Case2 => Regime::Case2,
            RegimeArg::Case3 => Regime::Case3,
            RegimeArg::Case4 => Regime::Case4,
            RegimeArg::Case5 => Regime::Case5,
            RegimeArg::Individual => Regime::IndividualFourGroup,
        },
        beta: args.beta,
        seed: args.seed,
        n_snps: args.n_snps,
        sigma: args.sigma,
        tau: args.tau,
        se_lower: args.se_lower,
        se_upper: args.se_upper,
        beta_c: args.beta_c,
        corrupt_rate: args.corrupt_rate,
        tau_c: args.tau_c,
        mix_rate: args.mix_rate,
        laplace_rate: args.laplace_rate,
        shuffle_corrupt: args.shuffle_corrupt,
        n0: args.n0,
        n1: args.n1,
        n2: args.n2,
        prop_00: args.prop_00,
        prop_10: args.prop_10,
        prop_01: args.prop_01,
        prop_11: args.prop_11,
        snr1: args.snr1,
        snr2: args.snr2,
        sigma_gamma_sq: args.sigma_gamma_sq,
        sigma_alpha_sq: args.sigma_alpha_sq,
        pval_threshold: args.pval_threshold,
        selection_mode: match args.selection_mode {
            SelectionModeArg::TwoDataset => SelectionMode::TwoDataset,
            SelectionModeArg::Biased => SelectionMode::Biased,
        },
    }
}

/// Worker-thread resolution: BWMR_THREADS beats the flag, the flag beats
/// the detected parallelism.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    if let Ok(value) = std::env::var("BWMR_THREADS") {
        if let Ok(parsed) = value.trim().parse::<usize>() {
            if parsed >= 1 {
                return parsed;
            }
        }
    }
    flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Serialize)]
struct SimulateProvenance {
    tool: &'static str,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_unix: Option<u64>,
    spec: SimulationSpec,
    methods: String,
    reps: usize,
    threads: usize,
}

#[derive(Serialize)]
struct SimulateOutput {
    report: ReplicationReport,
    provenance: SimulateProvenance,
}

fn round_json_numbers(value: &mut serde_json::Value, digits: usize) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig(f, digits)) {
                        *value = serde_json::Value::Number(rounded);
                    }
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                round_json_numbers(item, digits);
            }
        }
        serde_json::Value::Object(map) => {
            for (_, item) in map.iter_mut() {
                round_json_numbers(item, digits);
            }
        }
        _ => {}
    }
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliFailure> {
    let methods = parse_methods(&args.methods)?;
    let spec = build_spec(args);
    spec.validate()?;
    let threads = resolve_threads(args.threads);
    let report = run_replications(&spec, &methods, args.reps, threads)?;

    if let Some(qq_path) = &args.qq {
        let mut csv = String::from("method,expected_neglog10p,observed_neglog10p\n");
        for m in &report.methods {
            for (expected, observed) in &m.qq {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    m.method,
                    format_sig(*expected, 6),
                    format_sig(*observed, 6)
                ));
            }
        }
        std::fs::write(qq_path, csv)
            .map_err(|e| CliFailure::input(format!("cannot write {}: {e}", qq_path.display())))?;
    }

    let output = SimulateOutput {
        report,
        provenance: SimulateProvenance {
            tool: "bwmr",
            version: env!("CARGO_PKG_VERSION"),
            timestamp_unix: if args.reproducible { None } else { Some(unix_timestamp()) },
            spec,
            methods: args.methods.clone(),
            reps: args.reps,
            threads,
        },
    };
    let mut value = serde_json::to_value(&output).map_err(|e| CliFailure::input(e.to_string()))?;
    round_json_numbers(&mut value, 10);
    let mut text =
        serde_json::to_string_pretty(&value).map_err(|e| CliFailure::input(e.to_string()))?;
    text.push('\n');
    write_output(&args.out, &text)
}
