//! Individual-level four-group generator: genotypes, phenotypes, per-SNP
//! regressions, and p-value instrument selection.
//!
//! Group labels partition SNPs by whether they carry an exposure effect, a
//! direct outcome effect, both, or neither. Noise variances are rescaled to
//! the realized genetic variance so each dataset meets its target
//! signal-to-noise ratio exactly, not just in expectation.

use rand::prelude::*;
use rand_distr::{Distribution, Normal, Uniform};

use super::{GroundTruth, Regime, SelectionMode, SimulationSpec};
use crate::data::SummaryDataset;
use crate::special::two_sided_p;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Neither,
    ExposureOnly,
    OutcomeOnly,
    Both,
}

/// Genotype matrix in per-SNP columns of 0/1/2 minor-allele counts.
struct Genotypes {
    columns: Vec<Vec<u8>>,
}

fn draw_genotypes<R: Rng>(rng: &mut R, mafs: &[f64], samples: usize) -> Genotypes {
    let columns = mafs
        .iter()
        .map(|&p| {
            let p0 = (1.0 - p) * (1.0 - p);
            let p01 = p0 + 2.0 * p * (1.0 - p);
            (0..samples)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < p0 {
                        0u8
                    } else if u < p01 {
                        1u8
                    } else {
                        2u8
                    }
                })
                .collect()
        })
        .collect();
    Genotypes { columns }
}

fn genetic_component(geno: &Genotypes, effects: &[f64], samples: usize) -> Vec<f64> {
    let mut v = vec![0.0; samples];
    for (col, &e) in geno.columns.iter().zip(effects) {
        if e == 0.0 {
            continue;
        }
        for (vi, &g) in v.iter_mut().zip(col) {
            *vi += e * g as f64;
        }
    }
    v
}

fn population_variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
}

/// Add noise scaled so var(genetic) / var(noise) equals snr^2 exactly.
fn phenotype_with_snr<R: Rng>(rng: &mut R, genetic: &[f64], snr: f64) -> Vec<f64> {
    let raw: Vec<f64> = {
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..genetic.len()).map(|_| d.sample(rng)).collect()
    };
    let var_g = population_variance(genetic);
    let var_raw = population_variance(&raw);
    // Degenerate spec with no genetic variance: fall back to unit noise.
    let scale = if var_g > 0.0 && var_raw > 0.0 {
        (var_g / (snr * snr * var_raw)).sqrt()
    } else {
        1.0
    };
    genetic.iter().zip(&raw).map(|(g, e)| g + scale * e).collect()
}

/// Simple-regression slope, standard error, and normal-approximation
/// p-value of `pheno` on one genotype column.
pub(crate) fn regress_column(g: &[u8], pheno: &[f64], pheno_mean: f64, pheno_css: f64) -> (f64, f64, f64) {
    let n = g.len() as f64;
    let mut sg = 0.0;
    let mut sgg = 0.0;
    let mut sgx = 0.0;
    for (&gi, &xi) in g.iter().zip(pheno) {
        let gf = gi as f64;
        sg += gf;
        sgg += gf * gf;
        sgx += gf * xi;
    }
    let sgg_c = sgg - sg * sg / n;
    if sgg_c <= 0.0 {
        return (0.0, f64::INFINITY, 1.0);
    }
    let sgx_c = sgx - sg * pheno_mean;
    let slope = sgx_c / sgg_c;
    let rss = (pheno_css - slope * slope * sgg_c).max(0.0);
    let se = (rss / (n - 2.0) / sgg_c).sqrt();
    let (p, _) = two_sided_p(slope / se);
    (slope, se, p)
}

struct RegressionSet {
    slope: Vec<f64>,
    se: Vec<f64>,
    pval: Vec<f64>,
}

fn regress_all(geno: &Genotypes, pheno: &[f64]) -> RegressionSet {
    let mean = pheno.iter().sum::<f64>() / pheno.len() as f64;
    let css = pheno.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let mut out = RegressionSet {
        slope: Vec::with_capacity(geno.columns.len()),
        se: Vec::with_capacity(geno.columns.len()),
        pval: Vec::with_capacity(geno.columns.len()),
    };
    for col in &geno.columns {
        let (b, s, p) = regress_column(col, pheno, mean, css);
        out.slope.push(b);
        out.se.push(s);
        out.pval.push(p);
    }
    out
}

pub fn gen_individual_level<R: Rng>(
    spec: &SimulationSpec,
    rng: &mut R,
) -> Result<(SummaryDataset, GroundTruth)> {
    spec.validate()?;
    if !matches!(spec.regime, Regime::IndividualFourGroup) {
        return Err(Error::InvalidSpec("gen_individual_level needs the individual regime".into()));
    }
    let n0 = spec.n0;

    let maf_dist = Uniform::new_inclusive(0.05, 0.5);
    let mafs: Vec<f64> = (0..n0).map(|_| maf_dist.sample(rng)).collect();

    let groups: Vec<Group> = (0..n0)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < spec.prop_00 {
                Group::Neither
            } else if u < spec.prop_00 + spec.prop_10 {
                Group::ExposureOnly
            } else if u < spec.prop_00 + spec.prop_10 + spec.prop_01 {
                Group::OutcomeOnly
            } else {
                Group::Both
            }
        })
        .collect();

    let gamma_dist = Normal::new(0.0, spec.sigma_gamma_sq.sqrt()).unwrap();
    let alpha_dist = Normal::new(0.0, spec.sigma_alpha_sq.sqrt()).unwrap();
    let gamma: Vec<f64> = groups
        .iter()
        .map(|g| match g {
            Group::ExposureOnly | Group::Both => gamma_dist.sample(rng),
            _ => 0.0,
        })
        .collect();
    let alpha: Vec<f64> = groups
        .iter()
        .map(|g| match g {
            Group::OutcomeOnly | Group::Both => alpha_dist.sample(rng),
            _ => 0.0,
        })
        .collect();
    let big_gamma: Vec<f64> = (0..n0).map(|j| spec.beta * gamma[j] + alpha[j]).collect();

    let g1 = draw_genotypes(rng, &mafs, spec.n1);
    let x = phenotype_with_snr(rng, &genetic_component(&g1, &gamma, spec.n1), spec.snr1);
    let g2 = draw_genotypes(rng, &mafs, spec.n2);
    let y = phenotype_with_snr(rng, &genetic_component(&g2, &big_gamma, spec.n2), spec.snr2);

    let exposure = regress_all(&g1, &x);
    let outcome = regress_all(&g2, &y);

    let selection_pvals = match spec.selection_mode {
        SelectionMode::Biased => exposure.pval.clone(),
        SelectionMode::TwoDataset => {
            let g1_rep = draw_genotypes(rng, &mafs, spec.n1);
            let x_rep =
                phenotype_with_snr(rng, &genetic_component(&g1_rep, &gamma, spec.n1), spec.snr1);
            regress_all(&g1_rep, &x_rep).pval
        }
    };

    let selected: Vec<usize> =
        (0..n0).filter(|&j| selection_pvals[j] <= spec.pval_threshold).collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection(spec.pval_threshold));
    }

    let data = SummaryDataset::new(
        selected.iter().map(|&j| exposure.slope[j]).collect(),
        selected.iter().map(|&j| exposure.se[j]).collect(),
        selected.iter().map(|&j| outcome.slope[j]).collect(),
        selected.iter().map(|&j| outcome.se[j]).collect(),
        Some(selected.iter().map(|&j| format!("snp{j}")).collect()),
    )?;
    let truth = GroundTruth {
        beta: spec.beta,
        gamma: selected.iter().map(|&j| gamma[j]).collect(),
        alpha: selected.iter().map(|&j| alpha[j]).collect(),
        big_gamma: selected.iter().map(|&j| big_gamma[j]).collect(),
        corrupted: vec![false; selected.len()],
        selected: Some(selected),
    };
    Ok((data, truth))
}
