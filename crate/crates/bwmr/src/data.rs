//! The per-SNP summary-statistic quadruple that every estimator consumes.

use std::io::{BufRead, Write};

use crate::{Error, Result};

/// GWAS summary statistics for a set of independent instruments: per SNP the
/// estimated SNP-exposure effect with its standard error and the estimated
/// SNP-outcome effect with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryDataset {
    pub gamma_hat: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub big_gamma_hat: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub snp_ids: Option<Vec<String>>,
}

impl SummaryDataset {
    /// Validates lengths, finiteness and standard-error positivity.
    pub fn new(
        gamma_hat: Vec<f64>,
        sigma_x: Vec<f64>,
        big_gamma_hat: Vec<f64>,
        sigma_y: Vec<f64>,
        snp_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = gamma_hat.len();
        if n < 2 {
            return Err(Error::DatasetTooSmall(n));
        }
        if sigma_x.len() != n || big_gamma_hat.len() != n || sigma_y.len() != n {
            return Err(Error::InvalidData(format!(
                "vector lengths differ: {} / {} / {} / {}",
                n,
                sigma_x.len(),
                big_gamma_hat.len(),
                sigma_y.len()
            )));
        }
        if let Some(ids) = &snp_ids {
            if ids.len() != n {
                return Err(Error::InvalidData(format!(
                    "snp_ids length {} does not match {} rows",
                    ids.len(),
                    n
                )));
            }
        }
        for j in 0..n {
            if !gamma_hat[j].is_finite() || !big_gamma_hat[j].is_finite() {
                return Err(Error::InvalidData(format!("non-finite effect at row {j}")));
            }
            if !(sigma_x[j] > 0.0) || !sigma_x[j].is_finite() {
                return Err(Error::InvalidData(format!(
                    "sigma_x must be positive and finite, got {} at row {j}",
                    sigma_x[j]
                )));
            }
            if !(sigma_y[j] > 0.0) || !sigma_y[j].is_finite() {
                return Err(Error::InvalidData(format!(
                    "sigma_y must be positive and finite, got {} at row {j}",
                    sigma_y[j]
                )));
            }
        }
        Ok(Self { gamma_hat, sigma_x, big_gamma_hat, sigma_y, snp_ids })
    }

    /// Construct without validation. Test-only escape hatch for states the
    /// public constructor rejects (for instance N = 1 fixed-point checks).
    #[doc(hidden)]
    pub fn new_unchecked(
        gamma_hat: Vec<f64>,
        sigma_x: Vec<f64>,
        big_gamma_hat: Vec<f64>,
        sigma_y: Vec<f64>,
    ) -> Self {
        Self { gamma_hat, sigma_x, big_gamma_hat, sigma_y, snp_ids: None }
    }

    pub fn len(&self) -> usize {
        self.gamma_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma_hat.is_empty()
    }

    /// Reorder rows by an index permutation.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            gamma_hat: pick(&self.gamma_hat),
            sigma_x: pick(&self.sigma_x),
            big_gamma_hat: pick(&self.big_gamma_hat),
            sigma_y: pick(&self.sigma_y),
            snp_ids: self
                .snp_ids
                .as_ref()
                .map(|ids| order.iter().map(|&i| ids[i].clone()).collect()),
        }
    }

    /// Write the internal TSV form: one header line, then one row per SNP.
    /// Floats are printed in shortest-roundtrip form, so a read-back is exact.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "snp\tbeta_exposure\tse_exposure\tbeta_outcome\tse_outcome")?;
        for j in 0..self.len() {
            let id = match &self.snp_ids {
                Some(ids) => ids[j].clone(),
                None => format!("snp{j}"),
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                id, self.gamma_hat[j], self.sigma_x[j], self.big_gamma_hat[j], self.sigma_y[j]
            )?;
        }
        Ok(())
    }

    /// Read the internal TSV form written by [`SummaryDataset::write_tsv`].
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidData("empty internal TSV".into()))?
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        let expect = "snp\tbeta_exposure\tse_exposure\tbeta_outcome\tse_outcome";
        if header.trim_end_matches('\r') != expect {
            return Err(Error::InvalidData(format!("unexpected internal header: {header}")));
        }
        let mut ids = Vec::new();
        let (mut g, mut sx, mut gg, mut sy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidData(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::InvalidData(format!(
                    "row {}: expected 5 fields, got {}",
                    i + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidData(format!("row {}: bad number {s:?}", i + 2)))
            };
            ids.push(fields[0].to_string());
            g.push(parse(fields[1])?);
            sx.push(parse(fields[2])?);
            gg.push(parse(fields[3])?);
            sy.push(parse(fields[4])?);
        }
        SummaryDataset::new(g, sx, gg, sy, Some(ids))
    }
}
