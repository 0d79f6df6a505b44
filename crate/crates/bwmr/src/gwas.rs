//! GWAS summary-statistic ingestion: TSV parsing, allele harmonization
//! between exposure and outcome tables, and instrument selection.
//!
//! Inputs are expected to be LD-clumped already; the tool only warns when a
//! selection looks implausibly large for clumped data.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::data::SummaryDataset;
use crate::Error as CoreError;

#[derive(Debug, Error)]
pub enum GwasError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error: missing mandatory column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: {what}")]
    Row { line: usize, what: String },
    #[error("duplicate snp ids (first {}): {}", .0.len().min(3), .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("no common instruments between exposure and outcome tables")]
    NoCommonInstruments,
}

/// One parsed summary-statistic row.
#[derive(Debug, Clone, PartialEq)]
pub struct GwasRow {
    pub snp: String,
    pub effect_allele: String,
    pub other_allele: String,
    pub beta: f64,
    pub se: f64,
    pub pval: f64,
    pub n: Option<f64>,
    /// 1-based line number in the source file, for diagnostics.
    pub line: usize,
}

/// Parsed table plus ingestion counters.
#[derive(Debug, Clone, Default)]
pub struct GwasTable {
    pub rows: Vec<GwasRow>,
    /// Rows dropped because an allele field held multiple alleles.
    pub multiallelic_dropped: usize,
}

const MANDATORY: [&str; 6] = ["snp", "effect_allele", "other_allele", "beta", "se", "pval"];

fn valid_allele(a: &str) -> bool {
    !a.is_empty() && a.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
}

/// Read a tab-separated summary-statistics file. The first line must be a
/// header naming at least the mandatory columns; extra columns are ignored
/// and CRLF line endings are accepted.
pub fn read_gwas_tsv(path: impl AsRef<Path>) -> Result<GwasTable, GwasError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| GwasError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_gwas_tsv_from(std::io::BufReader::new(file))
}

pub fn read_gwas_tsv_from<R: BufRead>(reader: R) -> Result<GwasTable, GwasError> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(GwasError::MissingColumn("snp"))?;
    let header = header.map_err(|e| GwasError::Row { line: 1, what: e.to_string() })?;
    let names: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in names.iter().enumerate() {
        index.entry(name.as_str()).or_insert(i);
    }
    let mut cols = [0usize; 6];
    for (k, want) in MANDATORY.iter().enumerate() {
        cols[k] = *index.get(want).ok_or(GwasError::MissingColumn(want))?;
    }
    let n_col = index.get("n").copied();

    let mut table = GwasTable::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut duplicates: Vec<String> = Vec::new();

    for (zero_idx, line) in lines {
        let line_no = zero_idx + 1;
        let line = line.map_err(|e| GwasError::Row { line: line_no, what: e.to_string() })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let field = |col: usize, what: &str| -> Result<&str, GwasError> {
            fields.get(col).copied().ok_or_else(|| GwasError::Row {
                line: line_no,
                what: format!("missing field for column {what}"),
            })
        };
        let number = |col: usize, what: &str| -> Result<f64, GwasError> {
            let raw = field(col, what)?;
            raw.trim().parse::<f64>().map_err(|_| GwasError::Row {
                line: line_no,
                what: format!("cannot parse {what} value {raw:?}"),
            })
        };

        let snp = field(cols[0], "snp")?.trim().to_string();
        let effect_allele = field(cols[1], "effect_allele")?.trim().to_ascii_uppercase();
        let other_allele = field(cols[2], "other_allele")?.trim().to_ascii_uppercase();
        if effect_allele.contains(',') || other_allele.contains(',') {
            table.multiallelic_dropped += 1;
            continue;
        }
        if !valid_allele(&effect_allele) || !valid_allele(&other_allele) {
            return Err(GwasError::Row {
                line: line_no,
                what: format!("allele not in ACGT: {effect_allele:?}/{other_allele:?}"),
            });
        }
        let beta = number(cols[3], "beta")?;
        let se = number(cols[4], "se")?;
        if !(se > 0.0) {
            return Err(GwasError::Row { line: line_no, what: format!("se must be positive, got {se}") });
        }
        let pval = number(cols[5], "pval")?;
        if !(0.0..=1.0).contains(&pval) {
            return Err(GwasError::Row { line: line_no, what: format!("pval outside [0, 1]: {pval}") });
        }
        let n = match n_col {
            Some(col) => match fields.get(col).map(|s| s.trim()) {
                Some("") | None => None,
                Some(raw) => Some(raw.parse::<f64>().map_err(|_| GwasError::Row {
                    line: line_no,
                    what: format!("cannot parse n value {raw:?}"),
                })?),
            },
            None => None,
        };

        if !seen.insert(snp.clone()) && duplicates.len() < 3 {
            duplicates.push(snp.clone());
        }
        table.rows.push(GwasRow { snp, effect_allele, other_allele, beta, se, pval, n, line: line_no });
    }
    if !duplicates.is_empty() {
        return Err(GwasError::DuplicateIds(duplicates));
    }
    Ok(table)
}

/// An exposure/outcome pair referring to the same effect allele.
#[derive(Debug, Clone)]
pub struct HarmonizedPair {
    pub exposure: GwasRow,
    pub outcome: GwasRow,
    /// Outcome beta was negated because its alleles were swapped.
    pub flipped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Harmonized {
    pub pairs: Vec<HarmonizedPair>,
    pub dropped_palindromic: usize,
    pub dropped_mismatch: usize,
}

fn complement(allele: &str) -> String {
    allele
        .bytes()
        .map(|b| match b {
            b'A' => 'T',
            b'T' => 'A',
            b'C' => 'G',
            b'G' => 'C',
            other => other as char,
        })
        .collect()
}

fn is_palindromic(ea: &str, oa: &str) -> bool {
    complement(ea) == oa
}

/// Join exposure and outcome rows on SNP id and align the outcome to the
/// exposure's effect allele: swapped alleles negate the outcome beta,
/// strand-complemented alleles are accepted as-is, anything else is
/// dropped. Palindromic SNPs are ambiguous under strand flips and dropped
/// by default.
pub fn harmonize(
    exposure: &GwasTable,
    outcome: &GwasTable,
    drop_palindromic: bool,
) -> Result<Harmonized, GwasError> {
    let by_snp: HashMap<&str, &GwasRow> =
        outcome.rows.iter().map(|r| (r.snp.as_str(), r)).collect();
    let mut out = Harmonized::default();

    for exp in &exposure.rows {
        let Some(&outc) = by_snp.get(exp.snp.as_str()) else { continue };
        if drop_palindromic && is_palindromic(&exp.effect_allele, &exp.other_allele) {
            out.dropped_palindromic += 1;
            continue;
        }
        let same = exp.effect_allele == outc.effect_allele && exp.other_allele == outc.other_allele;
        let swapped = exp.effect_allele == outc.other_allele && exp.other_allele == outc.effect_allele;
        let (comp_ea, comp_oa) = (complement(&outc.effect_allele), complement(&outc.other_allele));
        let comp_same = exp.effect_allele == comp_ea && exp.other_allele == comp_oa;
        let comp_swapped = exp.effect_allele == comp_oa && exp.other_allele == comp_ea;

        let flipped = if same || comp_same {
            false
        } else if swapped || comp_swapped {
            true
        } else {
            out.dropped_mismatch += 1;
            continue;
        };
        let mut aligned = outc.clone();
        aligned.effect_allele = exp.effect_allele.clone();
        aligned.other_allele = exp.other_allele.clone();
        if flipped {
            aligned.beta = -aligned.beta;
        }
        out.pairs.push(HarmonizedPair { exposure: exp.clone(), outcome: aligned, flipped });
    }
    if out.pairs.is_empty() {
        return Err(GwasError::NoCommonInstruments);
    }
    Ok(out)
}

/// Keep pairs whose exposure p-value is at or below the threshold and
/// assemble the model input. The boundary value itself is kept.
pub fn select_instruments(
    pairs: &[HarmonizedPair],
    pval_threshold: f64,
) -> crate::Result<SummaryDataset> {
    let kept: Vec<&HarmonizedPair> =
        pairs.iter().filter(|p| p.exposure.pval <= pval_threshold).collect();
    if kept.len() < 2 {
        return Err(CoreError::InsufficientInstruments { got: kept.len(), need: 2 });
    }
    SummaryDataset::new(
        kept.iter().map(|p| p.exposure.beta).collect(),
        kept.iter().map(|p| p.exposure.se).collect(),
        kept.iter().map(|p| p.outcome.beta).collect(),
        kept.iter().map(|p| p.outcome.se).collect(),
        Some(kept.iter().map(|p| p.exposure.snp.clone()).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const HEADER: &str = "snp\teffect_allele\tother_allele\tbeta\tse\tpval\n";

    fn parse(text: &str) -> Result<GwasTable, GwasError> {
        read_gwas_tsv_from(Cursor::new(text.as_bytes().to_vec()))
    }

    fn row(snp: &str, ea: &str, oa: &str, beta: f64, pval: f64) -> GwasRow {
        GwasRow {
            snp: snp.into(),
            effect_allele: ea.into(),
            other_allele: oa.into(),
            beta,
            se: 0.1,
            pval,
            n: None,
            line: 0,
        }
    }

    fn table(rows: Vec<GwasRow>) -> GwasTable {
        GwasTable { rows, multiallelic_dropped: 0 }
    }

    #[test]
    fn parses_single_row() {
        let t = parse(&format!("{HEADER}rs1\ta\tg\t0.1\t0.01\t1e-9\n")).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].effect_allele, "A");
        assert_eq!(t.rows[0].line, 2);
    }

    #[test]
    fn zero_se_is_row_error() {
        let err = parse(&format!("{HEADER}rs1\tA\tG\t0.1\t0\t0.5\n")).unwrap_err();
        match err {
            GwasError::Row { line, what } => {
                assert_eq!(line, 2);
                assert!(what.contains("se"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crlf_and_lf_parse_identically() {
        let lf = format!("{HEADER}rs1\tA\tG\t0.1\t0.01\t1e-9\nrs2\tC\tT\t-0.2\t0.02\t1e-7\n");
        let crlf = lf.replace('\n', "\r\n");
        assert_ne!(lf.as_bytes(), crlf.as_bytes());
        let a = parse(&lf).unwrap();
        let b = parse(&crlf).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse("snp\teffect_allele\tother_allele\tbeta\tse\nrs1\tA\tG\t0.1\t0.01\n")
            .unwrap_err();
        assert!(matches!(err, GwasError::MissingColumn("pval")));
    }

    #[test]
    fn bad_number_reports_line() {
        let err =
            parse(&format!("{HEADER}rs1\tA\tG\t0.1\t0.01\t1e-9\nrs2\tA\tG\tnot_a_number\t0.01\t0.5\n"))
                .unwrap_err();
        match err {
            GwasError::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_list_first_three() {
        let mut text = HEADER.to_string();
        for _ in 0..4 {
            text.push_str("rs_dup\tA\tG\t0.1\t0.01\t0.5\n");
        }
        match parse(&text).unwrap_err() {
            GwasError::DuplicateIds(ids) => assert_eq!(ids.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiallelic_rows_are_dropped_and_counted() {
        let t = parse(&format!("{HEADER}rs1\tA,T\tG\t0.1\t0.01\t0.5\nrs2\tA\tG\t0.1\t0.01\t0.5\n"))
            .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.multiallelic_dropped, 1);
    }

    #[test]
    fn extra_columns_are_ignored() {
        let t = parse("chr\tsnp\teffect_allele\tother_allele\tbeta\tse\tpval\teaf\n1\trs1\tA\tG\t0.1\t0.01\t0.5\t0.3\n")
            .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].beta, 0.1);
    }

    #[test]
    fn harmonize_swapped_alleles_flip_sign() {
        let exp = table(vec![row("rs1", "A", "G", 0.1, 1e-9)]);
        let out = table(vec![row("rs1", "G", "A", 0.2, 0.5)]);
        let h = harmonize(&exp, &out, true).unwrap();
        assert_eq!(h.pairs.len(), 1);
        assert!(h.pairs[0].flipped);
        assert_eq!(h.pairs[0].outcome.beta, -0.2);
        assert_eq!(h.pairs[0].outcome.effect_allele, "A");
    }

    #[test]
    fn harmonize_drops_palindromic_when_asked() {
        let exp = table(vec![row("rs1", "A", "T", 0.1, 1e-9), row("rs2", "A", "G", 0.1, 1e-9)]);
        let out = table(vec![row("rs1", "A", "T", 0.2, 0.5), row("rs2", "A", "G", 0.2, 0.5)]);
        let h = harmonize(&exp, &out, true).unwrap();
        assert_eq!(h.pairs.len(), 1);
        assert_eq!(h.dropped_palindromic, 1);
        let h = harmonize(&exp, &out, false).unwrap();
        assert_eq!(h.pairs.len(), 2);
    }

    #[test]
    fn harmonize_accepts_strand_complement() {
        // Exposure A/G vs outcome T/C: complements match without swap.
        let exp = table(vec![row("rs1", "A", "G", 0.1, 1e-9)]);
        let out = table(vec![row("rs1", "T", "C", 0.2, 0.5)]);
        let h = harmonize(&exp, &out, true).unwrap();
        assert!(!h.pairs[0].flipped);
        assert_eq!(h.pairs[0].outcome.beta, 0.2);

        // Complement plus swap flips the sign.
        let out = table(vec![row("rs1", "C", "T", 0.2, 0.5)]);
        let h = harmonize(&exp, &out, true).unwrap();
        assert!(h.pairs[0].flipped);
        assert_eq!(h.pairs[0].outcome.beta, -0.2);
    }

    #[test]
    fn harmonize_drops_mismatch_and_detects_empty() {
        let exp = table(vec![row("rs1", "A", "G", 0.1, 1e-9)]);
        let out = table(vec![row("rs1", "A", "C", 0.2, 0.5)]);
        assert!(matches!(harmonize(&exp, &out, true), Err(GwasError::NoCommonInstruments)));
        let exp2 = table(vec![row("rs1", "A", "G", 0.1, 1e-9), row("rs2", "A", "G", 0.1, 1e-9)]);
        let out2 = table(vec![row("rs1", "A", "C", 0.2, 0.5), row("rs2", "A", "G", 0.2, 0.5)]);
        let h = harmonize(&exp2, &out2, true).unwrap();
        assert_eq!(h.dropped_mismatch, 1);
        assert_eq!(h.pairs.len(), 1);
    }

    #[test]
    fn harmonization_is_idempotent() {
        let exp = table(vec![
            row("rs1", "A", "G", 0.1, 1e-9),
            row("rs2", "C", "T", -0.3, 1e-10),
        ]);
        let out = table(vec![
            row("rs1", "G", "A", 0.2, 0.5),
            row("rs2", "G", "A", 0.4, 0.5), // complement + swap of C/T
        ]);
        let h1 = harmonize(&exp, &out, true).unwrap();
        let exp_again = table(h1.pairs.iter().map(|p| p.exposure.clone()).collect());
        let out_again = table(h1.pairs.iter().map(|p| p.outcome.clone()).collect());
        let h2 = harmonize(&exp_again, &out_again, true).unwrap();
        assert_eq!(h2.dropped_mismatch, 0);
        assert_eq!(h2.dropped_palindromic, 0);
        for (a, b) in h1.pairs.iter().zip(&h2.pairs) {
            assert!(!b.flipped);
            assert_eq!(a.outcome.beta, b.outcome.beta);
            assert_eq!(a.exposure.beta, b.exposure.beta);
        }
    }

    #[test]
    fn selection_thresholds() {
        let pairs: Vec<HarmonizedPair> = [1e-9, 5e-8, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &p)| HarmonizedPair {
                exposure: row(&format!("rs{i}"), "A", "G", 0.1, p),
                outcome: row(&format!("rs{i}"), "A", "G", 0.05, 0.5),
                flipped: false,
            })
            .collect();
        assert_eq!(select_instruments(&pairs, 1.0).unwrap().len(), 3);
        // The boundary value 5e-8 is kept.
        assert_eq!(select_instruments(&pairs, 5e-8).unwrap().len(), 2);
        assert!(matches!(
            select_instruments(&pairs, 0.0),
            Err(CoreError::InsufficientInstruments { got: 0, need: 2 })
        ));
    }
}
