//! Nonparametric statistics for participant-level analyses.

mod kendall;
mod paired;

pub use kendall::{kendall_tau_b, KendallTau};
pub use paired::{binomial_half_cdf, sign_test, wilcoxon_signed_rank, Effect, TestResult, WILCOXON_EXACT_MAX_N};

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BOOTSTRAP: usize = 2000;
/// Correlations with |tau-b| at or below this are left out of reports.
pub const REPORT_MIN_ABS_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("undefined statistic: {0}")]
    Degenerate(&'static str),
    #[error("all differences are zero")]
    AllZero,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("table: {0}")]
    Table(String),
}

/// Two-sided standard normal tail probability.
pub fn normal_two_sided(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Linear-interpolation quantile (Hyndman and Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval of `statistic`.
///
/// Replicate `b` resamples with an RNG derived from `(seed, b)`, so the result
/// is independent of thread scheduling. Replicates where the statistic is
/// undefined (NaN) are discarded; if all are, the interval is `(NaN, NaN)`.
pub fn bootstrap_ci<T, F>(data: &[T], statistic: F, n_rep: usize, level: f64, seed: u64) -> (f64, f64)
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    assert!(!data.is_empty(), "bootstrap of empty data");
    let n = data.len();
    let mut stats: Vec<f64> = (0..n_rep)
        .into_par_iter()
        .map(|b| {
            let mut rng = crate::seed::rng(seed, "bootstrap", b as u64);
            let sample: Vec<T> = (0..n).map(|_| data[rng.random_range(0..n)].clone()).collect();
            statistic(&sample)
        })
        .filter(|v| !v.is_nan())
        .collect();
    if stats.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub x: String,
    pub y: String,
    pub tau_b: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_bootstrap: usize,
    /// Number of correlations in the family this one was computed with.
    pub analyses_count: usize,
}

/// Kendall's tau-b with a percentile bootstrap interval over pairs.
pub fn correlate(
    x: &[f64],
    y: &[f64],
    n_bootstrap: usize,
    seed: u64,
) -> Result<(KendallTau, f64, f64), StatsError> {
    let tau = kendall_tau_b(x, y)?;
    let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    let (lo, hi) = bootstrap_ci(
        &pairs,
        |s| {
            let (a, b): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
            kendall_tau_b(&a, &b).map_or(f64::NAN, |t| t.tau_b)
        },
        n_bootstrap,
        0.95,
        seed,
    );
    Ok((tau, lo, hi))
}

/// Bonferroni adjustment `min(1, p * m)`.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// Numeric table keyed by an id column; empty cells are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTable {
    pub id_column: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl NumericTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.1[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StatsError> {
        let err = |e: csv::Error| StatsError::Table(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.id_column.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (id, values) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(values.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| StatsError::Table(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, StatsError> {
        let err = |e: csv::Error| StatsError::Table(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers().map_err(err)?.iter().map(str::to_owned).collect();
        let Some((id_column, columns)) = header.split_first() else {
            return Err(StatsError::Table("missing header".into()));
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            let values = (1..rec.len())
                .map(|j| match &rec[j] {
                    "" => Ok(None),
                    raw => raw
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| StatsError::Table(format!("invalid number {raw:?} in column {}", header[j]))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((rec[0].to_owned(), values));
        }
        Ok(Self { id_column: id_column.clone(), columns: columns.to_vec(), rows })
    }
}

/// Complete pairs of two columns.
fn paired_columns(table: &NumericTable, a: &str, b: &str) -> Option<(Vec<f64>, Vec<f64>)> {
    let (ca, cb) = (table.column(a)?, table.column(b)?);
    Some(ca.into_iter().zip(cb).filter_map(|(x, y)| Some((x?, y?))).unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub result: TestResult,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub method: String,
    pub seed: u64,
    /// Every correlation computed, unfiltered.
    pub correlations: Vec<CorrelationResult>,
    /// Pairs whose tau-b is undefined (a column is constant).
    pub undefined: Vec<(String, String)>,
    /// Names of correlations passing the |tau-b| reporting filter.
    pub reported: Vec<(String, String)>,
    pub tests: Vec<NamedTest>,
    /// p-values are unadjusted for the correlation family; its size is recorded.
    pub multiplicity_note: String,
}

/// Correlations between every pair of columns plus the paired comparisons
/// that the aggregate table supports: countries against years explored
/// (signed-rank) and each pair of reference kinds (sign test, Bonferroni over
/// that family).
pub fn run_battery(table: &NumericTable, n_bootstrap: usize, seed: u64) -> StatsReport {
    let mut pairs = Vec::new();
    for i in 0..table.columns.len() {
        for j in (i + 1)..table.columns.len() {
            pairs.push((i, j));
        }
    }
    let family = pairs.len();
    let outcomes: Vec<(usize, usize, Result<(KendallTau, f64, f64), StatsError>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let (a, b) = (&table.columns[i], &table.columns[j]);
            let (x, y) = paired_columns(table, a, b).expect("columns exist");
            (i, j, correlate(&x, &y, n_bootstrap, crate::seed::derive(seed, "battery", k as u64)))
        })
        .collect();
    let mut correlations = Vec::new();
    let mut undefined = Vec::new();
    for (i, j, out) in outcomes {
        let (a, b) = (table.columns[i].clone(), table.columns[j].clone());
        match out {
            Ok((t, lo, hi)) => correlations.push(CorrelationResult {
                x: a,
                y: b,
                tau_b: t.tau_b,
                ci_low: lo,
                ci_high: hi,
                p_value: t.p_value,
                n: t.n,
                n_bootstrap,
                analyses_count: family,
            }),
            Err(_) => undefined.push((a, b)),
        }
    }
    let reported = correlations
        .iter()
        .filter(|c| c.tau_b.abs() > REPORT_MIN_ABS_TAU)
        .map(|c| (c.x.clone(), c.y.clone()))
        .collect();

    let mut tests = Vec::new();
    if let Some((c, y)) = paired_columns(table, "countries_explored", "years_explored") {
        let d: Vec<f64> = c.iter().zip(&y).map(|(a, b)| a - b).collect();
        if let Ok(result) = wilcoxon_signed_rank(&d, n_bootstrap, crate::seed::derive(seed, "wilcoxon", 0)) {
            let p = result.p_value;
            tests.push(NamedTest { name: "countries_explored - years_explored".into(), result, p_bonferroni: p });
        }
    }
    let refs: Vec<&String> = table.columns.iter().filter(|c| c.starts_with("refs_")).collect();
    let mut sign_tests = Vec::new();
    for i in 0..refs.len() {
        for j in (i + 1)..refs.len() {
            let (a, b) = paired_columns(table, refs[i], refs[j]).expect("columns exist");
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            if let Ok(result) = sign_test(&d) {
                sign_tests.push((format!("{} - {}", refs[i], refs[j]), result));
            }
        }
    }
    let m = sign_tests.len();
    for (name, result) in sign_tests {
        let p_bonferroni = bonferroni(&[result.p_value], m)[0];
        tests.push(NamedTest { name, result, p_bonferroni });
    }

    StatsReport {
        schema_version: crate::SCHEMA_VERSION,
        method: format!(
            "Kendall tau-b (tie-corrected normal p), 95% percentile bootstrap CI over participants ({n_bootstrap} replicates)"
        ),
        seed,
        correlations,
        undefined,
        reported,
        tests,
        multiplicity_note: format!("{family} correlations computed; p-values not adjusted for multiple comparisons"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonferroni_clamps() {
        assert_eq!(bonferroni(&[0.01, 0.4], 5), vec![0.05, 1.0]);
    }

    #[test]
    fn constant_data_gives_degenerate_interval() {
        let (lo, hi) = bootstrap_ci(&[3.5; 20], |s| s.iter().sum::<f64>() / s.len() as f64, 500, 0.95, 1);
        assert_eq!((lo, hi), (3.5, 3.5));
    }

    #[test]
    fn mean_interval_contains_sample_mean() {
        let data: Vec<f64> = (0..40).map(|i| f64::from((i * 13) % 17)).collect();
        let mean = data.iter().sum::<f64>() / 40.0;
        let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let (lo, hi) = bootstrap_ci(&data, mean_of, 2000, 0.95, 9);
        assert!(lo < mean && mean < hi);
        assert_eq!(bootstrap_ci(&data, mean_of, 2000, 0.95, 9), (lo, hi));
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }

    #[test]
    fn table_round_trip_and_battery() {
        let table = NumericTable {
            id_column: "participant_id".into(),
            columns: vec!["a".into(), "b".into(), "c".into()],
            rows: (0..12)
                .map(|i| {
                    let f = f64::from(i);
                    (format!("p{i}"), vec![Some(f), Some(-f * 0.5), if i == 3 { None } else { Some(1.0) }])
                })
                .collect(),
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert_eq!(NumericTable::read_csv(buf.as_slice()).unwrap(), table);
        let report = run_battery(&table, 200, 4);
        assert_eq!(report.correlations.len(), 1);
        assert_eq!(report.correlations[0].tau_b, -1.0);
        assert_eq!(report.undefined.len(), 2);
        assert_eq!(report.reported, vec![("a".to_owned(), "b".to_owned())]);
    }
}
