//! Paired-difference tests.

use serde::{Deserialize, Serialize};

use super::{bootstrap_ci, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub name: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    /// Nonzero differences used by the test.
    pub n: usize,
    pub p_value: f64,
    pub effect: Option<Effect>,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// P(X <= k) for X ~ Binomial(n, 1/2).
pub fn binomial_half_cdf(n: u64, k: u64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if n <= 120 {
        let mut c: u128 = 1;
        let mut sum: u128 = 1;
        for i in 1..=k as u128 {
            c = c * (n as u128 - i + 1) / i;
            sum += c;
        }
        return sum as f64 * 0.5f64.powi(n as i32);
    }
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    (0..=k).map(|i| (ln_choose(n, i) - ln_half_n).exp()).sum::<f64>().min(1.0)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Two-sided exact sign test; zero differences are dropped.
///
/// The effect is the median of all differences with the order-statistic
/// interval whose binomial coverage is at least 95% (the full range when
/// the sample is too small to reach it).
pub fn sign_test(differences: &[f64]) -> Result<TestResult, StatsError> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let pos = differences.iter().filter(|&&d| d > 0.0).count() as u64;
    let neg = differences.iter().filter(|&&d| d < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return Err(StatsError::AllZero);
    }
    let p_value = (2.0 * binomial_half_cdf(n, pos.min(neg))).min(1.0);

    let mut sorted = differences.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as u64;
    // Largest k with 1 - 2 P(X <= k - 1) >= 0.95; interval [d_(k), d_(m-k+1)].
    let mut k = 1;
    while k < m / 2 + 1 && 1.0 - 2.0 * binomial_half_cdf(m, k) >= 0.95 {
        k += 1;
    }
    let (ci_low, ci_high) = (sorted[(k - 1) as usize], sorted[(m - k) as usize]);
    Ok(TestResult {
        method: "sign test, exact two-sided binomial".into(),
        statistic: pos as f64,
        n: n as usize,
        p_value,
        effect: Some(Effect {
            name: "median of differences".into(),
            value: median(&sorted),
            ci_low,
            ci_high,
            ci_method: "binomial order statistics, >= 95% coverage".into(),
        }),
    })
}

/// Average ranks of `values` (1-based), ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

struct SignedRank {
    w_plus: f64,
    z: f64,
    n: usize,
    doubled_ranks: Vec<u64>,
    tie_term: f64,
}

fn signed_rank(differences: &[f64]) -> Option<SignedRank> {
    let nz: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return None;
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };
    Some(SignedRank {
        w_plus,
        z,
        n,
        doubled_ranks: ranks.iter().map(|r| (2.0 * r).round() as u64).collect(),
        tie_term,
    })
}

/// Exact two-sided p from the null distribution of W+ (every sign pattern
/// equally likely), enumerated over doubled ranks so tied ranks stay integral.
fn exact_signed_rank_p(doubled: &[u64], w_plus: f64) -> f64 {
    let total: u64 = doubled.iter().sum();
    let mut ways = vec![0f64; total as usize + 1];
    ways[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if ways[s] > 0.0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    let scale = 0.5f64.powi(doubled.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = ways[..=w].iter().sum::<f64>() * scale;
    let upper: f64 = ways[w..].iter().sum::<f64>() * scale;
    (2.0 * lower.min(upper)).min(1.0)
}

pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Wilcoxon signed-rank test; zero differences are dropped.
///
/// Exact enumeration up to 25 nonzero differences, otherwise the
/// tie-corrected normal approximation with continuity correction. The
/// effect size r = |Z| / sqrt(n) carries a percentile bootstrap interval
/// over the paired differences.
pub fn wilcoxon_signed_rank(differences: &[f64], n_bootstrap: usize, seed: u64) -> Result<TestResult, StatsError> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let sr = signed_rank(differences).ok_or(StatsError::AllZero)?;
    let nf = sr.n as f64;
    let (p_value, method) = if sr.n <= WILCOXON_EXACT_MAX_N {
        (exact_signed_rank_p(&sr.doubled_ranks, sr.w_plus), "Wilcoxon signed-rank, exact")
    } else {
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - sr.tie_term / 48.0;
        let dev = ((sr.w_plus - mean).abs() - 0.5).max(0.0);
        let p = if var > 0.0 { super::normal_two_sided(dev / var.sqrt()) } else { 1.0 };
        (p, "Wilcoxon signed-rank, normal approximation with tie and continuity corrections")
    };
    let r = sr.z.abs() / nf.sqrt();
    let effect_of = |sample: &[f64]| signed_rank(sample).map_or(f64::NAN, |s| s.z.abs() / (s.n as f64).sqrt());
    let (ci_low, ci_high) = bootstrap_ci(differences, effect_of, n_bootstrap, 0.95, seed);
    Ok(TestResult {
        method: method.into(),
        statistic: sr.w_plus,
        n: sr.n,
        p_value,
        effect: Some(Effect {
            name: "r = |Z| / sqrt(n)".into(),
            value: r,
            ci_low,
            ci_high,
            ci_method: format!("percentile bootstrap over participants ({n_bootstrap} replicates)"),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_extremes() {
        let t = sign_test(&[1.0; 10]).unwrap();
        assert_eq!(t.p_value, 2.0 * 0.5f64.powi(10));
        let mut d = vec![1.0; 5];
        d.extend([-1.0; 5]);
        assert_eq!(sign_test(&d).unwrap().p_value, 1.0);
        assert_eq!(sign_test(&[0.0, 0.0]).unwrap_err(), StatsError::AllZero);
    }

    #[test]
    fn sign_test_ignores_magnitudes() {
        let a = sign_test(&[1.0, 2.0, -1.0, 3.0, 0.0, 4.0, 5.0]).unwrap();
        let b = sign_test(&[10.0, 0.1, -7.0, 3.5, 0.0, 99.0, 1e-3]).unwrap();
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn sign_test_interval_brackets_median() {
        let d: Vec<f64> = (0..40).map(|i| f64::from(i % 7) - 1.0).collect();
        let t = sign_test(&d).unwrap();
        let e = t.effect.unwrap();
        assert!(e.ci_low <= e.value && e.value <= e.ci_high);
    }

    #[test]
    fn binomial_tail_matches_log_space() {
        for k in [0, 10, 50, 60] {
            let small = binomial_half_cdf(120, k);
            let ln_half_n = 120.0 * std::f64::consts::LN_2;
            let logsum: f64 = (0..=k).map(|i| (ln_choose(120, i) - ln_half_n).exp()).sum();
            assert!((small - logsum).abs() <= 1e-12 * small.max(1e-300), "{k}");
        }
    }

    #[test]
    fn wilcoxon_all_positive() {
        let t = wilcoxon_signed_rank(&[1.0; 20], 200, 1).unwrap();
        assert!(t.p_value < 0.001);
        assert_eq!(t.statistic, 210.0);
        assert!((t.effect.unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_antisymmetric_is_null() {
        let d: Vec<f64> = (1..=15).flat_map(|i| [f64::from(i), -f64::from(i)]).collect();
        let t = wilcoxon_signed_rank(&d, 200, 1).unwrap();
        assert_eq!(t.p_value, 1.0);
        let large: Vec<f64> = (1..=40).flat_map(|i| [f64::from(i), -f64::from(i)]).collect();
        let t = wilcoxon_signed_rank(&large, 200, 1).unwrap();
        assert!(t.p_value > 0.99);
        assert!(t.effect.unwrap().value < 1e-12);
    }

    #[test]
    fn exact_and_normal_agree_roughly() {
        let d: Vec<f64> = (1..=25).map(|i| if i % 3 == 0 { -f64::from(i) } else { f64::from(i) }).collect();
        let sr = signed_rank(&d).unwrap();
        let exact = exact_signed_rank_p(&sr.doubled_ranks, sr.w_plus);
        let approx = super::super::normal_two_sided(sr.z);
        assert!((exact - approx).abs() < 0.02, "{exact} vs {approx}");
    }
}
