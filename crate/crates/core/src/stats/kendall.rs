use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    pub tau_b: f64,
    /// Two-sided p-value from the tie-corrected normal approximation.
    pub p_value: f64,
    pub n: usize,
    /// Concordant minus discordant pairs.
    pub s: i64,
}

fn tie_sums(sorted: &[f64]) -> (u64, f64, f64, f64) {
    // Returns (sum t(t-1)/2, sum t(t-1), sum t(t-1)(t-2), sum t(t-1)(2t+5)).
    let (mut pairs, mut a, mut b, mut c) = (0u64, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        pairs += t * (t - 1) / 2;
        let t = t as f64;
        a += t * (t - 1.0);
        b += t * (t - 1.0) * (t - 2.0);
        c += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j;
    }
    (pairs, a, b, c)
}

/// Sort `v` in place, returning the number of inversions (strictly greater
/// elements placed before smaller ones).
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) with tie corrections.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<KendallTau, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (n1, xa, xb, xc) = tie_sums(&xs);
    let mut n3 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pairs[j] == pairs[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        n3 += t * (t - 1) / 2;
        i = j;
    }
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let (n2, ya, yb, yc) = tie_sums(&ys);

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    let denom = ((n0 - n1) as f64) * ((n0 - n2) as f64);
    if denom == 0.0 {
        return Err(StatsError::Degenerate("every value of one variable is tied"));
    }
    let tau_b = s as f64 / denom.sqrt();

    let nf = n as f64;
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let mut var = (v0 - xc - yc) / 18.0 + xa * ya / (2.0 * nf * (nf - 1.0));
    if n > 2 {
        var += xb * yb / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    let p_value = if var > 0.0 { super::normal_two_sided(s as f64 / var.sqrt()) } else { 1.0 };
    Ok(KendallTau { tau_b, p_value, n, s })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_orderings() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().tau_b, 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().tau_b, -1.0);
    }

    #[test]
    fn tied_example_by_hand() {
        // Pairs of (1,1),(1,2),(2,2),(3,3): C = 4, D = 0, one x tie, one y tie.
        let t = kendall_tau_b(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.s, 4);
        assert!((t.tau_b - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(kendall_tau_b(&[1.0], &[1.0, 2.0]).unwrap_err(), StatsError::LengthMismatch(1, 2));
        assert!(matches!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::Degenerate(_))));
    }

    #[test]
    fn strong_association_is_significant() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let t = kendall_tau_b(&x, &x).unwrap();
        assert!(t.p_value < 1e-6);
        let y: Vec<f64> = (0..30).map(|i| f64::from((i * 7) % 30)).collect();
        assert!(kendall_tau_b(&x, &y).unwrap().p_value > 0.01);
    }
}
