//! Independent reference implementations used by the integration tests.
//!
//! Each oracle is the slow, obvious version of a library routine. They share
//! no code with the library beyond plain data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

// ---------------------------------------------------------------- patterns

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleFinal {
    pub sequence: Vec<String>,
    pub candidate_support: usize,
    pub match_support: usize,
    pub support: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleMining {
    /// action -> (participants with a run, number of runs)
    pub runs: BTreeMap<String, (usize, usize)>,
    /// In match order.
    pub candidates: Vec<(Vec<String>, usize)>,
    pub finals: Vec<OracleFinal>,
}

/// Collapse a raw trail: deselect_country counts as select_country, then
/// repeated neighbours merge. Returns (actions, run lengths).
pub fn collapse(raw: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut actions: Vec<String> = Vec::new();
    let mut lens: Vec<usize> = Vec::new();
    for a in raw {
        let a = if a == "deselect_country" { "select_country".to_string() } else { a.clone() };
        if actions.last() == Some(&a) {
            *lens.last_mut().unwrap() += 1;
        } else {
            actions.push(a);
            lens.push(1);
        }
    }
    (actions, lens)
}

fn starts_with(trail: &[String], at: usize, seq: &[String]) -> bool {
    at + seq.len() <= trail.len() && trail[at..at + seq.len()] == *seq
}

/// Greedy scan: at each position try patterns in the given order, jump past a
/// hit, otherwise step one action. Returns per-pattern hit counts.
fn scan(trail: &[String], ordered: &[Vec<String>]) -> Vec<usize> {
    let mut hits = vec![0; ordered.len()];
    let mut i = 0;
    while i < trail.len() {
        let mut step = 1;
        for (k, seq) in ordered.iter().enumerate() {
            if starts_with(trail, i, seq) {
                hits[k] += 1;
                step = seq.len();
                break;
            }
        }
        i += step;
    }
    hits
}

fn support_and_count(trails: &[Vec<String>], ordered: &[Vec<String>]) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0); ordered.len()];
    for t in trails {
        for (k, h) in scan(t, ordered).into_iter().enumerate() {
            if h > 0 {
                out[k].0 += 1;
                out[k].1 += h;
            }
        }
    }
    out
}

/// Brute-force miner. Thresholds are given in whole percent so the cut
/// `floor(n * pct / 100)` is computed in integers.
pub fn mine_oracle(raw_trails: &[Vec<String>], t1_pct: usize, t2_pct: usize) -> OracleMining {
    let n = raw_trails.len();
    let cut1 = n * t1_pct / 100;
    let cut2 = n * t2_pct / 100;
    let collapsed: Vec<(Vec<String>, Vec<usize>)> = raw_trails.iter().map(|t| collapse(t)).collect();

    let mut runs: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (actions, lens) in &collapsed {
        let mut mine: BTreeMap<String, usize> = BTreeMap::new();
        for (a, &l) in actions.iter().zip(lens) {
            if l >= 2 {
                *mine.entry(a.clone()).or_default() += 1;
            }
        }
        for (a, c) in mine {
            let e = runs.entry(a).or_default();
            e.0 += 1;
            e.1 += c;
        }
    }
    runs.retain(|_, v| v.0 > cut1);

    let trails: Vec<Vec<String>> = collapsed.into_iter().map(|(a, _)| a).collect();
    let mut seen: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for t in &trails {
        let mut mine: BTreeSet<Vec<String>> = BTreeSet::new();
        for start in 0..t.len() {
            for len in 2..=10 {
                if start + len <= t.len() {
                    mine.insert(t[start..start + len].to_vec());
                }
            }
        }
        for s in mine {
            *seen.entry(s).or_default() += 1;
        }
    }
    let mut candidates: Vec<(Vec<String>, usize)> = seen.into_iter().filter(|(_, s)| *s > cut1).collect();
    candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));

    let ordered: Vec<Vec<String>> = candidates.iter().map(|c| c.0.clone()).collect();
    let first = support_and_count(&trails, &ordered);
    let kept: Vec<usize> = (0..candidates.len()).filter(|&k| first[k].0 > cut2).collect();
    let final_seqs: Vec<Vec<String>> = kept.iter().map(|&k| ordered[k].clone()).collect();
    let second = support_and_count(&trails, &final_seqs);
    let finals = kept
        .iter()
        .zip(second)
        .map(|(&k, (support, count))| OracleFinal {
            sequence: ordered[k].clone(),
            candidate_support: candidates[k].1,
            match_support: first[k].0,
            support,
            count,
        })
        .collect();
    OracleMining { runs, candidates, finals }
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Copy)]
pub struct OracleMetrics {
    pub accuracy: f64,
    pub kappa: f64,
}

/// Agreement from proportions: p_o, p_e and (p_o - p_e) / (1 - p_e).
pub fn metrics_oracle(m: &[Vec<u64>]) -> OracleMetrics {
    let k = m.len();
    let n: f64 = m.iter().flatten().map(|&v| v as f64).sum();
    let p_o: f64 = (0..k).map(|i| m[i][i] as f64 / n).sum();
    let mut p_e = 0.0;
    for c in 0..k {
        let row: f64 = m[c].iter().map(|&v| v as f64).sum::<f64>() / n;
        let col: f64 = m.iter().map(|r| r[c] as f64).sum::<f64>() / n;
        p_e += row * col;
    }
    let kappa = if (1.0 - p_e).abs() < 1e-15 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    OracleMetrics { accuracy: p_o, kappa }
}

/// F1 as 2TP / (2TP + FP + FN); zero when there are no true positives.
pub fn f1_oracle(m: &[Vec<u64>], c: usize) -> f64 {
    let tp = m[c][c] as f64;
    let fp: f64 = (0..m.len()).filter(|&r| r != c).map(|r| m[r][c] as f64).sum();
    let fne: f64 = (0..m.len()).filter(|&p| p != c).map(|p| m[c][p] as f64).sum();
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fne)
    }
}

// ---------------------------------------------------------------- kendall

/// O(n^2) tau-b by pair enumeration; None when either variable is constant.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            if dx * dy > 0.0 {
                concordant += 1;
            } else if dx * dy < 0.0 {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((concordant - discordant) as f64 / denom)
    }
}

// ---------------------------------------------------------------- shapley

/// Shapley values by averaging marginal contributions over all d! orderings.
pub fn shapley_by_orderings(value: &dyn Fn(&[bool]) -> f64, d: usize) -> Vec<f64> {
    fn permute(k: usize, order: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == order.len() {
            out.push(order.clone());
            return;
        }
        for i in k..order.len() {
            order.swap(k, i);
            permute(k + 1, order, out);
            order.swap(k, i);
        }
    }
    let mut orders = Vec::new();
    permute(0, &mut (0..d).collect(), &mut orders);
    let mut phi = vec![0.0; d];
    for order in &orders {
        let mut member = vec![false; d];
        let mut prev = value(&member);
        for &j in order {
            member[j] = true;
            let next = value(&member);
            phi[j] += next - prev;
            prev = next;
        }
    }
    phi.iter().map(|p| p / orders.len() as f64).collect()
}

// ---------------------------------------------------------------- split

/// Smallest label divergence over every two-sided participant assignment
/// whose test size lies within `slack` notes of `target`. `groups` holds
/// per-participant class counts. None when no assignment fits the window.
pub fn best_split_divergence(groups: &[Vec<usize>], target: f64, slack: f64) -> Option<f64> {
    let g = groups.len();
    let k = groups[0].len();
    let mut best: Option<f64> = None;
    for mask in 1..(1u64 << g) - 1 {
        let mut test = vec![0usize; k];
        let mut train = vec![0usize; k];
        for (i, counts) in groups.iter().enumerate() {
            let side = if mask >> i & 1 == 1 { &mut test } else { &mut train };
            for (s, c) in side.iter_mut().zip(counts) {
                *s += c;
            }
        }
        let nt: usize = test.iter().sum();
        let nr: usize = train.iter().sum();
        if nt == 0 || nr == 0 || (nt as f64 - target).abs() > slack {
            continue;
        }
        let div = (0..k)
            .map(|c| (test[c] as f64 / nt as f64 - train[c] as f64 / nr as f64).abs())
            .fold(0.0, f64::max);
        best = Some(best.map_or(div, |b: f64| b.min(div)));
    }
    best
}
