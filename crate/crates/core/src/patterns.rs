//! Three-step interaction pattern extraction.
//!
//! 1. Collapse consecutive repeats of the same action (treating
//!    `deselect_country` as `select_country`); repeated runs become
//!    single-action *run patterns*.
//! 2. Enumerate every contiguous window of 2..=10 actions in each collapsed
//!    trail. Windows seen in more than `floor(N * t1)` participants' trails
//!    are *candidates*.
//! 3. Scan each trail left to right, matching candidates longest first, with
//!    each action consumed by at most one match. Candidates matched in more
//!    than `floor(N * t2)` trails are *final*; a second scan restricted to the
//!    final patterns produces their counts.
//!
//! Threshold tuning interacts with the greedy scan: whether `a→b` and `b→c`
//! or only `b→c` survive the first threshold changes what the second
//! threshold sees. Keep `t1` high enough to drop trivial candidates yet low
//! enough to keep a reasonable number relative to the number of action types.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eventlog::SessionLog;
use crate::model::{canonical_action, ActionType, ParticipantId};

pub type Sequence = Vec<ActionType>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Candidate threshold as a fraction of participants (strict "more than").
    pub t1_fraction: f64,
    /// Final-pattern threshold; must not exceed `t1_fraction`.
    pub t2_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self { t1_fraction: 0.25, t2_fraction: 0.20, min_len: 2, max_len: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("t2 ({t2}) must not exceed t1 ({t1})")]
    ThresholdOrder { t1: f64, t2: f64 },
    #[error("threshold fractions must lie in [0, 1]")]
    ThresholdRange,
    #[error("sequence length bounds must satisfy 2 <= min_len <= max_len, got {min}..={max}")]
    LengthBounds { min: usize, max: usize },
    #[error("pattern mining needs at least one participant")]
    NoParticipants,
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_range = |f: f64| (0.0..=1.0).contains(&f);
        if !in_range(self.t1_fraction) || !in_range(self.t2_fraction) {
            return Err(ConfigError::ThresholdRange);
        }
        if self.t2_fraction > self.t1_fraction {
            return Err(ConfigError::ThresholdOrder { t1: self.t1_fraction, t2: self.t2_fraction });
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(ConfigError::LengthBounds { min: self.min_len, max: self.max_len });
        }
        Ok(())
    }
}

/// `floor(n * fraction)`; a pattern needs support strictly above this.
///
/// The small epsilon keeps products like `100 * 0.29` from rounding down a
/// whole step.
pub fn threshold_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// A collapsed trail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trail {
    pub participant_id: ParticipantId,
    pub actions: Vec<ActionType>,
    /// Length of the run each collapsed action replaced.
    pub run_lengths: Vec<usize>,
}

fn select_equivalent(a: ActionType) -> ActionType {
    thread_local! {
        static PAIR: (ActionType, ActionType) = (
            canonical_action("deselect_country").expect("taxonomy token"),
            canonical_action("select_country").expect("taxonomy token"),
        );
    }
    PAIR.with(|&(deselect, select)| if a == deselect { select } else { a })
}

/// Map deselect-country onto select-country, then collapse repeats.
pub fn normalize_trail(participant_id: ParticipantId, actions: &[ActionType]) -> Trail {
    let mut out: Vec<ActionType> = Vec::with_capacity(actions.len());
    let mut runs: Vec<usize> = Vec::with_capacity(actions.len());
    for &a in actions {
        let a = select_equivalent(a);
        match out.last() {
            Some(&last) if last == a => *runs.last_mut().expect("parallel vecs") += 1,
            _ => {
                out.push(a);
                runs.push(1);
            }
        }
    }
    Trail { participant_id, actions: out, run_lengths: runs }
}

/// Every contiguous window with `min_len..=max_len` actions, with occurrence counts.
pub fn enumerate_sequences(
    trail: &[ActionType],
    min_len: usize,
    max_len: usize,
) -> BTreeMap<Sequence, usize> {
    let mut out = BTreeMap::new();
    for len in min_len..=max_len.min(trail.len()) {
        for window in trail.windows(len) {
            *out.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub sequence: Sequence,
    /// Distinct participants whose trail contains the sequence.
    pub support: usize,
}

/// Longest first, then higher support, then token order.
fn match_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.sequence
        .len()
        .cmp(&a.sequence.len())
        .then(b.support.cmp(&a.support))
        .then_with(|| a.sequence.cmp(&b.sequence))
}

/// Sequences present in more than `floor(n * t1)` participants' sets, in match order.
pub fn select_candidates<'a, I>(per_participant: I, n: usize, t1_fraction: f64) -> Vec<Candidate>
where
    I: IntoIterator<Item = &'a BTreeSet<Sequence>>,
{
    let mut support: BTreeMap<&Sequence, usize> = BTreeMap::new();
    for set in per_participant {
        for seq in set {
            *support.entry(seq).or_insert(0) += 1;
        }
    }
    let cut = threshold_count(n, t1_fraction);
    let mut out: Vec<Candidate> = support
        .into_iter()
        .filter(|&(_, s)| s > cut)
        .map(|(seq, support)| Candidate { sequence: seq.clone(), support })
        .collect();
    out.sort_by(match_order);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    /// Index into the candidate list handed to [`Matcher::new`].
    pub pattern: usize,
    pub start: usize,
}

/// Longest-first, non-overlapping matcher over a fixed candidate list.
#[derive(Debug, Clone)]
pub struct Matcher {
    /// Distinct candidate lengths, longest first, each with a slice lookup.
    by_len: Vec<(usize, HashMap<Sequence, usize>)>,
}

impl Matcher {
    /// Candidates shorter than two actions are ignored.
    pub fn new(candidates: &[Candidate]) -> Self {
        let mut by_len: BTreeMap<usize, HashMap<Sequence, usize>> = BTreeMap::new();
        for (i, c) in candidates.iter().enumerate() {
            if c.sequence.len() >= 2 {
                // Equal sequences cannot both appear; keep the first in match order.
                by_len.entry(c.sequence.len()).or_default().entry(c.sequence.clone()).or_insert(i);
            }
        }
        Self { by_len: by_len.into_iter().rev().collect() }
    }

    pub fn scan(&self, trail: &[ActionType]) -> Vec<Match> {
        let mut out = Vec::new();
        let mut i = 0;
        'outer: while i < trail.len() {
            for (len, table) in &self.by_len {
                if i + len > trail.len() {
                    continue;
                }
                // At one position, candidates of equal length match the same
                // slice, so a single lookup per length suffices.
                if let Some(&pattern) = table.get(&trail[i..i + len]) {
                    out.push(Match { pattern, start: i });
                    i += len;
                    continue 'outer;
                }
            }
            i += 1;
        }
        out
    }
}

/// Greedy non-overlapping matching of `candidates` (taken in match order).
pub fn greedy_match(trail: &[ActionType], candidates: &[Candidate]) -> Vec<(Sequence, usize)> {
    let mut ordered = candidates.to_vec();
    ordered.sort_by(match_order);
    Matcher::new(&ordered)
        .scan(trail)
        .into_iter()
        .map(|m| (ordered[m.pattern].sequence.clone(), m.start))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPattern {
    pub action: ActionType,
    /// Participants with at least one run of two or more.
    pub support: usize,
    /// Total runs of two or more across all trails.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalPattern {
    pub sequence: Sequence,
    /// Participants whose trail contains the sequence anywhere.
    pub candidate_support: usize,
    /// Participants with a match in the scan over all candidates.
    pub match_support: usize,
    /// Participants with a match in the scan restricted to final patterns.
    pub support: usize,
    /// Matches in the restricted scan across all trails.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub candidate_min_exclusive: usize,
    pub final_min_exclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    pub participants: usize,
    pub config: MinerConfig,
    pub thresholds: Thresholds,
    pub run_patterns: Vec<RunPattern>,
    pub sequence_candidates: Vec<Candidate>,
    pub final_patterns: Vec<FinalPattern>,
}

/// Runs of length two or more of each action.
///
/// Run patterns are counted from the collapse step alone and never take part
/// in the greedy scan, so one action can feed both a run pattern and a
/// sequence pattern.
fn run_counts(trail: &Trail) -> BTreeMap<ActionType, usize> {
    let mut out = BTreeMap::new();
    for (&a, &len) in trail.actions.iter().zip(&trail.run_lengths) {
        if len >= 2 {
            *out.entry(a).or_insert(0) += 1;
        }
    }
    out
}

/// Run the full extraction over participant logs.
pub fn mine_patterns(logs: &[SessionLog], config: &MinerConfig) -> Result<PatternSet, ConfigError> {
    config.validate()?;
    if logs.is_empty() {
        return Err(ConfigError::NoParticipants);
    }
    let mut ordered: Vec<&SessionLog> = logs.iter().collect();
    ordered.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let trails: Vec<Trail> = ordered
        .par_iter()
        .map(|log| {
            let actions: Vec<ActionType> = log.actions().collect();
            normalize_trail(log.participant_id.clone(), &actions)
        })
        .collect();
    Ok(mine_trails(&trails, config))
}

/// Pattern extraction over already normalized trails.
pub fn mine_trails(trails: &[Trail], config: &MinerConfig) -> PatternSet {
    let n = trails.len();
    let candidate_cut = threshold_count(n, config.t1_fraction);
    let final_cut = threshold_count(n, config.t2_fraction);

    let mut runs: BTreeMap<ActionType, (usize, usize)> = BTreeMap::new();
    for trail in trails {
        for (a, c) in run_counts(trail) {
            let e = runs.entry(a).or_insert((0, 0));
            e.0 += 1;
            e.1 += c;
        }
    }
    let run_patterns = runs
        .into_iter()
        .filter(|&(_, (support, _))| support > candidate_cut)
        .map(|(action, (support, count))| RunPattern { action, support, count })
        .collect();

    let windows: Vec<BTreeSet<Sequence>> = trails
        .par_iter()
        .map(|t| enumerate_sequences(&t.actions, config.min_len, config.max_len).into_keys().collect())
        .collect();
    let candidates = select_candidates(&windows, n, config.t1_fraction);

    let first_pass = match_support(trails, &candidates);
    let finals: Vec<Candidate> = candidates
        .iter()
        .zip(&first_pass)
        .filter(|(_, (support, _))| *support > final_cut)
        .map(|(c, _)| c.clone())
        .collect();
    let second_pass = match_support(trails, &finals);

    let first_by_seq: HashMap<&Sequence, usize> =
        candidates.iter().zip(&first_pass).map(|(c, (s, _))| (&c.sequence, *s)).collect();
    let final_patterns = finals
        .iter()
        .zip(&second_pass)
        .map(|(c, &(support, count))| FinalPattern {
            sequence: c.sequence.clone(),
            candidate_support: c.support,
            match_support: first_by_seq[&c.sequence],
            support,
            count,
        })
        .collect();

    PatternSet {
        participants: n,
        config: *config,
        thresholds: Thresholds {
            candidate_min_exclusive: candidate_cut,
            final_min_exclusive: final_cut,
        },
        run_patterns,
        sequence_candidates: candidates,
        final_patterns,
    }
}

/// Per candidate: (distinct participants matched, total matches).
fn match_support(trails: &[Trail], candidates: &[Candidate]) -> Vec<(usize, usize)> {
    let matcher = Matcher::new(candidates);
    let per_trail: Vec<Vec<usize>> = trails
        .par_iter()
        .map(|t| {
            let mut counts = vec![0usize; candidates.len()];
            for m in matcher.scan(&t.actions) {
                counts[m.pattern] += 1;
            }
            counts
        })
        .collect();
    let mut out = vec![(0, 0); candidates.len()];
    for counts in per_trail {
        for (slot, c) in out.iter_mut().zip(counts) {
            if c > 0 {
                slot.0 += 1;
                slot.1 += c;
            }
        }
    }
    out
}

pub fn sequence_name(seq: &[ActionType]) -> String {
    seq.iter().map(|a| a.token()).collect::<Vec<_>>().join(">")
}

impl PatternSet {
    /// Feature names: `run:<action>` for run patterns, then `a>b>...` for final patterns.
    pub fn feature_names(&self) -> Vec<String> {
        self.run_patterns
            .iter()
            .map(|r| format!("run:{}", r.action.token()))
            .chain(self.final_patterns.iter().map(|p| sequence_name(&p.sequence)))
            .collect()
    }

    /// Occurrences of each pattern in a raw action sequence, in [`feature_names`](Self::feature_names) order.
    pub fn count_in(&self, actions: &[ActionType]) -> Vec<usize> {
        let trail = normalize_trail(ParticipantId::new(""), actions);
        let runs = run_counts(&trail);
        let finals: Vec<Candidate> = self
            .final_patterns
            .iter()
            .map(|p| Candidate { sequence: p.sequence.clone(), support: p.support })
            .collect();
        let mut seq_counts = vec![0usize; finals.len()];
        for m in Matcher::new(&finals).scan(&trail.actions) {
            seq_counts[m.pattern] += 1;
        }
        self.run_patterns
            .iter()
            .map(|r| runs.get(&r.action).copied().unwrap_or(0))
            .chain(seq_counts)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(token: &str) -> ActionType {
        canonical_action(token).unwrap()
    }

    fn seq(tokens: &[&str]) -> Sequence {
        tokens.iter().map(|t| a(t)).collect()
    }

    // Short aliases for hand traces.
    const A: &str = "play";
    const B: &str = "show_notes";
    const C: &str = "drag_node";

    #[test]
    fn collapse_repeats() {
        let t = normalize_trail("p".into(), &seq(&[A, A, B, C]));
        assert_eq!(t.actions, seq(&[A, B, C]));
        assert_eq!(t.run_lengths, vec![2, 1, 1]);
    }

    #[test]
    fn deselect_counts_as_select() {
        let t = normalize_trail(
            "p".into(),
            &seq(&["select_country", "deselect_country", "select_country"]),
        );
        assert_eq!(t.actions, seq(&["select_country"]));
        assert_eq!(t.run_lengths, vec![3]);
        assert!(normalize_trail("p".into(), &[]).actions.is_empty());
    }

    #[test]
    fn enumerates_the_worked_example() {
        let trail = seq(&["select_country", "open_note_input", "cancel_note_input"]);
        let got: BTreeSet<Sequence> = enumerate_sequences(&trail, 2, 10).into_keys().collect();
        let want: BTreeSet<Sequence> = [
            seq(&["select_country", "open_note_input"]),
            seq(&["select_country", "open_note_input", "cancel_note_input"]),
            seq(&["open_note_input", "cancel_note_input"]),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
        assert!(enumerate_sequences(&seq(&[A]), 2, 10).is_empty());
    }

    #[test]
    fn enumerates_overlapping_windows() {
        let got = enumerate_sequences(&seq(&[A, B, A, B]), 2, 10);
        let keys: BTreeSet<Sequence> = got.keys().cloned().collect();
        let want: BTreeSet<Sequence> =
            [seq(&[A, B]), seq(&[B, A]), seq(&[A, B, A]), seq(&[B, A, B]), seq(&[A, B, A, B])]
                .into_iter()
                .collect();
        assert_eq!(keys, want);
        assert_eq!(got[&seq(&[A, B])], 2);
    }

    #[test]
    fn candidate_threshold_is_strict() {
        assert_eq!(threshold_count(158, 0.25), 39);
        assert_eq!(threshold_count(158, 0.20), 31);
        assert_eq!(threshold_count(100, 0.29), 29);

        let s = seq(&[A, B]);
        let sets = |k: usize| -> Vec<BTreeSet<Sequence>> {
            (0..158).map(|i| if i < k { [s.clone()].into() } else { BTreeSet::new() }).collect()
        };
        assert_eq!(select_candidates(&sets(40), 158, 0.25).len(), 1);
        assert!(select_candidates(&sets(39), 158, 0.25).is_empty());

        let four: Vec<BTreeSet<Sequence>> =
            vec![[s.clone()].into(), [s.clone()].into(), BTreeSet::new(), BTreeSet::new()];
        assert_eq!(select_candidates(&four, 4, 0.25)[0].support, 2);
        assert!(select_candidates(std::iter::empty(), 4, 0.25).is_empty());
    }

    fn cand(tokens: &[&str], support: usize) -> Candidate {
        Candidate { sequence: seq(tokens), support }
    }

    #[test]
    fn longest_candidates_match_first() {
        let trail = seq(&[A, B, C, B, C]);
        let got = greedy_match(&trail, &[cand(&[A, B], 5), cand(&[B, C], 5), cand(&[A, B, C], 5)]);
        assert_eq!(got, vec![(seq(&[A, B, C]), 0), (seq(&[B, C]), 3)]);
        assert!(greedy_match(&trail, &[cand(&[C, A], 5)]).is_empty());
    }

    #[test]
    fn consumed_actions_block_later_matches() {
        let got = greedy_match(&seq(&[A, B, C]), &[cand(&[A, B], 1), cand(&[B, C], 1)]);
        assert_eq!(got, vec![(seq(&[A, B]), 0)]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = MinerConfig { t1_fraction: 0.1, t2_fraction: 0.2, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::ThresholdOrder { .. })));
        let bad = MinerConfig { min_len: 1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::LengthBounds { .. })));
        let bad = MinerConfig { min_len: 5, max_len: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(mine_patterns(&[], &MinerConfig::default()), Err(ConfigError::NoParticipants));
    }

    fn trail(p: &str, tokens: &[&str]) -> Trail {
        normalize_trail(p.into(), &seq(tokens))
    }

    #[test]
    fn degenerate_thresholds_keep_every_match() {
        let cfg = MinerConfig { t1_fraction: 0.0, t2_fraction: 0.0, ..Default::default() };
        let set = mine_trails(&[trail("p", &[A, B, C, A])], &cfg);
        // Every window is a candidate; the scan takes the whole trail once.
        assert_eq!(set.sequence_candidates.len(), 6);
        assert_eq!(set.final_patterns.len(), 1);
        assert_eq!(set.final_patterns[0].sequence, seq(&[A, B, C, A]));
        assert_eq!(set.final_patterns[0].count, 1);
    }

    #[test]
    fn shared_subsequence_is_recovered() {
        let cfg = MinerConfig { t1_fraction: 0.25, t2_fraction: 0.25, ..Default::default() };
        let trails: Vec<Trail> = (0..10)
            .map(|i| {
                // Each flank token appears in two trails, below the > 2 cut.
                let noise = ["drag_node", "hover_node", "view_discussions", "reply_note", "stop"][i % 5];
                trail(&format!("p{i}"), &[noise, A, B, C, noise])
            })
            .collect();
        let set = mine_trails(&trails, &cfg);
        let abc = set.final_patterns.iter().find(|p| p.sequence == seq(&[A, B, C])).unwrap();
        assert_eq!((abc.support, abc.count, abc.candidate_support), (10, 10, 10));
    }

    #[test]
    fn run_patterns_use_collapse_counts() {
        let cfg = MinerConfig { t1_fraction: 0.0, t2_fraction: 0.0, ..Default::default() };
        let set = mine_trails(
            &[trail("p1", &[A, A, B, A, A, A]), trail("p2", &[B, B, A])],
            &cfg,
        );
        let runs: Vec<(ActionType, usize, usize)> =
            set.run_patterns.iter().map(|r| (r.action, r.support, r.count)).collect();
        let mut want = vec![(a(B), 1, 1), (a(A), 1, 2)];
        want.sort();
        assert_eq!(runs, want);
    }

    #[test]
    fn pattern_features_count_prefix_matches() {
        let cfg = MinerConfig { t1_fraction: 0.0, t2_fraction: 0.0, ..Default::default() };
        let set = mine_trails(&[trail("p1", &[A, A, B]), trail("p2", &[A, B])], &cfg);
        assert_eq!(set.feature_names(), vec!["run:play".to_string(), "play>show_notes".to_string()]);
        assert_eq!(set.count_in(&seq(&[A, A, B, C, A, B])), vec![1, 2]);
        assert_eq!(set.count_in(&[]), vec![0, 0]);
    }
}
