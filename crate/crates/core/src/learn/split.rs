use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnError};
use crate::model::{NoteId, ParticipantId};

const RESTARTS: u64 = 32;
/// Cohorts with at most this many participants are searched exhaustively.
pub const EXACT_MAX_PARTICIPANTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<NoteId>,
    pub test: BTreeSet<NoteId>,
    pub seed: u64,
    pub train_fraction: f64,
    /// Largest absolute per-class proportion gap between the sides.
    pub divergence: f64,
}

struct Group {
    size: usize,
    counts: Vec<usize>,
}

/// Largest absolute per-class proportion difference between two count vectors.
pub fn label_divergence(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.iter().sum::<usize>(), b.iter().sum::<usize>());
    if na == 0 || nb == 0 {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).abs())
        .fold(0.0, f64::max)
}

struct State<'a> {
    groups: &'a [Group],
    in_test: Vec<bool>,
    test_counts: Vec<usize>,
    total_counts: Vec<usize>,
    test_size: usize,
}

impl State<'_> {
    fn flip(&mut self, g: usize) {
        let grp = &self.groups[g];
        if self.in_test[g] {
            self.test_size -= grp.size;
            for (t, c) in self.test_counts.iter_mut().zip(&grp.counts) {
                *t -= c;
            }
        } else {
            self.test_size += grp.size;
            for (t, c) in self.test_counts.iter_mut().zip(&grp.counts) {
                *t += c;
            }
        }
        self.in_test[g] = !self.in_test[g];
    }

    fn divergence(&self) -> f64 {
        let train: Vec<usize> = self.total_counts.iter().zip(&self.test_counts).map(|(t, s)| t - s).collect();
        label_divergence(&train, &self.test_counts)
    }
}

/// Objective, compared lexicographically: size-window violation, then class
/// divergence, then distance from the target test size.
fn score(state: &State, target_test: f64, slack: f64) -> (f64, f64, f64) {
    let off = (state.test_size as f64 - target_test).abs();
    let violation = (off - slack).max(0.0);
    (violation, state.divergence(), off)
}

fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    const EPS: f64 = 1e-12;
    if (a.0 - b.0).abs() > EPS {
        return a.0 < b.0;
    }
    if (a.1 - b.1).abs() > EPS {
        return a.1 < b.1;
    }
    a.2 < b.2 - EPS
}

/// Assign whole participants to train and test.
///
/// The test side targets `(1 - train_fraction)` of the notes within one
/// participant's worth of notes; among such plans the per-class proportion gap
/// is minimised. Small cohorts are searched exhaustively, larger ones by
/// seeded greedy construction followed by move/swap descent.
pub fn grouped_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPlan, LearnError> {
    let mut by_participant: BTreeMap<&ParticipantId, Vec<usize>> = BTreeMap::new();
    for (i, p) in data.participants.iter().enumerate() {
        by_participant.entry(p).or_default().push(i);
    }
    if by_participant.len() < 2 {
        return Err(LearnError::TooFewParticipants(by_participant.len()));
    }
    let n = data.len();
    let ids: Vec<&ParticipantId> = by_participant.keys().copied().collect();
    let groups: Vec<Group> = by_participant
        .values()
        .map(|rows| {
            let mut counts = vec![0; data.classes.len()];
            for &r in rows {
                counts[data.y[r]] += 1;
            }
            Group { size: rows.len(), counts }
        })
        .collect();
    let (largest, big) = groups.iter().enumerate().max_by_key(|(i, g)| (g.size, std::cmp::Reverse(*i))).unwrap();
    let share = big.size as f64 / n as f64;
    if share > train_fraction {
        return Err(LearnError::InfeasibleSplit { participant: ids[largest].clone(), share });
    }

    let mut total_counts = vec![0; data.classes.len()];
    for g in &groups {
        for (t, c) in total_counts.iter_mut().zip(&g.counts) {
            *t += c;
        }
    }
    let target_test = (1.0 - train_fraction) * n as f64;
    let slack = big.size as f64;

    let mut best: Option<(Vec<bool>, (f64, f64, f64))> = None;
    if groups.len() <= EXACT_MAX_PARTICIPANTS {
        best = Some(exhaustive(&groups, &total_counts, target_test, slack));
    }
    for attempt in 0..if best.is_some() { 0 } else { RESTARTS } {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut crate::seed::rng(seed, "split", attempt));
        let mut state = State {
            groups: &groups,
            in_test: vec![false; groups.len()],
            test_counts: vec![0; total_counts.len()],
            total_counts: total_counts.clone(),
            test_size: 0,
        };
        for &g in &order {
            let now = (state.test_size as f64 - target_test).abs();
            let then = (state.test_size as f64 + groups[g].size as f64 - target_test).abs();
            if then < now {
                state.flip(g);
            }
        }
        if state.test_size == 0 {
            let g = *order.iter().min_by_key(|&&g| groups[g].size).unwrap();
            state.flip(g);
        }
        descend(&mut state, target_test, slack);
        let s = score(&state, target_test, slack);
        if best.as_ref().is_none_or(|(_, b)| better(s, *b)) {
            best = Some((state.in_test.clone(), s));
        }
    }
    let (in_test, (_, divergence, _)) = best.expect("at least one restart");

    let mut plan = SplitPlan {
        train: BTreeSet::new(),
        test: BTreeSet::new(),
        seed,
        train_fraction,
        divergence,
    };
    for (g, rows) in by_participant.values().enumerate() {
        let side = if in_test[g] { &mut plan.test } else { &mut plan.train };
        side.extend(rows.iter().map(|&r| data.note_ids[r].clone()));
    }
    Ok(plan)
}

/// Visit every assignment in Gray-code order, one flip per step.
fn exhaustive(groups: &[Group], total_counts: &[usize], target_test: f64, slack: f64) -> (Vec<bool>, (f64, f64, f64)) {
    let mut state = State {
        groups,
        in_test: vec![false; groups.len()],
        test_counts: vec![0; total_counts.len()],
        total_counts: total_counts.to_vec(),
        test_size: 0,
    };
    let n = state.total_counts.iter().sum::<usize>();
    let mut best: Option<(Vec<bool>, (f64, f64, f64))> = None;
    for step in 1u64..1 << groups.len() {
        state.flip(step.trailing_zeros() as usize);
        if state.test_size == 0 || state.test_size == n {
            continue;
        }
        let s = score(&state, target_test, slack);
        if best.as_ref().is_none_or(|(_, b)| better(s, *b)) {
            best = Some((state.in_test.clone(), s));
        }
    }
    best.expect("two or more participants give a two-sided assignment")
}

fn descend(state: &mut State, target_test: f64, slack: f64) {
    let n = state.groups.len();
    loop {
        let current = score(state, target_test, slack);
        let mut improved = false;
        'search: for i in 0..n {
            state.flip(i);
            if state.test_size > 0 && better(score(state, target_test, slack), current) {
                improved = true;
                break 'search;
            }
            for j in (i + 1)..n {
                if state.in_test[j] != state.in_test[i] {
                    continue;
                }
                // i has moved already, so j started on the other side: a swap.
                state.flip(j);
                if state.test_size > 0 && better(score(state, target_test, slack), current) {
                    improved = true;
                    break 'search;
                }
                state.flip(j);
            }
            state.flip(i);
        }
        if !improved {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRegistry, Target};

    fn dataset(groups: &[Vec<usize>]) -> Dataset {
        let mut ds = Dataset {
            registry: FeatureRegistry::references(),
            target: Target::Category,
            classes: Target::Category.classes().iter().map(|s| s.to_string()).collect(),
            x: vec![],
            y: vec![],
            note_ids: vec![],
            participants: vec![],
        };
        for (p, labels) in groups.iter().enumerate() {
            for (k, &l) in labels.iter().enumerate() {
                ds.x.push(vec![0.0; 8]);
                ds.y.push(l);
                ds.note_ids.push(NoteId(format!("p{p:02}n{k}")));
                ds.participants.push(ParticipantId(format!("p{p:02}")));
            }
        }
        ds
    }

    #[test]
    fn symmetric_cohort_splits_eight_to_two() {
        let ds = dataset(&vec![vec![0, 1, 2, 0, 1]; 10]);
        let plan = grouped_split(&ds, 0.8, 3).unwrap();
        assert_eq!(plan.test.len(), 10);
        assert_eq!(plan.train.len(), 40);
        assert_eq!(plan.divergence, 0.0);
    }

    #[test]
    fn same_seed_same_plan() {
        let groups: Vec<Vec<usize>> = (0..12).map(|p| (0..(3 + p % 4)).map(|k| (p + k) % 3).collect()).collect();
        let ds = dataset(&groups);
        assert_eq!(grouped_split(&ds, 0.8, 9).unwrap(), grouped_split(&ds, 0.8, 9).unwrap());
    }

    #[test]
    fn dominant_participant_is_reported() {
        let ds = dataset(&[vec![0; 9], vec![1]]);
        assert!(matches!(grouped_split(&ds, 0.8, 0), Err(LearnError::InfeasibleSplit { .. })));
        let ds = dataset(&[vec![0, 1]]);
        assert_eq!(grouped_split(&ds, 0.8, 0), Err(LearnError::TooFewParticipants(1)));
    }

    #[test]
    fn divergence_matches_recomputation() {
        let groups: Vec<Vec<usize>> =
            (0..20).map(|p| (0..(2 + p % 5)).map(|k| if p % 3 == 0 { 0 } else { (k + p) % 3 }).collect()).collect();
        let ds = dataset(&groups);
        let plan = grouped_split(&ds, 0.8, 1).unwrap();
        let (train, test) = ds.apply(&plan);
        let count = |d: &Dataset| {
            let mut c = vec![0; 3];
            d.y.iter().for_each(|&y| c[y] += 1);
            c
        };
        assert_eq!(label_divergence(&count(&train), &count(&test)), plan.divergence);
        assert!(plan.divergence <= 0.10, "{}", plan.divergence);
    }
}
