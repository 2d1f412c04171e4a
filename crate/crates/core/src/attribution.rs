//! Shapley-value attributions of a classifier's class probability.
//!
//! The value of a coalition `S` is the model output averaged over the
//! background rows with every feature outside `S` taken from the background
//! row (interventional replacement).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::learn::Classifier;
use crate::model::NoteId;

/// Largest dimension for exact coalition enumeration.
pub const EXACT_MAX_FEATURES: usize = 12;
/// Background rows kept by [`background_sample`].
pub const MAX_BACKGROUND: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttributionError {
    #[error("exact Shapley values need at most {max} features, got {d}; use sampled mode")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("no attributions to summarise")]
    EmptySet,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("instance has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least one permutation")]
    NoPermutations,
    #[error("class index {0} out of range")]
    UnknownClass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    Exact,
    Sampled { n_permutations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub note_id: NoteId,
    pub class: String,
    pub features: Vec<String>,
    pub values: Vec<f64>,
    pub phi: Vec<f64>,
    /// Mean model output over the background.
    pub base_value: f64,
    pub model_output: f64,
    pub mode: Mode,
}

struct Game<'a> {
    model: &'a dyn Classifier,
    class: usize,
    instance: &'a [f64],
    background: &'a [Vec<f64>],
}

impl Game<'_> {
    fn value(&self, in_coalition: &dyn Fn(usize) -> bool) -> f64 {
        let mut z = vec![0.0; self.instance.len()];
        let mut sum = 0.0;
        for row in self.background {
            for (j, v) in z.iter_mut().enumerate() {
                *v = if in_coalition(j) { self.instance[j] } else { row[j] };
            }
            sum += self.model.predict_proba(&z)[self.class];
        }
        sum / self.background.len() as f64
    }
}

fn check(model: &dyn Classifier, class: usize, instance: &[f64], background: &[Vec<f64>]) -> Result<(), AttributionError> {
    let d = model.feature_names().len();
    if class >= model.classes().len() {
        return Err(AttributionError::UnknownClass(class));
    }
    if background.is_empty() {
        return Err(AttributionError::EmptyBackground);
    }
    if let Some(bad) = std::iter::once(instance).chain(background.iter().map(Vec::as_slice)).find(|r| r.len() != d) {
        return Err(AttributionError::Dimension { expected: d, got: bad.len() });
    }
    Ok(())
}

fn attribution(model: &dyn Classifier, class: usize, note_id: NoteId, instance: &[f64], phi: Vec<f64>, base: f64, full: f64, mode: Mode) -> Attribution {
    Attribution {
        note_id,
        class: model.classes()[class].clone(),
        features: model.feature_names().to_vec(),
        values: instance.to_vec(),
        phi,
        base_value: base,
        model_output: full,
        mode,
    }
}

/// Exact Shapley values by enumerating all `2^d` coalitions.
pub fn exact_shapley(
    model: &dyn Classifier,
    class: usize,
    note_id: NoteId,
    instance: &[f64],
    background: &[Vec<f64>],
) -> Result<Attribution, AttributionError> {
    check(model, class, instance, background)?;
    let d = instance.len();
    if d > EXACT_MAX_FEATURES {
        return Err(AttributionError::DimensionTooLarge { d, max: EXACT_MAX_FEATURES });
    }
    let game = Game { model, class, instance, background };
    let values: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| game.value(&|j| mask >> j & 1 == 1))
        .collect();
    // weight[s] = s! (d - s - 1)! / d!
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..1usize << d {
            if mask & bit == 0 {
                *p += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
            }
        }
    }
    let full = values[(1usize << d) - 1];
    Ok(attribution(model, class, note_id, instance, phi, values[0], full, Mode::Exact))
}

/// Monte Carlo permutation estimate of the Shapley values.
///
/// Permutation `k` is drawn from a seed derived from `(seed, k)`. Each
/// permutation's marginal contributions telescope, so the estimates still sum
/// to the model output minus the base value.
pub fn sampled_shapley(
    model: &dyn Classifier,
    class: usize,
    note_id: NoteId,
    instance: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution, AttributionError> {
    check(model, class, instance, background)?;
    if n_permutations == 0 {
        return Err(AttributionError::NoPermutations);
    }
    let d = instance.len();
    let game = Game { model, class, instance, background };
    let base = game.value(&|_| false);
    let full = game.value(&|_| true);
    let sums = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(&mut crate::seed::rng(seed, "shapley-permutation", k as u64));
            let mut member = vec![false; d];
            let mut contrib = vec![0.0; d];
            let mut prev = base;
            for (step, &j) in order.iter().enumerate() {
                member[j] = true;
                let next = if step + 1 == d { full } else { game.value(&|i| member[i]) };
                contrib[j] = next - prev;
                prev = next;
            }
            contrib
        })
        .collect::<Vec<_>>();
    let mut phi = vec![0.0; d];
    for c in &sums {
        for (p, v) in phi.iter_mut().zip(c) {
            *p += v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n_permutations as f64);
    Ok(attribution(model, class, note_id, instance, phi, base, full, Mode::Sampled { n_permutations }))
}

/// Up to `size` rows (capped at [`MAX_BACKGROUND`]) chosen without
/// replacement, in original order.
pub fn background_sample(rows: &[Vec<f64>], size: usize, seed: u64) -> Vec<Vec<f64>> {
    let size = size.min(MAX_BACKGROUND);
    if rows.len() <= size {
        return rows.to_vec();
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut crate::seed::rng(seed, "background", 0));
    idx.truncate(size);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Which class probability to attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassChoice {
    Predicted,
    Named(usize),
}

/// Attribute every instance; instance `i` uses a seed derived from `(seed, i)`.
pub fn explain_all(
    model: &dyn Classifier,
    instances: &[(NoteId, Vec<f64>)],
    background: &[Vec<f64>],
    choice: ClassChoice,
    mode: Mode,
    seed: u64,
) -> Result<Vec<Attribution>, AttributionError> {
    instances
        .iter()
        .enumerate()
        .map(|(i, (id, x))| {
            let class = match choice {
                ClassChoice::Predicted => model.predict(x),
                ClassChoice::Named(c) => c,
            };
            match mode {
                Mode::Exact => exact_shapley(model, class, id.clone(), x, background),
                Mode::Sampled { n_permutations } => sampled_shapley(
                    model,
                    class,
                    id.clone(),
                    x,
                    background,
                    n_permutations,
                    crate::seed::derive(seed, "explain", i as u64),
                ),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean of |phi| over the attributed instances.
    pub mean_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub note_id: NoteId,
    pub class: String,
    pub feature: String,
    pub phi: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    /// All features, largest mean |phi| first; ties by name.
    pub ranking: Vec<FeatureImportance>,
    pub top: Vec<FeatureImportance>,
    pub scatter: Vec<ScatterRow>,
}

pub fn summarize(attributions: &[Attribution], top_k: usize) -> Result<AttributionSummary, AttributionError> {
    let first = attributions.first().ok_or(AttributionError::EmptySet)?;
    let n = attributions.len() as f64;
    let mut ranking: Vec<FeatureImportance> = first
        .features
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureImportance {
            feature: name.clone(),
            mean_abs_phi: attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / n,
        })
        .collect();
    ranking.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi).then_with(|| a.feature.cmp(&b.feature)));
    let top = ranking.iter().take(top_k).cloned().collect();
    let scatter = attributions
        .iter()
        .flat_map(|a| {
            a.features.iter().enumerate().map(move |(j, f)| ScatterRow {
                note_id: a.note_id.clone(),
                class: a.class.clone(),
                feature: f.clone(),
                phi: a.phi[j],
                value: a.values[j],
            })
        })
        .collect();
    Ok(AttributionSummary { ranking, top, scatter })
}
