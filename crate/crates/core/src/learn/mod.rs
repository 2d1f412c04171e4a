//! Participant-grouped splitting, classifiers and evaluation.

mod forest;
mod linear;
mod metrics;
mod split;

pub use forest::{train_forest, ForestModel, ForestParams, Node, Tree};
pub use linear::{train_linear, LinearModel, LinearParams};
pub use metrics::{
    evaluate, kappa_band, ConfusionMatrix, Estimate, EvalReport, EVAL_BOOTSTRAP_REPLICATES,
};
pub use split::{grouped_split, label_divergence, SplitPlan, EXACT_MAX_PARTICIPANTS};

use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, FeatureRegistry, Target};
use crate::model::{NoteId, ParticipantId};

/// Version of the persisted model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("training data has no rows")]
    EmptyData,
    #[error("training labels contain a single class ({0})")]
    SingleClass(String),
    #[error("test set is empty")]
    EmptyTest,
    #[error("split needs at least two participants, found {0}")]
    TooFewParticipants(usize),
    #[error("participant {participant} holds {share:.3} of the notes; no participant-disjoint split reaches the train fraction")]
    InfeasibleSplit { participant: ParticipantId, share: f64 },
    #[error("label {label:?} is not a class of target {target}")]
    UnknownLabel { label: String, target: &'static str },
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("feature {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("model document: {0}")]
    Persist(String),
}

/// Labelled rows ready for training, one class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub registry: FeatureRegistry,
    pub target: Target,
    pub classes: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub note_ids: Vec<NoteId>,
    pub participants: Vec<ParticipantId>,
}

impl Dataset {
    /// Rows without a label for `target` are dropped.
    pub fn from_matrix(matrix: &FeatureMatrix, target: Target) -> Result<Self, LearnError> {
        let classes: Vec<String> = target.classes().iter().map(|c| (*c).to_owned()).collect();
        let mut ds = Dataset {
            registry: matrix.registry.clone(),
            target,
            classes,
            x: Vec::new(),
            y: Vec::new(),
            note_ids: Vec::new(),
            participants: Vec::new(),
        };
        for row in &matrix.rows {
            let Some(label) = &row.label else { continue };
            let class = ds.classes.iter().position(|c| c == label).ok_or_else(|| LearnError::UnknownLabel {
                label: label.clone(),
                target: target.as_str(),
            })?;
            if row.values.len() != ds.registry.len() {
                return Err(LearnError::Dimension { expected: ds.registry.len(), got: row.values.len() });
            }
            if let Some(j) = row.values.iter().position(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite(ds.registry.names[j].clone()));
            }
            ds.x.push(row.values.clone());
            ds.y.push(class);
            ds.note_ids.push(row.note_id.clone());
            ds.participants.push(row.participant_id.clone());
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.registry.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            registry: self.registry.clone(),
            target: self.target,
            classes: self.classes.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            note_ids: rows.iter().map(|&i| self.note_ids[i].clone()).collect(),
            participants: rows.iter().map(|&i| self.participants[i].clone()).collect(),
        }
    }

    /// Train and test sides of a plan, preserving row order.
    pub fn apply(&self, plan: &SplitPlan) -> (Dataset, Dataset) {
        let (train, test): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|&i| plan.train.contains(&self.note_ids[i]));
        (self.subset(&train), self.subset(&test))
    }

    /// A copy with labels permuted across rows.
    pub fn shuffled_labels(&self, seed: u64) -> Dataset {
        use rand::seq::SliceRandom;
        let mut out = self.clone();
        out.y.shuffle(&mut crate::seed::rng(seed, "label-shuffle", 0));
        out
    }

    pub(crate) fn check_trainable(&self) -> Result<(), LearnError> {
        if self.is_empty() {
            return Err(LearnError::EmptyData);
        }
        let first = self.y[0];
        if self.y.iter().all(|&c| c == first) {
            return Err(LearnError::SingleClass(self.classes[first].clone()));
        }
        Ok(())
    }
}

/// A trained multiclass model.
pub trait Classifier: Sync {
    fn classes(&self) -> &[String];

    fn feature_names(&self) -> &[String];

    /// Per-class scores summing to one.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;

    /// Most probable class; ties go to the earlier class.
    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Linear,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forest" => Ok(ModelKind::Forest),
            "linear" => Ok(ModelKind::Linear),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Persisted model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub target: Target,
    pub feature_kind: crate::features::FeatureKind,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Forest(ForestModel),
    Linear(LinearModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Forest(_) => ModelKind::Forest,
            Model::Linear(_) => ModelKind::Linear,
        }
    }
}

impl Classifier for Model {
    fn classes(&self) -> &[String] {
        match self {
            Model::Forest(m) => m.classes(),
            Model::Linear(m) => m.classes(),
        }
    }

    fn feature_names(&self) -> &[String] {
        match self {
            Model::Forest(m) => m.feature_names(),
            Model::Linear(m) => m.feature_names(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Forest(m) => m.predict_proba(x),
            Model::Linear(m) => m.predict_proba(x),
        }
    }
}

impl ModelDocument {
    pub fn new(target: Target, feature_kind: crate::features::FeatureKind, model: Model) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, target, feature_kind, model }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model documents serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let doc: Self = serde_json::from_str(s).map_err(|e| LearnError::Persist(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Persist(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}
