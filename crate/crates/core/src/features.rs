//! Per-note predictor vectors and per-participant aggregates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eventlog::{coverage, SessionLog};
use crate::model::{
    canonical_action, validate_ref, ActionGroup, ActionType, Category, CountryCode, EntityKey,
    Note, NoteId, NoteLabels, ParticipantId, RefKind, RefViolation,
};
use crate::patterns::PatternSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Actions,
    References,
    Patterns,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Actions => "actions",
            FeatureKind::References => "references",
            FeatureKind::Patterns => "patterns",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "actions" => Ok(FeatureKind::Actions),
            "references" => Ok(FeatureKind::References),
            "patterns" => Ok(FeatureKind::Patterns),
            other => Err(format!("unknown feature kind {other:?}")),
        }
    }
}

/// Which interactions count toward a note's action features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// From the start of the participant's log through the note's save/update.
    #[default]
    Cumulative,
    // TODO: add `SincePreviousNote` (reset the window at the previous save) so
    // the two readings of the action window can be compared on real data.
}

/// Characteristic being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Category,
    OverviewDetail,
    PriorKnowledge,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Category => "category",
            Target::OverviewDetail => "overview_detail",
            Target::PriorKnowledge => "prior_knowledge",
        }
    }

    /// Class names in a fixed order.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Target::Category => &["statement", "comparison", "grouping"],
            Target::OverviewDetail => &["overview", "mix", "detail"],
            Target::PriorKnowledge => &["no_prior", "prior"],
        }
    }

    /// The label of a note for this target, if the rater assessed it.
    pub fn label_of(self, labels: &NoteLabels) -> Option<&'static str> {
        match self {
            Target::Category => labels.category.map(Category::as_str),
            Target::OverviewDetail => labels.overview_detail.map(|o| o.as_str()),
            Target::PriorKnowledge => {
                labels.prior_knowledge.map(|p| if p { "prior" } else { "no_prior" })
            }
        }
    }

    /// Positive class of a binary target.
    pub fn positive_class(self) -> Option<&'static str> {
        match self {
            Target::PriorKnowledge => Some("prior"),
            _ => None,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "category" => Ok(Target::Category),
            "overview_detail" => Ok(Target::OverviewDetail),
            "prior_knowledge" => Ok(Target::PriorKnowledge),
            other => Err(format!("unknown target {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("note {0} has no save or update event in its author's log")]
    MissingSaveEvent(NoteId),
    #[error("note {note}: invalid reference: {violation}")]
    InvalidRef { note: NoteId, violation: RefViolation },
    #[error("no interaction log for participant {0}")]
    MissingLog(ParticipantId),
    #[error("unknown feature name {0:?}")]
    UnknownFeature(String),
    #[error("pattern features need a pattern set")]
    MissingPatterns,
    #[error("feature table: {0}")]
    Table(String),
}

/// Closed, ordered feature-name registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub kind: FeatureKind,
    pub names: Vec<String>,
}

pub const REFERENCE_FEATURES: [&str; 8] = [
    "map",
    "line_chart",
    "map_point",
    "line",
    "vertical_reference_line",
    "note",
    "unique_countries",
    "unique_years",
];

impl FeatureRegistry {
    /// The 35 characterization actions in taxonomy order.
    pub fn actions() -> Self {
        Self {
            kind: FeatureKind::Actions,
            names: ActionType::characterization_set().iter().map(|a| a.token().to_owned()).collect(),
        }
    }

    pub fn references() -> Self {
        Self {
            kind: FeatureKind::References,
            names: REFERENCE_FEATURES.iter().map(|s| (*s).to_owned()).collect(),
        }
    }

    pub fn patterns(set: &PatternSet) -> Self {
        Self { kind: FeatureKind::Patterns, names: set.feature_names() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Identify the registry a list of column names belongs to.
    pub fn infer(names: &[String]) -> Result<Self, FeatureError> {
        for reg in [Self::actions(), Self::references()] {
            if reg.names == names {
                return Ok(reg);
            }
        }
        for name in names {
            if !is_pattern_name(name) {
                return Err(FeatureError::UnknownFeature(name.clone()));
            }
        }
        Ok(Self { kind: FeatureKind::Patterns, names: names.to_vec() })
    }
}

fn is_pattern_name(name: &str) -> bool {
    if let Some(token) = name.strip_prefix("run:") {
        return canonical_action(token).is_ok();
    }
    let parts: Vec<&str> = name.split('>').collect();
    parts.len() >= 2 && parts.iter().all(|t| canonical_action(t).is_ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub note_id: NoteId,
    pub participant_id: ParticipantId,
    pub kind: FeatureKind,
    pub values: IndexMap<String, f64>,
    pub label: Option<String>,
}

impl FeatureVector {
    /// Values in registry order; any name outside the registry is an error.
    pub fn aligned(&self, registry: &FeatureRegistry) -> Result<Vec<f64>, FeatureError> {
        for name in self.values.keys() {
            if !registry.names.contains(name) {
                return Err(FeatureError::UnknownFeature(name.clone()));
            }
        }
        Ok(registry.names.iter().map(|n| self.values.get(n).copied().unwrap_or(0.0)).collect())
    }
}

fn is_save_of(e: &crate::eventlog::InteractionEvent, note: &NoteId) -> bool {
    matches!(e.action.token(), "save_note" | "update_note")
        && matches!(&e.target, Some(EntityKey::Note(id)) if id == note)
}

/// Index of the event closing the note's action window (the latest save or update).
pub fn window_end(note: &Note, log: &SessionLog) -> Option<usize> {
    log.events.iter().rposition(|e| is_save_of(e, &note.id))
}

/// Counts of the characterization actions from the start of the log through
/// the note's save or update.
pub fn action_features(
    note: &Note,
    log: &SessionLog,
    policy: WindowPolicy,
) -> Result<FeatureVector, FeatureError> {
    let WindowPolicy::Cumulative = policy;
    let end = window_end(note, log).ok_or_else(|| FeatureError::MissingSaveEvent(note.id.clone()))?;
    let registry = ActionType::characterization_set();
    let mut counts = vec![0.0; registry.len()];
    let slot: HashMap<ActionType, usize> = registry.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    for e in &log.events[..=end] {
        if let Some(&i) = slot.get(&e.action) {
            counts[i] += 1.0;
        }
    }
    Ok(FeatureVector {
        note_id: note.id.clone(),
        participant_id: note.author.clone(),
        kind: FeatureKind::Actions,
        values: registry.iter().map(|a| a.token().to_owned()).zip(counts).collect(),
        label: None,
    })
}

/// Per-kind reference counts plus unique countries and years across all references.
pub fn reference_features(note: &Note) -> Result<FeatureVector, FeatureError> {
    let mut per_kind: BTreeMap<RefKind, usize> = BTreeMap::new();
    let mut countries: BTreeSet<CountryCode> = BTreeSet::new();
    let mut years: BTreeSet<u16> = BTreeSet::new();
    for r in &note.refs {
        validate_ref(r).map_err(|violation| FeatureError::InvalidRef {
            note: note.id.clone(),
            violation,
        })?;
        *per_kind.entry(r.kind).or_insert(0) += 1;
        countries.extend(r.countries.iter().copied());
        years.extend(r.year);
    }
    let mut values: IndexMap<String, f64> = RefKind::ALL
        .iter()
        .map(|k| (k.as_str().to_owned(), per_kind.get(k).copied().unwrap_or(0) as f64))
        .collect();
    values.insert("unique_countries".into(), countries.len() as f64);
    values.insert("unique_years".into(), years.len() as f64);
    Ok(FeatureVector {
        note_id: note.id.clone(),
        participant_id: note.author.clone(),
        kind: FeatureKind::References,
        values,
        label: None,
    })
}

/// Pattern occurrence counts over the same window as [`action_features`].
pub fn pattern_features(
    note: &Note,
    log: &SessionLog,
    patterns: &PatternSet,
) -> Result<FeatureVector, FeatureError> {
    let end = window_end(note, log).ok_or_else(|| FeatureError::MissingSaveEvent(note.id.clone()))?;
    let actions: Vec<ActionType> = log.events[..=end].iter().map(|e| e.action).collect();
    let counts = patterns.count_in(&actions);
    Ok(FeatureVector {
        note_id: note.id.clone(),
        participant_id: note.author.clone(),
        kind: FeatureKind::Patterns,
        values: patterns.feature_names().into_iter().zip(counts.into_iter().map(|c| c as f64)).collect(),
        label: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub note_id: NoteId,
    pub participant_id: ParticipantId,
    pub values: Vec<f64>,
    pub label: Option<String>,
}

/// A labelled design matrix over one registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub registry: FeatureRegistry,
    pub rows: Vec<FeatureRow>,
}

/// Build the matrix for every note, ordered by (participant, window end).
///
/// Labels are taken from `target` when given; notes lacking that label keep
/// `None` and are dropped later by the learner.
pub fn build_matrix(
    notes: &[Note],
    logs: &[SessionLog],
    kind: FeatureKind,
    target: Option<Target>,
    patterns: Option<&PatternSet>,
) -> Result<FeatureMatrix, FeatureError> {
    let registry = match kind {
        FeatureKind::Actions => FeatureRegistry::actions(),
        FeatureKind::References => FeatureRegistry::references(),
        FeatureKind::Patterns => FeatureRegistry::patterns(patterns.ok_or(FeatureError::MissingPatterns)?),
    };
    let by_participant: HashMap<&ParticipantId, &SessionLog> =
        logs.iter().map(|l| (&l.participant_id, l)).collect();
    let mut keyed: Vec<((ParticipantId, i64, NoteId), FeatureRow)> = notes
        .par_iter()
        .map(|note| {
            let log = by_participant.get(&note.author).copied();
            let fv = match kind {
                FeatureKind::Actions => {
                    let log = log.ok_or_else(|| FeatureError::MissingLog(note.author.clone()))?;
                    action_features(note, log, WindowPolicy::Cumulative)?
                }
                FeatureKind::References => reference_features(note)?,
                FeatureKind::Patterns => {
                    let log = log.ok_or_else(|| FeatureError::MissingLog(note.author.clone()))?;
                    pattern_features(note, log, patterns.expect("checked above"))?
                }
            };
            let saved_at = log
                .and_then(|l| window_end(note, l).map(|i| l.events[i].timestamp))
                .unwrap_or(note.updated_at);
            let row = FeatureRow {
                note_id: note.id.clone(),
                participant_id: note.author.clone(),
                values: fv.aligned(&registry)?,
                label: target.and_then(|t| t.label_of(&note.labels)).map(str::to_owned),
            };
            Ok(((note.author.clone(), saved_at, note.id.clone()), row))
        })
        .collect::<Result<_, FeatureError>>()?;
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(FeatureMatrix { registry, rows: keyed.into_iter().map(|(_, r)| r).collect() })
}

impl FeatureMatrix {
    /// Delimited export: `note_id,participant_id,<features...>,label`.
    ///
    /// Values are written in shortest round-trip form, so reading the table
    /// back reproduces every bit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let table = |e: csv::Error| FeatureError::Table(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["note_id".to_owned(), "participant_id".to_owned()];
        header.extend(self.registry.names.iter().cloned());
        header.push("label".into());
        w.write_record(&header).map_err(table)?;
        for row in &self.rows {
            let mut rec = vec![row.note_id.0.clone(), row.participant_id.0.clone()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(row.label.clone().unwrap_or_default());
            w.write_record(&rec).map_err(table)?;
        }
        w.flush().map_err(|e| FeatureError::Table(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let table = |e: csv::Error| FeatureError::Table(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers().map_err(table)?.iter().map(str::to_owned).collect();
        if header.len() < 3
            || header[0] != "note_id"
            || header[1] != "participant_id"
            || header.last().map(String::as_str) != Some("label")
        {
            return Err(FeatureError::Table(
                "header must be note_id,participant_id,<features...>,label".into(),
            ));
        }
        let names = header[2..header.len() - 1].to_vec();
        let registry = FeatureRegistry::infer(&names)?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(table)?;
            let values = (2..rec.len() - 1)
                .map(|i| {
                    rec[i].parse::<f64>().map_err(|_| {
                        FeatureError::Table(format!("invalid number {:?} in column {}", &rec[i], header[i]))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let label = &rec[rec.len() - 1];
            rows.push(FeatureRow {
                note_id: NoteId::new(&rec[0]),
                participant_id: ParticipantId::new(&rec[1]),
                values,
                label: (!label.is_empty()).then(|| label.to_owned()),
            });
        }
        Ok(Self { registry, rows })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub statement: usize,
    pub comparison: usize,
    pub grouping: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub data_exploration: usize,
    pub note_exploration: usize,
    pub edit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAggregate {
    pub participant_id: ParticipantId,
    pub notes: usize,
    /// Mean over notes where the aspect was assessed.
    pub mean_overview_detail: Option<f64>,
    pub mean_prior_knowledge: Option<f64>,
    pub category_counts: CategoryCounts,
    /// Actions up to the participant's last save or update.
    pub action_group_counts: GroupCounts,
    /// Mean number of references of each kind per note.
    pub reference_type_means: BTreeMap<RefKind, f64>,
    pub mean_unique_countries: f64,
    pub mean_unique_years: f64,
    pub countries_explored: usize,
    pub years_explored: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Participant-level summaries. Omitted labels are skipped, not counted as zero.
pub fn participant_aggregates(notes: &[Note], logs: &[SessionLog]) -> Vec<ParticipantAggregate> {
    let mut by_author: BTreeMap<&ParticipantId, Vec<&Note>> = BTreeMap::new();
    for n in notes {
        by_author.entry(&n.author).or_default().push(n);
    }
    let logs: HashMap<&ParticipantId, &SessionLog> = logs.iter().map(|l| (&l.participant_id, l)).collect();
    by_author
        .into_iter()
        .map(|(pid, notes)| {
            let count = notes.len();
            let mut category_counts = CategoryCounts::default();
            for n in &notes {
                match n.labels.category {
                    Some(Category::Statement) => category_counts.statement += 1,
                    Some(Category::Comparison) => category_counts.comparison += 1,
                    Some(Category::Grouping) => category_counts.grouping += 1,
                    None => {}
                }
            }
            let mut reference_type_means = BTreeMap::new();
            for kind in RefKind::ALL {
                let total: usize = notes.iter().map(|n| n.refs.iter().filter(|r| r.kind == kind).count()).sum();
                reference_type_means.insert(kind, total as f64 / count as f64);
            }
            let uniq = |f: &dyn Fn(&Note) -> usize| notes.iter().map(|n| f(n) as f64).sum::<f64>() / count as f64;
            let mean_unique_countries = uniq(&|n| {
                n.refs.iter().flat_map(|r| r.countries.iter()).collect::<BTreeSet<_>>().len()
            });
            let mean_unique_years =
                uniq(&|n| n.refs.iter().filter_map(|r| r.year).collect::<BTreeSet<_>>().len());

            let log = logs.get(pid).copied();
            let mut action_group_counts = GroupCounts::default();
            let (mut countries_explored, mut years_explored) = (0, 0);
            if let Some(log) = log {
                let last = notes.iter().filter_map(|n| window_end(n, log)).max();
                if let Some(last) = last {
                    for e in &log.events[..=last] {
                        match e.action.group() {
                            ActionGroup::DataExploration => action_group_counts.data_exploration += 1,
                            ActionGroup::NoteExploration => action_group_counts.note_exploration += 1,
                            ActionGroup::Edit => action_group_counts.edit += 1,
                            ActionGroup::Other => {}
                        }
                    }
                }
                let cov = coverage(log);
                countries_explored = cov.countries_explored;
                years_explored = cov.years_explored;
            }
            ParticipantAggregate {
                participant_id: pid.clone(),
                notes: count,
                mean_overview_detail: mean(notes.iter().filter_map(|n| n.labels.overview_detail.map(|o| o.score()))),
                mean_prior_knowledge: mean(
                    notes.iter().filter_map(|n| n.labels.prior_knowledge.map(|p| p as u8 as f64)),
                ),
                category_counts,
                action_group_counts,
                reference_type_means,
                mean_unique_countries,
                mean_unique_years,
                countries_explored,
                years_explored,
            }
        })
        .collect()
}

/// Flatten aggregates into a numeric table for the statistics battery.
pub fn aggregates_table(aggs: &[ParticipantAggregate]) -> crate::stats::NumericTable {
    let mut columns: Vec<String> = [
        "notes",
        "mean_overview_detail",
        "mean_prior_knowledge",
        "statement",
        "comparison",
        "grouping",
        "data_exploration",
        "note_exploration",
        "edit",
    ]
    .iter()
    .map(|s| (*s).to_owned())
    .collect();
    columns.extend(RefKind::ALL.iter().map(|k| format!("refs_{}", k.as_str())));
    columns.extend(
        ["unique_countries", "unique_years", "countries_explored", "years_explored"]
            .iter()
            .map(|s| (*s).to_owned()),
    );
    let rows = aggs
        .iter()
        .map(|a| {
            let mut v = vec![
                Some(a.notes as f64),
                a.mean_overview_detail,
                a.mean_prior_knowledge,
                Some(a.category_counts.statement as f64),
                Some(a.category_counts.comparison as f64),
                Some(a.category_counts.grouping as f64),
                Some(a.action_group_counts.data_exploration as f64),
                Some(a.action_group_counts.note_exploration as f64),
                Some(a.action_group_counts.edit as f64),
            ];
            v.extend(RefKind::ALL.iter().map(|k| a.reference_type_means.get(k).copied()));
            v.extend([
                Some(a.mean_unique_countries),
                Some(a.mean_unique_years),
                Some(a.countries_explored as f64),
                Some(a.years_explored as f64),
            ]);
            (a.participant_id.0.clone(), v)
        })
        .collect();
    crate::stats::NumericTable { id_column: "participant_id".into(), columns, rows }
}
