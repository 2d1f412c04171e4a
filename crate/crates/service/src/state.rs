//! Service state, its journalled operations and the loaded model.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use insightlens_core::eventlog::{EventRecord, InteractionEvent};
use insightlens_core::features::{reference_features, FeatureKind};
use insightlens_core::learn::{Classifier, EvalReport, ModelDocument};
use insightlens_core::model::{Note, NoteId, ParticipantId, SessionId};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::persist::{Journal, JournalError};
use crate::store::NoteStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub participant_id: ParticipantId,
    pub created_at: i64,
    pub events: Vec<EventRecord>,
    pub dropped_short_hovers: usize,
}

/// A state change, as written to the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Op {
    OpenSession { id: SessionId, participant_id: ParticipantId, created_at: i64 },
    AppendEvents { session: SessionId, events: Vec<EventRecord>, dropped_short_hovers: usize },
    PutNote { note: Note },
    DeleteNote { id: NoteId },
}

/// Everything the journal reconstructs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sessions: BTreeMap<SessionId, Session>,
    pub notes: Vec<Note>,
    pub next_session: u64,
    pub next_note: u64,
}

#[derive(Debug, Default)]
pub struct Data {
    pub sessions: BTreeMap<SessionId, Session>,
    pub store: NoteStore,
    pub next_session: u64,
    pub next_note: u64,
}

/// Largest numeric suffix of a generated id such as `s000012`.
fn counter(id: &str, prefix: char) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl Data {
    fn from_snapshot(s: Snapshot) -> Self {
        Self {
            sessions: s.sessions,
            store: NoteStore::from_notes(s.notes),
            next_session: s.next_session,
            next_note: s.next_note,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            sessions: self.sessions.clone(),
            notes: self.store.notes().cloned().collect(),
            next_session: self.next_session,
            next_note: self.next_note,
        }
    }

    /// Apply a validated operation.
    pub fn apply(&mut self, op: Op) {
        match op {
            Op::OpenSession { id, participant_id, created_at } => {
                if let Some(c) = counter(id.as_str(), 's') {
                    self.next_session = self.next_session.max(c + 1);
                }
                self.sessions.insert(
                    id.clone(),
                    Session { id, participant_id, created_at, events: Vec::new(), dropped_short_hovers: 0 },
                );
            }
            Op::AppendEvents { session, events, dropped_short_hovers } => {
                if let Some(s) = self.sessions.get_mut(&session) {
                    s.events.extend(events);
                    s.dropped_short_hovers += dropped_short_hovers;
                }
            }
            Op::PutNote { note } => {
                if let Some(c) = counter(note.id.as_str(), 'n') {
                    self.next_note = self.next_note.max(c + 1);
                }
                self.store.put(note);
            }
            Op::DeleteNote { id } => {
                self.store.delete(&id);
            }
        }
    }
}

/// A characterization model plus the agreement band of its evaluation.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub document: ModelDocument,
    pub band: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Journal(#[from] JournalError),
}

impl LoadedModel {
    pub fn from_files(model: &Path, report: Option<&Path>) -> Result<Self, LoadError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| LoadError::Io { path: p.display().to_string(), source })
        };
        let document = ModelDocument::from_json(&read(model)?)
            .map_err(|e| LoadError::Parse { path: model.display().to_string(), message: e.to_string() })?;
        let band = match report {
            Some(p) => {
                let r: EvalReport = serde_json::from_str(&read(p)?)
                    .map_err(|e| LoadError::Parse { path: p.display().to_string(), message: e.to_string() })?;
                Some(r.kappa_band)
            }
            None => None,
        };
        Ok(Self { document, band })
    }

    pub fn classifier(&self) -> &dyn Classifier {
        &self.document.model
    }
}

/// Counts of the characterization actions over a session's events.
pub fn session_action_vector(events: &[InteractionEvent], names: &[String]) -> Vec<f64> {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for e in events {
        if e.action.in_characterization() {
            *counts.entry(e.action.token()).or_insert(0.0) += 1.0;
        }
    }
    names.iter().map(|n| counts.get(n.as_str()).copied().unwrap_or(0.0)).collect()
}

/// The feature vector a recommendation is predicted from, if the model's
/// feature kind can be derived from live data.
pub fn recent_vector(model: &LoadedModel, data: &Data, session: &Session) -> Result<Vec<f64>, String> {
    let names = model.classifier().feature_names();
    match model.document.feature_kind {
        FeatureKind::Actions => {
            let events: Vec<InteractionEvent> = session
                .events
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.clone().into_event(i + 1).ok())
                .collect();
            Ok(session_action_vector(&events, names))
        }
        FeatureKind::References => {
            let latest = data
                .store
                .notes()
                .filter(|n| n.author == session.participant_id)
                .max_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)))
                .ok_or_else(|| format!("participant {} has no notes yet", session.participant_id))?;
            let fv = reference_features(latest).map_err(|e| e.to_string())?;
            Ok(names.iter().map(|n| fv.values.get(n).copied().unwrap_or(0.0)).collect())
        }
        FeatureKind::Patterns => Err("pattern-feature models need a mined pattern set and cannot recommend live".into()),
    }
}

pub struct AppState {
    pub data: RwLock<Data>,
    /// Serialises writers; held across validation, append and apply.
    journal: Mutex<Journal>,
    pub model: Option<Arc<LoadedModel>>,
    pub token: Option<String>,
    pub hover_min_ms: u64,
}

pub struct Recovery {
    pub replayed: usize,
    pub truncated_bytes: u64,
}

impl AppState {
    pub fn open(
        dir: &Path,
        snapshot_every: usize,
        model: Option<LoadedModel>,
        token: Option<String>,
        hover_min_ms: u64,
    ) -> Result<(Self, Recovery), LoadError> {
        let (journal, recovered) = Journal::open::<Snapshot, Op>(dir, snapshot_every)?;
        let mut data = recovered.snapshot.map(Data::from_snapshot).unwrap_or_default();
        let replayed = recovered.ops.len();
        for op in recovered.ops {
            data.apply(op);
        }
        let state = Self {
            data: RwLock::new(data),
            journal: Mutex::new(journal),
            model: model.map(Arc::new),
            token,
            hover_min_ms,
        };
        Ok((state, Recovery { replayed, truncated_bytes: recovered.truncated_bytes }))
    }

    /// Validate a request against the current data and build its operation,
    /// make the operation durable, then apply it. Writers are serialised by
    /// the journal lock, so what `prepare` saw is still current at apply time.
    pub fn write<T, E>(&self, prepare: impl FnOnce(&Data) -> Result<(Op, T), E>) -> Result<T, WriteError<E>> {
        let mut journal = self.journal.lock();
        let (op, out) = prepare(&self.data.read()).map_err(WriteError::Rejected)?;
        journal.append(&op).map_err(WriteError::Storage)?;
        let mut data = self.data.write();
        data.apply(op);
        if journal.snapshot_due() {
            let snap = data.snapshot();
            drop(data);
            // The operation is already durable; a failed snapshot is retried
            // on the next write.
            if let Err(e) = journal.snapshot(&snap) {
                tracing::warn!("snapshot failed: {e}");
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub enum WriteError<E> {
    Rejected(E),
    Storage(JournalError),
}

/// Numeric ids handed out by the service.
pub fn session_id(n: u64) -> SessionId {
    SessionId::new(format!("s{n:06}"))
}

pub fn note_id(n: u64) -> NoteId {
    NoteId::new(format!("n{n:06}"))
}
