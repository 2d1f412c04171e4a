//! Analytics core for entity-based interaction logs and entity-referencing notes.
//!
//! The crate is organised along the analysis pipeline:
//!
//! * [`model`]: action taxonomy, entity references, notes and labels, the emission dataset.
//! * [`eventlog`]: ingesting and summarising per-participant interaction trails.
//! * [`patterns`]: three-step interaction pattern extraction.
//! * [`features`]: per-note predictor vectors and participant aggregates.
//! * [`learn`]: participant-grouped splits, decision forests, a linear margin
//!   classifier and evaluation metrics.
//! * [`attribution`]: exact and sampled Shapley attributions.
//! * [`stats`]: Kendall's tau-b, bootstrap intervals, sign and signed-rank tests.
//! * [`simulator`]: synthetic cohorts with planted behaviour/label dependencies.

pub mod attribution;
pub mod eventlog;
pub mod features;
pub mod learn;
pub mod model;
pub mod patterns;
pub mod seed;
pub mod simulator;
pub mod stats;

pub use model::{
    canonical_action, validate_ref, ActionGroup, ActionType, CountryCode, EntityKey, EntityRef,
    Note, NoteId, NoteLabels, ParticipantId, RefKind, SessionId,
};

/// Version tag written into every persisted document and report.
pub const SCHEMA_VERSION: u32 = 1;
