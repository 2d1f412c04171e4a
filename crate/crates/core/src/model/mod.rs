//! Shared domain vocabulary.

mod dataset;
mod entity;
mod ids;
mod note;
mod taxonomy;

pub use dataset::{country_name, DatasetError, EmissionDataset, COUNTRIES, FIRST_YEAR, LAST_YEAR};
pub use entity::{validate_ref, EntityKey, EntityRef, RefKind, RefViolation};
pub use ids::{CountryCode, InvalidCountryCode, NoteId, ParticipantId, SessionId};
pub use note::{
    read_notes, write_notes, Category, Mentioned, Note, NoteError, NoteFileError, NoteLabels,
    OverviewDetail,
};
pub use taxonomy::{
    canonical_action, ActionGroup, ActionType, Taxonomy, TaxonomyEntry, TaxonomyError,
    UnknownAction,
};
