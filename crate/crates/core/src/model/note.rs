use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::entity::{validate_ref, EntityRef, RefViolation};
use super::ids::{NoteId, ParticipantId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Statement,
    Comparison,
    Grouping,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Statement, Category::Comparison, Category::Grouping];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Statement => "statement",
            Category::Comparison => "comparison",
            Category::Grouping => "grouping",
        }
    }
}

/// Overview (0), a mix of overview and detail (0.5), or detail (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OverviewDetail {
    Overview,
    Mix,
    Detail,
}

impl OverviewDetail {
    pub const ALL: [OverviewDetail; 3] =
        [OverviewDetail::Overview, OverviewDetail::Mix, OverviewDetail::Detail];

    pub fn score(self) -> f64 {
        match self {
            OverviewDetail::Overview => 0.0,
            OverviewDetail::Mix => 0.5,
            OverviewDetail::Detail => 1.0,
        }
    }

    pub fn from_score(score: f64) -> Option<Self> {
        if score == 0.0 {
            Some(OverviewDetail::Overview)
        } else if score == 0.5 {
            Some(OverviewDetail::Mix)
        } else if score == 1.0 {
            Some(OverviewDetail::Detail)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OverviewDetail::Overview => "overview",
            OverviewDetail::Mix => "mix",
            OverviewDetail::Detail => "detail",
        }
    }
}

impl Serialize for OverviewDetail {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.score())
    }
}

impl<'de> Deserialize<'de> for OverviewDetail {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let score = f64::deserialize(d)?;
        OverviewDetail::from_score(score)
            .ok_or_else(|| serde::de::Error::custom(format!("overview_detail must be 0, 0.5 or 1, got {score}")))
    }
}

/// Entities a rater counted in the note text, duplicates excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mentioned {
    pub countries: u32,
    pub years: u32,
    pub values: u32,
}

/// Rater-assigned characteristics. Any aspect may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overview_detail: Option<OverviewDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "zero_one")]
    pub prior_knowledge: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "zero_one")]
    pub correctness: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "zero_one")]
    pub chart_relevance: Option<bool>,
    #[serde(default)]
    pub mentioned: Mentioned,
}

/// Binary aspects are stored as 0/1 to match the rating sheet.
mod zero_one {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_u8(*b as u8),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub id: NoteId,
    pub author: ParticipantId,
    pub text: String,
    pub refs: Vec<EntityRef>,
    /// Milliseconds since the epoch.
    pub created_at: i64,
    pub updated_at: i64,
    #[serde(default)]
    pub labels: NoteLabels,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NoteError {
    #[error("note {0} must cite at least one entity")]
    NoReferences(NoteId),
    #[error("note {note}: reference {index} is invalid: {violation}")]
    InvalidRef { note: NoteId, index: usize, violation: RefViolation },
    #[error("note {0} is updated before it was created")]
    Timestamps(NoteId),
}

impl Note {
    /// Checks the invariants of a note published through the task flow.
    pub fn validate(&self) -> Result<(), NoteError> {
        if self.refs.is_empty() {
            return Err(NoteError::NoReferences(self.id.clone()));
        }
        for (index, r) in self.refs.iter().enumerate() {
            validate_ref(r).map_err(|violation| NoteError::InvalidRef {
                note: self.id.clone(),
                index,
                violation,
            })?;
        }
        if self.updated_at < self.created_at {
            return Err(NoteError::Timestamps(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NoteFileError {
    #[error("notes line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("notes line {line}: {source}")]
    Invalid { line: usize, source: NoteError },
    #[error("reading notes: {0}")]
    Io(#[from] std::io::Error),
}

/// Write notes one JSON object per line.
pub fn write_notes<W: std::io::Write>(notes: &[Note], mut out: W) -> std::io::Result<()> {
    for n in notes {
        serde_json::to_writer(&mut out, n)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read and validate a JSON-lines note file.
pub fn read_notes<R: std::io::BufRead>(input: R) -> Result<Vec<Note>, NoteFileError> {
    let mut notes = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: Note = serde_json::from_str(&line)
            .map_err(|e| NoteFileError::Malformed { line: i + 1, message: e.to_string() })?;
        note.validate().map_err(|source| NoteFileError::Invalid { line: i + 1, source })?;
        notes.push(note);
    }
    Ok(notes)
}
