//! The canonical 55-action interaction taxonomy.
//!
//! The taxonomy is a versioned TOML document shipped in `data/taxonomy.toml`
//! and embedded at compile time. [`ActionType`] is a cheap handle into the
//! global table; it serialises as its string token.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

const EMBEDDED: &str = include_str!("../../data/taxonomy.toml");

pub const ACTION_COUNT: usize = 55;
pub const CHARACTERIZATION_COUNT: usize = 35;
pub const PERSONALITY_COUNT: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionGroup {
    DataExploration,
    NoteExploration,
    Edit,
    Other,
}

impl ActionGroup {
    pub const ALL: [ActionGroup; 4] = [
        ActionGroup::DataExploration,
        ActionGroup::NoteExploration,
        ActionGroup::Edit,
        ActionGroup::Other,
    ];

    pub fn expected_size(self) -> usize {
        match self {
            ActionGroup::DataExploration => 12,
            ActionGroup::NoteExploration => 22,
            ActionGroup::Edit => 14,
            ActionGroup::Other => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionGroup::DataExploration => "data_exploration",
            ActionGroup::NoteExploration => "note_exploration",
            ActionGroup::Edit => "edit",
            ActionGroup::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub id: String,
    pub group: ActionGroup,
    pub label: String,
    /// Mouse-over actions, subject to the minimum hover duration filter.
    #[serde(default)]
    pub hover: bool,
    /// Member of the 48-action set. Recorded only; no model consumes it.
    #[serde(default)]
    pub personality: bool,
    /// Member of the 35-action note characterization predictor set.
    #[serde(default)]
    pub characterization: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub version: u32,
    #[serde(rename = "action")]
    pub actions: Vec<TaxonomyEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy document is not valid TOML: {0}")]
    Parse(String),
    #[error("taxonomy must list {ACTION_COUNT} actions, found {0}")]
    Count(usize),
    #[error("duplicate action token {0:?}")]
    Duplicate(String),
    #[error("group {group} must hold {expected} actions, found {found}")]
    GroupSize { group: &'static str, expected: usize, found: usize },
    #[error("characterization subset must hold {CHARACTERIZATION_COUNT} actions, found {0}")]
    Characterization(usize),
    #[error("personality subset must hold {PERSONALITY_COUNT} actions, found {0}")]
    Personality(usize),
    #[error("action {0:?} is in the characterization subset but not the personality subset")]
    SubsetNesting(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action {0:?}")]
pub struct UnknownAction(pub String);

impl Taxonomy {
    pub fn from_toml_str(src: &str) -> Result<Self, TaxonomyError> {
        let taxonomy: Taxonomy =
            toml::from_str(src).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    /// The embedded taxonomy. Validated on first access.
    pub fn global() -> &'static Taxonomy {
        static GLOBAL: LazyLock<Taxonomy> = LazyLock::new(|| {
            Taxonomy::from_toml_str(EMBEDDED).expect("embedded taxonomy is valid")
        });
        &GLOBAL
    }

    pub fn embedded_source() -> &'static str {
        EMBEDDED
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        if self.actions.len() != ACTION_COUNT {
            return Err(TaxonomyError::Count(self.actions.len()));
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(a.id.as_str()) {
                return Err(TaxonomyError::Duplicate(a.id.clone()));
            }
            if a.characterization && !a.personality {
                return Err(TaxonomyError::SubsetNesting(a.id.clone()));
            }
        }
        for group in ActionGroup::ALL {
            let found = self.actions.iter().filter(|a| a.group == group).count();
            if found != group.expected_size() {
                return Err(TaxonomyError::GroupSize {
                    group: group.as_str(),
                    expected: group.expected_size(),
                    found,
                });
            }
        }
        let chars = self.actions.iter().filter(|a| a.characterization).count();
        if chars != CHARACTERIZATION_COUNT {
            return Err(TaxonomyError::Characterization(chars));
        }
        let pers = self.actions.iter().filter(|a| a.personality).count();
        if pers != PERSONALITY_COUNT {
            return Err(TaxonomyError::Personality(pers));
        }
        Ok(())
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.id == token)
    }

    /// SHA-256 over the canonical `id|group|hover|personality|characterization` lines.
    /// Clients compare this against their own table before emitting events.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.actions {
            let line = format!(
                "{}|{}|{}|{}|{}\n",
                a.id,
                a.group.as_str(),
                a.hover as u8,
                a.personality as u8,
                a.characterization as u8
            );
            hasher.update(line.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Handle to one action of the global taxonomy.
///
/// Ordering is lexicographic by token so that sorted pattern output and
/// tie-breaking are independent of the taxonomy file's row order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionType(u8);

impl ActionType {
    pub fn all() -> impl Iterator<Item = ActionType> {
        (0..Taxonomy::global().actions.len()).map(|i| ActionType(i as u8))
    }

    /// The 35 characterization actions in taxonomy order.
    pub fn characterization_set() -> Vec<ActionType> {
        Self::all().filter(|a| a.in_characterization()).collect()
    }

    fn entry(self) -> &'static TaxonomyEntry {
        &Taxonomy::global().actions[self.0 as usize]
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn token(self) -> &'static str {
        &self.entry().id
    }

    pub fn label(self) -> &'static str {
        &self.entry().label
    }

    pub fn group(self) -> ActionGroup {
        self.entry().group
    }

    pub fn is_hover(self) -> bool {
        self.entry().hover
    }

    pub fn in_characterization(self) -> bool {
        self.entry().characterization
    }

    pub fn in_personality(self) -> bool {
        self.entry().personality
    }
}

/// Map a raw token to its canonical action.
pub fn canonical_action(token: &str) -> Result<ActionType, UnknownAction> {
    Taxonomy::global()
        .lookup(token)
        .map(|i| ActionType(i as u8))
        .ok_or_else(|| UnknownAction(token.to_owned()))
}

impl std::str::FromStr for ActionType {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonical_action(s)
    }
}

impl PartialOrd for ActionType {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ActionType {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.token().cmp(other.token())
    }
}

impl fmt::Debug for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl Serialize for ActionType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for ActionType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        canonical_action(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_taxonomy_is_valid() {
        let t = Taxonomy::global();
        assert_eq!(t.actions.len(), 55);
        let sizes: Vec<usize> = ActionGroup::ALL
            .iter()
            .map(|g| t.actions.iter().filter(|a| a.group == *g).count())
            .collect();
        assert_eq!(sizes, vec![12, 22, 14, 7]);
        assert_eq!(sizes.iter().sum::<usize>(), 55);
        assert_eq!(ActionType::characterization_set().len(), 35);
    }

    #[test]
    fn canonical_action_examples() {
        assert_eq!(canonical_action("select_country").unwrap().group(), ActionGroup::DataExploration);
        assert_eq!(canonical_action("view_discussions").unwrap().group(), ActionGroup::NoteExploration);
        let err = canonical_action("fly_to_moon").unwrap_err();
        assert!(err.to_string().contains("fly_to_moon"));
    }

    #[test]
    fn excluded_actions_are_not_predictors() {
        for token in ["hide_notes", "save_note", "stop", "start_session", "add_entity_repeatedly"] {
            assert!(!canonical_action(token).unwrap().in_characterization(), "{token}");
        }
        for token in ["select_country", "hover_vertical_line", "hover_textarea", "view_country_notes"] {
            assert!(canonical_action(token).unwrap().in_characterization(), "{token}");
        }
    }

    #[test]
    fn broken_documents_are_rejected() {
        let src = Taxonomy::embedded_source();
        let dup = src.replacen("id = \"deselect_country\"", "id = \"select_country\"", 1);
        assert_eq!(
            Taxonomy::from_toml_str(&dup).unwrap_err(),
            TaxonomyError::Duplicate("select_country".into())
        );
        let moved = src.replacen(
            "id = \"stop\"\ngroup = \"data_exploration\"",
            "id = \"stop\"\ngroup = \"other\"",
            1,
        );
        assert!(matches!(
            Taxonomy::from_toml_str(&moved).unwrap_err(),
            TaxonomyError::GroupSize { .. }
        ));
    }

    #[test]
    fn checksum_is_stable_and_sensitive() {
        let t = Taxonomy::global();
        assert_eq!(t.checksum(), t.checksum());
        assert_eq!(t.checksum().len(), 64);
        let mut other = t.clone();
        other.actions[0].hover = !other.actions[0].hover;
        assert_ne!(t.checksum(), other.checksum());
    }

    #[test]
    fn tokens_round_trip_through_serde() {
        for a in ActionType::all() {
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<ActionType>(&json).unwrap(), a);
        }
    }
}
