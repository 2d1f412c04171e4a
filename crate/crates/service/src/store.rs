//! In-memory note store with the derived scent index and thread queries.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use insightlens_core::features::Target;
use insightlens_core::model::{CountryCode, Note, NoteId, ParticipantId, RefKind};
use serde::{Deserialize, Serialize};

/// Most notes returned for one discussion thread.
pub const THREAD_CAP: usize = 20;

/// Countries and years a note mentions through any of its references.
pub fn mentions(note: &Note) -> (BTreeSet<CountryCode>, BTreeSet<u16>) {
    let mut countries = BTreeSet::new();
    let mut years = BTreeSet::new();
    for r in &note.refs {
        countries.extend(r.countries.iter().copied());
        years.extend(r.year);
    }
    (countries, years)
}

/// Per-country and per-year note counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScentIndex {
    pub countries: BTreeMap<CountryCode, usize>,
    pub years: BTreeMap<u16, usize>,
}

impl ScentIndex {
    pub fn rebuild<'a>(notes: impl IntoIterator<Item = &'a Note>) -> Self {
        let mut index = Self::default();
        for n in notes {
            index.add(n);
        }
        index
    }

    pub fn add(&mut self, note: &Note) {
        let (countries, years) = mentions(note);
        for c in countries {
            *self.countries.entry(c).or_insert(0) += 1;
        }
        for y in years {
            *self.years.entry(y).or_insert(0) += 1;
        }
    }

    pub fn remove(&mut self, note: &Note) {
        let (countries, years) = mentions(note);
        for c in countries {
            decrement(&mut self.countries, c);
        }
        for y in years {
            decrement(&mut self.years, y);
        }
    }

    pub fn country(&self, c: CountryCode) -> usize {
        self.countries.get(&c).copied().unwrap_or(0)
    }

    pub fn year(&self, y: u16) -> usize {
        self.years.get(&y).copied().unwrap_or(0)
    }
}

fn decrement<K: Ord>(map: &mut BTreeMap<K, usize>, key: K) {
    if let Some(v) = map.get_mut(&key) {
        *v -= 1;
        if *v == 0 {
            map.remove(&key);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoteFilter {
    pub country: Option<CountryCode>,
    pub year: Option<u16>,
    pub author: Option<ParticipantId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    /// The citing note.
    pub source: NoteId,
    /// The cited note.
    pub target: NoteId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionThread {
    pub root: NoteId,
    /// Chronological.
    pub notes: Vec<Note>,
    pub links: Vec<Link>,
    pub selected: NoteId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendMode {
    Similar,
    Diverse,
}

impl std::str::FromStr for RecommendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similar" => Ok(Self::Similar),
            "diverse" => Ok(Self::Diverse),
            other => Err(format!("unknown mode {other:?}, expected similar or diverse")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoteStore {
    notes: BTreeMap<NoteId, Note>,
    scent: ScentIndex,
}

impl NoteStore {
    pub fn from_notes(notes: impl IntoIterator<Item = Note>) -> Self {
        let mut store = Self::default();
        for n in notes {
            store.put(n);
        }
        store
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn get(&self, id: &NoteId) -> Option<&Note> {
        self.notes.get(id)
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.notes.values()
    }

    /// Insert or replace; returns the previous version.
    pub fn put(&mut self, note: Note) -> Option<Note> {
        self.scent.add(&note);
        let old = self.notes.insert(note.id.clone(), note);
        if let Some(old) = &old {
            self.scent.remove(old);
        }
        old
    }

    pub fn delete(&mut self, id: &NoteId) -> Option<Note> {
        let old = self.notes.remove(id)?;
        self.scent.remove(&old);
        Some(old)
    }

    pub fn scent(&self) -> &ScentIndex {
        &self.scent
    }

    /// Matching notes, newest first (ties: larger id first).
    pub fn list(&self, filter: &NoteFilter) -> Vec<&Note> {
        let mut out: Vec<&Note> = self
            .notes
            .values()
            .filter(|n| filter.author.as_ref().is_none_or(|a| &n.author == a))
            .filter(|n| {
                if filter.country.is_none() && filter.year.is_none() {
                    return true;
                }
                let (countries, years) = mentions(n);
                filter.country.is_none_or(|c| countries.contains(&c)) && filter.year.is_none_or(|y| years.contains(&y))
            })
            .collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| b.id.cmp(&a.id)));
        out
    }

    fn cited(note: &Note) -> impl Iterator<Item = &NoteId> {
        note.refs.iter().filter(|r| r.kind == RefKind::Note).filter_map(|r| r.note_id.as_ref())
    }

    /// Breadth-first citation neighbourhood of `root` in both directions,
    /// capped at [`THREAD_CAP`] notes and returned chronologically.
    pub fn discussion(&self, root: &NoteId) -> Option<DiscussionThread> {
        self.notes.get(root)?;
        let mut citing: HashMap<&NoteId, Vec<&NoteId>> = HashMap::new();
        for n in self.notes.values() {
            for target in Self::cited(n) {
                citing.entry(target).or_default().push(&n.id);
            }
        }
        let chrono = |id: &NoteId| (self.notes[id].created_at, id.clone());
        let mut seen: BTreeSet<&NoteId> = BTreeSet::from([root]);
        let mut queue: VecDeque<&NoteId> = VecDeque::from([root]);
        'bfs: while let Some(id) = queue.pop_front() {
            let mut next: Vec<&NoteId> = Self::cited(&self.notes[id])
                .chain(citing.get(id).into_iter().flatten().copied())
                .filter(|n| self.notes.contains_key(*n) && !seen.contains(n))
                .collect();
            next.sort_by_key(|n| chrono(n));
            next.dedup();
            for n in next {
                if seen.len() == THREAD_CAP {
                    break 'bfs;
                }
                seen.insert(n);
                queue.push_back(n);
            }
        }
        let mut notes: Vec<Note> = seen.iter().map(|id| self.notes[*id].clone()).collect();
        notes.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let mut links: Vec<Link> = Vec::new();
        for n in &notes {
            for target in Self::cited(n) {
                let link = Link { source: n.id.clone(), target: target.clone() };
                if seen.contains(target) && !links.contains(&link) {
                    links.push(link);
                }
            }
        }
        Some(DiscussionThread { root: root.clone(), notes, links, selected: root.clone() })
    }

    /// Labelled notes that share (`Similar`) or differ from (`Diverse`) the
    /// predicted class, most recent first, ties by id.
    pub fn recommend(&self, target: Target, predicted: &str, mode: RecommendMode, k: usize) -> Vec<&Note> {
        let mut out: Vec<&Note> = self
            .notes
            .values()
            .filter(|n| match (target.label_of(&n.labels), mode) {
                (Some(label), RecommendMode::Similar) => label == predicted,
                (Some(label), RecommendMode::Diverse) => label != predicted,
                (None, _) => false,
            })
            .collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
        out.truncate(k);
        out
    }
}
