//! Synthetic cohorts with planted behaviour/label dependencies.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eventlog::{InteractionEvent, SessionLog};
use crate::model::{
    canonical_action, ActionType, Category, CountryCode, EntityKey, EntityRef, Mentioned, Note,
    NoteId, NoteLabels, OverviewDetail, ParticipantId, RefKind, SessionId, COUNTRIES, FIRST_YEAR,
    LAST_YEAR,
};

const BUILTIN: &str = include_str!("../data/profiles.toml");

/// Countries a participant tends to look at.
const POOL_COUNTRIES: usize = 10;
const POOL_YEARS: usize = 8;
const EPOCH_MS: i64 = 1_600_000_000_000;
const DAY_MS: i64 = 86_400_000;
const DEACTIVATION_RATE: f64 = 0.15;

/// Actions the generator places itself; profiles cannot rate them.
const RESERVED: [&str; 7] = [
    "start_session",
    "save_note",
    "update_note",
    "open_note_input",
    "open_note_editing",
    "deactivate_window",
    "activate_window",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("profile file: {0}")]
    Parse(String),
    #[error("profile weights sum to {0}, expected 1")]
    Weights(f64),
    #[error("note-count weights sum to {0}, expected 1")]
    NoteWeights(f64),
    #[error("profile {profile}: noise {noise} outside [0, 0.5)")]
    Noise { profile: String, noise: f64 },
    #[error("profile {profile}: {message}")]
    Invalid { profile: String, message: String },
    #[error("cohort needs at least 2 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("no profile named {0:?}")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorProfile {
    pub name: String,
    pub weight: f64,
    /// Probability that each assigned label is replaced by another class.
    pub noise: f64,
    /// Inclusive range of distinct countries a note focuses on.
    pub countries_per_note: [usize; 2],
    pub years_per_note: [usize; 2],
    pub prior_knowledge_rate: f64,
    pub update_rate: f64,
    /// Expected citations of each kind per note.
    pub reference_tendencies: BTreeMap<RefKind, f64>,
    /// Expected events of each action per note window.
    pub action_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteCount {
    pub count: usize,
    pub weight: f64,
}

/// Deterministic mapping from realised references to labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub comparison_min_countries: usize,
    pub grouping_min_countries: usize,
    pub correctness_rate: f64,
}

impl LabelRule {
    /// Category by unique cited countries; notes citing only other notes are
    /// not about the data and stay unlabelled, as do their overview/detail.
    pub fn category(&self, refs: &[EntityRef]) -> Option<Category> {
        if refs.iter().all(|r| r.kind == RefKind::Note) {
            return None;
        }
        let countries = unique_countries(refs);
        Some(if countries >= self.grouping_min_countries {
            Category::Grouping
        } else if countries >= self.comparison_min_countries {
            Category::Comparison
        } else {
            Category::Statement
        })
    }

    /// Whole-chart citations read as overview, component citations as detail.
    pub fn overview_detail(&self, refs: &[EntityRef]) -> Option<OverviewDetail> {
        let charts = refs.iter().any(|r| r.kind.is_chart());
        let parts = refs.iter().any(|r| r.kind.is_component());
        match (charts, parts) {
            (true, true) => Some(OverviewDetail::Mix),
            (true, false) => Some(OverviewDetail::Overview),
            (false, true) => Some(OverviewDetail::Detail),
            (false, false) => None,
        }
    }
}

fn unique_countries(refs: &[EntityRef]) -> usize {
    refs.iter().flat_map(|r| r.countries.iter()).collect::<BTreeSet<_>>().len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    pub version: u32,
    pub notes_per_participant: Vec<NoteCount>,
    pub labels: LabelRule,
    #[serde(rename = "profile")]
    pub profiles: Vec<BehaviorProfile>,
}

impl ProfileSet {
    pub fn from_toml_str(src: &str) -> Result<Self, SimError> {
        let set: Self = toml::from_str(src).map_err(|e| SimError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// The fixture shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("bundled profiles are valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Weights(total));
        }
        let total: f64 = self.notes_per_participant.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || self.notes_per_participant.iter().any(|c| c.weight < 0.0) {
            return Err(SimError::NoteWeights(total));
        }
        for p in &self.profiles {
            let invalid = |message: String| SimError::Invalid { profile: p.name.clone(), message };
            if !(0.0..0.5).contains(&p.noise) {
                return Err(SimError::Noise { profile: p.name.clone(), noise: p.noise });
            }
            if p.weight < 0.0 {
                return Err(invalid(format!("negative weight {}", p.weight)));
            }
            for (field, [lo, hi], max) in [
                ("countries_per_note", p.countries_per_note, POOL_COUNTRIES),
                ("years_per_note", p.years_per_note, POOL_YEARS),
            ] {
                if lo > hi || hi > max {
                    return Err(invalid(format!("{field} must be an ordered range within 0..={max}")));
                }
            }
            for (name, rate) in [("prior_knowledge_rate", p.prior_knowledge_rate), ("update_rate", p.update_rate)] {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(invalid(format!("{name} {rate} outside [0, 1]")));
                }
            }
            for (kind, rate) in &p.reference_tendencies {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(invalid(format!("negative tendency for {}", kind.as_str())));
                }
            }
            for (token, rate) in &p.action_rates {
                canonical_action(token).map_err(|e| invalid(e.to_string()))?;
                if RESERVED.contains(&token.as_str()) {
                    return Err(invalid(format!("{token} is placed by the generator and cannot be rated")));
                }
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(invalid(format!("negative rate for {token}")));
                }
            }
        }
        Ok(())
    }

    /// A copy where only the named profile is drawn.
    pub fn only(&self, name: &str) -> Result<Self, SimError> {
        let mut p = self.profiles.iter().find(|p| p.name == name).cloned().ok_or_else(|| SimError::UnknownProfile(name.into()))?;
        p.weight = 1.0;
        Ok(Self { profiles: vec![p], ..self.clone() })
    }

    /// A copy with every profile's label noise replaced.
    pub fn with_noise(&self, noise: f64) -> Result<Self, SimError> {
        let mut out = self.clone();
        out.profiles.iter_mut().for_each(|p| p.noise = noise);
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub logs: Vec<SessionLog>,
    pub notes: Vec<Note>,
    /// Profile drawn for each participant.
    pub assignments: Vec<(ParticipantId, String)>,
}

/// Generate `participants` sessions with labelled notes.
///
/// Participant `i` is generated from a seed derived from `(seed, i)` and the
/// results are concatenated in participant order.
pub fn generate_cohort(set: &ProfileSet, participants: usize, seed: u64) -> Result<Cohort, SimError> {
    set.validate()?;
    if participants < 2 {
        return Err(SimError::TooFewParticipants(participants));
    }
    let rates: Vec<Vec<(ActionType, f64)>> = set
        .profiles
        .iter()
        .map(|p| {
            p.action_rates
                .iter()
                .map(|(t, r)| (canonical_action(t).expect("validated"), *r))
                .collect()
        })
        .collect();
    let parts: Vec<(SessionLog, Vec<Note>, String)> = (0..participants)
        .into_par_iter()
        .map(|i| participant(set, &rates, i, crate::seed::rng(seed, "participant", i as u64)))
        .collect();
    let mut cohort = Cohort { logs: Vec::new(), notes: Vec::new(), assignments: Vec::new() };
    for (log, notes, profile) in parts {
        cohort.assignments.push((log.participant_id.clone(), profile));
        cohort.logs.push(log);
        cohort.notes.extend(notes);
    }
    Ok(cohort)
}

fn action(token: &str) -> ActionType {
    canonical_action(token).expect("taxonomy token")
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

fn pick_weighted<T>(rng: &mut ChaCha8Rng, items: &[T], weight: impl Fn(&T) -> f64) -> usize {
    let total: f64 = items.iter().map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, item) in items.iter().enumerate() {
        u -= weight(item);
        if u < 0.0 {
            return i;
        }
    }
    items.len() - 1
}

struct Timeline {
    participant: ParticipantId,
    session: SessionId,
    now: i64,
    events: Vec<InteractionEvent>,
}

impl Timeline {
    fn push(&mut self, rng: &mut ChaCha8Rng, action: ActionType, target: Option<EntityKey>) -> i64 {
        self.now += rng.random_range(1_500..20_000);
        let duration_ms = action.is_hover().then(|| rng.random_range(3_000..9_000));
        self.events.push(InteractionEvent {
            session_id: self.session.clone(),
            participant_id: self.participant.clone(),
            timestamp: self.now,
            action,
            target,
            duration_ms,
        });
        self.now
    }
}

fn target_for(
    rng: &mut ChaCha8Rng,
    action: ActionType,
    countries: &[CountryCode],
    years: &[u16],
    earlier: &[NoteId],
) -> Option<EntityKey> {
    match action.token() {
        "select_country" | "deselect_country" | "hover_country" | "hover_line" | "hover_map_point"
        | "view_country_notes" | "remove_linechart_country" | "remove_vline_country" | "note_hover_line"
        | "note_hover_map_point" => countries.choose(rng).map(|c| EntityKey::Country(*c)),
        "select_year" | "hover_year" | "hover_year_area" | "hover_vertical_line" | "view_year_notes"
        | "note_select_year" | "note_hover_year" | "note_hover_year_area" | "note_hover_vertical_line" => {
            years.choose(rng).map(|y| EntityKey::Year(*y))
        }
        "hover_note_text" | "hover_referred_note" | "reply_note" | "view_discussions" => {
            earlier.choose(rng).map(|n| EntityKey::Note(n.clone()))
        }
        _ => None,
    }
}

fn nonempty_subset(rng: &mut ChaCha8Rng, items: &[CountryCode]) -> Vec<CountryCode> {
    let k = rng.random_range(1..=items.len());
    let mut out: Vec<CountryCode> = items.choose_multiple(rng, k).copied().collect();
    out.sort();
    out
}

/// Citations for one note; every focus country ends up cited.
fn references(
    rng: &mut ChaCha8Rng,
    profile: &BehaviorProfile,
    focus: &[CountryCode],
    years: &[u16],
    earlier: &[NoteId],
) -> Vec<EntityRef> {
    let mut refs = Vec::new();
    let year = |rng: &mut ChaCha8Rng| *years.choose(rng).expect("focus years are nonempty");
    for kind in RefKind::ALL {
        let n = poisson(rng, profile.reference_tendencies.get(&kind).copied().unwrap_or(0.0));
        for _ in 0..n {
            let r = match kind {
                RefKind::Map => Some(EntityRef::map(year(rng))),
                RefKind::LineChart => (!focus.is_empty()).then(|| EntityRef::line_chart(nonempty_subset(rng, focus))),
                RefKind::MapPoint => focus.choose(rng).map(|c| {
                    let y = year(rng);
                    EntityRef::map_point(*c, y, (rng.random_range(10..5_000) as f64) / 10.0)
                }),
                RefKind::Line => focus.choose(rng).map(|c| EntityRef::line(*c)),
                RefKind::VerticalReferenceLine => {
                    (!focus.is_empty()).then(|| EntityRef::vertical_line(year(rng), nonempty_subset(rng, focus)))
                }
                RefKind::Note => earlier.choose(rng).map(|id| EntityRef::note(id.clone())),
            };
            refs.extend(r);
        }
    }
    let cited: BTreeSet<CountryCode> = refs.iter().flat_map(|r| r.countries.iter().copied()).collect();
    let missing: Vec<CountryCode> = focus.iter().copied().filter(|c| !cited.contains(c)).collect();
    match missing.len() {
        0 => {}
        1 => refs.push(EntityRef::line(missing[0])),
        _ => refs.push(EntityRef::line_chart(missing)),
    }
    if refs.is_empty() {
        refs.push(EntityRef::map(year(rng)));
    }
    refs
}

fn flip<T: Copy + PartialEq>(rng: &mut ChaCha8Rng, value: T, all: &[T], noise: f64) -> T {
    if rng.random::<f64>() >= noise {
        return value;
    }
    let others: Vec<T> = all.iter().copied().filter(|v| *v != value).collect();
    *others.choose(rng).expect("at least two classes")
}

fn participant(
    set: &ProfileSet,
    rates: &[Vec<(ActionType, f64)>],
    index: usize,
    mut rng: ChaCha8Rng,
) -> (SessionLog, Vec<Note>, String) {
    let pid = ParticipantId(format!("p{index:04}"));
    let pi = pick_weighted(&mut rng, &set.profiles, |p| p.weight);
    let profile = &set.profiles[pi];
    let n_notes = set.notes_per_participant[pick_weighted(&mut rng, &set.notes_per_participant, |c| c.weight)].count;

    let all: Vec<CountryCode> = COUNTRIES.iter().map(|(c, _)| c.parse().expect("registry code")).collect();
    let mut pool: Vec<CountryCode> = all.choose_multiple(&mut rng, POOL_COUNTRIES).copied().collect();
    pool.sort();
    let all_years: Vec<u16> = (FIRST_YEAR..=LAST_YEAR).collect();
    let mut year_pool: Vec<u16> = all_years.choose_multiple(&mut rng, POOL_YEARS).copied().collect();
    year_pool.sort();

    let mut tl = Timeline {
        participant: pid.clone(),
        session: SessionId(format!("s{index:04}")),
        now: EPOCH_MS + index as i64 * DAY_MS,
        events: Vec::new(),
    };
    tl.push(&mut rng, action("start_session"), None);
    let (deactivate, activate) = (action("deactivate_window"), action("activate_window"));

    let mut notes: Vec<Note> = Vec::new();
    for k in 0..n_notes {
        let id = NoteId(format!("{}-n{k}", pid.0));
        let earlier: Vec<NoteId> = notes.iter().map(|n| n.id.clone()).collect();
        let n_countries = rng.random_range(profile.countries_per_note[0]..=profile.countries_per_note[1]);
        let mut focus: Vec<CountryCode> = pool.choose_multiple(&mut rng, n_countries).copied().collect();
        focus.sort();
        let n_years = rng.random_range(profile.years_per_note[0].max(1)..=profile.years_per_note[1].max(1));
        let mut years: Vec<u16> = year_pool.choose_multiple(&mut rng, n_years).copied().collect();
        years.sort();
        let browse: &[CountryCode] = if focus.is_empty() { &pool } else { &focus };

        let mut window: Vec<ActionType> = Vec::new();
        for &(a, rate) in &rates[pi] {
            window.extend(std::iter::repeat_n(a, poisson(&mut rng, rate)));
        }
        window.shuffle(&mut rng);
        let away = rng.random::<f64>() < DEACTIVATION_RATE;
        let away_at = rng.random_range(0..=window.len());
        for (i, a) in window.into_iter().enumerate() {
            if away && i == away_at {
                tl.push(&mut rng, deactivate, None);
                tl.now += rng.random_range(20_000..180_000);
                tl.push(&mut rng, activate, None);
            }
            let target = target_for(&mut rng, a, browse, &years, &earlier);
            tl.push(&mut rng, a, target);
        }

        let refs = references(&mut rng, profile, &focus, &years, &earlier);
        let created_at = tl.push(&mut rng, action("open_note_input"), None);
        let saved_at = tl.push(&mut rng, action("save_note"), Some(EntityKey::Note(id.clone())));
        let mut updated_at = saved_at;
        if rng.random::<f64>() < profile.update_rate {
            tl.push(&mut rng, action("open_note_editing"), Some(EntityKey::Note(id.clone())));
            updated_at = tl.push(&mut rng, action("update_note"), Some(EntityKey::Note(id.clone())));
        }

        let rule = &set.labels;
        let noise = profile.noise;
        let category = rule.category(&refs).map(|c| flip(&mut rng, c, &Category::ALL, noise));
        let overview_detail = rule.overview_detail(&refs).map(|o| flip(&mut rng, o, &OverviewDetail::ALL, noise));
        let data_note = category.is_some();
        let prior = rng.random::<f64>() < profile.prior_knowledge_rate;
        let prior = flip(&mut rng, prior, &[false, true], noise);
        let correct = rng.random::<f64>() < rule.correctness_rate;
        let cited_years: BTreeSet<u16> = refs.iter().filter_map(|r| r.year).collect();
        let labels = NoteLabels {
            category,
            overview_detail,
            prior_knowledge: Some(prior),
            correctness: data_note.then_some(correct),
            chart_relevance: Some(data_note),
            mentioned: Mentioned {
                countries: unique_countries(&refs) as u32,
                years: cited_years.len() as u32,
                values: refs.iter().filter(|r| r.kind == RefKind::MapPoint).count() as u32,
            },
        };
        let names: Vec<&str> = focus.iter().map(|c| c.as_str()).collect();
        let text = match category {
            Some(c) => format!("{} about {} in {:?}", c.as_str(), names.join(", "), years),
            None => "follow-up on earlier notes".to_owned(),
        };
        notes.push(Note { id, author: pid.clone(), text, refs, created_at, updated_at, labels });
    }
    (SessionLog::from_events(pid, tl.events), notes, profile.name.clone())
}
