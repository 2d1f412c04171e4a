//! Ingesting, validating and summarising per-participant interaction trails.
//!
//! The wire format is one JSON object per line:
//!
//! ```text
//! {"v":1,"ts":1700000000000,"participant":"p1","session":"s1","action":"select_country","target":"country:FIN"}
//! ```
//!
//! Lines are self-contained, so concatenating log files (in lexicographic
//! file order) yields another valid log.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::{
    canonical_action, ActionGroup, ActionType, CountryCode, EntityKey, ParticipantId, SessionId,
};

/// Mouse-overs shorter than this are noise.
pub const DEFAULT_HOVER_MIN_MS: u64 = 3_000;
/// Inter-event gaps longer than this count as idle time.
pub const DEFAULT_IDLE_MS: i64 = 360_000;

pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionEvent {
    pub session_id: SessionId,
    pub participant_id: ParticipantId,
    /// Milliseconds since the epoch.
    pub timestamp: i64,
    pub action: ActionType,
    pub target: Option<EntityKey>,
    pub duration_ms: Option<u64>,
}

/// On-disk form of an [`InteractionEvent`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub v: u32,
    pub ts: i64,
    pub participant: String,
    pub session: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

impl From<&InteractionEvent> for EventRecord {
    fn from(e: &InteractionEvent) -> Self {
        EventRecord {
            v: EVENT_SCHEMA_VERSION,
            ts: e.timestamp,
            participant: e.participant_id.0.clone(),
            session: e.session_id.0.clone(),
            action: e.action.token().to_owned(),
            target: e.target.as_ref().map(ToString::to_string),
            duration_ms: e.duration_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown action {token:?}")]
    UnknownAction { line: usize, token: String },
    #[error("reading event log: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("session log is empty")]
pub struct EmptyLog;

impl EventRecord {
    /// Validate a wire record. `line` is only used for error reporting.
    pub fn into_event(self, line: usize) -> Result<InteractionEvent, IngestError> {
        let malformed = |message: String| IngestError::Malformed { line, message };
        if self.v != EVENT_SCHEMA_VERSION {
            return Err(malformed(format!("unsupported schema version {}", self.v)));
        }
        if self.participant.is_empty() || self.session.is_empty() {
            return Err(malformed("participant and session must be nonempty".into()));
        }
        let action = canonical_action(&self.action)
            .map_err(|_| IngestError::UnknownAction { line, token: self.action.clone() })?;
        let target = self
            .target
            .as_deref()
            .map(str::parse::<EntityKey>)
            .transpose()
            .map_err(malformed)?;
        if action.is_hover() && self.duration_ms.is_none() {
            return Err(malformed(format!("hover action {action} requires duration_ms")));
        }
        Ok(InteractionEvent {
            session_id: SessionId(self.session),
            participant_id: ParticipantId(self.participant),
            timestamp: self.ts,
            action,
            target,
            duration_ms: self.duration_ms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestConfig {
    pub hover_min_ms: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { hover_min_ms: DEFAULT_HOVER_MIN_MS }
    }
}

/// One participant's time-ordered trail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub participant_id: ParticipantId,
    pub events: Vec<InteractionEvent>,
    /// `(deactivate, activate)` timestamp pairs, non-overlapping and sorted.
    pub window_activity: Vec<(i64, i64)>,
}

impl SessionLog {
    /// Build a log from events of one participant. Sorting is stable, so
    /// equal timestamps keep their arrival order.
    pub fn from_events(participant_id: ParticipantId, mut events: Vec<InteractionEvent>) -> Self {
        events.sort_by_key(|e| e.timestamp);
        let window_activity = window_intervals(&events);
        Self { participant_id, events, window_activity }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionType> + '_ {
        self.events.iter().map(|e| e.action)
    }
}

fn window_intervals(events: &[InteractionEvent]) -> Vec<(i64, i64)> {
    let deactivate = canonical_action("deactivate_window").expect("taxonomy token");
    let activate = canonical_action("activate_window").expect("taxonomy token");
    let mut out = Vec::new();
    let mut open: Option<i64> = None;
    for e in events {
        if e.action == deactivate && open.is_none() {
            open = Some(e.timestamp);
        } else if e.action == activate {
            if let Some(start) = open.take() {
                out.push((start, e.timestamp));
            }
        }
    }
    if let (Some(start), Some(last)) = (open, events.last()) {
        out.push((start, last.timestamp));
    }
    out
}

/// Result of an ingest pass.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ingested {
    /// One log per participant, ordered by participant id.
    pub logs: Vec<SessionLog>,
    pub records: usize,
    pub dropped_short_hovers: usize,
}

/// Incremental ingester; feed lines from one or more files, then [`finish`](Self::finish).
#[derive(Debug, Default)]
pub struct Ingestor {
    config: IngestConfig,
    by_participant: BTreeMap<ParticipantId, Vec<InteractionEvent>>,
    records: usize,
    dropped: usize,
    line: usize,
}

impl Ingestor {
    pub fn new(config: IngestConfig) -> Self {
        Self { config, ..Default::default() }
    }

    /// Parse one line. Line numbers continue across files.
    pub fn push_line(&mut self, raw: &str) -> Result<(), IngestError> {
        self.line += 1;
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(());
        }
        let record: EventRecord = serde_json::from_str(raw).map_err(|e| IngestError::Malformed {
            line: self.line,
            message: e.to_string(),
        })?;
        let event = record.into_event(self.line)?;
        self.push_event(event);
        Ok(())
    }

    /// Add an already validated event, applying the hover filter.
    pub fn push_event(&mut self, event: InteractionEvent) -> bool {
        self.records += 1;
        if event.action.is_hover() && event.duration_ms.unwrap_or(0) < self.config.hover_min_ms {
            self.dropped += 1;
            return false;
        }
        self.by_participant.entry(event.participant_id.clone()).or_default().push(event);
        true
    }

    pub fn read<R: BufRead>(&mut self, reader: R) -> Result<(), IngestError> {
        for line in reader.lines() {
            let line = line.map_err(|e| IngestError::Io(e.to_string()))?;
            self.push_line(&line)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Ingested {
        let logs = self
            .by_participant
            .into_iter()
            .map(|(pid, events)| SessionLog::from_events(pid, events))
            .collect();
        Ingested { logs, records: self.records, dropped_short_hovers: self.dropped }
    }
}

/// Ingest a whole stream.
pub fn ingest<R: BufRead>(reader: R, config: IngestConfig) -> Result<Ingested, IngestError> {
    let mut ingestor = Ingestor::new(config);
    ingestor.read(reader)?;
    Ok(ingestor.finish())
}

/// Write logs in the wire format, participant by participant.
pub fn write_logs<W: Write>(logs: &[SessionLog], mut out: W) -> std::io::Result<()> {
    for log in logs {
        for e in &log.events {
            serde_json::to_writer(&mut out, &EventRecord::from(e))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Wall-clock span minus idle time.
///
/// Idle time is the union of inter-event gaps longer than `idle_threshold_ms`
/// and deactivated-window intervals, so overlapping exclusions are only
/// subtracted once.
pub fn active_duration(log: &SessionLog, idle_threshold_ms: i64) -> Result<i64, EmptyLog> {
    let (first, last) = match (log.events.first(), log.events.last()) {
        (Some(f), Some(l)) => (f.timestamp, l.timestamp),
        _ => return Err(EmptyLog),
    };
    let mut excluded: Vec<(i64, i64)> = log
        .events
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > idle_threshold_ms)
        .map(|w| (w[0].timestamp, w[1].timestamp))
        .collect();
    excluded.extend(
        log.window_activity
            .iter()
            .map(|&(a, b)| (a.max(first), b.min(last)))
            .filter(|(a, b)| a < b),
    );
    excluded.sort_unstable();
    let mut idle = 0;
    let mut current: Option<(i64, i64)> = None;
    for (a, b) in excluded {
        current = match current {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                idle += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((ca, cb)) = current {
        idle += cb - ca;
    }
    Ok(last - first - idle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub countries_explored: usize,
    pub years_explored: usize,
}

/// Unique countries and years targeted by data-exploration actions.
pub fn coverage(log: &SessionLog) -> Coverage {
    let mut countries: BTreeSet<CountryCode> = BTreeSet::new();
    let mut years: BTreeSet<u16> = BTreeSet::new();
    for e in log.events.iter().filter(|e| e.action.group() == ActionGroup::DataExploration) {
        match &e.target {
            Some(EntityKey::Country(c)) => {
                countries.insert(*c);
            }
            Some(EntityKey::Year(y)) => {
                years.insert(*y);
            }
            _ => {}
        }
    }
    Coverage { countries_explored: countries.len(), years_explored: years.len() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub participant_id: ParticipantId,
    pub total_interactions: usize,
    pub data_exploration_count: usize,
    pub active_duration_ms: i64,
    pub wall_clock_ms: i64,
    pub countries_explored: usize,
    pub years_explored: usize,
}

pub fn summarize(log: &SessionLog, idle_threshold_ms: i64) -> Result<SessionSummary, EmptyLog> {
    let active = active_duration(log, idle_threshold_ms)?;
    let cov = coverage(log);
    let wall = log.events.last().map_or(0, |l| l.timestamp) - log.events[0].timestamp;
    Ok(SessionSummary {
        participant_id: log.participant_id.clone(),
        total_interactions: log.events.len(),
        data_exploration_count: log
            .events
            .iter()
            .filter(|e| e.action.group() == ActionGroup::DataExploration)
            .count(),
        active_duration_ms: active,
        wall_clock_ms: wall,
        countries_explored: cov.countries_explored,
        years_explored: cov.years_explored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN: i64 = 60_000;

    fn event(p: &str, ts: i64, action: &str, target: Option<&str>) -> InteractionEvent {
        let action = canonical_action(action).unwrap();
        InteractionEvent {
            session_id: SessionId::new(format!("{p}-s")),
            participant_id: ParticipantId::new(p),
            timestamp: ts,
            action,
            target: target.map(|t| t.parse().unwrap()),
            duration_ms: action.is_hover().then_some(5_000),
        }
    }

    fn line(p: &str, ts: i64, action: &str, extra: &str) -> String {
        format!(r#"{{"v":1,"ts":{ts},"participant":"{p}","session":"{p}-s","action":"{action}"{extra}}}"#)
    }

    #[test]
    fn short_hovers_are_dropped() {
        let src = [
            line("p1", 1, "hover_country", r#","target":"country:FIN","duration_ms":2900"#),
            line("p1", 2, "hover_country", r#","target":"country:SWE","duration_ms":3000"#),
        ]
        .join("\n");
        let out = ingest(src.as_bytes(), IngestConfig::default()).unwrap();
        assert_eq!(out.dropped_short_hovers, 1);
        assert_eq!(out.logs[0].events.len(), 1);
        assert_eq!(out.logs[0].events[0].duration_ms, Some(3000));
    }

    #[test]
    fn empty_stream_gives_no_logs() {
        let out = ingest("".as_bytes(), IngestConfig::default()).unwrap();
        assert!(out.logs.is_empty());
    }

    #[test]
    fn interleaved_participants_are_split_and_sorted() {
        let src = [
            line("p2", 30, "select_year", r#","target":"year:2000""#),
            line("p1", 20, "select_country", r#","target":"country:FIN""#),
            line("p1", 10, "start_session", ""),
            line("p2", 10, "start_session", ""),
            line("p1", 15, "show_notes", ""),
            line("p2", 20, "play", ""),
        ]
        .join("\n");
        let out = ingest(src.as_bytes(), IngestConfig::default()).unwrap();
        assert_eq!(out.logs.len(), 2);
        let p1: Vec<i64> = out.logs[0].events.iter().map(|e| e.timestamp).collect();
        let p2: Vec<i64> = out.logs[1].events.iter().map(|e| e.timestamp).collect();
        assert_eq!(out.logs[0].participant_id.as_str(), "p1");
        assert_eq!(p1, vec![10, 15, 20]);
        assert_eq!(p2, vec![10, 20, 30]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let src = format!("{}\nnot json\n", line("p1", 1, "play", ""));
        assert!(matches!(
            ingest(src.as_bytes(), IngestConfig::default()),
            Err(IngestError::Malformed { line: 2, .. })
        ));
        let src = format!("{}\n{}\n", line("p1", 1, "play", ""), line("p1", 2, "fly_to_moon", ""));
        assert_eq!(
            ingest(src.as_bytes(), IngestConfig::default()).unwrap_err(),
            IngestError::UnknownAction { line: 2, token: "fly_to_moon".into() }
        );
        let src = line("p1", 1, "hover_line", r#","target":"country:FIN""#);
        assert!(matches!(
            ingest(src.as_bytes(), IngestConfig::default()),
            Err(IngestError::Malformed { line: 1, .. })
        ));
        let src = r#"{"v":2,"ts":1,"participant":"p","session":"s","action":"play"}"#;
        assert!(matches!(
            ingest(src.as_bytes(), IngestConfig::default()),
            Err(IngestError::Malformed { .. })
        ));
    }

    #[test]
    fn long_gap_is_fully_subtracted() {
        let log = SessionLog::from_events(
            "p".into(),
            vec![event("p", 0, "play", None), event("p", 10 * MIN, "play", None)],
        );
        assert_eq!(active_duration(&log, DEFAULT_IDLE_MS), Ok(0));
    }

    #[test]
    fn regular_activity_keeps_whole_span() {
        let events = (0..=10).map(|i| event("p", i * 30_000, "play", None)).collect();
        let log = SessionLog::from_events("p".into(), events);
        assert_eq!(active_duration(&log, DEFAULT_IDLE_MS), Ok(5 * MIN));
    }

    #[test]
    fn overlapping_exclusions_are_not_double_counted() {
        let log = SessionLog::from_events(
            "p".into(),
            vec![
                event("p", 0, "play", None),
                event("p", 2 * MIN, "deactivate_window", None),
                event("p", 9 * MIN, "activate_window", None),
                event("p", 10 * MIN, "play", None),
            ],
        );
        // Gaps are 2, 7 and 1 minutes: only the 7-minute one is idle, and it
        // coincides with the deactivation.
        assert_eq!(active_duration(&log, DEFAULT_IDLE_MS), Ok(3 * MIN));
        let sparse = SessionLog {
            participant_id: "p".into(),
            events: vec![event("p", 0, "play", None), event("p", 10 * MIN, "play", None)],
            window_activity: vec![(2 * MIN, 9 * MIN)],
        };
        assert_eq!(active_duration(&sparse, DEFAULT_IDLE_MS), Ok(0));
    }

    #[test]
    fn unmatched_deactivation_runs_to_the_end() {
        let log = SessionLog::from_events(
            "p".into(),
            vec![
                event("p", 0, "play", None),
                event("p", MIN, "deactivate_window", None),
                event("p", 2 * MIN, "play", None),
            ],
        );
        assert_eq!(log.window_activity, vec![(MIN, 2 * MIN)]);
        assert_eq!(active_duration(&log, DEFAULT_IDLE_MS), Ok(MIN));
    }

    #[test]
    fn empty_log_has_no_duration() {
        let log = SessionLog::from_events("p".into(), vec![]);
        assert_eq!(active_duration(&log, DEFAULT_IDLE_MS), Err(EmptyLog));
    }

    #[test]
    fn coverage_counts_unique_data_targets() {
        let none = SessionLog::from_events("p".into(), vec![event("p", 0, "show_notes", None)]);
        assert_eq!(coverage(&none), Coverage { countries_explored: 0, years_explored: 0 });

        let log = SessionLog::from_events(
            "p".into(),
            vec![
                event("p", 0, "select_country", Some("country:FIN")),
                event("p", 1, "hover_country", Some("country:SWE")),
                event("p", 2, "select_year", Some("year:2013")),
                event("p", 3, "select_country", Some("country:FIN")),
                // Note-view interactions do not count as data exploration.
                event("p", 4, "note_select_year", Some("year:1990")),
            ],
        );
        assert_eq!(coverage(&log), Coverage { countries_explored: 2, years_explored: 1 });
    }

    fn arb_log() -> impl Strategy<Value = Vec<InteractionEvent>> {
        let actions = vec![
            ("select_country", Some("country:FIN")),
            ("select_country", Some("country:SWE")),
            ("hover_line", Some("country:NOR")),
            ("select_year", Some("year:1970")),
            ("hover_year", Some("year:2013")),
            ("deactivate_window", None),
            ("activate_window", None),
            ("show_notes", None),
        ];
        prop::collection::vec((0i64..20 * MIN, prop::sample::select(actions)), 1..40).prop_map(
            |items| {
                items
                    .into_iter()
                    .map(|(ts, (a, t))| event("p", ts, a, t))
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn active_duration_is_bounded_and_monotone(events in arb_log(), t1 in 0i64..10 * MIN, t2 in 0i64..10 * MIN) {
            let log = SessionLog::from_events("p".into(), events);
            let span = log.events.last().unwrap().timestamp - log.events[0].timestamp;
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a_lo = active_duration(&log, lo).unwrap();
            let a_hi = active_duration(&log, hi).unwrap();
            prop_assert!(a_lo >= 0 && a_hi <= span);
            prop_assert!(a_lo <= a_hi);
            if log.window_activity.is_empty() {
                prop_assert_eq!(active_duration(&log, span).unwrap(), span);
            }
        }

        #[test]
        fn write_then_ingest_is_identity(events in arb_log()) {
            let logs = vec![SessionLog::from_events("p".into(), events)];
            let mut buf = Vec::new();
            write_logs(&logs, &mut buf).unwrap();
            let back = ingest(buf.as_slice(), IngestConfig::default()).unwrap();
            prop_assert_eq!(back.logs, logs);
        }

        #[test]
        fn coverage_ignores_order(events in arb_log(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed, "shuffle", 0));
            let a = coverage(&SessionLog::from_events("p".into(), events));
            let b = coverage(&SessionLog::from_events("p".into(), shuffled));
            prop_assert_eq!(a, b);
        }
    }
}
