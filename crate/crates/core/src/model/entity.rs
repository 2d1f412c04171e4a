use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dataset::{FIRST_YEAR, LAST_YEAR};
use super::ids::{CountryCode, NoteId};

/// Target of an interaction event.
///
/// Serialised as a `kind:value` string, e.g. `country:FIN`, `year:2013`,
/// `note:n17`, `chart:line_chart`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKey {
    Country(CountryCode),
    Year(u16),
    Note(NoteId),
    Chart(String),
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKey::Country(c) => write!(f, "country:{c}"),
            EntityKey::Year(y) => write!(f, "year:{y}"),
            EntityKey::Note(n) => write!(f, "note:{n}"),
            EntityKey::Chart(c) => write!(f, "chart:{c}"),
        }
    }
}

impl FromStr for EntityKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("entity key {s:?} lacks a kind prefix"))?;
        if value.is_empty() {
            return Err(format!("entity key {s:?} has an empty value"));
        }
        match kind {
            "country" => value.parse().map(EntityKey::Country).map_err(|e| e.to_string()),
            "year" => value
                .parse()
                .map(EntityKey::Year)
                .map_err(|_| format!("invalid year in entity key {s:?}")),
            "note" => Ok(EntityKey::Note(NoteId::new(value))),
            "chart" => Ok(EntityKey::Chart(value.to_owned())),
            other => Err(format!("unknown entity kind {other:?}")),
        }
    }
}

impl Serialize for EntityKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The six citable entity kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    Map,
    LineChart,
    MapPoint,
    Line,
    VerticalReferenceLine,
    Note,
}

impl RefKind {
    pub const ALL: [RefKind; 6] = [
        RefKind::Map,
        RefKind::LineChart,
        RefKind::MapPoint,
        RefKind::Line,
        RefKind::VerticalReferenceLine,
        RefKind::Note,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RefKind::Map => "map",
            RefKind::LineChart => "line_chart",
            RefKind::MapPoint => "map_point",
            RefKind::Line => "line",
            RefKind::VerticalReferenceLine => "vertical_reference_line",
            RefKind::Note => "note",
        }
    }

    /// Whole-chart citations, as opposed to chart components.
    pub fn is_chart(self) -> bool {
        matches!(self, RefKind::Map | RefKind::LineChart)
    }

    pub fn is_component(self) -> bool {
        matches!(self, RefKind::MapPoint | RefKind::Line | RefKind::VerticalReferenceLine)
    }
}

impl fmt::Display for RefKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RefKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RefKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown reference kind {s:?}"))
    }
}

/// A citation attached to a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: RefKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<u16>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub countries: Vec<CountryCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_id: Option<NoteId>,
}

impl EntityRef {
    fn empty(kind: RefKind) -> Self {
        Self { kind, year: None, countries: Vec::new(), value: None, note_id: None }
    }

    pub fn map(year: u16) -> Self {
        Self { year: Some(year), ..Self::empty(RefKind::Map) }
    }

    pub fn line_chart(countries: impl IntoIterator<Item = CountryCode>) -> Self {
        Self { countries: countries.into_iter().collect(), ..Self::empty(RefKind::LineChart) }
    }

    pub fn map_point(country: CountryCode, year: u16, value: f64) -> Self {
        Self {
            year: Some(year),
            countries: vec![country],
            value: Some(value),
            ..Self::empty(RefKind::MapPoint)
        }
    }

    pub fn line(country: CountryCode) -> Self {
        Self { countries: vec![country], ..Self::empty(RefKind::Line) }
    }

    pub fn vertical_line(year: u16, countries: impl IntoIterator<Item = CountryCode>) -> Self {
        Self {
            year: Some(year),
            countries: countries.into_iter().collect(),
            ..Self::empty(RefKind::VerticalReferenceLine)
        }
    }

    pub fn note(id: impl Into<NoteId>) -> Self {
        Self { note_id: Some(id.into()), ..Self::empty(RefKind::Note) }
    }
}

/// A violated payload rule of [`validate_ref`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{rule}")]
pub struct RefViolation {
    pub rule: &'static str,
}

fn rule(ok: bool, rule: &'static str) -> Result<(), RefViolation> {
    if ok {
        Ok(())
    } else {
        Err(RefViolation { rule })
    }
}

/// Check the kind-specific payload shape of a reference.
pub fn validate_ref(r: &EntityRef) -> Result<(), RefViolation> {
    if let Some(y) = r.year {
        rule((FIRST_YEAR..=LAST_YEAR).contains(&y), "year outside the dataset range")?;
    }
    if let Some(v) = r.value {
        rule(v.is_finite() && v >= 0.0, "value must be a nonnegative finite number")?;
    }
    if r.kind != RefKind::Note {
        rule(r.note_id.is_none(), "only note references carry a note id")?;
    }
    match r.kind {
        RefKind::Map => {
            rule(r.year.is_some(), "map requires a year")?;
            rule(r.countries.is_empty(), "map carries no countries")?;
            rule(r.value.is_none(), "map carries no value")
        }
        RefKind::MapPoint => {
            rule(r.year.is_some(), "map_point requires a year")?;
            rule(r.countries.len() == 1, "map_point requires exactly one country")?;
            rule(r.value.is_some(), "map_point requires a value")
        }
        RefKind::Line => {
            rule(r.countries.len() == 1, "line requires exactly one country")?;
            rule(r.year.is_none(), "line carries no year")?;
            rule(r.value.is_none(), "line carries no value")
        }
        RefKind::VerticalReferenceLine => {
            rule(r.year.is_some(), "vertical_reference_line requires a year")?;
            rule(!r.countries.is_empty(), "vertical_reference_line requires at least one country")?;
            rule(r.value.is_none(), "vertical_reference_line carries no value")
        }
        RefKind::LineChart => {
            rule(!r.countries.is_empty(), "line_chart requires at least one country")?;
            rule(r.year.is_none(), "line_chart carries no year")?;
            rule(r.value.is_none(), "line_chart carries no value")
        }
        RefKind::Note => {
            rule(r.note_id.is_some(), "note requires a note id")?;
            rule(
                r.year.is_none() && r.countries.is_empty() && r.value.is_none(),
                "note carries no data payload",
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    #[test]
    fn every_citation_row_shape_validates() {
        let rows = [
            EntityRef::map(2013),
            EntityRef::line_chart([c("FIN"), c("SWE")]),
            EntityRef::map_point(c("SWE"), 2013, 37.5),
            EntityRef::line(c("FIN")),
            EntityRef::vertical_line(1970, [c("FIN"), c("SWE")]),
            EntityRef::note("n1"),
        ];
        for r in &rows {
            assert_eq!(validate_ref(r), Ok(()), "{r:?}");
        }
    }

    #[test]
    fn payload_violations_name_the_rule() {
        let mut line = EntityRef::line(c("FIN"));
        line.countries.clear();
        assert_eq!(validate_ref(&line).unwrap_err().rule, "line requires exactly one country");

        let mut map = EntityRef::map(2013);
        map.countries.push(c("FIN"));
        assert_eq!(validate_ref(&map).unwrap_err().rule, "map carries no countries");

        let mut point = EntityRef::map_point(c("SWE"), 2013, 1.0);
        point.value = None;
        assert_eq!(validate_ref(&point).unwrap_err().rule, "map_point requires a value");

        let mut note = EntityRef::note("n1");
        note.year = Some(2000);
        assert_eq!(validate_ref(&note).unwrap_err().rule, "note carries no data payload");

        assert_eq!(
            validate_ref(&EntityRef::map(1959)).unwrap_err().rule,
            "year outside the dataset range"
        );
        let mut chart = EntityRef::line_chart([c("FIN")]);
        chart.note_id = Some("n2".into());
        assert!(validate_ref(&chart).is_err());
    }

    #[test]
    fn entity_keys_round_trip() {
        for key in [
            EntityKey::Country(c("FIN")),
            EntityKey::Year(2013),
            EntityKey::Note("n:1".into()),
            EntityKey::Chart("map".into()),
        ] {
            let s = key.to_string();
            assert_eq!(s.parse::<EntityKey>().unwrap(), key);
        }
        assert!("planet:mars".parse::<EntityKey>().is_err());
        assert!("year:".parse::<EntityKey>().is_err());
    }

    fn arb_ref() -> impl Strategy<Value = EntityRef> {
        let country = prop::sample::select(vec!["FIN", "SWE", "NOR", "DNK", "USA"])
            .prop_map(|s| s.parse::<CountryCode>().unwrap());
        (
            prop::sample::select(RefKind::ALL.to_vec()),
            prop::option::of(1960u16..=2013),
            prop::collection::vec(country, 0..4),
            prop::option::of(any::<f64>()),
            prop::option::of("[a-z0-9]{1,6}"),
        )
            .prop_map(|(kind, year, countries, value, note)| EntityRef {
                kind,
                year,
                countries,
                value,
                note_id: note.map(NoteId),
            })
    }

    proptest! {
        #[test]
        fn refs_round_trip_bit_exact(r in arb_ref()) {
            prop_assume!(r.value.map_or(true, f64::is_finite));
            let json = serde_json::to_string(&r).unwrap();
            let back: EntityRef = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back.kind, r.kind);
            prop_assert_eq!(back.year, r.year);
            prop_assert_eq!(&back.countries, &r.countries);
            prop_assert_eq!(back.value.map(f64::to_bits), r.value.map(f64::to_bits));
            prop_assert_eq!(&back.note_id, &r.note_id);
        }
    }
}
