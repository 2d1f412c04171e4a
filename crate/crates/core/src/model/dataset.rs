//! The country-by-year emission table behind the explorer.

use std::collections::BTreeMap;
use std::io::Read;

use super::ids::CountryCode;

pub const FIRST_YEAR: u16 = 1960;
pub const LAST_YEAR: u16 = 2013;
pub const YEAR_COUNT: usize = (LAST_YEAR - FIRST_YEAR + 1) as usize;
pub const COUNTRY_COUNT: usize = 43;

/// Country registry: ISO alpha-3 code and display name.
pub const COUNTRIES: [(&str, &str); COUNTRY_COUNT] = [
    ("ARG", "Argentina"),
    ("AUS", "Australia"),
    ("AUT", "Austria"),
    ("BEL", "Belgium"),
    ("BRA", "Brazil"),
    ("CAN", "Canada"),
    ("CHE", "Switzerland"),
    ("CHL", "Chile"),
    ("CHN", "China"),
    ("CZE", "Czech Republic"),
    ("DEU", "Germany"),
    ("DNK", "Denmark"),
    ("EGY", "Egypt"),
    ("ESP", "Spain"),
    ("FIN", "Finland"),
    ("FRA", "France"),
    ("GBR", "United Kingdom"),
    ("GRC", "Greece"),
    ("HUN", "Hungary"),
    ("IDN", "Indonesia"),
    ("IND", "India"),
    ("IRL", "Ireland"),
    ("IRN", "Iran"),
    ("ISL", "Iceland"),
    ("ISR", "Israel"),
    ("ITA", "Italy"),
    ("JPN", "Japan"),
    ("KOR", "South Korea"),
    ("LUX", "Luxembourg"),
    ("MEX", "Mexico"),
    ("NLD", "Netherlands"),
    ("NOR", "Norway"),
    ("NZL", "New Zealand"),
    ("POL", "Poland"),
    ("PRT", "Portugal"),
    ("RUS", "Russia"),
    ("SAU", "Saudi Arabia"),
    ("SGP", "Singapore"),
    ("SWE", "Sweden"),
    ("THA", "Thailand"),
    ("TUR", "Turkey"),
    ("USA", "United States"),
    ("ZAF", "South Africa"),
];

pub fn country_name(code: CountryCode) -> Option<&'static str> {
    COUNTRIES.iter().find(|(c, _)| *c == code.as_str()).map(|(_, n)| *n)
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading emission table: {0}")]
    Csv(#[from] csv::Error),
    #[error("emission table header must be `country,year,value`, found {0:?}")]
    Header(Vec<String>),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("emission table must cover {COUNTRY_COUNT} countries, found {0}")]
    CountryCount(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionDataset {
    countries: Vec<CountryCode>,
    /// Row-major `countries × years`; `None` marks a missing value.
    values: Vec<Option<f64>>,
}

impl EmissionDataset {
    /// Load a `country,year,value` table. Empty values are missing.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != ["country", "year", "value"] {
            return Err(DatasetError::Header(header));
        }
        let mut cells: BTreeMap<CountryCode, BTreeMap<u16, Option<f64>>> = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row_err = |message: String| DatasetError::Row { line, message };
            let country: CountryCode = record[0].parse().map_err(|e: super::InvalidCountryCode| row_err(e.to_string()))?;
            let year: u16 = record[1]
                .parse()
                .map_err(|_| row_err(format!("invalid year {:?}", &record[1])))?;
            if !(FIRST_YEAR..=LAST_YEAR).contains(&year) {
                return Err(row_err(format!("year {year} outside {FIRST_YEAR}..={LAST_YEAR}")));
            }
            let value = match &record[2] {
                "" | "NA" => None,
                raw => {
                    let v: f64 = raw.parse().map_err(|_| row_err(format!("invalid value {raw:?}")))?;
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(row_err(format!("emission value must be nonnegative, got {v}")));
                    }
                    Some(v)
                }
            };
            if cells.entry(country).or_default().insert(year, value).is_some() {
                return Err(row_err(format!("duplicate cell {country} {year}")));
            }
        }
        if cells.len() != COUNTRY_COUNT {
            return Err(DatasetError::CountryCount(cells.len()));
        }
        let countries: Vec<CountryCode> = cells.keys().copied().collect();
        let mut values = vec![None; countries.len() * YEAR_COUNT];
        for (ci, years) in cells.values().enumerate() {
            for (&year, &v) in years {
                values[ci * YEAR_COUNT + (year - FIRST_YEAR) as usize] = v;
            }
        }
        Ok(Self { countries, values })
    }

    /// A deterministic stand-in table over the built-in country registry,
    /// used when no real data file is supplied.
    pub fn synthetic() -> Self {
        let countries: Vec<CountryCode> =
            COUNTRIES.iter().map(|(c, _)| c.parse().expect("registry code")).collect();
        let mut values = Vec::with_capacity(countries.len() * YEAR_COUNT);
        for (ci, _) in countries.iter().enumerate() {
            let base = 5.0 + (ci as f64 * 37.0) % 400.0;
            let growth = 0.005 + (ci % 7) as f64 * 0.004;
            for y in 0..YEAR_COUNT {
                let v = base * (1.0 + growth).powi(y as i32);
                values.push(Some((v * 10.0).round() / 10.0));
            }
        }
        Self { countries, values }
    }

    pub fn countries(&self) -> &[CountryCode] {
        &self.countries
    }

    pub fn years(&self) -> impl Iterator<Item = u16> {
        FIRST_YEAR..=LAST_YEAR
    }

    pub fn value(&self, country: CountryCode, year: u16) -> Option<f64> {
        if !(FIRST_YEAR..=LAST_YEAR).contains(&year) {
            return None;
        }
        let ci = self.countries.iter().position(|c| *c == country)?;
        self.values[ci * YEAR_COUNT + (year - FIRST_YEAR) as usize]
    }
}
