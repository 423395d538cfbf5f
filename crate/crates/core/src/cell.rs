//! Data-item addressing: dimensions, subcategories and cell keys.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::period::Date;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CellError {
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("week {0} is not a Monday")]
    WeekNotMonday(Date),
    #[error("subcategory must not be empty")]
    EmptySubcategory,
    #[error("dimension Total only has subcategory \"All\", got {0:?}")]
    BadTotalSubcategory(String),
    #[error("subcategory {subcategory:?} is not registered for {dimension}")]
    UnregisteredSubcategory {
        dimension: Dimension,
        subcategory: String,
    },
    #[error("malformed cell address {0:?}: expected WEEK/DIMENSION/SUBCATEGORY")]
    MalformedAddress(String),
    #[error(transparent)]
    Date(#[from] crate::period::PeriodError),
}

/// Breakdown axis of a weekly release. Declaration order is the display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Sex,
    Age,
    HealthBoard,
    LocalAuthority,
    Location,
    Total,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Sex,
        Dimension::Age,
        Dimension::HealthBoard,
        Dimension::LocalAuthority,
        Dimension::Location,
        Dimension::Total,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Sex => "Sex",
            Dimension::Age => "Age",
            Dimension::HealthBoard => "HealthBoard",
            Dimension::LocalAuthority => "LocalAuthority",
            Dimension::Location => "Location",
            Dimension::Total => "Total",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| CellError::UnknownDimension(s.to_string()))
    }
}

pub const TOTAL_SUBCATEGORY: &str = "All";

/// One data item: the count for `subcategory` of `dimension` in the week
/// starting `week`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub week: Date,
    pub dimension: Dimension,
    pub subcategory: String,
}

impl CellKey {
    pub fn new(week: Date, dimension: Dimension, subcategory: impl Into<String>) -> Result<Self, CellError> {
        let subcategory = subcategory.into();
        if !week.is_monday() {
            return Err(CellError::WeekNotMonday(week));
        }
        if subcategory.is_empty() {
            return Err(CellError::EmptySubcategory);
        }
        if dimension == Dimension::Total && subcategory != TOTAL_SUBCATEGORY {
            return Err(CellError::BadTotalSubcategory(subcategory));
        }
        Ok(CellKey {
            week,
            dimension,
            subcategory,
        })
    }

    pub fn total(week: Date) -> Result<Self, CellError> {
        CellKey::new(week, Dimension::Total, TOTAL_SUBCATEGORY)
    }

    /// Parses `WEEK/DIMENSION/SUBCATEGORY`; the subcategory is percent-decoded.
    pub fn parse_address(s: &str) -> Result<Self, CellError> {
        let mut parts = s.splitn(3, '/');
        let (Some(week), Some(dim), Some(sub)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CellError::MalformedAddress(s.to_string()));
        };
        let sub = percent_decode(sub).ok_or_else(|| CellError::MalformedAddress(s.to_string()))?;
        CellKey::new(week.parse()?, dim.parse()?, sub)
    }

    /// Inverse of [`CellKey::parse_address`].
    pub fn address(&self) -> String {
        format!("{}/{}/{}", self.week, self.dimension, percent_encode(&self.subcategory))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}/{}", self.week, self.dimension, self.subcategory)
    }
}

impl<'de> Deserialize<'de> for CellKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            week: Date,
            dimension: Dimension,
            subcategory: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        CellKey::new(raw.week, raw.dimension, raw.subcategory).map_err(serde::de::Error::custom)
    }
}

pub fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' => {
                let hex = s.get(i + 1..i + 3)?;
                out.push(u8::from_str_radix(hex, 16).ok()?);
                i += 3;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8(out).ok()
}

/// Encodes everything outside the URL path-safe set, including `/`.
pub fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~' | b'+') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// The closed set of subcategories per dimension. A dimension's counts are
/// checked against the weekly total only when every registered subcategory
/// is reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryScheme {
    entries: Vec<(Dimension, Vec<String>)>,
}

const SEX: &[&str] = &["Female", "Male"];
const AGE: &[&str] = &["Under 1 year", "1-14", "15-44", "45-64", "65-74", "75-84", "85+"];
const HEALTH_BOARDS: &[&str] = &[
    "Ayrshire and Arran",
    "Borders",
    "Dumfries and Galloway",
    "Fife",
    "Forth Valley",
    "Grampian",
    "Greater Glasgow and Clyde",
    "Highland",
    "Lanarkshire",
    "Lothian",
    "Orkney",
    "Shetland",
    "Tayside",
    "Western Isles",
];
const LOCAL_AUTHORITIES: &[&str] = &[
    "Aberdeen City",
    "Aberdeenshire",
    "Angus",
    "Argyll and Bute",
    "Clackmannanshire",
    "Dumfries and Galloway",
    "Dundee City",
    "East Ayrshire",
    "East Dunbartonshire",
    "East Lothian",
    "East Renfrewshire",
    "Edinburgh",
    "Falkirk",
    "Fife",
    "Glasgow City",
    "Highland",
    "Inverclyde",
    "Midlothian",
    "Moray",
    "Na h-Eileanan Siar",
    "North Ayrshire",
    "North Lanarkshire",
    "Orkney Islands",
    "Perth and Kinross",
    "Renfrewshire",
    "Scottish Borders",
    "Shetland Islands",
    "South Ayrshire",
    "South Lanarkshire",
    "Stirling",
    "West Dunbartonshire",
    "West Lothian",
];
const LOCATIONS: &[&str] = &["Care Home", "Home/Non-institution", "Hospital", "Other institution"];

impl Default for CategoryScheme {
    /// Scottish weekly death registrations.
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        CategoryScheme {
            entries: vec![
                (Dimension::Sex, owned(SEX)),
                (Dimension::Age, owned(AGE)),
                (Dimension::HealthBoard, owned(HEALTH_BOARDS)),
                (Dimension::LocalAuthority, owned(LOCAL_AUTHORITIES)),
                (Dimension::Location, owned(LOCATIONS)),
                (Dimension::Total, owned(&[TOTAL_SUBCATEGORY])),
            ],
        }
    }
}

impl CategoryScheme {
    pub fn subcategories(&self, dimension: Dimension) -> &[String] {
        self.entries
            .iter()
            .find(|(d, _)| *d == dimension)
            .map(|(_, subs)| subs.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_registered(&self, dimension: Dimension, subcategory: &str) -> bool {
        self.subcategories(dimension).iter().any(|s| s == subcategory)
    }

    pub fn check(&self, cell: &CellKey) -> Result<(), CellError> {
        if self.is_registered(cell.dimension, &cell.subcategory) {
            Ok(())
        } else {
            Err(CellError::UnregisteredSubcategory {
                dimension: cell.dimension,
                subcategory: cell.subcategory.clone(),
            })
        }
    }
}
