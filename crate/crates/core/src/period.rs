//! Half-open validity periods over calendar dates.
//!
//! Every temporal row carries a `[valid_from, valid_to)` period. The open end
//! of the latest version is the [`forever`] sentinel, which orders after every
//! operational date and is otherwise an ordinary date.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeriodError {
    #[error("invalid date {0:?}: expected YYYY-MM-DD")]
    InvalidDate(String),
    #[error("empty or reversed period [{start}, {end})")]
    EmptyPeriod { start: Date, end: Date },
    #[error("overlapping periods {first} and {second}")]
    Overlap { first: Period, second: Period },
}

/// A calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(NaiveDate);

impl Date {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self, PeriodError> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(Date)
            .ok_or_else(|| PeriodError::InvalidDate(format!("{year:04}-{month:02}-{day:02}")))
    }

    /// Earliest representable date, used for unbounded query windows.
    pub fn min() -> Self {
        Date(NaiveDate::from_ymd_opt(1, 1, 1).expect("valid date"))
    }

    pub fn today() -> Self {
        Date(chrono::Utc::now().date_naive())
    }

    pub fn naive(self) -> NaiveDate {
        self.0
    }

    pub fn is_monday(self) -> bool {
        self.0.weekday() == Weekday::Mon
    }

    pub fn add_days(self, days: i64) -> Self {
        Date(self.0 + Duration::days(days))
    }

    pub fn succ(self) -> Self {
        self.add_days(1)
    }

    pub fn days_until(self, later: Date) -> i64 {
        (later.0 - self.0).num_days()
    }
}

impl From<NaiveDate> for Date {
    fn from(d: NaiveDate) -> Self {
        Date(d)
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl FromStr for Date {
    type Err = PeriodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // chrono accepts unpadded fields; the wire format does not.
        let b = s.as_bytes();
        let shaped = b.len() == 10
            && b[4] == b'-'
            && b[7] == b'-'
            && b.iter()
                .enumerate()
                .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
        if !shaped {
            return Err(PeriodError::InvalidDate(s.to_string()));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Date)
            .map_err(|_| PeriodError::InvalidDate(s.to_string()))
    }
}

impl Serialize for Date {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The open-end sentinel, 9999-12-31.
pub fn forever() -> Date {
    Date(NaiveDate::from_ymd_opt(9999, 12, 31).expect("valid date"))
}

/// `[start, end)` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Period {
    start: Date,
    end: Date,
}

impl Period {
    pub fn new(start: Date, end: Date) -> Result<Self, PeriodError> {
        if start < end {
            Ok(Period { start, end })
        } else {
            Err(PeriodError::EmptyPeriod { start, end })
        }
    }

    /// `[start, forever())`.
    pub fn from_onward(start: Date) -> Result<Self, PeriodError> {
        Period::new(start, forever())
    }

    /// The whole representable timeline.
    pub fn all_time() -> Self {
        Period {
            start: Date::min(),
            end: forever(),
        }
    }

    pub fn start(&self) -> Date {
        self.start
    }

    pub fn end(&self) -> Date {
        self.end
    }

    pub fn is_open_ended(&self) -> bool {
        self.end == forever()
    }

    pub fn overlaps(&self, other: &Period) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }

    pub fn intersect(&self, other: &Period) -> Option<Period> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Period { start, end })
    }

    pub fn contains(&self, d: Date) -> bool {
        self.start <= d && d < self.end
    }

    /// True when `self` ends exactly where `other` starts.
    pub fn meets(&self, other: &Period) -> bool {
        self.end == other.start
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            start: Date,
            end: Date,
        }
        let raw = Raw::deserialize(deserializer)?;
        Period::new(raw.start, raw.end).map_err(serde::de::Error::custom)
    }
}

pub fn overlaps(p: &Period, q: &Period) -> bool {
    p.overlaps(q)
}

pub fn intersect(p: &Period, q: &Period) -> Option<Period> {
    p.intersect(q)
}

pub fn contains(p: &Period, d: Date) -> bool {
    p.contains(d)
}

/// Sorts versions by start and merges meeting neighbours holding equal
/// values. Input periods must be pairwise disjoint.
pub fn coalesce<V: PartialEq>(mut versions: Vec<(V, Period)>) -> Result<Vec<(V, Period)>, PeriodError> {
    versions.sort_by_key(|(_, p)| *p);
    for pair in versions.windows(2) {
        if pair[0].1.overlaps(&pair[1].1) {
            return Err(PeriodError::Overlap {
                first: pair[0].1,
                second: pair[1].1,
            });
        }
    }
    let mut out: Vec<(V, Period)> = Vec::with_capacity(versions.len());
    for (value, period) in versions {
        match out.last_mut() {
            Some((last_value, last_period)) if *last_value == value && last_period.meets(&period) => {
                last_period.end = period.end;
            }
            _ => out.push((value, period)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    fn p(a: &str, b: &str) -> Period {
        Period::new(d(a), d(b)).unwrap()
    }

    #[test]
    fn forever_is_max_sentinel() {
        assert_eq!(forever().to_string(), "9999-12-31");
        assert!(forever() > d("2020-04-20"));
        assert!(Period::new(d("2020-04-29"), forever()).is_ok());
    }

    #[test]
    fn date_parsing_is_strict() {
        assert_eq!(d("2020-04-20").to_string(), "2020-04-20");
        assert!("2020-4-20".parse::<Date>().is_err());
        assert!("2020-02-30".parse::<Date>().is_err());
        assert!("20200420xx".parse::<Date>().is_err());
        assert!(d("2020-04-20").is_monday());
        assert!(!d("2020-04-29").is_monday());
    }

    #[test]
    fn rejects_empty_and_reversed() {
        assert!(Period::new(d("2020-01-01"), d("2020-01-01")).is_err());
        assert!(Period::new(d("2020-01-02"), d("2020-01-01")).is_err());
    }

    #[test]
    fn overlap_cases() {
        assert!(!overlaps(&p("2020-01-01", "2020-02-01"), &p("2020-02-01", "2020-03-01")));
        assert!(overlaps(&p("2020-01-01", "2020-03-01"), &p("2020-02-01", "2020-04-01")));
        let x = p("2020-01-01", "2020-03-01");
        assert!(overlaps(&x, &x));
    }

    #[test]
    fn intersect_cases() {
        assert_eq!(
            intersect(&p("2020-01-01", "2020-03-01"), &p("2020-02-01", "2020-04-01")),
            Some(p("2020-02-01", "2020-03-01"))
        );
        assert_eq!(intersect(&p("2020-01-01", "2020-02-01"), &p("2020-02-01", "2020-03-01")), None);
        let x = p("2020-01-01", "2020-03-01");
        assert_eq!(intersect(&x, &x), Some(x));
    }

    #[test]
    fn contains_is_half_open() {
        let week = p("2020-04-29", "2020-05-06");
        assert!(contains(&week, d("2020-04-29")));
        assert!(!contains(&week, d("2020-05-06")));
        assert!(contains(&Period::from_onward(d("2020-04-29")).unwrap(), d("2525-01-01")));
    }

    #[test]
    fn coalesce_examples() {
        let (d1, d2, d3) = ("2020-01-01", "2020-02-01", "2020-03-01");
        assert_eq!(
            coalesce(vec![(5, p(d1, d2)), (5, p(d2, d3))]).unwrap(),
            vec![(5, p(d1, d3))]
        );
        let differing = vec![(5, p(d1, d2)), (7, p(d2, d3))];
        assert_eq!(coalesce(differing.clone()).unwrap(), differing);
        assert!(coalesce(Vec::<(i32, Period)>::new()).unwrap().is_empty());
        assert!(matches!(
            coalesce(vec![(1, p(d1, d3)), (1, p(d2, d3))]),
            Err(PeriodError::Overlap { .. })
        ));
    }

    #[test]
    fn serde_uses_iso_strings() {
        let x = p("2020-04-29", "2020-05-06");
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, r#"{"start":"2020-04-29","end":"2020-05-06"}"#);
        assert_eq!(serde_json::from_str::<Period>(&json).unwrap(), x);
        assert!(serde_json::from_str::<Period>(r#"{"start":"2020-05-06","end":"2020-05-06"}"#).is_err());
    }

    fn arb_period() -> impl Strategy<Value = Period> {
        (0i64..400, 1i64..60).prop_map(|(off, len)| {
            let base = d("2020-01-01");
            Period::new(base.add_days(off), base.add_days(off + len)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn half_open_bounds(x in arb_period()) {
            prop_assert!(x.contains(x.start()));
            prop_assert!(!x.contains(x.end()));
        }

        #[test]
        fn overlap_symmetric_intersect_commutative(a in arb_period(), b in arb_period()) {
            prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
            prop_assert_eq!(a.intersect(&b), b.intersect(&a));
            prop_assert_eq!(a.intersect(&b).is_some(), a.overlaps(&b));
            if let Some(i) = a.intersect(&b) {
                prop_assert_eq!(i.intersect(&i), Some(i));
                prop_assert_eq!(i.intersect(&a), Some(i));
            }
        }
    }
}
