//! Calendar-month arithmetic.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, Error> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParam(format!("month {month} out of range 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0, used for arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn days(self) -> u32 {
        let next = self.add_months(1).first_day();
        (next - self.first_day()).num_days() as u32
    }

    /// Inclusive iterator over `[self, end]`.
    pub fn through(self, end: YearMonth) -> impl Iterator<Item = YearMonth> {
        let n = self.months_until(end);
        (0..=n.max(-1)).map(move |i| self.add_months(i))
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidParam(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_wraps_years() {
        let m: YearMonth = "2019-12".parse().unwrap();
        assert_eq!(m.add_months(1).to_string(), "2020-01");
        assert_eq!(m.add_months(-12).to_string(), "2018-12");
        assert_eq!(m.add_months(25).to_string(), "2022-01");
        assert_eq!(m.months_until("2022-01".parse().unwrap()), 25);
    }

    #[test]
    fn through_is_inclusive() {
        let a: YearMonth = "2010-11".parse().unwrap();
        let b: YearMonth = "2011-01".parse().unwrap();
        let v: Vec<_> = a.through(b).map(|m| m.to_string()).collect();
        assert_eq!(v, ["2010-11", "2010-12", "2011-01"]);
        assert_eq!(b.through(a).count(), 0);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["2010", "2010-13", "10-01", "2010-1", "abcd-ef"] {
            assert!(s.parse::<YearMonth>().is_err(), "{s}");
        }
        assert_eq!("2020-02".parse::<YearMonth>().unwrap().days(), 29);
    }
}
