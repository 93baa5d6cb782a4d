//! Service calendar: day types and day-indexed history lookups.
//!
//! Each service day carries one of three day types: `ORD` for an ordinary
//! work day, `SCH` for a work day inside a school holiday period, and `PWE`
//! for a public holiday or weekend day. Several consumers only care about a
//! coarser split into work-like (`ORW`) and holiday-like (`HOL`) days;
//! [`DayType::collapse`] maps `ORD` to `ORW`, `SCH` to `HOL`, and splits
//! `PWE` by the actual weekday: weekend days are work-week-adjacent (`ORW`),
//! weekday public holidays are `HOL`.
//!
//! Day indices are 1-based throughout: day `i = 1` is the first calendar
//! day. Day numbers follow ISO weekday numbering (Monday = 1, Sunday = 7).
//! Calendars are plain data loaded from files or built synthetically; no
//! jurisdiction-specific holiday rules live in this crate.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Day classification of one service day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayType {
    /// Ordinary work day.
    #[serde(rename = "ORD")]
    Ord,
    /// Work day inside a school holiday period.
    #[serde(rename = "SCH")]
    Sch,
    /// Public holiday or weekend day.
    #[serde(rename = "PWE")]
    Pwe,
}

/// Coarse work-like / holiday-like split of [`DayType`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollapsedDayType {
    /// Ordinary work-week behaviour.
    #[serde(rename = "ORW")]
    Orw,
    /// Holiday-like behaviour.
    #[serde(rename = "HOL")]
    Hol,
}

impl DayType {
    /// All day types, in declaration order.
    pub const ALL: [DayType; 3] = [DayType::Ord, DayType::Sch, DayType::Pwe];

    /// Stable textual form used in files and parameter names.
    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Ord => "ORD",
            DayType::Sch => "SCH",
            DayType::Pwe => "PWE",
        }
    }

    /// Collapses to the coarse split; `PWE` needs the concrete date to
    /// decide whether it is a weekend (`ORW`) or a weekday public holiday
    /// (`HOL`).
    pub fn collapse(self, date: NaiveDate) -> CollapsedDayType {
        match self {
            DayType::Ord => CollapsedDayType::Orw,
            DayType::Sch => CollapsedDayType::Hol,
            DayType::Pwe => {
                if is_weekend(date) {
                    CollapsedDayType::Orw
                } else {
                    CollapsedDayType::Hol
                }
            }
        }
    }
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DayType {
    type Err = CalendarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ORD" => Ok(DayType::Ord),
            "SCH" => Ok(DayType::Sch),
            "PWE" => Ok(DayType::Pwe),
            other => Err(CalendarError::InvalidDayType(other.to_string())),
        }
    }
}

impl CollapsedDayType {
    /// Stable textual form.
    pub fn as_str(self) -> &'static str {
        match self {
            CollapsedDayType::Orw => "ORW",
            CollapsedDayType::Hol => "HOL",
        }
    }
}

impl fmt::Display for CollapsedDayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True when `date` falls on Saturday or Sunday (proleptic Gregorian).
pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Calendar errors.
#[derive(Debug, Error)]
pub enum CalendarError {
    /// A calendar must contain at least one day.
    #[error("calendar is empty")]
    Empty,
    /// Calendar entries must cover consecutive dates.
    #[error("calendar dates must be consecutive: expected {expected}, found {found}")]
    NonContiguous { expected: NaiveDate, found: NaiveDate },
    /// Day index outside `1..=len`.
    #[error("day index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    /// Unknown day-type label.
    #[error("invalid day type {0:?}: expected ORD, SCH, or PWE")]
    InvalidDayType(String),
    /// Requested date range not covered by this calendar.
    #[error("date {date} outside calendar range {start}..={end}")]
    DateOutOfRange { date: NaiveDate, start: NaiveDate, end: NaiveDate },
    /// Date arithmetic left the supported range.
    #[error("date arithmetic overflow past {0}")]
    DateOverflow(NaiveDate),
}

/// A contiguous run of service days with their day types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceCalendar {
    start_date: NaiveDate,
    day_types: Vec<DayType>,
}

impl ServiceCalendar {
    /// Builds a calendar starting at `start_date` with one type per day.
    pub fn new(start_date: NaiveDate, day_types: Vec<DayType>) -> Result<Self, CalendarError> {
        if day_types.is_empty() {
            return Err(CalendarError::Empty);
        }
        Ok(ServiceCalendar { start_date, day_types })
    }

    /// Builds a calendar from `(date, day_type)` entries, which must cover
    /// consecutive ascending dates.
    pub fn from_entries(entries: &[(NaiveDate, DayType)]) -> Result<Self, CalendarError> {
        let (first, _) = entries.first().ok_or(CalendarError::Empty)?;
        let mut expected = *first;
        let mut day_types = Vec::with_capacity(entries.len());
        for &(date, dt) in entries {
            if date != expected {
                return Err(CalendarError::NonContiguous { expected, found: date });
            }
            day_types.push(dt);
            expected = date.succ_opt().ok_or(CalendarError::DateOverflow(date))?;
        }
        ServiceCalendar::new(*first, day_types)
    }

    /// Builds a calendar from weekend/holiday rules: weekends are `PWE`,
    /// listed public holidays are `PWE`, weekdays inside a school holiday
    /// range are `SCH`, and all other weekdays are `ORD`. A weekend inside
    /// a school holiday range stays `PWE`.
    ///
    /// `school_holidays` are inclusive date ranges; `public_holidays` are
    /// single dates. Rules outside the calendar span are ignored.
    pub fn from_rules(
        start_date: NaiveDate,
        days: usize,
        school_holidays: &[(NaiveDate, NaiveDate)],
        public_holidays: &[NaiveDate],
    ) -> Result<Self, CalendarError> {
        if days == 0 {
            return Err(CalendarError::Empty);
        }
        let mut day_types = Vec::with_capacity(days);
        let mut date = start_date;
        for _ in 0..days {
            let dt = if is_weekend(date) || public_holidays.contains(&date) {
                DayType::Pwe
            } else if school_holidays.iter().any(|&(a, b)| a <= date && date <= b) {
                DayType::Sch
            } else {
                DayType::Ord
            };
            day_types.push(dt);
            date = date.succ_opt().ok_or(CalendarError::DateOverflow(date))?;
        }
        ServiceCalendar::new(start_date, day_types)
    }

    /// Number of days.
    pub fn len(&self) -> usize {
        self.day_types.len()
    }

    /// Always false: empty calendars cannot be constructed.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// First calendar date (day index 1).
    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    /// Last calendar date (day index `len`).
    pub fn end_date(&self) -> NaiveDate {
        // Construction guarantees at least one day and no overflow.
        self.start_date + Days::new(self.day_types.len() as u64 - 1)
    }

    fn check_index(&self, i: usize) -> Result<(), CalendarError> {
        if i == 0 || i > self.len() {
            return Err(CalendarError::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }

    /// Date of day `i` (1-based).
    pub fn date(&self, i: usize) -> Result<NaiveDate, CalendarError> {
        self.check_index(i)?;
        Ok(self.start_date + Days::new(i as u64 - 1))
    }

    /// Day index (1-based) of `date`, when covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = date.signed_duration_since(self.start_date).num_days();
        if offset < 0 || offset >= self.len() as i64 {
            return None;
        }
        Some(offset as usize + 1)
    }

    /// Day type of day `i`.
    pub fn day_type(&self, i: usize) -> Result<DayType, CalendarError> {
        self.check_index(i)?;
        Ok(self.day_types[i - 1])
    }

    /// Collapsed day type of day `i`.
    pub fn collapsed_day_type(&self, i: usize) -> Result<CollapsedDayType, CalendarError> {
        Ok(self.day_type(i)?.collapse(self.date(i)?))
    }

    /// ISO day number of day `i`: Monday = 1 through Sunday = 7.
    pub fn day_number(&self, i: usize) -> Result<u8, CalendarError> {
        Ok(self.date(i)?.weekday().number_from_monday() as u8)
    }

    /// Offsets `k < i` with the same day number as day `i`, ascending.
    /// These are exactly the multiples of 7 below `i`.
    pub fn prior_same_weekday_set(&self, i: usize) -> Result<Vec<usize>, CalendarError> {
        self.check_index(i)?;
        Ok((1..i).filter(|k| k % 7 == 0).collect())
    }

    /// Offsets `k < i` where day `i - k` collapses to `HOL`, ascending.
    pub fn prior_holiday_set(&self, i: usize) -> Result<Vec<usize>, CalendarError> {
        self.check_index(i)?;
        let mut out = Vec::new();
        for k in 1..i {
            if self.collapsed_day_type(i - k)? == CollapsedDayType::Hol {
                out.push(k);
            }
        }
        Ok(out)
    }

    /// All `(date, day_type)` entries in day order.
    pub fn entries(&self) -> impl Iterator<Item = (NaiveDate, DayType)> + '_ {
        self.day_types
            .iter()
            .enumerate()
            .map(move |(j, &dt)| (self.start_date + Days::new(j as u64), dt))
    }

    /// Sub-calendar covering days `first..=last` (1-based, inclusive).
    pub fn slice(&self, first: usize, last: usize) -> Result<ServiceCalendar, CalendarError> {
        self.check_index(first)?;
        self.check_index(last)?;
        if last < first {
            return Err(CalendarError::IndexOutOfRange { index: last, len: self.len() });
        }
        ServiceCalendar::new(self.date(first)?, self.day_types[first - 1..last].to_vec())
    }

    /// Day index of `date`, or a range error naming the covered span.
    pub fn index_of_date(&self, date: NaiveDate) -> Result<usize, CalendarError> {
        self.index_of(date).ok_or(CalendarError::DateOutOfRange {
            date,
            start: self.start_date,
            end: self.end_date(),
        })
    }
}
