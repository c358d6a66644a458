//! The minute-of-day grid and the pre/post study calendar.

use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const MINUTES_PER_DAY: u16 = 1440;

/// Day classification used by the regression day-of-week dummies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayClass {
    BusinessDay,
    Saturday,
    Sunday,
}

impl DayClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            DayClass::BusinessDay => "business_day",
            DayClass::Saturday => "saturday",
            DayClass::Sunday => "sunday",
        }
    }
}

/// Monday through Friday are business days; Saturday and Sunday stand alone.
pub fn classify_day(date: NaiveDate) -> DayClass {
    match date.weekday() {
        Weekday::Sat => DayClass::Saturday,
        Weekday::Sun => DayClass::Sunday,
        _ => DayClass::BusinessDay,
    }
}

/// Which dates a day-level analysis pools together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayGroup {
    Business,
    Weekend,
}

impl DayGroup {
    pub fn matches(&self, class: DayClass) -> bool {
        match self {
            DayGroup::Business => class == DayClass::BusinessDay,
            DayGroup::Weekend => class == DayClass::Saturday || class == DayClass::Sunday,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DayGroup::Business => "business",
            DayGroup::Weekend => "weekend",
        }
    }
}

/// Inclusive minute-of-day grid with a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_minute: u16,
    pub end_minute: u16,
    pub step: u16,
}

impl TimeGrid {
    pub fn new(start_minute: u16, end_minute: u16, step: u16) -> Result<Self> {
        if start_minute >= end_minute {
            return Err(Error::Config(format!(
                "grid start {start_minute} must be before end {end_minute}"
            )));
        }
        if end_minute >= MINUTES_PER_DAY {
            return Err(Error::Config(format!(
                "grid end {end_minute} outside minute-of-day range"
            )));
        }
        if step == 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
        Ok(TimeGrid {
            start_minute,
            end_minute,
            step,
        })
    }

    /// The study default: 06:00 through 23:59 at 1-minute steps.
    pub fn study_default() -> Self {
        TimeGrid {
            start_minute: 360,
            end_minute: 1439,
            step: 1,
        }
    }

    pub fn len(&self) -> usize {
        ((self.end_minute - self.start_minute) / self.step) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, minute: u16) -> bool {
        minute >= self.start_minute
            && minute <= self.end_minute
            && (minute - self.start_minute) % self.step == 0
    }

    pub fn index_of(&self, minute: u16) -> Option<usize> {
        if self.contains(minute) {
            Some(((minute - self.start_minute) / self.step) as usize)
        } else {
            None
        }
    }

    pub fn minute_at(&self, index: usize) -> u16 {
        self.start_minute + (index as u16) * self.step
    }

    pub fn minutes(&self) -> impl Iterator<Item = u16> + '_ {
        (0..self.len()).map(|i| self.minute_at(i))
    }
}

/// Pre/post study dates with per-date day classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCalendar {
    pub pre_dates: Vec<NaiveDate>,
    pub post_dates: Vec<NaiveDate>,
    pub excluded_dates: Vec<NaiveDate>,
    pub day_class: BTreeMap<NaiveDate, DayClass>,
}

impl StudyCalendar {
    pub fn new(
        mut pre_dates: Vec<NaiveDate>,
        mut post_dates: Vec<NaiveDate>,
        excluded_dates: Vec<NaiveDate>,
    ) -> Result<Self> {
        pre_dates.sort();
        pre_dates.dedup();
        post_dates.sort();
        post_dates.dedup();
        if pre_dates.is_empty() || post_dates.is_empty() {
            return Err(Error::Config(
                "study calendar needs at least one pre date and one post date".into(),
            ));
        }
        if pre_dates.iter().any(|d| post_dates.contains(d)) {
            return Err(Error::Config("pre and post dates overlap".into()));
        }
        for d in &excluded_dates {
            if pre_dates.contains(d) || post_dates.contains(d) {
                return Err(Error::Config(format!(
                    "excluded date {d} also appears as a study date"
                )));
            }
        }
        let day_class = pre_dates
            .iter()
            .chain(post_dates.iter())
            .map(|&d| (d, classify_day(d)))
            .collect();
        Ok(StudyCalendar {
            pre_dates,
            post_dates,
            excluded_dates,
            day_class,
        })
    }

    /// The natural-experiment default around the 2016-08-03 launch: seven
    /// days before, seven after, launch day excluded.
    pub fn around_launch(launch: NaiveDate, n_pre: u32, n_post: u32) -> Result<Self> {
        let pre = (1..=n_pre as i64)
            .map(|k| launch - chrono::Duration::days(k))
            .collect();
        let post = (1..=n_post as i64)
            .map(|k| launch + chrono::Duration::days(k))
            .collect();
        StudyCalendar::new(pre, post, vec![launch])
    }

    /// Sorted union of pre and post dates.
    pub fn study_dates(&self) -> Vec<NaiveDate> {
        let mut all: Vec<NaiveDate> = self
            .pre_dates
            .iter()
            .chain(self.post_dates.iter())
            .copied()
            .collect();
        all.sort();
        all
    }

    pub fn is_study_date(&self, date: NaiveDate) -> bool {
        self.pre_dates.contains(&date) || self.post_dates.contains(&date)
    }

    pub fn is_post(&self, date: NaiveDate) -> bool {
        self.post_dates.contains(&date)
    }

    pub fn class_of(&self, date: NaiveDate) -> DayClass {
        *self.day_class.get(&date).unwrap_or(&classify_day(date))
    }
}
