use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalendarError {
    #[error("calendar dates must be strictly increasing (position {0})")]
    NotIncreasing(usize),
    #[error("calendar end {end} precedes start {start}")]
    Inverted { start: NaiveDate, end: NaiveDate },
}

/// Ordered trading days. Crypto trades every day, so the usual calendar is
/// every date between two bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    dates: Vec<NaiveDate>,
}

impl Calendar {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self, CalendarError> {
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(CalendarError::NotIncreasing(i + 1));
        }
        Ok(Self { dates })
    }

    /// Every day in `[start, end]`.
    pub fn daily(start: NaiveDate, end: NaiveDate) -> Result<Self, CalendarError> {
        if end < start {
            return Err(CalendarError::Inverted { start, end });
        }
        Ok(Self { dates: start.iter_days().take_while(|d| *d <= end).collect() })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.dates[i]
    }

    pub fn first(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    pub fn index_of(&self, d: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&d).ok()
    }

    /// Index of the first date `>= d`.
    pub fn lower_bound(&self, d: NaiveDate) -> usize {
        self.dates.partition_point(|x| *x < d)
    }

    pub fn truncated(&self, len: usize) -> Self {
        Self { dates: self.dates[..len.min(self.dates.len())].to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daily_calendar_is_gapless() {
        let c = Calendar::daily(
            NaiveDate::from_ymd_opt(2020, 2, 27).unwrap(),
            NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(c.len(), 5); // leap year
        assert_eq!(c.index_of(NaiveDate::from_ymd_opt(2020, 2, 29).unwrap()), Some(2));
    }

    #[test]
    fn rejects_duplicates() {
        let d = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        assert_eq!(Calendar::new(alloc::vec![d, d]), Err(CalendarError::NotIncreasing(1)));
    }
}
