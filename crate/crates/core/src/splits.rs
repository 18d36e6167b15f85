//! Expanding-window train/valid/test plans with annual test increments.

use alloc::vec::Vec;
use core::ops::Range;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::Calendar;

/// Share of each training window held out for validation.
pub const VALID_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("first test start {0} leaves less than one year of training data")]
    ShortTraining(NaiveDate),
    #[error("first test start {0} is after the end of the calendar")]
    NoTestData(NaiveDate),
    #[error("increment must be at least one month")]
    Increment,
}

/// Index ranges into the calendar. `test` holds the dates whose returns are
/// realised out of sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub fit: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    /// The final span ran into the end of the calendar before a full increment.
    pub truncated: bool,
}

impl Split {
    /// Decision rows whose realised return falls inside `test`.
    pub fn test_decisions(&self) -> Range<usize> {
        self.test.start - 1..self.test.end - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

fn add_months(d: NaiveDate, m: u32) -> NaiveDate {
    d.checked_add_months(Months::new(m)).unwrap_or(NaiveDate::MAX)
}

pub fn make_splits(calendar: &Calendar, first_test_start: NaiveDate, increment_months: u32) -> Result<SplitPlan, SplitError> {
    if increment_months == 0 {
        return Err(SplitError::Increment);
    }
    let (Some(first), Some(last)) = (calendar.first(), calendar.last()) else {
        return Err(SplitError::NoTestData(first_test_start));
    };
    if first_test_start < add_months(first, 12) {
        return Err(SplitError::ShortTraining(first_test_start));
    }
    if first_test_start > last {
        return Err(SplitError::NoTestData(first_test_start));
    }
    let mut splits = Vec::new();
    let mut start = first_test_start;
    while start <= last {
        let next = add_months(start, increment_months);
        let a = calendar.lower_bound(start);
        let b = calendar.lower_bound(next);
        if a < b {
            let n_valid = libm::ceil(a as f64 * VALID_FRACTION) as usize;
            splits.push(Split {
                train: 0..a,
                fit: 0..a - n_valid,
                valid: a - n_valid..a,
                test: a..b,
                test_start: calendar.date(a),
                test_end: calendar.date(b - 1),
                truncated: next.pred_opt().is_some_and(|end| end > last),
            });
        }
        start = next;
    }
    Ok(SplitPlan { splits })
}
