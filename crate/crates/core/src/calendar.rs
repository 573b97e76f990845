//! Month/day arithmetic for a single weather year.

use std::fmt;

use serde::{Deserialize, Serialize};

const DAYS_IN_MONTH: [u8; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
const MONTH_ABBREV: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// Number of days in `month` (1-12). February has 29 days when `leap` is set.
pub fn days_in_month(month: u8, leap: bool) -> u8 {
    match month {
        2 if leap => 29,
        1..=12 => DAYS_IN_MONTH[usize::from(month - 1)],
        _ => 0,
    }
}

pub fn month_abbrev(month: u8) -> &'static str {
    MONTH_ABBREV
        .get(usize::from(month.wrapping_sub(1)))
        .copied()
        .unwrap_or("???")
}

/// A calendar date without a year. Ordering is calendar order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthDay {
    pub month: u8,
    pub day: u8,
}

impl MonthDay {
    pub const JAN_1: MonthDay = MonthDay { month: 1, day: 1 };
    pub const DEC_31: MonthDay = MonthDay { month: 12, day: 31 };
    pub const FEB_29: MonthDay = MonthDay { month: 2, day: 29 };

    /// Builds a date, accepting Feb 29.
    pub fn new(month: u8, day: u8) -> Option<Self> {
        (day >= 1 && day <= days_in_month(month, true)).then_some(MonthDay { month, day })
    }

    pub fn is_leap_day(self) -> bool {
        self == Self::FEB_29
    }

    /// 1-based day of a non-leap year. Feb 29 maps onto the same ordinal as Mar 1.
    pub fn ordinal(self) -> u16 {
        let before: u16 = DAYS_IN_MONTH[..usize::from(self.month - 1)]
            .iter()
            .map(|&d| u16::from(d))
            .sum();
        before + u16::from(self.day.min(days_in_month(self.month, false).max(1)))
            + u16::from(self.is_leap_day())
    }

    /// Next date in a year (leap or not); `None` after Dec 31.
    pub fn succ(self, leap: bool) -> Option<Self> {
        if self.day < days_in_month(self.month, leap) {
            Some(MonthDay { month: self.month, day: self.day + 1 })
        } else if self.month < 12 {
            Some(MonthDay { month: self.month + 1, day: 1 })
        } else {
            None
        }
    }

    /// Inclusive iteration from `self` to `end` in a leap or non-leap year.
    pub fn days_through(self, end: MonthDay, leap: bool) -> impl Iterator<Item = MonthDay> {
        std::iter::successors(Some(self), move |d| d.succ(leap)).take_while(move |d| *d <= end)
    }
}

impl fmt::Display for MonthDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}-{:02}", self.month, self.day)
    }
}
