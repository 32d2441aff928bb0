//! Calendar date recognition for English contract prose.

use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

pub(crate) const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// The surface format a date was written in; surrogate dates reuse it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateFormat {
    /// `January 1, 2023`
    MonthDayYear,
    /// `1 January 2023`
    DayMonthYear,
    /// `2023-01-01`
    Iso,
    /// `01/01/2023`
    Slash,
}

impl DateFormat {
    pub fn render(self, date: NaiveDate) -> String {
        match self {
            DateFormat::MonthDayYear => date.format("%B %-d, %Y").to_string(),
            DateFormat::DayMonthYear => date.format("%-d %B %Y").to_string(),
            DateFormat::Iso => date.format("%Y-%m-%d").to_string(),
            DateFormat::Slash => date.format("%m/%d/%Y").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateMatch {
    pub start: usize,
    pub end: usize,
    pub date: NaiveDate,
    pub format: DateFormat,
}

static DATE_RE: LazyLock<Regex> = LazyLock::new(|| {
    let months = MONTHS.join("|");
    Regex::new(&format!(
        r"(?i)\b(?:(?P<m1>{months})\s+(?P<d1>\d{{1,2}})(?:st|nd|rd|th)?,?\s+(?P<y1>\d{{4}})|(?P<d2>\d{{1,2}})(?:st|nd|rd|th)?\s+(?:day\s+of\s+)?(?P<m2>{months}),?\s+(?P<y2>\d{{4}})|(?P<y3>\d{{4}})-(?P<mo3>\d{{2}})-(?P<d3>\d{{2}})|(?P<mo4>\d{{1,2}})/(?P<d4>\d{{1,2}})/(?P<y4>\d{{4}}))\b"
    ))
    .expect("date regex")
});

fn month_index(name: &str) -> Option<u32> {
    MONTHS
        .iter()
        .position(|m| m.eq_ignore_ascii_case(name))
        .map(|i| i as u32 + 1)
}

/// Finds all valid calendar dates in `text`, in order of appearance.
/// Pattern matches that are not real dates (e.g. `February 30, 2023`) are
/// skipped.
pub fn find_dates(text: &str) -> Vec<DateMatch> {
    let mut out = Vec::new();
    for caps in DATE_RE.captures_iter(text) {
        let whole = caps.get(0).expect("group 0");
        let num = |name: &str| caps.name(name).and_then(|m| m.as_str().parse::<u32>().ok());
        let parsed = if let Some(m) = caps.name("m1") {
            month_index(m.as_str()).zip(num("d1")).zip(num("y1")).map(|((mo, d), y)| (y, mo, d, DateFormat::MonthDayYear))
        } else if let Some(m) = caps.name("m2") {
            month_index(m.as_str()).zip(num("d2")).zip(num("y2")).map(|((mo, d), y)| (y, mo, d, DateFormat::DayMonthYear))
        } else if caps.name("y3").is_some() {
            num("y3").zip(num("mo3")).zip(num("d3")).map(|((y, mo), d)| (y, mo, d, DateFormat::Iso))
        } else {
            num("y4").zip(num("mo4")).zip(num("d4")).map(|((y, mo), d)| (y, mo, d, DateFormat::Slash))
        };
        if let Some((y, mo, d, format)) = parsed {
            if let Some(date) = NaiveDate::from_ymd_opt(y as i32, mo, d) {
                out.push(DateMatch { start: whole.start(), end: whole.end(), date, format });
            }
        }
    }
    out
}

/// Parses a single date string in any recognised format, requiring the whole
/// (trimmed) input to be the date.
pub fn parse_date(s: &str) -> Option<(NaiveDate, DateFormat)> {
    let s = s.trim();
    find_dates(s)
        .into_iter()
        .find(|m| m.start == 0 && m.end == s.len())
        .map(|m| (m.date, m.format))
}

/// ISO-8601 rendering used in metadata and query fields.
pub fn iso(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognises_each_format() {
        let text = "on January 1, 2023, 3rd day of March, 2024, 2025-12-31 and 07/04/2026";
        let found: Vec<_> = find_dates(text).iter().map(|m| (iso(m.date), m.format)).collect();
        assert_eq!(
            found,
            vec![
                ("2023-01-01".to_string(), DateFormat::MonthDayYear),
                ("2024-03-03".to_string(), DateFormat::DayMonthYear),
                ("2025-12-31".to_string(), DateFormat::Iso),
                ("2026-07-04".to_string(), DateFormat::Slash),
            ]
        );
    }

    #[test]
    fn rejects_impossible_dates() {
        assert!(find_dates("February 30, 2023").is_empty());
        assert!(parse_date("2023-13-01").is_none());
    }

    #[test]
    fn render_round_trips() {
        let d = NaiveDate::from_ymd_opt(2031, 3, 3).unwrap();
        for f in [DateFormat::MonthDayYear, DateFormat::DayMonthYear, DateFormat::Iso, DateFormat::Slash] {
            assert_eq!(parse_date(&f.render(d)), Some((d, f)));
        }
        assert_eq!(DateFormat::MonthDayYear.render(d), "March 3, 2031");
    }
}
