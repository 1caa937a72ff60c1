//! Daily event-count series: CSV ingestion, aggregation, windowing, and the
//! log transform feeding the fitting and alarm layers.
//!
//! A series stores integer day indices relative to an epoch date so that all
//! downstream arithmetic runs on plain integers. Dates only appear at the
//! file boundary (CSV in, reports out).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Integer day index, an offset from a series epoch.
pub type Day = i64;

/// Expected header of every count CSV.
pub const CSV_HEADER: &str = "date,count";

/// A labelled series of daily nonnegative event counts.
///
/// Invariants: day indices strictly increasing, one point per day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    label: String,
    epoch: NaiveDate,
    points: Vec<(Day, u64)>,
}

/// Natural-log counts for the days that had a positive count.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSeries {
    pub label: String,
    pub epoch: NaiveDate,
    pub points: Vec<(Day, f64)>,
}

impl ObservationSeries {
    /// Builds a series from (day, count) points. Points may arrive unsorted;
    /// duplicate days are rejected.
    pub fn new(label: &str, epoch: NaiveDate, mut points: Vec<(Day, u64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                let date = epoch + chrono::Duration::days(w[0].0);
                return Err(Error::DuplicateDate { line: 0, date });
            }
        }
        Ok(Self {
            label: label.to_string(),
            epoch,
            points,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn points(&self) -> &[(Day, u64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.epoch + chrono::Duration::days(day)
    }

    pub fn day_of(&self, date: NaiveDate) -> Day {
        (date - self.epoch).num_days()
    }

    /// Last day index present, if any.
    pub fn last_day(&self) -> Option<Day> {
        self.points.last().map(|p| p.0)
    }

    /// Parses `date,count` CSV text. Accepts LF or CRLF endings, requires the
    /// exact header, ISO-8601 dates, and nonnegative integer counts. Rows may
    /// arrive unsorted; the result is sorted by date.
    ///
    /// Counts for the same date in different source files are summed by
    /// [`aggregate`], not here: a duplicate date within one file is an error.
    pub fn parse_csv(text: &str, label: &str, epoch: NaiveDate) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyInput("no header line"))?;
        if header.trim_end() != CSV_HEADER {
            return Err(Error::CsvFormat {
                line: 1,
                detail: format!("expected header '{CSV_HEADER}', found '{header}'"),
            });
        }
        let mut rows: Vec<(Day, u64, usize)> = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split(',');
            let date_str = fields.next().unwrap_or("");
            let count_str = fields.next().ok_or_else(|| Error::CsvFormat {
                line,
                detail: "missing count field".into(),
            })?;
            if fields.next().is_some() {
                return Err(Error::CsvFormat {
                    line,
                    detail: "more than two fields".into(),
                });
            }
            let date = NaiveDate::parse_from_str(date_str.trim(), "%Y-%m-%d").map_err(|e| {
                Error::CsvFormat {
                    line,
                    detail: format!("bad date '{date_str}': {e}"),
                }
            })?;
            let count: i64 = count_str.trim().parse().map_err(|e| Error::CsvFormat {
                line,
                detail: format!("bad count '{count_str}': {e}"),
            })?;
            if count < 0 {
                return Err(Error::NegativeCount { line });
            }
            rows.push(((date - epoch).num_days(), count as u64, line));
        }
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateDate {
                    line: w[1].2,
                    date: epoch + chrono::Duration::days(w[1].0),
                });
            }
        }
        Ok(Self {
            label: label.to_string(),
            epoch,
            points: rows.into_iter().map(|(d, c, _)| (d, c)).collect(),
        })
    }

    /// Canonical CSV rendering: header, ISO dates, LF endings, trailing
    /// newline. `parse_csv(to_csv(s))` reproduces `s`, and for input already
    /// in this form the bytes round-trip unchanged.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * (self.points.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for &(day, count) in &self.points {
            let _ = writeln!(out, "{},{}", self.date_of(day), count);
        }
        out
    }
}

/// Pointwise sum of several series over the union of their days. The result
/// is labelled with the joined input labels.
pub fn aggregate(series: &[&ObservationSeries]) -> Result<ObservationSeries> {
    if series.is_empty() {
        return Err(Error::EmptyInput("aggregate of zero series"));
    }
    let epoch = series[0].epoch;
    for s in &series[1..] {
        if s.epoch != epoch {
            return Err(Error::EpochMismatch(epoch, s.epoch));
        }
    }
    let mut sums: BTreeMap<Day, u64> = BTreeMap::new();
    for s in series {
        for &(day, count) in &s.points {
            *sums.entry(day).or_insert(0) += count;
        }
    }
    let label = series
        .iter()
        .map(|s| s.label.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(ObservationSeries {
        label,
        epoch,
        points: sums.into_iter().collect(),
    })
}

/// Keeps the points with day in `(end_day - last_n, end_day]`.
///
/// At least two points must survive, otherwise no slope can be fit downstream.
pub fn window(series: &ObservationSeries, last_n: i64, end_day: Day) -> Result<ObservationSeries> {
    if last_n < 2 {
        return Err(Error::InvalidParams(format!(
            "window length {last_n} is below 2 days"
        )));
    }
    let lo = end_day - last_n;
    let points: Vec<(Day, u64)> = series
        .points
        .iter()
        .copied()
        .filter(|&(d, _)| d > lo && d <= end_day)
        .collect();
    if points.len() < 2 {
        return Err(Error::WindowTooSparse {
            needed: 2,
            found: points.len(),
        });
    }
    Ok(ObservationSeries {
        label: series.label.clone(),
        epoch: series.epoch,
        points,
    })
}

/// Natural log of the counts. Zero-count days cannot be logged; they are
/// dropped and their day indices returned so reports can surface the drops.
pub fn log_transform(series: &ObservationSeries) -> Result<(LogSeries, Vec<Day>)> {
    if series.points.is_empty() {
        return Err(Error::EmptySeries(series.label.clone()));
    }
    let mut points = Vec::with_capacity(series.points.len());
    let mut dropped = Vec::new();
    for &(day, count) in &series.points {
        if count == 0 {
            dropped.push(day);
        } else {
            points.push((day, (count as f64).ln()));
        }
    }
    if points.is_empty() {
        return Err(Error::AllCountsZero);
    }
    Ok((
        LogSeries {
            label: series.label.clone(),
            epoch: series.epoch,
            points,
        },
        dropped,
    ))
}
