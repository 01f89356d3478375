//! Tick ingestion: CSV parsing, mid-price derivation and calendar-month
//! sliding train/test windows.
//!
//! Tick rows are `timestamp,bid,ask` with timestamps in the compact UTC form
//! `YYYYMMDD HHMMSSmmm`. Extra trailing columns are ignored, so files written
//! by the synthetic generator (which appends a burst flag) parse unchanged.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Datelike, Months, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// UTC instant in milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    /// Elapsed seconds from `earlier` to `self`.
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 / 1000.0
    }

    pub fn from_naive(dt: NaiveDateTime) -> Self {
        Timestamp(dt.and_utc().timestamp_millis())
    }

    pub fn to_naive(self) -> NaiveDateTime {
        DateTime::from_timestamp_millis(self.0)
            .expect("timestamp in chrono range")
            .naive_utc()
    }

    /// Parses `YYYYMMDD HHMMSSmmm`.
    pub fn parse(s: &str) -> Option<Self> {
        let b = s.trim().as_bytes();
        if b.len() != 18 || b[8] != b' ' {
            return None;
        }
        let digits = |r: Range<usize>| -> Option<u32> {
            let mut v = 0u32;
            for &c in &b[r] {
                if !c.is_ascii_digit() {
                    return None;
                }
                v = v * 10 + u32::from(c - b'0');
            }
            Some(v)
        };
        let date = NaiveDate::from_ymd_opt(digits(0..4)? as i32, digits(4..6)?, digits(6..8)?)?;
        let dt = date.and_hms_milli_opt(digits(9..11)?, digits(11..13)?, digits(13..15)?, digits(15..18)?)?;
        Some(Timestamp::from_naive(dt))
    }

    /// First instant of the calendar month containing `self`.
    pub fn month_floor(self) -> Self {
        let d = self.to_naive().date();
        let first = NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("valid first of month");
        Timestamp::from_naive(first.and_hms_opt(0, 0, 0).expect("midnight"))
    }

    pub fn add_months(self, months: u32) -> Self {
        let dt = self
            .to_naive()
            .checked_add_months(Months::new(months))
            .expect("month arithmetic in range");
        Timestamp::from_naive(dt)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt = self.to_naive();
        write!(
            f,
            "{:04}{:02}{:02} {:02}{:02}{:02}{:03}",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour(),
            dt.minute(),
            dt.second(),
            dt.and_utc().timestamp_subsec_millis()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub timestamp: Timestamp,
    pub bid: f64,
    pub ask: f64,
}

impl Tick {
    pub fn mid(&self) -> Result<f64> {
        mid_price(self.bid, self.ask)
    }
}

/// Mid-price of a quote. Both sides must be strictly positive.
pub fn mid_price(bid: f64, ask: f64) -> Result<f64> {
    if !(bid > 0.0 && ask > 0.0) || !bid.is_finite() || !ask.is_finite() {
        return Err(Error::domain(format!("quotes must be positive, got bid={bid} ask={ask}")));
    }
    Ok((bid + ask) / 2.0)
}

/// Timestamped mid-price stream for one instrument.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceSeries {
    pub instrument: String,
    timestamps: Vec<Timestamp>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(instrument: impl Into<String>, timestamps: Vec<Timestamp>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::domain(format!(
                "{} timestamps but {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if let Some(p) = prices.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::domain(format!("non-positive price {p}")));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("timestamps must be non-decreasing"));
        }
        Ok(PriceSeries {
            instrument: instrument.into(),
            timestamps,
            prices,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn first_timestamp(&self) -> Option<Timestamp> {
        self.timestamps.first().copied()
    }

    pub fn last_timestamp(&self) -> Option<Timestamp> {
        self.timestamps.last().copied()
    }

    /// Copy of the ticks in `range`.
    pub fn slice(&self, range: Range<usize>) -> PriceSeries {
        PriceSeries {
            instrument: self.instrument.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            prices: self.prices[range].to_vec(),
        }
    }
}

/// Row accounting returned next to a parsed series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseSummary {
    pub rows_read: usize,
    /// Malformed rows and rows with non-positive or non-numeric quotes.
    pub rows_rejected: usize,
    /// Well-formed rows whose timestamp precedes the last accepted tick.
    pub rows_out_of_order: usize,
}

impl ParseSummary {
    pub fn rows_dropped(&self) -> usize {
        self.rows_rejected + self.rows_out_of_order
    }
}

fn parse_row(line: &str) -> std::result::Result<Tick, String> {
    let mut fields = line.split(',');
    let ts = fields.next().ok_or("missing timestamp")?;
    let bid = fields.next().ok_or("missing bid")?;
    let ask = fields.next().ok_or("missing ask")?;
    let timestamp = Timestamp::parse(ts).ok_or_else(|| format!("bad timestamp {ts:?}"))?;
    let bid: f64 = bid.trim().parse().map_err(|_| format!("bad bid {bid:?}"))?;
    let ask: f64 = ask.trim().parse().map_err(|_| format!("bad ask {ask:?}"))?;
    if !(bid > 0.0 && ask > 0.0 && bid.is_finite() && ask.is_finite()) {
        return Err(format!("non-positive quote {bid},{ask}"));
    }
    Ok(Tick { timestamp, bid, ask })
}

/// Parses a tick CSV stream into a mid-price series.
///
/// Rejected and out-of-order rows are skipped and counted; a first line that
/// does not parse as a tick is treated as a header.
pub fn parse_ticks<R: BufRead>(reader: R, instrument: &str) -> Result<(PriceSeries, ParseSummary)> {
    let mut summary = ParseSummary::default();
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_row(line) {
            Ok(tick) => {
                summary.rows_read += 1;
                if timestamps.last().is_some_and(|last| tick.timestamp < *last) {
                    summary.rows_out_of_order += 1;
                    continue;
                }
                timestamps.push(tick.timestamp);
                prices.push((tick.bid + tick.ask) / 2.0);
            }
            Err(_) if lineno == 0 => {}
            Err(_) => {
                summary.rows_read += 1;
                summary.rows_rejected += 1;
            }
        }
    }
    if prices.is_empty() {
        return Err(Error::EmptySeries {
            rows_read: summary.rows_read,
        });
    }
    let series = PriceSeries {
        instrument: instrument.to_string(),
        timestamps,
        prices,
    };
    Ok((series, summary))
}

/// Writes a series back as tick rows with `bid = ask = mid`, which parses to
/// the same mid-prices.
/// Opens and parses a tick file; I/O failures name the path.
pub fn read_ticks_file(path: &Path, instrument: &str) -> Result<(PriceSeries, ParseSummary)> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ticks(BufReader::new(file), instrument)
}

pub fn write_ticks<W: Write>(series: &PriceSeries, mut w: W) -> Result<()> {
    writeln!(w, "timestamp,bid,ask")?;
    for (ts, p) in series.timestamps.iter().zip(&series.prices) {
        writeln!(w, "{ts},{p},{p}")?;
    }
    Ok(())
}

/// One sliding window with its train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSplit {
    pub window_id: usize,
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    /// First instant of the test half.
    pub train_end: Timestamp,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
}

/// Calendar-month sliding windows starting at the first tick's month.
///
/// A window is kept when its last month is not after the month of the final
/// tick. The train/test boundary is the midpoint of the window: a month
/// boundary for even window lengths, the midpoint instant otherwise.
pub fn sliding_windows(series: &PriceSeries, window_months: u32, stride_months: u32) -> Result<Vec<WindowSplit>> {
    if window_months < 1 || stride_months < 1 {
        return Err(Error::domain("window and stride must be at least one month"));
    }
    let (Some(first), Some(last)) = (series.first_timestamp(), series.last_timestamp()) else {
        return Err(Error::domain("cannot window an empty series"));
    };
    let origin = first.month_floor();
    let horizon = last.month_floor().add_months(1);
    let ts = series.timestamps();
    let mut out = Vec::new();
    for window_id in 0.. {
        let window_start = origin.add_months(window_id as u32 * stride_months);
        let window_end = window_start.add_months(window_months);
        if window_end > horizon {
            break;
        }
        let train_end = if window_months % 2 == 0 {
            window_start.add_months(window_months / 2)
        } else {
            Timestamp((window_start.0 + window_end.0) / 2)
        };
        let lo = ts.partition_point(|t| *t < window_start);
        let mid = ts.partition_point(|t| *t < train_end);
        let hi = ts.partition_point(|t| *t < window_end);
        out.push(WindowSplit {
            window_id,
            window_start,
            window_end,
            train_end,
            train_range: lo..mid,
            test_range: mid..hi,
        });
    }
    Ok(out)
}

pub fn write_window_manifest<W: Write>(windows: &[WindowSplit], mut w: W) -> Result<()> {
    writeln!(w, "window_id,window_start,window_end,train_end")?;
    for win in windows {
        writeln!(w, "{},{},{},{}", win.window_id, win.window_start, win.window_end, win.train_end)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    #[test]
    fn mid_price_examples() {
        assert!((mid_price(1.10, 1.12).unwrap() - 1.11).abs() < 1e-12);
        assert_eq!(mid_price(1.0, 1.0).unwrap(), 1.0);
        assert!((mid_price(1.2345, 1.2347).unwrap() - 1.2346).abs() < 1e-12);
        assert!(mid_price(0.0, 1.0).is_err());
        assert!(mid_price(1.0, -2.0).is_err());
    }

    #[test]
    fn timestamp_roundtrip() {
        let t = ts("20190701 000000123");
        assert_eq!(t.to_string(), "20190701 000000123");
        assert_eq!(t.millis() % 1000, 123);
        assert!(Timestamp::parse("20190701 000000").is_none());
        assert!(Timestamp::parse("20191301 000000000").is_none());
    }

    #[test]
    fn single_row() {
        let (s, summary) = parse_ticks("20190701 000000123,1.10000,1.10020\n".as_bytes(), "EURUSD").unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.prices()[0] - 1.10010).abs() < 1e-12);
        assert_eq!(summary.rows_dropped(), 0);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_ticks("".as_bytes(), "X"), Err(Error::EmptySeries { .. })));
        assert!(matches!(
            parse_ticks("timestamp,bid,ask\n".as_bytes(), "X"),
            Err(Error::EmptySeries { .. })
        ));
    }

    #[test]
    fn out_of_order_rows_are_dropped() {
        let csv = "20190701 000001000,1.1,1.1\n20190701 000000500,1.2,1.2\n20190701 000002000,1.3,1.3\n";
        let (s, summary) = parse_ticks(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(summary.rows_out_of_order, 1);
        assert_eq!(summary.rows_dropped(), 1);
        assert_eq!(s.prices(), &[1.1, 1.3]);
    }

    #[test]
    fn bad_rows_are_rejected_and_counted() {
        let csv = "timestamp,bid,ask\n20190701 000001000,1.1,1.1\n20190701 000001500,abc,1.1\n20190701 000002000,-1,1.1\n20190701 000002000,1.2,1.2\n";
        let (s, summary) = parse_ticks(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(summary.rows_rejected, 2);
        assert_eq!(summary.rows_read, 4);
    }

    #[test]
    fn duplicate_timestamps_are_kept() {
        let csv = "20190701 000001000,1.1,1.1\n20190701 000001000,1.2,1.2\n";
        let (s, _) = parse_ticks(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.len(), 2);
    }

    fn daily_series(from: &str, days: i64) -> PriceSeries {
        let start = ts(from);
        let stamps: Vec<_> = (0..days).map(|d| Timestamp(start.0 + d * 86_400_000)).collect();
        let prices = vec![1.0; stamps.len()];
        PriceSeries::new("X", stamps, prices).unwrap()
    }

    #[test]
    fn window_count_over_22_months() {
        // 2019-01-01 .. 2020-10-31 inclusive
        let s = daily_series("20190101 000000000", 670);
        assert_eq!(s.last_timestamp().unwrap().to_string(), "20201031 000000000");
        let w = sliding_windows(&s, 2, 1).unwrap();
        assert_eq!(w.len(), 21);
        assert_eq!(w[0].window_start, ts("20190101 000000000"));
        assert_eq!(w[0].window_end, ts("20190301 000000000"));
        assert_eq!(w[20].window_start, ts("20200901 000000000"));
        assert_eq!(w[20].window_end, ts("20201101 000000000"));
    }

    #[test]
    fn one_month_has_no_window() {
        let s = daily_series("20190101 000000000", 31);
        assert!(sliding_windows(&s, 2, 1).unwrap().is_empty());
    }

    #[test]
    fn two_months_split_at_month_boundary() {
        let s = daily_series("20190101 000000000", 59);
        let w = sliding_windows(&s, 2, 1).unwrap();
        assert_eq!(w.len(), 1);
        let feb = ts("20190201 000000000");
        assert_eq!(w[0].train_end, feb);
        assert_eq!(s.timestamps()[w[0].test_range.start], feb);
        assert_eq!(w[0].train_range, 0..31);
        assert_eq!(w[0].test_range, 31..59);
    }

    #[test]
    fn odd_window_splits_at_midpoint_instant() {
        let s = daily_series("20190101 000000000", 90);
        let w = sliding_windows(&s, 3, 1).unwrap();
        assert_eq!(w.len(), 1);
        let mid = (w[0].window_start.0 + w[0].window_end.0) / 2;
        assert_eq!(w[0].train_end.0, mid);
    }

    #[test]
    fn invalid_window_arguments() {
        let s = daily_series("20190101 000000000", 10);
        assert!(sliding_windows(&s, 0, 1).is_err());
        assert!(sliding_windows(&s, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn windows_partition_their_ticks(
            gaps in prop::collection::vec(0i64..3 * 86_400_000, 2..400),
            window in 1u32..4,
            stride in 1u32..3,
        ) {
            let mut t = ts("20190115 120000000").0;
            let stamps: Vec<_> = gaps.iter().map(|g| { t += g; Timestamp(t) }).collect();
            let s = PriceSeries::new("X", stamps.clone(), vec![1.0; stamps.len()]).unwrap();
            for w in sliding_windows(&s, window, stride).unwrap() {
                prop_assert_eq!(w.train_range.end, w.test_range.start);
                let inside: Vec<usize> = (0..stamps.len())
                    .filter(|&i| stamps[i] >= w.window_start && stamps[i] < w.window_end)
                    .collect();
                let joined: Vec<usize> = w.train_range.clone().chain(w.test_range.clone()).collect();
                prop_assert_eq!(inside, joined);
                if !w.train_range.is_empty() && !w.test_range.is_empty() {
                    prop_assert!(stamps[w.train_range.end - 1] < stamps[w.test_range.start]);
                }
            }
        }

        #[test]
        fn parse_write_parse_is_idempotent(
            rows in prop::collection::vec((0i64..10_000, 0.5f64..2.0, 0.0f64..0.001), 1..60)
        ) {
            let mut t = ts("20200301 000000000").0;
            let mut csv = String::new();
            for (gap, bid, spread) in rows {
                t += gap;
                csv.push_str(&format!("{},{:.5},{:.5}\n", Timestamp(t), bid, bid + spread));
            }
            let (first, _) = parse_ticks(csv.as_bytes(), "X").unwrap();
            let mut buf = Vec::new();
            write_ticks(&first, &mut buf).unwrap();
            let (second, summary) = parse_ticks(buf.as_slice(), "X").unwrap();
            prop_assert_eq!(summary.rows_dropped(), 0);
            prop_assert_eq!(&first, &second);
        }
    }
}
