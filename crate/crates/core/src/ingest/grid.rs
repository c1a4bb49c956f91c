use std::ops::Range;

use chrono::{Datelike, NaiveDate, NaiveTime, TimeZone, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Parameters of the slicing: δt, the daily session and the calendar filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub slice_minutes: u32,
    pub session_start: NaiveTime,
    pub session_end: NaiveTime,
    /// IANA zone name the session bounds are expressed in.
    pub timezone: String,
    pub include_weekends: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            slice_minutes: 60,
            session_start: NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            session_end: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            timezone: "Europe/London".to_owned(),
            include_weekends: false,
        }
    }
}

impl SessionConfig {
    pub fn tz(&self) -> Result<Tz> {
        self.timezone
            .parse::<Tz>()
            .map_err(|_| invalid("timezone", format!("unknown zone `{}`", self.timezone)))
    }

    pub fn slice_ms(&self) -> i64 {
        i64::from(self.slice_minutes) * 60_000
    }

    pub fn validate(&self) -> Result<()> {
        if self.slice_minutes == 0 {
            return Err(invalid("slice_minutes", "must be positive"));
        }
        if self.session_start >= self.session_end {
            return Err(invalid("session", "session_start must precede session_end"));
        }
        self.tz().map(|_| ())
    }

    fn is_trading_day(&self, day: NaiveDate) -> bool {
        self.include_weekends || !matches!(day.weekday(), Weekday::Sat | Weekday::Sun)
    }
}

/// One interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub start_ms: i64,
    pub end_ms: i64,
    /// Local calendar day of the slice start.
    pub day: NaiveDate,
    /// Local hour of day of the slice start.
    pub hour: u8,
}

/// Ordered, disjoint, equal-length slices restricted to in-session trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub config: SessionConfig,
    pub slices: Vec<Slice>,
}

fn local_to_utc_ms(tz: &Tz, day: NaiveDate, time: NaiveTime) -> Result<i64> {
    let naive = day.and_time(time);
    tz.from_local_datetime(&naive)
        .earliest()
        .map(|dt| dt.timestamp_millis())
        .ok_or_else(|| Error::TimeZone(naive.to_string()))
}

impl TimeGrid {
    /// Slices for every trading day in `[first, last]`. Only slices lying
    /// wholly inside the session are kept.
    pub fn for_dates(config: SessionConfig, first: NaiveDate, last: NaiveDate) -> Result<Self> {
        config.validate()?;
        let tz = config.tz()?;
        let step = config.slice_ms();
        let mut slices = Vec::new();
        let mut day = first;
        while day <= last {
            if config.is_trading_day(day) {
                let open = local_to_utc_ms(&tz, day, config.session_start)?;
                let close = local_to_utc_ms(&tz, day, config.session_end)?;
                let mut start = open;
                while start + step <= close {
                    slices.push(Slice {
                        start_ms: start,
                        end_ms: start + step,
                        day,
                        hour: local_hour(&tz, start),
                    });
                    start += step;
                }
            }
            day = day.succ_opt().ok_or_else(|| invalid("dates", "calendar overflow"))?;
        }
        Ok(TimeGrid { config, slices })
    }

    /// Grid spanning the local days of the earliest and latest timestamps.
    pub fn covering(config: SessionConfig, timestamps: impl IntoIterator<Item = i64>) -> Result<Self> {
        let tz = config.tz()?;
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for ts in timestamps {
            lo = lo.min(ts);
            hi = hi.max(ts);
        }
        if lo > hi {
            return Ok(TimeGrid { config, slices: Vec::new() });
        }
        Self::for_dates(config, local_day(&tz, lo), local_day(&tz, hi))
    }

    /// `n` back-to-back slices of `slice_minutes` starting at `start_ms`,
    /// with no session or weekend gaps.
    pub fn contiguous(config: SessionConfig, start_ms: i64, n: usize) -> Result<Self> {
        config.validate()?;
        let tz = config.tz()?;
        let step = config.slice_ms();
        let slices = (0..n as i64)
            .map(|k| {
                let s = start_ms + k * step;
                Slice {
                    start_ms: s,
                    end_ms: s + step,
                    day: local_day(&tz, s),
                    hour: local_hour(&tz, s),
                }
            })
            .collect();
        Ok(TimeGrid { config, slices })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Index of the slice containing `ts`, if any.
    pub fn slice_of(&self, ts: i64) -> Option<usize> {
        let k = self.slices.partition_point(|s| s.start_ms <= ts);
        if k == 0 {
            return None;
        }
        let s = &self.slices[k - 1];
        (ts < s.end_ms).then_some(k - 1)
    }

    /// True when slice `t + 1` starts exactly where slice `t` ends.
    pub fn is_contiguous(&self, t: usize) -> bool {
        t + 1 < self.slices.len() && self.slices[t].end_ms == self.slices[t + 1].start_ms
    }

    /// True when slices `t, t+1, ..., t+lag` form an unbroken run.
    pub fn run_is_contiguous(&self, t: usize, lag: usize) -> bool {
        t + lag < self.slices.len() && (t..t + lag).all(|u| self.is_contiguous(u))
    }

    /// Ordered list of distinct days with the slice range each one covers.
    pub fn days(&self) -> Vec<(NaiveDate, Range<usize>)> {
        let mut out: Vec<(NaiveDate, Range<usize>)> = Vec::new();
        for (i, s) in self.slices.iter().enumerate() {
            match out.last_mut() {
                Some((d, r)) if *d == s.day => r.end = i + 1,
                _ => out.push((s.day, i..i + 1)),
            }
        }
        out
    }

    /// Sub-grid over a slice range.
    pub fn window(&self, range: Range<usize>) -> TimeGrid {
        TimeGrid {
            config: self.config.clone(),
            slices: self.slices[range].to_vec(),
        }
    }

    pub fn span_ms(&self) -> Option<(i64, i64)> {
        Some((self.slices.first()?.start_ms, self.slices.last()?.end_ms))
    }
}

pub(crate) fn local_day(tz: &Tz, ts: i64) -> NaiveDate {
    Utc.timestamp_millis_opt(ts).unwrap().with_timezone(tz).date_naive()
}

fn local_hour(tz: &Tz, ts: i64) -> u8 {
    Utc.timestamp_millis_opt(ts).unwrap().with_timezone(tz).hour() as u8
}

/// Millisecond duration of one calendar day; used by generators.
pub const DAY_MS: i64 = 86_400_000;
