//! Period selection, temporal aggregation and summary statistics over a
//! [`WeatherSeries`].
//!
//! Periods use a small grammar shared with the tool schemas:
//!
//! ```text
//! DATE:<M>/<D>-<M>/<D>    inclusive calendar range, e.g. DATE:3/1-3/31
//! YEAR                    1/1-12/31
//! ```
//!
//! Feb 29 rows of leap-year files are only selected when the period starts
//! or ends on Feb 29, so `YEAR` always means 365 days.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::calendar::{month_abbrev, MonthDay};
use crate::epw::{EpwError, Field, HourlyRecord, Timestamp, WeatherSeries};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeriodError {
    #[error("bad period syntax `{0}` (expected DATE:M/D-M/D or YEAR)")]
    BadPeriodSyntax(String),
    #[error("invalid date `{0}`")]
    InvalidDate(String),
    #[error("period `{0}` ends before it starts")]
    ReversedRange(String),
}

impl PeriodError {
    pub fn code(&self) -> &'static str {
        match self {
            PeriodError::BadPeriodSyntax(_) => "BadPeriodSyntax",
            PeriodError::InvalidDate(_) => "InvalidDate",
            PeriodError::ReversedRange(_) => "ReversedRange",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error("unknown weather field `{0}`")]
    UnknownField(String),
    #[error("unknown time step `{0}` (expected hourly, daily or monthly)")]
    UnknownStep(String),
    #[error("the period selects no hours of the weather file")]
    EmptyPeriod,
    #[error("the weather series is empty")]
    EmptyData,
}

impl From<EpwError> for AnalyticsError {
    fn from(e: EpwError) -> Self {
        match e {
            EpwError::UnknownField(name) => AnalyticsError::UnknownField(name),
            _ => AnalyticsError::EmptyData,
        }
    }
}

/// Inclusive calendar range within one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeriodRange {
    pub start: MonthDay,
    pub end: MonthDay,
}

impl PeriodRange {
    pub const YEAR: PeriodRange = PeriodRange { start: MonthDay::JAN_1, end: MonthDay::DEC_31 };

    pub fn new(start: MonthDay, end: MonthDay) -> Result<Self, PeriodError> {
        if end < start {
            return Err(PeriodError::ReversedRange(format!("{start}..{end}")));
        }
        Ok(PeriodRange { start, end })
    }

    fn addresses_leap_day(&self) -> bool {
        self.start.is_leap_day() || self.end.is_leap_day()
    }

    pub fn contains(&self, date: MonthDay) -> bool {
        if date.is_leap_day() && !self.addresses_leap_day() {
            return false;
        }
        self.start <= date && date <= self.end
    }

    pub fn select<'a>(&'a self, series: &'a WeatherSeries) -> impl Iterator<Item = &'a HourlyRecord> + 'a {
        series.records().iter().filter(move |r| self.contains(r.timestamp.date()))
    }
}

impl fmt::Display for PeriodRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::YEAR {
            f.write_str("YEAR")
        } else {
            write!(
                f,
                "DATE:{}/{}-{}/{}",
                self.start.month, self.start.day, self.end.month, self.end.day
            )
        }
    }
}

impl FromStr for PeriodRange {
    type Err = PeriodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_period(s)
    }
}

/// Parses `DATE:M/D-M/D` or `YEAR`.
pub fn parse_period(spec: &str) -> Result<PeriodRange, PeriodError> {
    let spec = spec.trim();
    if spec == "YEAR" {
        return Ok(PeriodRange::YEAR);
    }
    let syntax = || PeriodError::BadPeriodSyntax(spec.to_string());
    let body = spec.strip_prefix("DATE:").ok_or_else(syntax)?;
    let (start, end) = body.split_once('-').ok_or_else(syntax)?;
    let start = parse_date(start).ok_or_else(syntax)??;
    let end = parse_date(end).ok_or_else(syntax)??;
    PeriodRange::new(start, end).map_err(|_| PeriodError::ReversedRange(spec.to_string()))
}

/// Outer `None` is a syntax error, inner `Err` an impossible date.
fn parse_date(s: &str) -> Option<Result<MonthDay, PeriodError>> {
    let (m, d) = s.split_once('/')?;
    let digits = |t: &str| !t.is_empty() && t.len() <= 2 && t.bytes().all(|b| b.is_ascii_digit());
    if !digits(m) || !digits(d) {
        return None;
    }
    let (month, day) = (m.parse().ok()?, d.parse().ok()?);
    Some(MonthDay::new(month, day).ok_or_else(|| PeriodError::InvalidDate(s.to_string())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeStep {
    Hourly,
    Daily,
    Monthly,
}

impl FromStr for TimeStep {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hourly" => Ok(TimeStep::Hourly),
            "daily" => Ok(TimeStep::Daily),
            "monthly" => Ok(TimeStep::Monthly),
            other => Err(AnalyticsError::UnknownStep(other.to_string())),
        }
    }
}

impl fmt::Display for TimeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeStep::Hourly => "hourly",
            TimeStep::Daily => "daily",
            TimeStep::Monthly => "monthly",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Running accumulator for one bucket.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    min: f64,
    max: f64,
    present: usize,
    missing: usize,
}

impl Accumulator {
    fn push(&mut self, value: Option<f64>) {
        match value {
            Some(v) => {
                if self.present == 0 {
                    self.min = v;
                    self.max = v;
                } else {
                    self.min = self.min.min(v);
                    self.max = self.max.max(v);
                }
                self.sum += v;
                self.present += 1;
            }
            None => self.missing += 1,
        }
    }

    fn stats(&self) -> Option<Stats> {
        (self.present > 0).then(|| Stats {
            // clamp guards the mean against rounding past the extremes
            mean: (self.sum / self.present as f64).clamp(self.min, self.max),
            min: self.min,
            max: self.max,
        })
    }
}

/// One bucket. `stats` is `None` when every source hour was missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketPoint {
    pub label: String,
    pub start: Timestamp,
    pub stats: Option<Stats>,
    pub count_present: usize,
    pub count_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedSeries {
    pub step: TimeStep,
    pub field: Field,
    pub units: &'static str,
    pub period: PeriodRange,
    pub points: Vec<BucketPoint>,
}

impl AggregatedSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn bucket_label(step: TimeStep, t: Timestamp) -> String {
    match step {
        TimeStep::Hourly => t.to_string(),
        TimeStep::Daily => t.date().to_string(),
        TimeStep::Monthly => month_abbrev(t.month).to_string(),
    }
}

/// Buckets `field` over `period` at `step`. Daily and monthly buckets are
/// calendar days/months clipped to the period; hourly returns each record.
pub fn aggregate(
    series: &WeatherSeries,
    field: &str,
    step: TimeStep,
    period: PeriodRange,
) -> Result<AggregatedSeries, AnalyticsError> {
    let field = Field::from_name(field)?;
    let key = |t: Timestamp| match step {
        TimeStep::Hourly => (t.month, t.day, t.hour, t.minute),
        TimeStep::Daily => (t.month, t.day, 0, 0),
        TimeStep::Monthly => (t.month, 0, 0, 0),
    };

    let mut points = Vec::new();
    let mut current: Option<((u8, u8, u8, u8), Timestamp, Accumulator)> = None;
    for record in period.select(series) {
        let k = key(record.timestamp);
        match &mut current {
            Some((ck, _, acc)) if *ck == k => acc.push(record.get(field)),
            _ => {
                if let Some((_, start, acc)) = current.take() {
                    points.push(finish(step, start, &acc));
                }
                let mut acc = Accumulator::default();
                acc.push(record.get(field));
                current = Some((k, record.timestamp, acc));
            }
        }
    }
    if let Some((_, start, acc)) = current {
        points.push(finish(step, start, &acc));
    }
    if points.is_empty() {
        return Err(AnalyticsError::EmptyPeriod);
    }
    Ok(AggregatedSeries { step, field, units: field.units(), period, points })
}

fn finish(step: TimeStep, start: Timestamp, acc: &Accumulator) -> BucketPoint {
    BucketPoint {
        label: bucket_label(step, start),
        start,
        stats: acc.stats(),
        count_present: acc.present,
        count_missing: acc.missing,
    }
}

/// Number of records a period selects.
pub fn hours_in_period(series: &WeatherSeries, period: PeriodRange) -> usize {
    period.select(series).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationEcho {
    pub station_name: String,
    pub country: String,
    pub latitude: f64,
    pub longitude: f64,
    pub timezone: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub field: Field,
    pub units: &'static str,
    pub annual: Option<Stats>,
    pub count_present: usize,
    pub count_missing: usize,
    /// Mean per calendar month present in the file, January first.
    pub monthly_means: Vec<(u8, Option<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayExtreme {
    pub date: MonthDay,
    pub mean_dry_bulb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeatherSummary {
    pub location: LocationEcho,
    pub record_count: usize,
    pub fields: Vec<FieldSummary>,
    /// Day with the highest mean dry-bulb temperature (earliest on ties).
    pub hottest_day: Option<DayExtreme>,
    pub coldest_day: Option<DayExtreme>,
}

impl WeatherSummary {
    pub fn field(&self, field: Field) -> Option<&FieldSummary> {
        self.fields.iter().find(|f| f.field == field)
    }
}

/// Fields reported by [`summarize`].
pub const SUMMARY_FIELDS: [Field; 10] = [
    Field::DryBulbTemperature,
    Field::DewPointTemperature,
    Field::RelativeHumidity,
    Field::AtmosphericPressure,
    Field::GlobalHorizontalRadiation,
    Field::DirectNormalRadiation,
    Field::DiffuseHorizontalRadiation,
    Field::WindSpeed,
    Field::TotalSkyCover,
    Field::LiquidPrecipitationDepth,
];

pub fn summarize(series: &WeatherSeries) -> Result<WeatherSummary, AnalyticsError> {
    if series.is_empty() {
        return Err(AnalyticsError::EmptyData);
    }
    let h = series.header();
    let fields = SUMMARY_FIELDS
        .iter()
        .map(|&field| {
            let mut annual = Accumulator::default();
            let mut months: Vec<(u8, Accumulator)> = Vec::new();
            for r in series.records() {
                let v = r.get(field);
                annual.push(v);
                match months.last_mut() {
                    Some((m, acc)) if *m == r.timestamp.month => acc.push(v),
                    _ => {
                        let mut acc = Accumulator::default();
                        acc.push(v);
                        months.push((r.timestamp.month, acc));
                    }
                }
            }
            FieldSummary {
                field,
                units: field.units(),
                annual: annual.stats(),
                count_present: annual.present,
                count_missing: annual.missing,
                monthly_means: months.iter().map(|(m, a)| (*m, a.stats().map(|s| s.mean))).collect(),
            }
        })
        .collect();

    let mut days: Vec<(MonthDay, Accumulator)> = Vec::new();
    for r in series.records() {
        let date = r.timestamp.date();
        match days.last_mut() {
            Some((d, acc)) if *d == date => acc.push(r.dry_bulb_temperature()),
            _ => {
                let mut acc = Accumulator::default();
                acc.push(r.dry_bulb_temperature());
                days.push((date, acc));
            }
        }
    }
    let daily: Vec<DayExtreme> = days
        .iter()
        .filter_map(|(date, acc)| acc.stats().map(|s| DayExtreme { date: *date, mean_dry_bulb: s.mean }))
        .collect();
    // days are in calendar order, so strict comparisons keep the earliest
    let pick = |better: fn(f64, f64) -> bool| {
        daily.iter().copied().fold(None, |best: Option<DayExtreme>, d| match best {
            Some(b) if !better(d.mean_dry_bulb, b.mean_dry_bulb) => Some(b),
            _ => Some(d),
        })
    };

    Ok(WeatherSummary {
        location: LocationEcho {
            station_name: h.station_name.clone(),
            country: h.country.clone(),
            latitude: h.latitude,
            longitude: h.longitude,
            timezone: h.timezone,
            elevation: h.elevation,
        },
        record_count: series.len(),
        fields,
        hottest_day: pick(|a, b| a > b),
        coldest_day: pick(|a, b| a < b),
    })
}

impl fmt::Display for WeatherSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loc = &self.location;
        writeln!(
            f,
            "Location: {}, {} (lat {:.2}, lon {:.2}, UTC{:+}, elevation {} m)",
            loc.station_name, loc.country, loc.latitude, loc.longitude, loc.timezone, loc.elevation
        )?;
        writeln!(f, "Records: {}", self.record_count)?;
        for s in &self.fields {
            match s.annual {
                Some(a) => {
                    write!(
                        f,
                        "{} ({}): annual mean {:.1}, min {:.1}, max {:.1}",
                        s.field, s.units, a.mean, a.min, a.max
                    )?;
                    if s.count_missing > 0 {
                        write!(f, " ({} missing hours)", s.count_missing)?;
                    }
                    writeln!(f)?;
                    let months: Vec<String> = s
                        .monthly_means
                        .iter()
                        .map(|(m, v)| match v {
                            Some(v) => format!("{} {:.1}", month_abbrev(*m), v),
                            None => format!("{} n/a", month_abbrev(*m)),
                        })
                        .collect();
                    writeln!(f, "  monthly means: {}", months.join(", "))?;
                }
                None => writeln!(f, "{} ({}): no data", s.field, s.units)?,
            }
        }
        if let Some(d) = self.hottest_day {
            writeln!(f, "Hottest day (mean dry bulb): {} at {:.1} °C", d.date, d.mean_dry_bulb)?;
        }
        if let Some(d) = self.coldest_day {
            writeln!(f, "Coldest day (mean dry bulb): {} at {:.1} °C", d.date, d.mean_dry_bulb)?;
        }
        Ok(())
    }
}
