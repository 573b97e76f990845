//! EnergyPlus weather (EPW) files.
//!
//! An EPW file is eight header lines followed by comma separated hourly (or
//! sub-hourly) rows of 35 columns:
//!
//! ```text
//! LOCATION,...
//! DESIGN CONDITIONS,...
//! TYPICAL/EXTREME PERIODS,...
//! GROUND TEMPERATURES,...
//! HOLIDAYS/DAYLIGHT SAVINGS,...
//! COMMENTS 1,...
//! COMMENTS 2,...
//! DATA PERIODS,<n>,<records per hour>,<name>,<start weekday>,<M/D>,<M/D>
//! year,month,day,hour,minute,flags,dry bulb,dew point,...
//! ```
//!
//! Each numeric column has a published missing-value code (99.9 for
//! temperatures, 9999 for radiation, ...). Parsed records store those cells as
//! `None` so a sentinel can never leak into statistics. Hours are 1-24 in the
//! file and 0-23 in [`Timestamp`].

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::calendar::{days_in_month, MonthDay};

/// Number of comma separated columns in a data row.
pub const COLUMN_COUNT: usize = 35;

/// Canonical names of every EPW data column, in file order.
pub const COLUMN_NAMES: [&str; COLUMN_COUNT] = [
    "year",
    "month",
    "day",
    "hour",
    "minute",
    "data_source_flags",
    "dry_bulb_temperature",
    "dew_point_temperature",
    "relative_humidity",
    "atmospheric_pressure",
    "extraterrestrial_horizontal_radiation",
    "extraterrestrial_direct_normal_radiation",
    "horizontal_infrared_radiation",
    "global_horizontal_radiation",
    "direct_normal_radiation",
    "diffuse_horizontal_radiation",
    "global_horizontal_illuminance",
    "direct_normal_illuminance",
    "diffuse_horizontal_illuminance",
    "zenith_luminance",
    "wind_direction",
    "wind_speed",
    "total_sky_cover",
    "opaque_sky_cover",
    "visibility",
    "ceiling_height",
    "present_weather_observation",
    "present_weather_codes",
    "precipitable_water",
    "aerosol_optical_depth",
    "snow_depth",
    "days_since_last_snowfall",
    "albedo",
    "liquid_precipitation_depth",
    "liquid_precipitation_quantity",
];

const HEADER_KEYS: [&str; 8] = [
    "LOCATION",
    "DESIGN CONDITIONS",
    "TYPICAL/EXTREME PERIODS",
    "GROUND TEMPERATURES",
    // some generators drop the trailing S
    "HOLIDAYS/DAYLIGHT SAVING",
    "COMMENTS 1",
    "COMMENTS 2",
    "DATA PERIODS",
];

const FLAGS_COLUMN: usize = 5;
const WEATHER_CODES_COLUMN: usize = 27;

macro_rules! fields {
    ($( $variant:ident => $column:literal, $units:literal, $sentinel:expr; )*) => {
        /// A numeric weather column that can be queried as a series.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Field {
            $( $variant, )*
        }

        impl Field {
            pub const ALL: &'static [Field] = &[ $( Field::$variant, )* ];

            /// Zero-based column in a data row.
            pub fn column(self) -> usize {
                match self { $( Field::$variant => $column, )* }
            }

            pub fn units(self) -> &'static str {
                match self { $( Field::$variant => $units, )* }
            }

            /// Published missing-value code, if the column has one.
            pub fn missing_sentinel(self) -> Option<f64> {
                match self { $( Field::$variant => $sentinel, )* }
            }
        }
    };
}

fields! {
    DryBulbTemperature => 6, "°C", Some(99.9);
    DewPointTemperature => 7, "°C", Some(99.9);
    RelativeHumidity => 8, "%", Some(999.0);
    AtmosphericPressure => 9, "Pa", Some(999999.0);
    ExtraterrestrialHorizontalRadiation => 10, "Wh/m²", Some(9999.0);
    ExtraterrestrialDirectNormalRadiation => 11, "Wh/m²", Some(9999.0);
    HorizontalInfraredRadiation => 12, "Wh/m²", Some(9999.0);
    GlobalHorizontalRadiation => 13, "Wh/m²", Some(9999.0);
    DirectNormalRadiation => 14, "Wh/m²", Some(9999.0);
    DiffuseHorizontalRadiation => 15, "Wh/m²", Some(9999.0);
    GlobalHorizontalIlluminance => 16, "lux", Some(999999.0);
    DirectNormalIlluminance => 17, "lux", Some(999999.0);
    DiffuseHorizontalIlluminance => 18, "lux", Some(999999.0);
    ZenithLuminance => 19, "Cd/m²", Some(9999.0);
    WindDirection => 20, "degrees", Some(999.0);
    WindSpeed => 21, "m/s", Some(999.0);
    TotalSkyCover => 22, "tenths", Some(99.0);
    OpaqueSkyCover => 23, "tenths", Some(99.0);
    Visibility => 24, "km", Some(9999.0);
    CeilingHeight => 25, "m", Some(99999.0);
    PresentWeatherObservation => 26, "flag", None;
    PrecipitableWater => 28, "mm", Some(999.0);
    AerosolOpticalDepth => 29, "thousandths", Some(0.999);
    SnowDepth => 30, "cm", Some(999.0);
    DaysSinceLastSnowfall => 31, "days", Some(99.0);
    Albedo => 32, "", Some(999.0);
    LiquidPrecipitationDepth => 33, "mm", Some(999.0);
    LiquidPrecipitationQuantity => 34, "hr", Some(99.0);
}

/// Number of numeric weather fields held by a record.
pub const FIELD_COUNT: usize = 28;

impl Field {
    /// Canonical snake_case name, e.g. `dry_bulb_temperature`.
    pub fn name(self) -> &'static str {
        COLUMN_NAMES[self.column()]
    }

    pub fn from_name(name: &str) -> Result<Field, EpwError> {
        Field::ALL
            .iter()
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| EpwError::UnknownField(name.to_string()))
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Classifies a parsed cell value: `None` when it is the column's
    /// missing code (or, for humidity, outside the valid 0-110 % range).
    fn admit(self, value: f64) -> Option<f64> {
        if self.missing_sentinel() == Some(value) {
            return None;
        }
        if self == Field::RelativeHumidity && !(0.0..=110.0).contains(&value) {
            return None;
        }
        Some(value)
    }
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpwError {
    #[error("malformed EPW header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("bad data row at line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("EPW file contains no data rows")]
    EmptyData,
    #[error("data periods declare {expected} records but the file holds {found}")]
    RecordCountMismatch { expected: usize, found: usize },
    #[error("unknown weather field `{0}`")]
    UnknownField(String),
}

impl EpwError {
    fn header(line: usize, reason: impl Into<String>) -> Self {
        EpwError::MalformedHeader { line, reason: reason.into() }
    }

    fn row(line: usize, reason: impl Into<String>) -> Self {
        EpwError::BadRow { line, reason: reason.into() }
    }
}

/// One `DATA PERIODS` entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataPeriod {
    pub name: String,
    pub start_weekday: String,
    pub start: MonthDay,
    pub end: MonthDay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpwHeader {
    pub station_name: String,
    pub state_province: String,
    pub country: String,
    pub data_source: String,
    pub wmo_station: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Hours from GMT.
    pub timezone: f64,
    /// Meters above sea level.
    pub elevation: f64,
    pub records_per_hour: u32,
    pub data_periods: Vec<DataPeriod>,
    /// Header lines 2-7, kept verbatim.
    pub design_conditions: String,
    pub typical_extreme_periods: String,
    pub ground_temperatures: String,
    pub holidays_daylight_savings: String,
    pub comments_1: String,
    pub comments_2: String,
}

impl EpwHeader {
    /// A header for one hourly, whole-year data period with empty optional sections.
    pub fn new(station_name: &str, country: &str, latitude: f64, longitude: f64, timezone: f64, elevation: f64) -> Self {
        EpwHeader {
            station_name: station_name.to_string(),
            state_province: "-".to_string(),
            country: country.to_string(),
            data_source: "synthetic".to_string(),
            wmo_station: "000000".to_string(),
            latitude,
            longitude,
            timezone,
            elevation,
            records_per_hour: 1,
            data_periods: vec![DataPeriod {
                name: "Data".to_string(),
                start_weekday: "Sunday".to_string(),
                start: MonthDay::JAN_1,
                end: MonthDay::DEC_31,
            }],
            design_conditions: "DESIGN CONDITIONS,0".to_string(),
            typical_extreme_periods: "TYPICAL/EXTREME PERIODS,0".to_string(),
            ground_temperatures: "GROUND TEMPERATURES,0".to_string(),
            holidays_daylight_savings: "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0".to_string(),
            comments_1: "COMMENTS 1,".to_string(),
            comments_2: "COMMENTS 2,".to_string(),
        }
    }

    fn validate(&self, line: usize) -> Result<(), EpwError> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(EpwError::header(line, format!("latitude {} out of range", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(EpwError::header(line, format!("longitude {} out of range", self.longitude)));
        }
        if !(-12.0..=14.0).contains(&self.timezone) {
            return Err(EpwError::header(line, format!("timezone {} out of range", self.timezone)));
        }
        Ok(())
    }

    /// Records the data periods should contain. Feb 29 is counted only when
    /// `leap` is set and a period spans it.
    fn expected_records(&self, leap: bool) -> usize {
        let hours: usize = self
            .data_periods
            .iter()
            .map(|p| p.start.days_through(p.end, leap).count() * 24)
            .sum();
        hours * self.records_per_hour as usize
    }
}

/// Row time stamp. `hour` is 0-23 (the file's hour minus one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Timestamp {
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
}

impl Timestamp {
    pub fn new(month: u8, day: u8, hour: u8) -> Self {
        Timestamp { month, day, hour, minute: 0 }
    }

    pub fn date(&self) -> MonthDay {
        MonthDay { month: self.month, day: self.day }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}-{:02} {:02}:{:02}", self.month, self.day, self.hour, self.minute)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub year: i32,
    pub timestamp: Timestamp,
    pub data_source_flags: String,
    pub present_weather_codes: String,
    values: [Option<f64>; FIELD_COUNT],
}

impl HourlyRecord {
    /// A record with every numeric field missing.
    pub fn new(year: i32, timestamp: Timestamp) -> Self {
        HourlyRecord {
            year,
            timestamp,
            data_source_flags: String::new(),
            present_weather_codes: String::new(),
            values: [None; FIELD_COUNT],
        }
    }

    /// Value of `field`, or `None` when missing in the source.
    pub fn get(&self, field: Field) -> Option<f64> {
        self.values[field.slot()]
    }

    /// Sets a field. Sentinel values are stored as missing.
    pub fn set(&mut self, field: Field, value: Option<f64>) {
        self.values[field.slot()] = value.and_then(|v| field.admit(v));
    }

    pub fn with(mut self, field: Field, value: f64) -> Self {
        self.set(field, Some(value));
        self
    }

    pub fn dry_bulb_temperature(&self) -> Option<f64> {
        self.get(Field::DryBulbTemperature)
    }

    pub fn relative_humidity(&self) -> Option<f64> {
        self.get(Field::RelativeHumidity)
    }

    pub fn global_horizontal_radiation(&self) -> Option<f64> {
        self.get(Field::GlobalHorizontalRadiation)
    }

    pub fn wind_speed(&self) -> Option<f64> {
        self.get(Field::WindSpeed)
    }
}

/// A parsed weather file. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    header: EpwHeader,
    records: Vec<HourlyRecord>,
}

impl WeatherSeries {
    /// Builds a series, checking that time stamps strictly increase.
    pub fn new(header: EpwHeader, records: Vec<HourlyRecord>) -> Result<Self, EpwError> {
        if let Some(i) = records
            .windows(2)
            .position(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(EpwError::row(
                i + 1 + HEADER_KEYS.len() + 1,
                format!(
                    "time stamp {} does not follow {}",
                    records[i + 1].timestamp,
                    records[i].timestamp
                ),
            ));
        }
        Ok(WeatherSeries { header, records })
    }

    pub fn header(&self) -> &EpwHeader {
        &self.header
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether the file carries Feb 29 rows.
    pub fn has_leap_day(&self) -> bool {
        self.records.iter().any(|r| r.timestamp.date().is_leap_day())
    }
}

/// One point of [`field_series`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub timestamp: Timestamp,
    /// `None` when the source cell was missing.
    pub value: Option<f64>,
}

impl FieldPoint {
    pub fn is_missing(&self) -> bool {
        self.value.is_none()
    }
}

/// Values of a named field in file order, missing cells flagged.
pub fn field_series(series: &WeatherSeries, data_type: &str) -> Result<Vec<FieldPoint>, EpwError> {
    let field = Field::from_name(data_type)?;
    Ok(series
        .records
        .iter()
        .map(|r| FieldPoint { timestamp: r.timestamp, value: r.get(field) })
        .collect())
}

/// Parses an EPW file. Invalid UTF-8 (common in comment lines of older
/// files) is replaced rather than rejected.
pub fn parse_epw(raw: &[u8]) -> Result<WeatherSeries, EpwError> {
    let text = String::from_utf8_lossy(raw);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).enumerate();

    let mut header_lines = Vec::with_capacity(HEADER_KEYS.len());
    for key in HEADER_KEYS {
        let Some((idx, line)) = lines.next() else {
            return Err(EpwError::header(header_lines.len() + 1, format!("missing {key} line")));
        };
        if !line.to_ascii_uppercase().starts_with(key) {
            return Err(EpwError::header(idx + 1, format!("expected {key} line")));
        }
        header_lines.push(line);
    }
    let header = parse_header(&header_lines)?;

    let mut records = Vec::with_capacity(8760 * header.records_per_hour as usize);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let record = parse_row(line, line_no)?;
        if let Some(prev) = records.last().map(|r: &HourlyRecord| r.timestamp) {
            if record.timestamp <= prev {
                return Err(EpwError::row(
                    line_no,
                    format!("time stamp {} does not follow {}", record.timestamp, prev),
                ));
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(EpwError::EmptyData);
    }

    let leap = records.iter().any(|r| r.timestamp.date().is_leap_day());
    let expected = header.expected_records(leap);
    if expected != records.len() {
        return Err(EpwError::RecordCountMismatch { expected, found: records.len() });
    }
    Ok(WeatherSeries { header, records })
}

fn parse_header(lines: &[&str]) -> Result<EpwHeader, EpwError> {
    let loc: Vec<&str> = lines[0].split(',').map(str::trim).collect();
    if loc.len() < 10 {
        return Err(EpwError::header(1, "LOCATION needs 10 fields"));
    }
    let num = |i: usize, what: &str| -> Result<f64, EpwError> {
        loc[i]
            .parse::<f64>()
            .map_err(|_| EpwError::header(1, format!("{what} `{}` is not a number", loc[i])))
    };
    let mut header = EpwHeader {
        station_name: loc[1].to_string(),
        state_province: loc[2].to_string(),
        country: loc[3].to_string(),
        data_source: loc[4].to_string(),
        wmo_station: loc[5].to_string(),
        latitude: num(6, "latitude")?,
        longitude: num(7, "longitude")?,
        timezone: num(8, "timezone")?,
        elevation: num(9, "elevation")?,
        records_per_hour: 1,
        data_periods: Vec::new(),
        design_conditions: lines[1].to_string(),
        typical_extreme_periods: lines[2].to_string(),
        ground_temperatures: lines[3].to_string(),
        holidays_daylight_savings: lines[4].to_string(),
        comments_1: lines[5].to_string(),
        comments_2: lines[6].to_string(),
    };
    header.validate(1)?;

    let dp: Vec<&str> = lines[7].split(',').map(str::trim).collect();
    let line = 8;
    let count: usize = dp
        .get(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| EpwError::header(line, "bad data period count"))?;
    header.records_per_hour = dp
        .get(2)
        .and_then(|s| s.parse().ok())
        .filter(|&r: &u32| r >= 1 && 60 % r == 0)
        .ok_or_else(|| EpwError::header(line, "bad records per hour"))?;
    if count == 0 {
        return Err(EpwError::header(line, "no data periods"));
    }
    for p in 0..count {
        let base = 3 + 4 * p;
        let fields = dp
            .get(base..base + 4)
            .ok_or_else(|| EpwError::header(line, format!("data period {} is truncated", p + 1)))?;
        let start = parse_month_day(fields[2]).ok_or_else(|| EpwError::header(line, "bad period start"))?;
        let end = parse_month_day(fields[3]).ok_or_else(|| EpwError::header(line, "bad period end"))?;
        if end < start {
            return Err(EpwError::header(line, "data period ends before it starts"));
        }
        header.data_periods.push(DataPeriod {
            name: fields[0].to_string(),
            start_weekday: fields[1].to_string(),
            start,
            end,
        });
    }
    Ok(header)
}

fn parse_month_day(s: &str) -> Option<MonthDay> {
    let (m, d) = s.split_once('/')?;
    MonthDay::new(m.trim().parse().ok()?, d.trim().parse().ok()?)
}

fn parse_row(line: &str, line_no: usize) -> Result<HourlyRecord, EpwError> {
    let mut cols = [""; COLUMN_COUNT];
    let mut found = 0;
    for cell in line.split(',') {
        if let Some(slot) = cols.get_mut(found) {
            *slot = cell;
        }
        found += 1;
    }
    if found != COLUMN_COUNT {
        return Err(EpwError::row(line_no, format!("expected {COLUMN_COUNT} columns, found {found}")));
    }
    let int = |i: usize| -> Result<i64, EpwError> {
        let s = cols[i].trim();
        s.parse::<i64>()
            .or_else(|_| s.parse::<f64>().map(|v| v as i64).map_err(|_| ()))
            .map_err(|_| EpwError::row(line_no, format!("{} `{s}` is not an integer", COLUMN_NAMES[i])))
    };
    let year = int(0)? as i32;
    let (month, day, hour, minute) = (int(1)?, int(2)?, int(3)?, int(4)?);
    if !(1..=12).contains(&month) || day < 1 || day > i64::from(days_in_month(month as u8, true)) {
        return Err(EpwError::row(line_no, format!("invalid date {month}/{day}")));
    }
    if !(1..=24).contains(&hour) {
        return Err(EpwError::row(line_no, format!("hour {hour} outside 1-24")));
    }
    if !(0..=60).contains(&minute) {
        return Err(EpwError::row(line_no, format!("minute {minute} outside 0-60")));
    }

    let mut record = HourlyRecord::new(
        year,
        Timestamp {
            month: month as u8,
            day: day as u8,
            hour: (hour - 1) as u8,
            minute: minute as u8,
        },
    );
    record.data_source_flags = cols[FLAGS_COLUMN].to_string();
    record.present_weather_codes = cols[WEATHER_CODES_COLUMN].to_string();
    for &field in Field::ALL {
        let cell = cols[field.column()].trim();
        if cell.is_empty() {
            continue;
        }
        let value: f64 = cell.parse().map_err(|_| {
            EpwError::row(line_no, format!("{} `{cell}` is not a number", field.name()))
        })?;
        if !value.is_finite() {
            return Err(EpwError::row(line_no, format!("{} is not finite", field.name())));
        }
        record.set(field, Some(value));
    }
    Ok(record)
}

/// Writes a series back to EPW text. Numbers use the shortest decimal form
/// that parses back to the same value; missing cells are written as the
/// column's sentinel (or left empty when it has none).
pub fn serialize_epw(series: &WeatherSeries) -> Result<Vec<u8>, EpwError> {
    if series.records.is_empty() {
        return Err(EpwError::EmptyData);
    }
    let h = &series.header;
    let mut out = String::with_capacity(series.records.len() * 160 + 2048);
    let _ = writeln!(
        out,
        "LOCATION,{},{},{},{},{},{},{},{},{}",
        h.station_name,
        h.state_province,
        h.country,
        h.data_source,
        h.wmo_station,
        h.latitude,
        h.longitude,
        h.timezone,
        h.elevation
    );
    for raw in [
        &h.design_conditions,
        &h.typical_extreme_periods,
        &h.ground_temperatures,
        &h.holidays_daylight_savings,
        &h.comments_1,
        &h.comments_2,
    ] {
        out.push_str(raw);
        out.push('\n');
    }
    let _ = write!(out, "DATA PERIODS,{},{}", h.data_periods.len(), h.records_per_hour);
    for p in &h.data_periods {
        let _ = write!(
            out,
            ",{},{},{:>2}/{:>2},{:>2}/{:>2}",
            p.name, p.start_weekday, p.start.month, p.start.day, p.end.month, p.end.day
        );
    }
    out.push('\n');

    for r in &series.records {
        let t = r.timestamp;
        let _ = write!(out, "{},{},{},{},{},{}", r.year, t.month, t.day, t.hour + 1, t.minute, r.data_source_flags);
        for column in 6..COLUMN_COUNT {
            out.push(',');
            if column == WEATHER_CODES_COLUMN {
                out.push_str(&r.present_weather_codes);
                continue;
            }
            let field = Field::ALL[column - 6 - usize::from(column > WEATHER_CODES_COLUMN)];
            debug_assert_eq!(field.column(), column);
            if let Some(v) = r.get(field).or(field.missing_sentinel()) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}
