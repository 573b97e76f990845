use gbqa_core::analytics::{aggregate, hours_in_period, parse_period, summarize, PeriodRange, TimeStep};
use gbqa_core::epw::{field_series, parse_epw, serialize_epw, Field};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tmy_45n_8e.epw");

fn raw() -> Vec<u8> {
    std::fs::read(FIXTURE).unwrap()
}

/// Column 6 of every data row, read without the parser.
fn raw_dry_bulb() -> Vec<f64> {
    String::from_utf8_lossy(&raw())
        .lines()
        .skip(8)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').nth(6).unwrap().parse::<f64>().unwrap())
        .collect()
}

#[test]
fn record_count_matches_line_count() {
    let series = parse_epw(&raw()).unwrap();
    assert_eq!(raw_dry_bulb().len(), 8760);
    assert_eq!(series.len(), 8760);
    assert!(!series.has_leap_day());
}

#[test]
fn header_fields() {
    let series = parse_epw(&raw()).unwrap();
    let h = series.header();
    assert_eq!(h.latitude, 45.0);
    assert_eq!(h.longitude, 8.0);
    assert_eq!(h.timezone, 1.0);
    assert_eq!(h.records_per_hour, 1);
    assert_eq!(h.data_periods.len(), 1);
}

#[test]
fn dry_bulb_matches_raw_columns() {
    let series = parse_epw(&raw()).unwrap();
    let parsed: Vec<f64> = field_series(&series, "dry_bulb_temperature")
        .unwrap()
        .iter()
        .map(|p| p.value.unwrap())
        .collect();
    assert_eq!(parsed, raw_dry_bulb());
    assert!(parsed.iter().all(|t| (-70.0..=60.0).contains(t)));
}

#[test]
fn timestamps_strictly_increase() {
    let series = parse_epw(&raw()).unwrap();
    let stamps: Vec<_> = series.records().iter().map(|r| r.timestamp).collect();
    assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(stamps[0].hour, 0);
    assert_eq!(stamps.last().unwrap().hour, 23);
}

#[test]
fn serialize_round_trip() {
    let first = parse_epw(&raw()).unwrap();
    let bytes = serialize_epw(&first).unwrap();
    let second = parse_epw(&bytes).unwrap();
    assert_eq!(first, second);
    assert_eq!(serialize_epw(&second).unwrap(), bytes);
}

#[test]
fn march_selection_and_daily_buckets() {
    let series = parse_epw(&raw()).unwrap();
    let march = parse_period("DATE:3/1-3/31").unwrap();
    assert_eq!(hours_in_period(&series, march), 744);
    let agg = aggregate(&series, "dry_bulb_temperature", TimeStep::Daily, march).unwrap();
    assert_eq!(agg.len(), 31);
    assert!(agg.points.iter().all(|p| p.count_present == 24 && p.count_missing == 0));

    let raw = raw_dry_bulb();
    // March 1 starts after the 59 days of January and February
    let day1 = &raw[59 * 24..60 * 24];
    let mean = day1.iter().sum::<f64>() / 24.0;
    assert!((agg.points[0].stats.unwrap().mean - mean).abs() < 1e-9);
}

#[test]
fn summary_agrees_with_raw_scan() {
    let series = parse_epw(&raw()).unwrap();
    let s = summarize(&series).unwrap();
    let raw = raw_dry_bulb();
    let dry = s.field(Field::DryBulbTemperature).unwrap();
    let annual = dry.annual.unwrap();
    assert!((annual.mean - raw.iter().sum::<f64>() / raw.len() as f64).abs() < 1e-9);
    assert_eq!(annual.min, raw.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(annual.max, raw.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    assert_eq!(dry.monthly_means.len(), 12);

    let daily: Vec<f64> = raw.chunks(24).map(|d| d.iter().sum::<f64>() / 24.0).collect();
    let hottest = daily.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!((s.hottest_day.unwrap().mean_dry_bulb - hottest).abs() < 1e-9);
    assert!(s.coldest_day.unwrap().mean_dry_bulb < s.hottest_day.unwrap().mean_dry_bulb);

    let yearly = aggregate(&series, "dry_bulb_temperature", TimeStep::Monthly, PeriodRange::YEAR).unwrap();
    assert_eq!(yearly.len(), 12);
}
