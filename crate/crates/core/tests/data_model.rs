//! Data-model integration checks: CSV round trips, an independent solar
//! oracle for daylight hours, and a Monte Carlo check of the binned CI.

use std::io::Write;

use chrono::{Datelike, TimeZone, Timelike, Utc};
use meritdml::data::{bin_mean_ci, daylight_hours, derive_features, ingest_csv, Location, Schema};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const HEADER: &str = "timestamp,apx_price,nordpool_price,intraday_price,actual_load,estimated_load,gas_price,carbon_price,wind_capacity,wind_forecast,solar_capacity,solar_forecast";

#[test]
fn ingest_write_ingest_is_identity() {
    // awkward values on purpose: many significant digits, negatives,
    // sub-normals, empty cells
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "{HEADER}").unwrap();
    let mut ts = Utc.with_ymd_and_hms(2019, 5, 1, 0, 0, 0).unwrap();
    let mut state = 0x9E3779B97F4A7C15u64;
    for i in 0..200 {
        let mut vals = Vec::new();
        for j in 0..11 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            if (state >> 5) % 17 == 0 {
                vals.push(String::new()); // null cell
            } else {
                let v = ((state % 1_000_000_007) as f64) * 1.234567890123e-4
                    - if j == 0 { 30.0 } else { 0.0 };
                // keep capacities above forecasts so no row is excluded
                let v = match j {
                    7 => v.abs() + 100_000.0,  // wind capacity
                    8 => v.abs() % 90_000.0,   // wind forecast
                    9 => v.abs() + 100_000.0,  // solar capacity
                    10 => v.abs() % 90_000.0,  // solar forecast
                    _ => v,
                };
                vals.push(format!("{v}"));
            }
        }
        writeln!(f, "{},{}", ts.format("%Y-%m-%dT%H:%M:%SZ"), vals.join(",")).unwrap();
        ts += chrono::Duration::minutes(30 * (1 + (i % 3 == 0) as i64));
    }
    f.flush().unwrap();

    let t1 = ingest_csv(f.path(), &Schema::canonical()).unwrap();
    let out = tempfile::NamedTempFile::new().unwrap();
    t1.write_csv(out.path()).unwrap();
    let t2 = ingest_csv(out.path(), &Schema::canonical()).unwrap();

    assert_eq!(t1.n_rows(), t2.n_rows());
    assert_eq!(t1.timestamps(), t2.timestamps());
    for name in t1.column_names() {
        let c1 = t1.column(name).unwrap();
        let c2 = t2.column(name).unwrap();
        for i in 0..t1.n_rows() {
            match (c1[i], c2[i]) {
                (Some(a), Some(b)) => assert!(
                    a.to_bits() == b.to_bits(),
                    "column {name} row {i}: {a} != {b}"
                ),
                (None, None) => {}
                other => panic!("null mismatch in {name} row {i}: {other:?}"),
            }
        }
    }
}

/// Independent daylight oracle: counts the minutes of the day where the
/// solar elevation (from declination, equation of time, and hour angle)
/// clears -0.833 degrees. A different computation route from the
/// sunrise-equation closed form used by the library.
fn daylight_by_minute_enumeration(year: i32, month: u32, day: u32, lat_deg: f64, lon_deg: f64) -> f64 {
    let date = Utc.with_ymd_and_hms(year, month, day, 0, 0, 0).unwrap();
    let leap = date.date_naive().leap_year();
    let year_days = if leap { 366.0 } else { 365.0 };
    let lat = lat_deg.to_radians();
    let mut minutes_up = 0u32;
    for minute in 0..(24 * 60) {
        let hour = minute as f64 / 60.0;
        let gamma = 2.0 * std::f64::consts::PI / year_days
            * (date.ordinal() as f64 - 1.0 + (hour - 12.0) / 24.0);
        let decl = 0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin()
            - 0.006758 * (2.0 * gamma).cos()
            + 0.000907 * (2.0 * gamma).sin()
            - 0.002697 * (3.0 * gamma).cos()
            + 0.00148 * (3.0 * gamma).sin();
        let eqtime = 229.18
            * (0.000075 + 0.001868 * gamma.cos()
                - 0.032077 * gamma.sin()
                - 0.014615 * (2.0 * gamma).cos()
                - 0.040849 * (2.0 * gamma).sin());
        let tst = minute as f64 + eqtime + 4.0 * lon_deg;
        let ha = (tst / 4.0 - 180.0).to_radians();
        let sin_el = lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos();
        if sin_el.asin().to_degrees() > -0.833 {
            minutes_up += 1;
        }
    }
    minutes_up as f64 / 60.0
}

#[test]
fn daylight_matches_minute_enumeration_oracle() {
    let london = Location::LONDON;
    for (y, m, d) in [(2021, 3, 20), (2021, 6, 21), (2021, 12, 21), (2019, 9, 23), (2020, 2, 29)] {
        let ts = Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap();
        let lib = daylight_hours(ts, london);
        let oracle =
            daylight_by_minute_enumeration(y, m, d, london.latitude_deg, london.longitude_deg);
        assert!(
            (lib - oracle).abs() <= 0.1,
            "{y}-{m}-{d}: library {lib} vs oracle {oracle}"
        );
    }
    // frozen oracle values for the two benchmark dates
    let equinox = daylight_hours(Utc.with_ymd_and_hms(2021, 3, 20, 12, 0, 0).unwrap(), london);
    assert!((equinox - 12.0).abs() <= 0.2);
    let solstice = daylight_hours(Utc.with_ymd_and_hms(2021, 6, 21, 12, 0, 0).unwrap(), london);
    assert!((solstice - 16.6).abs() <= 0.2);
}

#[test]
fn binned_ci_half_width_matches_normal_theory() {
    // 10,000 draws from N(50, 5^2) in a single bin: the 95% CI half-width
    // must be close to 1.96 * 5 / sqrt(10000) = 0.098
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let normal = Normal::new(50.0, 5.0).unwrap();
    let n = 10_000;
    let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let timestamps: Vec<_> = (0..n)
        .map(|i| t0 + chrono::Duration::minutes(30 * i as i64))
        .collect();
    let mut cols = indexmap::IndexMap::new();
    cols.insert(
        "price".to_string(),
        (0..n).map(|_| Some(normal.sample(&mut rng))).collect::<Vec<_>>(),
    );
    cols.insert("pen".to_string(), vec![Some(5.0); n]);
    let table =
        meritdml::data::MarketTable::new(timestamps, cols, meritdml::data::Provenance::default())
            .unwrap();
    let bins = bin_mean_ci(&table, "price", "pen", 10.0, 0.95).unwrap();
    assert_eq!(bins.len(), 1);
    let half = (bins[0].ci_high.unwrap() - bins[0].ci_low.unwrap()) / 2.0;
    let expect = 1.96 * 5.0 / 100.0;
    assert!(
        (half - expect).abs() <= 0.1 * expect,
        "half-width {half} vs {expect}"
    );
}

#[test]
fn derived_features_roundtrip_through_csv() {
    // derive features, write, re-ingest: derived columns ride along and
    // recomputing penetration from raw columns matches stored values
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "{HEADER}").unwrap();
    let t0 = Utc.with_ymd_and_hms(2022, 7, 1, 0, 0, 0).unwrap();
    for i in 0..48 {
        let ts = t0 + chrono::Duration::minutes(30 * i);
        writeln!(
            f,
            "{},{},60,58,31000,{},85,22,26000,{},15000,{}",
            ts.format("%Y-%m-%dT%H:%M:%SZ"),
            45.0 + i as f64 * 0.25,
            29000.0 + (i % 7) as f64 * 13.0,
            7000.0 + (i % 11) as f64 * 101.0,
            900.0 + (i % 5) as f64 * 17.0,
        )
        .unwrap();
    }
    f.flush().unwrap();
    let table = ingest_csv(f.path(), &Schema::canonical()).unwrap();
    let derived = derive_features(&table, Location::LONDON).unwrap();

    let out = tempfile::NamedTempFile::new().unwrap();
    derived.write_csv(out.path()).unwrap();
    let back = ingest_csv(out.path(), &Schema::canonical()).unwrap();
    assert!(meritdml::data::ingest::penetration_consistent(&back, "wind_forecast", "wind_penetration").unwrap());
    assert!(meritdml::data::ingest::penetration_consistent(&back, "solar_forecast", "solar_penetration").unwrap());

    // spot-check hour/day_of_week of the first row (2022-07-01 is a Friday)
    let ts0 = derived.timestamps()[0];
    assert_eq!(ts0.hour(), 0);
    assert_eq!(derived.column("day_of_week").unwrap()[0], Some(4.0));
}
