//! CSV ingestion with schema remapping and per-reason exclusion tallies.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::schema::{Schema, SOLAR_CAPACITY, SOLAR_FORECAST, TIMESTAMP, WIND_CAPACITY, WIND_FORECAST};
use super::table::{MarketTable, Provenance};

const HALF_HOUR_SECS: i64 = 30 * 60;

/// Parses a CSV file into a [`MarketTable`].
///
/// Every required column must be reachable through `schema`; additional
/// numeric columns are carried along under their source header. Rows that
/// fail to parse or violate a record invariant are excluded and tallied in
/// the table's provenance, never dropped silently.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<MarketTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|source| match source.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(source.to_string()),
            },
            _ => Error::Csv {
                path: path.display().to_string(),
                source,
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let required = schema.resolve_required(&headers)?;
    let ts_idx = required
        .iter()
        .find(|(name, _)| name == TIMESTAMP)
        .map(|&(_, idx)| idx)
        .expect("timestamp is required");

    // Extra columns: everything not claimed by the required map and not
    // explicitly ignored.
    let claimed: Vec<usize> = required.iter().map(|&(_, idx)| idx).collect();
    let extras: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(idx, name)| !claimed.contains(idx) && !schema.ignored.iter().any(|i| i == *name))
        .map(|(idx, name)| (name.clone(), idx))
        .collect();

    // (canonical name, source index) for all carried value columns.
    let value_cols: Vec<(String, usize)> = required
        .iter()
        .filter(|(name, _)| name != TIMESTAMP)
        .cloned()
        .chain(extras)
        .collect();

    let mut provenance = Provenance {
        source: path.display().to_string(),
        ..Provenance::default()
    };
    let mut timestamps: Vec<DateTime<Utc>> = Vec::new();
    let mut columns: IndexMap<String, Vec<Option<f64>>> = value_cols
        .iter()
        .map(|(name, _)| (name.clone(), Vec::new()))
        .collect();

    'rows: for record in reader.records() {
        let record = record.map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?;
        provenance.rows_read += 1;

        let ts = match parse_timestamp(record.get(ts_idx).unwrap_or("")) {
            Some(ts) => ts,
            None => {
                provenance.count_excluded("unparseable_timestamp");
                continue;
            }
        };
        if let Some(&last) = timestamps.last() {
            if ts <= last {
                provenance.count_excluded("non_monotonic_timestamp");
                continue;
            }
        }

        let mut parsed: Vec<Option<f64>> = Vec::with_capacity(value_cols.len());
        for (name, idx) in &value_cols {
            let raw = record.get(*idx).unwrap_or("").trim();
            if raw.is_empty() {
                parsed.push(None);
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(Some(v)),
                _ => {
                    provenance.count_excluded(&format!("unparseable_value:{name}"));
                    continue 'rows;
                }
            }
        }

        if let Some(reason) = invariant_violation(&value_cols, &parsed) {
            provenance.count_excluded(reason);
            continue;
        }

        if let Some(&last) = timestamps.last() {
            if (ts - last).num_seconds() != HALF_HOUR_SECS {
                provenance.timestamp_gaps += 1;
            }
        }
        timestamps.push(ts);
        for ((name, _), value) in value_cols.iter().zip(parsed) {
            columns.get_mut(name).expect("column exists").push(value);
        }
    }

    provenance.rows_kept = timestamps.len();
    if timestamps.is_empty() {
        return Err(Error::EmptyData {
            context: format!(
                "'{}': {} rows read, all excluded",
                path.display(),
                provenance.rows_read
            ),
        });
    }
    MarketTable::new(timestamps, columns, provenance)
}

/// Record-level invariants from the variable schema: capacities and
/// forecasts are non-negative and a forecast never exceeds the installed
/// capacity of the same technology.
fn invariant_violation(
    cols: &[(String, usize)],
    parsed: &[Option<f64>],
) -> Option<&'static str> {
    let get = |wanted: &str| -> Option<f64> {
        cols.iter()
            .position(|(name, _)| name == wanted)
            .and_then(|i| parsed[i])
    };
    for col in [WIND_CAPACITY, WIND_FORECAST, SOLAR_CAPACITY, SOLAR_FORECAST] {
        if let Some(v) = get(col) {
            if v < 0.0 {
                return Some("negative_capacity_or_forecast");
            }
        }
    }
    for (forecast, capacity) in [(WIND_FORECAST, WIND_CAPACITY), (SOLAR_FORECAST, SOLAR_CAPACITY)] {
        if let (Some(f), Some(c)) = (get(forecast), get(capacity)) {
            if f > c {
                return Some("forecast_exceeds_capacity");
            }
        }
    }
    None
}

/// Accepts RFC-3339 as well as naive `YYYY-MM-DD[T ]HH:MM[:SS]` timestamps,
/// the latter interpreted as UTC.
fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

/// Checks that percentages recomputed from raw columns match stored
/// penetration values. Used by tests and the ingest command's self-check.
pub fn penetration_consistent(table: &MarketTable, forecast: &str, penetration: &str) -> Result<bool> {
    let f = table.column(forecast)?;
    let load = table.column(super::schema::ESTIMATED_LOAD)?;
    let p = table.column(penetration)?;
    for i in 0..table.n_rows() {
        match (f[i], load[i], p[i]) {
            (Some(f), Some(l), Some(p)) if l > 0.0 => {
                let expect = f / l * 100.0;
                let scale = expect.abs().max(1.0);
                if (expect - p).abs() > 1e-9 * scale {
                    return Ok(false);
                }
            }
            (_, Some(l), Some(_)) if l <= 0.0 => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::schema::REQUIRED_COLUMNS;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "timestamp,apx_price,nordpool_price,intraday_price,actual_load,estimated_load,gas_price,carbon_price,wind_capacity,wind_forecast,solar_capacity,solar_forecast";

    fn row(ts: &str, price: &str) -> String {
        format!("{ts},{price},50,49,30000,29000,80,20,25000,9000,14000,1000")
    }

    #[test]
    fn parse_failure_excludes_and_tallies() {
        let content = format!(
            "{HEADER}\n{}\n{}\n{}\n{}\n",
            row("2020-01-01T00:00:00Z", "42.5"),
            row("2020-01-01T00:30:00Z", "not-a-price"),
            row("2020-01-01T01:00:00Z", "41.0"),
            row("2020-01-01T01:30:00Z", "40.0"),
        );
        let f = write_csv(&content);
        let table = ingest_csv(f.path(), &Schema::canonical()).unwrap();
        assert_eq!(table.n_rows(), 3);
        assert_eq!(table.provenance().total_excluded(), 1);
        assert_eq!(
            table.provenance().excluded.get("unparseable_value:apx_price"),
            Some(&1)
        );
        // one half-hour gap where the bad row was dropped
        assert_eq!(table.provenance().timestamp_gaps, 1);
    }

    #[test]
    fn renamed_headers_yield_identical_table() {
        let canonical = format!(
            "{HEADER}\n{}\n{}\n",
            row("2020-01-01T00:00:00Z", "42.5"),
            row("2020-01-01T00:30:00Z", "43.5"),
        );
        let renamed = canonical
            .replace("timestamp,", "Date,")
            .replace(",apx_price,", ",APX £/MWh,");
        let f1 = write_csv(&canonical);
        let f2 = write_csv(&renamed);
        let t1 = ingest_csv(f1.path(), &Schema::canonical()).unwrap();
        let t2 = ingest_csv(
            f2.path(),
            &Schema::canonical()
                .with_rename(TIMESTAMP, "Date")
                .with_rename(super::super::schema::APX_PRICE, "APX £/MWh"),
        )
        .unwrap();
        assert_eq!(t1.timestamps(), t2.timestamps());
        for name in REQUIRED_COLUMNS.iter().skip(1) {
            assert_eq!(t1.column(name).unwrap(), t2.column(name).unwrap());
        }
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let f = write_csv("timestamp,apx_price\n2020-01-01T00:00:00Z,42.0\n");
        match ingest_csv(f.path(), &Schema::canonical()) {
            Err(Error::MissingColumn { .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn zero_valid_rows_is_empty_data_error() {
        let content = format!("{HEADER}\n{}\n", row("garbage", "42.0"));
        let f = write_csv(&content);
        match ingest_csv(f.path(), &Schema::canonical()) {
            Err(Error::EmptyData { .. }) => {}
            other => panic!("expected empty-data error, got {other:?}"),
        }
    }

    #[test]
    fn forecast_above_capacity_is_excluded() {
        let content = format!(
            "{HEADER}\n{}\n2020-01-01T00:30:00Z,42,50,49,30000,29000,80,20,25000,26000,14000,1000\n",
            row("2020-01-01T00:00:00Z", "42.0"),
        );
        let f = write_csv(&content);
        let table = ingest_csv(f.path(), &Schema::canonical()).unwrap();
        assert_eq!(table.n_rows(), 1);
        assert_eq!(
            table.provenance().excluded.get("forecast_exceeds_capacity"),
            Some(&1)
        );
    }

    #[test]
    fn out_of_order_rows_are_excluded() {
        let content = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row("2020-01-01T01:00:00Z", "42.0"),
            row("2020-01-01T00:30:00Z", "41.0"),
            row("2020-01-01T01:30:00Z", "43.0"),
        );
        let f = write_csv(&content);
        let table = ingest_csv(f.path(), &Schema::canonical()).unwrap();
        assert_eq!(table.n_rows(), 2);
        assert_eq!(
            table.provenance().excluded.get("non_monotonic_timestamp"),
            Some(&1)
        );
    }
}
