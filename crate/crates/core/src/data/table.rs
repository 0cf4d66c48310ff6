//! Column-oriented table of half-hourly market records.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};

use super::schema::TIMESTAMP;

/// Per-source bookkeeping of how many rows survived ingestion and why the
/// rest were excluded. No row is ever dropped silently.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Provenance {
    pub source: String,
    pub rows_read: usize,
    pub rows_kept: usize,
    /// exclusion reason -> count
    pub excluded: IndexMap<String, usize>,
    /// count of 30-minute grid gaps observed between consecutive kept rows
    pub timestamp_gaps: usize,
    /// degenerate rows that yielded null derived features, keyed by feature
    pub null_features: IndexMap<String, usize>,
}

impl Provenance {
    pub fn count_excluded(&mut self, reason: &str) {
        *self.excluded.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn count_null_feature(&mut self, feature: &str, n: usize) {
        if n > 0 {
            *self.null_features.entry(feature.to_string()).or_insert(0) += n;
        }
    }

    pub fn total_excluded(&self) -> usize {
        self.excluded.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("provenance serializes")
    }
}

/// Immutable column-oriented dataset. The timestamp column is typed; every
/// other column is a nullable f64 array of equal length.
#[derive(Debug, Clone)]
pub struct MarketTable {
    timestamps: Vec<DateTime<Utc>>,
    columns: IndexMap<String, Vec<Option<f64>>>,
    provenance: Provenance,
}

impl MarketTable {
    /// Builds a table from parsed columns. All columns must have the same
    /// length as the timestamp vector and timestamps must be strictly
    /// increasing.
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        columns: IndexMap<String, Vec<Option<f64>>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = timestamps.len();
        if n == 0 {
            return Err(Error::EmptyData {
                context: format!("no valid rows from '{}'", provenance.source),
            });
        }
        for (name, col) in &columns {
            if col.len() != n {
                return Err(Error::invalid(format!(
                    "column '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        Ok(MarketTable {
            timestamps,
            columns,
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn {
                column: name.to_string(),
            })
    }

    /// Non-null values of a column paired with their row indices.
    pub fn column_non_null(&self, name: &str) -> Result<Vec<(usize, f64)>> {
        Ok(self
            .column(name)?
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (i, x)))
            .collect())
    }

    /// Adds or replaces a column. Used by feature derivation and synthetic
    /// generation; tables handed to estimators are treated as immutable.
    pub fn insert_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.n_rows() {
            return Err(Error::invalid(format!(
                "column '{name}' has {} rows, expected {}",
                values.len(),
                self.n_rows()
            )));
        }
        self.columns.insert(name.to_string(), values);
        Ok(())
    }

    pub(crate) fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    /// Row indices where every listed column is non-null.
    pub fn rows_with_all(&self, columns: &[&str]) -> Result<Vec<usize>> {
        let cols: Vec<&[Option<f64>]> = columns
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<_>>()?;
        Ok((0..self.n_rows())
            .filter(|&i| cols.iter().all(|col| col[i].is_some()))
            .collect())
    }

    /// Dense values of `name` at the given row indices. Errors if any of the
    /// requested rows is null.
    pub fn gather(&self, name: &str, rows: &[usize]) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        rows.iter()
            .map(|&i| {
                col[i].ok_or_else(|| {
                    Error::invalid(format!("null value in column '{name}' at row {i}"))
                })
            })
            .collect()
    }

    /// Copies the selected rows into a new table, preserving column order.
    /// Indices must be strictly increasing so timestamps stay ordered.
    pub fn subset(&self, rows: &[usize]) -> Result<MarketTable> {
        let timestamps: Vec<_> = rows.iter().map(|&i| self.timestamps[i]).collect();
        let mut columns = IndexMap::with_capacity(self.columns.len());
        for (name, col) in &self.columns {
            columns.insert(name.clone(), rows.iter().map(|&i| col[i]).collect());
        }
        let mut provenance = self.provenance.clone();
        provenance.rows_kept = rows.len();
        MarketTable::new(timestamps, columns, provenance)
    }

    /// Writes the table as CSV: RFC-3339 timestamps, shortest-roundtrip
    /// floats, empty cells for nulls. Re-ingesting the output reproduces
    /// the numeric columns bit for bit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut out = std::io::BufWriter::new(file);
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };

        let mut header = vec![TIMESTAMP.to_string()];
        header.extend(self.columns.keys().cloned());
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;

        for i in 0..self.n_rows() {
            let mut fields =
                vec![self.timestamps[i].to_rfc3339_opts(SecondsFormat::Secs, true)];
            for col in self.columns.values() {
                fields.push(match col[i] {
                    Some(v) => format!("{v}"),
                    None => String::new(),
                });
            }
            writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }
}
