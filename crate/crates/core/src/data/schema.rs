//! Canonical column names for half-hourly market tables, plus the schema
//! map used to reconcile divergent source headers at ingestion time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamp column (ISO-8601, UTC, 30-minute resolution).
pub const TIMESTAMP: &str = "timestamp";
/// Day-ahead APX price [GBP/MWh].
pub const APX_PRICE: &str = "apx_price";
/// Day-ahead NordPool price [GBP/MWh].
pub const NORDPOOL_PRICE: &str = "nordpool_price";
/// Intraday (within-day) price [GBP/MWh].
pub const INTRADAY_PRICE: &str = "intraday_price";
/// Transmission system demand outturn [MW].
pub const ACTUAL_LOAD: &str = "actual_load";
/// Estimated electricity load [MW].
pub const ESTIMATED_LOAD: &str = "estimated_load";
/// NBP natural gas price [GBP/MWh].
pub const GAS_PRICE: &str = "gas_price";
/// CO2 permit price [GBP/tCO2e].
pub const CARBON_PRICE: &str = "carbon_price";
/// Installed wind capacity [MW].
pub const WIND_CAPACITY: &str = "wind_capacity";
/// Predicted wind production [MW].
pub const WIND_FORECAST: &str = "wind_forecast";
/// Installed solar capacity [MW].
pub const SOLAR_CAPACITY: &str = "solar_capacity";
/// Predicted solar production [MW].
pub const SOLAR_FORECAST: &str = "solar_forecast";

/// All required source columns, in canonical order.
pub const REQUIRED_COLUMNS: [&str; 12] = [
    TIMESTAMP,
    APX_PRICE,
    NORDPOOL_PRICE,
    INTRADAY_PRICE,
    ACTUAL_LOAD,
    ESTIMATED_LOAD,
    GAS_PRICE,
    CARBON_PRICE,
    WIND_CAPACITY,
    WIND_FORECAST,
    SOLAR_CAPACITY,
    SOLAR_FORECAST,
];

// Derived feature columns appended by `derive_features`.
pub const YEAR: &str = "year";
pub const MONTH: &str = "month";
pub const DAY_OF_WEEK: &str = "day_of_week";
pub const HOUR: &str = "hour";
pub const DAYLIGHT_HOURS: &str = "daylight_hours";
pub const WIND_PENETRATION: &str = "wind_penetration";
pub const SOLAR_PENETRATION: &str = "solar_penetration";

pub const DERIVED_COLUMNS: [&str; 7] = [
    YEAR,
    MONTH,
    DAY_OF_WEEK,
    HOUR,
    DAYLIGHT_HOURS,
    WIND_PENETRATION,
    SOLAR_PENETRATION,
];

/// Renewable technology selector for analyses that come in a wind and a
/// solar flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technology {
    Wind,
    Solar,
}

impl Technology {
    pub fn forecast_column(self) -> &'static str {
        match self {
            Technology::Wind => WIND_FORECAST,
            Technology::Solar => SOLAR_FORECAST,
        }
    }

    pub fn capacity_column(self) -> &'static str {
        match self {
            Technology::Wind => WIND_CAPACITY,
            Technology::Solar => SOLAR_CAPACITY,
        }
    }

    pub fn penetration_column(self) -> &'static str {
        match self {
            Technology::Wind => WIND_PENETRATION,
            Technology::Solar => SOLAR_PENETRATION,
        }
    }

    /// The other technology's forecast, which enters the price model as a
    /// confounder.
    pub fn other_forecast_column(self) -> &'static str {
        match self {
            Technology::Wind => SOLAR_FORECAST,
            Technology::Solar => WIND_FORECAST,
        }
    }
}

impl std::fmt::Display for Technology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Technology::Wind => write!(f, "wind"),
            Technology::Solar => write!(f, "solar"),
        }
    }
}

/// Which price series an analysis targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceColumn {
    Apx,
    Nordpool,
    Intraday,
}

impl PriceColumn {
    pub fn column(self) -> &'static str {
        match self {
            PriceColumn::Apx => APX_PRICE,
            PriceColumn::Nordpool => NORDPOOL_PRICE,
            PriceColumn::Intraday => INTRADAY_PRICE,
        }
    }
}

/// Maps canonical column names onto the headers actually present in a
/// source file. Unmapped canonical names are looked up verbatim.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    /// canonical name -> source header
    #[serde(default)]
    pub renames: BTreeMap<String, String>,
    /// source headers to skip entirely (e.g. free-text annotation columns)
    #[serde(default)]
    pub ignored: Vec<String>,
}

impl Schema {
    pub fn canonical() -> Self {
        Schema::default()
    }

    pub fn with_rename(mut self, canonical: &str, source_header: &str) -> Self {
        self.renames.insert(canonical.to_string(), source_header.to_string());
        self
    }

    pub fn with_ignored(mut self, source_header: &str) -> Self {
        self.ignored.push(source_header.to_string());
        self
    }

    /// Source header expected for a canonical column.
    pub fn source_header<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map(String::as_str).unwrap_or(canonical)
    }

    /// Resolves every required column to its position in `headers`.
    pub fn resolve_required(&self, headers: &[String]) -> Result<Vec<(String, usize)>> {
        REQUIRED_COLUMNS
            .iter()
            .map(|canonical| {
                let wanted = self.source_header(canonical);
                headers
                    .iter()
                    .position(|h| h == wanted)
                    .map(|idx| (canonical.to_string(), idx))
                    .ok_or_else(|| Error::MissingColumn {
                        column: canonical.to_string(),
                    })
            })
            .collect()
    }
}
