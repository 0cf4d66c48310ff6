//! Calendar and penetration features derived from the raw columns.

use chrono::{Datelike, Timelike};

use crate::error::Result;

use super::daylight::{daylight_hours, Location};
use super::schema::{
    DAYLIGHT_HOURS, DAY_OF_WEEK, ESTIMATED_LOAD, HOUR, MONTH, SOLAR_FORECAST, SOLAR_PENETRATION,
    WIND_FORECAST, WIND_PENETRATION, YEAR,
};
use super::table::MarketTable;

/// Appends all derived feature columns to a copy of `table`:
/// year, month (1-12), day_of_week (Monday=0), hour (0-23),
/// daylight_hours at `location`, and the wind/solar penetration
/// percentages (forecast / estimated load * 100).
///
/// Penetration is null wherever the load is null or non-positive, or the
/// forecast is null; such rows are counted in the provenance instead of
/// being dropped.
pub fn derive_features(table: &MarketTable, location: Location) -> Result<MarketTable> {
    let mut out = table.clone();
    let n = out.n_rows();

    let mut year = Vec::with_capacity(n);
    let mut month = Vec::with_capacity(n);
    let mut day_of_week = Vec::with_capacity(n);
    let mut hour = Vec::with_capacity(n);
    let mut daylight = Vec::with_capacity(n);
    for &ts in table.timestamps() {
        year.push(Some(ts.year() as f64));
        month.push(Some(ts.month() as f64));
        day_of_week.push(Some(ts.weekday().num_days_from_monday() as f64));
        hour.push(Some(ts.hour() as f64));
        daylight.push(Some(daylight_hours(ts, location)));
    }
    out.insert_column(YEAR, year)?;
    out.insert_column(MONTH, month)?;
    out.insert_column(DAY_OF_WEEK, day_of_week)?;
    out.insert_column(HOUR, hour)?;
    out.insert_column(DAYLIGHT_HOURS, daylight)?;

    for (forecast_col, pen_col) in [(WIND_FORECAST, WIND_PENETRATION), (SOLAR_FORECAST, SOLAR_PENETRATION)] {
        let forecast = table.column(forecast_col)?.to_vec();
        let load = table.column(ESTIMATED_LOAD)?.to_vec();
        let mut nulls = 0usize;
        let pen: Vec<Option<f64>> = forecast
            .iter()
            .zip(&load)
            .map(|(f, l)| match (f, l) {
                (Some(f), Some(l)) if *l > 0.0 => Some(f / l * 100.0),
                _ => {
                    nulls += 1;
                    None
                }
            })
            .collect();
        out.insert_column(pen_col, pen)?;
        out.provenance_mut().count_null_feature(pen_col, nulls);
    }
    Ok(out)
}
