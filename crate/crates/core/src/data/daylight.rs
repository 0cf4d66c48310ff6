//! Daylight duration from the NOAA solar-position approximation.

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

/// Geographic reference point for daylight-hours derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl Location {
    /// London; the default reference point for UK-wide series.
    pub const LONDON: Location = Location {
        latitude_deg: 51.5074,
        longitude_deg: -0.1278,
    };
}

impl Default for Location {
    fn default() -> Self {
        Location::LONDON
    }
}

/// Solar declination [rad] for a fractional year angle [rad].
fn declination(gamma: f64) -> f64 {
    0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin() - 0.006758 * (2.0 * gamma).cos()
        + 0.000907 * (2.0 * gamma).sin()
        - 0.002697 * (3.0 * gamma).cos()
        + 0.00148 * (3.0 * gamma).sin()
}

/// Hours of daylight on the date of `ts` at `loc`.
///
/// Sunrise/sunset are taken at a solar zenith of 90.833 degrees
/// (atmospheric refraction plus the solar disc radius). Polar night and
/// midnight sun clamp to 0 and 24 hours respectively. Longitude does not
/// enter the duration, only the (UTC) date does.
pub fn daylight_hours(ts: DateTime<Utc>, loc: Location) -> f64 {
    let year_days = if ts.date_naive().leap_year() { 366.0 } else { 365.0 };
    let gamma = 2.0 * std::f64::consts::PI / year_days * (ts.ordinal() as f64 - 1.0 + 0.5);
    let decl = declination(gamma);
    let lat = loc.latitude_deg.to_radians();
    let zenith = 90.833_f64.to_radians();
    let cos_ha = (zenith.cos() - lat.sin() * decl.sin()) / (lat.cos() * decl.cos());
    if cos_ha >= 1.0 {
        0.0
    } else if cos_ha <= -1.0 {
        24.0
    } else {
        2.0 * cos_ha.acos().to_degrees() / 15.0
    }
}
