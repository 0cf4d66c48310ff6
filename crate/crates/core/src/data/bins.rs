//! Binned means with normal-approximation confidence intervals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{inverse_normal_cdf, mean, sample_sd};

use super::table::MarketTable;

/// One bin of the summary: interval `[lo, hi)` (the top bin is closed),
/// mean of the value column and its normal CI, and the observation count.
/// Empty bins are emitted with `count = 0` and null mean/CI.
#[derive(Debug, Clone, Serialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub count: usize,
}

/// Means of `value_col` over fixed-width bins of `bin_col`.
///
/// Bins start at `floor(min / bin_width) * bin_width` and cover the observed
/// range in `bin_width` increments. The CI is `mean ± z * sd / sqrt(count)`
/// with `z` from the two-sided normal quantile at `confidence`.
pub fn bin_mean_ci(
    table: &MarketTable,
    value_col: &str,
    bin_col: &str,
    bin_width: f64,
    confidence: f64,
) -> Result<Vec<BinSummary>> {
    if bin_width <= 0.0 {
        return Err(Error::invalid("bin_width must be positive"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence must be in (0, 1)"));
    }
    let rows = table.rows_with_all(&[value_col, bin_col])?;
    if rows.is_empty() {
        return Err(Error::EmptyData {
            context: format!("no rows with both '{value_col}' and '{bin_col}'"),
        });
    }
    let values = table.gather(value_col, &rows)?;
    let keys = table.gather(bin_col, &rows)?;

    let min = keys.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = keys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let origin = (min / bin_width).floor() * bin_width;
    let n_bins = (((max - origin) / bin_width).floor() as usize) + 1;

    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (key, value) in keys.iter().zip(&values) {
        let idx = (((key - origin) / bin_width).floor() as usize).min(n_bins - 1);
        buckets[idx].push(*value);
    }

    let z = inverse_normal_cdf(0.5 + confidence / 2.0);
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(i, bucket)| {
            let lo = origin + i as f64 * bin_width;
            let hi = lo + bin_width;
            if bucket.is_empty() {
                BinSummary {
                    lo,
                    hi,
                    mean: None,
                    ci_low: None,
                    ci_high: None,
                    count: 0,
                }
            } else {
                let m = mean(&bucket);
                let half = if bucket.len() < 2 {
                    0.0
                } else {
                    z * sample_sd(&bucket) / (bucket.len() as f64).sqrt()
                };
                BinSummary {
                    lo,
                    hi,
                    mean: Some(m),
                    ci_low: Some(m - half),
                    ci_high: Some(m + half),
                    count: bucket.len(),
                }
            }
        })
        .collect())
}
