//! Windowed ("locally partially linear") double machine learning.
//!
//! Observations are sorted by a conditioning variable and covered by
//! overlapping count-based windows. Each window gets a bootstrap of the
//! full cross-fitted DML estimate; window means form the raw CATE curve,
//! which is then Gaussian-smoothed, with percentile bootstrap bands.

mod smooth;

pub use smooth::{gaussian_smooth, SigmaSpec};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::schema::{
    CARBON_PRICE, DAYLIGHT_HOURS, DAY_OF_WEEK, ESTIMATED_LOAD, GAS_PRICE, HOUR, MONTH, YEAR,
};
use crate::data::{MarketTable, Technology};
use crate::dml::{cross_fit_fold_betas, kfold_split_with_rng, ols_slope, DmlTask};
use crate::error::{Error, Result};
use crate::learners::{FeatureMatrix, LearnerSpec};
use crate::stats::{bootstrap_lower, bootstrap_upper, derive_stream_seed, mean};
use crate::synth::is_truth_column;

/// Default window size (observations per boxcar window).
pub const DEFAULT_WINDOW_SIZE: usize = 10_000;
/// Default step between window starts.
pub const DEFAULT_WINDOW_STEP: usize = 1_000;
/// Default bootstrap replications per window.
pub const DEFAULT_BOOTSTRAP: usize = 100;
/// Default confidence-band coverage.
pub const DEFAULT_COVERAGE: f64 = 0.8;
/// Default observation span of one rolling temporal window (roughly two
/// financial years of half-hourly data).
pub const DEFAULT_ROLLING_SPAN: usize = 35_000;

/// One window over the rank-sorted observations: ranks `[start, end)` and
/// the median conditioning value as its center.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowSpec {
    pub start: usize,
    pub end: usize,
    pub center: f64,
}

/// Count-based window layout over a conditioning column.
#[derive(Debug, Clone, Serialize)]
pub struct WindowPlan {
    pub conditioning_col: String,
    pub window_size: usize,
    pub step: usize,
    /// table row indices sorted ascending by conditioning value, ties by
    /// timestamp order
    pub sorted_rows: Vec<usize>,
    pub windows: Vec<WindowSpec>,
    /// set when the conditioning column is constant, so window order is
    /// arbitrary
    pub tie_warning: bool,
}

/// Start ranks of windows of `size` stepping by `step` over `n` sorted
/// observations. A final window anchored at `n - size` is appended when the
/// stride does not land exactly on the end, so the top-ranked observations
/// are never excluded.
pub(crate) fn window_starts(n: usize, size: usize, step: usize) -> Vec<usize> {
    debug_assert!(n >= size && step >= 1);
    let mut starts: Vec<usize> = (0..=(n - size)).step_by(step).collect();
    if (n - size) % step != 0 {
        starts.push(n - size);
    }
    starts
}

/// Plans rank-contiguous windows of exactly `window_size` observations over
/// the non-null values of `conditioning_col`, stepping by `step` ranks.
pub fn plan_windows(
    table: &MarketTable,
    conditioning_col: &str,
    window_size: usize,
    step: usize,
) -> Result<WindowPlan> {
    if window_size < 1 || step < 1 {
        return Err(Error::invalid("window size and step must be >= 1"));
    }
    let mut rows = table.column_non_null(conditioning_col)?;
    let n = rows.len();
    if n < window_size {
        return Err(Error::InsufficientRows {
            needed: window_size,
            got: n,
            context: format!(
                "window planning over '{conditioning_col}'; use a window size of at most {n}"
            ),
        });
    }
    // stable by construction: sort_by on value only keeps timestamp order
    // for ties
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite conditioning value"));
    let values: Vec<f64> = rows.iter().map(|&(_, v)| v).collect();
    let sorted_rows: Vec<usize> = rows.into_iter().map(|(i, _)| i).collect();

    let windows = window_starts(n, window_size, step)
        .into_iter()
        .map(|start| {
            let end = start + window_size;
            WindowSpec {
                start,
                end,
                center: median_of_sorted(&values[start..end]),
            }
        })
        .collect();
    let tie_warning = values.first() == values.last();

    Ok(WindowPlan {
        conditioning_col: conditioning_col.to_string(),
        window_size,
        step,
        sorted_rows,
        windows,
        tie_warning,
    })
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Which confounders residualize the outcome and the treatment. The two
/// lists differ: the price model sees the full market context while the
/// forecast model sees only its physical drivers.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualizationMap {
    pub outcome_confounders: Vec<String>,
    pub treatment_confounders: Vec<String>,
}

impl ResidualizationMap {
    /// Standard map for a technology's generation-as-treatment analysis.
    pub fn for_technology(tech: Technology) -> Self {
        let outcome = vec![
            YEAR.to_string(),
            MONTH.to_string(),
            DAY_OF_WEEK.to_string(),
            HOUR.to_string(),
            DAYLIGHT_HOURS.to_string(),
            ESTIMATED_LOAD.to_string(),
            GAS_PRICE.to_string(),
            CARBON_PRICE.to_string(),
            tech.other_forecast_column().to_string(),
        ];
        let treatment = vec![
            MONTH.to_string(),
            HOUR.to_string(),
            DAYLIGHT_HOURS.to_string(),
            tech.capacity_column().to_string(),
        ];
        ResidualizationMap {
            outcome_confounders: outcome,
            treatment_confounders: treatment,
        }
    }

    /// Map for the penetration-as-treatment variant: the treatment model
    /// additionally sees the estimated load and the technology's own
    /// forecast, to absorb the dependencies the penetration ratio
    /// introduces.
    pub fn for_penetration_treatment(tech: Technology) -> Self {
        let outcome = ResidualizationMap::for_technology(tech).outcome_confounders;
        let treatment = vec![
            tech.capacity_column().to_string(),
            DAYLIGHT_HOURS.to_string(),
            HOUR.to_string(),
            MONTH.to_string(),
            ESTIMATED_LOAD.to_string(),
            tech.forecast_column().to_string(),
        ];
        ResidualizationMap {
            outcome_confounders: outcome,
            treatment_confounders: treatment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_confounders.is_empty() || self.treatment_confounders.is_empty() {
            return Err(Error::invalid("residualization map has an empty confounder list"));
        }
        for col in self
            .outcome_confounders
            .iter()
            .chain(self.treatment_confounders.iter())
        {
            if is_truth_column(col) {
                return Err(Error::TruthColumnLeak { column: col.clone() });
            }
        }
        Ok(())
    }
}

/// Whether nuisance models are retrained inside every bootstrap replicate
/// (the faithful, default procedure) or once per window with only the
/// residual regression bootstrapped (a fast approximation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceMode {
    PerReplicate,
    PerWindowFast,
}

/// CATE curve over the window centers with bootstrap percentile bands.
#[derive(Debug, Clone, Serialize)]
pub struct CateCurve {
    pub conditioning_col: String,
    pub coverage: f64,
    /// resolved Gaussian sigma in window-index units
    pub sigma_index: f64,
    pub centers: Vec<f64>,
    pub raw: Vec<Option<f64>>,
    pub smoothed: Vec<Option<f64>>,
    pub ci_low: Vec<Option<f64>>,
    pub ci_high: Vec<Option<f64>>,
    pub n_window: Vec<usize>,
    pub window_ranks: Vec<(usize, usize)>,
    pub failures: Vec<Option<String>>,
    /// per-window bootstrap estimates (empty for failed windows)
    pub bootstrap: Vec<Vec<f64>>,
}

impl CateCurve {
    pub fn n_windows(&self) -> usize {
        self.centers.len()
    }

    /// CSV export: `center,raw,smoothed,ci_low,ci_high,n_window`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut out = std::io::BufWriter::new(file);
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        writeln!(out, "center,raw,smoothed,ci_low,ci_high,n_window").map_err(io_err)?;
        let fmt = |v: &Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for i in 0..self.n_windows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.centers[i],
                fmt(&self.raw[i]),
                fmt(&self.smoothed[i]),
                fmt(&self.ci_low[i]),
                fmt(&self.ci_high[i]),
                self.n_window[i]
            )
            .map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }

    /// JSON export; the full bootstrap matrix is included only on request.
    pub fn to_json(&self, include_bootstrap: bool) -> String {
        if include_bootstrap {
            serde_json::to_string_pretty(self).expect("curve serializes")
        } else {
            let mut value = serde_json::to_value(self).expect("curve serializes");
            if let Some(obj) = value.as_object_mut() {
                obj.remove("bootstrap");
            }
            serde_json::to_string_pretty(&value).expect("curve serializes")
        }
    }
}

struct WindowOutcome {
    bootstrap: Vec<f64>,
    raw: f64,
    ci_low: f64,
    ci_high: f64,
}

/// Bootstrap CATE curve over a window plan (nuisances retrained per
/// replicate).
#[allow(clippy::too_many_arguments)]
pub fn estimate_cate_curve(
    table: &MarketTable,
    task: &DmlTask,
    map: &ResidualizationMap,
    plan: &WindowPlan,
    bootstrap: usize,
    coverage: f64,
    sigma: SigmaSpec,
    seed: u64,
) -> Result<CateCurve> {
    estimate_cate_curve_with_mode(
        table,
        task,
        map,
        plan,
        bootstrap,
        coverage,
        sigma,
        seed,
        NuisanceMode::PerReplicate,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_cate_curve_with_mode(
    table: &MarketTable,
    task: &DmlTask,
    map: &ResidualizationMap,
    plan: &WindowPlan,
    bootstrap: usize,
    coverage: f64,
    sigma: SigmaSpec,
    seed: u64,
    mode: NuisanceMode,
) -> Result<CateCurve> {
    if bootstrap < 1 {
        return Err(Error::invalid("bootstrap count must be >= 1"));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::invalid("coverage must be in (0, 1)"));
    }
    if plan.window_size < task.folds {
        return Err(Error::invalid(format!(
            "window size {} cannot hold {} folds",
            plan.window_size, task.folds
        )));
    }
    task.validate()?;
    map.validate()?;

    let outcome_cols: Vec<&str> = map.outcome_confounders.iter().map(String::as_str).collect();
    let treatment_cols: Vec<&str> = map
        .treatment_confounders
        .iter()
        .map(String::as_str)
        .collect();

    let results: Vec<std::result::Result<WindowOutcome, String>> = plan
        .windows
        .par_iter()
        .enumerate()
        .map(|(u, window)| {
            estimate_window(
                table,
                task,
                &outcome_cols,
                &treatment_cols,
                &plan.sorted_rows[window.start..window.end],
                bootstrap,
                coverage,
                seed,
                u as u64,
                mode,
            )
            .map_err(|e| e.to_string())
        })
        .collect();

    let n_windows = plan.windows.len();
    let mut curve = CateCurve {
        conditioning_col: plan.conditioning_col.clone(),
        coverage,
        sigma_index: 0.0,
        centers: plan.windows.iter().map(|w| w.center).collect(),
        raw: Vec::with_capacity(n_windows),
        smoothed: vec![None; n_windows],
        ci_low: Vec::with_capacity(n_windows),
        ci_high: Vec::with_capacity(n_windows),
        n_window: plan.windows.iter().map(|w| w.end - w.start).collect(),
        window_ranks: plan.windows.iter().map(|w| (w.start, w.end)).collect(),
        failures: Vec::with_capacity(n_windows),
        bootstrap: Vec::with_capacity(n_windows),
    };
    for result in results {
        match result {
            Ok(w) => {
                curve.raw.push(Some(w.raw));
                curve.ci_low.push(Some(w.ci_low));
                curve.ci_high.push(Some(w.ci_high));
                curve.failures.push(None);
                curve.bootstrap.push(w.bootstrap);
            }
            Err(reason) => {
                curve.raw.push(None);
                curve.ci_low.push(None);
                curve.ci_high.push(None);
                curve.failures.push(Some(reason));
                curve.bootstrap.push(Vec::new());
            }
        }
    }

    let valid: Vec<f64> = curve.raw.iter().flatten().copied().collect();
    curve.sigma_index = sigma.resolve(&valid);
    smooth_valid_segments(&curve.raw, curve.sigma_index, &mut curve.smoothed);
    Ok(curve)
}

/// Applies Gaussian smoothing to each contiguous run of present estimates,
/// leaving gaps in place.
fn smooth_valid_segments(raw: &[Option<f64>], sigma: f64, out: &mut [Option<f64>]) {
    let mut i = 0;
    while i < raw.len() {
        if raw[i].is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i < raw.len() && raw[i].is_some() {
            i += 1;
        }
        let segment: Vec<f64> = raw[start..i].iter().map(|v| v.unwrap()).collect();
        for (k, v) in gaussian_smooth(&segment, sigma).into_iter().enumerate() {
            out[start + k] = Some(v);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate_window(
    table: &MarketTable,
    task: &DmlTask,
    outcome_cols: &[&str],
    treatment_cols: &[&str],
    rows: &[usize],
    bootstrap: usize,
    coverage: f64,
    seed: u64,
    window_index: u64,
    mode: NuisanceMode,
) -> Result<WindowOutcome> {
    let h = rows.len();
    let outcome = table.gather(&task.outcome_col, rows)?;
    let treatment = table.gather(&task.treatment_col, rows)?;
    let a_out = FeatureMatrix::from_table(table, outcome_cols, rows)?;
    let a_trt = FeatureMatrix::from_table(table, treatment_cols, rows)?;

    let mut betas = Vec::with_capacity(bootstrap);
    match mode {
        NuisanceMode::PerReplicate => {
            for b in 0..bootstrap {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, window_index, b as u64));
                let resample: Vec<usize> = (0..h).map(|_| rng.random_range(0..h)).collect();
                let y_b: Vec<f64> = resample.iter().map(|&i| outcome[i]).collect();
                let t_b: Vec<f64> = resample.iter().map(|&i| treatment[i]).collect();
                let a_out_b = a_out.select_rows(&resample);
                let a_trt_b = a_trt.select_rows(&resample);
                let folds = kfold_split_with_rng(h, task.folds, &mut rng)?;
                let (fold_betas, _) = cross_fit_fold_betas(
                    &a_out_b,
                    &a_trt_b,
                    &y_b,
                    &t_b,
                    &task.learner_outcome,
                    &task.learner_treatment,
                    &folds,
                )?;
                betas.push(mean(&fold_betas));
            }
        }
        NuisanceMode::PerWindowFast => {
            // Nuisances fitted once on the original window; only the
            // residual regression is bootstrapped. Cheaper but narrower
            // bands, since nuisance uncertainty is ignored.
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, window_index, u64::MAX));
            let folds = kfold_split_with_rng(h, task.folds, &mut rng)?;
            let y_resid =
                crate::dml::residualize(&a_out, &outcome, &task.learner_outcome, &folds)?;
            let t_resid =
                crate::dml::residualize(&a_trt, &treatment, &task.learner_treatment, &folds)?;
            for b in 0..bootstrap {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, window_index, b as u64));
                let resample: Vec<usize> = (0..h).map(|_| rng.random_range(0..h)).collect();
                let y_b: Vec<f64> = resample.iter().map(|&i| y_resid[i]).collect();
                let t_b: Vec<f64> = resample.iter().map(|&i| t_resid[i]).collect();
                betas.push(ols_slope(&y_b, &t_b)?);
            }
        }
    }

    let raw = mean(&betas);
    let mut sorted = betas.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - coverage) / 2.0;
    Ok(WindowOutcome {
        raw,
        ci_low: bootstrap_lower(&sorted, alpha),
        ci_high: bootstrap_upper(&sorted, alpha),
        bootstrap: betas,
    })
}

/// Per-window raw association: OLS slope (with intercept) of the raw
/// outcome on the raw treatment, with no residualization. `None` where the
/// window has no treatment variation.
pub fn observational_mean_curve(
    table: &MarketTable,
    outcome_col: &str,
    treatment_col: &str,
    plan: &WindowPlan,
) -> Result<Vec<Option<f64>>> {
    let outcome = table.column(outcome_col)?;
    let treatment = table.column(treatment_col)?;
    Ok(plan
        .windows
        .iter()
        .map(|w| {
            let mut t = Vec::with_capacity(w.end - w.start);
            let mut y = Vec::with_capacity(w.end - w.start);
            for &row in &plan.sorted_rows[w.start..w.end] {
                if let (Some(ti), Some(yi)) = (treatment[row], outcome[row]) {
                    t.push(ti);
                    y.push(yi);
                }
            }
            crate::stats::ols_slope_with_intercept(&t, &y)
        })
        .collect())
}

/// One temporal slice of the rolling analysis.
#[derive(Debug, Clone, Serialize)]
pub struct TemporalCateWindow {
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    /// window label: the end date (YYYY-MM-DD)
    pub label: String,
    pub curve: CateCurve,
}

/// Sliding-window temporal analysis: chronological spans of
/// `span` observations stepping by `step`, each analysed with its own
/// conditioning-ordered window plan.
#[allow(clippy::too_many_arguments)]
pub fn rolling_temporal_cate(
    table: &MarketTable,
    task: &DmlTask,
    map: &ResidualizationMap,
    conditioning_col: &str,
    span: usize,
    step: usize,
    inner_window: usize,
    inner_step: usize,
    bootstrap: usize,
    coverage: f64,
    sigma: SigmaSpec,
    seed: u64,
) -> Result<Vec<TemporalCateWindow>> {
    let n = table.n_rows();
    if span < 1 || step < 1 {
        return Err(Error::invalid("rolling span and step must be >= 1"));
    }
    if n < span {
        return Err(Error::InsufficientRows {
            needed: span,
            got: n,
            context: "rolling temporal analysis".to_string(),
        });
    }
    let mut out = Vec::new();
    for (w, start) in window_starts(n, span, step).into_iter().enumerate() {
        let rows: Vec<usize> = (start..start + span).collect();
        let sub = table.subset(&rows)?;
        let plan = plan_windows(&sub, conditioning_col, inner_window, inner_step)?;
        let window_seed = derive_stream_seed(seed, 0x524F_4C4C, w as u64);
        let curve = estimate_cate_curve(
            &sub, task, map, &plan, bootstrap, coverage, sigma, window_seed,
        )?;
        let start_time = *sub.timestamps().first().expect("non-empty window");
        let end_time = *sub.timestamps().last().expect("non-empty window");
        out.push(TemporalCateWindow {
            start_time,
            end_time,
            label: end_time.format("%Y-%m-%d").to_string(),
            curve,
        });
    }
    Ok(out)
}

/// Penetration-as-treatment variant: the treatment is the predicted
/// penetration (percent of estimated load) of `tech`, with the extended
/// treatment-confounder set, conditioned on the same penetration column.
#[allow(clippy::too_many_arguments)]
pub fn penetration_treatment_variant(
    table: &MarketTable,
    price_col: &str,
    tech: Technology,
    learner_outcome: LearnerSpec,
    learner_treatment: LearnerSpec,
    folds: usize,
    plan: &WindowPlan,
    bootstrap: usize,
    coverage: f64,
    sigma: SigmaSpec,
    seed: u64,
) -> Result<CateCurve> {
    let pen_col = tech.penetration_column();
    if !table.has_column(pen_col) {
        return Err(Error::UnknownColumn {
            column: format!("{pen_col} (derive features first)"),
        });
    }
    let task = DmlTask {
        outcome_col: price_col.to_string(),
        treatment_col: pen_col.to_string(),
        confounder_cols: Vec::new(),
        learner_outcome,
        learner_treatment,
        folds,
        seed,
    };
    let map = ResidualizationMap::for_penetration_treatment(tech);
    estimate_cate_curve(table, &task, &map, plan, bootstrap, coverage, sigma, seed)
}
