//! Locally weighted second-order polynomial regression on a fitting grid.
//!
//! Each fitting point gets its own linear model in the expanded feature
//! space [1, r, h, r^2, r.h, h^2], estimated from observations weighted by
//! a tri-cube kernel with an adaptive bandwidth (the 30th percentile of
//! distances to the fitting point). Conditional means use closed-form
//! weighted least squares; conditional quantiles minimize the weighted
//! pinball loss by iteratively reweighted least squares.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::schema::HOUR;
use crate::data::MarketTable;
use crate::error::{Error, Result};
use crate::stats::percentile_linear;

/// Distance percentile that sets the adaptive bandwidth.
const BANDWIDTH_PERCENTILE: f64 = 0.3;
/// Minimum weighted observations for an identifiable second-order fit.
const MIN_EFFECTIVE_N: usize = 6;
/// Condition-number estimate above which a local system is rejected.
const MAX_CONDITION: f64 = 1e12;

/// Quadratic feature expansion of a fitting-space point.
pub fn expand_features(r: f64, h: f64) -> [f64; 6] {
    [1.0, r, h, r * r, r * h, h * h]
}

/// Tri-cube kernel: (1 - d^3)^3 for d < 1, zero beyond.
pub fn tricube_weight(d: f64) -> f64 {
    debug_assert!(d >= 0.0);
    if d < 1.0 {
        let c = 1.0 - d * d * d;
        c * c * c
    } else {
        0.0
    }
}

/// One observation in normalized fitting space.
#[derive(Debug, Clone, Copy)]
pub struct Obs {
    pub r: f64,
    pub h: f64,
    pub value: f64,
}

impl Obs {
    fn distance_to(&self, center: [f64; 2]) -> f64 {
        let dr = self.r - center[0];
        let dh = self.h - center[1];
        (dr * dr + dh * dh).sqrt()
    }
}

/// Adaptive bandwidth: the 30th percentile (linear interpolation) of
/// Euclidean distances from all observations to `center`. Errors when it
/// degenerates to zero, i.e. at least 30% of the points coincide with the
/// center.
pub fn adaptive_bandwidth(center: [f64; 2], data: &[Obs]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData {
            context: "adaptive_bandwidth on empty data".to_string(),
        });
    }
    let distances: Vec<f64> = data.iter().map(|o| o.distance_to(center)).collect();
    let h = percentile_linear(&distances, BANDWIDTH_PERCENTILE);
    if h <= 0.0 {
        return Err(Error::DegenerateBandwidth {
            r: center[0],
            h: center[1],
        });
    }
    Ok(h)
}

/// A fitted local model: coefficients over [1, r, h, r^2, r.h, h^2].
#[derive(Debug, Clone, Serialize)]
pub struct LocalModel {
    pub center: [f64; 2],
    pub beta: [f64; 6],
    pub bandwidth: f64,
    /// number of observations with nonzero kernel weight
    pub effective_n: usize,
    /// nominal level for quantile fits, `None` for mean fits
    pub quantile: Option<f64>,
}

impl LocalModel {
    pub fn predict(&self, r: f64, h: f64) -> f64 {
        let z = expand_features(r, h);
        z.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    pub fn predict_at_center(&self) -> f64 {
        self.predict(self.center[0], self.center[1])
    }
}

/// Kernel weights of all observations relative to a center, plus their sum
/// (the local data density).
fn kernel_weights(center: [f64; 2], data: &[Obs], bandwidth: f64) -> (Vec<f64>, f64) {
    let mut sum = 0.0;
    let weights = data
        .iter()
        .map(|o| {
            let w = tricube_weight(o.distance_to(center) / bandwidth);
            sum += w;
            w
        })
        .collect();
    (weights, sum)
}

fn weighted_design(data: &[Obs], weights: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    // keep only nonzero-weight rows so far-away points can never perturb
    // the solution, not even at machine precision
    let kept: Vec<(&Obs, f64)> = data
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(o, &w)| (o, w))
        .collect();
    let n = kept.len();
    let mut design = vec![0.0f64; n * 6];
    let mut rhs = Vec::with_capacity(n);
    for (i, (obs, w)) in kept.into_iter().enumerate() {
        let sw = w.sqrt();
        for (j, z) in expand_features(obs.r, obs.h).into_iter().enumerate() {
            design[j * n + i] = sw * z;
        }
        rhs.push(sw * obs.value);
    }
    (design, rhs, n)
}

/// In-place Householder QR least squares on a column-major `n x p` design.
/// Overwrites `a` with the R factor (and reflector tails) and `b` with
/// Q'b, then back-substitutes. Returns the solution together with a
/// condition estimate from the diagonal of R, or `None` on a zero pivot.
fn householder_ls(a: &mut [f64], n: usize, p: usize, b: &mut [f64]) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(a.len(), n * p);
    debug_assert_eq!(b.len(), n);
    if n < p {
        return None;
    }
    let mut diag = vec![0.0f64; p];
    for k in 0..p {
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let col_k = &mut head[k * n + k..];
        let norm = col_k.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if col_k[0] >= 0.0 { -norm } else { norm };
        // reflector v = x - alpha e_k, stored in place in the column
        col_k[0] -= alpha;
        let vtv: f64 = col_k.iter().map(|v| v * v).sum();
        if vtv == 0.0 {
            return None;
        }
        let inv = 2.0 / vtv;
        for j in 0..p - k - 1 {
            let col_j = &mut tail[j * n + k..j * n + n];
            let dot: f64 = col_k.iter().zip(col_j.iter()).map(|(v, x)| v * x).sum();
            let scale = dot * inv;
            for (x, v) in col_j.iter_mut().zip(col_k.iter()) {
                *x -= scale * v;
            }
        }
        let b_tail = &mut b[k..];
        let dot: f64 = col_k.iter().zip(b_tail.iter()).map(|(v, x)| v * x).sum();
        let scale = dot * inv;
        for (x, v) in b_tail.iter_mut().zip(col_k.iter()) {
            *x -= scale * v;
        }
        diag[k] = alpha;
    }
    let diag_max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let diag_min = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    let cond = if diag_min == 0.0 { f64::INFINITY } else { diag_max / diag_min };

    // back substitution: diagonal in `diag`, element (k, j) of R for k < j
    // lives at a[j * n + k]
    let mut beta = vec![0.0f64; p];
    for k in (0..p).rev() {
        let mut acc = b[k];
        for j in k + 1..p {
            acc -= a[j * n + k] * beta[j];
        }
        beta[k] = acc / diag[k];
    }
    Some((beta, cond))
}

/// Least squares with the rank/conditioning guard applied.
fn solve_ls(a: &mut [f64], n: usize, p: usize, b: &mut [f64], center: [f64; 2]) -> Result<Vec<f64>> {
    match householder_ls(a, n, p, b) {
        Some((beta, cond)) if cond.is_finite() && cond <= MAX_CONDITION => Ok(beta),
        Some((_, cond)) => Err(Error::RankDeficient {
            r: center[0],
            h: center[1],
            cond,
        }),
        None => Err(Error::RankDeficient {
            r: center[0],
            h: center[1],
            cond: f64::INFINITY,
        }),
    }
}

/// Closed-form weighted least squares at one fitting point. Weights are
/// tri-cube at the adaptive bandwidth.
pub fn fit_local_mean(center: [f64; 2], data: &[Obs]) -> Result<LocalModel> {
    let bandwidth = adaptive_bandwidth(center, data)?;
    let (weights, _) = kernel_weights(center, data, bandwidth);
    fit_mean_with(center, data, &weights, bandwidth)
}

fn fit_mean_with(
    center: [f64; 2],
    data: &[Obs],
    weights: &[f64],
    bandwidth: f64,
) -> Result<LocalModel> {
    let (mut design, mut rhs, effective_n) = weighted_design(data, weights);
    if effective_n < MIN_EFFECTIVE_N {
        return Err(Error::InsufficientRows {
            needed: MIN_EFFECTIVE_N,
            got: effective_n,
            context: format!("local fit at ({}, {})", center[0], center[1]),
        });
    }
    let beta = solve_ls(&mut design, effective_n, 6, &mut rhs, center)?;
    Ok(LocalModel {
        center,
        beta: beta_array(&beta),
        bandwidth,
        effective_n,
        quantile: None,
    })
}

fn beta_array(beta: &[f64]) -> [f64; 6] {
    let mut out = [0.0; 6];
    out.copy_from_slice(&beta[..6]);
    out
}

/// Options for the iteratively reweighted least-squares pinball minimizer.
#[derive(Debug, Clone, Copy)]
pub struct QuantileFitOptions {
    /// residual-smoothing floor in the IRLS weights
    pub epsilon: f64,
    /// stop once the objective decrease falls below this
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for QuantileFitOptions {
    fn default() -> Self {
        QuantileFitOptions {
            epsilon: 1e-6,
            tolerance: 1e-8,
            max_iter: 200,
        }
    }
}

/// Weighted pinball loss sum_i w_i rho_q(y_i - z_i'beta).
pub fn pinball_loss(q: f64, residual: f64) -> f64 {
    residual * (q - if residual < 0.0 { 1.0 } else { 0.0 })
}

/// The epsilon-smoothed objective the IRLS iteration actually minimizes:
/// `sum_i w_i [rho_q(e_i) - (eps/2) ln(eps + |e_i|)]`. The majorize-minimize
/// step below decreases it monotonically, which makes the decrease a sound
/// convergence signal.
fn smoothed_objective(q: f64, epsilon: f64, y: &[f64], w: &[f64], fitted: &[f64]) -> f64 {
    y.iter()
        .zip(w)
        .zip(fitted)
        .map(|((yi, wi), fi)| {
            let e = yi - fi;
            wi * (pinball_loss(q, e) - 0.5 * epsilon * (epsilon + e.abs()).ln())
        })
        .sum()
}

/// Minimizes the weighted pinball loss over an arbitrary design (row-major
/// `n x p` slices) by iteratively reweighted least squares on the
/// epsilon-smoothed objective. Each step is the majorize-minimize update of
/// Hunter & Lange — symmetric weights `w / (eps + |e|)` with a `(2q - 1)`
/// shifted target — which decreases the smoothed loss monotonically.
/// Columns with no variation are fine as long as the design has full column
/// rank (e.g. a lone intercept column).
pub fn fit_weighted_quantile(
    design_rows: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    q: f64,
    opts: QuantileFitOptions,
) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("quantile level must be in (0, 1)"));
    }
    let n = design_rows.len();
    if n != y.len() || n != weights.len() {
        return Err(Error::invalid("design, target and weights disagree in length"));
    }
    if n == 0 {
        return Err(Error::EmptyData {
            context: "quantile fit on empty design".to_string(),
        });
    }
    let p = design_rows[0].len();
    if design_rows.iter().any(|row| row.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }

    let center = [f64::NAN, f64::NAN]; // only used in error messages here
    let mut scratch_a = vec![0.0f64; n * p];
    let mut scratch_b = vec![0.0f64; n];
    let mut solve_weighted = |irls_w: &[f64], target: &[f64]| -> Result<Vec<f64>> {
        for (i, row) in design_rows.iter().enumerate() {
            let sw = irls_w[i].sqrt();
            for j in 0..p {
                scratch_a[j * n + i] = sw * row[j];
            }
            scratch_b[i] = sw * target[i];
        }
        solve_ls(&mut scratch_a, n, p, &mut scratch_b, center)
    };
    let fitted_values = |beta: &[f64]| -> Vec<f64> {
        design_rows
            .iter()
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    };

    // start from the weighted mean fit
    let mut beta = solve_weighted(weights, y)?;
    let mut fitted = fitted_values(&beta);
    let mut best = beta.clone();
    let mut best_obj = smoothed_objective(q, opts.epsilon, y, weights, &fitted);
    let mut prev_obj = best_obj;
    let mut last_decrease = f64::INFINITY;
    let shift = 2.0 * q - 1.0;
    let mut irls_w = vec![0.0f64; n];
    let mut target = vec![0.0f64; n];

    for _ in 0..opts.max_iter {
        for i in 0..n {
            let spread = opts.epsilon + (y[i] - fitted[i]).abs();
            irls_w[i] = weights[i] / spread;
            target[i] = y[i] + shift * spread;
        }
        beta = solve_weighted(&irls_w, &target)?;
        fitted = fitted_values(&beta);
        let obj = smoothed_objective(q, opts.epsilon, y, weights, &fitted);
        last_decrease = prev_obj - obj;
        prev_obj = obj;
        if obj < best_obj {
            best_obj = obj;
            best = beta.clone();
        }
        // the tolerance is applied to the objective's own scale so the stop
        // rule behaves the same for 100 rows or 100,000
        if last_decrease < opts.tolerance * (1.0 + obj.abs()) {
            return Ok(best);
        }
    }
    Err(Error::NonConvergence {
        max_iter: opts.max_iter,
        last_decrease,
    })
}

/// Local quantile fit at one fitting point with tri-cube weights at the
/// adaptive bandwidth.
pub fn fit_local_quantile(center: [f64; 2], data: &[Obs], q: f64) -> Result<LocalModel> {
    fit_local_quantile_with(center, data, q, QuantileFitOptions::default())
}

pub fn fit_local_quantile_with(
    center: [f64; 2],
    data: &[Obs],
    q: f64,
    opts: QuantileFitOptions,
) -> Result<LocalModel> {
    let bandwidth = adaptive_bandwidth(center, data)?;
    let (weights, _) = kernel_weights(center, data, bandwidth);
    fit_quantile_with(center, data, &weights, bandwidth, q, opts)
}

fn fit_quantile_with(
    center: [f64; 2],
    data: &[Obs],
    weights: &[f64],
    bandwidth: f64,
    q: f64,
    opts: QuantileFitOptions,
) -> Result<LocalModel> {
    let kept: Vec<(Obs, f64)> = data
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(o, &w)| (*o, w))
        .collect();
    let effective_n = kept.len();
    if effective_n < MIN_EFFECTIVE_N {
        return Err(Error::InsufficientRows {
            needed: MIN_EFFECTIVE_N,
            got: effective_n,
            context: format!("local quantile fit at ({}, {})", center[0], center[1]),
        });
    }
    let mut design = Vec::with_capacity(effective_n);
    let mut y = Vec::with_capacity(effective_n);
    let mut w = Vec::with_capacity(effective_n);
    for (obs, wi) in &kept {
        design.push(expand_features(obs.r, obs.h).to_vec());
        y.push(obs.value);
        w.push(*wi);
    }
    let beta = fit_weighted_quantile(&design, &y, &w, q, opts)?;
    Ok(LocalModel {
        center,
        beta: beta_array(&beta),
        bandwidth,
        effective_n,
        quantile: Some(q),
    })
}

/// Regular grid of fitting points over the normalized unit square.
#[derive(Debug, Clone, Serialize)]
pub struct FittingGrid {
    pub rows: usize,
    pub cols: usize,
    /// (r, h) points, row-major over (h, r)
    pub points: Vec<[f64; 2]>,
}

impl FittingGrid {
    /// `cols` points along the renewable-level axis crossed with `rows`
    /// points along the hour axis, both spanning [0, 1].
    pub fn regular(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid("fitting grid needs at least 2x2 points"));
        }
        let mut points = Vec::with_capacity(rows * cols);
        for hi in 0..rows {
            let h = hi as f64 / (rows - 1) as f64;
            for ri in 0..cols {
                let r = ri as f64 / (cols - 1) as f64;
                points.push([r, h]);
            }
        }
        Ok(FittingGrid { rows, cols, points })
    }
}

impl Default for FittingGrid {
    /// 576 fitting points arranged in a 24 x 24 grid.
    fn default() -> Self {
        FittingGrid::regular(24, 24).expect("default grid dims are valid")
    }
}

/// Min-max normalization bounds for the two fitting-space axes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Normalization {
    pub level_min: f64,
    pub level_max: f64,
    pub hour_min: f64,
    pub hour_max: f64,
}

impl Normalization {
    fn from_data(levels: &[f64], hours: &[f64]) -> Result<Self> {
        let (lmin, lmax) = min_max(levels);
        let (hmin, hmax) = min_max(hours);
        if lmax <= lmin {
            return Err(Error::invalid("level column has no variation to normalize"));
        }
        if hmax <= hmin {
            return Err(Error::invalid("hour column has no variation to normalize"));
        }
        Ok(Normalization {
            level_min: lmin,
            level_max: lmax,
            hour_min: hmin,
            hour_max: hmax,
        })
    }

    pub fn to_unit(&self, level: f64, hour: f64) -> (f64, f64) {
        (
            (level - self.level_min) / (self.level_max - self.level_min),
            (hour - self.hour_min) / (self.hour_max - self.hour_min),
        )
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridKind {
    Mean,
    Quantile { q: f64 },
}

/// Result for one fitting point: either a model or a recorded failure
/// reason, plus the local data density (sum of kernel weights).
#[derive(Debug, Clone, Serialize)]
pub struct GridPointFit {
    pub center: [f64; 2],
    pub model: Option<LocalModel>,
    pub failure: Option<String>,
    pub density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalFitGrid {
    pub grid: FittingGrid,
    pub kind: GridKind,
    pub normalization: Normalization,
    pub points: Vec<GridPointFit>,
}

/// Fits one local model per grid point over `(level_col, hour)` against
/// `value_col`. Point-level failures are recorded, never propagated, so a
/// sparse corner cannot abort the whole surface.
pub fn fit_grid(
    table: &MarketTable,
    value_col: &str,
    level_col: &str,
    kind: GridKind,
    grid: &FittingGrid,
) -> Result<LocalFitGrid> {
    if let GridKind::Quantile { q } = kind {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("quantile level must be in (0, 1)"));
        }
    }
    let rows = table.rows_with_all(&[value_col, level_col, HOUR])?;
    if rows.is_empty() {
        return Err(Error::EmptyData {
            context: format!("no rows with '{value_col}', '{level_col}' and '{HOUR}'"),
        });
    }
    let levels = table.gather(level_col, &rows)?;
    let hours = table.gather(HOUR, &rows)?;
    let values = table.gather(value_col, &rows)?;
    let normalization = Normalization::from_data(&levels, &hours)?;

    let data: Vec<Obs> = (0..rows.len())
        .map(|i| {
            let (r, h) = normalization.to_unit(levels[i], hours[i]);
            Obs {
                r,
                h,
                value: values[i],
            }
        })
        .collect();

    let points: Vec<GridPointFit> = grid
        .points
        .par_iter()
        .map(|&center| fit_grid_point(center, &data, kind))
        .collect();

    Ok(LocalFitGrid {
        grid: grid.clone(),
        kind,
        normalization,
        points,
    })
}

fn fit_grid_point(center: [f64; 2], data: &[Obs], kind: GridKind) -> GridPointFit {
    let density = match adaptive_bandwidth(center, data) {
        Ok(bw) => kernel_weights(center, data, bw).1,
        Err(_) => 0.0,
    };
    let fit = match kind {
        GridKind::Mean => fit_local_mean(center, data),
        GridKind::Quantile { q } => fit_local_quantile(center, data, q),
    };
    match fit {
        Ok(model) => GridPointFit {
            center,
            model: Some(model),
            failure: None,
            density,
        },
        Err(err) => GridPointFit {
            center,
            model: None,
            failure: Some(err.to_string()),
            density,
        },
    }
}

impl LocalFitGrid {
    /// Prediction at each fitting point (`None` where the point failed).
    pub fn predictions(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.model.as_ref().map(LocalModel::predict_at_center))
            .collect()
    }

    /// Fitting points where a lower-quantile surface predicts above an
    /// upper-quantile surface. Crossings are reported, not corrected.
    pub fn crossing_flags(&self, upper: &LocalFitGrid) -> Result<Vec<bool>> {
        if self.points.len() != upper.points.len() {
            return Err(Error::invalid("grids have different point counts"));
        }
        Ok(self
            .predictions()
            .iter()
            .zip(upper.predictions())
            .map(|(lo, hi)| match (lo, hi) {
                (Some(lo), Some(hi)) => lo > &hi,
                _ => false,
            })
            .collect())
    }

    /// CSV export: one row per fitting point with
    /// `r,h,prediction,bandwidth,effective_n,density,quantile`.
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
        writeln!(out, "r,h,prediction,bandwidth,effective_n,density,quantile").map_err(io_err)?;
        for p in &self.points {
            let (pred, bw, en) = match &p.model {
                Some(m) => (
                    format!("{}", m.predict_at_center()),
                    format!("{}", m.bandwidth),
                    format!("{}", m.effective_n),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            let q = match self.kind {
                GridKind::Quantile { q } => format!("{q}"),
                GridKind::Mean => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.center[0], p.center[1], pred, bw, en, p.density, q
            )
            .map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }
}
