//! Synthetic data-generating processes with analytically known treatment
//! effects and nuisance functions. These tables are the ground-truth oracle
//! for every estimator in the crate.
//!
//! The generated tables are market-shaped so they flow through the same
//! pipeline as ingested data: the outcome is `apx_price`, the treatment is
//! `wind_forecast`, the single confounder plays the role of `gas_price`,
//! and the load proxy fills `estimated_load`. The conditioning variable
//! `x = treatment / load` mimics a penetration fraction. Three extra truth
//! columns record the exact effect and nuisance values per row; a schema
//! guard keeps them out of every estimator input.

use chrono::{TimeZone, Utc};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::schema::{
    ACTUAL_LOAD, APX_PRICE, CARBON_PRICE, ESTIMATED_LOAD, GAS_PRICE, INTRADAY_PRICE,
    NORDPOOL_PRICE, SOLAR_CAPACITY, SOLAR_FORECAST, WIND_CAPACITY, WIND_FORECAST,
};
use crate::data::table::Provenance;
use crate::data::MarketTable;
use crate::error::{Error, Result};

/// Exact per-row treatment effect beta(x).
pub const TRUE_BETA_COL: &str = "true_beta_at_x";
/// Exact outcome-nuisance value f(a).
pub const TRUE_F_COL: &str = "f_a";
/// Exact treatment-nuisance value g(a).
pub const TRUE_G_COL: &str = "g_a";
/// Conditioning variable (penetration-like fraction of load).
pub const CONDITIONING_COL: &str = "x";

/// Outcome column used by generated scenarios.
pub const OUTCOME_COL: &str = APX_PRICE;
/// Treatment column used by generated scenarios.
pub const TREATMENT_COL: &str = WIND_FORECAST;
/// Confounder column used by generated scenarios.
pub const CONFOUNDER_COL: &str = GAS_PRICE;

/// True if a column carries generator-internal truth and must never be fed
/// to a learner or effect regression.
pub fn is_truth_column(name: &str) -> bool {
    matches!(name, TRUE_BETA_COL | TRUE_F_COL | TRUE_G_COL)
}

/// Treatment-effect curve beta(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum EffectFn {
    Constant { c: f64 },
    Linear { a: f64, b: f64 },
    /// beta(x) = a * (x - x0)^2 + c, the vertex at (x0, c).
    UShape { a: f64, c: f64, x0: f64 },
}

impl EffectFn {
    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            EffectFn::Constant { c } => c,
            EffectFn::Linear { a, b } => a * x + b,
            EffectFn::UShape { a, c, x0 } => a * (x - x0) * (x - x0) + c,
        }
    }
}

/// Functional family for the nuisances f (outcome model) and g (treatment
/// model). Both scale with the confounding strength `c`:
///
/// * linear:           g(a) = c.a            f(a) = 3c.a
/// * smooth-nonlinear: g(a) = c(a + 0.3 sin 2pi a)   f(a) = c(3a + sin 2pi a)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceFamily {
    Linear,
    SmoothNonlinear,
}

impl NuisanceFamily {
    fn g(&self, strength: f64, a: f64) -> f64 {
        match self {
            NuisanceFamily::Linear => strength * a,
            NuisanceFamily::SmoothNonlinear => {
                strength * (a + 0.3 * (2.0 * std::f64::consts::PI * a).sin())
            }
        }
    }

    fn f(&self, strength: f64, a: f64) -> f64 {
        match self {
            NuisanceFamily::Linear => 3.0 * strength * a,
            NuisanceFamily::SmoothNonlinear => {
                strength * (3.0 * a + (2.0 * std::f64::consts::PI * a).sin())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub effect: EffectFn,
    pub confounding_strength: f64,
    pub noise_sd_outcome: f64,
    pub noise_sd_treatment: f64,
    pub nuisance: NuisanceFamily,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("scenario n must be >= 2"));
        }
        if !(self.confounding_strength >= 0.0) {
            return Err(Error::invalid("confounding_strength must be >= 0"));
        }
        if !(self.noise_sd_outcome >= 0.0) || !(self.noise_sd_treatment >= 0.0) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(())
    }
}

/// Exact treatment effect at a conditioning value.
pub fn true_cate(spec: &ScenarioSpec, x: f64) -> f64 {
    spec.effect.evaluate(x)
}

/// Draws a synthetic market table from the scenario. Deterministic given
/// the seed.
///
/// Row model, with a ~ U(0,1), eta ~ N(0, sd_t), eps ~ N(0, sd_o):
///
/// ```text
/// t    = g(a) + eta
/// load = 1 + 0.25 a
/// x    = t / load
/// p    = beta(x) t + f(a) + eps
/// ```
pub fn generate(spec: &ScenarioSpec) -> Result<MarketTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let eta = Normal::new(0.0, spec.noise_sd_treatment).map_err(|e| Error::invalid(e.to_string()))?;
    let eps = Normal::new(0.0, spec.noise_sd_outcome).map_err(|e| Error::invalid(e.to_string()))?;

    let n = spec.n;
    let mut a_col = Vec::with_capacity(n);
    let mut t_col = Vec::with_capacity(n);
    let mut load_col = Vec::with_capacity(n);
    let mut x_col = Vec::with_capacity(n);
    let mut p_col = Vec::with_capacity(n);
    let mut beta_col = Vec::with_capacity(n);
    let mut f_col = Vec::with_capacity(n);
    let mut g_col = Vec::with_capacity(n);

    for _ in 0..n {
        let a: f64 = rng.random();
        let eta = eta.sample(&mut rng);
        let eps = eps.sample(&mut rng);
        let g = spec.nuisance.g(spec.confounding_strength, a);
        let f = spec.nuisance.f(spec.confounding_strength, a);
        let t = g + eta;
        let load = 1.0 + 0.25 * a;
        let x = t / load;
        let beta = spec.effect.evaluate(x);
        let p = beta * t + f + eps;

        a_col.push(Some(a));
        t_col.push(Some(t));
        load_col.push(Some(load));
        x_col.push(Some(x));
        p_col.push(Some(p));
        beta_col.push(Some(beta));
        f_col.push(Some(f));
        g_col.push(Some(g));
    }

    let t0 = Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap();
    let timestamps = (0..n)
        .map(|i| t0 + chrono::Duration::minutes(30 * i as i64))
        .collect();

    let mut columns: IndexMap<String, Vec<Option<f64>>> = IndexMap::new();
    columns.insert(APX_PRICE.to_string(), p_col.clone());
    columns.insert(NORDPOOL_PRICE.to_string(), p_col.clone());
    columns.insert(INTRADAY_PRICE.to_string(), p_col);
    columns.insert(ACTUAL_LOAD.to_string(), load_col.clone());
    columns.insert(ESTIMATED_LOAD.to_string(), load_col);
    columns.insert(GAS_PRICE.to_string(), a_col);
    columns.insert(CARBON_PRICE.to_string(), vec![Some(0.0); n]);
    columns.insert(WIND_CAPACITY.to_string(), vec![Some(1000.0); n]);
    columns.insert(WIND_FORECAST.to_string(), t_col);
    columns.insert(SOLAR_CAPACITY.to_string(), vec![Some(10.0); n]);
    columns.insert(SOLAR_FORECAST.to_string(), vec![Some(0.0); n]);
    columns.insert(CONDITIONING_COL.to_string(), x_col);
    columns.insert(TRUE_BETA_COL.to_string(), beta_col);
    columns.insert(TRUE_F_COL.to_string(), f_col);
    columns.insert(TRUE_G_COL.to_string(), g_col);

    let provenance = Provenance {
        source: format!("synthetic(seed={})", spec.seed),
        rows_read: n,
        rows_kept: n,
        ..Provenance::default()
    };
    MarketTable::new(timestamps, columns, provenance)
}
