//! Partially linear double machine learning with K-fold cross-fitting:
//! residualize outcome and treatment on confounders with held-out learners,
//! regress residuals fold by fold, and average the fold slopes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::MarketTable;
use crate::error::{Error, Result};
use crate::learners::{train, FeatureMatrix, LearnerSpec};
use crate::synth::is_truth_column;

/// Minimum rows per fold for a usable nuisance fit.
const MIN_ROWS_PER_FOLD: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct DmlTask {
    pub outcome_col: String,
    pub treatment_col: String,
    pub confounder_cols: Vec<String>,
    pub learner_outcome: LearnerSpec,
    pub learner_treatment: LearnerSpec,
    pub folds: usize,
    pub seed: u64,
}

impl DmlTask {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        for col in [&self.outcome_col, &self.treatment_col] {
            if self.confounder_cols.contains(col) {
                return Err(Error::invalid(format!(
                    "'{col}' cannot be both a confounder and the outcome/treatment"
                )));
            }
        }
        for col in std::iter::once(&self.outcome_col)
            .chain(std::iter::once(&self.treatment_col))
            .chain(self.confounder_cols.iter())
        {
            if is_truth_column(col) {
                return Err(Error::TruthColumnLeak { column: col.clone() });
            }
        }
        self.learner_outcome.validate()?;
        self.learner_treatment.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_rows: usize,
    pub slope: f64,
    pub outcome_residual_variance: f64,
    pub treatment_residual_variance: f64,
}

/// The averaged treatment-effect estimate with its per-fold components.
#[derive(Debug, Clone, Serialize)]
pub struct AteEstimate {
    pub beta_hat: f64,
    pub fold_betas: Vec<f64>,
    pub n_used: usize,
    pub folds: Vec<FoldDiagnostics>,
}

impl AteEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Partitions `0..n` into `k` disjoint index sets whose sizes differ by at
/// most one. The permutation is drawn from a seeded RNG, so the split is
/// deterministic given `(n, k, seed)`.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kfold_split_with_rng(n, k, &mut rng)
}

pub fn kfold_split_with_rng(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("folds must be >= 2"));
    }
    if n < k {
        return Err(Error::InsufficientRows {
            needed: k,
            got: n,
            context: "k-fold split".to_string(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        folds.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(folds)
}

/// Cross-fitted residuals: entry `i` is `target[i]` minus the prediction of
/// a model trained on every fold except the one containing row `i`.
pub fn residualize(
    confounders: &FeatureMatrix,
    target: &[f64],
    learner: &LearnerSpec,
    folds: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let n = target.len();
    let mut residuals = vec![f64::NAN; n];
    for (fold_idx, fold) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fold_idx)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let x_train = confounders.select_rows(&train_rows);
        let y_train: Vec<f64> = train_rows.iter().map(|&i| target[i]).collect();
        let model = train(learner, &x_train, &y_train).map_err(|source| Error::FoldFailure {
            fold: fold_idx,
            source: Box::new(source),
        })?;
        let x_test = confounders.select_rows(fold);
        let preds = model.predict(&x_test).map_err(|source| Error::FoldFailure {
            fold: fold_idx,
            source: Box::new(source),
        })?;
        for (&row, pred) in fold.iter().zip(preds) {
            residuals[row] = target[row] - pred;
        }
    }
    Ok(residuals)
}

/// Table-level residualization over the rows where the target and every
/// confounder are non-null.
pub fn residualize_column(
    table: &MarketTable,
    target_col: &str,
    confounder_cols: &[&str],
    learner: &LearnerSpec,
    folds_k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut needed = vec![target_col];
    needed.extend_from_slice(confounder_cols);
    let rows = table.rows_with_all(&needed)?;
    let x = FeatureMatrix::from_table(table, confounder_cols, &rows)?;
    let y = table.gather(target_col, &rows)?;
    let folds = kfold_split(rows.len(), folds_k, seed)?;
    residualize(&x, &y, learner, &folds)
}

/// No-intercept OLS of the outcome residuals on the treatment residuals:
/// `(t't)^-1 t'y`. Errors when the treatment residuals carry essentially no
/// variation (treatment fully explained by the confounders).
pub fn ols_slope(y_resid: &[f64], t_resid: &[f64]) -> Result<f64> {
    if y_resid.len() != t_resid.len() || y_resid.len() < 2 {
        return Err(Error::invalid("residual vectors must have equal length >= 2"));
    }
    let tt: f64 = t_resid.iter().map(|t| t * t).sum();
    if tt < 1e-12 {
        return Err(Error::NoTreatmentVariation { tt });
    }
    let ty: f64 = t_resid.iter().zip(y_resid).map(|(t, y)| t * y).sum();
    Ok(ty / tt)
}

/// One full cross-fitting pass over pre-extracted vectors: split, train the
/// two nuisance learners per fold, residualize, and average the per-fold
/// slopes. Shared by the global ATE and the windowed bootstrap.
pub(crate) fn cross_fit_fold_betas(
    outcome_confounders: &FeatureMatrix,
    treatment_confounders: &FeatureMatrix,
    outcome: &[f64],
    treatment: &[f64],
    learner_outcome: &LearnerSpec,
    learner_treatment: &LearnerSpec,
    folds: &[Vec<usize>],
) -> Result<(Vec<f64>, Vec<FoldDiagnostics>)> {
    let y_resid = residualize(outcome_confounders, outcome, learner_outcome, folds)?;
    let t_resid = residualize(treatment_confounders, treatment, learner_treatment, folds)?;

    let mut fold_betas = Vec::with_capacity(folds.len());
    let mut diagnostics = Vec::with_capacity(folds.len());
    for (fold_idx, fold) in folds.iter().enumerate() {
        let yk: Vec<f64> = fold.iter().map(|&i| y_resid[i]).collect();
        let tk: Vec<f64> = fold.iter().map(|&i| t_resid[i]).collect();
        let slope = ols_slope(&yk, &tk).map_err(|source| Error::FoldFailure {
            fold: fold_idx,
            source: Box::new(source),
        })?;
        fold_betas.push(slope);
        diagnostics.push(FoldDiagnostics {
            fold: fold_idx,
            n_rows: fold.len(),
            slope,
            outcome_residual_variance: crate::stats::sample_variance(&yk),
            treatment_residual_variance: crate::stats::sample_variance(&tk),
        });
    }
    Ok((fold_betas, diagnostics))
}

/// Cross-fitted partially linear ATE on a table. Rows with a null outcome,
/// treatment, or confounder are dropped for this analysis only.
pub fn estimate_ate(table: &MarketTable, task: &DmlTask) -> Result<AteEstimate> {
    task.validate()?;
    let confounders: Vec<&str> = task.confounder_cols.iter().map(String::as_str).collect();
    let mut needed = vec![task.outcome_col.as_str(), task.treatment_col.as_str()];
    needed.extend_from_slice(&confounders);
    let rows = table.rows_with_all(&needed)?;

    let min_rows = MIN_ROWS_PER_FOLD * task.folds;
    if rows.len() < min_rows {
        return Err(Error::InsufficientRows {
            needed: min_rows,
            got: rows.len(),
            context: "ate estimation after null-dropping".to_string(),
        });
    }

    let x = FeatureMatrix::from_table(table, &confounders, &rows)?;
    let y = table.gather(&task.outcome_col, &rows)?;
    let t = table.gather(&task.treatment_col, &rows)?;
    let folds = kfold_split(rows.len(), task.folds, task.seed)?;

    let (fold_betas, diagnostics) = cross_fit_fold_betas(
        &x,
        &x,
        &y,
        &t,
        &task.learner_outcome,
        &task.learner_treatment,
        &folds,
    )?;
    let beta_hat = crate::stats::mean(&fold_betas);
    Ok(AteEstimate {
        beta_hat,
        fold_betas,
        n_used: rows.len(),
        folds: diagnostics,
    })
}
