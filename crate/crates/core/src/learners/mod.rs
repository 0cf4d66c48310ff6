//! Pluggable regression learners for the nuisance models: a from-scratch
//! gradient-boosted-tree regressor and a ridge regressor behind one
//! train/predict interface.

mod gbrt;
mod ridge;

pub use gbrt::GbrtModel;
pub use ridge::RidgeModel;

use serde::{Deserialize, Serialize};

use crate::data::MarketTable;
use crate::error::{Error, Result};
use crate::synth::is_truth_column;

/// Dense feature matrix with named, ordered columns. Learners validate at
/// predict time that the column names and order match training exactly.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    names: Vec<String>,
    /// column-major storage
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("feature names and columns disagree"));
        }
        let n_rows = columns.first().map(Vec::len).unwrap_or(0);
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::invalid(format!("ragged feature column '{name}'")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value in feature '{name}'")));
            }
        }
        Ok(FeatureMatrix { names, columns, n_rows })
    }

    /// Gathers the named columns at the given rows. Rows must be non-null in
    /// every requested column (callers pre-filter with `rows_with_all`).
    /// Synthetic truth columns are rejected so they can never leak into a
    /// learner.
    pub fn from_table(table: &MarketTable, columns: &[&str], rows: &[usize]) -> Result<Self> {
        let mut cols = Vec::with_capacity(columns.len());
        for &name in columns {
            if is_truth_column(name) {
                return Err(Error::TruthColumnLeak {
                    column: name.to_string(),
                });
            }
            cols.push(table.gather(name, rows)?);
        }
        FeatureMatrix::new(columns.iter().map(|s| s.to_string()).collect(), cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    /// Copies the selected rows into a new matrix (duplicates allowed, so
    /// bootstrap resamples can be expressed as row selections).
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }
}

/// Which learner to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerKind {
    BoostedTrees {
        trees: usize,
        learning_rate: f64,
        max_leaves: usize,
        min_leaf_samples: usize,
    },
    Ridge {
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub kind: LearnerKind,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerSpec {
    /// Boosted trees with library-default hyperparameters: 100 trees,
    /// learning rate 0.1, 31 leaves, minimum 20 samples per leaf, no
    /// subsampling.
    pub fn boosted_trees_default() -> Self {
        LearnerSpec {
            kind: LearnerKind::BoostedTrees {
                trees: 100,
                learning_rate: 0.1,
                max_leaves: 31,
                min_leaf_samples: 20,
            },
            seed: 0,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec {
            kind: LearnerKind::Ridge { lambda },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            LearnerKind::BoostedTrees {
                trees,
                learning_rate,
                max_leaves,
                min_leaf_samples,
            } => {
                if *trees < 1 {
                    return Err(Error::invalid("boosted trees: trees must be >= 1"));
                }
                if !(*learning_rate > 0.0 && *learning_rate <= 1.0) {
                    return Err(Error::invalid("boosted trees: learning rate must be in (0, 1]"));
                }
                if *max_leaves < 1 {
                    return Err(Error::invalid("boosted trees: max_leaves must be >= 1"));
                }
                if *min_leaf_samples < 1 {
                    return Err(Error::invalid("boosted trees: min_leaf_samples must be >= 1"));
                }
            }
            LearnerKind::Ridge { lambda } => {
                if !(*lambda >= 0.0) {
                    return Err(Error::invalid("ridge: lambda must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Fitted model state, serializable for inspection. The format is a
/// diagnostic aid, not a stability-guaranteed interface.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelState {
    BoostedTrees(GbrtModel),
    Ridge(RidgeModel),
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainedLearner {
    pub spec: LearnerSpec,
    pub feature_names: Vec<String>,
    pub state: ModelState,
}

/// Trains a learner on the confounder matrix `x` and target `y`.
/// Deterministic given `(spec, x, y)`.
pub fn train(spec: &LearnerSpec, x: &FeatureMatrix, y: &[f64]) -> Result<TrainedLearner> {
    spec.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "feature matrix has {} rows but target has {}",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: y.len(),
            context: "learner training".to_string(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in training target"));
    }
    let state = match &spec.kind {
        LearnerKind::BoostedTrees {
            trees,
            learning_rate,
            max_leaves,
            min_leaf_samples,
        } => ModelState::BoostedTrees(gbrt::fit(
            x,
            y,
            *trees,
            *learning_rate,
            *max_leaves,
            *min_leaf_samples,
        )),
        LearnerKind::Ridge { lambda } => ModelState::Ridge(ridge::fit(x, y, *lambda)?),
    };
    Ok(TrainedLearner {
        spec: spec.clone(),
        feature_names: x.names().to_vec(),
        state,
    })
}

impl TrainedLearner {
    /// Predicts for every row of `x`. The matrix must carry exactly the
    /// training columns in training order.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_features() != self.feature_names.len() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x.n_features()
            )));
        }
        for (position, (expected, actual)) in
            self.feature_names.iter().zip(x.names()).enumerate()
        {
            if expected != actual {
                return Err(Error::FeatureMismatch {
                    expected: expected.clone(),
                    actual: actual.clone(),
                    position,
                });
            }
        }
        Ok(match &self.state {
            ModelState::BoostedTrees(model) => model.predict(x),
            ModelState::Ridge(model) => model.predict(x),
        })
    }

    /// In-sample squared-error loss after each boosting stage (empty for
    /// ridge models).
    pub fn training_loss_curve(&self) -> &[f64] {
        match &self.state {
            ModelState::BoostedTrees(model) => &model.training_loss,
            ModelState::Ridge(_) => &[],
        }
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(n: usize) -> (FeatureMatrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let m = FeatureMatrix::new(vec!["x".to_string()], vec![xs]).unwrap();
        (m, y)
    }

    #[test]
    fn constant_target_gives_constant_predictions() {
        let (x, _) = xy(50);
        let y = vec![7.0; 50];
        for spec in [LearnerSpec::boosted_trees_default(), LearnerSpec::ridge(0.5)] {
            let model = train(&spec, &x, &y).unwrap();
            for p in model.predict(&x).unwrap() {
                assert!((p - 7.0).abs() < 1e-9, "{spec:?} predicted {p}");
            }
        }
    }

    #[test]
    fn ridge_lambda_zero_recovers_exact_line() {
        let (x, y) = xy(100);
        let model = train(&LearnerSpec::ridge(0.0), &x, &y).unwrap();
        match &model.state {
            ModelState::Ridge(r) => {
                assert!((r.coefficients[0] - 2.0).abs() < 1e-8);
                assert!(r.intercept.abs() < 1e-8);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn ridge_predicts_intercept_at_zero_features() {
        let xs = vec![1.0_f64, 2.0, 3.0, 4.0];
        let y = vec![11.0, 12.0, 13.0, 14.0];
        let m = FeatureMatrix::new(vec!["x".to_string()], vec![xs]).unwrap();
        let model = train(&LearnerSpec::ridge(0.0), &m, &y).unwrap();
        let zeros = FeatureMatrix::new(vec!["x".to_string()], vec![vec![0.0, 0.0]]).unwrap();
        let intercept = match &model.state {
            ModelState::Ridge(r) => r.intercept,
            _ => unreachable!(),
        };
        for p in model.predict(&zeros).unwrap() {
            assert!((p - intercept).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_rejects_reordered_columns() {
        let m = FeatureMatrix::new(
            vec!["a".to_string(), "b".to_string()],
            vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 0.5, 0.25, 2.0]],
        )
        .unwrap();
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let model = train(&LearnerSpec::ridge(0.1), &m, &y).unwrap();
        let swapped = FeatureMatrix::new(
            vec!["b".to_string(), "a".to_string()],
            vec![vec![1.0], vec![0.0]],
        )
        .unwrap();
        match model.predict(&swapped) {
            Err(Error::FeatureMismatch { expected, position, .. }) => {
                assert_eq!(expected, "a");
                assert_eq!(position, 0);
            }
            other => panic!("expected feature mismatch, got {other:?}"),
        }
    }

    #[test]
    fn identical_specs_give_bitwise_identical_predictions() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 300) as f64 / 300.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| (x * 9.0).sin() + 0.3 * x).collect();
        let m = FeatureMatrix::new(vec!["x".to_string()], vec![xs]).unwrap();
        let spec = LearnerSpec::boosted_trees_default();
        let m1 = train(&spec, &m, &y).unwrap();
        let m2 = train(&spec, &m, &y).unwrap();
        let p1 = m1.predict(&m).unwrap();
        let p2 = m2.predict(&m).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(m1.dump_json(), m2.dump_json());
    }

    #[test]
    fn truth_columns_are_rejected() {
        use crate::data::table::Provenance;
        use chrono::{TimeZone, Utc};
        use indexmap::IndexMap;
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let mut cols = IndexMap::new();
        cols.insert("true_beta_at_x".to_string(), vec![Some(1.0), Some(2.0)]);
        let table = crate::data::MarketTable::new(
            vec![t0, t0 + chrono::Duration::minutes(30)],
            cols,
            Provenance::default(),
        )
        .unwrap();
        match FeatureMatrix::from_table(&table, &["true_beta_at_x"], &[0, 1]) {
            Err(Error::TruthColumnLeak { column }) => assert_eq!(column, "true_beta_at_x"),
            other => panic!("expected truth-column guard, got {other:?}"),
        }
    }
}
