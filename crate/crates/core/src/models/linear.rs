use std::any::Any;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowMatrix, Schema};
use crate::error::{Error, ModelError, Result};
use crate::model::{Model, ModelInfo};

/// Design matrices whose smallest/largest singular value ratio falls below
/// this are rejected as singular.
const RANK_TOLERANCE: f64 = 1e-10;

/// `intercept + Σ w_i x_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub schema: Schema,
    pub intercept: f64,
    pub weights: Vec<f64>,
    #[serde(skip)]
    info: ModelInfo,
}

impl LinearModel {
    pub fn new(schema: Schema, intercept: f64, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != schema.len() {
            return Err(Error::Format(format!(
                "{} weights for {} features",
                weights.len(),
                schema.len()
            )));
        }
        if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Format("non-finite linear coefficients".into()));
        }
        Ok(LinearModel {
            schema,
            intercept,
            weights,
            info: ModelInfo::new("linear", "linear"),
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (w, x) in self.weights.iter().zip(row) {
            acc += w * x;
        }
        acc
    }

    pub(crate) fn set_info(&mut self, info: ModelInfo) {
        self.info = info;
    }
}

impl Model for LinearModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        if rows.n_cols() != self.weights.len() {
            return Err(ModelError::Arity {
                expected: self.weights.len(),
                got: rows.n_cols(),
            });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Ordinary least squares with an intercept, solved through the SVD.
pub fn train_linear(dataset: &Dataset, targets: &[f64]) -> Result<LinearModel> {
    let n = dataset.n_rows();
    let p = dataset.n_features();
    if targets.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", targets.len())));
    }
    if let Some(f) = dataset.schema().features.iter().find(|f| f.is_categorical()) {
        return Err(Error::invalid(format!(
            "linear model needs numeric features; `{}` is categorical",
            f.name
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("non-finite target at row {i}")));
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { dataset.value(i, j - 1) });
    let y = DVector::from_column_slice(targets);
    let svd = design.svd(true, true);
    let max = svd.singular_values.max();
    let min = if n < p + 1 {
        0.0
    } else {
        svd.singular_values.min()
    };
    if min <= RANK_TOLERANCE * max {
        return Err(Error::Singular {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let beta = svd
        .solve(&y, RANK_TOLERANCE * max)
        .map_err(|e| Error::invalid(format!("least squares: {e}")))?;
    let mut model = LinearModel::new(
        (**dataset.schema()).clone(),
        beta[0],
        beta.iter().skip(1).copied().collect(),
    )?;
    model.set_info(ModelInfo::new("linear", "linear").with("features", p));
    Ok(model)
}
