//! The scoring contract every explained model satisfies.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dataset::{RowMatrix, Schema};
use crate::error::ModelError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelInfo {
    pub name: String,
    pub family: String,
    pub hyperparameters: BTreeMap<String, String>,
}

impl ModelInfo {
    pub fn new(name: impl Into<String>, family: impl Into<String>) -> Self {
        ModelInfo {
            name: name.into(),
            family: family.into(),
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.hyperparameters.insert(key.to_string(), value.to_string());
        self
    }
}

/// A deterministic batch scorer.
///
/// Implementations must return one score per input row, must return the same
/// scores for the same batch, and must score each row independently of the
/// rest of the batch.
pub trait Model: Send + Sync + 'static {
    fn info(&self) -> &ModelInfo;

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError>;

    fn as_any(&self) -> &dyn Any;
}

/// Shared, cheaply cloneable handle to a model.
#[derive(Clone)]
pub struct ModelHandle {
    inner: Arc<dyn Model>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("info", self.inner.info())
            .finish()
    }
}

impl ModelHandle {
    pub fn new<M: Model>(model: M) -> Self {
        ModelHandle {
            inner: Arc::new(model),
        }
    }

    /// Wraps a per-row function as a model.
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        Self::new(FnModel {
            info: ModelInfo::new(name, "function"),
            f,
        })
    }

    pub fn info(&self) -> &ModelInfo {
        self.inner.info()
    }

    pub fn name(&self) -> &str {
        &self.inner.info().name
    }

    pub fn downcast_ref<T: Any>(&self) -> Option<&T> {
        self.inner.as_any().downcast_ref::<T>()
    }

    /// Scores a batch and checks the output contract.
    pub fn score(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        let scores = self.inner.predict(rows)?;
        if scores.len() != rows.n_rows() {
            return Err(ModelError::OutputLength {
                expected: rows.n_rows(),
                got: scores.len(),
            });
        }
        if let Some((row, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(ModelError::NonFinite { row, value });
        }
        Ok(scores)
    }

    pub fn score_row(&self, schema: &Arc<Schema>, row: &[f64]) -> Result<f64, ModelError> {
        let one = RowMatrix::single(schema.clone(), row);
        Ok(self.score(&one)?[0])
    }
}

struct FnModel<F> {
    info: ModelInfo,
    f: F,
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        Ok(rows.rows().map(|r| (self.f)(r)).collect())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
