//! Tabular background data, observations and row batches.
//!
//! Every cell is stored as an `f64`. Numeric features hold their value;
//! categorical features hold the index of their level in the schema's
//! sorted level list. Fixing a feature at an observation's value is then the
//! same column overwrite for both kinds.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens treated as missing values on ingestion.
pub const MISSING_TOKENS: [&str; 2] = ["", "NA"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl Feature {
    pub fn numeric(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Numeric => None,
        }
    }

    /// Renders a stored cell value the way it appears in a CSV file.
    pub fn format_value(&self, value: f64) -> String {
        match &self.kind {
            FeatureKind::Numeric => format!("{value}"),
            FeatureKind::Categorical { levels } => levels
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("{value}")),
        }
    }

    fn parse_token(&self, token: &str) -> Result<f64> {
        let token = token.trim();
        match &self.kind {
            FeatureKind::Numeric => token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NotNumeric {
                    feature: self.name.clone(),
                    token: token.to_string(),
                }),
            FeatureKind::Categorical { levels } => levels
                .binary_search_by(|l| l.as_str().cmp(token))
                .map(|i| i as f64)
                .map_err(|_| Error::UnseenLevel {
                    feature: self.name.clone(),
                    level: token.to_string(),
                }),
        }
    }

    fn check_value(&self, value: f64) -> Result<()> {
        match &self.kind {
            FeatureKind::Numeric if value.is_finite() => Ok(()),
            FeatureKind::Numeric => Err(Error::NotNumeric {
                feature: self.name.clone(),
                token: value.to_string(),
            }),
            FeatureKind::Categorical { levels } => {
                if value >= 0.0 && value.fract() == 0.0 && (value as usize) < levels.len() {
                    Ok(())
                } else {
                    Err(Error::UnseenLevel {
                        feature: self.name.clone(),
                        level: value.to_string(),
                    })
                }
            }
        }
    }
}

/// Ordered feature descriptions shared by datasets, batches and models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<Feature>,
}

impl Schema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset {
                rows: 0,
                features: 0,
            });
        }
        let mut seen = HashSet::new();
        for (i, f) in features.iter().enumerate() {
            if f.name.trim().is_empty() {
                return Err(Error::EmptyName(i));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::DuplicateName(f.name.clone()));
            }
        }
        Ok(Schema { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Models and data must agree on names, kinds and level coding.
    pub fn ensure_compatible(&self, other: &Schema) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Arity {
                expected: self.len(),
                got: other.len(),
            });
        }
        for (a, b) in self.features.iter().zip(&other.features) {
            if a != b {
                return Err(Error::invalid(format!(
                    "schema mismatch: feature `{}` ({:?}) vs `{}` ({:?})",
                    a.name, a.kind, b.name, b.kind
                )));
            }
        }
        Ok(())
    }
}

/// A header plus string cells, as read from a delimited file.
#[derive(Clone, Debug, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        RawTable { header, rows }
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }

    pub fn check_shape(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(Error::Ragged {
                    row: i,
                    expected: self.header.len(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    pub fn check_missing(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if MISSING_TOKENS.contains(&cell.trim()) {
                    return Err(Error::MissingValue {
                        column: self.header[j].clone(),
                        row: i,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Column-typed background data. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

/// Builds a [`Dataset`] from a raw string table.
///
/// A column is numeric when every cell parses as a finite decimal, otherwise
/// it is categorical with levels interned in sorted order.
pub fn validate_dataset(raw: &RawTable) -> Result<Dataset> {
    if raw.rows.is_empty() || raw.header.is_empty() {
        return Err(Error::EmptyDataset {
            rows: raw.rows.len(),
            features: raw.header.len(),
        });
    }
    raw.check_shape()?;
    raw.check_missing()?;

    let mut features = Vec::with_capacity(raw.header.len());
    let mut columns = Vec::with_capacity(raw.header.len());
    for (j, name) in raw.header.iter().enumerate() {
        let parsed: Option<Vec<f64>> = raw
            .column(j)
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(values) => {
                features.push(Feature::numeric(name.trim()));
                columns.push(values);
            }
            None => {
                let levels: Vec<String> = raw
                    .column(j)
                    .map(|t| t.trim().to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let feature = Feature {
                    name: name.trim().to_string(),
                    kind: FeatureKind::Categorical { levels },
                };
                let codes = raw
                    .column(j)
                    .map(|t| feature.parse_token(t))
                    .collect::<Result<Vec<_>>>()?;
                features.push(feature);
                columns.push(codes);
            }
        }
    }
    Dataset::new(Schema::new(features)?, columns)
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_schema(Arc::new(schema), columns)
    }

    pub fn with_schema(schema: Arc<Schema>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if n_rows == 0 || columns.is_empty() {
            return Err(Error::EmptyDataset {
                rows: n_rows,
                features: columns.len(),
            });
        }
        if columns.len() != schema.len() {
            return Err(Error::Arity {
                expected: schema.len(),
                got: columns.len(),
            });
        }
        for (feature, column) in schema.features.iter().zip(&columns) {
            if column.len() != n_rows {
                return Err(Error::Ragged {
                    row: column.len().min(n_rows),
                    expected: n_rows,
                    got: column.len(),
                });
            }
            for (row, &v) in column.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::MissingValue {
                        column: feature.name.clone(),
                        row,
                    });
                }
                feature.check_value(v)?;
            }
        }
        Ok(Dataset {
            schema,
            columns,
            n_rows,
        })
    }

    /// All-numeric dataset from named columns.
    pub fn numeric<S: Into<String>>(names: Vec<S>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let schema = Schema::new(names.into_iter().map(Feature::numeric).collect())?;
        Self::new(schema, columns)
    }

    /// All-numeric dataset from row-major data.
    pub fn from_rows<S: Into<String>>(names: Vec<S>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Ragged {
                    row: i,
                    expected: p,
                    got: row.len(),
                });
            }
            for (c, &v) in columns.iter_mut().zip(row) {
                c.push(v);
            }
        }
        Self::numeric(names, columns)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.names()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| indices.iter().map(|&i| c[i]).collect())
            .collect();
        Dataset::with_schema(self.schema.clone(), columns)
    }

    /// Row-major copy of the whole table.
    pub fn to_rows(&self) -> RowMatrix {
        let p = self.n_features();
        let mut data = Vec::with_capacity(self.n_rows * p);
        for i in 0..self.n_rows {
            data.extend(self.columns.iter().map(|c| c[i]));
        }
        RowMatrix {
            schema: self.schema.clone(),
            data,
        }
    }
}

/// Binds string tokens (one per feature) to the dataset's schema.
pub fn bind_observation<S: AsRef<str>>(dataset: &Dataset, values: &[S]) -> Result<Observation> {
    let schema = dataset.schema();
    if values.len() != schema.len() {
        return Err(Error::Arity {
            expected: schema.len(),
            got: values.len(),
        });
    }
    let values = schema
        .features
        .iter()
        .zip(values)
        .map(|(f, t)| f.parse_token(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation { values })
}

/// A single instance to explain, coded like a dataset row.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
}

impl Observation {
    /// Validates already-coded values against the schema.
    pub fn new(schema: &Schema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::Arity {
                expected: schema.len(),
                got: values.len(),
            });
        }
        for (f, &v) in schema.features.iter().zip(&values) {
            f.check_value(v)?;
        }
        Ok(Observation { values })
    }

    pub fn from_row(dataset: &Dataset, row: usize) -> Result<Self> {
        if row >= dataset.n_rows() {
            return Err(Error::invalid(format!(
                "row {row} out of range ({} rows)",
                dataset.n_rows()
            )));
        }
        Ok(Observation {
            values: dataset.row(row),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major batch of schema-coded rows handed to a model.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMatrix {
    schema: Arc<Schema>,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(schema: Arc<Schema>, data: Vec<f64>) -> Result<Self> {
        if !data.len().is_multiple_of(schema.len()) {
            return Err(Error::invalid(format!(
                "batch of {} cells is not a multiple of {} features",
                data.len(),
                schema.len()
            )));
        }
        Ok(RowMatrix { schema, data })
    }

    pub fn single(schema: Arc<Schema>, row: &[f64]) -> Self {
        RowMatrix {
            schema,
            data: row.to_vec(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_cols())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Overwrites column `col` in every row.
    pub fn fill_column(&mut self, col: usize, value: f64) {
        let p = self.n_cols();
        for row in self.data.chunks_exact_mut(p) {
            row[col] = value;
        }
    }

    /// Sub-batch of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> RowMatrix {
        let p = self.n_cols();
        RowMatrix {
            schema: self.schema.clone(),
            data: self.data[start * p..end * p].to_vec(),
        }
    }
}
