//! Expectation-based contributions of features and feature pairs.
//!
//! Every quantity here derives from one primitive: the mean model score over
//! the background rows after overwriting a set of columns with the explained
//! observation's values. For a fixed set `S` this is `E[f(x) | x_S = x*_S]`;
//! `S = {}` is the baseline and `S = all` is the prediction itself.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Observation, RowMatrix, Schema};
use crate::error::{Error, ModelError, Result};
use crate::explanation::{InteractionMatrix, PairTable};
use crate::model::ModelHandle;

/// Background rows over which expectations are taken.
#[derive(Clone, Debug)]
pub struct Background {
    rows: RowMatrix,
    source_rows: usize,
}

impl Background {
    /// Every dataset row, in stored order.
    pub fn full(dataset: &Dataset) -> Self {
        Background {
            rows: dataset.to_rows(),
            source_rows: dataset.n_rows(),
        }
    }

    /// At most `cap` rows drawn uniformly without replacement, kept in stored
    /// order. Datasets within the cap are used whole.
    pub fn capped(dataset: &Dataset, cap: Option<usize>, seed: u64) -> Result<Self> {
        match cap {
            Some(0) => Err(Error::invalid("row cap must be at least 1")),
            Some(cap) if cap < dataset.n_rows() => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, dataset.n_rows(), cap).into_vec();
                picked.sort_unstable();
                Ok(Background {
                    rows: dataset.select_rows(&picked)?.to_rows(),
                    source_rows: dataset.n_rows(),
                })
            }
            _ => Ok(Self::full(dataset)),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn schema(&self) -> &Arc<Schema> {
        self.rows.schema()
    }

    pub fn rows(&self) -> &RowMatrix {
        &self.rows
    }
}

/// Memoizing evaluator of group expectations for one model, background and
/// observation.
///
/// Safe to share between threads; results do not depend on the worker count
/// because each expectation is one batch summed in row order.
pub struct ContributionKernel {
    model: ModelHandle,
    background: Background,
    observation: Observation,
    workers: usize,
    pool: OnceLock<rayon::ThreadPool>,
    memo: Mutex<HashMap<Vec<usize>, f64>>,
}

impl ContributionKernel {
    pub fn new(model: &ModelHandle, background: Background, observation: &Observation) -> Result<Self> {
        if observation.len() != background.schema().len() {
            return Err(Error::Arity {
                expected: background.schema().len(),
                got: observation.len(),
            });
        }
        Ok(ContributionKernel {
            model: model.clone(),
            background,
            observation: observation.clone(),
            workers: 1,
            pool: OnceLock::new(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Kernel over every row of `dataset`.
    pub fn over(model: &ModelHandle, dataset: &Dataset, observation: &Observation) -> Result<Self> {
        Self::new(model, Background::full(dataset), observation)
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn n_features(&self) -> usize {
        self.observation.len()
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn model(&self) -> &ModelHandle {
        &self.model
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Number of distinct fixed sets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n_features() {
            Ok(())
        } else {
            Err(Error::FeatureIndex {
                index: i,
                p: self.n_features(),
            })
        }
    }

    /// `E[f(x) | x_S = x*_S]` over the background rows.
    pub fn expectation(&self, fixed: &[usize]) -> Result<f64> {
        let mut key = fixed.to_vec();
        key.sort_unstable();
        key.dedup();
        for &i in &key {
            self.check_index(i)?;
        }
        if let Some(&v) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(v);
        }
        let value = self.evaluate(&key)?;
        self.memo.lock().expect("memo lock").insert(key, value);
        Ok(value)
    }

    fn evaluate(&self, key: &[usize]) -> Result<f64> {
        let x = self.observation.values();
        let wrap = |rows: usize, e: ModelError| {
            Error::Model(ModelError::Batch {
                rows,
                fixed: key.to_vec(),
                source: Box::new(e),
            })
        };
        if key.len() == self.n_features() {
            // every background row collapses onto x*
            return self
                .model
                .score_row(self.background.schema(), x)
                .map_err(|e| wrap(1, e));
        }
        let mut batch = self.background.rows().clone();
        for &i in key {
            batch.fill_column(i, x[i]);
        }
        let scores = self
            .model
            .score(&batch)
            .map_err(|e| wrap(batch.n_rows(), e))?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }

    /// Evaluates several fixed sets, possibly in parallel, returning values in
    /// input order.
    pub fn expectations(&self, sets: &[Vec<usize>]) -> Result<Vec<f64>> {
        if self.workers <= 1 || sets.len() <= 1 {
            return sets.iter().map(|s| self.expectation(s)).collect();
        }
        if self.pool.get().is_none() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            let _ = self.pool.set(pool);
        }
        let pool = self.pool.get().expect("pool initialized");
        pool.install(|| sets.par_iter().map(|s| self.expectation(s)).collect())
    }

    /// Mean model response over the background, `Δ_∅`.
    pub fn baseline(&self) -> Result<f64> {
        self.expectation(&[])
    }

    /// Model score of the observation itself.
    pub fn prediction(&self) -> Result<f64> {
        let all: Vec<usize> = (0..self.n_features()).collect();
        self.expectation(&all)
    }

    /// `Δ_i`: change of the mean response when feature `i` is fixed.
    pub fn single(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.expectation(&[i])? - self.baseline()?)
    }

    /// `(Δ_ij, Δ^I_ij)` where `Δ^I_ij = Δ_ij - Δ_i - Δ_j`.
    pub fn pair(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::SamePair(i));
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let base = self.baseline()?;
        let delta_ij = self.expectation(&[i, j])? - base;
        let delta_i = self.expectation(&[i])? - base;
        let delta_j = self.expectation(&[j])? - base;
        Ok((delta_ij, delta_ij - delta_i - delta_j))
    }

    /// All single and pairwise contributions.
    pub fn interaction_matrix(&self) -> Result<InteractionMatrix> {
        let p = self.n_features();
        let mut sets: Vec<Vec<usize>> = vec![vec![]];
        sets.extend((0..p).map(|i| vec![i]));
        for i in 0..p {
            for j in i + 1..p {
                sets.push(vec![i, j]);
            }
        }
        let values = self.expectations(&sets)?;
        let base = values[0];
        let deltas_i: Vec<f64> = values[1..=p].iter().map(|v| v - base).collect();
        let mut deltas_ij = PairTable::new(p);
        let mut interactions = PairTable::new(p);
        for (set, value) in sets[p + 1..].iter().zip(&values[p + 1..]) {
            let (i, j) = (set[0], set[1]);
            let d = value - base;
            deltas_ij.set(i, j, d);
            interactions.set(i, j, d - deltas_i[i] - deltas_i[j]);
        }
        Ok(InteractionMatrix {
            baseline: base,
            deltas_i,
            deltas_ij,
            interactions,
        })
    }

    /// `Δ_{G|J}`: added contribution of `group` given `history` is fixed.
    pub fn conditional(&self, group: &[usize], history: &[usize]) -> Result<f64> {
        let overlap: Vec<usize> = group
            .iter()
            .copied()
            .filter(|g| history.contains(g))
            .collect();
        if !overlap.is_empty() {
            return Err(Error::Overlap(overlap));
        }
        let mut union = history.to_vec();
        union.extend_from_slice(group);
        Ok(self.expectation(&union)? - self.expectation(history)?)
    }
}

/// Mean model score over every dataset row.
pub fn baseline(model: &ModelHandle, dataset: &Dataset) -> Result<f64> {
    let scores = model.score(&dataset.to_rows()).map_err(|e| {
        Error::Model(ModelError::Batch {
            rows: dataset.n_rows(),
            fixed: vec![],
            source: Box::new(e),
        })
    })?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn group_expectation(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    fixed: &[usize],
) -> Result<f64> {
    ContributionKernel::over(model, dataset, observation)?.expectation(fixed)
}

pub fn single_contribution(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    i: usize,
) -> Result<f64> {
    ContributionKernel::over(model, dataset, observation)?.single(i)
}

pub fn pair_contribution(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    i: usize,
    j: usize,
) -> Result<(f64, f64)> {
    ContributionKernel::over(model, dataset, observation)?.pair(i, j)
}

pub fn interaction_matrix(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
) -> Result<InteractionMatrix> {
    ContributionKernel::over(model, dataset, observation)?.interaction_matrix()
}

pub fn conditional_contribution(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    group: &[usize],
    history: &[usize],
) -> Result<f64> {
    ContributionKernel::over(model, dataset, observation)?.conditional(group, history)
}
