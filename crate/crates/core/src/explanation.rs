//! Explanation records and their JSON documents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// A feature or an unordered feature pair (stored with `i < j`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Single(usize),
    Pair(usize, usize),
}

impl Group {
    pub fn pair(i: usize, j: usize) -> Result<Group> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Ok(Group::Pair(i, j)),
            std::cmp::Ordering::Greater => Ok(Group::Pair(j, i)),
            std::cmp::Ordering::Equal => Err(Error::SamePair(i)),
        }
    }

    pub fn features(&self) -> Vec<usize> {
        match *self {
            Group::Single(i) => vec![i],
            Group::Pair(i, j) => vec![i, j],
        }
    }

    pub fn is_pair(&self) -> bool {
        matches!(self, Group::Pair(..))
    }

    pub fn check(&self, p: usize) -> Result<()> {
        for i in self.features() {
            if i >= p {
                return Err(Error::FeatureIndex { index: i, p });
            }
        }
        if let Group::Pair(i, j) = *self {
            if i >= j {
                return Err(Error::SamePair(i));
            }
        }
        Ok(())
    }

    pub fn label(&self, names: &[String]) -> String {
        self.features()
            .iter()
            .map(|&i| names[i].as_str())
            .collect::<Vec<_>>()
            .join(":")
    }
}

/// A ranked entry of the candidate table used to build a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateGroup {
    pub group: Group,
    pub order_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub group: Group,
    pub order_score: f64,
    pub attribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMeta {
    pub seed: u64,
    pub background_rows: usize,
    pub model: String,
}

/// Relative tolerance of the sum identity checked on construction.
pub const SUM_TOLERANCE: f64 = 1e-8;

/// Baseline plus ordered attribution steps that sum to the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    feature_names: Vec<String>,
    baseline: f64,
    prediction: f64,
    steps: Vec<Step>,
    meta: ExplanationMeta,
}

impl Explanation {
    /// Checks the feature partition and the sum identity.
    pub fn new(
        feature_names: Vec<String>,
        baseline: f64,
        prediction: f64,
        steps: Vec<Step>,
        meta: ExplanationMeta,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut seen = vec![false; p];
        for step in &steps {
            step.group.check(p)?;
            for i in step.group.features() {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("feature {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("feature {i} is missing")));
        }
        let sum: f64 = steps.iter().map(|s| s.attribution).sum();
        if (baseline + sum - prediction).abs() > SUM_TOLERANCE * prediction.abs().max(1.0) {
            return Err(Error::SumIdentity {
                baseline,
                sum,
                prediction,
            });
        }
        Ok(Explanation {
            feature_names,
            baseline,
            prediction,
            steps,
            meta,
        })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn meta(&self) -> &ExplanationMeta {
        &self.meta
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn attributions(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.attribution).collect()
    }

    /// Attribution per feature for explanations made only of single steps.
    pub fn per_feature(&self) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.n_features()];
        for step in &self.steps {
            match step.group {
                Group::Single(i) => out[i] = step.attribution,
                Group::Pair(..) => return None,
            }
        }
        Some(out)
    }

    pub fn pair_count(&self) -> usize {
        self.steps.iter().filter(|s| s.group.is_pair()).count()
    }

    pub fn to_doc(&self) -> ExplanationDoc {
        ExplanationDoc {
            baseline: self.baseline,
            prediction: self.prediction,
            steps: self
                .steps
                .iter()
                .map(|s| StepDoc {
                    features: s
                        .group
                        .features()
                        .iter()
                        .map(|&i| self.feature_names[i].clone())
                        .collect(),
                    order_score: s.order_score,
                    attribution: s.attribution,
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("finite numbers serialize");
        s.push('\n');
        s
    }

    /// Rebuilds an explanation from its JSON document and feature names.
    pub fn from_doc(doc: &ExplanationDoc, feature_names: Vec<String>) -> Result<Self> {
        let index = |name: &str| {
            feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Partition(format!("unknown feature `{name}`")))
        };
        let steps = doc
            .steps
            .iter()
            .map(|s| {
                let group = match s.features.as_slice() {
                    [a] => Group::Single(index(a)?),
                    [a, b] => Group::pair(index(a)?, index(b)?)?,
                    other => {
                        return Err(Error::Partition(format!(
                            "step with {} features",
                            other.len()
                        )))
                    }
                };
                Ok(Step {
                    group,
                    order_score: s.order_score,
                    attribution: s.attribution,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Explanation::new(
            feature_names,
            doc.baseline,
            doc.prediction,
            steps,
            doc.meta.clone(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDoc {
    pub features: Vec<String>,
    pub order_score: f64,
    pub attribution: f64,
}

/// The published explanation JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationDoc {
    pub baseline: f64,
    pub prediction: f64,
    pub steps: Vec<StepDoc>,
    pub meta: ExplanationMeta,
}

/// Strictly upper triangular `p x p` table, indexed symmetrically.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    p: usize,
    values: Vec<f64>,
}

impl PairTable {
    pub fn new(p: usize) -> Self {
        PairTable {
            p,
            values: vec![0.0; p * p.saturating_sub(1) / 2],
        }
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        assert!(i != j && j < self.p, "pair ({i}, {j}) out of range for p = {}", self.p);
        i * (2 * self.p - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.offset(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.offset(i, j);
        self.values[k] = v;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(i, j, value)` for every `i < j`, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.p)
            .flat_map(move |i| (i + 1..self.p).map(move |j| (i, j)))
            .zip(&self.values)
            .map(|((i, j), &v)| (i, j, v))
    }
}

/// Single-step contributions and pairwise interaction contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    pub baseline: f64,
    pub deltas_i: Vec<f64>,
    pub deltas_ij: PairTable,
    pub interactions: PairTable,
}

impl InteractionMatrix {
    pub fn n_features(&self) -> usize {
        self.deltas_i.len()
    }

    pub fn max_abs_interaction(&self) -> f64 {
        self.interactions
            .iter()
            .map(|(_, _, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Per-feature spread of contributions across sampled feature orders.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyReport {
    pub k: usize,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// `per_feature_samples[i][k]` is feature `i`'s contribution under order `k`.
    pub per_feature_samples: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub iqr: Vec<f64>,
    pub baseline_explanation: Explanation,
}

impl UncertaintyReport {
    pub fn from_samples(
        seed: u64,
        per_feature_samples: Vec<Vec<f64>>,
        baseline_explanation: Explanation,
    ) -> Result<Self> {
        let k = per_feature_samples.first().map_or(0, Vec::len);
        if k == 0 || per_feature_samples.iter().any(|s| s.len() != k) {
            return Err(Error::invalid("uncertainty needs K >= 1 samples per feature"));
        }
        let means = per_feature_samples.iter().map(|s| stats::mean(s)).collect();
        let q1: Vec<f64> = per_feature_samples
            .iter()
            .map(|s| stats::quantile(s, 0.25))
            .collect();
        let q3: Vec<f64> = per_feature_samples
            .iter()
            .map(|s| stats::quantile(s, 0.75))
            .collect();
        let iqr = q1.iter().zip(&q3).map(|(a, b)| b - a).collect();
        Ok(UncertaintyReport {
            k,
            seed,
            feature_names: baseline_explanation.feature_names().to_vec(),
            per_feature_samples,
            means,
            q1,
            q3,
            iqr,
            baseline_explanation,
        })
    }

    pub fn min(&self, i: usize) -> f64 {
        self.per_feature_samples[i]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self, i: usize) -> f64 {
        self.per_feature_samples[i]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_doc(&self) -> UncertaintyDoc {
        UncertaintyDoc {
            k: self.k,
            seed: self.seed,
            features: self
                .feature_names
                .iter()
                .enumerate()
                .map(|(i, name)| FeatureUncertaintyDoc {
                    name: name.clone(),
                    mean: self.means[i],
                    q1: self.q1[i],
                    q3: self.q3[i],
                    samples: self.per_feature_samples[i].clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("finite numbers serialize");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureUncertaintyDoc {
    pub name: String,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub samples: Vec<f64>,
}

/// The published uncertainty JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDoc {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub features: Vec<FeatureUncertaintyDoc>,
}
