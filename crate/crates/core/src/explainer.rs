//! Sequential explanations with interactions, fixed-order explanations,
//! order-sampling uncertainty and Shapley estimates.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::explanation::{
    CandidateGroup, Explanation, ExplanationMeta, Group, InteractionMatrix, Step, UncertaintyReport,
};
use crate::kernel::{Background, ContributionKernel};
use crate::model::ModelHandle;

/// Default number of sampled orders for uncertainty profiles.
pub const DEFAULT_PERMUTATIONS: usize = 100;

/// Default cap on background rows used for expectations.
pub const DEFAULT_MAX_ROWS: usize = 1000;

/// Largest feature count for which all `p!` orders are enumerated.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 8;

/// How exact ties in `|score|` are broken when ranking candidates.
///
/// After the kind preference, singles are ordered by ascending index and
/// pairs by ascending `(i, j)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    SinglesFirst,
    PairsFirst,
}

#[derive(Clone, Debug)]
pub struct ExplainConfig {
    /// Pair scores are divided by this before ranking. `1.0` ranks purely by
    /// magnitude.
    pub interaction_preference: f64,
    pub tie_break: TieBreak,
    /// Interaction magnitudes at or below `noise_floor * max(1, |baseline|)`
    /// rank as zero. Keeps floating-point residue of additive models from
    /// outranking exactly-zero single contributions.
    pub noise_floor: f64,
    pub max_rows: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            interaction_preference: 1.0,
            tie_break: TieBreak::SinglesFirst,
            noise_floor: 1e-12,
            max_rows: Some(DEFAULT_MAX_ROWS),
            seed: 0,
            workers: crate::default_workers(),
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interaction_preference > 0.0 && self.interaction_preference.is_finite()) {
            return Err(Error::invalid(format!(
                "interaction preference must be positive, got {}",
                self.interaction_preference
            )));
        }
        if self.noise_floor.is_nan() || self.noise_floor < 0.0 {
            return Err(Error::invalid("noise floor must be non-negative"));
        }
        Ok(())
    }
}

/// A permutation of feature indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureOrder(Vec<usize>);

impl FeatureOrder {
    pub fn new(order: Vec<usize>, p: usize) -> Result<Self> {
        if order.len() != p {
            return Err(Error::InvalidPermutation(format!(
                "expected {p} features, got {}",
                order.len()
            )));
        }
        let mut seen = vec![false; p];
        for &i in &order {
            if i >= p {
                return Err(Error::InvalidPermutation(format!("index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} repeated")));
            }
        }
        Ok(FeatureOrder(order))
    }

    pub fn identity(p: usize) -> Self {
        FeatureOrder((0..p).collect())
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], feature_names: &[String]) -> Result<Self> {
        let order = names
            .iter()
            .map(|n| {
                feature_names
                    .iter()
                    .position(|f| f == n.as_ref().trim())
                    .ok_or_else(|| {
                        Error::InvalidPermutation(format!("unknown feature `{}`", n.as_ref()))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(order, feature_names.len())
    }

    /// Uniform random permutation by Fisher-Yates.
    pub fn random<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        FeatureOrder(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// All `p!` orders in lexicographic order.
    pub fn all(p: usize) -> Vec<FeatureOrder> {
        let mut current: Vec<usize> = (0..p).collect();
        let mut out = vec![FeatureOrder(current.clone())];
        while next_permutation(&mut current) {
            out.push(FeatureOrder(current.clone()));
        }
        out
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("successor exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Draws `k` i.i.d. uniform orders from a ChaCha8 stream seeded with `seed`.
pub fn sample_orders(p: usize, k: usize, seed: u64) -> Vec<FeatureOrder> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| FeatureOrder::random(p, &mut rng)).collect()
}

/// Disjoint groups covering every feature, in conditioning order.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPlan {
    groups: Vec<CandidateGroup>,
}

impl PathPlan {
    pub fn new(groups: Vec<CandidateGroup>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        for g in &groups {
            g.group.check(p)?;
            for i in g.group.features() {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("feature {i} in two path groups")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("feature {i} not on the path")));
        }
        Ok(PathPlan { groups })
    }

    pub fn groups(&self) -> &[CandidateGroup] {
        &self.groups
    }
}

/// All singles scored by `Δ_i` and all pairs by `Δ^I_ij`, sorted by
/// descending effective magnitude with deterministic tie-breaking.
pub fn rank_candidates(matrix: &InteractionMatrix, config: &ExplainConfig) -> Vec<CandidateGroup> {
    let floor = config.noise_floor * matrix.baseline.abs().max(1.0);
    let mut ranked: Vec<(f64, CandidateGroup)> = matrix
        .deltas_i
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            (
                d.abs(),
                CandidateGroup {
                    group: Group::Single(i),
                    order_score: d,
                },
            )
        })
        .chain(matrix.interactions.iter().map(|(i, j, d)| {
            let magnitude = if d.abs() <= floor {
                0.0
            } else {
                d.abs() / config.interaction_preference
            };
            (
                magnitude,
                CandidateGroup {
                    group: Group::Pair(i, j),
                    order_score: d,
                },
            )
        }))
        .collect();
    ranked.sort_by(|(ma, a), (mb, b)| {
        mb.total_cmp(ma)
            .then_with(|| kind_order(&a.group, &b.group, config.tie_break))
            .then_with(|| a.group.cmp(&b.group))
    });
    ranked.into_iter().map(|(_, c)| c).collect()
}

fn kind_order(a: &Group, b: &Group, tie: TieBreak) -> Ordering {
    let rank = |g: &Group| match (g.is_pair(), tie) {
        (false, TieBreak::SinglesFirst) | (true, TieBreak::PairsFirst) => 0,
        _ => 1,
    };
    rank(a).cmp(&rank(b))
}

/// Greedily accepts candidates whose features are all still open.
pub fn plan_path(candidates: &[CandidateGroup], p: usize) -> Result<PathPlan> {
    let mut open = vec![true; p];
    let mut groups = Vec::new();
    for c in candidates {
        let features = c.group.features();
        if features.iter().all(|&i| open[i]) {
            for i in features {
                open[i] = false;
            }
            groups.push(*c);
        }
    }
    PathPlan::new(groups, p)
}

/// Explains one observation of one model against a background sample.
pub struct Explainer {
    kernel: ContributionKernel,
    feature_names: Vec<String>,
    config: ExplainConfig,
}

impl Explainer {
    pub fn new(
        model: &ModelHandle,
        dataset: &Dataset,
        observation: &Observation,
        config: &ExplainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let background = Background::capped(dataset, config.max_rows, config.seed)?;
        let kernel =
            ContributionKernel::new(model, background, observation)?.with_workers(config.workers);
        Ok(Explainer {
            kernel,
            feature_names: dataset.feature_names(),
            config: config.clone(),
        })
    }

    pub fn kernel(&self) -> &ContributionKernel {
        &self.kernel
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn meta(&self) -> ExplanationMeta {
        ExplanationMeta {
            seed: self.config.seed,
            background_rows: self.kernel.background().n_rows(),
            model: self.kernel.model().name().to_string(),
        }
    }

    /// Conditions on `groups` in turn; each step's attribution is the change
    /// of the running mean response.
    fn walk(&self, groups: &[CandidateGroup]) -> Result<Explanation> {
        let baseline = self.kernel.baseline()?;
        let prediction = self.kernel.prediction()?;
        let mut history: Vec<usize> = Vec::with_capacity(self.n_features());
        let mut prev = baseline;
        let mut steps = Vec::with_capacity(groups.len());
        for c in groups {
            history.extend(c.group.features());
            let current = self.kernel.expectation(&history)?;
            steps.push(Step {
                group: c.group,
                order_score: c.order_score,
                attribution: current - prev,
            });
            prev = current;
        }
        Explanation::new(
            self.feature_names.clone(),
            baseline,
            prediction,
            steps,
            self.meta(),
        )
    }

    /// Running fixed sets of a path, for batch prefetching.
    fn prefixes(groups: impl Iterator<Item = Vec<usize>>) -> Vec<Vec<usize>> {
        let mut history = Vec::new();
        groups
            .map(|g| {
                history.extend(g);
                history.clone()
            })
            .collect()
    }

    pub fn interaction_matrix(&self) -> Result<InteractionMatrix> {
        self.kernel.interaction_matrix()
    }

    /// The path used by [`Explainer::sequential`].
    pub fn path(&self) -> Result<PathPlan> {
        let matrix = self.kernel.interaction_matrix()?;
        plan_path(&rank_candidates(&matrix, &self.config), self.n_features())
    }

    /// Explanation with the path chosen from single and pairwise scores.
    pub fn sequential(&self) -> Result<Explanation> {
        let plan = self.path()?;
        self.walk(plan.groups())
    }

    /// Explanation over single features in the given order.
    pub fn with_order(&self, order: &FeatureOrder) -> Result<Explanation> {
        if order.as_slice().len() != self.n_features() {
            return Err(Error::InvalidPermutation(format!(
                "expected {} features, got {}",
                self.n_features(),
                order.as_slice().len()
            )));
        }
        let groups = order
            .as_slice()
            .iter()
            .map(|&i| {
                Ok(CandidateGroup {
                    group: Group::Single(i),
                    order_score: self.kernel.single(i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.walk(&groups)
    }

    /// Single-feature explanation ordered by descending `|Δ_i|`.
    pub fn additive(&self) -> Result<Explanation> {
        let deltas = (0..self.n_features())
            .map(|i| self.kernel.single(i))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..self.n_features()).collect();
        order.sort_by(|&a, &b| deltas[b].abs().total_cmp(&deltas[a].abs()).then(a.cmp(&b)));
        self.with_order(&FeatureOrder(order))
    }

    /// Per-feature contributions under each order; `result[i][k]`.
    pub fn contributions_over(&self, orders: &[FeatureOrder]) -> Result<Vec<Vec<f64>>> {
        let p = self.n_features();
        let mut needed: Vec<Vec<usize>> = orders
            .iter()
            .flat_map(|o| Self::prefixes(o.as_slice().iter().map(|&i| vec![i])))
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        needed.sort();
        needed.dedup();
        self.kernel.expectations(&needed)?;
        self.kernel.baseline()?;

        let mut samples = vec![Vec::with_capacity(orders.len()); p];
        for order in orders {
            let explanation = self.with_order(order)?;
            let per_feature = explanation.per_feature().expect("single steps only");
            for (i, v) in per_feature.into_iter().enumerate() {
                samples[i].push(v);
            }
        }
        Ok(samples)
    }

    /// Spread of each feature's contribution over the given orders.
    pub fn uncertainty_from_orders(&self, orders: &[FeatureOrder], seed: u64) -> Result<UncertaintyReport> {
        if orders.is_empty() {
            return Err(Error::invalid("K must be at least 1"));
        }
        let samples = self.contributions_over(orders)?;
        UncertaintyReport::from_samples(seed, samples, self.additive()?)
    }

    /// Spread over `k` random orders drawn from `seed`.
    pub fn uncertainty(&self, k: usize, seed: u64) -> Result<UncertaintyReport> {
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        self.uncertainty_from_orders(&sample_orders(self.n_features(), k, seed), seed)
    }

    pub fn shapley(&self, mode: ShapleyMode) -> Result<Vec<f64>> {
        let orders = match mode {
            ShapleyMode::Exhaustive => {
                if self.n_features() > MAX_EXHAUSTIVE_FEATURES {
                    return Err(Error::invalid(format!(
                        "exhaustive Shapley needs p <= {MAX_EXHAUSTIVE_FEATURES}, got p = {}",
                        self.n_features()
                    )));
                }
                FeatureOrder::all(self.n_features())
            }
            ShapleyMode::Sampled { k, seed } => {
                if k == 0 {
                    return Err(Error::invalid("K must be at least 1"));
                }
                sample_orders(self.n_features(), k, seed)
            }
        };
        let samples = self.contributions_over(&orders)?;
        Ok(samples.iter().map(|s| crate::stats::mean(s)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapleyMode {
    /// Average over all `p!` orders; exact Shapley values.
    Exhaustive,
    /// Average over `k` seeded random orders.
    Sampled { k: usize, seed: u64 },
}

pub fn sequential_explain(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    config: &ExplainConfig,
) -> Result<Explanation> {
    Explainer::new(model, dataset, observation, config)?.sequential()
}

pub fn explain_with_order(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    order: &FeatureOrder,
    config: &ExplainConfig,
) -> Result<Explanation> {
    Explainer::new(model, dataset, observation, config)?.with_order(order)
}

pub fn uncertainty_profile(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    k: usize,
    seed: u64,
    config: &ExplainConfig,
) -> Result<UncertaintyReport> {
    Explainer::new(model, dataset, observation, config)?.uncertainty(k, seed)
}

pub fn shapley_estimate(
    model: &ModelHandle,
    dataset: &Dataset,
    observation: &Observation,
    mode: ShapleyMode,
    config: &ExplainConfig,
) -> Result<Vec<f64>> {
    Explainer::new(model, dataset, observation, config)?.shapley(mode)
}
