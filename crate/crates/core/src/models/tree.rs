//! Regression trees, squared-loss gradient boosting and random forests.

use std::any::Any;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, RowMatrix, Schema};
use crate::error::{Error, ModelError, Result};
use crate::model::{Model, ModelInfo};

pub const DEFAULT_MIN_LEAF: usize = 5;

/// Routing rule of an internal node. Rows matching the rule go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `x < threshold`
    Threshold(f64),
    /// level id is in the set
    Levels(Vec<u32>),
}

impl SplitRule {
    fn goes_left(&self, x: f64) -> bool {
        match self {
            SplitRule::Threshold(t) => x < *t,
            SplitRule::Levels(levels) => levels.contains(&(x as u32)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => at = if rule.goes_left(row[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Checks structure: children in range and reached once, finite values.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("empty tree".into()));
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(at) = stack.pop() {
            match &self.nodes[at] {
                TreeNode::Leaf { value } if !value.is_finite() => {
                    return Err(Error::Format(format!("non-finite leaf at node {at}")));
                }
                TreeNode::Leaf { .. } => {}
                TreeNode::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    if *feature >= n_features {
                        return Err(Error::Format(format!(
                            "node {at} splits on feature {feature} of {n_features}"
                        )));
                    }
                    if let SplitRule::Threshold(t) = rule {
                        if !t.is_finite() {
                            return Err(Error::Format(format!("non-finite threshold at node {at}")));
                        }
                    }
                    for &child in [left, right] {
                        if child >= self.nodes.len() || child <= at || reached[child] {
                            return Err(Error::Format(format!("bad child {child} of node {at}")));
                        }
                        reached[child] = true;
                        stack.push(child);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Boosted,
    Bagged,
}

/// Sum (boosted) or mean (bagged) of regression trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub schema: Schema,
    pub mode: EnsembleMode,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub init_score: f64,
    pub trees: Vec<Tree>,
    #[serde(skip)]
    info: ModelInfo,
}

impl TreeEnsemble {
    pub fn new(
        schema: Schema,
        mode: EnsembleMode,
        max_depth: usize,
        learning_rate: f64,
        init_score: f64,
        trees: Vec<Tree>,
        info: ModelInfo,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Format("ensemble without trees".into()));
        }
        if !learning_rate.is_finite() || !init_score.is_finite() {
            return Err(Error::Format("non-finite ensemble parameters".into()));
        }
        for (k, tree) in trees.iter().enumerate() {
            tree.validate(schema.len())?;
            if tree.depth() > max_depth {
                return Err(Error::Format(format!(
                    "tree {k} has depth {} > max depth {max_depth}",
                    tree.depth()
                )));
            }
        }
        Ok(TreeEnsemble {
            schema,
            mode,
            max_depth,
            learning_rate,
            init_score,
            trees,
            info,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.mode {
            EnsembleMode::Boosted => {
                let mut acc = self.init_score;
                for t in &self.trees {
                    acc += self.learning_rate * t.predict_row(row);
                }
                acc
            }
            EnsembleMode::Bagged => {
                let mut acc = 0.0;
                for t in &self.trees {
                    acc += t.predict_row(row);
                }
                acc / self.trees.len() as f64
            }
        }
    }

    pub(crate) fn set_info(&mut self, info: ModelInfo) {
        self.info = info;
    }
}

impl Model for TreeEnsemble {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        if rows.n_cols() != self.schema.len() {
            return Err(ModelError::Arity {
                expected: self.schema.len(),
                got: rows.n_cols(),
            });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbmParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            max_depth: 2,
            n_trees: 200,
            learning_rate: 0.1,
            min_leaf: DEFAULT_MIN_LEAF,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `max(1, floor(sqrt(p)))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 6,
            min_leaf: DEFAULT_MIN_LEAF,
            mtry: None,
            seed: 0,
        }
    }
}

fn check_targets(dataset: &Dataset, targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::invalid("empty targets"));
    }
    if targets.len() != dataset.n_rows() {
        return Err(Error::invalid(format!(
            "{} targets for {} rows",
            targets.len(),
            dataset.n_rows()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("non-finite target at row {i}")));
    }
    Ok(())
}

/// Squared-loss gradient boosting on raw targets.
pub fn train_gbm(dataset: &Dataset, targets: &[f64], params: &GbmParams) -> Result<TreeEnsemble> {
    check_targets(dataset, targets)?;
    if !(1..=3).contains(&params.max_depth) {
        return Err(Error::invalid(format!(
            "GBM max depth must be 1, 2 or 3, got {}",
            params.max_depth
        )));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let n = dataset.n_rows();
    let init_score = targets.iter().sum::<f64>() / n as f64;
    let builder = TreeBuilder::new(dataset, params.max_depth, params.min_leaf.max(1));
    let mut fitted = vec![init_score; n];
    let mut residuals = vec![0.0; n];
    let all_rows: Vec<usize> = (0..n).collect();
    let matrix = dataset.to_rows();
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        for i in 0..n {
            residuals[i] = targets[i] - fitted[i];
        }
        let tree = builder.grow(&residuals, all_rows.clone(), &mut FeaturePicker::All);
        for (f, row) in fitted.iter_mut().zip(matrix.rows()) {
            *f += params.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
    }
    let info = ModelInfo::new(format!("gbm_d{}", params.max_depth), "gbm")
        .with("max_depth", params.max_depth)
        .with("n_trees", params.n_trees)
        .with("learning_rate", params.learning_rate)
        .with("min_leaf", params.min_leaf)
        .with("seed", params.seed);
    TreeEnsemble::new(
        (**dataset.schema()).clone(),
        EnsembleMode::Boosted,
        params.max_depth,
        params.learning_rate,
        init_score,
        trees,
        info,
    )
}

/// Bagged regression trees with per-split feature subsampling.
pub fn train_random_forest(
    dataset: &Dataset,
    targets: &[f64],
    params: &ForestParams,
) -> Result<TreeEnsemble> {
    check_targets(dataset, targets)?;
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    if params.max_depth == 0 {
        return Err(Error::invalid("max depth must be at least 1"));
    }
    let n = dataset.n_rows();
    let p = dataset.n_features();
    let mtry = params
        .mtry
        .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
        .clamp(1, p);
    let builder = TreeBuilder::new(dataset, params.max_depth, params.min_leaf.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut picker = FeaturePicker::Random {
            rng: &mut rng,
            mtry,
        };
        trees.push(builder.grow(targets, rows, &mut picker));
    }
    let info = ModelInfo::new("random_forest", "random_forest")
        .with("n_trees", params.n_trees)
        .with("max_depth", params.max_depth)
        .with("min_leaf", params.min_leaf)
        .with("mtry", mtry)
        .with("seed", params.seed);
    TreeEnsemble::new(
        (**dataset.schema()).clone(),
        EnsembleMode::Bagged,
        params.max_depth,
        1.0,
        0.0,
        trees,
        info,
    )
}

enum FeaturePicker<'a> {
    All,
    /// Tries `mtry` random features first and falls back to the rest when
    /// none of them splits.
    Random { rng: &'a mut ChaCha8Rng, mtry: usize },
}

impl FeaturePicker<'_> {
    /// Candidate features in batches; the next batch is tried only when the
    /// previous one yields no valid split.
    fn batches(&mut self, p: usize) -> Vec<Vec<usize>> {
        match self {
            FeaturePicker::All => vec![(0..p).collect()],
            FeaturePicker::Random { rng, mtry } => {
                let mut all: Vec<usize> = (0..p).collect();
                all.shuffle(*rng);
                let rest = all.split_off(*mtry);
                let mut first = all;
                first.sort_unstable();
                if rest.is_empty() {
                    vec![first]
                } else {
                    vec![first, rest]
                }
            }
        }
    }
}

struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
}

struct TreeBuilder<'a> {
    columns: Vec<&'a [f64]>,
    schema: &'a Schema,
    max_depth: usize,
    min_leaf: usize,
}

impl<'a> TreeBuilder<'a> {
    fn new(dataset: &'a Dataset, max_depth: usize, min_leaf: usize) -> Self {
        TreeBuilder {
            columns: (0..dataset.n_features()).map(|j| dataset.column(j)).collect(),
            schema: dataset.schema(),
            max_depth,
            min_leaf,
        }
    }

    fn grow(&self, targets: &[f64], rows: Vec<usize>, picker: &mut FeaturePicker<'_>) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        self.grow_node(&mut tree, targets, rows, 0, picker);
        tree
    }

    fn grow_node(
        &self,
        tree: &mut Tree,
        targets: &[f64],
        rows: Vec<usize>,
        depth: usize,
        picker: &mut FeaturePicker<'_>,
    ) -> usize {
        let at = tree.nodes.len();
        let mean = rows.iter().map(|&r| targets[r]).sum::<f64>() / rows.len() as f64;
        tree.nodes.push(TreeNode::Leaf { value: mean });
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return at;
        }
        let sst: f64 = rows.iter().map(|&r| (targets[r] - mean).powi(2)).sum();
        if sst <= 0.0 {
            return at;
        }
        let mut best: Option<Candidate> = None;
        for batch in picker.batches(self.columns.len()) {
            for &f in &batch {
                if let Some(c) = self.best_split(f, targets, &rows) {
                    if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            // an impure node takes its best split even at zero gain, the
            // only way a greedy tree can start on XOR-like targets
            if best.is_some() {
                break;
            }
        }
        let Some(best) = best else {
            return at;
        };
        let column = self.columns[best.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| best.rule.goes_left(column[r]));
        let left = self.grow_node(tree, targets, left_rows, depth + 1, picker);
        let right = self.grow_node(tree, targets, right_rows, depth + 1, picker);
        tree.nodes[at] = TreeNode::Split {
            feature: best.feature,
            rule: best.rule,
            left,
            right,
        };
        at
    }

    fn best_split(&self, feature: usize, targets: &[f64], rows: &[usize]) -> Option<Candidate> {
        match &self.schema.features[feature].kind {
            FeatureKind::Numeric => self.best_threshold(feature, targets, rows),
            FeatureKind::Categorical { levels } => {
                self.best_level(feature, levels.len(), targets, rows)
            }
        }
    }

    fn best_threshold(&self, feature: usize, targets: &[f64], rows: &[usize]) -> Option<Candidate> {
        let column = self.columns[feature];
        let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&r| (column[r], targets[r])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total: f64 = sorted.iter().map(|s| s.1).sum();
        let parent = total * total / n as f64;
        let mut left_sum = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 1..n {
            left_sum += sorted[k - 1].1;
            let (lo, hi) = (sorted[k - 1].0, sorted[k].0);
            if lo == hi || k < self.min_leaf || n - k < self.min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64
                - parent;
            if best.is_none_or(|(g, _)| gain > g) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid > lo && mid <= hi { mid } else { hi };
                best = Some((gain, threshold));
            }
        }
        best.map(|(gain, t)| Candidate {
            gain,
            feature,
            rule: SplitRule::Threshold(t),
        })
    }

    fn best_level(
        &self,
        feature: usize,
        n_levels: usize,
        targets: &[f64],
        rows: &[usize],
    ) -> Option<Candidate> {
        let column = self.columns[feature];
        let mut sums = vec![0.0; n_levels];
        let mut counts = vec![0usize; n_levels];
        for &r in rows {
            let l = column[r] as usize;
            sums[l] += targets[r];
            counts[l] += 1;
        }
        let n = rows.len();
        let total: f64 = sums.iter().sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, u32)> = None;
        for level in 0..n_levels {
            let k = counts[level];
            if k < self.min_leaf || n - k < self.min_leaf {
                continue;
            }
            let rest = total - sums[level];
            let gain = sums[level] * sums[level] / k as f64 + rest * rest / (n - k) as f64 - parent;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, level as u32));
            }
        }
        best.map(|(gain, level)| Candidate {
            gain,
            feature,
            rule: SplitRule::Levels(vec![level]),
        })
    }
}
