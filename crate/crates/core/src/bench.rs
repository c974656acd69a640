//! Interaction-frequency benchmark over a matrix of model families.
//!
//! For every task: split, train each family, score rank AUC on the test
//! split, explain sampled test observations with the sequential explainer
//! and bucket explanations by their number of pair steps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::data::{self, SynthParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::explainer::{ExplainConfig, Explainer};
use crate::explanation::Explanation;
use crate::model::ModelHandle;
use crate::models::{self, ForestParams, GbmParams};
use crate::stats;

/// Bucket labels: explanations with 0, 1, 2, 3 and 4 or more pair steps.
pub const BUCKETS: [&str; 5] = ["0", "1", "2", "3", "4+"];

pub fn count_interactions(explanation: &Explanation) -> usize {
    explanation.pair_count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    RandomForest,
    Gbm { depth: usize },
}

impl Family {
    /// Random forest plus GBM with depths 1, 2 and 3.
    pub fn standard() -> Vec<Family> {
        vec![
            Family::RandomForest,
            Family::Gbm { depth: 1 },
            Family::Gbm { depth: 2 },
            Family::Gbm { depth: 3 },
        ]
    }

    pub fn name(&self) -> String {
        match self {
            Family::RandomForest => "rf".into(),
            Family::Gbm { depth } => format!("gbm_d{depth}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelMatrix {
    pub families: Vec<Family>,
    pub gbm: GbmParams,
    pub forest: ForestParams,
}

impl Default for ModelMatrix {
    fn default() -> Self {
        ModelMatrix {
            families: Family::standard(),
            gbm: GbmParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl ModelMatrix {
    pub fn train(&self, family: Family, dataset: &Dataset, targets: &[f64], seed: u64) -> Result<ModelHandle> {
        Ok(match family {
            Family::RandomForest => {
                let params = ForestParams {
                    seed,
                    ..self.forest.clone()
                };
                ModelHandle::new(models::train_random_forest(dataset, targets, &params)?)
            }
            Family::Gbm { depth } => {
                let params = GbmParams {
                    max_depth: depth,
                    seed,
                    ..self.gbm.clone()
                };
                ModelHandle::new(models::train_gbm(dataset, targets, &params)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskSource {
    Path(PathBuf),
    Generator(SynthParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub source: TaskSource,
    pub target: String,
    pub positive_label: Option<String>,
    pub n_obs: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl TaskSpec {
    pub fn generator(name: &str, generator: &str, n: usize, noise_features: usize, seed: u64) -> Self {
        TaskSpec {
            name: name.to_string(),
            source: TaskSource::Generator(SynthParams {
                name: generator.to_string(),
                n,
                seed,
                noise_features,
            }),
            target: "y".into(),
            positive_label: None,
            n_obs: 50,
            split_fraction: 0.7,
            seed,
        }
    }

    /// Features and targets. Generator targets are used as produced; CSV
    /// targets are mapped to 0/1.
    pub fn load(&self) -> Result<(Dataset, Vec<f64>)> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        match &self.source {
            TaskSource::Path(p) => data::load_csv(p, &self.target, self.positive_label.as_deref()),
            TaskSource::Generator(params) => data::synth_with(params),
        }
    }
}

/// The bundled synthetic suite.
pub fn synthetic_suite(seed: u64) -> Vec<TaskSpec> {
    vec![
        TaskSpec::generator("xor", "xor", 600, 1, seed),
        TaskSpec::generator("additive", "additive", 600, 0, seed.wrapping_add(1)),
        TaskSpec::generator("product-noise", "product-noise", 600, 1, seed.wrapping_add(2)),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    path: Option<PathBuf>,
    generator: Option<String>,
    target: Option<String>,
    positive_label: Option<String>,
    n_obs: Option<usize>,
    seed: Option<u64>,
    n: Option<usize>,
    noise_features: Option<usize>,
    split: Option<f64>,
}

/// Parses a manifest; relative paths resolve against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<TaskSpec>> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(text)?;
    if entries.is_empty() {
        return Err(Error::invalid("manifest lists no tasks"));
    }
    entries
        .into_iter()
        .map(|e| {
            let seed = e.seed.unwrap_or(0);
            let source = match (e.path, e.generator) {
                (Some(p), None) => TaskSource::Path(if p.is_relative() { base_dir.join(p) } else { p }),
                (None, Some(g)) => TaskSource::Generator(SynthParams {
                    name: g,
                    n: e.n.unwrap_or(600),
                    seed,
                    noise_features: e.noise_features.unwrap_or(0),
                }),
                _ => {
                    return Err(Error::invalid(format!(
                        "task `{}` needs exactly one of `path` or `generator`",
                        e.name
                    )))
                }
            };
            if matches!(source, TaskSource::Path(_)) && e.target.is_none() {
                return Err(Error::invalid(format!("task `{}` needs a `target`", e.name)));
            }
            Ok(TaskSpec {
                name: e.name,
                source,
                target: e.target.unwrap_or_else(|| "y".into()),
                positive_label: e.positive_label,
                n_obs: e.n_obs.unwrap_or(50),
                split_fraction: e.split.unwrap_or(0.7),
                seed,
            })
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<TaskSpec>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub task: String,
    pub family: String,
    /// Counts of explanations with 0, 1, 2, 3, 4+ pair steps.
    pub buckets: [usize; 5],
    pub n_explained: usize,
    pub mean_interactions: f64,
    /// Pair `(x_a, x_b)` ranked first among candidates in this many
    /// explanations, keyed by feature names.
    pub top_pairs: Vec<(String, usize)>,
    pub auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskFailure {
    pub task: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<TaskFailure>,
}

impl BenchResult {
    pub fn row(&self, task: &str, family: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.task == task && r.family == family)
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub explain: ExplainConfig,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            explain: ExplainConfig {
                workers: 1,
                ..ExplainConfig::default()
            },
            workers: crate::default_workers(),
        }
    }
}

/// Labels used for AUC: binary targets as is, otherwise `target > median`
/// of the training targets.
pub fn auc_labels(test_targets: &[f64], train_targets: &[f64]) -> Vec<bool> {
    if data::is_binary(train_targets) && data::is_binary(test_targets) {
        test_targets.iter().map(|&t| t == 1.0).collect()
    } else {
        let median = stats::quantile(train_targets, 0.5);
        test_targets.iter().map(|&t| t > median).collect()
    }
}

fn run_family(
    task: &TaskSpec,
    family: Family,
    matrix: &ModelMatrix,
    split: &data::Split,
    observations: &data::ObservationSample,
    config: &BenchConfig,
) -> Result<BenchRow> {
    let start = Instant::now();
    let model = matrix.train(family, &split.train, &split.train_targets, task.seed)?;
    let test_scores = model.score(&split.test.to_rows())?;
    let auc = stats::auc(&test_scores, &auc_labels(&split.test_targets, &split.train_targets));

    let explain = ExplainConfig {
        seed: task.seed,
        ..config.explain.clone()
    };
    let names = split.train.feature_names();
    let mut buckets = [0usize; 5];
    let mut total = 0usize;
    let mut top_pairs: Vec<(String, usize)> = Vec::new();
    for obs in &observations.observations {
        let explainer = Explainer::new(&model, &split.train, obs, &explain)?;
        let explanation = explainer.sequential()?;
        let count = count_interactions(&explanation);
        buckets[count.min(4)] += 1;
        total += count;
        if let Some(first) = explanation.steps().first().filter(|s| s.group.is_pair()) {
            let label = first.group.label(&names);
            match top_pairs.iter_mut().find(|(l, _)| *l == label) {
                Some((_, c)) => *c += 1,
                None => top_pairs.push((label, 1)),
            }
        }
    }
    top_pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n = observations.observations.len();
    Ok(BenchRow {
        task: task.name.clone(),
        family: family.name(),
        buckets,
        n_explained: n,
        mean_interactions: total as f64 / n as f64,
        top_pairs,
        auc,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_task(task: &TaskSpec, matrix: &ModelMatrix, config: &BenchConfig) -> Result<Vec<Result<BenchRow>>> {
    let (dataset, targets) = task.load()?;
    let split = data::split(&dataset, &targets, task.split_fraction, task.seed)?;
    let observations = data::sample_observations(&split.test, task.n_obs, task.seed)?;
    let run = |f: &Family| run_family(task, *f, matrix, &split, &observations, config);
    Ok(if config.workers > 1 {
        matrix.families.par_iter().map(run).collect()
    } else {
        matrix.families.iter().map(run).collect()
    })
}

/// Runs every task; failing tasks are recorded and skipped.
pub fn run_benchmark(tasks: &[TaskSpec], matrix: &ModelMatrix, config: &BenchConfig) -> Result<BenchResult> {
    if tasks.is_empty() {
        return Err(Error::invalid("benchmark needs at least one task"));
    }
    if matrix.families.is_empty() {
        return Err(Error::invalid("benchmark needs at least one model family"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<Vec<Result<BenchRow>>>> = pool.install(|| {
        if config.workers > 1 {
            tasks.par_iter().map(|t| run_task(t, matrix, config)).collect()
        } else {
            tasks.iter().map(|t| run_task(t, matrix, config)).collect()
        }
    });
    let mut result = BenchResult::default();
    for (task, outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok(rows) => {
                for (family, row) in matrix.families.iter().zip(rows) {
                    match row {
                        Ok(row) => result.rows.push(row),
                        Err(e) => result.failures.push(TaskFailure {
                            task: format!("{}/{}", task.name, family.name()),
                            error: e.to_string(),
                        }),
                    }
                }
            }
            Err(e) => result.failures.push(TaskFailure {
                task: task.name.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(result)
}

/// `"49 1 0 0 0"`
pub fn format_buckets(buckets: &[usize; 5]) -> String {
    buckets
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Header line of the bucket table CSV.
pub const BUCKET_CSV_HEADER: &str = "task,model,n_obs,auc,b0,b1,b2,b3,b4plus,mean_interactions\n";

#[derive(Clone, Debug, PartialEq)]
pub struct BucketTable {
    pub text: String,
    pub csv: String,
}

/// Table with one row per (task, family) and bucket columns 0|1|2|3|4+.
pub fn render_bucket_table(result: &BenchResult) -> Result<BucketTable> {
    if result.rows.is_empty() {
        return Err(Error::invalid("benchmark result has no rows"));
    }
    let fmt_auc = |a: Option<f64>| a.map_or("NA".to_string(), |v| format!("{v:.4}"));
    let task_w = result.rows.iter().map(|r| r.task.len()).max().unwrap_or(4).max(4);
    let mut text = String::new();
    writeln!(
        text,
        "{:<task_w$}  {:<8}  {:>6}  {:>7}  {}",
        "task",
        "model",
        "AUC",
        "time_s",
        BUCKETS.join(" ")
    )
    .unwrap();
    for r in &result.rows {
        writeln!(
            text,
            "{:<task_w$}  {:<8}  {:>6}  {:>7.2}  {}",
            r.task,
            r.family,
            fmt_auc(r.auc),
            r.seconds,
            format_buckets(&r.buckets)
        )
        .unwrap();
    }
    for f in &result.failures {
        writeln!(text, "# failed {}: {}", f.task, f.error).unwrap();
    }

    let mut csv = String::from(BUCKET_CSV_HEADER);
    for r in &result.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{:.4}",
            r.task,
            r.family,
            r.n_explained,
            fmt_auc(r.auc),
            r.buckets
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            r.mean_interactions
        )
        .unwrap();
    }
    Ok(BucketTable { text, csv })
}
