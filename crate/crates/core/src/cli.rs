//! The `ibd` command line.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 model failure.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchConfig, ModelMatrix};
use crate::data::{self, SynthParams};
use crate::dataset::{bind_observation, Dataset, Observation};
use crate::error::Error;
use crate::explainer::{ExplainConfig, Explainer, FeatureOrder, DEFAULT_MAX_ROWS, DEFAULT_PERMUTATIONS};
use crate::model::ModelHandle;
use crate::models::{self, ExternalModelConfig, ForestParams, GbmParams};
use crate::render::{self, OutputKind, RenderSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ibd", version, about = "Explain single predictions of tabular models, with pairwise interactions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a built-in model and save it as JSON.
    Train(TrainArgs),
    /// Explain one observation.
    Explain(ExplainArgs),
    /// Contribution spread over random feature orders.
    Uncertainty(UncertaintyArgs),
    /// Count interactions across model families.
    Benchmark(BenchArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file, or `synth:NAME[:N]`.
    #[arg(long)]
    pub data: String,
    /// Target column, dropped from the features.
    #[arg(long)]
    pub target: Option<String>,
    /// Class mapped to 1 when the target is not numeric.
    #[arg(long)]
    pub positive_label: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `gbm:depth=2,trees=200,rate=0.1,min_leaf=5`, `rf:trees=100,...` or `linear`.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file, family spec (trained on --data) or `ext:COMMAND`.
    #[arg(long)]
    pub model: String,
    /// Row index into --data, or an inline CSV row of feature values.
    #[arg(long, allow_hyphen_values = true)]
    pub observation: String,
    /// Comma-separated feature names; explains additively in this order.
    #[arg(long)]
    pub order: Option<String>,
    /// Background row cap; 0 uses every row.
    #[arg(long, default_value_t = DEFAULT_MAX_ROWS)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 1.0)]
    pub interaction_preference: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json, text or svg.
    #[arg(long, default_value = "json")]
    pub format: String,
    /// Defaults to the IBD_WORKERS environment variable, else 1.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    pub explain: ExplainArgs,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON task list; the bundled synthetic suite when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory receiving buckets.csv and buckets.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observations explained per task (overrides the manifest).
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// xor, additive, grid4 or product-noise.
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub noise_features: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_model_failure() { EXIT_MODEL } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Prefixes the error with the flag it came from.
fn flag<T>(name: &str, r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("--{name}: {}", err.message);
        err
    })
}

/// Parses arguments and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Uncertainty(a) => cmd_uncertainty(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Features plus the target when one is available.
struct Loaded {
    dataset: Dataset,
    targets: Option<Vec<f64>>,
}

fn load_data(args: &DataArgs) -> CliResult<Loaded> {
    if let Some(rest) = args.data.strip_prefix("synth:") {
        let (name, n) = match rest.split_once(':') {
            Some((name, n)) => (
                name,
                n.parse::<usize>()
                    .map_err(|_| CliError::invalid(format!("--data: bad row count `{n}`")))?,
            ),
            None => (rest, 500),
        };
        let (dataset, targets) = flag("data", data::synth(name, n, args.seed))?;
        return Ok(Loaded {
            dataset,
            targets: Some(targets),
        });
    }
    let path = Path::new(&args.data);
    let Some(target) = args.target.as_deref() else {
        return Ok(Loaded {
            dataset: flag("data", data::load_features(path))?,
            targets: None,
        });
    };
    let raw = flag("data", data::read_table(path))?;
    if !raw.header.iter().any(|h| h == target) {
        return Err(CliError::invalid(format!("--target: unknown target column `{target}`")));
    }
    let loaded = match args.positive_label.as_deref() {
        Some(label) => data::split_target(&raw, target, Some(label)),
        None => data::split_numeric_target(&raw, target)
            .or_else(|_| data::split_target(&raw, target, None)),
    };
    let (dataset, targets) = flag("target", loaded)?;
    Ok(Loaded {
        dataset,
        targets: Some(targets),
    })
}

fn parse_kv(spec: &str) -> CliResult<Vec<(String, String)>> {
    spec.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::invalid(format!("--model: expected key=value, got `{kv}`")))
        })
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::invalid(format!("--model: bad value `{v}` for `{key}`")))
}

fn train_from_spec(spec: &str, loaded: &Loaded, seed: u64) -> CliResult<Option<ModelHandle>> {
    let (family, params) = spec.split_once(':').unwrap_or((spec, ""));
    if !matches!(family, "gbm" | "rf" | "linear") {
        return Ok(None);
    }
    let Some(targets) = loaded.targets.as_deref() else {
        return Err(CliError::invalid("--target: training a model needs a target column"));
    };
    let kv = parse_kv(params)?;
    let unknown = |k: &str| CliError::invalid(format!("--model: unknown {family} parameter `{k}`"));
    let model = match family {
        "gbm" => {
            let mut p = GbmParams {
                seed,
                ..GbmParams::default()
            };
            for (k, v) in &kv {
                match k.as_str() {
                    "depth" => p.max_depth = num(k, v)?,
                    "trees" => p.n_trees = num(k, v)?,
                    "rate" => p.learning_rate = num(k, v)?,
                    "min_leaf" => p.min_leaf = num(k, v)?,
                    _ => return Err(unknown(k)),
                }
            }
            ModelHandle::new(flag("model", models::train_gbm(&loaded.dataset, targets, &p))?)
        }
        "rf" => {
            let mut p = ForestParams {
                seed,
                ..ForestParams::default()
            };
            for (k, v) in &kv {
                match k.as_str() {
                    "trees" => p.n_trees = num(k, v)?,
                    "depth" => p.max_depth = num(k, v)?,
                    "min_leaf" => p.min_leaf = num(k, v)?,
                    "mtry" => p.mtry = Some(num(k, v)?),
                    _ => return Err(unknown(k)),
                }
            }
            ModelHandle::new(flag("model", models::train_random_forest(&loaded.dataset, targets, &p))?)
        }
        _ => {
            if let Some((k, _)) = kv.first() {
                return Err(unknown(k));
            }
            ModelHandle::new(flag("model", models::train_linear(&loaded.dataset, targets))?)
        }
    };
    Ok(Some(model))
}

fn resolve_model(spec: &str, loaded: &Loaded, seed: u64) -> CliResult<ModelHandle> {
    if let Some(cmd) = spec.strip_prefix("ext:") {
        let model = flag("model", models::external_model(ExternalModelConfig::new(cmd)))?;
        return Ok(ModelHandle::new(model));
    }
    if let Some(model) = train_from_spec(spec, loaded, seed)? {
        return Ok(model);
    }
    let model = flag("model", models::load_model(Path::new(spec)))?;
    if let Some(schema) = models::model_schema(&model) {
        flag("model", schema.ensure_compatible(loaded.dataset.schema()))?;
    }
    Ok(model)
}

fn parse_observation(text: &str, dataset: &Dataset) -> CliResult<Observation> {
    let text = text.trim();
    if let Ok(row) = text.parse::<usize>() {
        return flag("observation", Observation::from_row(dataset, row));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let record = match reader.records().next() {
        Some(Ok(r)) => r,
        _ => return Err(CliError::invalid(format!("--observation: cannot parse `{text}`"))),
    };
    let values: Vec<&str> = record.iter().map(str::trim).collect();
    flag("observation", bind_observation(dataset, &values))
}

fn write_output(out: Option<&Path>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::invalid(format!("--out: writing {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::invalid(format!("writing output: {e}")))
        }
    }
}

struct Prepared {
    explainer: Explainer,
    dataset: Dataset,
    kind: OutputKind,
}

fn prepare(a: &ExplainArgs) -> CliResult<Prepared> {
    let kind: OutputKind = flag("format", a.format.parse())?;
    let loaded = load_data(&a.data)?;
    let model = resolve_model(&a.model, &loaded, a.data.seed)?;
    let observation = parse_observation(&a.observation, &loaded.dataset)?;
    let workers = a.workers.unwrap_or_else(crate::default_workers);
    if workers == 0 {
        return Err(CliError::invalid("--workers: must be at least 1"));
    }
    if !(a.interaction_preference.is_finite() && a.interaction_preference > 0.0) {
        return Err(CliError::invalid("--interaction-preference: must be a positive number"));
    }
    let config = ExplainConfig {
        interaction_preference: a.interaction_preference,
        max_rows: (a.max_rows > 0).then_some(a.max_rows),
        seed: a.data.seed,
        workers,
        ..ExplainConfig::default()
    };
    let explainer = Explainer::new(&model, &loaded.dataset, &observation, &config)?;
    Ok(Prepared {
        explainer,
        dataset: loaded.dataset,
        kind,
    })
}

fn render_spec(kind: OutputKind) -> RenderSpec {
    RenderSpec {
        kind,
        ..RenderSpec::default()
    }
}

pub fn cmd_explain(a: &ExplainArgs) -> CliResult<()> {
    let prepared = prepare(a)?;
    let explanation = match &a.order {
        Some(order) => {
            let names: Vec<&str> = order.split(',').map(str::trim).collect();
            let order = flag(
                "order",
                FeatureOrder::from_names(&names, &prepared.dataset.feature_names()),
            )?;
            prepared.explainer.with_order(&order)?
        }
        None => prepared.explainer.sequential()?,
    };
    let spec = render_spec(prepared.kind);
    let content = match prepared.kind {
        OutputKind::Json => explanation.to_json(),
        OutputKind::Text => render::explanation_text(&explanation, spec.precision),
        OutputKind::Svg => render::render_waterfall(&explanation, &spec)?,
    };
    write_output(a.out.as_deref(), &content)
}

pub fn cmd_uncertainty(a: &UncertaintyArgs) -> CliResult<()> {
    if a.permutations == 0 {
        return Err(CliError::invalid("--permutations: must be at least 1"));
    }
    if a.explain.order.is_some() {
        return Err(CliError::invalid("--order: not used by uncertainty"));
    }
    let prepared = prepare(&a.explain)?;
    let report = prepared.explainer.uncertainty(a.permutations, a.explain.data.seed)?;
    let spec = render_spec(prepared.kind);
    match prepared.kind {
        OutputKind::Json => write_output(a.explain.out.as_deref(), &report.to_json()),
        OutputKind::Text => write_output(
            a.explain.out.as_deref(),
            &render::uncertainty_text(&report, spec.precision),
        ),
        OutputKind::Svg => {
            let svg = render::render_uncertainty(&report, &spec)?;
            // the report travels next to the plot
            if let Some(out) = a.explain.out.as_deref() {
                write_output(Some(&out.with_extension("json")), &report.to_json())?;
            }
            write_output(a.explain.out.as_deref(), &svg)
        }
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let model = train_from_spec(&a.model, &loaded, a.data.seed)?.ok_or_else(|| {
        CliError::invalid(format!(
            "--model: expected gbm:..., rf:... or linear, got `{}`",
            a.model
        ))
    })?;
    let targets = loaded.targets.as_deref().unwrap_or_default();
    let scores = model.score(&loaded.dataset.to_rows()).map_err(Error::from)?;
    let mse = scores
        .iter()
        .zip(targets)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        / scores.len() as f64;
    flag("out", models::save_model(&model, &a.out))?;
    eprintln!(
        "trained {} on {} rows, train MSE {mse:.4}",
        model.name(),
        loaded.dataset.n_rows()
    );
    Ok(())
}

pub fn cmd_benchmark(a: &BenchArgs) -> CliResult<()> {
    let mut tasks = match &a.manifest {
        Some(path) => flag("manifest", bench::load_manifest(path))?,
        None => bench::synthetic_suite(a.seed),
    };
    if let Some(n) = a.n_obs {
        if n == 0 {
            return Err(CliError::invalid("--n-obs: must be at least 1"));
        }
        for t in &mut tasks {
            t.n_obs = n;
        }
    }
    let workers = a.workers.unwrap_or_else(crate::default_workers);
    if workers == 0 {
        return Err(CliError::invalid("--workers: must be at least 1"));
    }
    let config = BenchConfig {
        workers,
        ..BenchConfig::default()
    };
    let result = bench::run_benchmark(&tasks, &ModelMatrix::default(), &config)?;
    for f in &result.failures {
        eprintln!("warning: task {} failed: {}", f.task, f.error);
    }
    let table = if result.rows.is_empty() {
        eprintln!("warning: no task completed");
        bench::BucketTable {
            text: String::new(),
            csv: bench::BUCKET_CSV_HEADER.to_string(),
        }
    } else {
        bench::render_bucket_table(&result)?
    };
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::invalid(format!("--out: creating {}: {e}", dir.display())))?;
        write_output(Some(&dir.join("buckets.csv")), &table.csv)?;
        write_output(Some(&dir.join("buckets.txt")), &table.text)?;
    }
    write_output(None, &table.text)
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let params = SynthParams {
        noise_features: a.noise_features,
        ..SynthParams::new(&a.name, a.n, a.seed)
    };
    let (dataset, targets) = flag("name", data::synth_with(&params))?;
    let mut buf = Vec::new();
    data::write_csv(&mut buf, &dataset, Some(("y", &targets)))?;
    write_output(a.out.as_deref(), &String::from_utf8(buf).expect("csv output is UTF-8"))
}
