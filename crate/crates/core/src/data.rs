//! CSV ingestion, splitting, observation sampling and synthetic generators.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{validate_dataset, Dataset, Observation, RawTable};
use crate::error::{Error, Result};

/// Reads a comma-separated file with a header row.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_table_from(file)
}

pub fn read_table_from<R: std::io::Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(RawTable::new(header, rows))
}

/// Maps target tokens to `{0, 1}`.
///
/// With a positive label, rows equal to it map to 1. Without one, a target
/// whose tokens are all `0`/`1` is taken as is; otherwise the two classes
/// are ordered lexicographically and the larger is positive.
pub fn binarize_target(tokens: &[&str], positive_label: Option<&str>) -> Result<Vec<f64>> {
    let classes: BTreeSet<&str> = tokens.iter().map(|t| t.trim()).collect();
    if classes.len() > 2 {
        let shown: Vec<&str> = classes.iter().take(5).copied().collect();
        return Err(Error::NonBinaryTarget(format!(
            "{} classes ({}{})",
            classes.len(),
            shown.join(", "),
            if classes.len() > 5 { ", ..." } else { "" }
        )));
    }
    let positive = match positive_label {
        Some(label) => label.trim().to_string(),
        None if classes.iter().all(|c| matches!(*c, "0" | "1")) => "1".to_string(),
        None => classes.iter().next_back().copied().unwrap_or_default().to_string(),
    };
    Ok(tokens
        .iter()
        .map(|t| if t.trim() == positive { 1.0 } else { 0.0 })
        .collect())
}

/// Splits a binary target column off a raw table.
pub fn split_target(
    raw: &RawTable,
    target: &str,
    positive_label: Option<&str>,
) -> Result<(Dataset, Vec<f64>)> {
    let t = target_index(raw, target)?;
    let tokens: Vec<&str> = raw.column(t).collect();
    let targets = binarize_target(&tokens, positive_label)?;
    Ok((without_column(raw, t)?, targets))
}

/// Splits a real-valued target column off a raw table.
pub fn split_numeric_target(raw: &RawTable, target: &str) -> Result<(Dataset, Vec<f64>)> {
    let t = target_index(raw, target)?;
    let targets = raw
        .column(t)
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NotNumeric {
                    feature: target.to_string(),
                    token: tok.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((without_column(raw, t)?, targets))
}

fn target_index(raw: &RawTable, target: &str) -> Result<usize> {
    raw.check_shape()?;
    raw.check_missing()?;
    raw.header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::UnknownTarget(target.to_string()))
}

fn without_column(raw: &RawTable, t: usize) -> Result<Dataset> {
    let features = RawTable::new(
        raw.header
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != t)
            .map(|(_, h)| h.clone())
            .collect(),
        raw.rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != t)
                    .map(|(_, c)| c.clone())
                    .collect()
            })
            .collect(),
    );
    validate_dataset(&features)
}

/// Loads features and a binary target from a CSV file.
pub fn load_csv(path: &Path, target: &str, positive_label: Option<&str>) -> Result<(Dataset, Vec<f64>)> {
    split_target(&read_table(path)?, target, positive_label)
}

pub fn load_csv_numeric_target(path: &Path, target: &str) -> Result<(Dataset, Vec<f64>)> {
    split_numeric_target(&read_table(path)?, target)
}

/// Loads a CSV file as features only.
pub fn load_features(path: &Path) -> Result<Dataset> {
    validate_dataset(&read_table(path)?)
}

/// Writes features (and optionally a target column) as CSV with LF endings.
pub fn write_csv<W: Write>(
    out: W,
    dataset: &Dataset,
    target: Option<(&str, &[f64])>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let schema = dataset.schema();
    let mut header = schema.names();
    if let Some((name, _)) = target {
        header.push(name.to_string());
    }
    w.write_record(&header)?;
    for i in 0..dataset.n_rows() {
        let mut record: Vec<String> = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| f.format_value(dataset.value(i, j)))
            .collect();
        if let Some((_, t)) = target {
            record.push(format!("{}", t[i]));
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("writing csv", e))?;
    Ok(())
}

/// A seeded train/test row partition.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub train_targets: Vec<f64>,
    pub test: Dataset,
    pub test_targets: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Number of training rows: `max(1, floor(fraction * n))`, leaving at least
/// one test row.
pub fn train_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).floor() as usize).clamp(1, n.saturating_sub(1).max(1))
}

pub fn split(dataset: &Dataset, targets: &[f64], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = dataset.n_rows();
    if n < 2 {
        return Err(Error::invalid("splitting needs at least 2 rows"));
    }
    if targets.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", targets.len())));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = train_size(n, fraction);
    let mut train_indices = order[..k].to_vec();
    let mut test_indices = order[k..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: dataset.select_rows(&train_indices)?,
        train_targets: train_indices.iter().map(|&i| targets[i]).collect(),
        test: dataset.select_rows(&test_indices)?,
        test_targets: test_indices.iter().map(|&i| targets[i]).collect(),
        train_indices,
        test_indices,
    })
}

#[derive(Clone, Debug)]
pub struct ObservationSample {
    pub indices: Vec<usize>,
    pub observations: Vec<Observation>,
    /// Set when more observations were requested than rows exist.
    pub with_replacement: bool,
}

pub fn sample_observations(dataset: &Dataset, count: usize, seed: u64) -> Result<ObservationSample> {
    if count == 0 {
        return Err(Error::invalid("observation count must be at least 1"));
    }
    let n = dataset.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_replacement = count > n;
    let indices: Vec<usize> = if with_replacement {
        (0..count).map(|_| rng.gen_range(0..n)).collect()
    } else {
        index::sample(&mut rng, n, count).into_vec()
    };
    let observations = indices
        .iter()
        .map(|&i| Observation::from_row(dataset, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationSample {
        indices,
        observations,
        with_replacement,
    })
}

pub const GENERATORS: [&str; 4] = ["xor", "additive", "grid4", "product-noise"];

/// Generator settings. `noise_features` appends uniform(0, 1) columns that
/// the target ignores (xor and product-noise only).
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub noise_features: usize,
}

impl SynthParams {
    pub fn new(name: &str, n: usize, seed: u64) -> Self {
        SynthParams {
            name: name.to_string(),
            n,
            seed,
            noise_features: 0,
        }
    }
}

/// Additive generator components, one per feature.
pub fn additive_component(i: usize, x: f64) -> f64 {
    match i {
        0 => (PI * x).sin(),
        1 => x * x,
        2 => 0.5 * x,
        _ => x.abs() - 0.5,
    }
}

pub fn synth(name: &str, n: usize, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    synth_with(&SynthParams::new(name, n, seed))
}

/// Builds a synthetic dataset and target.
///
/// * `grid4`: the rows (0,0), (0,1), (1,0), (1,1) with target `x1 * x2`; `n`
///   is ignored.
/// * `xor`: binary `x1`, `x2`, target `x1 xor x2`.
/// * `additive`: four uniform(-1, 1) features, target the sum of
///   [`additive_component`]s.
/// * `product-noise`: uniform(0, 1) `x1`, `x2`, target
///   `x1 * x2 + uniform(-0.05, 0.05)`.
pub fn synth_with(params: &SynthParams) -> Result<(Dataset, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    if params.name != "grid4" && params.n == 0 {
        return Err(Error::invalid("synthetic datasets need n >= 1"));
    }
    let n = params.n;
    let (names, mut columns, targets): (Vec<String>, Vec<Vec<f64>>, Vec<f64>) =
        match params.name.as_str() {
            "grid4" => {
                let x1 = vec![0., 0., 1., 1.];
                let x2 = vec![0., 1., 0., 1.];
                let y = x1.iter().zip(&x2).map(|(a, b)| a * b).collect();
                (vec!["x1".into(), "x2".into()], vec![x1, x2], y)
            }
            "xor" => {
                let mut x1 = Vec::with_capacity(n);
                let mut x2 = Vec::with_capacity(n);
                for _ in 0..n {
                    x1.push(rng.gen_range(0..2u8) as f64);
                    x2.push(rng.gen_range(0..2u8) as f64);
                }
                let y = x1
                    .iter()
                    .zip(&x2)
                    .map(|(a, b)| if a != b { 1.0 } else { 0.0 })
                    .collect();
                (vec!["x1".into(), "x2".into()], vec![x1, x2], y)
            }
            "additive" => {
                let cols: Vec<Vec<f64>> = (0..4)
                    .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let y = (0..n)
                    .map(|r| (0..4).map(|i| additive_component(i, cols[i][r])).sum())
                    .collect();
                ((1..=4).map(|i| format!("x{i}")).collect(), cols, y)
            }
            "product-noise" => {
                let mut x1 = Vec::with_capacity(n);
                let mut x2 = Vec::with_capacity(n);
                let mut y = Vec::with_capacity(n);
                for _ in 0..n {
                    let a: f64 = rng.gen_range(0.0..1.0);
                    let b: f64 = rng.gen_range(0.0..1.0);
                    let eps: f64 = rng.gen_range(-0.05..0.05);
                    x1.push(a);
                    x2.push(b);
                    y.push(a * b + eps);
                }
                (vec!["x1".into(), "x2".into()], vec![x1, x2], y)
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown generator `{other}` (expected one of {})",
                    GENERATORS.join(", ")
                )))
            }
        };
    let mut names = names;
    if matches!(params.name.as_str(), "xor" | "product-noise") {
        let rows = columns[0].len();
        for k in 0..params.noise_features {
            names.push(format!("noise{}", k + 1));
            columns.push((0..rows).map(|_| rng.gen_range(0.0..1.0)).collect());
        }
    }
    Ok((Dataset::numeric(names, columns)?, targets))
}

/// True when every target is 0 or 1.
pub fn is_binary(targets: &[f64]) -> bool {
    targets.iter().all(|&t| t == 0.0 || t == 1.0)
}
