//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use ibd_core::bench::{self, BenchConfig, ModelMatrix};
use ibd_core::data;
use ibd_core::explainer::{explain_with_order, sequential_explain, shapley_estimate, uncertainty_profile};
use ibd_core::kernel;
use ibd_core::models::{train_gbm, train_linear, train_random_forest, ForestParams, GbmParams};
use ibd_core::{Dataset, ExplainConfig, Explainer, FeatureOrder, Group, ModelHandle, Observation, ShapleyMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Gbm(usize),
    Forest,
    Linear,
}

struct RandomCase {
    dataset: Dataset,
    model: ModelHandle,
    observation: Observation,
    kind: Kind,
}

fn random_case(idx: usize, rng: &mut ChaCha8Rng) -> Result<RandomCase, String> {
    let kind = match idx % 5 {
        0 => Kind::Gbm(1),
        1 => Kind::Gbm(2),
        2 => Kind::Gbm(3),
        3 => Kind::Forest,
        _ => Kind::Linear,
    };
    let p = rng.gen_range(1..=10);
    let n = rng.gen_range(p.max(10) + 2..=200);
    // 0 uniform, 1 binary, 2 small integers; linear fits get continuous columns
    let styles: Vec<u8> = (0..p)
        .map(|_| if kind == Kind::Linear { 0 } else { rng.gen_range(0..3) })
        .collect();
    let draw = |rng: &mut ChaCha8Rng, s: u8| match s {
        0 => rng.gen_range(-1.0..1.0),
        1 => rng.gen_range(0..2) as f64,
        _ => rng.gen_range(0..5) as f64,
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|_| styles.iter().map(|&s| draw(rng, s)).collect()).collect();
    let coef: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let (a, b) = (rng.gen_range(0..p), rng.gen_range(0..p));
    let targets: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().zip(&coef).map(|(x, c)| x * c).sum();
            lin + 1.5 * r[a] * r[b] + (r[0] * 3.0).sin() + rng.gen_range(-0.1..0.1)
        })
        .collect();
    let names: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
    let dataset = Dataset::from_rows(names, &rows).map_err(e2s)?;
    let seed = idx as u64;
    let model = match kind {
        Kind::Gbm(d) => ModelHandle::new(
            train_gbm(&dataset, &targets, &GbmParams { max_depth: d, n_trees: 50, seed, ..GbmParams::default() })
                .map_err(e2s)?,
        ),
        Kind::Forest => ModelHandle::new(
            train_random_forest(&dataset, &targets, &ForestParams { n_trees: 30, seed, ..ForestParams::default() })
                .map_err(e2s)?,
        ),
        Kind::Linear => ModelHandle::new(train_linear(&dataset, &targets).map_err(e2s)?),
    };
    let x: Vec<f64> = styles.iter().map(|&s| draw(rng, s)).collect();
    let observation = Observation::new(dataset.schema(), x).map_err(e2s)?;
    Ok(RandomCase {
        dataset,
        model,
        observation,
        kind,
    })
}

fn sum_gap(e: &ibd_core::Explanation, fx: f64) -> f64 {
    (e.baseline() + e.attributions().iter().sum::<f64>() - fx).abs() / fx.abs().max(1.0)
}

/// Sum identity over 200 random cases; also collects the additive cases.
fn sum_identity(additive: &mut Vec<RandomCase>) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let cfg = ExplainConfig::default();
    let mut worst = 0.0f64;
    for idx in 0..200 {
        let c = random_case(idx, &mut rng)?;
        let fx = c.model.score_row(c.dataset.schema(), c.observation.values()).map_err(e2s)?;
        let seq = sequential_explain(&c.model, &c.dataset, &c.observation, &cfg).map_err(e2s)?;
        let order = FeatureOrder::random(c.dataset.n_features(), &mut rng);
        let ord = explain_with_order(&c.model, &c.dataset, &c.observation, &order, &cfg).map_err(e2s)?;
        for e in [&seq, &ord] {
            let gap = sum_gap(e, fx);
            worst = worst.max(gap);
            check(gap <= 1e-8, || format!("case {idx} ({:?}): relative gap {gap:e}", c.kind))?;
        }
        if matches!(c.kind, Kind::Gbm(1) | Kind::Linear) {
            additive.push(c);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("200 cases, worst relative gap {worst:.1e}, {secs:.1}s"))
}

fn additive_no_interactions(cases: &[RandomCase]) -> Outcome {
    let cfg = ExplainConfig::default();
    let mut worst_int = 0.0f64;
    let mut worst_iqr = 0.0f64;
    for (k, c) in cases.iter().enumerate() {
        let im = kernel::interaction_matrix(&c.model, &c.dataset, &c.observation).map_err(e2s)?;
        let scale = im.baseline.abs().max(1.0);
        worst_int = worst_int.max(im.max_abs_interaction() / scale);
        check(im.max_abs_interaction() <= 1e-10 * scale, || {
            format!("case {k} ({:?}): |interaction| {:e}", c.kind, im.max_abs_interaction())
        })?;
        let e = sequential_explain(&c.model, &c.dataset, &c.observation, &cfg).map_err(e2s)?;
        check(e.pair_count() == 0, || format!("case {k}: {} pair steps", e.pair_count()))?;
        let r = uncertainty_profile(&c.model, &c.dataset, &c.observation, 100, k as u64, &cfg).map_err(e2s)?;
        let iqr = r.iqr.iter().fold(0.0f64, |m, v| m.max(*v));
        worst_iqr = worst_iqr.max(iqr / scale);
        check(iqr <= 1e-10 * scale, || format!("case {k} ({:?}): IQR {iqr:e}", c.kind))?;
    }
    check(cases.len() >= 40, || format!("only {} additive cases", cases.len()))?;
    Ok(format!(
        "{} depth-1/linear models, max |interaction| {worst_int:.1e}, max IQR {worst_iqr:.1e} (relative)",
        cases.len()
    ))
}

fn grid_fixtures() -> Outcome {
    let ds = grid4();
    let rows = grid4_rows();
    let x = [1.0, 1.0];
    let o = obs(&ds, &x);
    let mut checked = 0;
    for (name, f, d1, di) in [("prod", prod as Func, 0.25, 0.25), ("add", add, 0.5, 0.0), ("xor", xor, 0.0, -0.5)] {
        let m = handle(name, f);
        let im = kernel::interaction_matrix(&m, &ds, &o).map_err(e2s)?;
        let pairs = [
            (im.baseline, expect(&f, &rows, &x, &[])),
            (im.deltas_i[0], delta_i(&f, &rows, &x, 0)),
            (im.deltas_i[1], delta_i(&f, &rows, &x, 1)),
            (im.deltas_ij.get(0, 1), delta_ij(&f, &rows, &x, 0, 1)),
            (im.interactions.get(0, 1), interaction(&f, &rows, &x, 0, 1)),
            (im.deltas_i[0], d1),
            (im.interactions.get(0, 1), di),
        ];
        for (got, want) in pairs {
            check(close(got, want, 1e-12), || format!("{name}: {got} vs {want}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} kernel values match the enumeration oracle"))
}

fn shapley_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = ExplainConfig::default();
    let mut worst = 0.0f64;
    for case in 0..40 {
        let p = rng.gen_range(1..=5);
        let n = rng.gen_range(2..=30);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let w: Vec<f64> = (0..p * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = move |x: &[f64]| -> f64 {
            let p = x.len();
            let mut y = 0.0;
            for i in 0..p {
                y += w[i * p + i] * x[i].tanh();
                for j in i + 1..p {
                    y += w[i * p + j] * x[i] * x[j];
                }
            }
            y + x.iter().product::<f64>() * 0.3
        };
        let names: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
        let ds = Dataset::from_rows(names, &rows).map_err(e2s)?;
        let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let o = obs(&ds, &x);
        let f2 = f.clone();
        let m = ModelHandle::from_fn("random", move |r| f2(r));
        let got = shapley_estimate(&m, &ds, &o, ShapleyMode::Exhaustive, &cfg).map_err(e2s)?;
        let want = subset_shapley(&f, &rows, &x);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
            check((g - w).abs() <= 1e-8, || format!("case {case}: {g} vs {w}"))?;
        }
    }
    let ds = grid4();
    let o = obs(&ds, &[1.0, 1.0]);
    let mut sampled_worst = 0.0f64;
    for (name, f) in [("prod", prod as Func), ("add", add), ("xor", xor)] {
        let m = handle(name, f);
        let exact = shapley_estimate(&m, &ds, &o, ShapleyMode::Exhaustive, &cfg).map_err(e2s)?;
        let sampled = shapley_estimate(&m, &ds, &o, ShapleyMode::Sampled { k: 2000, seed: 3 }, &cfg).map_err(e2s)?;
        for (a, b) in exact.iter().zip(&sampled) {
            sampled_worst = sampled_worst.max((a - b).abs());
            check((a - b).abs() <= 0.05, || format!("{name}: sampled {b} vs exact {a}"))?;
        }
    }
    Ok(format!(
        "exhaustive vs subset oracle max error {worst:.1e} over 40 models; K=2000 sampled max error {sampled_worst:.3}"
    ))
}

fn interaction_detection() -> Outcome {
    let (ds, y) = data::synth("xor", 500, 5).map_err(e2s)?;
    let model = ModelHandle::new(
        train_gbm(&ds, &y, &GbmParams { max_depth: 2, n_trees: 200, learning_rate: 0.1, ..GbmParams::default() })
            .map_err(e2s)?,
    );
    let scores = model.score(&ds.to_rows()).map_err(e2s)?;
    let mse = scores.iter().zip(&y).map(|(s, t)| (s - t) * (s - t)).sum::<f64>() / y.len() as f64;
    check(mse <= 0.05, || format!("train MSE {mse:.4}"))?;
    let sample = data::sample_observations(&ds, 50, 9).map_err(e2s)?;
    let cfg = ExplainConfig::default();
    let mut hits = 0;
    for o in &sample.observations {
        let e = sequential_explain(&model, &ds, o, &cfg).map_err(e2s)?;
        if e.pair_count() >= 1 && e.steps()[0].group == Group::Pair(0, 1) {
            hits += 1;
        }
    }
    check(hits >= 45, || format!("only {hits}/50 explanations lead with (x1, x2)"))?;
    Ok(format!("train MSE {mse:.4}; {hits}/50 explanations lead with the (x1, x2) pair"))
}

fn order_witness() -> Outcome {
    let ds = grid4();
    let o = obs(&ds, &[1.0, 1.0]);
    let m = handle("xor", xor);
    let cfg = ExplainConfig::default();
    let a = explain_with_order(&m, &ds, &o, &FeatureOrder::new(vec![0, 1], 2).map_err(e2s)?, &cfg).map_err(e2s)?;
    let b = explain_with_order(&m, &ds, &o, &FeatureOrder::new(vec![1, 0], 2).map_err(e2s)?, &cfg).map_err(e2s)?;
    let (x1a, x1b) = (a.per_feature().unwrap()[0], b.per_feature().unwrap()[0]);
    check(x1a == 0.0 && x1b == -0.5, || format!("x1 got {x1a} and {x1b}"))?;
    Ok("x1 attribution 0 under (x1, x2), -0.5 under (x2, x1)".into())
}

fn benchmark_shape() -> Outcome {
    let start = Instant::now();
    let config = BenchConfig { workers: 1, ..BenchConfig::default() };
    let tasks = bench::synthetic_suite(0);
    let result = bench::run_benchmark(&tasks, &ModelMatrix::default(), &config).map_err(e2s)?;
    let secs = start.elapsed().as_secs_f64();
    check(result.failures.is_empty(), || format!("failures: {:?}", result.failures))?;
    check(result.rows.len() == tasks.len() * 4, || format!("{} rows", result.rows.len()))?;
    let table = bench::render_bucket_table(&result).map_err(e2s)?;
    check(table.csv.lines().count() == 1 + tasks.len() * 4, || "bucket CSV has the wrong row count".into())?;
    let mut trends = Vec::new();
    for t in &tasks {
        for r in result.rows.iter().filter(|r| r.task == t.name) {
            check(r.buckets.iter().sum::<usize>() == 50, || format!("{}/{}: buckets {:?}", r.task, r.family, r.buckets))?;
        }
        let mean = |fam: &str| result.row(&t.name, fam).map(|r| r.mean_interactions).unwrap_or(f64::NAN);
        let d1 = result.row(&t.name, "gbm_d1").ok_or("missing gbm_d1 row")?;
        check(d1.buckets[0] == 50, || format!("{}: depth-1 buckets {:?}", t.name, d1.buckets))?;
        let (m1, m2, m3) = (mean("gbm_d1"), mean("gbm_d2"), mean("gbm_d3"));
        check(m1 <= m2 && m2 <= m3, || format!("{}: mean interactions {m1} {m2} {m3}", t.name))?;
        trends.push(format!("{} {m1:.2}/{m2:.2}/{m3:.2}", t.name));
    }
    check(secs < 300.0, || format!("took {secs:.1}s"))?;
    print!("{}", table.text);
    Ok(format!(
        "{} tasks x 4 families x 50 obs in {secs:.1}s; mean interactions d1/d2/d3: {}",
        tasks.len(),
        trends.join(", ")
    ))
}

fn run_cli(args: &[&str], workers: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ibd"))
        .args(args)
        .args(["--workers", workers])
        .output()
        .map_err(e2s)?;
    check(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let data = dir.path().join("d.csv");
    let (ds, y) = data::synth("product-noise", 400, 4).map_err(e2s)?;
    let mut buf = Vec::new();
    data::write_csv(&mut buf, &ds, Some(("y", &y))).map_err(e2s)?;
    std::fs::write(&data, buf).map_err(e2s)?;
    let data = data.to_str().unwrap().to_string();
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        r#"[{"name": "xor", "generator": "xor", "n": 300, "noise_features": 1, "n_obs": 10, "seed": 2},
            {"name": "pn", "generator": "product-noise", "n": 300, "n_obs": 10, "seed": 3}]"#,
    )
    .map_err(e2s)?;
    let manifest = manifest.to_str().unwrap().to_string();
    let base = ["--data", data.as_str(), "--target", "y", "--model", "gbm:depth=3,trees=60", "--observation", "11", "--seed", "8"];
    let mut runs: Vec<(String, Vec<&str>)> = Vec::new();
    for fmt in ["json", "svg"] {
        let mut a = vec!["explain"];
        a.extend(base);
        a.extend(["--format", fmt, "--max-rows", "150"]);
        runs.push((format!("explain {fmt}"), a));
        let mut a = vec!["uncertainty"];
        a.extend(base);
        a.extend(["--format", fmt, "--permutations", "30"]);
        runs.push((format!("uncertainty {fmt}"), a));
    }
    let mut count = 0;
    for (label, args) in &runs {
        let first = run_cli(args, "1")?;
        for w in ["1", "4"] {
            check(run_cli(args, w)? == first, || format!("{label} differs at {w} workers"))?;
            count += 1;
        }
    }
    let mut csvs = Vec::new();
    for w in ["1", "4", "1"] {
        let out = dir.path().join(format!("bench{}", csvs.len()));
        let out_s = out.to_str().unwrap().to_string();
        run_cli(&["benchmark", "--manifest", &manifest, "--out", &out_s], w)?;
        csvs.push(std::fs::read(out.join("buckets.csv")).map_err(e2s)?);
    }
    check(csvs[0] == csvs[1] && csvs[0] == csvs[2], || "bucket CSV differs".into())?;
    Ok(format!("{} JSON/SVG artifacts and 3 bucket CSVs byte-identical at 1 and 4 workers", count + 4))
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let p = 20;
    let n = 1000;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[2] - r[3].abs() + rng.gen_range(-0.1..0.1)).collect();
    let names: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
    let ds = Dataset::from_rows(names, &rows).map_err(e2s)?;
    let model = ModelHandle::new(
        train_gbm(&ds, &y, &GbmParams { max_depth: 2, n_trees: 100, ..GbmParams::default() }).map_err(e2s)?,
    );
    let o = Observation::from_row(&ds, 0).map_err(e2s)?;
    let cfg = ExplainConfig { workers: 1, ..ExplainConfig::default() };
    let start = Instant::now();
    let explainer = Explainer::new(&model, &ds, &o, &cfg).map_err(e2s)?;
    let e = explainer.sequential().map_err(e2s)?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(2), || format!("took {:.2}s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "p=20, n=1000, {} group expectations in {:.3}s ({} steps)",
        explainer.kernel().evaluations(),
        elapsed.as_secs_f64(),
        e.steps().len()
    ))
}

fn main() {
    let mut additive = Vec::new();
    let results: Vec<(&str, Outcome)> = vec![
        ("sum identity", sum_identity(&mut additive)),
        ("additive models have no interactions", additive_no_interactions(&additive)),
        ("grid fixtures match enumeration", grid_fixtures()),
        ("shapley exactness", shapley_exactness()),
        ("xor interaction detection", interaction_detection()),
        ("order-dependence witness", order_witness()),
        ("benchmark shape", benchmark_shape()),
        ("determinism across runs and workers", determinism()),
        ("performance", performance()),
    ];

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
