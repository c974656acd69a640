//! Kernel and explainer values on the four-row grid checked against the
//! brute-force oracle in `common`.

mod common;

use common::*;
use ibd_core::explainer::{explain_with_order, sequential_explain, shapley_estimate, uncertainty_profile};
use ibd_core::kernel;
use ibd_core::{ExplainConfig, Explainer, FeatureOrder, Group, ShapleyMode};

const TOL: f64 = 1e-12;

fn models() -> Vec<(&'static str, Func)> {
    vec![("prod", prod), ("add", add), ("xor", xor), ("const", constant)]
}

#[test]
fn baselines_match_enumeration() {
    let ds = grid4();
    let rows = grid4_rows();
    for (name, f) in models() {
        let got = kernel::baseline(&handle(name, f), &ds).unwrap();
        assert!(close(got, expect(&f, &rows, &[1., 1.], &[]), TOL), "{name}");
    }
    assert_eq!(kernel::baseline(&handle("prod", prod), &ds).unwrap(), 0.25);
    assert_eq!(kernel::baseline(&handle("add", add), &ds).unwrap(), 1.0);
    assert_eq!(kernel::baseline(&handle("const", constant), &ds).unwrap(), 7.0);
}

#[test]
fn group_expectations_match_enumeration() {
    let ds = grid4();
    let rows = grid4_rows();
    let sets: [&[usize]; 4] = [&[], &[0], &[1], &[0, 1]];
    for (name, f) in models() {
        let m = handle(name, f);
        for x in grid4_rows() {
            let o = obs(&ds, &x);
            for s in sets {
                let got = kernel::group_expectation(&m, &ds, &o, s).unwrap();
                assert!(close(got, expect(&f, &rows, &x, s), TOL), "{name} {x:?} {s:?}");
            }
        }
    }
    let o = obs(&ds, &[1., 1.]);
    assert_eq!(kernel::group_expectation(&handle("prod", prod), &ds, &o, &[0]).unwrap(), 0.5);
    assert_eq!(kernel::group_expectation(&handle("prod", prod), &ds, &o, &[0, 1]).unwrap(), 1.0);
}

#[test]
fn single_and_pair_contributions() {
    let ds = grid4();
    let rows = grid4_rows();
    let x = [1., 1.];
    let o = obs(&ds, &x);
    // (Δ_1, Δ_12, Δ^I_12) per model
    let expected = [("prod", prod as Func, 0.25, 0.75, 0.25), ("add", add, 0.5, 1.0, 0.0), ("xor", xor, 0.0, -0.5, -0.5)];
    for (name, f, d1, d12, di) in expected {
        let m = handle(name, f);
        let got_d1 = kernel::single_contribution(&m, &ds, &o, 0).unwrap();
        let (got_d12, got_di) = kernel::pair_contribution(&m, &ds, &o, 0, 1).unwrap();
        assert!(close(got_d1, d1, TOL) && close(got_d1, delta_i(&f, &rows, &x, 0), TOL), "{name}");
        assert!(close(got_d12, d12, TOL) && close(got_d12, delta_ij(&f, &rows, &x, 0, 1), TOL), "{name}");
        assert!(close(got_di, di, TOL) && close(got_di, interaction(&f, &rows, &x, 0, 1), TOL), "{name}");
    }
    let m = handle("const", constant);
    assert_eq!(kernel::single_contribution(&m, &ds, &o, 1).unwrap(), 0.0);
}

#[test]
fn pair_contribution_is_symmetric_and_rejects_same_feature() {
    let ds = grid4();
    let o = obs(&ds, &[1., 0.]);
    let m = handle("prod", prod);
    let a = kernel::pair_contribution(&m, &ds, &o, 0, 1).unwrap();
    let b = kernel::pair_contribution(&m, &ds, &o, 1, 0).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
    let err = kernel::pair_contribution(&m, &ds, &o, 1, 1).unwrap_err();
    assert!(err.to_string().contains("pair requires distinct features"));
}

#[test]
fn interaction_matrices() {
    let ds = grid4();
    let o = obs(&ds, &[1., 1.]);
    let m = kernel::interaction_matrix(&handle("prod", prod), &ds, &o).unwrap();
    assert_eq!(m.deltas_i, vec![0.25, 0.25]);
    assert!(close(m.interactions.get(0, 1), 0.25, TOL));
    let m = kernel::interaction_matrix(&handle("add", add), &ds, &o).unwrap();
    assert_eq!(m.interactions.get(0, 1), 0.0);

    let one = ibd_core::Dataset::from_rows(vec!["x"], &[vec![1.0], vec![2.0]]).unwrap();
    let m = kernel::interaction_matrix(&square(), &one, &obs(&one, &[2.0])).unwrap();
    assert_eq!(m.deltas_i.len(), 1);
    assert!(m.interactions.is_empty());
}

fn square() -> ibd_core::ModelHandle {
    ibd_core::ModelHandle::from_fn("sq", |x| x[0] * x[0])
}

#[test]
fn conditional_contributions() {
    let ds = grid4();
    let o = obs(&ds, &[1., 1.]);
    let p = handle("prod", prod);
    let x = handle("xor", xor);
    assert!(close(kernel::conditional_contribution(&p, &ds, &o, &[1], &[0]).unwrap(), 0.5, TOL));
    assert!(close(kernel::conditional_contribution(&x, &ds, &o, &[1], &[0]).unwrap(), -0.5, TOL));
    assert_eq!(
        kernel::conditional_contribution(&p, &ds, &o, &[0], &[]).unwrap(),
        kernel::single_contribution(&p, &ds, &o, 0).unwrap()
    );
    assert!(kernel::conditional_contribution(&p, &ds, &o, &[0], &[0]).is_err());
}

fn steps(e: &ibd_core::Explanation) -> Vec<(Group, f64)> {
    e.steps().iter().map(|s| (s.group, s.attribution)).collect()
}

#[test]
fn sequential_fixtures() {
    let ds = grid4();
    let o = obs(&ds, &[1., 1.]);
    let cfg = ExplainConfig::default();

    let e = sequential_explain(&handle("add", add), &ds, &o, &cfg).unwrap();
    assert_eq!(steps(&e), vec![(Group::Single(0), 0.5), (Group::Single(1), 0.5)]);
    assert_eq!((e.baseline(), e.prediction()), (1.0, 2.0));

    let e = sequential_explain(&handle("xor", xor), &ds, &o, &cfg).unwrap();
    assert_eq!(steps(&e), vec![(Group::Pair(0, 1), -0.5)]);
    assert_eq!((e.baseline(), e.prediction()), (0.5, 0.0));

    let e = sequential_explain(&handle("prod", prod), &ds, &o, &cfg).unwrap();
    assert_eq!(steps(&e), vec![(Group::Single(0), 0.25), (Group::Single(1), 0.5)]);
}

#[test]
fn ordered_fixtures_and_order_dependence() {
    let ds = grid4();
    let o = obs(&ds, &[1., 1.]);
    let cfg = ExplainConfig::default();
    let fwd = FeatureOrder::new(vec![0, 1], 2).unwrap();
    let rev = FeatureOrder::new(vec![1, 0], 2).unwrap();

    let p = handle("prod", prod);
    let a = explain_with_order(&p, &ds, &o, &fwd, &cfg).unwrap();
    let b = explain_with_order(&p, &ds, &o, &rev, &cfg).unwrap();
    assert_eq!(steps(&a), vec![(Group::Single(0), 0.25), (Group::Single(1), 0.5)]);
    assert_eq!(steps(&b), vec![(Group::Single(1), 0.25), (Group::Single(0), 0.5)]);

    let add_m = handle("add", add);
    for order in [&fwd, &rev] {
        let e = explain_with_order(&add_m, &ds, &o, order, &cfg).unwrap();
        assert_eq!(e.per_feature().unwrap(), vec![0.5, 0.5]);
    }

    let x = handle("xor", xor);
    let a = explain_with_order(&x, &ds, &o, &fwd, &cfg).unwrap();
    let b = explain_with_order(&x, &ds, &o, &rev, &cfg).unwrap();
    assert_eq!(a.per_feature().unwrap()[0], 0.0);
    assert_eq!(b.per_feature().unwrap()[0], -0.5);
}

#[test]
fn uncertainty_fixtures() {
    let ds = grid4();
    let o = obs(&ds, &[1., 1.]);
    let cfg = ExplainConfig::default();

    let r = uncertainty_profile(&handle("add", add), &ds, &o, 25, 4, &cfg).unwrap();
    assert!(r.per_feature_samples.iter().flatten().all(|&v| v == 0.5));
    assert!(r.iqr.iter().all(|&v| v == 0.0));

    let ex = Explainer::new(&handle("xor", xor), &ds, &o, &cfg).unwrap();
    let r = ex.uncertainty_from_orders(&FeatureOrder::all(2), 0).unwrap();
    let samples = &r.per_feature_samples[0];
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(sorted, vec![-0.5, 0.0]);
    assert_eq!(r.means[0], -0.25);
    assert_eq!(r.q1[0], -0.375);
    assert_eq!(r.q3[0], -0.125);
    assert_eq!(r.iqr[0], 0.25);
    assert_eq!(r.q1[0], quantile7(samples, 0.25));

    let r = uncertainty_profile(&handle("prod", prod), &ds, &o, 1, 9, &cfg).unwrap();
    assert!(r.iqr.iter().all(|&v| v == 0.0));
    assert!(uncertainty_profile(&handle("prod", prod), &ds, &o, 0, 9, &cfg).is_err());
}

#[test]
fn shapley_fixtures_match_subset_oracle() {
    let ds = grid4();
    let rows = grid4_rows();
    let x = [1., 1.];
    let o = obs(&ds, &x);
    let cfg = ExplainConfig::default();
    for (name, f, want) in [
        ("prod", prod as Func, [0.375, 0.375]),
        ("xor", xor, [-0.25, -0.25]),
        ("const", constant, [0.0, 0.0]),
    ] {
        let got = shapley_estimate(&handle(name, f), &ds, &o, ShapleyMode::Exhaustive, &cfg).unwrap();
        let oracle = subset_shapley(&f, &rows, &x);
        for i in 0..2 {
            assert!(close(got[i], want[i], TOL), "{name}");
            assert!(close(got[i], oracle[i], TOL), "{name}");
        }
    }
}

#[test]
fn exhaustive_shapley_rejects_wide_inputs() {
    let rows: Vec<Vec<f64>> = (0..3).map(|r| (0..9).map(|c| (r * c) as f64).collect()).collect();
    let names: Vec<String> = (0..9).map(|i| format!("f{i}")).collect();
    let ds = ibd_core::Dataset::from_rows(names, &rows).unwrap();
    let o = obs(&ds, &rows[0]);
    let m = ibd_core::ModelHandle::from_fn("s", |x| x.iter().sum());
    assert!(shapley_estimate(&m, &ds, &o, ShapleyMode::Exhaustive, &ExplainConfig::default()).is_err());
}
