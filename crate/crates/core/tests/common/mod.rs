//! Brute-force reference computations shared by the integration tests.
//!
//! Nothing here calls the kernel: expectations are plain loops over rows.
#![allow(dead_code)]

use ibd_core::{Dataset, ModelHandle, Observation};

pub type Func = fn(&[f64]) -> f64;

pub fn prod(x: &[f64]) -> f64 {
    x[0] * x[1]
}

pub fn add(x: &[f64]) -> f64 {
    x[0] + x[1]
}

pub fn xor(x: &[f64]) -> f64 {
    x[0] + x[1] - 2.0 * x[0] * x[1]
}

pub fn constant(_: &[f64]) -> f64 {
    7.0
}

pub fn grid4_rows() -> Vec<Vec<f64>> {
    vec![vec![0., 0.], vec![0., 1.], vec![1., 0.], vec![1., 1.]]
}

pub fn grid4() -> Dataset {
    Dataset::from_rows(vec!["x1", "x2"], &grid4_rows()).unwrap()
}

pub fn handle(name: &str, f: Func) -> ModelHandle {
    ModelHandle::from_fn(name, f)
}

pub fn obs(ds: &Dataset, values: &[f64]) -> Observation {
    Observation::new(ds.schema(), values.to_vec()).unwrap()
}

/// Mean of `f` over `rows` with the columns in `fixed` set to `x`.
pub fn expect(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], x: &[f64], fixed: &[usize]) -> f64 {
    let mut total = 0.0;
    for row in rows {
        let mut r = row.clone();
        for &j in fixed {
            r[j] = x[j];
        }
        total += f(&r);
    }
    total / rows.len() as f64
}

pub fn delta_i(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], x: &[f64], i: usize) -> f64 {
    expect(f, rows, x, &[i]) - expect(f, rows, x, &[])
}

pub fn delta_ij(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], x: &[f64], i: usize, j: usize) -> f64 {
    expect(f, rows, x, &[i, j]) - expect(f, rows, x, &[])
}

pub fn interaction(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], x: &[f64], i: usize, j: usize) -> f64 {
    delta_ij(f, rows, x, i, j) - delta_i(f, rows, x, i) - delta_i(f, rows, x, j)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values from the subset formula over all coalitions.
pub fn subset_shapley(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut phi = vec![0.0; p];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for mask in 0u32..(1 << p) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
            let mut with = s.clone();
            with.push(i);
            let w = factorial(s.len()) * factorial(p - s.len() - 1) / factorial(p);
            *phi_i += w * (expect(f, rows, x, &with) - expect(f, rows, x, &s));
        }
    }
    phi
}

/// Type-7 quantile of unsorted samples.
pub fn quantile7(samples: &[f64], q: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
