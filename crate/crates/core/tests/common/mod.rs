//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Plain J(w, b) = Σ ln(1 + exp(-y'z)) + λ/2 ‖w‖².
pub fn objective(w: &[f64], b: f64, x: ArrayView2<'_, f64>, y: &[bool], l2: f64) -> f64 {
    let mut total = 0.0;
    for (row, &t) in x.rows().into_iter().zip(y) {
        let mut z = b;
        for (wi, xi) in w.iter().zip(row.iter()) {
            z += wi * xi;
        }
        let sign = if t { 1.0 } else { -1.0 };
        total += (-sign * z).exp().ln_1p();
    }
    total + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Minimum of J found by grid search alone: a global coarse grid over a box
/// that provably contains the optimum, then repeated local grids around the
/// incumbent with a shrinking step. Needs both classes in `y` and `l2 > 0`.
pub fn grid_minimum(x: ArrayView2<'_, f64>, y: &[bool], l2: f64) -> (Vec<f64>, f64, f64) {
    assert!(y.iter().any(|&t| t) && y.iter().any(|&t| !t));
    let m = x.ncols();
    let p = m + 1;
    // J(0) = N ln 2 bounds the penalty and every loss term at the optimum.
    let j0 = x.nrows() as f64 * std::f64::consts::LN_2;
    let rw = (2.0 * j0 / l2).sqrt();
    let max_norm = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let rb = j0 + rw * max_norm;
    let eval = |theta: &[f64]| objective(&theta[..m], theta[m], x, y, l2);

    let coarse = 40;
    let half: Vec<f64> = (0..p).map(|i| if i < m { rw } else { rb }).collect();
    let (mut best, mut best_j) = scan(&vec![0.0; p], &half, coarse, &eval);
    let mut step: Vec<f64> = half.iter().map(|h| 2.0 * h / coarse as f64).collect();
    // each local round spans ±3 previous steps with 12 intervals, halving the step
    let fine = 12;
    while step.iter().cloned().fold(0.0, f64::max) > 1e-10 {
        let local: Vec<f64> = step.iter().map(|s| 3.0 * s).collect();
        let (cand, cand_j) = scan(&best, &local, fine, &eval);
        if cand_j < best_j {
            best = cand;
            best_j = cand_j;
        }
        step = local.iter().map(|h| 2.0 * h / fine as f64).collect();
    }
    (best[..m].to_vec(), best[m], best_j)
}

fn scan<F: Fn(&[f64]) -> f64>(
    center: &[f64],
    half: &[f64],
    points: usize,
    eval: &F,
) -> (Vec<f64>, f64) {
    let p = center.len();
    let mut idx = vec![0usize; p];
    let mut theta = vec![0.0; p];
    let mut best = center.to_vec();
    let mut best_j = eval(center);
    loop {
        for i in 0..p {
            theta[i] = center[i] - half[i] + 2.0 * half[i] * idx[i] as f64 / points as f64;
        }
        let j = eval(&theta);
        if j < best_j {
            best_j = j;
            best.copy_from_slice(&theta);
        }
        let mut i = 0;
        loop {
            if i == p {
                return (best, best_j);
            }
            idx[i] += 1;
            if idx[i] <= points {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Random instance with both classes present.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, m: usize) -> (Array2<f64>, Vec<bool>) {
    loop {
        let x = Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if y.iter().any(|&t| t) && y.iter().any(|&t| !t) {
            return (x, y);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Confusion counts over the cells of `cols` (all columns when `None`).
pub fn counts(
    pred: ArrayView2<'_, bool>,
    gold: ArrayView2<'_, bool>,
    col: Option<usize>,
) -> Counts {
    let mut c = Counts {
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    for ((n, j), &g) in gold.indexed_iter() {
        if col.is_some_and(|k| k != j) {
            continue;
        }
        match (pred[(n, j)], g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    c
}

/// F1 as an exact fraction `(numerator, denominator)`; 0/1 when undefined.
pub fn f1_fraction(c: Counts) -> (u64, u64) {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        (0, 1)
    } else {
        (2 * c.tp, den)
    }
}

pub fn micro_f1(pred: ArrayView2<'_, bool>, gold: ArrayView2<'_, bool>) -> f64 {
    let (a, b) = f1_fraction(counts(pred, gold, None));
    a as f64 / b as f64
}

pub fn macro_f1(pred: ArrayView2<'_, bool>, gold: ArrayView2<'_, bool>) -> f64 {
    let l = gold.ncols();
    let total: f64 = (0..l)
        .map(|j| {
            let (a, b) = f1_fraction(counts(pred, gold, Some(j)));
            a as f64 / b as f64
        })
        .sum();
    if l == 0 {
        0.0
    } else {
        total / l as f64
    }
}

/// Exhaustive threshold search over `i / 200`, `i = 0..=180`, with micro-F1
/// compared as exact fractions. Returns the smallest maximiser.
pub fn best_micro_threshold(probs: ArrayView2<'_, f64>, gold: ArrayView2<'_, bool>) -> f64 {
    let mut best_t = 0.0;
    let mut best = (0u64, 1u64);
    for i in 0..=180u32 {
        let t = f64::from(i) / 200.0;
        let pred = probs.mapv(|p| p > t);
        let f = f1_fraction(counts(pred.view(), gold, None));
        if i == 0 || u128::from(f.0) * u128::from(best.1) > u128::from(best.0) * u128::from(f.1) {
            best = f;
            best_t = t;
        }
    }
    best_t
}

/// Same search scored by macro-F1.
pub fn best_macro_threshold(probs: ArrayView2<'_, f64>, gold: ArrayView2<'_, bool>) -> f64 {
    let mut best_t = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=180u32 {
        let t = f64::from(i) / 200.0;
        let pred = probs.mapv(|p| p > t);
        let f = macro_f1(pred.view(), gold);
        if f > best {
            best = f;
            best_t = t;
        }
    }
    best_t
}

/// Random probabilities, a fifth of them snapped to grid points so that
/// `p == t` boundaries are exercised.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize, l: usize) -> (Array2<f64>, Array2<bool>) {
    let probs = Array2::from_shape_fn((n, l), |_| {
        if rng.gen_bool(0.2) {
            f64::from(rng.gen_range(0..=200u32)) / 200.0
        } else {
            rng.gen::<f64>()
        }
    });
    let gold = Array2::from_shape_fn((n, l), |_| rng.gen_bool(0.3));
    (probs, gold)
}
