//! Binary L2-regularized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! J(w, b) = Σ_n log(1 + exp(-y_n (w·x_n + b))) + λ/2 ‖w‖²,   y_n ∈ {-1, +1}
//! ```
//!
//! with the intercept left unpenalized, using L-BFGS with a backtracking
//! Armijo line search started from zero.

use std::collections::VecDeque;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Weights and intercept of a trained binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            intercept: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w·x + b`, accumulated left to right.
    pub fn decision(&self, row: ArrayView1<'_, f64>) -> f64 {
        dot(&self.weights, row) + self.intercept
    }

    fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub l2_strength: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_strength: 1.0,
            max_iterations: 100,
            gradient_tolerance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "l2 strength must be finite and >= 0, got {}",
                self.l2_strength
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be positive".into(),
            ));
        }
        if self.gradient_tolerance.is_nan() || self.gradient_tolerance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gradient tolerance must be > 0, got {}",
                self.gradient_tolerance
            )));
        }
        Ok(())
    }
}

/// Outcome of a training run, for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted iterate, starting at the zero model.
    pub objective_trace: Vec<f64>,
}

pub(crate) fn dot(w: &[f64], row: ArrayView1<'_, f64>) -> f64 {
    w.iter()
        .zip(row.iter())
        .fold(0.0, |acc, (w, x)| acc + w * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_inputs(features: ArrayView2<'_, f64>, targets: &[bool]) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::Empty("training features"));
    }
    if features.nrows() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            actual: targets.len(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    Ok(())
}

fn check_width(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<()> {
    if features.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: features.ncols(),
        });
    }
    Ok(())
}

/// J(w, b) for the given model.
pub fn objective(
    model: &LinearModel,
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    l2: f64,
) -> Result<f64> {
    check_width(model, features)?;
    if features.nrows() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            actual: targets.len(),
        });
    }
    Ok(objective_unchecked(model, features, targets, l2))
}

fn objective_unchecked(
    model: &LinearModel,
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    l2: f64,
) -> f64 {
    let loss: f64 = features
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| {
            let z = model.decision(row);
            softplus(if t { -z } else { z })
        })
        .sum();
    let penalty = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    loss + penalty
}

/// Analytic gradient of J: the first `m` entries are ∂J/∂w, the last ∂J/∂b.
pub fn gradient(
    model: &LinearModel,
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    l2: f64,
) -> Result<Vec<f64>> {
    check_width(model, features)?;
    if features.nrows() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            actual: targets.len(),
        });
    }
    Ok(objective_and_gradient(model, features, targets, l2).1)
}

fn objective_and_gradient(
    model: &LinearModel,
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    l2: f64,
) -> (f64, Vec<f64>) {
    let m = model.dim();
    let mut grad = vec![0.0; m + 1];
    let mut loss = 0.0;
    for (row, &t) in features.rows().into_iter().zip(targets) {
        let z = model.decision(row);
        // d/dz log(1 + exp(-y z)) = -y σ(-y z) = σ(z) - t
        let residual = sigmoid(z) - if t { 1.0 } else { 0.0 };
        loss += softplus(if t { -z } else { z });
        for (g, x) in grad[..m].iter_mut().zip(row.iter()) {
            *g += residual * x;
        }
        grad[m] += residual;
    }
    let mut penalty = 0.0;
    for (g, w) in grad[..m].iter_mut().zip(&model.weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    (loss + 0.5 * l2 * penalty, grad)
}

/// σ(w·x + b) for every row.
pub fn predict_proba(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_width(model, features)?;
    Ok(features
        .rows()
        .into_iter()
        .map(|row| sigmoid(model.decision(row)))
        .collect())
}

pub fn train_binary(
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    train_binary_from(features, targets, cfg, LinearModel::zeros(features.ncols())).map(|(m, _)| m)
}

/// Like [`train_binary`] but starts from `init` and returns the iteration trace.
pub fn train_binary_from(
    features: ArrayView2<'_, f64>,
    targets: &[bool],
    cfg: &TrainConfig,
    init: LinearModel,
) -> Result<(LinearModel, TrainReport)> {
    cfg.validate()?;
    check_inputs(features, targets)?;
    check_width(&init, features)?;
    let lbfgs = Lbfgs::default();
    lbfgs.minimize(features, targets, cfg, init)
}

const HISTORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy)]
struct Lbfgs {
    history: usize,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self { history: HISTORY }
    }
}

impl Lbfgs {
    fn minimize(
        &self,
        features: ArrayView2<'_, f64>,
        targets: &[bool],
        cfg: &TrainConfig,
        init: LinearModel,
    ) -> Result<(LinearModel, TrainReport)> {
        let l2 = cfg.l2_strength;
        let mut model = init;
        let (mut f, mut g) = objective_and_gradient(&model, features, targets, l2);
        let mut trace = vec![f];
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.history);
        let mut iterations = 0;
        let mut converged = inf_norm(&g) <= cfg.gradient_tolerance;

        while !converged && iterations < cfg.max_iterations {
            let mut direction = two_loop(&g, &memory);
            let mut slope = dot_slices(&g, &direction);
            if slope.is_nan() || slope >= 0.0 {
                memory.clear();
                direction = g.iter().map(|v| -v).collect();
                slope = -dot_slices(&g, &g);
            }
            // Unscaled steepest descent on the first step can overshoot badly.
            let mut step = if memory.is_empty() {
                (1.0 / inf_norm(&g)).min(1.0)
            } else {
                1.0
            };

            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let candidate = shifted(&model, &direction, step);
                let (f_new, g_new) = objective_and_gradient(&candidate, features, targets, l2);
                if f_new.is_finite() && f_new <= f + ARMIJO_C1 * step * slope {
                    accepted = Some((candidate, f_new, g_new));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, f_new, g_new)) = accepted else {
                // No decrease is representable along the direction: the
                // iterate is optimal to working precision.
                break;
            };
            iterations += 1;

            let s: Vec<f64> = params(&candidate)
                .iter()
                .zip(params(&model))
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot_slices(&s, &y);
            if sy > 1e-12 * dot_slices(&y, &y).sqrt() * dot_slices(&s, &s).sqrt() && sy > 0.0 {
                if memory.len() == self.history {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }

            model = candidate;
            f = f_new;
            g = g_new;
            trace.push(f);
            converged = inf_norm(&g) <= cfg.gradient_tolerance;
        }

        if !model.is_finite() || !f.is_finite() {
            return Err(Error::Numerical("logistic regression diverged".into()));
        }
        Ok((
            model,
            TrainReport {
                iterations,
                converged,
                objective_trace: trace,
            },
        ))
    }
}

fn params(model: &LinearModel) -> Vec<f64> {
    let mut p = model.weights.clone();
    p.push(model.intercept);
    p
}

fn shifted(model: &LinearModel, direction: &[f64], step: f64) -> LinearModel {
    let m = model.dim();
    LinearModel {
        weights: model
            .weights
            .iter()
            .zip(&direction[..m])
            .map(|(w, d)| w + step * d)
            .collect(),
        intercept: model.intercept + step * direction[m],
    }
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian `H`.
fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot_slices(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot_slices(s, y) / dot_slices(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot_slices(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Array2<f64>, Vec<bool>) {
        let x = Array2::from_shape_fn((n, m), |_| rng.gen_range(-2.0..2.0));
        let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        (x, y)
    }

    fn central_difference(
        model: &LinearModel,
        x: ArrayView2<'_, f64>,
        y: &[bool],
        l2: f64,
    ) -> Vec<f64> {
        let p = params(model);
        (0..p.len())
            .map(|i| {
                let h = 1e-5 * (1.0 + p[i].abs());
                let eval = |delta: f64| {
                    let mut q = p.clone();
                    q[i] += delta;
                    let m = LinearModel {
                        intercept: q.pop().unwrap(),
                        weights: q,
                    };
                    objective(&m, x, y, l2).unwrap()
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn predict_examples() {
        let x = array![[0.0], [3.0f64.ln()], [-7.0]];
        let zero = LinearModel::zeros(1);
        assert_eq!(predict_proba(&zero, x.view()).unwrap(), vec![0.5; 3]);
        let unit = LinearModel {
            weights: vec![1.0],
            intercept: 0.0,
        };
        let p = predict_proba(&unit, x.view()).unwrap();
        assert_eq!(p[0], 0.5);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = LinearModel::zeros(2);
        assert!(matches!(
            predict_proba(&m, array![[1.0]].view()),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn one_class_targets() {
        let x = array![[0.3, -1.0], [1.2, 0.4], [-0.5, 0.9]];
        let model = train_binary(x.view(), &[true; 3], &TrainConfig::default()).unwrap();
        assert!(model.intercept > 0.0);
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        assert!(sigmoid(model.decision(mean.view())) > 0.5);

        let none = train_binary(x.view(), &[false; 3], &TrainConfig::default()).unwrap();
        assert!(none.intercept < 0.0);
    }

    #[test]
    fn separable_1d() {
        let x = array![[-1.0], [1.0]];
        let model = train_binary(x.view(), &[false, true], &TrainConfig::default()).unwrap();
        assert!(model.weights[0] > 0.0);
    }

    #[test]
    fn input_errors() {
        let cfg = TrainConfig::default();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            train_binary(empty.view(), &[], &cfg),
            Err(Error::Empty(_))
        ));
        let bad = array![[f64::NAN]];
        assert!(matches!(
            train_binary(bad.view(), &[true], &cfg),
            Err(Error::NonFinite(_))
        ));
        let x = array![[1.0]];
        assert!(train_binary(x.view(), &[true, false], &cfg).is_err());
        let zero_iter = TrainConfig {
            max_iterations: 0,
            ..cfg
        };
        assert!(train_binary(x.view(), &[true], &zero_iter).is_err());
    }

    #[test]
    fn symmetric_features_zero_intercept_gradient() {
        let x = array![[1.0, -2.0], [-1.0, 2.0], [0.5, 3.0], [-0.5, -3.0]];
        let y = [true, false, true, false];
        let g = gradient(&LinearModel::zeros(2), x.view(), &y, 1.0).unwrap();
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn heavy_penalty_recovers_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, _) = random_problem(&mut rng, 40, 3);
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let cfg = TrainConfig {
            l2_strength: 1e8,
            ..TrainConfig::default()
        };
        let model = train_binary(x.view(), &y, &cfg).unwrap();
        let p = 0.25f64;
        assert!(
            model.weights.iter().all(|w| w.abs() < 1e-5),
            "{:?}",
            model.weights
        );
        assert!(
            (model.intercept - (p / (1.0 - p)).ln()).abs() < 1e-3,
            "{}",
            model.intercept
        );
    }

    #[test]
    fn restarts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_problem(&mut rng, 30, 4);
        let cfg = TrainConfig {
            gradient_tolerance: 1e-8,
            max_iterations: 500,
            ..TrainConfig::default()
        };
        let (a, _) = train_binary_from(x.view(), &y, &cfg, LinearModel::zeros(4)).unwrap();
        let init = LinearModel {
            weights: vec![3.0, -2.0, 1.0, 5.0],
            intercept: -4.0,
        };
        let (b, _) = train_binary_from(x.view(), &y, &cfg, init).unwrap();
        let ja = objective(&a, x.view(), &y, 1.0).unwrap();
        let jb = objective(&b, x.view(), &y, 1.0).unwrap();
        assert!((ja - jb).abs() < 1e-6, "{ja} vs {jb}");
    }

    #[test]
    fn degenerate_targets_terminate() {
        let x = array![[1.0, 2.0], [3.0, -1.0]];
        let cfg = TrainConfig {
            max_iterations: 7,
            gradient_tolerance: 1e-30,
            ..TrainConfig::default()
        };
        let (_, report) =
            train_binary_from(x.view(), &[true, true], &cfg, LinearModel::zeros(2)).unwrap();
        assert!(report.iterations <= 7);
        assert!(!report.converged);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..10, m in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_problem(&mut rng, n, m);
            let model = LinearModel {
                weights: (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                intercept: rng.gen_range(-2.0..2.0),
            };
            let l2 = rng.gen_range(0.0..3.0);
            let analytic = gradient(&model, x.view(), &y, l2).unwrap();
            let numeric = central_difference(&model, x.view(), &y, l2);
            for (a, n) in analytic.iter().zip(&numeric) {
                let scale = a.abs().max(n.abs()).max(1e-3);
                prop_assert!((a - n).abs() / scale <= 1e-5, "{} vs {}", a, n);
            }
        }

        #[test]
        fn accepted_iterates_never_increase_objective(seed in any::<u64>(), n in 1usize..20, m in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_problem(&mut rng, n, m);
            let (model, report) = train_binary_from(
                x.view(), &y, &TrainConfig::default(), LinearModel::zeros(m)).unwrap();
            for pair in report.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
            if report.converged {
                let g = gradient(&model, x.view(), &y, 1.0).unwrap();
                prop_assert!(inf_norm(&g) <= 1e-4);
            }
        }
    }
}
