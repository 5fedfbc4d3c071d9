//! Single-hidden-layer tanh network trained by Levenberg–Marquardt with
//! Bayesian regularization (evidence updates of the weight-decay and noise
//! precisions).

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::{Mat, Side};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scaler, TrainingSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSettings {
    pub hidden: usize,
    pub max_iter: usize,
    pub mu: f64,
    pub mu_dec: f64,
    pub mu_inc: f64,
    pub mu_max: f64,
    pub min_grad: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for NnSettings {
    fn default() -> Self {
        Self {
            hidden: 20,
            max_iter: 1000,
            mu: 0.005,
            mu_dec: 0.1,
            mu_inc: 10.0,
            mu_max: 1e10,
            min_grad: 1e-7,
            val_ratio: 0.1,
            test_ratio: 0.1,
            seed: 2024,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MinGradient,
    MaxIterations,
    MaxMu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub stop: StopReason,
    /// Mean squared errors in scaled target units.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Effective number of parameters.
    pub gamma: f64,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnSurrogate {
    pub hidden: usize,
    /// Inputs are mapped to `[-1, 1]` by `gain * (x - min) - 1`.
    pub in_min: Vec<f64>,
    pub in_gain: Vec<f64>,
    /// `[W1 (hidden x dim, row-major), b1, w2, b2]`.
    pub weights: Vec<f64>,
    pub scaler: Scaler,
    pub settings: NnSettings,
    #[serde(default)]
    pub report: Option<TrainingReport>,
}

pub fn n_parameters(dim: usize, hidden: usize) -> usize {
    dim * hidden + 2 * hidden + 1
}

struct Net<'a> {
    dim: usize,
    hidden: usize,
    w: &'a [f64],
}

impl Net<'_> {
    /// Output and, if `grad` is given, its derivative with respect to every
    /// parameter.
    fn forward(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let (d, h) = (self.dim, self.hidden);
        let (w1, rest) = self.w.split_at(d * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut out = b2[0];
        for k in 0..h {
            let z = b1[k] + (0..d).map(|i| w1[k * d + i] * x[i]).sum::<f64>();
            let a = z.tanh();
            out += w2[k] * a;
            if let Some(g) = grad.as_deref_mut() {
                let da = w2[k] * (1.0 - a * a);
                for i in 0..d {
                    g[k * d + i] = da * x[i];
                }
                g[d * h + k] = da;
                g[d * h + h + k] = a;
            }
        }
        if let Some(g) = grad {
            g[d * h + 2 * h] = 1.0;
        }
        out
    }
}

impl NnSurrogate {
    pub fn dim(&self) -> usize {
        self.in_min.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len()
    }

    /// Network with explicit parameters, identity input map and no scaling.
    pub fn from_parts(dim: usize, hidden: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_parameters(dim, hidden) {
            return Err(Error::Dimension(format!(
                "{} weights for a {dim}-{hidden}-1 network",
                weights.len()
            )));
        }
        Ok(Self {
            hidden,
            in_min: vec![-1.0; dim],
            in_gain: vec![1.0; dim],
            weights,
            scaler: Scaler::identity(),
            settings: NnSettings {
                hidden,
                ..Default::default()
            },
            report: None,
        })
    }

    fn map_input(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter()
            .zip(self.in_min.iter().zip(&self.in_gain))
            .map(|(x, (m, g))| g * (x - m) - 1.0)
            .collect()
    }

    fn net(&self) -> Net<'_> {
        Net {
            dim: self.dim(),
            hidden: self.hidden,
            w: &self.weights,
        }
    }

    /// Network output before descaling.
    pub fn eval_scaled(&self, xi: &[f64]) -> f64 {
        self.net().forward(&self.map_input(xi), None)
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.scaler.descale(self.eval_scaled(xi))
    }
}

/// Random permutation split into (train, val, test) with
/// `round(ratio * n)` points in each held-out group.
pub fn split_indices(n: usize, val_ratio: f64, test_ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5911));
    let n_val = (val_ratio * n as f64).round() as usize;
    let n_test = (test_ratio * n as f64).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let n_test = n_test.min(n - n_val - 1);
    let val = idx[..n_val].to_vec();
    let test = idx[n_val..n_val + n_test].to_vec();
    let mut train = idx[n_val + n_test..].to_vec();
    train.sort_unstable();
    (train, val, test)
}

/// Nguyen–Widrow initialization for inputs in `[-1, 1]`.
fn initial_weights(dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let beta = 0.7 * (hidden as f64).powf(1.0 / dim as f64);
    let mut w = Vec::with_capacity(n_parameters(dim, hidden));
    let mut rows = Vec::with_capacity(dim * hidden);
    for _ in 0..hidden {
        let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        rows.extend(row.iter().map(|v| beta * v / norm));
    }
    w.extend(rows);
    w.extend((0..hidden).map(|_| rng.random_range(-beta..beta)));
    w.extend((0..hidden).map(|_| rng.random_range(-1.0..1.0)));
    w.push(rng.random_range(-1.0..1.0));
    w
}

fn mse(net: &Net<'_>, x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().map(|&i| (net.forward(&x[i], None) - y[i]).powi(2)).sum::<f64>() / idx.len() as f64)
}

/// Trains on the standardized targets of `set`, holding out validation and
/// test groups. Deterministic for a given seed.
pub fn nn_train(set: &TrainingSet, settings: &NnSettings) -> Result<NnSurrogate> {
    let n = set.len();
    if n < 4 {
        return Err(Error::Parameter(format!("network training needs at least 4 points, got {n}")));
    }
    if settings.hidden == 0 {
        return Err(Error::Parameter("hidden layer must have at least one unit".into()));
    }
    let dim = set.dim();
    let hidden = settings.hidden;
    let np = n_parameters(dim, hidden);

    let (train, val, test) = split_indices(n, settings.val_ratio, settings.test_ratio, settings.seed);
    let mut in_min = vec![f64::INFINITY; dim];
    let mut in_max = vec![f64::NEG_INFINITY; dim];
    for &i in &train {
        for j in 0..dim {
            in_min[j] = in_min[j].min(set.inputs[i][j]);
            in_max[j] = in_max[j].max(set.inputs[i][j]);
        }
    }
    let in_gain: Vec<f64> = in_min
        .iter()
        .zip(&in_max)
        .map(|(a, b)| if b > a { 2.0 / (b - a) } else { 1.0 })
        .collect();
    let x: Vec<Vec<f64>> = set
        .inputs
        .iter()
        .map(|xi| xi.iter().enumerate().map(|(j, v)| in_gain[j] * (v - in_min[j]) - 1.0).collect())
        .collect();
    let y = set.scaled_targets();

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut w = initial_weights(dim, hidden, &mut rng);
    let nt = train.len();

    let errors = |w: &[f64]| -> (f64, f64) {
        let net = Net { dim, hidden, w };
        let ed: f64 = train.iter().map(|&i| (net.forward(&x[i], None) - y[i]).powi(2)).sum();
        let ew: f64 = w.iter().map(|v| v * v).sum();
        (ed, ew)
    };

    let (mut ed, mut ew) = errors(&w);
    let mut gamma = np as f64;
    let mut beta = if ed > 0.0 && nt as f64 > gamma { (nt as f64 - gamma) / (2.0 * ed) } else { 1.0 };
    let mut alpha = if ew > 0.0 { gamma / (2.0 * ew) } else { 0.0 };
    let mut mu = settings.mu;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut jac = Mat::<f64>::zeros(nt, np);
    let mut grow = vec![0.0; np];

    for it in 0..settings.max_iter {
        iterations = it;
        let mut e = vec![0.0; nt];
        {
            let net = Net { dim, hidden, w: &w };
            for (r, &i) in train.iter().enumerate() {
                e[r] = net.forward(&x[i], Some(&mut grow)) - y[i];
                for (c, g) in grow.iter().enumerate() {
                    jac[(r, c)] = *g;
                }
            }
        }
        if !e.iter().all(|v| v.is_finite()) {
            return Err(Error::Training("network output became non-finite".into()));
        }
        let jtj = jac.transpose() * &jac;
        let g: Vec<f64> = (0..np)
            .map(|c| beta * (0..nt).map(|r| jac[(r, c)] * e[r]).sum::<f64>() + alpha * w[c])
            .collect();
        if 2.0 * g.iter().map(|v| v * v).sum::<f64>().sqrt() < settings.min_grad {
            stop = StopReason::MinGradient;
            break;
        }
        let f_old = beta * ed + alpha * ew;
        let mut accepted = false;
        while mu <= settings.mu_max {
            let a = Mat::<f64>::from_fn(np, np, |i, j| beta * jtj[(i, j)] + if i == j { alpha + mu } else { 0.0 });
            let Ok(llt) = a.llt(Side::Lower) else {
                mu *= settings.mu_inc;
                continue;
            };
            let rhs = Mat::<f64>::from_fn(np, 1, |i, _| -g[i]);
            let delta = llt.solve(&rhs);
            let trial: Vec<f64> = w.iter().enumerate().map(|(i, v)| v + delta[(i, 0)]).collect();
            let (ed_t, ew_t) = errors(&trial);
            let f_new = beta * ed_t + alpha * ew_t;
            if f_new.is_finite() && f_new < f_old {
                w = trial;
                ed = ed_t;
                ew = ew_t;
                mu *= settings.mu_dec;
                accepted = true;
                break;
            }
            mu *= settings.mu_inc;
        }
        if !accepted {
            stop = StopReason::MaxMu;
            break;
        }
        // evidence update: gamma = N - alpha tr((beta J'J + alpha I)^{-1})
        let h = Mat::<f64>::from_fn(np, np, |i, j| beta * jtj[(i, j)] + if i == j { alpha } else { 0.0 });
        if alpha > 0.0 {
            if let Ok(llt) = h.llt(Side::Lower) {
                let inv = llt.inverse();
                let tr: f64 = (0..np).map(|i| inv[(i, i)]).sum();
                gamma = (np as f64 - alpha * tr).clamp(0.0, np as f64);
            }
        }
        if ed > 0.0 && nt as f64 > gamma {
            beta = (nt as f64 - gamma) / (2.0 * ed);
        }
        if ew > 0.0 {
            alpha = gamma / (2.0 * ew);
        }
        iterations = it + 1;
    }
    if !(ed.is_finite() && ew.is_finite()) {
        return Err(Error::Training("non-finite training loss".into()));
    }

    let net = Net { dim, hidden, w: &w };
    let report = TrainingReport {
        iterations,
        stop,
        train_mse: ed / nt as f64,
        val_mse: mse(&net, &x, &y, &val),
        test_mse: mse(&net, &x, &y, &test),
        alpha,
        beta,
        gamma,
        train_idx: train.clone(),
        val_idx: val,
        test_idx: test,
    };
    Ok(NnSurrogate {
        hidden,
        in_min,
        in_gain,
        weights: w,
        scaler: set.scaler,
        settings: settings.clone(),
        report: Some(report),
    })
}
