//! One hidden tanh layer, sigmoid output, cross-entropy, full-batch descent.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linear::{softplus, Standardizer};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    /// Step size applied to the mean-loss gradient.
    pub step: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 16,
            epochs: 500,
            step: 0.05,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("mlp: {m}")));
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be finite and > 0");
        }
        Ok(())
    }
}

pub(crate) fn n_params(d: usize, hidden: usize) -> usize {
    hidden * d + 2 * hidden + 1
}

fn input_dim(len: usize, hidden: usize) -> usize {
    (len - 2 * hidden - 1) / hidden
}

/// Output logit and hidden activations for one standardized row.
pub(crate) fn forward(params: &[f64], hidden: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let d = x.len();
    let (w1, rest) = params.split_at(hidden * d);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let a: Vec<f64> = (0..hidden)
        .map(|k| {
            let u = w1[k * d..(k + 1) * d]
                .iter()
                .zip(x)
                .fold(b1[k], |acc, (w, v)| acc + w * v);
            u.tanh()
        })
        .collect();
    let z = a.iter().zip(w2).fold(b2[0], |acc, (ak, w)| acc + ak * w);
    (z, a)
}

/// Summed cross-entropy and its gradient over standardized rows.
pub(crate) fn loss_gradient(params: &[f64], hidden: usize, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
    let d = input_dim(params.len(), hidden);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let w2 = &params[hidden * d + hidden..hidden * d + 2 * hidden];
    for (x, &y) in xs.iter().zip(ys) {
        let (z, a) = forward(params, hidden, x);
        loss += softplus(z) - y * z;
        let dz = super::sigmoid(z) - y;
        let (gw1, rest) = grad.split_at_mut(hidden * d);
        let (gb1, rest) = rest.split_at_mut(hidden);
        let (gw2, gb2) = rest.split_at_mut(hidden);
        gb2[0] += dz;
        for k in 0..hidden {
            gw2[k] += dz * a[k];
            let du = dz * w2[k] * (1.0 - a[k] * a[k]);
            gb1[k] += du;
            for (g, v) in gw1[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += du * v;
            }
        }
    }
    (loss, grad)
}

/// Seeded initialization: W1 ~ N(0, 1/d), w2 ~ N(0, 1/hidden), zero biases.
pub(crate) fn init(d: usize, hidden: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let mut p = vec![0.0; n_params(d, hidden)];
    let s1 = (1.0 / d.max(1) as f64).sqrt();
    for v in &mut p[..hidden * d] {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = s1 * z;
    }
    let s2 = (1.0 / hidden as f64).sqrt();
    for v in &mut p[hidden * d + hidden..hidden * d + 2 * hidden] {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = s2 * z;
    }
    p
}

pub(crate) fn fit(p: &MlpParams, table: &FeatureTable, seed: u64) -> (Standardizer, Vec<f64>) {
    let scaler = Standardizer::fit(table);
    let xs: Vec<Vec<f64>> = table.rows.iter().map(|r| scaler.apply(&r.values)).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| f64::from(r.label)).collect();
    let n = ys.len() as f64;
    let mut params = init(table.n_features(), p.hidden, seed);
    for _ in 0..p.epochs {
        let (_, g) = loss_gradient(&params, p.hidden, &xs, &ys);
        for (w, gi) in params.iter_mut().zip(&g) {
            *w -= p.step * gi / n;
        }
    }
    (scaler, params)
}
