//! L2-regularized logistic regression fitted by fixed-step gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2: f64,
    /// Stop once the objective drops by less than `tol * max(1, J)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1.0,
            tol: 1e-8,
            max_iters: 5000,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("logistic: {m}")));
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and >= 0");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        Ok(())
    }
}

/// Per-column z-scoring learned on a training table. Columns with zero
/// spread keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(table: &FeatureTable) -> Standardizer {
        let n = table.len() as f64;
        let d = table.n_features();
        let mut mean = vec![0.0; d];
        for r in &table.rows {
            for (m, v) in mean.iter_mut().zip(&r.values) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &table.rows {
            for ((s, v), m) in var.iter_mut().zip(&r.values).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// log(1 + e^z), stable for large |z|.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

struct Problem {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    l2: f64,
}

impl Problem {
    /// (1/n) sum of log-losses + (l2 / 2n) |w|^2.
    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.ys.len() as f64;
        let data: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| {
                let z = b + dot(w, x);
                softplus(z) - y * z
            })
            .sum();
        data / n + self.l2 / (2.0 * n) * dot(w, w)
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.ys.len() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let r = super::sigmoid(b + dot(w, x)) - y;
            gb += r;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        for (g, wi) in gw.iter_mut().zip(w) {
            *g = *g / n + self.l2 / n * wi;
        }
        (gw, gb / n)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns (scaler, weights, bias, objective trace).
///
/// The step is 1/L with L = |[X 1]|_F^2 / 4n + l2/n, an upper bound on the
/// gradient's Lipschitz constant, so every accepted step lowers the
/// objective. A step that would raise it (rounding near the optimum) ends
/// the descent instead of being taken.
pub(crate) fn fit(p: &LogisticParams, table: &FeatureTable) -> (Standardizer, Vec<f64>, f64, Vec<f64>) {
    let scaler = Standardizer::fit(table);
    let xs: Vec<Vec<f64>> = table.rows.iter().map(|r| scaler.apply(&r.values)).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| f64::from(r.label)).collect();
    let n = ys.len() as f64;
    let frob: f64 = xs.iter().map(|x| dot(x, x) + 1.0).sum();
    let lipschitz = frob / (4.0 * n) + p.l2 / n;
    let step = 1.0 / lipschitz;
    let prob = Problem { xs, ys, l2: p.l2 };

    let mut w = vec![0.0; table.n_features()];
    let mut b = 0.0;
    let mut j = prob.objective(&w, b);
    let mut trace = vec![j];
    for _ in 0..p.max_iters {
        let (gw, gb) = prob.gradient(&w, b);
        let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - step * g).collect();
        let b_new = b - step * gb;
        let j_new = prob.objective(&w_new, b_new);
        if j_new > j {
            break;
        }
        w = w_new;
        b = b_new;
        let drop = j - j_new;
        j = j_new;
        trace.push(j);
        if drop <= p.tol * j.max(1.0) {
            break;
        }
    }
    (scaler, w, b, trace)
}
