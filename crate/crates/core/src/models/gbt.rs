//! Newton-step gradient boosting of depth-limited regression trees on the
//! logistic loss, with histogram split search.

use serde::{Deserialize, Serialize};

use super::binning::Binned;
use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::features::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            trees: 200,
            depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            lambda: 1.0,
            max_bins: 64,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("gbt: {m}")));
        if self.trees == 0 {
            return bad("trees must be >= 1");
        }
        if !(1..=16).contains(&self.depth) {
            return bad("depth must be in 1..=16");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        Ok(())
    }
}

struct Grower<'a> {
    p: &'a GbtParams,
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    nodes: Vec<Node>,
    importance: &'a mut [f64],
    /// Leaf value reached by each training row, for the margin update.
    row_value: Vec<f64>,
}

/// Gradient sum, hessian sum and row count per (feature, bin), laid out
/// by `Binned::offsets`.
#[derive(Clone)]
struct Hist {
    g: Vec<f64>,
    h: Vec<f64>,
    n: Vec<u32>,
}

impl Hist {
    fn zeros(len: usize) -> Hist {
        Hist {
            g: vec![0.0; len],
            h: vec![0.0; len],
            n: vec![0; len],
        }
    }

    /// `self - other`, used to get a sibling's histogram from its parent's.
    fn minus(mut self, other: &Hist) -> Hist {
        for i in 0..self.g.len() {
            self.g[i] -= other.g[i];
            self.h[i] -= other.h[i];
            self.n[i] -= other.n[i];
        }
        self
    }
}

struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.p.lambda)
    }

    fn splittable(&self, n: usize, depth: usize) -> bool {
        depth < self.p.depth && n >= 2 * self.p.min_samples_leaf
    }

    fn histogram(&self, rows: &[u32]) -> Hist {
        let mut hist = Hist::zeros(self.data.total_bins());
        for (j, codes) in self.data.codes.iter().enumerate() {
            let off = self.data.offsets[j];
            for &i in rows {
                let b = off + codes[i as usize] as usize;
                hist.g[b] += self.grad[i as usize];
                hist.h[b] += self.hess[i as usize];
                hist.n[b] += 1;
            }
        }
        hist
    }

    /// Grow the subtree over `rows`; `hist` is their histogram when the node
    /// may split.
    fn grow(&mut self, rows: Vec<u32>, depth: usize, hist: Option<Hist>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i as usize], h + self.hess[i as usize])
        });
        let best = hist.as_ref().and_then(|hist| self.best_split(hist, rows.len(), g, h));
        match best {
            None => {
                let value = -self.p.learning_rate * g / (h + self.p.lambda);
                for &i in &rows {
                    self.row_value[i as usize] = value;
                }
                self.nodes[id] = Node::Leaf { value };
            }
            Some(b) => {
                self.importance[b.feature] += b.gain;
                let codes = &self.data.codes[b.feature];
                let (l, r): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&i| codes[i as usize] as usize <= b.bin);
                let (hl, hr) = if self.splittable(l.len(), depth + 1)
                    || self.splittable(r.len(), depth + 1)
                {
                    let parent = hist.expect("split nodes carry a histogram");
                    if l.len() <= r.len() {
                        let hl = self.histogram(&l);
                        let hr = parent.minus(&hl);
                        (Some(hl), Some(hr))
                    } else {
                        let hr = self.histogram(&r);
                        let hl = parent.minus(&hr);
                        (Some(hl), Some(hr))
                    }
                } else {
                    (None, None)
                };
                let hl = hl.filter(|_| self.splittable(l.len(), depth + 1));
                let hr = hr.filter(|_| self.splittable(r.len(), depth + 1));
                let left = self.grow(l, depth + 1, hl);
                let right = self.grow(r, depth + 1, hr);
                self.nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: self.data.edges[b.feature][b.bin],
                    gain: b.gain,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, hist: &Hist, n: usize, g: f64, h: f64) -> Option<Best> {
        let parent = self.score(g, h);
        let min_leaf = self.p.min_samples_leaf;
        let mut best: Option<Best> = None;
        for j in 0..self.data.n_features() {
            let nb = self.data.n_bins(j);
            let off = self.data.offsets[j];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0);
            for b in 0..nb - 1 {
                let cb = hist.n[off + b] as usize;
                gl += hist.g[off + b];
                hl += hist.h[off + b];
                nl += cb;
                if nl < min_leaf {
                    continue;
                }
                if n - nl < min_leaf {
                    break;
                }
                if cb == 0 {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    best = Some(Best { feature: j, bin: b, gain });
                }
            }
        }
        best
    }
}

fn sigmoid(z: f64) -> f64 {
    super::sigmoid(z)
}

/// Returns (base log-odds, trees, per-feature total gain).
pub(crate) fn fit(p: &GbtParams, table: &FeatureTable) -> (f64, Vec<Tree>, Vec<f64>) {
    let data = Binned::new(table, p.max_bins);
    let n = table.len();
    let y: Vec<f64> = table.rows.iter().map(|r| f64::from(r.label)).collect();
    let prevalence = y.iter().sum::<f64>() / n as f64;
    let base = (prevalence / (1.0 - prevalence)).ln();
    let mut margin = vec![base; n];
    let mut importance = vec![0.0; data.n_features()];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(p.trees);
    let all: Vec<u32> = (0..n as u32).collect();
    for _ in 0..p.trees {
        for i in 0..n {
            let s = sigmoid(margin[i]);
            grad[i] = s - y[i];
            hess[i] = (s * (1.0 - s)).max(1e-16);
        }
        let mut g = Grower {
            p,
            data: &data,
            grad: &grad,
            hess: &hess,
            nodes: Vec::new(),
            importance: &mut importance,
            row_value: vec![0.0; n],
        };
        let hist = g.splittable(n, 0).then(|| g.histogram(&all));
        g.grow(all.clone(), 0, hist);
        for (m, v) in margin.iter_mut().zip(&g.row_value) {
            *m += v;
        }
        trees.push(Tree { nodes: g.nodes });
    }
    (base, trees, importance)
}
