//! Bagged Gini classification trees with per-node feature subsampling.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binning::Binned;
use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::seed::{self, PipelineRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    /// Features tried per node; `None` means ceil(sqrt(d)).
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 300,
            max_features: None,
            min_samples_leaf: 2,
            max_depth: None,
            max_bins: 64,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("random_forest: {m}")));
        if self.trees == 0 {
            return bad("trees must be >= 1");
        }
        if self.max_features == Some(0) {
            return bad("max_features must be >= 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        Ok(())
    }

    pub fn features_per_node(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d)
    }
}

/// 2p(1-p), the Gini impurity of a two-class node.
fn gini(n: usize, n1: usize) -> f64 {
    let p = n1 as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    p: &'a ForestParams,
    data: &'a Binned,
    labels: &'a [u8],
    m: usize,
    rng: PipelineRng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let n = rows.len();
        let n1 = rows.iter().filter(|&&i| self.labels[i as usize] == 1).count();
        let can_split = n1 > 0
            && n1 < n
            && n >= 2 * self.p.min_samples_leaf
            && self.p.max_depth.is_none_or(|d| depth < d);
        let best = if can_split { self.best_split(&rows, n1) } else { None };
        match best {
            None => self.nodes[id] = Node::Leaf { value: n1 as f64 / n as f64 },
            Some((feature, bin, decrease)) => {
                self.importance[feature] += decrease;
                let codes = &self.data.codes[feature];
                let (l, r): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&i| codes[i as usize] as usize <= bin);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold: self.data.edges[feature][bin],
                    gain: decrease,
                    left,
                    right,
                };
            }
        }
        id
    }

    /// Best (feature, bin, weighted impurity decrease) among a random
    /// subset of features.
    fn best_split(&mut self, rows: &[u32], n1: usize) -> Option<(usize, usize, f64)> {
        let n = rows.len();
        let parent = n as f64 * gini(n, n1);
        let min_leaf = self.p.min_samples_leaf;
        let mut feats = sample(&mut self.rng, self.data.n_features(), self.m).into_vec();
        feats.sort_unstable();
        let mut best: Option<(usize, usize, f64)> = None;
        let mut hist: Vec<(usize, usize)> = Vec::new();
        for j in feats {
            let nb = self.data.n_bins(j);
            if nb < 2 {
                continue;
            }
            hist.clear();
            hist.resize(nb, (0, 0));
            let codes = &self.data.codes[j];
            for &i in rows {
                let e = &mut hist[codes[i as usize] as usize];
                e.0 += 1;
                e.1 += usize::from(self.labels[i as usize]);
            }
            let (mut nl, mut n1l) = (0, 0);
            for (b, &(c, c1)) in hist[..nb - 1].iter().enumerate() {
                nl += c;
                n1l += c1;
                if nl < min_leaf || c == 0 {
                    continue;
                }
                let nr = n - nl;
                if nr < min_leaf {
                    break;
                }
                let child = nl as f64 * gini(nl, n1l) + nr as f64 * gini(nr, n1 - n1l);
                let decrease = parent - child;
                if decrease > best.map_or(1e-12, |b| b.2) {
                    best = Some((j, b, decrease));
                }
            }
        }
        best
    }
}

/// Returns the trees and the mean (over trees) of the per-tree weighted
/// impurity decrease, each tree's total divided by its bootstrap size.
pub(crate) fn fit(p: &ForestParams, table: &FeatureTable, seed: u64) -> (Vec<Tree>, Vec<f64>) {
    let data = Binned::new(table, p.max_bins);
    let labels = table.labels();
    let n = table.len();
    let d = data.n_features();
    let m = p.features_per_node(d);
    let mut importance = vec![0.0; d];
    let mut trees = Vec::with_capacity(p.trees);
    for t in 0..p.trees {
        let mut rng = seed::rng(seed::derive(seed, t as u64));
        let rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
        let mut g = Grower {
            p,
            data: &data,
            labels: &labels,
            m,
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; d],
        };
        g.grow(rows, 0);
        for (acc, v) in importance.iter_mut().zip(&g.importance) {
            *acc += v / n as f64;
        }
        trees.push(Tree { nodes: g.nodes });
    }
    for v in &mut importance {
        *v /= p.trees as f64;
    }
    (trees, importance)
}
