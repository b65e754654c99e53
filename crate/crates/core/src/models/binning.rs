//! Quantile binning of feature columns for histogram split search.

use crate::features::FeatureTable;

/// Column-major bin codes plus the raw cut points behind them.
///
/// `bin(x) = #{edges e : x > e}`, so "bin <= b" is the same predicate as
/// "x <= edges[b]" and trees learned on codes apply directly to raw values.
pub(crate) struct Binned {
    pub codes: Vec<Vec<u8>>,
    /// Start of each feature's block in a flat all-feature histogram.
    pub offsets: Vec<usize>,
    pub edges: Vec<Vec<f64>>,
}

impl Binned {
    /// `max_bins` must not exceed 256.
    pub fn new(table: &FeatureTable, max_bins: usize) -> Binned {
        debug_assert!(max_bins <= 256);
        let n = table.len();
        let d = table.n_features();
        let mut codes = Vec::with_capacity(d);
        let mut edges = Vec::with_capacity(d);
        let mut col = vec![0.0; n];
        for j in 0..d {
            for (c, r) in col.iter_mut().zip(&table.rows) {
                *c = r.values[j];
            }
            let e = cut_points(&col, max_bins);
            codes.push(col.iter().map(|&x| e.partition_point(|&t| x > t) as u8).collect());
            edges.push(e);
        }
        let mut offsets = Vec::with_capacity(d + 1);
        let mut acc = 0;
        for e in &edges {
            offsets.push(acc);
            acc += e.len() + 1;
        }
        offsets.push(acc);
        Binned { codes, edges, offsets }
    }

    pub fn n_features(&self) -> usize {
        self.codes.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }

    pub fn total_bins(&self) -> usize {
        self.offsets[self.n_features()]
    }
}

/// Midpoints between adjacent distinct values at (roughly) equal-count
/// positions, at most `max_bins - 1` of them.
fn cut_points(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut out: Vec<f64> = Vec::new();
    let mut push = |a: f64, b: f64| {
        if a < b {
            let m = a + (b - a) / 2.0;
            if out.last().is_none_or(|&l| m > l) {
                out.push(m);
            }
        }
    };
    let mut distinct = v.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        for w in distinct.windows(2) {
            push(w[0], w[1]);
        }
    } else {
        for i in 1..max_bins {
            let j = i * n / max_bins;
            if j == 0 || j >= n {
                continue;
            }
            // advance to the next value change so ties stay in one bin
            let a = v[j - 1];
            let k = j + v[j..].partition_point(|&x| x <= a);
            if k < n {
                push(a, v[k]);
            }
        }
    }
    out
}
