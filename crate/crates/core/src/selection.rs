//! Importance ranking over repeated subject subsamples, rank aggregation,
//! top-K subsets and the K sweep.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Meta};
use crate::error::{Error, Result};
use crate::eval::{self, mean, sample_std, stratified_split, CvConfig};
use crate::features::{FeatureStore, Quotas, SectionPolicy};
use crate::models::{train, ModelSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSubset {
    names: Vec<String>,
}

impl FeatureSubset {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature `{n}`")));
            }
        }
        Ok(FeatureSubset { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn write(&self, path: &Path, meta: &Meta) -> Result<()> {
        artifact::write_lines(path, meta, &self.names)
    }

    pub fn read(path: &Path) -> Result<Self> {
        FeatureSubset::new(artifact::read_lines(path)?)
    }
}

/// One trial's ranking: `ranks[j]` is the 1-based rank of schema column `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub trial_id: usize,
    pub ranks: Vec<usize>,
}

impl RankVector {
    /// Rank by descending importance, ties by ascending column index.
    pub fn from_importance(trial_id: usize, importance: &[f64]) -> RankVector {
        let mut order: Vec<usize> = (0..importance.len()).collect();
        order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
        let mut ranks = vec![0; importance.len()];
        for (pos, &j) in order.iter().enumerate() {
            ranks[j] = pos + 1;
        }
        RankVector { trial_id, ranks }
    }

    pub fn is_permutation(&self) -> bool {
        let d = self.ranks.len();
        let mut seen = vec![false; d];
        self.ranks.iter().all(|&r| {
            (1..=d).contains(&r) && !std::mem::replace(&mut seen[r - 1], true)
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatePolicy {
    /// Order by worst rank, then mean rank, then column index.
    #[default]
    WorstRank,
    /// Order by mean rank, then worst rank, then column index.
    MeanRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRanking {
    pub schema: Vec<String>,
    /// Column indices, most important first.
    pub order: Vec<usize>,
    pub worst_rank: Vec<usize>,
    pub mean_rank: Vec<f64>,
}

/// Combine per-trial rankings over one schema.
pub fn aggregate(schema: &[String], ranks: &[RankVector], policy: AggregatePolicy) -> Result<AggregateRanking> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput("no rank vectors to aggregate"));
    }
    let d = schema.len();
    for r in ranks {
        if r.ranks.len() != d || !r.is_permutation() {
            return Err(Error::SchemaMismatch(format!(
                "trial {} does not rank the {d} schema columns",
                r.trial_id
            )));
        }
    }
    let mut worst = vec![0usize; d];
    let mut total = vec![0usize; d];
    for r in ranks {
        for (j, &k) in r.ranks.iter().enumerate() {
            worst[j] = worst[j].max(k);
            total[j] += k;
        }
    }
    // integer sums make the mean independent of trial order
    let mean_rank: Vec<f64> = total.iter().map(|&t| t as f64 / ranks.len() as f64).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let by_worst = worst[a].cmp(&worst[b]);
        let by_mean = mean_rank[a].total_cmp(&mean_rank[b]);
        match policy {
            AggregatePolicy::WorstRank => by_worst.then(by_mean),
            AggregatePolicy::MeanRank => by_mean.then(by_worst),
        }
        .then(a.cmp(&b))
    });
    Ok(AggregateRanking {
        schema: schema.to_vec(),
        order,
        worst_rank: worst,
        mean_rank,
    })
}

impl AggregateRanking {
    pub fn ordered_names(&self) -> Vec<&str> {
        self.order.iter().map(|&j| self.schema[j].as_str()).collect()
    }

    /// 1-based final position of each schema column.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.schema.len()];
        for (p, &j) in self.order.iter().enumerate() {
            pos[j] = p + 1;
        }
        pos
    }

    /// CSV `feature,worst_rank,mean_rank,final_position`, one row per column
    /// in schema order.
    pub fn write_csv(&self, path: &Path, meta: &Meta) -> Result<()> {
        let mut w = artifact::csv_writer(path, meta)?;
        w.write_record(["feature", "worst_rank", "mean_rank", "final_position"])?;
        for (j, p) in self.positions().into_iter().enumerate() {
            w.write_record([
                self.schema[j].clone(),
                self.worst_rank[j].to_string(),
                self.mean_rank[j].to_string(),
                p.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<AggregateRanking> {
        let malformed = |msg: String| Error::MalformedArtifact {
            path: path.to_path_buf(),
            msg,
        };
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => malformed(format!("{other:?}")),
            })?;
        let mut schema = Vec::new();
        let mut worst_rank = Vec::new();
        let mut mean_rank = Vec::new();
        let mut position = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(malformed(format!("expected 4 fields, found {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| malformed(format!("bad number `{}`", &rec[i])))
            };
            schema.push(rec[0].to_string());
            worst_rank.push(num(1)? as usize);
            mean_rank.push(num(2)?);
            position.push(num(3)? as usize);
        }
        let d = schema.len();
        let mut order = vec![usize::MAX; d];
        for (j, &p) in position.iter().enumerate() {
            if p == 0 || p > d || order[p - 1] != usize::MAX {
                return Err(malformed(format!("final_position {p} is not a valid permutation entry")));
            }
            order[p - 1] = j;
        }
        Ok(AggregateRanking {
            schema,
            order,
            worst_rank,
            mean_rank,
        })
    }
}

pub fn top_k(agg: &AggregateRanking, k: usize) -> Result<FeatureSubset> {
    let d = agg.schema.len();
    if k == 0 || k > d {
        return Err(Error::BadK { k, d });
    }
    FeatureSubset::new(agg.order[..k].iter().map(|&j| agg.schema[j].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub n_trials: usize,
    pub train_fraction: f64,
    pub quotas: Quotas,
    pub section_policy: SectionPolicy,
    pub aggregate_policy: AggregatePolicy,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n_trials: 50,
            train_fraction: 0.9,
            quotas: Quotas::default(),
            section_policy: SectionPolicy::Random,
            aggregate_policy: AggregatePolicy::WorstRank,
        }
    }
}

/// Seed of selection trial `t` under master `seed`.
pub fn selection_trial_seed(seed: u64, t: usize) -> u64 {
    seed::derive(seed::derive_str(seed, "selection"), t as u64)
}

/// Train a gbt on a stratified subsample and rank columns by its importance.
pub fn rank_one_trial(
    store: &FeatureStore,
    trial_id: usize,
    trial_seed: u64,
    cfg: &SelectionConfig,
    gbt: &ModelSpec,
) -> Result<RankVector> {
    let (f, m) = store.counts();
    if f == 0 || m == 0 {
        return Err(Error::SingleClass);
    }
    let split = stratified_split(store, cfg.train_fraction, trial_seed);
    let ids: HashSet<&str> = split.train.iter().map(String::as_str).collect();
    let (table, _) = store.training_table(
        &ids,
        &cfg.quotas,
        cfg.section_policy,
        seed::derive_str(trial_seed, "sections"),
    )?;
    let model = train(&gbt.with_seed(seed::derive_str(trial_seed, "model")), &table)?;
    let importance = model
        .feature_importance
        .ok_or(Error::WrongKind {
            expected: "gbt",
            found: gbt.kind().as_str(),
        })?;
    Ok(RankVector::from_importance(trial_id, &importance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub ranks: Vec<RankVector>,
    pub aggregate: AggregateRanking,
}

/// Run all selection trials (in parallel) and aggregate them.
pub fn select(store: &FeatureStore, cfg: &SelectionConfig, gbt: &ModelSpec, seed: u64) -> Result<Selection> {
    if cfg.n_trials == 0 {
        return Err(Error::ConfigInvalid("selection n_trials must be >= 1".into()));
    }
    let ranks: Vec<RankVector> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| rank_one_trial(store, t, selection_trial_seed(seed, t), cfg, gbt))
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&store.schema, &ranks, cfg.aggregate_policy)?;
    Ok(Selection { ranks, aggregate })
}

/// Per-trial ranks as CSV: `feature,trial_0,trial_1,...`.
pub fn write_trial_ranks(path: &Path, schema: &[String], ranks: &[RankVector], meta: &Meta) -> Result<()> {
    let mut w = artifact::csv_writer(path, meta)?;
    let mut head = vec!["feature".to_string()];
    head.extend(ranks.iter().map(|r| format!("trial_{}", r.trial_id)));
    w.write_record(&head)?;
    for (j, name) in schema.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(ranks.iter().map(|r| r.ranks[j].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k: usize,
    /// Highest mean validation accuracy over the threshold grid, the θ that
    /// reaches it, and the sample std over trials at that θ.
    pub mean_acc: f64,
    pub theta: f64,
    pub std_acc: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepCurve {
    pub points: Vec<KPoint>,
    /// Smallest k reaching the highest mean accuracy.
    pub best_k: usize,
}

/// Cross-validate the gbt on each top-k prefix. Every k uses the same trial
/// seeds, so the curves differ only through the feature subset.
pub fn sweep_k(
    store: &FeatureStore,
    agg: &AggregateRanking,
    ks: &[usize],
    gbt: &ModelSpec,
    cfg: &CvConfig,
    seed: u64,
) -> Result<KSweepCurve> {
    if ks.is_empty() {
        return Err(Error::EmptyInput("no k values to sweep"));
    }
    let subsets: Vec<FeatureSubset> = ks.iter().map(|&k| top_k(agg, k)).collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(ks.len());
    for (&k, subset) in ks.iter().zip(&subsets) {
        let report = eval::cross_validate(store, Some(subset), std::slice::from_ref(gbt), cfg, seed)?
            .remove(0);
        let at = report
            .grid
            .iter()
            .position(|&t| t == report.best_theta)
            .expect("best threshold is a grid point");
        let aucs: Vec<f64> = report.trials.iter().map(|t| t.roc.auc).collect();
        points.push(KPoint {
            k,
            mean_acc: report.best_acc,
            theta: report.best_theta,
            std_acc: report.std_acc[at],
            mean_auc: mean(&aucs),
            std_auc: sample_std(&aucs),
        });
    }
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        let b = &points[best];
        if p.mean_acc > b.mean_acc || (p.mean_acc == b.mean_acc && p.k < b.k) {
            best = i;
        }
    }
    Ok(KSweepCurve {
        best_k: points[best].k,
        points,
    })
}

impl KSweepCurve {
    pub fn write_csv(&self, path: &Path, meta: &Meta) -> Result<()> {
        let mut w = artifact::csv_writer(path, meta)?;
        w.write_record(["k", "mean_acc", "theta", "std_acc", "mean_auc", "std_auc"])?;
        for p in &self.points {
            w.write_record([
                p.k.to_string(),
                p.mean_acc.to_string(),
                format!("{:.2}", p.theta),
                p.std_acc.to_string(),
                p.mean_auc.to_string(),
                p.std_auc.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
