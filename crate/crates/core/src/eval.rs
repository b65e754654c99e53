//! Subject-level cross-validation, threshold sweeps, ROC/AUC, holdout
//! testing and class-conditional summaries.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Meta;
use crate::error::{Error, Result};
use crate::features::{FeatureStore, FeatureTable, Quotas, SectionPolicy, TableReport};
use crate::ingest::Sex;
use crate::models::{classify, predict_proba, train, ModelKind, ModelSpec};
use crate::seed;
use crate::selection::FeatureSubset;

/// θ = 0.01, 0.02, ..., 0.99.
pub fn default_grid() -> Vec<f64> {
    (1..=99).map(|i| f64::from(i) / 100.0).collect()
}

/// Points of the FPR grid used for vertical ROC averaging.
pub const MEAN_ROC_POINTS: usize = 101;

pub fn accuracy_at(probs: &[f64], labels: &[u8], theta: f64) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| classify(**p, theta) == **y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn threshold_sweep(probs: &[f64], labels: &[u8], grid: &[f64]) -> Result<Vec<f64>> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("threshold sweep needs at least one prediction"));
    }
    Ok(grid.iter().map(|&t| accuracy_at(probs, labels, t)).collect())
}

/// First grid point reaching the maximum accuracy.
pub fn best_threshold(grid: &[f64], accuracy: &[f64]) -> (f64, f64) {
    let mut best = 0;
    for (i, &a) in accuracy.iter().enumerate() {
        if a > accuracy[best] {
            best = i;
        }
    }
    (grid[best], accuracy[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// TPR at `fpr`, reading vertical segments at their top.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let pts = &self.points;
        let k = pts.partition_point(|p| p.0 <= fpr);
        if k == 0 {
            return 0.0;
        }
        let (x0, y0) = pts[k - 1];
        if k == pts.len() || x0 == fpr {
            return y0;
        }
        let (x1, y1) = pts[k];
        y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
    }
}

/// ROC from the sorted distinct scores; AUC by the trapezoid rule.
///
/// The trapezoid sum is accumulated in integer counts and divided once, so
/// it is the same rational number as the Mann-Whitney statistic with ties
/// counted one half.
pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(probs.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += u128::from(fp - fp0) * u128::from(tp + tp0);
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = twice_area as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64;
    Ok(RocCurve { points, auc })
}

/// Vertical average of ROC curves on `n` evenly spaced FPR values in [0, 1].
pub fn mean_roc(curves: &[RocCurve], n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            let y = curves.iter().map(|c| c.tpr_at(x)).sum::<f64>() / curves.len() as f64;
            (x, y)
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub n_trials: usize,
    pub train_fraction: f64,
    pub grid: Vec<f64>,
    pub eval_epochs: usize,
    pub quotas: Quotas,
    pub section_policy: SectionPolicy,
    pub max_redraws: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_trials: 50,
            train_fraction: 0.9,
            grid: default_grid(),
            eval_epochs: 90,
            quotas: Quotas::default(),
            section_policy: SectionPolicy::Random,
            max_redraws: 10,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_trials == 0 {
            return bad("n_trials must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} is outside (0, 1)", self.train_fraction));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("threshold grid must be nonempty and strictly increasing".into());
        }
        if self.grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return bad("thresholds must lie in (0, 1)".into());
        }
        self.quotas.validate()
    }
}

/// Subject ids partitioned into a training part and a held-out part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub held: Vec<String>,
}

/// Per sex, `floor(fraction * n)` subjects (at least one) go to training.
pub fn stratified_split(store: &FeatureStore, fraction: f64, seed: u64) -> Split {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for sex in [Sex::F, Sex::M] {
        let ids: Vec<&str> = store
            .subjects
            .iter()
            .filter(|s| s.sex == sex)
            .map(|s| s.subject_id.as_str())
            .collect();
        if ids.is_empty() {
            continue;
        }
        // the epsilon keeps 0.9 * 30 from flooring to 26
        let k = ((fraction * ids.len() as f64 + 1e-9).floor() as usize).max(1);
        let mut rng = seed::rng(seed::derive_str(seed, &sex.to_string()));
        let mut pick = rand::seq::index::sample(&mut rng, ids.len(), k).into_vec();
        pick.sort_unstable();
        let chosen: HashSet<usize> = pick.iter().copied().collect();
        for (i, id) in ids.iter().enumerate() {
            if chosen.contains(&i) {
                train.push(id.to_string());
            } else {
                held.push(id.to_string());
            }
        }
    }
    train.sort();
    held.sort();
    Split { train, held }
}

/// Subjects present in both tables. Always empty for tables built by this
/// module; checked on every trial anyway.
pub fn overlap(train: &FeatureTable, held: &FeatureTable) -> Vec<String> {
    let a = train.subject_ids();
    let mut v: Vec<String> = held
        .subject_ids()
        .into_iter()
        .filter(|id| a.contains(id))
        .map(String::from)
        .collect();
    v.sort();
    v
}

/// One model kind's outcome on one validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub redraws: usize,
    pub subjects: Vec<String>,
    pub labels: Vec<u8>,
    pub probs: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub grid: Vec<f64>,
    pub trials: Vec<TrialResult>,
    pub mean_acc: Vec<f64>,
    pub std_acc: Vec<f64>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub best_theta: f64,
    pub best_acc: f64,
    pub mean_roc: Vec<(f64, f64)>,
    /// Validation subjects found in their own trial's training table,
    /// summed over trials.
    pub hygiene_violations: usize,
}

impl CvReport {
    /// Rebuild every aggregate from the per-trial records.
    pub fn from_trials(
        spec: ModelSpec,
        grid: Vec<f64>,
        trials: Vec<TrialResult>,
        hygiene_violations: usize,
    ) -> CvReport {
        let g = grid.len();
        let column = |j: usize| trials.iter().map(|t| t.accuracy[j]).collect::<Vec<f64>>();
        let mean_acc: Vec<f64> = (0..g).map(|j| mean(&column(j))).collect();
        let std_acc: Vec<f64> = (0..g).map(|j| sample_std(&column(j))).collect();
        let aucs: Vec<f64> = trials.iter().map(|t| t.roc.auc).collect();
        let (best_theta, best_acc) = best_threshold(&grid, &mean_acc);
        let curves: Vec<RocCurve> = trials.iter().map(|t| t.roc.clone()).collect();
        CvReport {
            kind: spec.kind(),
            spec,
            mean_acc,
            std_acc,
            mean_auc: mean(&aucs),
            std_auc: sample_std(&aucs),
            best_theta,
            best_acc,
            mean_roc: mean_roc(&curves, MEAN_ROC_POINTS),
            grid,
            trials,
            hygiene_violations,
        }
    }

    /// Mean and sample std of per-trial accuracy at a single threshold.
    pub fn accuracy_at(&self, theta: f64) -> (f64, f64) {
        let a: Vec<f64> = self
            .trials
            .iter()
            .map(|t| accuracy_at(&t.probs, &t.labels, theta))
            .collect();
        (mean(&a), sample_std(&a))
    }

    pub fn write_curves(&self, acc_path: &Path, roc_path: &Path, meta: &Meta) -> Result<()> {
        let mut w = crate::artifact::csv_writer(acc_path, meta)?;
        w.write_record(["threshold", "mean_acc", "std_acc"])?;
        for ((t, m), s) in self.grid.iter().zip(&self.mean_acc).zip(&self.std_acc) {
            w.write_record([format!("{t:.2}"), m.to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(acc_path, e))?;
        let mut w = crate::artifact::csv_writer(roc_path, meta)?;
        w.write_record(["fpr", "tpr"])?;
        for (x, y) in &self.mean_roc {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(roc_path, e))
    }
}

struct Fold {
    train: FeatureTable,
    held: FeatureTable,
    held_ids: Vec<String>,
    redraws: usize,
}

fn draw_fold(store: &FeatureStore, cfg: &CvConfig, trial_seed: u64) -> Result<Fold> {
    for attempt in 0..=cfg.max_redraws {
        let split = stratified_split(store, cfg.train_fraction, seed::derive(trial_seed, attempt as u64));
        let held_ids: HashSet<&str> = split.held.iter().map(String::as_str).collect();
        let (held, _) = store.eval_table(&held_ids, cfg.eval_epochs);
        let females = held.rows.iter().filter(|r| r.label == 1).count();
        if females == 0 || females == held.len() {
            continue;
        }
        let train_ids: HashSet<&str> = split.train.iter().map(String::as_str).collect();
        let (train, _) = store.training_table(
            &train_ids,
            &cfg.quotas,
            cfg.section_policy,
            seed::derive_str(trial_seed, "sections"),
        )?;
        return Ok(Fold {
            train,
            held,
            held_ids: split.held,
            redraws: attempt,
        });
    }
    Err(Error::CohortTooSmall(format!(
        "no validation fold with both sexes after {} redraws",
        cfg.max_redraws
    )))
}

/// Seed of CV trial `t` under master `seed`; disjoint from selection trials.
pub fn cv_trial_seed(seed: u64, t: usize) -> u64 {
    seed::derive(seed::derive_str(seed, "cv"), t as u64)
}

/// Repeated stratified subject-level validation.
///
/// Each trial trains on section rows of its training subjects and scores
/// one whole-recording row per held-out subject.
pub fn cross_validate(
    store: &FeatureStore,
    subset: Option<&FeatureSubset>,
    specs: &[ModelSpec],
    cfg: &CvConfig,
    seed: u64,
) -> Result<Vec<CvReport>> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::EmptyInput("no model specs to evaluate"));
    }
    let projected;
    let store = match subset {
        Some(s) => {
            projected = store.project(s)?;
            &projected
        }
        None => store,
    };
    let per_trial: Vec<(Vec<TrialResult>, usize)> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| -> Result<(Vec<TrialResult>, usize)> {
            let trial_seed = cv_trial_seed(seed, t);
            let fold = draw_fold(store, cfg, trial_seed)?;
            let violations = overlap(&fold.train, &fold.held).len();
            let labels = fold.held.labels();
            let results = specs
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let model_seed = seed::derive(spec.seed ^ trial_seed, i as u64);
                    let model = train(&spec.with_seed(model_seed), &fold.train)?;
                    let probs = predict_proba(&model, &fold.held)?;
                    Ok(TrialResult {
                        trial: t,
                        seed: trial_seed,
                        redraws: fold.redraws,
                        subjects: fold.held_ids.clone(),
                        accuracy: threshold_sweep(&probs, &labels, &cfg.grid)?,
                        roc: roc_auc(&probs, &labels)?,
                        labels: labels.clone(),
                        probs,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((results, violations))
        })
        .collect::<Result<_>>()?;
    let violations: usize = per_trial.iter().map(|(_, v)| v).sum();
    Ok(specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let trials = per_trial.iter().map(|(r, _)| r[i].clone()).collect();
            CvReport::from_trials(spec.clone(), cfg.grid.clone(), trials, violations)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub grid: Vec<f64>,
    pub subjects: Vec<String>,
    pub labels: Vec<u8>,
    pub probs: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub best_theta: f64,
    pub best_acc: f64,
    pub auc: Option<f64>,
    pub train_report: TableReport,
    pub test_report: TableReport,
}

/// Train once on the whole training store, score the unsplit test rows.
pub fn holdout_test(
    train_store: &FeatureStore,
    test_store: &FeatureStore,
    subset: Option<&FeatureSubset>,
    specs: &[ModelSpec],
    cfg: &CvConfig,
    seed: u64,
) -> Result<Vec<TestReport>> {
    cfg.validate()?;
    let train_ids = train_store.all_ids();
    let mut shared: Vec<&str> = test_store
        .all_ids()
        .into_iter()
        .filter(|id| train_ids.contains(id))
        .collect();
    if !shared.is_empty() {
        shared.sort_unstable();
        return Err(Error::SubjectOverlap(shared.join(", ")));
    }
    let (a, b);
    let (train_store, test_store) = match subset {
        Some(s) => {
            a = train_store.project(s)?;
            b = test_store.project(s)?;
            (&a, &b)
        }
        None => (train_store, test_store),
    };
    let (train_table, train_report) = train_store.training_table(
        &train_store.all_ids(),
        &cfg.quotas,
        cfg.section_policy,
        seed::derive_str(seed, "test-sections"),
    )?;
    let (test_table, test_report) = test_store.eval_table(&test_store.all_ids(), cfg.eval_epochs);
    if test_table.is_empty() {
        return Err(Error::EmptyTable);
    }
    debug_assert!(overlap(&train_table, &test_table).is_empty());
    let labels = test_table.labels();
    let subjects: Vec<String> = test_table.rows.iter().map(|r| r.subject_id.clone()).collect();
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let model_seed = seed::derive(spec.seed ^ seed::derive_str(seed, "test"), i as u64);
            let model = train(&spec.with_seed(model_seed), &train_table)?;
            let probs = predict_proba(&model, &test_table)?;
            let accuracy = threshold_sweep(&probs, &labels, &cfg.grid)?;
            let (best_theta, best_acc) = best_threshold(&cfg.grid, &accuracy);
            Ok(TestReport {
                kind: spec.kind(),
                spec: spec.clone(),
                grid: cfg.grid.clone(),
                subjects: subjects.clone(),
                labels: labels.clone(),
                auc: roc_auc(&probs, &labels).ok().map(|r| r.auc),
                probs,
                accuracy,
                best_theta,
                best_acc,
                train_report: train_report.clone(),
                test_report: test_report.clone(),
            })
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data (numpy's default).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> FiveNumber {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        FiveNumber {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub feature: String,
    pub band: String,
    pub female: FiveNumber,
    pub male: FiveNumber,
}

/// Band suffix of a feature name (`"Fp1-Fz:gamma"` -> `"gamma"`).
pub fn band_of(feature: &str) -> &str {
    feature.rsplit_once(':').map_or("", |(_, b)| b)
}

/// Per-class five-number summaries of the subset's columns, grouped by band
/// (bands in order of first appearance, subset order within a band).
pub fn class_stats(table: &FeatureTable, subset: &FeatureSubset) -> Result<Vec<ClassStats>> {
    let (f, m): (Vec<_>, Vec<_>) = table.rows.iter().partition(|r| r.label == 1);
    if f.is_empty() || m.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut bands: Vec<&str> = Vec::new();
    for n in subset.names() {
        if !bands.contains(&band_of(n)) {
            bands.push(band_of(n));
        }
    }
    let mut out = Vec::new();
    for band in bands {
        for name in subset.names().iter().filter(|n| band_of(n) == band) {
            let j = table
                .column_index(name)
                .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            let col = |rows: &[&crate::features::FeatureRow]| {
                rows.iter().map(|r| r.values[j]).collect::<Vec<f64>>()
            };
            out.push(ClassStats {
                feature: name.clone(),
                band: band.to_string(),
                female: FiveNumber::of(&col(&f)),
                male: FiveNumber::of(&col(&m)),
            });
        }
    }
    Ok(out)
}

pub fn write_class_stats(path: &Path, stats: &[ClassStats], meta: &Meta) -> Result<()> {
    let mut w = crate::artifact::csv_writer(path, meta)?;
    w.write_record(["band", "feature", "class", "min", "q1", "median", "q3", "max"])?;
    for s in stats {
        for (class, v) in [("F", &s.female), ("M", &s.male)] {
            w.write_record([
                s.band.clone(),
                s.feature.clone(),
                class.to_string(),
                v.min.to_string(),
                v.q1.to_string(),
                v.median.to_string(),
                v.q3.to_string(),
                v.max.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureRow;
    use proptest::prelude::*;

    fn brute_auc(p: &[f64], y: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p.len() {
            for j in 0..p.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    if p[i] > p[j] {
                        num += 1.0;
                    } else if p[i] == p[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn sweep_examples() {
        let g = [0.5];
        assert_eq!(threshold_sweep(&[0.9, 0.1], &[1, 0], &g).unwrap(), vec![1.0]);
        let acc = threshold_sweep(&[0.3, 0.6, 0.8], &[1, 0, 0], &[0.1]).unwrap();
        assert!((acc[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            threshold_sweep(&[0.1], &[1, 0], &g),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert_eq!(default_grid().len(), 99);
        assert_eq!(default_grid()[38], 0.39);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap().auc, 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
        let r = roc_auc(&[0.9, 0.5, 0.5, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn mean_roc_of_identical_curves_is_that_curve() {
        let r = roc_auc(&[0.9, 0.7, 0.4, 0.2], &[1, 0, 1, 0]).unwrap();
        let m = mean_roc(&[r.clone(), r.clone()], 5);
        assert_eq!(m[0], (0.0, 0.5));
        assert_eq!(m[4], (1.0, 1.0));
        assert_eq!(m[2].1, r.tpr_at(0.5));
    }

    #[test]
    fn std_and_quantiles() {
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.75), 3.25);
    }

    #[test]
    fn best_threshold_takes_the_smallest_tie() {
        assert_eq!(best_threshold(&[0.1, 0.2, 0.3], &[0.5, 0.8, 0.8]), (0.2, 0.8));
    }

    #[test]
    fn class_stats_constant_classes() {
        let rows = (0..6)
            .map(|i| FeatureRow {
                subject_id: format!("s{i}"),
                section_id: 0,
                label: (i % 2) as u8,
                values: vec![if i % 2 == 1 { 2.0 } else { -1.0 }, i as f64],
            })
            .collect();
        let t = FeatureTable::new(vec!["A-B:beta".into(), "A-B:alpha".into()], rows).unwrap();
        let subset = FeatureSubset::new(vec!["A-B:beta".into(), "A-B:alpha".into()]).unwrap();
        let s = class_stats(&t, &subset).unwrap();
        assert_eq!(s[0].female, FiveNumber { min: 2.0, q1: 2.0, median: 2.0, q3: 2.0, max: 2.0 });
        assert_eq!(s[0].male.median, -1.0);
        assert_eq!(s[1].band, "alpha");
        assert_eq!(s[1].female.median, 3.0);
    }

    proptest! {
        #[test]
        fn trapezoid_equals_concordance(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let probs: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 20.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, y)| u8::from(*y)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let r = roc_auc(&probs, &labels).unwrap();
            prop_assert!((r.auc - brute_auc(&probs, &labels)).abs() <= 1e-12);
            prop_assert!(r.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        }

        #[test]
        fn accuracy_is_bounded_and_steps_only_at_scores(
            probs in prop::collection::vec(0.0f64..1.0, 1..30),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let labels: Vec<u8> = (0..probs.len()).map(|i| (i % 2) as u8).collect();
            let acc = accuracy_at(&probs, &labels, a);
            prop_assert!((0.0..=1.0).contains(&acc));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if !probs.iter().any(|&p| p >= lo && p < hi) {
                prop_assert_eq!(accuracy_at(&probs, &labels, lo), accuracy_at(&probs, &labels, hi));
            }
        }
    }
}
