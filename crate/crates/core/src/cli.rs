//! Command-line front end. Each subcommand reads the config plus earlier
//! artifacts under `out_dir` and writes its own.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! features/        extract: feature stores + extract_report.json
//! features_test/   extract: same for the test manifest, if configured
//! selection/       select: aggregate.csv, trial_ranks.csv, selected.txt
//!                  sweep-k: k_sweep.csv, k_sweep.json (and selected.txt for k = "sweep")
//! cv/              cv: cv_report.json, <kind>_accuracy.csv, <kind>_roc.csv
//! test/            test: test_report.json, <kind>_accuracy.csv
//! stats/           stats: class_stats.csv
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::artifact::{self, Meta};
use crate::config::{KChoice, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{self, write_class_stats};
use crate::features::{extract_cohort, FeatureKind, FeatureStore, TableReport};
use crate::ingest::load_cohort;
use crate::selection::{self, top_k, AggregateRanking, FeatureSubset};
use crate::synth;

pub const VERSION_LINE: &str = concat!(env!("CARGO_PKG_VERSION"), " (artifact format 1)");

#[derive(Debug, Parser)]
#[command(name = "eegconn", version = VERSION_LINE, about = "EEG coherence features, rank-aggregated selection and thresholded classification")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override the config's cohort manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort next to the configured manifest.
    Synth,
    /// Compute feature stores for the cohort (and the test cohort).
    Extract,
    /// Rank features over repeated subsamples and aggregate.
    Select,
    /// Cross-validate top-k subsets for each configured k.
    SweepK,
    /// Cross-validate every configured model on a feature subset.
    Cv(SubsetArgs),
    /// Train on the whole cohort, evaluate on the test cohort.
    Test(SubsetArgs),
    /// Per-class five-number summaries of the selected features.
    Stats(SubsetArgs),
}

#[derive(Debug, clap::Args)]
pub struct SubsetArgs {
    /// Feature list (one name per line). Defaults to selection/selected.txt.
    #[arg(long, conflicts_with = "all_features")]
    pub features: Option<PathBuf>,
    /// Use every feature of the configured kind.
    #[arg(long)]
    pub all_features: bool,
}

/// Resolved configuration plus the step being run.
struct Ctx {
    cfg: PipelineConfig,
}

impl Ctx {
    fn out(&self, sub: &str) -> Result<PathBuf> {
        let dir = self.cfg.paths.out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn meta(&self, step: &str) -> Meta {
        Meta::new(step, &self.cfg)
    }

    fn store(&self, test: bool) -> Result<FeatureStore> {
        let dir = self
            .cfg
            .paths
            .out_dir
            .join(if test { "features_test" } else { "features" });
        FeatureStore::read(&dir, self.cfg.feature_kind)
    }

    fn subset(&self, args: &SubsetArgs) -> Result<Option<FeatureSubset>> {
        if args.all_features {
            return Ok(None);
        }
        let path = args
            .features
            .clone()
            .unwrap_or_else(|| self.cfg.paths.out_dir.join("selection").join("selected.txt"));
        FeatureSubset::read(&path).map(Some)
    }
}

pub fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::BadArgs("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    if let Some(m) = &cli.manifest {
        cfg.paths.manifest = m.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run a parsed command line; returns the one-line summary.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = load_config(cli)?;
    let ctx = Ctx { cfg };
    let go = || match &cli.command {
        Command::Synth => cmd_synth(&ctx),
        Command::Extract => cmd_extract(&ctx),
        Command::Select => cmd_select(&ctx),
        Command::SweepK => cmd_sweep_k(&ctx),
        Command::Cv(a) => cmd_cv(&ctx, a),
        Command::Test(a) => cmd_test(&ctx, a),
        Command::Stats(a) => cmd_stats(&ctx, a),
    };
    match cli.jobs {
        Some(0) => Err(Error::BadArgs("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::BadArgs(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Machine-readable error line for stderr.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

fn cmd_synth(ctx: &Ctx) -> Result<String> {
    let manifest = &ctx.cfg.paths.manifest;
    if manifest.file_name().and_then(|n| n.to_str()) != Some("manifest.csv") {
        return Err(Error::ConfigInvalid(format!(
            "synth writes `manifest.csv`; paths.manifest is {}",
            manifest.display()
        )));
    }
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let spec = ctx.cfg.synth_spec();
    let cohort = synth::generate(&spec, dir)?;
    let (f, m) = cohort.counts();
    Ok(format!(
        "synth: {} recordings ({f} F / {m} M) in {}",
        cohort.len(),
        dir.display()
    ))
}

#[derive(Serialize)]
struct ExtractSummary<'a> {
    subjects: usize,
    report: &'a TableReport,
}

fn extract_into(ctx: &Ctx, manifest: &Path, sub: &str) -> Result<(usize, TableReport)> {
    let cohort = load_cohort(manifest, ctx.cfg.montage.clone())?;
    let ex = extract_cohort(&cohort, ctx.cfg.sample_rate, &ctx.cfg.extract_params())?;
    let dir = ctx.out(sub)?;
    let meta = ctx.meta("extract");
    for kind in [FeatureKind::Connectivity, FeatureKind::BandPower] {
        ex.store(kind).write(&dir, &meta)?;
    }
    let summary = ExtractSummary {
        subjects: cohort.len(),
        report: &ex.report,
    };
    artifact::write_json(&dir.join("extract_report.json"), &meta, &summary)?;
    Ok((cohort.len(), ex.report))
}

fn cmd_extract(ctx: &Ctx) -> Result<String> {
    let (n, report) = extract_into(ctx, &ctx.cfg.paths.manifest, "features")?;
    let mut line = format!(
        "extract: {n} subjects, {} excluded, {} short evaluation rows",
        report.excluded.len(),
        report.short_eval.len()
    );
    if let Some(test) = &ctx.cfg.paths.test_manifest {
        let (nt, _) = extract_into(ctx, test, "features_test")?;
        line.push_str(&format!("; test cohort {nt} subjects"));
    }
    Ok(line)
}

fn cmd_select(ctx: &Ctx) -> Result<String> {
    let store = ctx.store(false)?;
    let sel = selection::select(
        &store,
        &ctx.cfg.selection_config(),
        &ctx.cfg.selection_gbt(),
        ctx.cfg.seed,
    )?;
    let dir = ctx.out("selection")?;
    let meta = ctx.meta("select");
    sel.aggregate.write_csv(&dir.join("aggregate.csv"), &meta)?;
    selection::write_trial_ranks(&dir.join("trial_ranks.csv"), &store.schema, &sel.ranks, &meta)?;
    let mut line = format!(
        "select: {} trials over {} features",
        sel.ranks.len(),
        store.schema.len()
    );
    if let KChoice::Fixed(k) = ctx.cfg.selection.k {
        let subset = top_k(&sel.aggregate, k)?;
        subset.write(&dir.join("selected.txt"), &meta)?;
        line.push_str(&format!("; top {k} written"));
    }
    Ok(line)
}

fn cmd_sweep_k(ctx: &Ctx) -> Result<String> {
    let store = ctx.store(false)?;
    let dir = ctx.out("selection")?;
    let agg = AggregateRanking::read_csv(&dir.join("aggregate.csv"))?;
    let curve = selection::sweep_k(
        &store,
        &agg,
        &ctx.cfg.selection.ks,
        &ctx.cfg.selection_gbt(),
        &ctx.cfg.cv_config(),
        ctx.cfg.seed,
    )?;
    let meta = ctx.meta("sweep-k");
    curve.write_csv(&dir.join("k_sweep.csv"), &meta)?;
    artifact::write_json(&dir.join("k_sweep.json"), &meta, &curve)?;
    if ctx.cfg.selection.k == KChoice::Sweep {
        top_k(&agg, curve.best_k)?.write(&dir.join("selected.txt"), &meta)?;
    }
    Ok(format!(
        "sweep-k: {} values, best k = {}",
        curve.points.len(),
        curve.best_k
    ))
}

fn cmd_cv(ctx: &Ctx, args: &SubsetArgs) -> Result<String> {
    let store = ctx.store(false)?;
    let subset = ctx.subset(args)?;
    let reports = eval::cross_validate(
        &store,
        subset.as_ref(),
        &ctx.cfg.model_specs(),
        &ctx.cfg.cv_config(),
        ctx.cfg.seed,
    )?;
    let dir = ctx.out("cv")?;
    let meta = ctx.meta("cv");
    artifact::write_json(&dir.join("cv_report.json"), &meta, &reports)?;
    let mut parts = Vec::new();
    for r in &reports {
        r.write_curves(
            &dir.join(format!("{}_accuracy.csv", r.kind)),
            &dir.join(format!("{}_roc.csv", r.kind)),
            &meta,
        )?;
        parts.push(format!(
            "{} auc {:.3} best acc {:.3} at {:.2}",
            r.kind, r.mean_auc, r.best_acc, r.best_theta
        ));
    }
    Ok(format!("cv: {}", parts.join("; ")))
}

fn cmd_test(ctx: &Ctx, args: &SubsetArgs) -> Result<String> {
    if ctx.cfg.paths.test_manifest.is_none() {
        return Err(Error::ConfigInvalid("paths.test_manifest is not set".into()));
    }
    let train = ctx.store(false)?;
    let test = ctx.store(true)?;
    let subset = ctx.subset(args)?;
    let reports = eval::holdout_test(
        &train,
        &test,
        subset.as_ref(),
        &ctx.cfg.model_specs(),
        &ctx.cfg.cv_config(),
        ctx.cfg.seed,
    )?;
    let dir = ctx.out("test")?;
    let meta = ctx.meta("test");
    artifact::write_json(&dir.join("test_report.json"), &meta, &reports)?;
    let mut parts = Vec::new();
    for r in &reports {
        let path = dir.join(format!("{}_accuracy.csv", r.kind));
        let mut w = artifact::csv_writer(&path, &meta)?;
        w.write_record(["threshold", "accuracy"])?;
        for (t, a) in r.grid.iter().zip(&r.accuracy) {
            w.write_record([format!("{t:.2}"), a.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        parts.push(format!("{} best acc {:.3} at {:.2}", r.kind, r.best_acc, r.best_theta));
    }
    Ok(format!("test: {}", parts.join("; ")))
}

fn cmd_stats(ctx: &Ctx, args: &SubsetArgs) -> Result<String> {
    let store = ctx.store(false)?;
    let subset = match ctx.subset(args)? {
        Some(s) => s,
        None => FeatureSubset::new(store.schema.clone())?,
    };
    let ids: HashSet<&str> = store.all_ids();
    let (table, _) = store.eval_table(&ids, ctx.cfg.eval_epochs);
    let stats = eval::class_stats(&table, &subset)?;
    let dir = ctx.out("stats")?;
    write_class_stats(&dir.join("class_stats.csv"), &stats, &ctx.meta("stats"))?;
    Ok(format!("stats: {} features summarized", stats.len()))
}
