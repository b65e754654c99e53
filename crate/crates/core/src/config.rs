//! The pipeline configuration document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{default_grid, CvConfig};
use crate::features::{ExtractParams, FeatureKind, Quotas, SectionPolicy};
use crate::ingest::{EpochParams, Montage, DEFAULT_SAMPLE_RATE};
use crate::models::{GbtParams, Hyperparameters, ModelSpec};
use crate::selection::{AggregatePolicy, SelectionConfig};
use crate::spectrum::BandScheme;
use crate::synth::SynthSpec;

/// Either a fixed subset size or `"sweep"` (take the K-sweep argmax).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum KChoice {
    Fixed(usize),
    Sweep,
}

impl TryFrom<serde_json::Value> for KChoice {
    type Error = String;
    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        match &v {
            serde_json::Value::String(s) if s == "sweep" => Ok(KChoice::Sweep),
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|&k| k > 0)
                .map(|k| KChoice::Fixed(k as usize))
                .ok_or_else(|| format!("k must be a positive integer or \"sweep\", got {v}")),
            _ => Err(format!("k must be a positive integer or \"sweep\", got {v}")),
        }
    }
}

impl From<KChoice> for serde_json::Value {
    fn from(k: KChoice) -> Self {
        match k {
            KChoice::Fixed(k) => k.into(),
            KChoice::Sweep => "sweep".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    pub test_manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            manifest: "cohort/manifest.csv".into(),
            test_manifest: None,
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub n_trials: usize,
    pub train_fraction: f64,
    pub aggregate_policy: AggregatePolicy,
    pub k: KChoice,
    pub ks: Vec<usize>,
    pub gbt: GbtParams,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            n_trials: 50,
            train_fraction: 0.9,
            aggregate_policy: AggregatePolicy::WorstRank,
            k: KChoice::Fixed(34),
            ks: (1..=60).collect(),
            gbt: GbtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_trials: usize,
    pub train_fraction: f64,
    pub grid: Vec<f64>,
    pub max_redraws: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_trials: 50,
            train_fraction: 0.9,
            grid: default_grid(),
            max_redraws: 10,
        }
    }
}

fn default_models() -> Vec<Hyperparameters> {
    [
        ModelSpec::gbt(0),
        ModelSpec::random_forest(0),
        ModelSpec::logistic(0),
        ModelSpec::mlp(0),
    ]
    .into_iter()
    .map(|s| s.params)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default = "Montage::standard")]
    pub montage: Montage,
    #[serde(default)]
    pub epoching: EpochParams,
    #[serde(default = "BandScheme::standard")]
    pub bands: BandScheme,
    #[serde(default)]
    pub quotas: Quotas,
    #[serde(default)]
    pub section_policy: SectionPolicy,
    #[serde(default = "default_eval_epochs")]
    pub eval_epochs: usize,
    #[serde(default = "default_kind")]
    pub feature_kind: FeatureKind,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default = "default_models")]
    pub models: Vec<Hyperparameters>,
    #[serde(default)]
    pub eval: EvalSection,
    /// Generator settings for the `synth` step. Its seed is replaced by the
    /// master seed.
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

fn default_eval_epochs() -> usize {
    90
}

fn default_kind() -> FeatureKind {
    FeatureKind::Connectivity
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return invalid(format!("sample_rate {} must be positive", self.sample_rate));
        }
        self.epoching
            .sample_counts(self.sample_rate)
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        self.quotas.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if self.eval_epochs == 0 {
            return invalid("eval_epochs must be >= 1".into());
        }
        if self.selection.n_trials == 0 {
            return invalid("selection.n_trials must be >= 1".into());
        }
        if self.selection.ks.is_empty() || self.selection.ks.contains(&0) {
            return invalid("selection.ks must be nonempty positive counts".into());
        }
        if self.models.is_empty() {
            return invalid("models must list at least one model".into());
        }
        for (i, m) in self.model_specs().iter().enumerate() {
            m.validate()
                .map_err(|e| Error::ConfigInvalid(format!("models[{i}]: {e}")))?;
        }
        self.selection_gbt()
            .validate()
            .map_err(|e| Error::ConfigInvalid(format!("selection.gbt: {e}")))?;
        self.cv_config().validate()?;
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| Error::ConfigInvalid(format!("synth: {e}")))?;
        }
        Ok(())
    }

    pub fn extract_params(&self) -> ExtractParams {
        ExtractParams {
            epoching: self.epoching,
            scheme: self.bands.clone(),
            section_epochs: self.quotas.section_epochs,
            eval_epochs: self.eval_epochs,
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            n_trials: self.selection.n_trials,
            train_fraction: self.selection.train_fraction,
            quotas: self.quotas,
            section_policy: self.section_policy,
            aggregate_policy: self.selection.aggregate_policy,
        }
    }

    pub fn selection_gbt(&self) -> ModelSpec {
        ModelSpec::new(Hyperparameters::Gbt(self.selection.gbt.clone()), self.seed)
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            n_trials: self.eval.n_trials,
            train_fraction: self.eval.train_fraction,
            grid: self.eval.grid.clone(),
            eval_epochs: self.eval_epochs,
            quotas: self.quotas,
            section_policy: self.section_policy,
            max_redraws: self.eval.max_redraws,
        }
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|p| ModelSpec::new(p.clone(), self.seed))
            .collect()
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let mut s = self.synth.clone().unwrap_or_default();
        s.seed = self.seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(PipelineConfig::from_json("{}"), Err(Error::ConfigInvalid(_))));
        let c = PipelineConfig::from_json(r#"{"seed": 5}"#).unwrap();
        assert_eq!(c, PipelineConfig::new(5));
        assert_eq!(c.montage.len(), 19);
        assert_eq!(c.model_specs().len(), 4);
    }

    #[test]
    fn k_choice_forms() {
        let c = PipelineConfig::from_json(r#"{"seed": 1, "selection": {"k": "sweep"}}"#).unwrap();
        assert_eq!(c.selection.k, KChoice::Sweep);
        let c = PipelineConfig::from_json(r#"{"seed": 1, "selection": {"k": 12}}"#).unwrap();
        assert_eq!(c.selection.k, KChoice::Fixed(12));
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "selection": {"k": 0}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "selection": {"k": "all"}}"#).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "sead": 2}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "eval": {"grid": [0.5, 0.4]}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "models": []}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"seed": 1, "epoching": {"epoch_seconds": 0.0011}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig::from_json(
            r#"{"seed": 9, "models": [{"kind": "gbt", "trees": 5}], "synth": {"n_female": 3, "n_male": 2}}"#,
        )
        .unwrap();
        let back = PipelineConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.synth_spec().seed, 9);
    }
}
