//! Probabilistic binary classifiers and the strict threshold rule.
//!
//! Every model outputs P(female) for a feature row. Four kinds are provided:
//! histogram gradient-boosted trees, a Gini random forest, L2 logistic
//! regression and a one-hidden-layer tanh network.

mod binning;
mod forest;
mod gbt;
mod linear;
mod mlp;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub use forest::ForestParams;
pub use gbt::GbtParams;
pub use linear::{LogisticParams, Standardizer};
pub use mlp::MlpParams;
pub use tree::{Node, Tree};

/// Lowest and highest probability a model will emit.
pub const PROB_FLOOR: f64 = 1e-12;

/// Version of the serialized model layout.
pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbt,
    RandomForest,
    Logistic,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-kind hyperparameters. Serialized with a `kind` tag, so
/// `{"kind": "gbt"}` alone yields the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Gbt(GbtParams),
    RandomForest(ForestParams),
    Logistic(LogisticParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub params: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: Hyperparameters, seed: u64) -> Self {
        ModelSpec { params, seed }
    }

    pub fn gbt(seed: u64) -> Self {
        Self::new(Hyperparameters::Gbt(GbtParams::default()), seed)
    }

    pub fn random_forest(seed: u64) -> Self {
        Self::new(Hyperparameters::RandomForest(ForestParams::default()), seed)
    }

    pub fn logistic(seed: u64) -> Self {
        Self::new(Hyperparameters::Logistic(LogisticParams::default()), seed)
    }

    pub fn mlp(seed: u64) -> Self {
        Self::new(Hyperparameters::Mlp(MlpParams::default()), seed)
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Gbt => Self::gbt(seed),
            ModelKind::RandomForest => Self::random_forest(seed),
            ModelKind::Logistic => Self::logistic(seed),
            ModelKind::Mlp => Self::mlp(seed),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            Hyperparameters::Gbt(_) => ModelKind::Gbt,
            Hyperparameters::RandomForest(_) => ModelKind::RandomForest,
            Hyperparameters::Logistic(_) => ModelKind::Logistic,
            Hyperparameters::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ModelSpec {
            params: self.params.clone(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            Hyperparameters::Gbt(p) => p.validate(),
            Hyperparameters::RandomForest(p) => p.validate(),
            Hyperparameters::Logistic(p) => p.validate(),
            Hyperparameters::Mlp(p) => p.validate(),
        }
    }
}

/// Learned parameters, one variant per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted {
    Gbt { base_score: f64, trees: Vec<Tree> },
    RandomForest { trees: Vec<Tree> },
    Logistic { scaler: Standardizer, weights: Vec<f64>, bias: f64 },
    Mlp { scaler: Standardizer, hidden: usize, params: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub schema: Vec<String>,
    pub fitted: Fitted,
    /// Total split gain (gbt) or weighted Gini decrease (random forest) per
    /// schema column. Absent for the linear and neural models.
    pub feature_importance: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: u32,
    model: Model,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Checks shared by every trainer: nonempty, finite, both classes present.
fn check_training_table(table: &FeatureTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    for (i, r) in table.rows.iter().enumerate() {
        if let Some(j) = r.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: i, column: j });
        }
    }
    let females = table.rows.iter().filter(|r| r.label == 1).count();
    if females == 0 || females == table.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

pub fn train(spec: &ModelSpec, table: &FeatureTable) -> Result<Model> {
    spec.validate()?;
    check_training_table(table)?;
    let (fitted, importance) = match &spec.params {
        Hyperparameters::Gbt(p) => {
            let (base_score, trees, imp) = gbt::fit(p, table);
            (Fitted::Gbt { base_score, trees }, Some(imp))
        }
        Hyperparameters::RandomForest(p) => {
            let (trees, imp) = forest::fit(p, table, spec.seed);
            (Fitted::RandomForest { trees }, Some(imp))
        }
        Hyperparameters::Logistic(p) => {
            let (scaler, weights, bias, _) = linear::fit(p, table);
            (Fitted::Logistic { scaler, weights, bias }, None)
        }
        Hyperparameters::Mlp(p) => {
            let (scaler, params) = mlp::fit(p, table, spec.seed);
            (Fitted::Mlp { scaler, hidden: p.hidden, params }, None)
        }
    };
    Ok(Model {
        spec: spec.clone(),
        schema: table.schema.clone(),
        fitted,
        feature_importance: importance,
    })
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// P(female) for one row laid out in schema order.
    pub fn score(&self, x: &[f64]) -> f64 {
        let p = match &self.fitted {
            Fitted::Gbt { base_score, trees } => {
                let z = trees.iter().fold(*base_score, |acc, t| acc + t.predict(x));
                sigmoid(z)
            }
            Fitted::RandomForest { trees } => {
                trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
            }
            Fitted::Logistic { scaler, weights, bias } => {
                let z = scaler
                    .apply(x)
                    .iter()
                    .zip(weights)
                    .fold(*bias, |acc, (v, w)| acc + v * w);
                sigmoid(z)
            }
            Fitted::Mlp { scaler, hidden, params } => {
                sigmoid(mlp::forward(params, *hidden, &scaler.apply(x)).0)
            }
        };
        clamp_prob(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT,
            model: self.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::MalformedArtifact {
                path: path.to_path_buf(),
                msg: format!("model format {} (expected {MODEL_FORMAT})", file.format),
            });
        }
        Ok(file.model)
    }
}

pub fn predict_proba(model: &Model, rows: &FeatureTable) -> Result<Vec<f64>> {
    if rows.schema != model.schema {
        return Err(Error::SchemaMismatch(format!(
            "model expects {} columns, table has {} (or names differ)",
            model.schema.len(),
            rows.schema.len()
        )));
    }
    Ok(rows.rows.iter().map(|r| model.score(&r.values)).collect())
}

/// A decision threshold on P(female), strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta < 1.0 {
            Ok(Threshold(theta))
        } else {
            Err(Error::InvalidHyperparameter(format!(
                "threshold {theta} is outside (0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Threshold::new(v)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// 1 iff `y > theta`. Equality maps to 0.
pub fn classify(y: f64, theta: f64) -> u8 {
    u8::from(y > theta)
}

pub fn apply_threshold(probs: &[f64], theta: Threshold) -> Vec<u8> {
    probs.iter().map(|&y| classify(y, theta.0)).collect()
}

/// Summed cross-entropy of an mlp over `rows` and its gradient with respect
/// to the flattened parameters `[W1 (hidden x d, row-major), b1, w2, b2]`.
pub fn mlp_loss_gradient(model: &Model, rows: &FeatureTable) -> Result<(f64, Vec<f64>)> {
    let Fitted::Mlp { scaler, hidden, params } = &model.fitted else {
        return Err(Error::WrongKind {
            expected: ModelKind::Mlp.as_str(),
            found: model.kind().as_str(),
        });
    };
    if rows.schema != model.schema {
        return Err(Error::SchemaMismatch("rows do not match the model schema".into()));
    }
    let xs: Vec<Vec<f64>> = rows.rows.iter().map(|r| scaler.apply(&r.values)).collect();
    let ys: Vec<f64> = rows.rows.iter().map(|r| f64::from(r.label)).collect();
    Ok(mlp::loss_gradient(params, *hidden, &xs, &ys))
}

impl Model {
    /// Replace the flattened mlp parameters, keeping everything else.
    pub fn with_mlp_params(&self, new: Vec<f64>) -> Result<Model> {
        let Fitted::Mlp { scaler, hidden, params } = &self.fitted else {
            return Err(Error::WrongKind {
                expected: ModelKind::Mlp.as_str(),
                found: self.kind().as_str(),
            });
        };
        if new.len() != params.len() {
            return Err(Error::LengthMismatch(params.len(), new.len()));
        }
        let mut m = self.clone();
        m.fitted = Fitted::Mlp {
            scaler: scaler.clone(),
            hidden: *hidden,
            params: new,
        };
        Ok(m)
    }

    pub fn mlp_params(&self) -> Option<&[f64]> {
        match &self.fitted {
            Fitted::Mlp { params, .. } => Some(params),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
