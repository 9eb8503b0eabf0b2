use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attrib::{ExplainerKind, ExplainerSpec, ShapleyMasking};
use crate::error::{Error, Result};
use crate::metrics::RisParams;
use crate::net::{DropoutScaling, TrainConfig, UqKind};
use crate::pipeline::dataset::CsvOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub scaling: DropoutScaling,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50],
            scaling: DropoutScaling::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqConfig {
    pub kind: UqKind,
    /// Dropout probability for MCD, dropconnect probability for MCDC.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerConfig {
    pub method: ExplainerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<f64>>,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_lrp_epsilon")]
    pub lrp_epsilon: f64,
    #[serde(default = "default_shapley_samples")]
    pub shapley_samples: usize,
    #[serde(default)]
    pub shapley_masking: ShapleyMasking,
}

fn default_ig_steps() -> usize {
    ExplainerSpec::new(ExplainerKind::IntegratedGradients).ig_steps
}

fn default_lrp_epsilon() -> f64 {
    ExplainerSpec::new(ExplainerKind::LrpEpsilon).lrp_epsilon
}

fn default_shapley_samples() -> usize {
    ExplainerSpec::new(ExplainerKind::SampledShapley).shapley_samples
}

impl ExplainerConfig {
    pub fn new(method: ExplainerKind) -> Self {
        let s = ExplainerSpec::new(method);
        Self {
            method,
            baseline: None,
            ig_steps: s.ig_steps,
            lrp_epsilon: s.lrp_epsilon,
            shapley_samples: s.shapley_samples,
            shapley_masking: s.shapley_masking,
        }
    }

    pub fn spec(&self, seed: u64) -> ExplainerSpec {
        ExplainerSpec {
            method: self.method,
            baseline: self.baseline.clone(),
            ig_steps: self.ig_steps,
            lrp_epsilon: self.lrp_epsilon,
            shapley_samples: self.shapley_samples,
            shapley_masking: self.shapley_masking,
            seed,
        }
    }
}

/// How UCS treats a stochastic explainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticUcs {
    /// Linearise with the permutation stream frozen and no mask resampling.
    #[default]
    FrozenSeed,
    /// Record the score as undefined.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// RIS perturbations per sample.
    pub perturbations: usize,
    /// RIS filter on `|s² - s²'|`, in raw target units.
    pub tau: f64,
    pub norm_order: f64,
    pub eps_min: f64,
    /// Gaussian RIS noise, as a fraction of each feature's training std.
    pub noise_scale: f64,
    /// RRI shift `μ + k σ`.
    pub rri_k: f64,
    /// Neighbours for conditional resampling in feature flipping.
    pub neighbours: usize,
    /// Hidden layer for the MCD Jacobian; the last hidden layer when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian_layer: Option<usize>,
    pub stochastic_ucs: StochasticUcs,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            perturbations: RisParams::default().perturbations,
            tau: RisParams::default().tau,
            norm_order: RisParams::default().norm_order,
            eps_min: RisParams::default().eps_min,
            noise_scale: 0.05,
            rri_k: 4.0,
            neighbours: 10,
            jacobian_layer: None,
            stochastic_ucs: StochasticUcs::default(),
        }
    }
}

impl MetricConfig {
    pub fn ris_params(&self) -> RisParams {
        RisParams {
            perturbations: self.perturbations,
            tau: self.tau,
            norm_order: self.norm_order,
            eps_min: self.eps_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SanityConfig {
    /// Also report every check over all folds pooled.
    pub pooled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Run only these fold indices; all folds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_subset: Option<Vec<usize>>,
    #[serde(default = "default_samples")]
    pub samples_per_fold: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Keep only methods whose label (`mcd+ig`) or explainer label (`ig`)
    /// is listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_subset: Option<Vec<String>>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub dataset: CsvOptions,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default = "default_uq")]
    pub uq: Vec<UqConfig>,
    #[serde(default = "default_explainers")]
    pub explainers: Vec<ExplainerConfig>,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub sanity: SanityConfig,
}

fn default_folds() -> usize {
    5
}

fn default_samples() -> usize {
    100
}

fn default_ensemble() -> usize {
    50
}

fn default_repetitions() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_uq() -> Vec<UqConfig> {
    vec![
        UqConfig {
            kind: UqKind::Mcd,
            p: 0.1,
        },
        UqConfig {
            kind: UqKind::Mcdc,
            p: 0.3,
        },
    ]
}

fn default_explainers() -> Vec<ExplainerConfig> {
    ExplainerKind::ALL.into_iter().map(ExplainerConfig::new).collect()
}

/// One (UQ kind, explainer) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub uq: UqConfig,
    pub explainer: ExplainerConfig,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        method_label(self.uq.kind, self.explainer.method)
    }
}

pub fn method_label(uq: UqKind, explainer: ExplainerKind) -> String {
    format!("{}+{}", uq.label(), explainer.label())
}

impl EvaluationConfig {
    /// Defaults for everything except the dataset.
    pub fn with_dataset(dataset: CsvOptions) -> Self {
        Self {
            seed: 0,
            folds: default_folds(),
            fold_subset: None,
            samples_per_fold: default_samples(),
            ensemble_size: default_ensemble(),
            repetitions: default_repetitions(),
            method_subset: None,
            output_dir: default_output(),
            dataset,
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            uq: default_uq(),
            explainers: default_explainers(),
            metrics: MetricConfig::default(),
            sanity: SanityConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a TOML config. A relative dataset path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if let Some(subset) = &self.fold_subset {
            if subset.is_empty() {
                return bad("fold subset is empty".into());
            }
            if let Some(f) = subset.iter().find(|&&f| f >= self.folds) {
                return bad(format!("fold {f} does not exist with {} folds", self.folds));
            }
        }
        if self.samples_per_fold < 1 {
            return bad("samples per fold must be at least 1".into());
        }
        if self.ensemble_size < 2 {
            return bad(format!("ensemble size must be at least 2, got {}", self.ensemble_size));
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return bad("network needs at least one non-empty hidden layer".into());
        }
        if self.uq.is_empty() {
            return bad("no UQ method configured".into());
        }
        for u in &self.uq {
            if !(0.0..1.0).contains(&u.p) {
                return bad(format!(
                    "{} probability {} outside [0, 1)",
                    u.kind.label(),
                    u.p
                ));
            }
        }
        if self.explainers.is_empty() {
            return bad("no explainer configured".into());
        }
        for e in &self.explainers {
            e.spec(0).validate().or_else(|err| bad(err.to_string()))?;
        }
        self.training.validate().or_else(|err| bad(err.to_string()))?;
        let m = &self.metrics;
        if m.perturbations < 1 {
            return bad("RIS needs at least one perturbation".into());
        }
        if !(m.tau > 0.0) {
            return bad("tau must be positive".into());
        }
        if !(m.norm_order >= 1.0) {
            return bad("norm order must be at least 1".into());
        }
        if !(m.eps_min > 0.0) {
            return bad("eps_min must be positive".into());
        }
        if !(m.noise_scale > 0.0 && m.noise_scale.is_finite()) {
            return bad("noise scale must be positive".into());
        }
        if !m.rri_k.is_finite() {
            return bad("rri_k must be finite".into());
        }
        if m.neighbours < 1 {
            return bad("neighbour count must be at least 1".into());
        }
        if let Some(l) = m.jacobian_layer {
            if l >= self.network.hidden.len() {
                return bad(format!("jacobian layer {l} is not a hidden layer"));
            }
        }
        if self.methods().is_empty() {
            return bad("method subset selects no method".into());
        }
        Ok(())
    }

    /// Every (UQ, explainer) combination after the method subset.
    pub fn methods(&self) -> Vec<MethodSpec> {
        let mut out = Vec::new();
        for uq in &self.uq {
            for e in &self.explainers {
                let m = MethodSpec {
                    uq: *uq,
                    explainer: e.clone(),
                };
                let keep = match &self.method_subset {
                    None => true,
                    Some(list) => list
                        .iter()
                        .any(|s| *s == m.label() || s == e.method.label()),
                };
                if keep {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn active_folds(&self) -> Vec<usize> {
        match &self.fold_subset {
            Some(s) => {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                s
            }
            None => (0..self.folds).collect(),
        }
    }

    pub fn jacobian_layer(&self) -> usize {
        self.metrics
            .jacobian_layer
            .unwrap_or(self.network.hidden.len() - 1)
    }
}
