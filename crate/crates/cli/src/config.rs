//! Experiment configuration: one JSON document, unknown keys rejected.
//!
//! Missing top-level sections take their defaults. `train`, `split`,
//! `tuner`, `calibration`, `explain` and `ablation` may be given partially;
//! `layout`, `effects`, `sampler` and `model` replace the defaults whole.

use std::path::Path;

use serde::{Deserialize, Serialize};

use edgefbg::evaluation::SplitSpec;
use edgefbg::explain::DEFAULT_SPACING;
use edgefbg::nn::{scaled_architecture, ModelConfig, TrainConfig};
use edgefbg::optics::{default_layout, EffectsConfig, SensorLayout, ShapeSamplerConfig};
use edgefbg::tuner::{SearchBudget, SearchSpace};

use crate::files::sha256_hex;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub layout: SensorLayout,
    pub effects: EffectsConfig,
    pub sampler: ShapeSamplerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seed of the network's initial weights.
    pub init_seed: u64,
    pub split: SplitSpec,
    pub tuner: TunerSettings,
    pub calibration: CalibrationSettings,
    pub explain: ExplainSettings,
    pub ablation: AblationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            layout: default_layout(),
            effects: EffectsConfig::default(),
            sampler: ShapeSamplerConfig::default(),
            model: scaled_architecture(),
            train: TrainConfig::default(),
            init_seed: 0,
            split: SplitSpec::default(),
            tuner: TunerSettings::default(),
            calibration: CalibrationSettings::default(),
            explain: ExplainSettings::default(),
            ablation: AblationSettings::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSettings {
    pub space: SearchSpace,
    pub budget: SearchBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Records used to fit the calibration; 0 uses all.
    pub records: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { records: 3000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub spacing: f64,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self { spacing: DEFAULT_SPACING }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub shapes: usize,
    pub seed: u64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self { shapes: 200, seed: 0 }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = |e: edgefbg::Error| CliError::Config(e.to_string());
        self.layout.validate().map_err(c)?;
        self.effects.validate().map_err(c)?;
        self.sampler.validate().map_err(c)?;
        self.model.validate().map_err(c)?;
        self.train.validate().map_err(c)?;
        self.split.validate().map_err(c)?;
        self.tuner.space.validate().map_err(c)?;
        if !(self.explain.spacing.is_finite() && self.explain.spacing != 0.0) {
            return Err(CliError::Config("explain.spacing must be finite and nonzero".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
