//! Experiment configuration: a TOML document whose keys mirror the fields
//! below. Every key is optional; missing keys take the canal defaults.

use std::fs;
use std::path::{Path, PathBuf};

use lapf_core::corpus::{GridSpec, SplitFractions};
use lapf_core::experiment::ExperimentSettings;
use lapf_core::{CognitiveModel, EmbedderConfig, GaussianSpec, Interval, PlantModel, QuantizationScheme, StateVector, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// System matrix, one inner list per row.
    pub a: Vec<Vec<f64>>,
    /// Process noise mean.
    pub u: Vec<f64>,
    /// Process noise variances.
    pub q: Vec<f64>,
    pub clamp: [f64; 2],
    pub x0_true: Vec<f64>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let canal = PlantModel::canal();
        let n = canal.dim();
        Self {
            a: canal.a.chunks(n).map(<[f64]>::to_vec).collect(),
            u: canal.noise.mean.clone(),
            q: canal.noise.cov_diag.clone(),
            clamp: [canal.clamp.lo, canal.clamp.hi],
            x0_true: canal.x0_true.0.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mean: vec![0.0; 5], cov_diag: vec![1.0; 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub lo: f64,
    pub hi: f64,
    pub levels: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { lo: 0.0, hi: 5.0, levels: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CognitiveConfig {
    pub c: Vec<f64>,
    pub noise_var: f64,
}

impl Default for CognitiveConfig {
    fn default() -> Self {
        Self { c: vec![1.0, 0.0, 0.0, 0.0, 0.0], noise_var: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodConfig {
    pub threshold: f64,
    pub bank: PathBuf,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self { threshold: 0.2, bank: PathBuf::from("data/ood_bank.txt") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub seed: u64,
    pub texts_per_level: usize,
    pub grid: GridSpec,
    pub fractions: SplitFractions,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/corpus.csv"),
            seed: 7,
            texts_per_level: 150,
            grid: GridSpec::default(),
            fractions: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub embedder: EmbedderConfig,
    pub classifier: PathBuf,
    pub regressor: PathBuf,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderConfig::default(),
            classifier: PathBuf::from("models/classifier.json"),
            regressor: PathBuf::from("models/regressor.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: usize,
    pub particles: usize,
    pub trials: usize,
    pub sensors: usize,
    pub output_dir: PathBuf,
    pub plant: PlantConfig,
    pub prior: PriorConfig,
    pub scheme: SchemeConfig,
    pub cognitive: CognitiveConfig,
    pub ood: OodConfig,
    pub corpus: CorpusConfig,
    pub models: ModelsConfig,
    pub training: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 100,
            particles: 1000,
            trials: 1000,
            sensors: 1,
            output_dir: PathBuf::from("results"),
            plant: PlantConfig::default(),
            prior: PriorConfig::default(),
            scheme: SchemeConfig::default(),
            cognitive: CognitiveConfig::default(),
            ood: OodConfig::default(),
            corpus: CorpusConfig::default(),
            models: ModelsConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML file, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn clamp(&self) -> lapf_core::Result<Interval> {
        Interval::new(self.plant.clamp[0], self.plant.clamp[1])
    }

    pub fn scheme(&self) -> lapf_core::Result<QuantizationScheme> {
        QuantizationScheme::uniform(self.scheme.lo, self.scheme.hi, self.scheme.levels)
    }

    pub fn cognitive(&self) -> lapf_core::Result<CognitiveModel> {
        CognitiveModel::new(self.cognitive.c.clone(), self.cognitive.noise_var, self.clamp()?)
    }

    pub fn plant(&self) -> lapf_core::Result<PlantModel> {
        let n = self.plant.a.len();
        if self.plant.a.iter().any(|row| row.len() != n) {
            return Err(lapf_core::Error::Config(format!("plant.a must be square, got {n} rows of unequal length")));
        }
        PlantModel::new(
            self.plant.a.concat(),
            GaussianSpec::new(self.plant.u.clone(), self.plant.q.clone())?,
            self.clamp()?,
            StateVector(self.plant.x0_true.clone()),
        )
    }

    pub fn settings(&self) -> lapf_core::Result<ExperimentSettings> {
        let settings = ExperimentSettings {
            plant: self.plant()?,
            prior: GaussianSpec::new(self.prior.mean.clone(), self.prior.cov_diag.clone())?,
            scheme: self.scheme()?,
            cognitive: self.cognitive()?,
            steps: self.steps,
            particles: self.particles,
            trials: self.trials,
            sensors: self.sensors,
            seed: self.seed,
        };
        settings.validate()?;
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_canal_setup() {
        let cfg = ExperimentConfig::default();
        let settings = cfg.settings().unwrap();
        assert_eq!(settings.plant, PlantModel::canal());
        assert_eq!(settings, ExperimentSettings { seed: 0, ..ExperimentSettings::canal() });
    }

    #[test]
    fn toml_round_trip_and_partial_documents() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = toml::from_str("trials = 3\n[corpus]\ntexts_per_level = 5\n").unwrap();
        assert_eq!((partial.trials, partial.corpus.texts_per_level, partial.steps), (3, 5, 100));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("trails = 3\n").is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.plant.a[2].pop();
        assert!(cfg.plant().is_err());
    }
}
