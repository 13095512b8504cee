//! Text to probability: embedders, the label classifier, and the level regressor.

pub mod embed;
pub mod mlp;
pub mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embed::{embed, Embedder, EmbedderConfig, Embedding, HashingEmbedder, RemoteEmbedder};
pub use mlp::{backward, classify, regress, DenseLayer, Gradient, Head, LabelDistribution, MlpParams, Target};
pub use train::{train_classifier, train_regressor, Adam, EpochMetrics, TrainConfig, TrainMetrics};

use crate::error::{Error, Result};

const MODEL_FORMAT: &str = "lapf-mlp/1";

/// A network together with the embedder it was trained on.
#[derive(Debug)]
pub struct TextModel {
    pub embedder_config: EmbedderConfig,
    pub mlp: MlpParams,
    pub seed: u64,
    /// Validation MSE, recorded for regressors.
    pub val_mse: Option<f64>,
    embedder: Embedder,
}

impl TextModel {
    pub fn new(embedder_config: EmbedderConfig, mlp: MlpParams, seed: u64) -> Result<Self> {
        mlp.validate()?;
        if mlp.input_dim() != embedder_config.dim() {
            return Err(Error::Config(format!(
                "network input {} does not match embedding dimension {}",
                mlp.input_dim(),
                embedder_config.dim()
            )));
        }
        let embedder = embedder_config.build()?;
        Ok(Self { embedder_config, mlp, seed, val_mse: None, embedder })
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn classify_text(&self, text: &str) -> Result<LabelDistribution> {
        classify(&self.mlp, &self.embedder.embed(text)?)
    }

    pub fn regress_text(&self, text: &str) -> Result<f64> {
        regress(&self.mlp, &self.embedder.embed(text)?)
    }

    pub fn classify_batch(&self, texts: &[&str]) -> Result<Vec<LabelDistribution>> {
        self.embedder.embed_batch(texts)?.iter().map(|e| classify(&self.mlp, e)).collect()
    }

    pub fn regress_batch(&self, texts: &[&str]) -> Result<Vec<f64>> {
        self.embedder.embed_batch(texts)?.iter().map(|e| regress(&self.mlp, e)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            layer_sizes: self.mlp.layer_sizes(),
            head: self.mlp.head,
            embedder: self.embedder_config.clone(),
            seed: self.seed,
            val_mse: self.val_mse,
            layers: self.mlp.layers.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|e| Error::Model(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&raw).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unsupported model format `{}`", file.format)));
        }
        let mlp = MlpParams { layers: file.layers, head: file.head };
        mlp.validate()?;
        if mlp.layer_sizes() != file.layer_sizes {
            return Err(Error::Model("header layer sizes disagree with the stored layers".into()));
        }
        let mut model = TextModel::new(file.embedder, mlp, file.seed)?;
        model.val_mse = file.val_mse;
        Ok(model)
    }
}

/// On-disk layout: a header (format, sizes, head, embedder, seed) followed by parameters.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    layer_sizes: Vec<usize>,
    head: Head,
    embedder: EmbedderConfig,
    seed: u64,
    #[serde(default)]
    val_mse: Option<f64>,
    layers: Vec<DenseLayer>,
}
