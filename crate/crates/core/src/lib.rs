//! Particle filtering with natural-language observations.
//!
//! Human reports ("the canal is almost dry") are mapped to a distribution
//! over quantized level labels by a text classifier; the filter weighs each
//! particle by how well its predicted label distribution agrees with the
//! text's. A regression-based pseudo-observation filter is included as the
//! comparison method.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod gaussian;
pub mod humansensor;
pub mod langmodel;
pub mod random;
pub mod statespace;
mod textgen;

pub use error::{Error, Result};
pub use filter::{ParticleSet, PriorSpec};
pub use gaussian::GaussianSpec;
pub use humansensor::{CognitiveModel, QuantizationScheme};
pub use langmodel::{EmbedderConfig, LabelDistribution, MlpParams, TextModel, TrainConfig};
pub use random::{stream, RandomStream};
pub use statespace::{Interval, PlantModel, StateVector};
