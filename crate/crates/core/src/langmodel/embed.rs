//! Text encoders: a deterministic hashed character n-gram embedder and a
//! client for a remote embedding service.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense text representation, L2-normalized (or all zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self(values))
    }
}

fn default_orders() -> Vec<usize> {
    vec![2, 3]
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        dim: usize,
        #[serde(default = "default_orders")]
        orders: Vec<usize>,
    },
    Remote {
        /// Base URL; requests go to `{url}/embed`.
        url: String,
        dim: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing { dim: 256, orders: default_orders() }
    }
}

impl EmbedderConfig {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderConfig::Hashing { dim, .. } | EmbedderConfig::Remote { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EmbedderConfig::Hashing { .. } => "hashing",
            EmbedderConfig::Remote { .. } => "remote",
        }
    }

    pub fn build(&self) -> Result<Embedder> {
        if self.dim() == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(match self {
            EmbedderConfig::Hashing { dim, orders } => {
                if orders.is_empty() || orders.contains(&0) {
                    return Err(Error::Config(format!("bad n-gram orders {orders:?}")));
                }
                Embedder::Hashing(HashingEmbedder { dim: *dim, orders: orders.clone() })
            }
            EmbedderConfig::Remote { url, dim, timeout_ms, batch_size } => Embedder::Remote(RemoteEmbedder::new(
                url.clone(),
                *dim,
                Duration::from_millis(*timeout_ms),
                (*batch_size).max(1),
            )),
        })
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercase character n-grams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    orders: Vec<usize>,
}

impl HashingEmbedder {
    pub fn new(dim: usize, orders: Vec<usize>) -> Self {
        Self { dim, orders }
    }

    /// Bucket and sign for one n-gram.
    pub fn feature(&self, ngram: &str) -> (usize, f64) {
        let h = fnv1a64(ngram.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    pub fn embed(&self, text: &str) -> Embedding {
        let lower = text.to_lowercase();
        let bounds: Vec<usize> = lower.char_indices().map(|(i, _)| i).chain(std::iter::once(lower.len())).collect();
        let chars = bounds.len() - 1;
        let mut values = vec![0.0; self.dim];
        for &n in &self.orders {
            for start in 0..chars.saturating_sub(n - 1) {
                let gram = &lower[bounds[start]..bounds[start + n]];
                let (bucket, sign) = self.feature(gram);
                values[bucket] += sign;
            }
        }
        Embedding::normalized(values).expect("hashed counts are finite")
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
}

/// Client for `POST {url}/embed`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(url: String, dim: usize, timeout: Duration, batch_size: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let endpoint = format!("{}/embed", url.trim_end_matches('/'));
        Self { endpoint, dim, batch_size, agent }
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::EmbeddingService(format!("{}: {e}", self.endpoint)))?;
        let status = response.status().as_u16();
        match status {
            200 => {}
            503 => return Err(Error::EmbeddingService("service unavailable (model loading)".into())),
            400 => return Err(Error::Protocol("service rejected the request as malformed".into())),
            s if s >= 500 => return Err(Error::EmbeddingService(format!("server error {s}"))),
            s => return Err(Error::Protocol(format!("unexpected status {s}"))),
        }
        let body: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Protocol(format!("bad response body: {e}")))?;
        if body.dim != self.dim {
            return Err(Error::Protocol(format!("service dimension {} != configured {}", body.dim, self.dim)));
        }
        if body.embeddings.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, received {} embeddings",
                texts.len(),
                body.embeddings.len()
            )));
        }
        body.embeddings
            .into_iter()
            .map(|row| {
                if row.len() != self.dim {
                    return Err(Error::Protocol(format!("row of length {} in a {}-dim response", row.len(), self.dim)));
                }
                Embedding::normalized(row)
            })
            .collect()
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub enum Embedder {
    Hashing(HashingEmbedder),
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hashing(h) => h.dim,
            Embedder::Remote(r) => r.dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding> {
        match self {
            Embedder::Hashing(h) => Ok(h.embed(text)),
            Embedder::Remote(r) => Ok(r.embed_batch(&[text])?.remove(0)),
        }
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        match self {
            Embedder::Hashing(h) => Ok(texts.iter().map(|t| h.embed(t)).collect()),
            Embedder::Remote(r) => r.embed_batch(texts),
        }
    }
}

/// One-shot embedding of a single text.
pub fn embed(config: &EmbedderConfig, text: &str) -> Result<Embedding> {
    config.build()?.embed(text)
}
