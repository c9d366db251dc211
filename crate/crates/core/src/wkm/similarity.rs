//! Text similarity backends used for appearance matching and QA scoring.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use crate::external::{EmbeddingClient, TransportError};
use crate::scene::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("embedding transport: {0}")]
    Transport(#[from] TransportError),
    #[error("embedding provider returned {got} vectors for {want} texts")]
    Shape { want: usize, got: usize },
}

pub trait SimilarityProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Score in [-1, 1]; 1 for identical texts.
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError>;
}

/// Offline fallback: cosine between lowercased, punctuation-stripped token
/// count vectors.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenCosine;

fn counts(text: &str) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for t in tokenize(text) {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

pub fn token_cosine(a: &str, b: &str) -> f64 {
    let (ca, cb) = (counts(a), counts(b));
    if ca.is_empty() || cb.is_empty() {
        return if ca == cb { 1.0 } else { 0.0 };
    }
    let dot: f64 = ca.iter().filter_map(|(t, x)| cb.get(t).map(|y| x * y)).sum();
    let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

impl SimilarityProvider for TokenCosine {
    fn name(&self) -> &str {
        "token-cosine"
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        Ok(token_cosine(a, b))
    }
}

/// Cosine similarity over vectors from an external embedding service. Vectors
/// are cached per text.
pub struct EmbeddingSimilarity {
    client: EmbeddingClient,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingSimilarity {
    pub fn new(client: EmbeddingClient) -> Self {
        Self { client, cache: Mutex::new(HashMap::new()) }
    }

    fn vectors(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().unwrap();
            texts.iter().filter(|t| !cache.contains_key(**t)).map(|t| t.to_string()).collect()
        };
        if !missing.is_empty() {
            let got = self.client.embed(&missing)?;
            if got.len() != missing.len() {
                return Err(ProviderError::Shape { want: missing.len(), got: got.len() });
            }
            let mut cache = self.cache.lock().unwrap();
            for (t, v) in missing.into_iter().zip(got) {
                cache.insert(t, v);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

impl SimilarityProvider for EmbeddingSimilarity {
    fn name(&self) -> &str {
        "embedding"
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        if a == b {
            return Ok(1.0);
        }
        let v = self.vectors(&[a, b])?;
        Ok(cosine(&v[0], &v[1]))
    }
}
