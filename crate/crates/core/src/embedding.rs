//! Node-label embeddings: a deterministic hashed bag-of-tokens provider, a
//! client for remote embedding services, and a content-addressed disk cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_DIMENSION: usize = 256;
const REMOTE_BATCH: usize = 128;
const REMOTE_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        EmbeddingVector { values }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector {
            values: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn scaled(&self, k: T) -> Self {
        EmbeddingVector::new(self.values.iter().map(|&v| v * k).collect())
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector::new(self.values.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

/// Cosine similarity of two non-zero vectors of equal dimension.
pub fn cosine<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na.is_zero() || nb.is_zero() {
        return Err(Error::ZeroVector);
    }
    let c = dot(&a.values, &b.values) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Splits a label on non-alphanumeric characters and camel-case boundaries
/// and lowercases the pieces: `"HTTPServer_config"` gives
/// `["http", "server", "config"]`.
pub fn tokenize(label: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in label.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = cur.is_uppercase()
                && (prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_lower));
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    tokens
}

/// Bag-of-tokens vector: each token adds one to bucket `fnv1a64(token) % dim`,
/// then the vector is L2-normalized. Labels without tokens map to zero.
pub fn hashed_embedding(label: &str, dim: usize) -> EmbeddingVector<f64> {
    let mut v = vec![0.0f64; dim];
    for t in tokenize(label) {
        v[(fnv1a64(t.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = dot(&v, &v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector::new(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hashed,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Hashed,
            dimension: DEFAULT_DIMENSION,
            remote: None,
            cache_dir: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 8 {
            return Err(Error::ConfigInvalid(format!(
                "embedding dimension {} is below 8",
                self.dimension
            )));
        }
        match (self.kind, &self.remote) {
            (ProviderKind::Remote, None) => Err(Error::ConfigInvalid(
                "remote provider needs endpoint, model and token_env".into(),
            )),
            (ProviderKind::Hashed, Some(_)) => Err(Error::ConfigInvalid(
                "remote settings given for the hashed provider".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Identifies the vector space; stored in checkpoints and cache keys.
    pub fn fingerprint(&self) -> String {
        match (&self.kind, &self.remote) {
            (ProviderKind::Remote, Some(r)) => format!("remote:{}:{}", r.model, self.dimension),
            _ => format!("hashed-fnv1a:{}", self.dimension),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    provider: String,
    text: String,
    values: Vec<f64>,
}

/// Embeds labels through the configured provider, consulting the cache first.
#[derive(Debug)]
pub struct Embedder {
    cfg: ProviderConfig,
    client: Option<reqwest::blocking::Client>,
}

impl Embedder {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let client = match cfg.kind {
            ProviderKind::Remote => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(60))
                    .build()
                    .map_err(|e| Error::RemoteUnavailable(e.to_string()))?,
            ),
            ProviderKind::Hashed => None,
        };
        Ok(Embedder { cfg, client })
    }

    pub fn hashed(dimension: usize) -> Result<Self> {
        Embedder::new(ProviderConfig {
            dimension,
            ..ProviderConfig::default()
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    pub fn fingerprint(&self) -> String {
        self.cfg.fingerprint()
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<f64>>> {
        let mut out: Vec<Option<EmbeddingVector<f64>>> = vec![None; texts.len()];
        let mut missing = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            if t.is_empty() {
                log::warn!("empty label embeds to the zero vector");
                out[i] = Some(EmbeddingVector::zeros(self.dimension()));
            } else if let Some(v) = self.cache_get(t)? {
                out[i] = Some(v);
            } else {
                missing.push(i);
            }
        }
        let fresh: Vec<&str> = missing.iter().map(|&i| texts[i].as_str()).collect();
        let computed = match self.cfg.kind {
            ProviderKind::Hashed => fresh
                .iter()
                .map(|t| hashed_embedding(t, self.dimension()))
                .collect(),
            ProviderKind::Remote => self.embed_remote(&fresh)?,
        };
        for (&i, v) in missing.iter().zip(computed) {
            self.cache_put(&texts[i], &v)?;
            out[i] = Some(v);
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector<f64>> {
        Ok(self.embed(&[text.to_owned()])?.remove(0))
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.cfg.cache_dir.as_ref()?;
        let mut h = Sha256::new();
        h.update(self.fingerprint().as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        Some(dir.join(format!("{}.json", hex::encode(h.finalize()))))
    }

    fn cache_get(&self, text: &str) -> Result<Option<EmbeddingVector<f64>>> {
        let Some(path) = self.cache_path(text) else {
            return Ok(None);
        };
        let Ok(raw) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        match serde_json::from_str::<CacheRecord>(&raw) {
            Ok(rec) if rec.text == text && rec.values.len() == self.dimension() => {
                Ok(Some(EmbeddingVector::new(rec.values)))
            }
            _ => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                Ok(None)
            }
        }
    }

    fn cache_put(&self, text: &str, v: &EmbeddingVector<f64>) -> Result<()> {
        let Some(path) = self.cache_path(text) else {
            return Ok(());
        };
        let dir = path.parent().expect("cache file has a directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rec = CacheRecord {
            provider: self.fingerprint(),
            text: text.to_owned(),
            values: v.values.clone(),
        };
        write_atomic(&path, serde_json::to_string(&rec)?.as_bytes())
    }

    fn embed_remote(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(REMOTE_BATCH) {
            out.extend(self.remote_batch_with_retry(batch)?);
        }
        Ok(out)
    }

    fn remote_batch_with_retry(&self, batch: &[&str]) -> Result<Vec<EmbeddingVector<f64>>> {
        let mut delay = Duration::from_millis(200);
        let mut attempt = 1;
        loop {
            match self.remote_batch(batch) {
                Err(Error::RemoteUnavailable(msg)) if attempt < REMOTE_ATTEMPTS => {
                    log::warn!("embedding request failed (attempt {attempt}): {msg}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn remote_batch(&self, batch: &[&str]) -> Result<Vec<EmbeddingVector<f64>>> {
        let remote = self.cfg.remote.as_ref().expect("validated remote config");
        let client = self.client.as_ref().expect("remote client");
        let mut req = client.post(&remote.endpoint).json(&RemoteRequest {
            model: &remote.model,
            input: batch,
        });
        if let Ok(token) = std::env::var(&remote.token_env) {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() >= 400 {
            return Err(Error::RemoteUnavailable(format!("HTTP {status}")));
        }
        let body: RemoteResponse = resp
            .json()
            .map_err(|e| Error::RemoteUnavailable(format!("bad response body: {e}")))?;
        decode_remote(body, batch.len(), self.dimension())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    data: Vec<RemoteItem>,
}

#[derive(Deserialize)]
struct RemoteItem {
    index: usize,
    embedding: Vec<f64>,
}

fn decode_remote(
    body: RemoteResponse,
    expected: usize,
    dim: usize,
) -> Result<Vec<EmbeddingVector<f64>>> {
    let mut slots: Vec<Option<EmbeddingVector<f64>>> = vec![None; expected];
    for item in body.data {
        if item.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: item.embedding.len(),
            });
        }
        if item.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::RemoteUnavailable("non-finite embedding value".into()));
        }
        let slot = slots.get_mut(item.index).ok_or_else(|| {
            Error::RemoteUnavailable(format!("response index {} out of range", item.index))
        })?;
        *slot = Some(EmbeddingVector::new(item.embedding));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::RemoteUnavailable(format!("no embedding for input {i}"))))
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
