//! Versioned JSON checkpoints. Parameter arrays are stored as base64 of
//! little-endian `f64`, row-major.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::train::{EpochMetrics, TrainConfig};
use super::RankerParams;
use crate::embedding::write_atomic;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "nextfocus-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: RankerParams<T>,
    pub train_config: TrainConfig,
    /// Fingerprint of the embedding provider the ranker was trained on.
    pub provider: String,
    pub history: Vec<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Encoded {
    format: String,
    version: u32,
    scalar: String,
    d: usize,
    h: usize,
    provider: String,
    train_config: TrainConfig,
    history: Vec<EpochMetrics>,
    params: EncodedParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodedParams {
    wq: String,
    wk: String,
    wv: String,
    w_out: String,
    b_out: String,
}

fn encode<T: Scalar>(values: &[T]) -> String {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|v| v.as_f64().to_le_bytes())
        .collect();
    STANDARD.encode(bytes)
}

fn decode<T: Scalar>(field: &str, text: &str, len: usize) -> Result<Vec<T>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Parse(format!("{field}: {e}")))?;
    if bytes.len() != len * 8 {
        return Err(Error::Parse(format!(
            "{field}: expected {len} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

impl<T: Scalar> Checkpoint<T> {
    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let enc = Encoded {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scalar: T::NAME.into(),
            d: p.d,
            h: p.h,
            provider: self.provider.clone(),
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            params: EncodedParams {
                wq: encode(&p.wq),
                wk: encode(&p.wk),
                wv: encode(&p.wv),
                w_out: encode(&p.w_out),
                b_out: encode(&[p.b_out]),
            },
        };
        Ok(serde_json::to_string_pretty(&enc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)?;
        if header.format != FORMAT {
            return Err(Error::Parse(format!("not a checkpoint (format `{}`)", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let enc: Encoded = serde_json::from_str(text)?;
        let (d, h) = (enc.d, enc.h);
        let ep = &enc.params;
        let params = RankerParams {
            d,
            h,
            wq: decode("wq", &ep.wq, d * h)?,
            wk: decode("wk", &ep.wk, d * h)?,
            wv: decode("wv", &ep.wv, d * h)?,
            w_out: decode("w_out", &ep.w_out, h)?,
            b_out: decode("b_out", &ep.b_out, 1)?[0],
        };
        Ok(Checkpoint {
            params,
            train_config: enc.train_config,
            provider: enc.provider,
            history: enc.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
