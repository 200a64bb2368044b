//! Versioned, checksummed JSON envelopes for model files.
//!
//! ```json
//! {"format":"gbtm","version":1,"created_at":"...","sha256":"...","payload":{...}}
//! ```
//!
//! The checksum covers the exact payload bytes as written.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("expected a `{expected}` file, found `{found}`")]
    WrongFormat { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checksum mismatch: file says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeMeta {
    pub format: String,
    pub version: u32,
    pub created_at: DateTime<Utc>,
    pub sha256: String,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u32,
    created_at: DateTime<Utc>,
    sha256: &'a str,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    format: String,
    version: u32,
    created_at: DateTime<Utc>,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode<T: Serialize>(format: &str, version: u32, payload: &T) -> Result<(Vec<u8>, EnvelopeMeta), PersistError> {
    let body = serde_json::to_string(payload)?;
    let sha256 = digest(body.as_bytes());
    let raw = RawValue::from_string(body)?;
    let created_at = Utc::now();
    let bytes = serde_json::to_vec(&EnvelopeOut {
        format,
        version,
        created_at,
        sha256: &sha256,
        payload: &raw,
    })?;
    let meta = EnvelopeMeta {
        format: format.to_string(),
        version,
        created_at,
        sha256,
    };
    Ok((bytes, meta))
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8], format: &str, version: u32) -> Result<(T, EnvelopeMeta), PersistError> {
    let env: EnvelopeIn<'_> = serde_json::from_slice(bytes)?;
    if env.format != format {
        return Err(PersistError::WrongFormat {
            expected: format.to_string(),
            found: env.format,
        });
    }
    if env.version != version {
        return Err(PersistError::VersionMismatch {
            found: env.version,
            supported: version,
        });
    }
    let actual = digest(env.payload.get().as_bytes());
    if actual != env.sha256 {
        return Err(PersistError::Checksum {
            expected: env.sha256,
            actual,
        });
    }
    let payload = serde_json::from_str(env.payload.get())?;
    let meta = EnvelopeMeta {
        format: env.format,
        version: env.version,
        created_at: env.created_at,
        sha256: env.sha256,
    };
    Ok((payload, meta))
}

/// Writes via a temporary sibling and rename, so readers never see a
/// half-written file.
pub fn save<T: Serialize>(path: impl AsRef<Path>, format: &str, version: u32, payload: &T) -> Result<EnvelopeMeta, PersistError> {
    let path = path.as_ref();
    let (bytes, meta) = encode(format, version, payload)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(meta)
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, format: &str, version: u32) -> Result<(T, EnvelopeMeta), PersistError> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, format, version)
}
