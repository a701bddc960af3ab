//! The portable binary container shared by checkpoints and task sets.
//!
//! Layout: magic `MTTE`, format version (u32 LE), manifest length (u32 LE),
//! UTF-8 JSON manifest, row-major little-endian f64 payload, and a CRC-32
//! of everything prior.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub const MAGIC: [u8; 4] = *b"MTTE";
pub const FORMAT_VERSION: u32 = 1;

/// Errors reading or writing container files.
#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a container file (bad magic)")]
    BadMagic { path: String },
    #[error("{path} has unsupported format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { path: String, found: u32 },
    #[error("{path} is truncated: {detail}")]
    Truncated { path: String, detail: String },
    #[error("{path} failed its checksum: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch {
        path: String,
        stored: u32,
        computed: u32,
    },
    #[error("{path} has a malformed manifest: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Serialize a manifest and payload to `path`.
pub fn write_container<M: Serialize>(
    path: &Path,
    manifest: &M,
    payload: &[f64],
) -> Result<(), ContainerError> {
    let manifest_bytes = serde_json::to_vec(manifest).map_err(|source| ContainerError::Manifest {
        path: display(path),
        source,
    })?;
    let mut bytes =
        Vec::with_capacity(4 + 4 + 4 + manifest_bytes.len() + payload.len() * 8 + 4);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&manifest_bytes);
    for value in payload {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes);
    bytes.extend_from_slice(&hasher.finalize().to_le_bytes());
    fs::write(path, bytes).map_err(|source| ContainerError::Io {
        path: display(path),
        source,
    })
}

/// Read and verify a container, returning the manifest and payload.
pub fn read_container<M: DeserializeOwned>(path: &Path) -> Result<(M, Vec<f64>), ContainerError> {
    let bytes = fs::read(path).map_err(|source| ContainerError::Io {
        path: display(path),
        source,
    })?;
    let p = display(path);
    if bytes.len() < 12 + 4 {
        return Err(ContainerError::Truncated {
            path: p,
            detail: format!("{} bytes is smaller than any valid container", bytes.len()),
        });
    }
    if bytes[0..4] != MAGIC {
        return Err(ContainerError::BadMagic { path: p });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion {
            path: p,
            found: version,
        });
    }

    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(body);
    let computed = hasher.finalize();
    if stored != computed {
        return Err(ContainerError::ChecksumMismatch {
            path: p,
            stored,
            computed,
        });
    }

    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let manifest_end = 12 + manifest_len;
    if manifest_end > body.len() {
        return Err(ContainerError::Truncated {
            path: p,
            detail: format!("manifest length {manifest_len} exceeds file size"),
        });
    }
    let manifest: M =
        serde_json::from_slice(&bytes[12..manifest_end]).map_err(|source| {
            ContainerError::Manifest {
                path: display(path),
                source,
            }
        })?;
    let payload_bytes = &body[manifest_end..];
    if payload_bytes.len() % 8 != 0 {
        return Err(ContainerError::Truncated {
            path: display(path),
            detail: format!("payload of {} bytes is not a whole number of f64s", payload_bytes.len()),
        });
    }
    let payload = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((manifest, payload))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}
