//! Versioned binary parameter files with a JSON manifest.
//!
//! Binary layout (little-endian):
//! `"NFCK"`, u32 version, u8 dtype width, u32 entry count, then per entry
//! u8 kind (0 parameter, 1 buffer), u16 name length, name bytes, u32 rank,
//! u32 dims, values; finally the 32-byte SHA-256 of everything before it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AutogradError, Result};
use crate::params::ParamStore;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub buffer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dtype: DType,
    pub blob: String,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
    /// Model-specific metadata (configuration, rules, seed).
    pub model: serde_json::Value,
}

pub fn encode<T: Scalar>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    let entries: Vec<(u8, &str, &Tensor<T>)> = store
        .params()
        .map(|(_, p)| (0u8, p.name.as_str(), &p.value))
        .chain(store.buffers().map(|b| (1u8, b.name.as_str(), &b.value)))
        .collect();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (kind, name, t) in entries {
        out.push(kind);
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AutogradError::Format("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>> {
    if bytes.len() < 32 + 4 {
        return Err(AutogradError::ChecksumMismatch);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(AutogradError::ChecksumMismatch);
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(AutogradError::Format("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(AutogradError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dtype = DType::from_tag(r.u8()?).ok_or_else(|| AutogradError::Format("unknown dtype".into()))?;
    let count = r.u32()?;
    let mut store = ParamStore::<T>::new();
    for _ in 0..count {
        let kind = r.u8()?;
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| AutogradError::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * dtype.byte_width())?;
        let data: Vec<T> = match dtype {
            DType::F32 => raw.chunks(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
            DType::F64 => raw.chunks(8).map(|c| T::of(f64::read_le(c))).collect(),
        };
        let t = Tensor::new(shape, data)?;
        match kind {
            0 => {
                store.add(name, t)?;
            }
            1 => {
                store.add_buffer(name, t)?;
            }
            k => return Err(AutogradError::Format(format!("unknown entry kind {k}"))),
        }
    }
    if r.pos != body.len() {
        return Err(AutogradError::Format("trailing bytes after last tensor".into()));
    }
    Ok(store)
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<path>` (JSON manifest) and `<path>.bin` with the same stem.
pub fn save<T: Scalar>(path: &Path, store: &ParamStore<T>, model: serde_json::Value) -> Result<CheckpointManifest> {
    let bytes = encode(store);
    let blob = blob_path(path);
    fs::write(&blob, &bytes)?;
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE,
        blob: blob
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        blob_sha256: hex(&Sha256::digest(&bytes)),
        tensors: store
            .params()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                buffer: false,
            })
            .chain(store.buffers().map(|b| TensorEntry {
                name: b.name.clone(),
                shape: b.value.shape().to_vec(),
                buffer: true,
            }))
            .collect(),
        model,
    };
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load<T: Scalar>(path: &Path) -> Result<(ParamStore<T>, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(AutogradError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let blob = path.with_file_name(&manifest.blob);
    let bytes = fs::read(blob)?;
    if hex(&Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(AutogradError::ChecksumMismatch);
    }
    let store = decode(&bytes)?;
    Ok((store, manifest))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("conv.w", Tensor::from_f64(vec![2, 1, 1, 2], &[0.5, -1.0, 2.0, 3.25]).unwrap())
            .unwrap();
        s.add_buffer("bn.running", Tensor::from_f64(vec![2, 1], &[0.0, 1.0]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = store();
        let back: ParamStore<f32> = decode(&encode(&s)).unwrap();
        let id = back.id("conv.w").unwrap();
        assert_eq!(back.value(id), s.value(s.id("conv.w").unwrap()));
        let b = back.buffer_id("bn.running").unwrap();
        assert_eq!(back.buffer(b).data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_blob_fails_checksum() {
        let bytes = encode(&store());
        let err = decode::<f32>(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, AutogradError::ChecksumMismatch));
    }

    #[test]
    fn file_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&path, &store(), serde_json::json!({"kind": "test"})).unwrap();
        let (s, m): (ParamStore<f32>, _) = load(&path).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(m.model["kind"], "test");

        let mut raw: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        raw["format_version"] = 99.into();
        fs::write(&path, raw.to_string()).unwrap();
        assert!(matches!(
            load::<f32>(&path).unwrap_err(),
            AutogradError::VersionMismatch { found: 99, .. }
        ));
    }
}
