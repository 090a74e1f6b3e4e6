//! "NFF1" image feature interchange files.
//!
//! Layout, all little-endian: magic `NFF1`, `u32` record count, `u32 x 3`
//! feature dims, then per record `u64` mmsi, `u16` id length, id bytes,
//! `f32` confidence and `C*H*W` `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NFF1";

/// RoI-pooled feature shape produced by the detector: channels, height, width.
pub const FEATURE_DIMS: [usize; 3] = [256, 7, 7];
pub const FEATURE_LEN: usize = 256 * 7 * 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatureRecord {
    pub image_id: String,
    pub mmsi: u64,
    pub confidence: f32,
    pub feature: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NffFile {
    pub dims: [usize; 3],
    pub records: Vec<ImageFeatureRecord>,
}

pub fn feature_len(dims: [usize; 3]) -> usize {
    dims.iter().product()
}

/// Streaming writer. The record count is part of the header, so it is fixed up front.
pub struct NffWriter<W: Write> {
    out: W,
    dims: [usize; 3],
    expected: usize,
    written: usize,
}

impl<W: Write> NffWriter<W> {
    pub fn new(mut out: W, dims: [usize; 3], count: usize) -> Result<Self> {
        let io = |e| Error::io("<nff writer>", e);
        let count32 = u32::try_from(count).map_err(|_| Error::InvalidInput(format!("{count} records exceed u32")))?;
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&count32.to_le_bytes()).map_err(io)?;
        for d in dims {
            let d = u32::try_from(d).map_err(|_| Error::InvalidInput(format!("dimension {d} exceeds u32")))?;
            out.write_all(&d.to_le_bytes()).map_err(io)?;
        }
        Ok(NffWriter { out, dims, expected: count, written: 0 })
    }

    pub fn write(&mut self, rec: &ImageFeatureRecord) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::InvalidInput(format!("more than the declared {} records", self.expected)));
        }
        validate(rec, self.dims)?;
        let id = rec.image_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidInput(format!("image id {:?} longer than 65535 bytes", rec.image_id)))?;
        let mut buf = Vec::with_capacity(18 + id.len() + 4 * rec.feature.len());
        buf.extend_from_slice(&rec.mmsi.to_le_bytes());
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&rec.confidence.to_le_bytes());
        for v in &rec.feature {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io("<nff writer>", e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(Error::InvalidInput(format!(
                "declared {} records but wrote {}",
                self.expected, self.written
            )));
        }
        self.out.flush().map_err(|e| Error::io("<nff writer>", e))?;
        Ok(self.out)
    }
}

fn validate(rec: &ImageFeatureRecord, dims: [usize; 3]) -> Result<()> {
    let want = feature_len(dims);
    if rec.feature.len() != want {
        return Err(Error::InvalidInput(format!(
            "image {:?}: {} feature values, expected {want}",
            rec.image_id,
            rec.feature.len()
        )));
    }
    if !(0.0..=1.0).contains(&rec.confidence) {
        return Err(Error::InvalidInput(format!("image {:?}: confidence {} outside [0,1]", rec.image_id, rec.confidence)));
    }
    if let Some(i) = rec.feature.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("image {:?}: non-finite feature value at {i}", rec.image_id)));
    }
    Ok(())
}

pub fn write_nff<W: Write>(out: W, dims: [usize; 3], records: &[ImageFeatureRecord]) -> Result<W> {
    let mut w = NffWriter::new(out, dims, records.len())?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn write_nff_file(path: &Path, dims: [usize; 3], records: &[ImageFeatureRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_nff(BufWriter::new(f), dims, records).map_err(|e| relabel(e, path))?;
    Ok(())
}

/// Streaming reader over the records of an NFF1 stream.
pub struct NffReader<R: Read> {
    input: R,
    source: String,
    dims: [usize; 3],
    remaining: usize,
}

impl<R: Read> NffReader<R> {
    pub fn new(mut input: R, source: &str) -> Result<Self> {
        let mut head = [0u8; 20];
        input
            .read_exact(&mut head)
            .map_err(|_| Error::format(source, "shorter than the 20-byte NFF1 header"))?;
        if &head[..4] != MAGIC {
            return Err(Error::format(source, "missing NFF1 magic bytes"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
        let dims = [u32_at(8), u32_at(12), u32_at(16)];
        if dims.contains(&0) {
            return Err(Error::format(source, format!("degenerate feature dims {dims:?}")));
        }
        Ok(NffReader { input, source: source.to_string(), dims, remaining: u32_at(4) })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Records not yet read.
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    fn read_record(&mut self) -> Result<ImageFeatureRecord> {
        let src = self.source.clone();
        let trunc = |_| Error::format(src.as_str(), "truncated record");
        let mut fixed = [0u8; 10];
        self.input.read_exact(&mut fixed).map_err(trunc)?;
        let mmsi = u64::from_le_bytes(fixed[..8].try_into().unwrap());
        let id_len = u16::from_le_bytes(fixed[8..10].try_into().unwrap()) as usize;
        let mut id = vec![0u8; id_len];
        self.input.read_exact(&mut id).map_err(trunc)?;
        let image_id =
            String::from_utf8(id).map_err(|_| Error::format(self.source.as_str(), "image id is not UTF-8"))?;
        let n = feature_len(self.dims);
        let mut body = vec![0u8; 4 + 4 * n];
        self.input.read_exact(&mut body).map_err(trunc)?;
        let confidence = f32::from_le_bytes(body[..4].try_into().unwrap());
        let feature = body[4..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let rec = ImageFeatureRecord { image_id, mmsi, confidence, feature };
        validate(&rec, self.dims).map_err(|e| Error::format(self.source.as_str(), e.to_string()))?;
        Ok(rec)
    }
}

impl<R: Read> Iterator for NffReader<R> {
    type Item = Result<ImageFeatureRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let rec = self.read_record();
        self.remaining = if rec.is_ok() { self.remaining - 1 } else { 0 };
        Some(rec)
    }
}

pub fn read_nff<R: Read>(input: R, source: &str) -> Result<NffFile> {
    let reader = NffReader::new(input, source)?;
    let dims = reader.dims();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok(NffFile { dims, records })
}

pub fn read_nff_file(path: &Path) -> Result<NffFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_nff(BufReader::new(f), &path.display().to_string())
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}
