//! Binary dataset and checkpoint containers, PNG heatmap export, and run
//! configuration. All containers are little-endian with trailing SHA-256
//! integrity hashes, so files written on any platform load on any other.

mod checkpoint;
mod config;
mod dataset;
mod png_export;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{config_hash, sha256_hex, RunConfig};
pub use dataset::{read_dataset, write_dataset, DatasetManifest};
pub use png_export::export_heatmap_png;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("truncated file at sample {sample}: {detail}")]
    TruncatedFile { sample: usize, detail: String },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: String, found: String },
    #[error("degenerate value range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Little-endian read cursor with typed accessors.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], IoFormatError> {
        if self.remaining() < n {
            return Err(IoFormatError::Malformed(format!(
                "wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, IoFormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, IoFormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, IoFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>, IoFormatError> {
        let bytes = self.take(count * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
