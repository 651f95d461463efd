//! Dense sentence-embedding matrices and their on-disk formats.
//!
//! The canonical format is little-endian:
//!
//! ```text
//! "EMB1" | dim: u32 | count: u64 | normalized: u8 | 3 zero bytes | count*dim f32
//! ```
//!
//! A headerless stream of `f32` values is also accepted for interop with
//! encoders that dump raw buffers; the caller supplies `dim`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const HEADER_LEN: usize = 20;

/// Tolerance on row norms for a matrix flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Row-major `count x dim` matrix of `f32` sentence embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                len: data.len(),
                expected: (data.len() / dim) * dim,
            });
        }
        Ok(Self {
            dim,
            data,
            normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Rows `start..end` as a new matrix; keeps the normalized flag.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            normalized: self.normalized,
        }
    }

    /// Multiplies every element by `factor`. Clears the normalized flag
    /// unless `factor` is exactly one.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
            normalized: self.normalized && factor == 1.0,
        }
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    ///
    /// Norms are computed in double precision. A zero row is an error since
    /// its cosine to anything is undefined.
    pub fn l2_normalize(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, row) in self.rows().enumerate() {
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroRow(i));
            }
            data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
        }
        Ok(Self {
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    /// Normalizes unless the matrix already carries the normalized flag.
    pub fn ensure_normalized(&self) -> Result<Self> {
        if self.normalized {
            Ok(self.clone())
        } else {
            self.l2_normalize()
        }
    }

    /// Sets the normalized flag without touching the data, so inner
    /// products are taken as cosines downstream.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    pub fn load_headered(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_headered(BufReader::new(File::open(path)?))
    }

    pub fn read_headered<R: Read>(mut reader: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        read_fully(&mut reader, &mut header).map_err(|got| {
            if got >= 4 && header[..4] != MAGIC {
                Error::BadMagic(header[..4].try_into().unwrap())
            } else {
                Error::TruncatedFile {
                    expected: HEADER_LEN as u64,
                    found: got as u64,
                }
            }
        })?;
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let normalized = header[16] != 0;
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        let expected = count
            .checked_mul(dim as u64 * 4)
            .ok_or(Error::TruncatedFile {
                expected: u64::MAX,
                found: 0,
            })?;
        let mut bytes = Vec::new();
        reader.take(expected).read_to_end(&mut bytes)?;
        if (bytes.len() as u64) < expected {
            return Err(Error::TruncatedFile {
                expected,
                found: bytes.len() as u64,
            });
        }
        Ok(Self {
            dim,
            data: decode_f32s(&bytes),
            normalized,
        })
    }

    pub fn load_raw(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_raw_bytes(&bytes, dim)
    }

    pub fn from_raw_bytes(bytes: &[u8], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        let row_bytes = dim as u64 * 4;
        if !(bytes.len() as u64).is_multiple_of(row_bytes) {
            return Err(Error::SizeNotDivisible {
                size: bytes.len() as u64,
                row_bytes,
            });
        }
        Ok(Self {
            dim,
            data: decode_f32s(bytes),
            normalized: false,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_headered(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_headered<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(&MAGIC);
        header[4..8].copy_from_slice(&(self.dim as u32).to_le_bytes());
        header[8..16].copy_from_slice(&(self.count() as u64).to_le_bytes());
        header[16] = u8::from(self.normalized);
        w.write_all(&header)?;
        self.write_raw(w)
    }

    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_raw(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_raw<W: Write>(&self, w: &mut W) -> Result<()> {
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

fn decode_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

/// Fills `buf`, returning the number of bytes read on a short read.
fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> std::result::Result<(), usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => return Err(got),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(_) => return Err(got),
        }
    }
    Ok(())
}

/// External identifiers for the rows of an [`EmbeddingMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceIndexMap {
    ids: Vec<String>,
}

impl SentenceIndexMap {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids })
    }

    /// Identifiers "0", "1", ... for `count` rows.
    pub fn sequential(count: usize) -> Self {
        Self {
            ids: (0..count).map(|i| i.to_string()).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let ids = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
        Self::new(ids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for id in &self.ids {
            writeln!(w, "{id}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.ids.get(i).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn check_pairs_with(&self, m: &EmbeddingMatrix) -> Result<()> {
        if self.len() != m.count() {
            return Err(Error::CountMismatch {
                src: self.len(),
                tgt: m.count(),
            });
        }
        Ok(())
    }
}
