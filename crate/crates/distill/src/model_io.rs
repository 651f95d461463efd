//! Student model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "BXSM" | version u32
//! layers, width, heads, ffn_mult, vocab_size, max_len: u32 each
//! piece count u32, then per piece: byte length u32 + UTF-8 bytes
//! merge count u32, then per merge: left, right, result u32
//! parameter count u64, then float32 parameters
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{DistillError, Result};
use crate::train::Student;
use crate::vocab::{Merge, SubwordVocab};

pub const MODEL_MAGIC: &[u8; 4] = b"BXSM";
pub const MODEL_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| DistillError::BadModelFile(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> DistillError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        DistillError::BadModelFile("unexpected end of file".into())
    } else {
        e.into()
    }
}

pub fn write_model<W: Write>(student: &Student, w: &mut W) -> Result<()> {
    let c = student.encoder.config();
    w.write_all(MODEL_MAGIC)?;
    put_u32(w, MODEL_VERSION as usize)?;
    for v in [c.layers, c.width, c.heads, c.ffn_mult, c.vocab_size, c.max_len] {
        put_u32(w, v)?;
    }
    put_u32(w, student.vocab.len())?;
    for p in student.vocab.pieces() {
        put_u32(w, p.len())?;
        w.write_all(p.as_bytes())?;
    }
    put_u32(w, student.vocab.merges().len())?;
    for m in student.vocab.merges() {
        for v in [m.left, m.right, m.result] {
            put_u32(w, v as usize)?;
        }
    }
    w.write_all(&(student.params.len() as u64).to_le_bytes())?;
    for &p in &student.params {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<Student> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MODEL_MAGIC {
        return Err(DistillError::BadModelFile(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != MODEL_VERSION {
        return Err(DistillError::BadModelFile(format!("unsupported version {version}")));
    }
    let mut f = [0usize; 6];
    for v in &mut f {
        *v = get_u32(r)? as usize;
    }
    let cfg = EncoderConfig {
        layers: f[0],
        width: f[1],
        heads: f[2],
        ffn_mult: f[3],
        vocab_size: f[4],
        max_len: f[5],
    };
    let npieces = get_u32(r)? as usize;
    let mut pieces = Vec::with_capacity(npieces.min(1 << 20));
    for _ in 0..npieces {
        let len = get_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(truncated)?;
        pieces.push(String::from_utf8(buf).map_err(|_| DistillError::BadModelFile("piece is not UTF-8".into()))?);
    }
    let nmerges = get_u32(r)? as usize;
    let mut merges = Vec::with_capacity(nmerges.min(1 << 20));
    for _ in 0..nmerges {
        merges.push(Merge {
            left: get_u32(r)?,
            right: get_u32(r)?,
            result: get_u32(r)?,
        });
    }
    let vocab = SubwordVocab::from_parts(pieces, merges)?;
    if vocab.len() != cfg.vocab_size {
        return Err(DistillError::BadModelFile(format!(
            "vocabulary has {} pieces but the encoder expects {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    let encoder = Encoder::new(cfg)?;
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb).map_err(truncated)?;
    let nparams = u64::from_le_bytes(nb) as usize;
    if nparams != encoder.num_params() {
        return Err(DistillError::BadModelFile(format!(
            "expected {} parameters, found {nparams}",
            encoder.num_params()
        )));
    }
    let mut raw = vec![0u8; nparams * 4];
    r.read_exact(&mut raw).map_err(truncated)?;
    let params = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok(Student { vocab, encoder, params })
}

pub fn save_model(student: &Student, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(student, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Student> {
    read_model(&mut BufReader::new(File::open(path)?))
}
