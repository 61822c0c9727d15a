//! Binary checkpoints.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! "BTRP" | version u32 | layer count L u32 | L + 1 dims u32
//! | per layer: weights (out x in, row-major) f64, bias f64
//! | flags u32 (bit 0: normalised embeddings)
//! | classes u32 | tracker dim u32 | cov mode u8
//! | per class: present u8, then if present
//! |   n0 u64, mean f64 x d, cov0 f64 x d*d, scatter f64 x d*d
//! | CRC-32 of every preceding byte, u32
//! ```

use std::fs;
use std::path::Path;

use bitrip_core::mlp::{Layer, MlpModel};
use bitrip_core::tracker::{ClassState, ClassTracker, CovMode};
use bitrip_core::{Matrix, SymMatrix};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BTRP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub normalize: bool,
    pub tracker: ClassTracker,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let dims = ck.model.layer_dims();
    put_u32(&mut out, (dims.len() - 1) as u32);
    dims.iter().for_each(|&d| put_u32(&mut out, d as u32));
    for l in ck.model.layers() {
        put_f64s(&mut out, l.weights.as_slice());
        put_f64s(&mut out, &l.bias);
    }
    put_u32(&mut out, ck.normalize as u32);
    put_u32(&mut out, ck.tracker.classes() as u32);
    put_u32(&mut out, ck.tracker.dim() as u32);
    out.push(match ck.tracker.mode() {
        CovMode::Standard => 0,
        CovMode::PaperLiteral => 1,
    });
    for s in ck.tracker.states() {
        match s {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&(s.n0 as u64).to_le_bytes());
                put_f64s(&mut out, &s.mean0);
                put_f64s(&mut out, s.cov0.as_slice());
                put_f64s(&mut out, s.scatter().as_slice());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(Error::TruncatedFile { need: self.at.saturating_add(n), have: self.buf.len() })?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn bad(msg: &str) -> Error {
    Error::BadCheckpoint(msg.to_owned())
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
    if buf.len() < 8 || &buf[..4] != MAGIC {
        return Err(bad("missing BTRP magic"));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { buf: body, at: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let layers = r.u32()? as usize;
    if layers == 0 {
        return Err(bad("no layers"));
    }
    let dims: Vec<usize> = (0..=layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    let mut model_layers = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let weights = Matrix::from_vec(w[1], w[0], r.f64s(w[0] * w[1])?)?;
        let bias = r.f64s(w[1])?;
        model_layers.push(Layer { weights, bias });
    }
    let model = MlpModel::from_layers(model_layers)?;
    let normalize = r.u32()? & 1 == 1;
    let classes = r.u32()? as usize;
    let d = r.u32()? as usize;
    let mode = match r.u8()? {
        0 => CovMode::Standard,
        1 => CovMode::PaperLiteral,
        m => return Err(Error::BadCheckpoint(format!("unknown covariance mode {m}"))),
    };
    let mut tracker = ClassTracker::new(classes, d, mode);
    for j in 0..classes {
        if r.u8()? == 0 {
            continue;
        }
        let n0 = r.u64()? as usize;
        let mean = r.f64s(d)?;
        let cov = SymMatrix::from_row_major(d, &r.f64s(d * d)?)?;
        let scatter = SymMatrix::from_row_major(d, &r.f64s(d * d)?)?;
        tracker.set_state(ClassState::from_parts(j, mean, cov, scatter, n0)?)?;
    }
    if r.at != body.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint { model, normalize, tracker })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ck)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
