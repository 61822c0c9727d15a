//! IDX container files (the MNIST distribution format).
//!
//! A file is a big-endian magic `0x0000TTNN` (`TT` element type, `NN`
//! number of dimensions), `NN` big-endian u32 sizes, then the elements in
//! row-major order. Images are unsigned bytes scaled by `1/255`; labels are
//! unsigned bytes. Image files with double elements (`TT = 0x0E`) are also
//! read and written so that arbitrary real data round-trips exactly.

use std::fs;
use std::path::Path;

use bitrip_core::data::Dataset;
use bitrip_core::Matrix;

use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_F64_MAGIC: u32 = 0x0000_0E03;

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

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses an image file into an `n x (rows*cols)` matrix.
pub fn parse_images(buf: &[u8]) -> Result<Matrix> {
    let mut r = Reader { buf, at: 0 };
    let magic = r.u32()?;
    if magic != IMAGES_MAGIC && magic != IMAGES_F64_MAGIC {
        return Err(Error::BadMagic { expected: IMAGES_MAGIC, found: magic });
    }
    let (n, rows, cols) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let q = rows * cols;
    let data: Vec<f64> = if magic == IMAGES_MAGIC {
        r.take(n * q)?.iter().map(|&b| f64::from(b) / 255.0).collect()
    } else {
        r.take(n * q * 8)?.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().unwrap())).collect()
    };
    Ok(Matrix::from_vec(n, q, data)?)
}

pub fn parse_labels(buf: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { buf, at: 0 };
    let magic = r.u32()?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic { expected: LABELS_MAGIC, found: magic });
    }
    let n = r.u32()? as usize;
    Ok(r.take(n)?.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image file and its label file into a dataset.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_images(&read(images)?)?;
    let y = parse_labels(&read(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::CountMismatch { images: x.rows(), labels: y.len() });
    }
    Ok(Dataset::new(x, y)?)
}

/// Pixel byte for `v` if `v` is exactly some `k / 255`.
fn as_byte(v: f64) -> Option<u8> {
    let k = (v * 255.0).round();
    ((0.0..=255.0).contains(&k) && k / 255.0 == v).then_some(k as u8)
}

/// Encodes images as `n x 1 x q`. Bytes when every value is a multiple of
/// `1/255` in `[0, 1]`, doubles otherwise.
pub fn encode_images(x: &Matrix) -> Vec<u8> {
    let bytes: Option<Vec<u8>> = x.as_slice().iter().map(|&v| as_byte(v)).collect();
    let magic = if bytes.is_some() { IMAGES_MAGIC } else { IMAGES_F64_MAGIC };
    let mut out = Vec::with_capacity(16 + x.as_slice().len() * 8);
    for v in [magic, x.rows() as u32, 1, x.cols() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    match bytes {
        Some(b) => out.extend_from_slice(&b),
        None => x.as_slice().iter().for_each(|v| out.extend_from_slice(&v.to_be_bytes())),
    }
    out
}

pub fn encode_labels(y: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + y.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(y.len() as u32).to_be_bytes());
    for &l in y {
        out.push(u8::try_from(l).map_err(|_| Error::Config(format!("label {l} does not fit in a byte")))?);
    }
    Ok(out)
}

pub fn write_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    fs::write(images, encode_images(&ds.inputs)).map_err(|e| Error::io(images, e))?;
    fs::write(labels, encode_labels(&ds.labels)?).map_err(|e| Error::io(labels, e))
}
