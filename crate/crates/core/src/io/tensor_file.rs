//! `GITF` tensor files: magic, `u32` version, `u32` rank, `rank × u32` dims, then
//! little-endian `f32` payload in row-major order.

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::pixels::Image;
use std::io::Read;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"GITF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape("tensor file", &dims, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a complete file image; `path` only labels errors.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let (dims, offset) = parse_header(path, bytes)?;
        let expected = dims.iter().product::<usize>() * 4;
        let payload = &bytes[offset..];
        if payload.len() != expected {
            return Err(Error::format(
                path,
                offset as u64,
                format!("payload is {} bytes, dims {:?} need {expected}", payload.len(), dims),
            ));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self { dims, data })
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, usize)> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::format(path, at as u64, "truncated header"))
    };
    if bytes.get(0..4) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, 0, "bad magic (expected GITF)"));
    }
    let version = word(4)?;
    if version != VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}")));
    }
    let rank = word(8)? as usize;
    if rank > 8 {
        return Err(Error::format(path, 8, format!("implausible rank {rank}")));
    }
    let dims = (0..rank).map(|i| word(12 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    Ok((dims, 12 + 4 * rank))
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} element {i}", path.display())));
    }
    let t = TensorFile::new(dims.to_vec(), data.to_vec())?;
    write_atomic(path, &t.to_bytes())
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    TensorFile::from_bytes(path, &read_file(path)?)
}

/// Dims from the header alone, without reading the payload.
pub fn read_tensor_dims(path: &Path) -> Result<Vec<usize>> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = vec![0u8; 12];
    f.read_exact(&mut head).map_err(|_| Error::format(path, 0, "truncated header"))?;
    let rank = u32::from_le_bytes([head[8], head[9], head[10], head[11]]) as usize;
    let mut rest = vec![0u8; 4 * rank.min(8)];
    f.read_exact(&mut rest).map_err(|_| Error::format(path, 12, "truncated header"))?;
    head.extend_from_slice(&rest);
    parse_header(path, &head).map(|(d, _)| d)
}

/// Stores an image as a `(C, H, W)` tensor.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_tensor(path, &[img.channels, img.height, img.width], &img.data)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let t = read_tensor(path)?;
    match t.dims[..] {
        [c, h, w] => Image::from_data(w, h, c, t.data),
        _ => Err(Error::format(path, 8, format!("expected a rank-3 image, found dims {:?}", t.dims))),
    }
}
