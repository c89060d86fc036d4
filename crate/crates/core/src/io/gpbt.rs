//! `GPBT` tensor files: magic `"GPBT"`, `u32` version 1, `u32` rank, `u64` dims, then an
//! `f32` little-endian row-major payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::video::VideoTensor;

pub const MAGIC: [u8; 4] = *b"GPBT";
pub const VERSION: u32 = 1;

/// Rank-N `f32` tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("rank-0 tensors are not supported".into()));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Bitwise equality, so NaN payloads compare by bits.
    pub fn bit_eq(&self, o: &Self) -> bool {
        self.dims == o.dims
            && self.data.len() == o.data.len()
            && self
                .data
                .iter()
                .zip(&o.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn encode_tensor(t: &Tensor, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for &d in &t.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.data.len() * 4);
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let take = |off: usize, n: usize| -> Result<&[u8]> {
        bytes.get(off..off + n).ok_or(Error::Truncated {
            expected: off + n,
            found: bytes.len(),
        })
    };
    let magic: [u8; 4] = take(0, 4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let rank = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
    if rank == 0 {
        return Err(Error::Dimension("rank-0 tensors are not supported".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let d = u64::from_le_bytes(take(12 + 8 * i, 8)?.try_into().unwrap());
        dims.push(
            usize::try_from(d).map_err(|_| Error::Dimension(format!("dimension {d} too large")))?,
        );
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Dimension(format!("element count overflows for {dims:?}")))?;
    let off = 12 + 8 * rank;
    let payload = take(off, n * 4)?;
    if bytes.len() != off + n * 4 {
        return Err(Error::Shape(format!(
            "{} trailing bytes after payload",
            bytes.len() - off - n * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write_raw(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode_tensor(t, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

impl<S: Scalar> From<&VideoTensor<S>> for Tensor {
    fn from(v: &VideoTensor<S>) -> Self {
        Tensor {
            dims: v.dims().to_vec(),
            data: v.data.iter().map(|x| x.as_f32()).collect(),
        }
    }
}

impl<S: Scalar> TryFrom<Tensor> for VideoTensor<S> {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        if t.dims.len() != 4 {
            return Err(Error::Dimension(format!(
                "video tensors have rank 4, found rank {}",
                t.dims.len()
            )));
        }
        let [f, h, w, c] = [t.dims[0], t.dims[1], t.dims[2], t.dims[3]];
        VideoTensor::from_vec(f, h, w, c, t.data.into_iter().map(S::from_f32).collect())
    }
}

/// Writes a video as a rank-4 GPBT file (values rounded to `f32`).
pub fn write_tensor<S: Scalar>(path: impl AsRef<Path>, video: &VideoTensor<S>) -> Result<()> {
    write_raw(path, &Tensor::from(video))
}

pub fn read_tensor<S: Scalar>(path: impl AsRef<Path>) -> Result<VideoTensor<S>> {
    VideoTensor::try_from(read_raw(path)?)
}
