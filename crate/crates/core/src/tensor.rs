//! Bit-exact binary tensor interchange.
//!
//! Every intermediate that is not a PNG travels in this format. The layout is
//! deliberately minimal and fully little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "PLF1"
//! 4       1           dtype code: u8=1, u16=2, f32=3, f64=4
//! 5       1           rank
//! 6       4 * rank    shape, one u32 per dimension
//! ...     product(shape) * sizeof(dtype)   row-major payload
//! ```
//!
//! A rank-0 tensor has an empty shape and exactly one element. Encoding is
//! deterministic byte for byte, and `decode(encode(x)) == x` bit-exactly
//! (float payloads are moved as raw bit patterns, never re-rounded).

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

const MAGIC: [u8; 4] = *b"PLF1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("missing or wrong magic bytes (expected \"PLF1\")")]
    BadMagic,
    #[error("buffer ends before the encoded payload does")]
    TruncatedPayload,
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("tensor too large to encode (rank <= 255, dims < 2^32)")]
    TooLarge,
    #[error("data length {got} does not match shape product {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Element type of a [`Tensor`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dtype {
    U8,
    U16,
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 3,
            Dtype::F64 => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            1 => Some(Dtype::U8),
            2 => Some(Dtype::U16),
            3 => Some(Dtype::F32),
            4 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Typed payload of a [`Tensor`].
#[derive(Clone, PartialEq, Debug)]
pub enum TensorData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::U8(_) => Dtype::U8,
            TensorData::U16(_) => Dtype::U16,
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array with explicit shape, `n` in `0..=255`.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    /// Checked constructor: the payload length must equal the shape product
    /// (the empty product is 1, so a rank-0 tensor holds one element).
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Tensor, TensorError> {
        let want = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(TensorError::TooLarge)?;
        if data.len() != want {
            return Err(TensorError::LengthMismatch {
                got: data.len(),
                want,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u16(&self) -> Option<&[u16]> {
        match &self.data {
            TensorData::U16(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }

    /// Serialize to the wire format. Deterministic byte for byte.
    pub fn encode(&self) -> Result<Vec<u8>, TensorError> {
        if self.rank() > 255 || self.shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(TensorError::TooLarge);
        }
        let payload = self.data.len() * self.dtype().size();
        let mut out = Vec::with_capacity(6 + 4 * self.rank() + payload);
        out.extend_from_slice(&MAGIC);
        out.push(self.dtype().code());
        out.push(self.rank() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U16(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
            TensorData::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Parse the wire format. Rejects short buffers, unknown dtype codes and
    /// trailing garbage.
    pub fn decode(bytes: &[u8]) -> Result<Tensor, TensorError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(TensorError::BadMagic);
        }
        let rest = &bytes[4..];
        if rest.len() < 2 {
            return Err(TensorError::TruncatedPayload);
        }
        let dtype = Dtype::from_code(rest[0]).ok_or(TensorError::UnknownDtype(rest[0]))?;
        let rank = rest[1] as usize;
        let mut off = 2;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let end = off + 4;
            if rest.len() < end {
                return Err(TensorError::TruncatedPayload);
            }
            let dim = u32::from_le_bytes(rest[off..end].try_into().unwrap());
            shape.push(dim as usize);
            off = end;
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(TensorError::TooLarge)?;
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or(TensorError::TooLarge)?;
        let payload = &rest[off.min(rest.len())..];
        if payload.len() < payload_len {
            return Err(TensorError::TruncatedPayload);
        }
        if payload.len() > payload_len {
            return Err(TensorError::TrailingBytes(payload.len() - payload_len));
        }
        let data = match dtype {
            Dtype::U8 => TensorData::U8(payload.to_vec()),
            Dtype::U16 => TensorData::U16(
                payload
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
            ),
        };
        Ok(Tensor { shape, data })
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TensorError> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Tensor, TensorError> {
        Tensor::decode(&fs::read(path)?)
    }
}
