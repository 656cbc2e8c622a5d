//! The `MDBT` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size     field
//! 0       4        magic "MDBT" (0x4D 0x44 0x42 0x54)
//! 4       1        format version (1)
//! 5       1        dtype code (1 = f32, 2 = u8, 3 = i32)
//! 6       1        ndim (1..=4)
//! 7       1        reserved, always 0
//! 8       4*ndim   dimension sizes as u32
//! ...              row-major payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MDBT";
pub const FORMAT_VERSION: u8 = 1;
pub const MAX_DIMS: usize = 4;
const FIXED_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    U8 = 2,
    I32 = 3,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U8),
            3 => Ok(DType::I32),
            other => Err(Error::UnknownDType(other)),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional (1 to 4 dims) row-major array with a fixed element type.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

/// Header fields of an `MDBT` file, readable without touching the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl TensorHeader {
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + 4 * self.shape.len()
    }

    pub fn payload_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::InvalidTensor(format!("tensor must have 1 to {MAX_DIMS} dims, got {}", shape.len())));
    }
    if let Some(d) = shape.iter().find(|&&d| d == 0 || d > u32::MAX as usize) {
        return Err(Error::InvalidTensor(format!("dimension {d} out of range in shape {shape:?}")));
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }

    pub fn u8(shape: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        Self::new(shape, TensorData::U8(values))
    }

    pub fn i32(shape: Vec<usize>, values: Vec<i32>) -> Result<Self> {
        Self::new(shape, TensorData::I32(values))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn header(&self) -> TensorHeader {
        TensorHeader { dtype: self.dtype(), shape: self.shape.clone() }
    }

    /// Serializes the tensor into its `MDBT` byte representation.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(header.encoded_len() + header.payload_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[FORMAT_VERSION, header.dtype.code(), self.shape.len() as u8, 0]);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses an `MDBT` byte buffer. The buffer must contain exactly one tensor.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let body = &bytes[header.encoded_len()..];
        let expected = header.payload_len();
        if body.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: body.len() });
        }
        let data = match header.dtype {
            DType::F32 => TensorData::F32(
                body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            ),
            DType::U8 => TensorData::U8(body.to_vec()),
            DType::I32 => TensorData::I32(
                body.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            ),
        };
        Ok(Self { shape: header.shape, data })
    }
}

fn parse_header(bytes: &[u8]) -> Result<TensorHeader> {
    if bytes.len() < FIXED_HEADER_LEN {
        return Err(Error::CorruptHeader(format!("file is {} bytes, shorter than the fixed header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::CorruptHeader(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let dtype = DType::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_DIMS {
        return Err(Error::CorruptHeader(format!("ndim {ndim} outside 1..={MAX_DIMS}")));
    }
    if bytes[7] != 0 {
        return Err(Error::CorruptHeader(format!("reserved byte is {}, expected 0", bytes[7])));
    }
    let dims_end = FIXED_HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::CorruptHeader("truncated dimension table".into()));
    }
    let shape: Vec<usize> = bytes[FIXED_HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(Error::CorruptHeader(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(TensorHeader { dtype, shape })
}

/// Writes `tensor` to `path` in `MDBT` format. Output is byte-identical for identical tensors.
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let bytes = tensor.to_bytes();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

/// Reads only the header of an `MDBT` file.
pub fn read_tensor_header(path: impl AsRef<Path>) -> Result<TensorHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; FIXED_HEADER_LEN + 4 * MAX_DIMS];
    let mut filled = 0;
    while filled < buf.len() {
        let n = file.read(&mut buf[filled..]).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    buf.truncate(filled);
    parse_header(&buf)
}
