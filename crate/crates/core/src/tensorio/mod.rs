//! Tensor containers and the CPT1 binary format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CPT1"
//! 4       1         dtype code: 0 = f32, 1 = u8, 2 = u32
//! 5       1         ndim (>= 1)
//! 6       4*ndim    dims, u32 each (>= 1)
//! ...     n*size    row-major payload
//! ```
//!
//! Bitmaps are plain `u8` tensors holding only 0 and 1.

mod fixture;
mod params;

pub use fixture::{
    Fixture, FixtureManifest, HyperDefaults, ParamFiles, SampleEntry, SampleRecord, FIXTURE_VERSION,
    MANIFEST_FILE,
};
pub use params::ProjectionParams;

use std::fs;
use std::path::Path;

use crate::error::{FormatError, ShapeError, TensorIoError};
use crate::grid::{Grid, LabelGrid, Mask};

pub const MAGIC: &[u8; 4] = b"CPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
    U32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
            DType::U32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::U8),
            2 => Ok(DType::U32),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::U8 => "u8",
            DType::U32 => "u32",
        }
    }
}

/// Scalar types that can live in a CPT1 payload.
pub trait Element: Copy + Send + Sync + 'static {
    const DTYPE: DType;
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Element for u8 {
    const DTYPE: DType = DType::U8;
    fn put_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn get_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl Element for u32 {
    const DTYPE: DType = DType::U32;
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// Dense row-major tensor. The shape is non-empty and every dim is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type TensorF32 = Tensor<f32>;
pub type TensorU8 = Tensor<u8>;
pub type TensorU32 = Tensor<u32>;

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, ShapeError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(ShapeError::ZeroDim);
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ShapeError::Length {
                expected: n,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Number of leading-axis slices (`shape[0]`).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Contiguous slice `i` along the leading axis.
    pub fn row(&self, i: usize) -> &[T] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }
}

impl<T: Element> From<Grid<T>> for Tensor<T> {
    fn from(g: Grid<T>) -> Self {
        let (h, w) = g.dims();
        Tensor {
            shape: vec![h, w],
            data: g.into_vec(),
        }
    }
}

impl From<&Mask> for TensorU8 {
    fn from(m: &Mask) -> Self {
        Tensor {
            shape: vec![m.height(), m.width()],
            data: m.as_slice().iter().map(|&b| b as u8).collect(),
        }
    }
}

impl From<&LabelGrid> for TensorU32 {
    fn from(g: &LabelGrid) -> Self {
        Tensor {
            shape: vec![g.height(), g.width()],
            data: g.as_slice().to_vec(),
        }
    }
}

impl TensorU8 {
    /// Splits a `[H, W]` or `[M, H, W]` bitmap tensor into masks, rejecting
    /// any value other than 0 or 1.
    pub fn to_masks(&self) -> Result<Vec<Mask>, FormatError> {
        if let Some((offset, &value)) = self.data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(FormatError::NotBinary { offset, value });
        }
        let (m, h, w) = match self.shape.as_slice() {
            &[h, w] => (1, h, w),
            &[m, h, w] => (m, h, w),
            other => {
                return Err(ShapeError::Mismatch {
                    what: "bitmap rank",
                    expected: "2 or 3".into(),
                    found: other.len().to_string(),
                }
                .into())
            }
        };
        Ok((0..m)
            .map(|i| {
                let bits = self.data[i * h * w..(i + 1) * h * w]
                    .iter()
                    .map(|&v| v == 1)
                    .collect();
                Grid::from_vec(h, w, bits).expect("dims validated")
            })
            .collect())
    }
}

/// A decoded CPT1 tensor of any supported dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(TensorF32),
    U8(TensorU8),
    U32(TensorU32),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::U8(_) => DType::U8,
            AnyTensor::U32(_) => DType::U32,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::U8(t) => t.shape(),
            AnyTensor::U32(t) => t.shape(),
        }
    }
}

impl From<TensorF32> for AnyTensor {
    fn from(t: TensorF32) -> Self {
        AnyTensor::F32(t)
    }
}

impl From<TensorU8> for AnyTensor {
    fn from(t: TensorU8) -> Self {
        AnyTensor::U8(t)
    }
}

impl From<TensorU32> for AnyTensor {
    fn from(t: TensorU32) -> Self {
        AnyTensor::U32(t)
    }
}

/// Typed extraction from [`AnyTensor`].
pub trait FromAny: Element {
    fn from_any(t: AnyTensor) -> Result<Tensor<Self>, FormatError>;
}

macro_rules! impl_from_any {
    ($ty:ty, $variant:ident) => {
        impl FromAny for $ty {
            fn from_any(t: AnyTensor) -> Result<Tensor<Self>, FormatError> {
                match t {
                    AnyTensor::$variant(inner) => Ok(inner),
                    other => Err(FormatError::DtypeMismatch {
                        expected: <$ty as Element>::DTYPE.name(),
                        found: other.dtype().name(),
                    }),
                }
            }
        }
    };
}

impl_from_any!(f32, F32);
impl_from_any!(u8, U8);
impl_from_any!(u32, U32);

pub fn encode<T: Element>(t: &Tensor<T>) -> Result<Vec<u8>, FormatError> {
    if t.shape.is_empty() {
        return Err(FormatError::EmptyShape);
    }
    if t.shape.len() > u8::MAX as usize {
        return Err(FormatError::TooManyDims(t.shape.len()));
    }
    let mut out = Vec::with_capacity(6 + 4 * t.shape.len() + T::DTYPE.size() * t.data.len());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.shape.len() as u8);
    for (index, &dim) in t.shape.iter().enumerate() {
        if dim == 0 {
            return Err(FormatError::ZeroDim { index });
        }
        let dim = u32::try_from(dim).map_err(|_| FormatError::DimOverflow { index, value: dim })?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for &v in &t.data {
        v.put_le(&mut out);
    }
    Ok(out)
}

fn take<'a>(
    bytes: &'a [u8],
    pos: &mut usize,
    n: usize,
    field: &'static str,
) -> Result<&'a [u8], FormatError> {
    let available = bytes.len().saturating_sub(*pos);
    if available < n {
        return Err(FormatError::TruncatedHeader {
            field,
            needed: n,
            available,
        });
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn decode_payload<T: Element>(shape: Vec<usize>, payload: &[u8]) -> Tensor<T> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::get_le).collect();
    Tensor { shape, data }
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor, FormatError> {
    let mut pos = 0;
    let magic = take(bytes, &mut pos, 4, "magic").map_err(|_| FormatError::BadMagic {
        found: bytes[..bytes.len().min(4)].to_vec(),
    })?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let dtype = DType::from_code(take(bytes, &mut pos, 1, "dtype")?[0])?;
    let ndim = take(bytes, &mut pos, 1, "ndim")?[0] as usize;
    if ndim == 0 {
        return Err(FormatError::EmptyShape);
    }
    let dims = take(bytes, &mut pos, 4 * ndim, "dims")?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if let Some(index) = shape.iter().position(|&d| d == 0) {
        return Err(FormatError::ZeroDim { index });
    }
    let expected = shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(FormatError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes {
            expected,
            found: payload.len(),
        });
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(shape, payload)),
        DType::U8 => AnyTensor::U8(decode_payload(shape, payload)),
        DType::U32 => AnyTensor::U32(decode_payload(shape, payload)),
    })
}

pub fn write_tensor<T: Element>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let bytes = encode(t).map_err(|source| TensorIoError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, bytes).map_err(|source| TensorIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyTensor, TensorIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes).map_err(|source| TensorIoError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a tensor and checks that it has dtype `T`.
pub fn read_tensor_as<T: FromAny>(path: impl AsRef<Path>) -> Result<Tensor<T>, TensorIoError> {
    let path = path.as_ref();
    T::from_any(read_tensor(path)?).map_err(|source| TensorIoError::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    write_tensor(&TensorU8::from(mask), path)
}

pub fn write_labels(labels: &LabelGrid, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    write_tensor(&TensorU32::from(labels), path)
}

/// Reads a `[H, W]` u32 tensor as a label grid.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelGrid, TensorIoError> {
    let path = path.as_ref();
    let t = read_tensor_as::<u32>(path)?;
    let fail = |source: FormatError| TensorIoError::Format {
        path: path.to_path_buf(),
        source,
    };
    match *t.shape() {
        [h, w] => Grid::from_vec(h, w, t.into_data()).map_err(|e| fail(e.into())),
        _ => Err(fail(
            ShapeError::Mismatch {
                what: "label grid rank",
                expected: "2".into(),
                found: t.shape().len().to_string(),
            }
            .into(),
        )),
    }
}
