//! PTEN: a small self-describing binary tensor format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PTEN" | version: u8 = 1 | dtype: u8 | ndim: u8 | dims: ndim x u64 | payload (row-major)
//! ```
//!
//! dtype codes: 1 = f64, 2 = f32, 3 = i32, 4 = u8.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    DepthMap, EmbeddingMap, ImageGrid, InstanceSegmentation, PixelPlaneParams,
    PlanarProbabilityMap, PlaneInstanceParams, SoftAssignment,
};

pub const MAGIC: &[u8; 4] = b"PTEN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64 = 1,
    F32 = 2,
    I32 = 3,
    U8 = 4,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F64),
            2 => Some(DType::F32),
            3 => Some(DType::I32),
            4 => Some(DType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 | DType::I32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F64(_) => DType::F64,
            TensorData::F32(_) => DType::F32,
            TensorData::I32(_) => DType::I32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A shaped, row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() || shape.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("unsupported rank {}", shape.len())));
        }
        if shape.contains(&0) {
            return Err(Error::invalid(format!(
                "zero-length dimension in shape {shape:?}"
            )));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} implies {count} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    pub fn i32(shape: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        Self::new(shape, TensorData::I32(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Values widened to f64; integer types convert exactly.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F64(v) => v.clone(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(7 + 8 * self.shape.len() + self.data.len() * self.dtype().size());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype() as u8);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parses an encoded tensor; `origin` only labels error messages.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fail = |message: String| Error::Format {
            path: origin.to_path_buf(),
            message,
        };
        if bytes.len() < 7 {
            return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        if bytes[4] != VERSION {
            return Err(fail(format!("unsupported version {}", bytes[4])));
        }
        let dtype = DType::from_code(bytes[5])
            .ok_or_else(|| fail(format!("unknown dtype code {}", bytes[5])))?;
        let ndim = bytes[6] as usize;
        if ndim == 0 {
            return Err(fail("rank 0 tensor".into()));
        }
        let header = 7 + 8 * ndim;
        if bytes.len() < header {
            return Err(fail("truncated dimension list".into()));
        }
        let mut shape = Vec::with_capacity(ndim);
        for chunk in bytes[7..header].chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().unwrap());
            let d = usize::try_from(d).map_err(|_| fail(format!("dimension {d} too large")))?;
            if d == 0 {
                return Err(fail("zero-length dimension".into()));
            }
            shape.push(d);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("element count overflows".into()))?;
        let payload = &bytes[header..];
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| fail("payload size overflows".into()))?;
        if payload.len() < expected {
            return Err(fail(format!(
                "truncated payload: expected {expected} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(fail(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data = match dtype {
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::I32 => TensorData::I32(
                payload
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { shape, data })
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Tensor::decode(&bytes, path)
}

// Conversions between tensors and the per-pixel maps.

fn grid_of(shape: &[usize], trailing: Option<usize>, what: &str) -> Result<ImageGrid> {
    match (shape, trailing) {
        ([h, w], None) => ImageGrid::new(*h, *w),
        ([h, w, _], Some(_)) => ImageGrid::new(*h, *w),
        _ => Err(Error::invalid(format!(
            "{what}: unexpected shape {shape:?}"
        ))),
    }
}

impl From<&EmbeddingMap> for Tensor {
    fn from(map: &EmbeddingMap) -> Self {
        let g = map.grid();
        Tensor::f64(
            vec![g.height(), g.width(), map.dim()],
            map.values().to_vec(),
        )
        .unwrap()
    }
}

impl TryFrom<&Tensor> for EmbeddingMap {
    type Error = Error;

    /// Accepts `H x W x d`, or `H x W` as `d = 1`.
    fn try_from(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[h, w] => EmbeddingMap::new(ImageGrid::new(h, w)?, 1, t.to_f64()),
            &[h, w, d] => EmbeddingMap::new(ImageGrid::new(h, w)?, d, t.to_f64()),
            s => Err(Error::invalid(format!(
                "embeddings: unexpected shape {s:?}"
            ))),
        }
    }
}

impl From<&PlanarProbabilityMap> for Tensor {
    fn from(map: &PlanarProbabilityMap) -> Self {
        let g = map.grid();
        Tensor::f64(vec![g.height(), g.width()], map.probs().to_vec()).unwrap()
    }
}

impl TryFrom<&Tensor> for PlanarProbabilityMap {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        let grid = grid_of(t.shape(), None, "probabilities")?;
        PlanarProbabilityMap::new(grid, t.to_f64())
    }
}

impl From<&InstanceSegmentation> for Tensor {
    fn from(seg: &InstanceSegmentation) -> Self {
        let g = seg.grid();
        Tensor::i32(
            vec![g.height(), g.width()],
            seg.labels().iter().map(|&l| l as i32).collect(),
        )
        .unwrap()
    }
}

impl TryFrom<&Tensor> for InstanceSegmentation {
    type Error = Error;

    /// Labels must be integral and non-negative; they are renumbered to a
    /// contiguous range in order of first appearance.
    fn try_from(t: &Tensor) -> Result<Self> {
        let grid = grid_of(t.shape(), None, "labels")?;
        let raw = t
            .to_f64()
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::invalid(format!("labels: invalid label value {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        match InstanceSegmentation::new(grid, raw.clone()) {
            Ok(seg) => Ok(seg),
            Err(_) => InstanceSegmentation::from_raw_labels(grid, &raw),
        }
    }
}

impl From<&DepthMap> for Tensor {
    /// Invalid pixels are written as 0.
    fn from(map: &DepthMap) -> Self {
        let g = map.grid();
        let data = map
            .depth()
            .iter()
            .zip(map.valid())
            .map(|(&z, &v)| if v { z } else { 0.0 })
            .collect();
        Tensor::f64(vec![g.height(), g.width()], data).unwrap()
    }
}

impl TryFrom<&Tensor> for DepthMap {
    type Error = Error;

    /// Non-positive or non-finite entries are invalid pixels.
    fn try_from(t: &Tensor) -> Result<Self> {
        let grid = grid_of(t.shape(), None, "depth")?;
        DepthMap::from_depths(grid, t.to_f64())
    }
}

impl From<&PixelPlaneParams> for Tensor {
    fn from(map: &PixelPlaneParams) -> Self {
        let g = map.grid();
        Tensor::f64(
            vec![g.height(), g.width(), 3],
            map.params().iter().flatten().copied().collect(),
        )
        .unwrap()
    }
}

impl TryFrom<&Tensor> for PixelPlaneParams {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        let grid = grid_of(t.shape(), Some(3), "pixel params")?;
        if t.shape()[2] != 3 {
            return Err(Error::invalid("pixel params: last dimension must be 3"));
        }
        PixelPlaneParams::new(grid, chunk3(&t.to_f64()))
    }
}

impl From<&PlaneInstanceParams> for Tensor {
    fn from(p: &PlaneInstanceParams) -> Self {
        Tensor::f64(
            vec![p.clusters().max(1), 3],
            if p.clusters() == 0 {
                vec![0.0; 3]
            } else {
                p.params().iter().flatten().copied().collect()
            },
        )
        .unwrap()
    }
}

impl TryFrom<&Tensor> for PlaneInstanceParams {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[_, 3] => PlaneInstanceParams::new(chunk3(&t.to_f64())),
            s => Err(Error::invalid(format!(
                "instance params: unexpected shape {s:?}"
            ))),
        }
    }
}

impl From<&SoftAssignment> for Tensor {
    fn from(s: &SoftAssignment) -> Self {
        let g = s.grid();
        Tensor::f64(
            vec![g.height(), g.width(), s.clusters()],
            s.weights().to_vec(),
        )
        .unwrap()
    }
}

impl TryFrom<&Tensor> for SoftAssignment {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[h, w, c] => SoftAssignment::new(ImageGrid::new(h, w)?, c, t.to_f64()),
            s => Err(Error::invalid(format!(
                "assignment: unexpected shape {s:?}"
            ))),
        }
    }
}

pub(crate) fn chunk3(values: &[f64]) -> Vec<[f64; 3]> {
    values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}
