//! Dense row-major `(F, C, H, W)` tensor.

use rand::Rng;

use crate::error::{Error, Result};

/// Row-major tensor over frames, channels, rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape("tensor data", &[expected], &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    /// Uniform samples in `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(dims: [usize; 4], scale: f64, rng: &mut R) -> Self {
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, f: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.dims;
        ((f * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn at(&self, f: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(f, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, f: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        let i = self.index(f, c, y, x);
        &mut self.data[i]
    }

    /// Contiguous `H*W` plane of one frame/channel.
    pub fn plane(&self, f: usize, c: usize) -> &[f64] {
        let n = self.dims[2] * self.dims[3];
        let start = self.index(f, c, 0, 0);
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, f: usize, c: usize) -> &mut [f64] {
        let n = self.dims[2] * self.dims[3];
        let start = self.index(f, c, 0, 0);
        &mut self.data[start..start + n]
    }

    pub fn ensure_dims(&self, name: &str, dims: [usize; 4]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(name, &dims, &self.dims));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        other.ensure_dims("addend", self.dims)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor4 {
            dims: self.dims,
            data,
        })
    }

    pub fn scale(&self, k: f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// Copies channels `[start, start + count)`.
    pub fn channel_slice(&self, start: usize, count: usize) -> Tensor4 {
        let [f, _, h, w] = self.dims;
        let mut out = Tensor4::zeros([f, count, h, w]);
        for fi in 0..f {
            for c in 0..count {
                out.plane_mut(fi, c).copy_from_slice(self.plane(fi, start + c));
            }
        }
        out
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
        let first = parts.first().expect("at least one tensor");
        let [f, _, h, w] = first.dims;
        for p in parts {
            if p.dims[0] != f || p.dims[2] != h || p.dims[3] != w {
                return Err(Error::shape(
                    "channel concat",
                    &[f, p.dims[1], h, w],
                    &p.dims,
                ));
            }
        }
        let total: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut out = Tensor4::zeros([f, total, h, w]);
        for fi in 0..f {
            let mut dst = 0;
            for p in parts {
                for c in 0..p.dims[1] {
                    out.plane_mut(fi, dst).copy_from_slice(p.plane(fi, c));
                    dst += 1;
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Array of arbitrary rank, used for weights and container payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NdArray {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape("array data", &[expected], &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ensure_dims(&self, name: &str, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(name, dims, &self.dims));
        }
        Ok(())
    }
}

impl From<Tensor4> for NdArray {
    fn from(t: Tensor4) -> Self {
        NdArray {
            dims: t.dims.to_vec(),
            data: t.data,
        }
    }
}

impl TryFrom<NdArray> for Tensor4 {
    type Error = Error;

    fn try_from(a: NdArray) -> Result<Self> {
        let dims: [usize; 4] = a
            .dims
            .as_slice()
            .try_into()
            .map_err(|_| Error::shape("rank-4 tensor", &[0, 0, 0, 0], &a.dims))?;
        Tensor4::from_vec(dims, a.data)
    }
}
