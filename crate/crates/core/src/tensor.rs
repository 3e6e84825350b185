//! Dense order-K tensors stored in vec order (first index fastest).
//!
//! Modes are 0-based throughout the library API. The mode-k unfolding puts
//! mode k on the rows and the remaining modes on the columns in increasing
//! order, with earlier modes varying faster.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// Column-major dense real matrix.
pub type DenseMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::InvalidDims("tensor order must be at least 1".into()));
    }
    if let Some(k) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidDims(format!("dimension of mode {k} is zero")));
    }
    Ok(dims.iter().product())
}

/// Splits `dims` around `mode` into (product of earlier dims, product of later dims).
fn split_at_mode(dims: &[usize], mode: usize) -> (usize, usize) {
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    (left, right)
}

impl DenseTensor {
    /// Builds a tensor, validating the shape and rejecting non-finite entries.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} values supplied for dims {:?} (expected {n})",
                data.len(),
                dims
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        })
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.data.iter_mut().for_each(|v| *v = value);
        Ok(t)
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in vec order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for (i, d) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Self::new(dims.to_vec(), data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values in storage (vec) order.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        let mut stride = 1;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin += i * stride;
            stride *= d;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    /// Elementwise map; the result is not re-validated for finiteness.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Mode-`mode` unfolding: a `d_mode x prod(other dims)` matrix.
    pub fn unfold(&self, mode: usize) -> Result<DenseMatrix> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        let (left, right) = split_at_mode(&self.dims, mode);
        let cols = left * right;
        let mut out = DenseMatrix::zeros(d, cols);
        let buf = out.as_mut_slice();
        for r in 0..right {
            for i in 0..d {
                let src = left * (i + d * r);
                for l in 0..left {
                    buf[i + d * (l + left * r)] = self.data[src + l];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &DenseMatrix, mode: usize, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if mode >= dims.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: dims.len(),
            });
        }
        let d = dims[mode];
        let (left, right) = split_at_mode(dims, mode);
        if m.nrows() != d || m.ncols() != left * right {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold {}x{} matrix along mode {mode} into dims {:?}",
                m.nrows(),
                m.ncols(),
                dims
            )));
        }
        let buf = m.as_slice();
        let mut data = vec![0.0; n];
        for r in 0..right {
            for i in 0..d {
                let dst = left * (i + d * r);
                for l in 0..left {
                    data[dst + l] = buf[i + d * (l + left * r)];
                }
            }
        }
        Self::new(dims.to_vec(), data)
    }

    /// Mode-`mode` product `t x_mode m`; the mode's extent becomes `m.nrows()`.
    pub fn ttm(&self, m: &DenseMatrix, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        if m.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "mode-{mode} product needs {d} matrix columns, got {}",
                m.ncols()
            )));
        }
        let rows = m.nrows();
        let (left, right) = split_at_mode(&self.dims, mode);
        let mut dims = self.dims.clone();
        dims[mode] = rows;
        let mut data = vec![0.0; left * rows * right];
        let mt = m.transpose();
        for r in 0..right {
            let src = &self.data[left * d * r..left * d * (r + 1)];
            let slab = DMatrixView::from_slice(src, left, d);
            let prod = slab * &mt;
            data[left * rows * r..left * rows * (r + 1)].copy_from_slice(prod.as_slice());
        }
        Ok(Self { dims, data })
    }

    /// Sequential mode products over the listed `(matrix, mode)` pairs.
    /// Modes not listed are left untouched, which is how identity features
    /// are represented without materializing the identity.
    pub fn multilinear(&self, mats: &[(&DenseMatrix, usize)]) -> Result<Self> {
        let mut seen = vec![false; self.order()];
        for &(_, mode) in mats {
            self.check_mode(mode)?;
            if seen[mode] {
                return Err(Error::DuplicateMode(mode));
            }
            seen[mode] = true;
        }
        let mut out = self.clone();
        for &(m, mode) in mats {
            out = out.ttm(m, mode)?;
        }
        Ok(out)
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}
