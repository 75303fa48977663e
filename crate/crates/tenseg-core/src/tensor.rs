//! Dense K-mode tensors with unfolding, folding, and mode products.
//!
//! Storage is a flat `Vec<f64>` with mode 0 varying fastest, i.e. the
//! generalization of column-major layout. Under this layout `data()` is
//! exactly the vec operator, and `vec(t ×_k M) = (I_after ⊗ M ⊗ I_before) vec(t)`.

use nalgebra::DMatrix;

use crate::error::{Result, TensegError};

/// Dense tensor of order K ≥ 1 with strictly positive extents and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from extents and flat data in vec order (mode 0 fastest).
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(TensegError::invalid_argument("tensor order must be at least 1"));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(TensegError::invalid_argument(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensegError::dimension_mismatch(format!(
                "shape {shape:?} implies {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensegError::invalid_argument("tensor values must be finite"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    /// Fills entry by entry from a function of the multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut t = Tensor::new(shape, vec![0.0; len])?;
        let mut idx = vec![0usize; t.order()];
        for pos in 0..len {
            t.data[pos] = f(&idx);
            t.increment(&mut idx);
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(TensegError::invalid_argument("tensor values must be finite"));
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of modes K.
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat values in vec order; identical to the vec operator.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Stride of `mode` in the flat layout: product of extents of lower modes.
    pub(crate) fn stride(&self, mode: usize) -> usize {
        self.shape[..mode].iter().product()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order());
        let mut pos = 0;
        let mut stride = 1;
        for (i, &n) in idx.iter().zip(&self.shape) {
            debug_assert!(*i < n);
            pos += i * stride;
            stride *= n;
        }
        pos
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    /// Advances a multi-index by one in vec order (mode 0 fastest).
    fn increment(&self, idx: &mut [usize]) {
        for (i, &n) in idx.iter_mut().zip(&self.shape) {
            *i += 1;
            if *i < n {
                return;
            }
            *i = 0;
        }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(TensegError::invalid_argument(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    /// Mode-`mode` unfolding: an `n_mode × (len / n_mode)` matrix whose columns
    /// enumerate the remaining modes with the lowest mode varying fastest.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.check_mode(mode)?;
        let nk = self.shape[mode];
        let cols = self.len() / nk;
        if mode == 0 {
            // Mode 0 is the fastest-varying axis, so the flat data is already
            // the column-major unfolding.
            return Ok(DMatrix::from_column_slice(nk, cols, &self.data));
        }
        let low = self.stride(mode); // product of extents below `mode`
        let high = self.len() / (low * nk); // product of extents above `mode`
        let mut out = DMatrix::<f64>::zeros(nk, cols);
        let dst = out.as_mut_slice();
        for h in 0..high {
            for r in 0..nk {
                let src_base = h * low * nk + r * low;
                let dst_base = r + nk * h * low;
                for l in 0..low {
                    dst[dst_base + nk * l] = self.data[src_base + l];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::unfold`]: repacks an unfolding into a tensor of `shape`.
    pub fn fold(mat: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<Tensor> {
        if mode >= shape.len() {
            return Err(TensegError::invalid_argument(format!(
                "mode {mode} out of range for order-{} shape",
                shape.len()
            )));
        }
        let len: usize = shape.iter().product();
        let nk = shape[mode];
        if mat.nrows() != nk || mat.ncols() * nk != len {
            return Err(TensegError::dimension_mismatch(format!(
                "cannot fold {}x{} matrix into shape {shape:?} at mode {mode}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let mut t = Tensor::zeros(shape.to_vec())?;
        let src = mat.as_slice();
        if mode == 0 {
            t.data.copy_from_slice(src);
            return Ok(t);
        }
        let low = t.stride(mode);
        let high = len / (low * nk);
        for h in 0..high {
            for r in 0..nk {
                let dst_base = h * low * nk + r * low;
                let src_base = r + nk * h * low;
                for l in 0..low {
                    t.data[dst_base + l] = src[src_base + nk * l];
                }
            }
        }
        Ok(t)
    }

    /// Mode product `t ×_mode m`: contracts the mode with the columns of `m`,
    /// so `unfold(t ×_mode m, mode) = m · unfold(t, mode)`.
    pub fn mode_product(&self, m: &DMatrix<f64>, mode: usize) -> Result<Tensor> {
        self.check_mode(mode)?;
        if m.ncols() != self.shape[mode] {
            return Err(TensegError::dimension_mismatch(format!(
                "matrix has {} columns but mode {mode} extent is {}",
                m.ncols(),
                self.shape[mode]
            )));
        }
        let unf = self.unfold(mode)?;
        let prod = m * unf;
        let mut shape = self.shape.clone();
        shape[mode] = m.nrows();
        Tensor::fold(&prod, mode, &shape)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise difference; shapes must match.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensegError::dimension_mismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Rank-1 tensor from one vector per mode: entry = product of vector entries.
pub fn rank1_outer(vectors: &[&[f64]]) -> Result<Tensor> {
    if vectors.is_empty() {
        return Err(TensegError::invalid_argument("at least one vector required"));
    }
    if vectors.iter().any(|v| v.is_empty()) {
        return Err(TensegError::invalid_argument("vectors must be non-empty"));
    }
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    // Grow the flat data one mode at a time; mode 0 stays fastest.
    let mut data = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &x in *v {
            next.extend(data.iter().map(|&d| d * x));
        }
        data = next;
    }
    Tensor::new(shape, data)
}
