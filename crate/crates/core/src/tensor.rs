//! Dense order-N tensors and the multilinear primitives the decomposition
//! engines are built from.
//!
//! Storage is row-major `f32` (last index fastest) with all accumulation in
//! `f64`. Mode-n unfolding enumerates the remaining modes in increasing index
//! order with the last one fastest, so `fold(unfold(t, m), m, shape)` is a
//! bit-exact round trip.

use crate::error::{Error, Result};
use crate::kernels;

/// Dense real tensor of order ≥ 1.
///
/// Invariants enforced on construction: every dimension ≥ 1, the flat data
/// length equals the product of the dimensions, and all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self { shape, data })
    }

    /// Construct without the finite/length scan; for internal results whose
    /// inputs were already validated.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self { shape, data: vec![0.0; len] })
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f32) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment_index(&mut idx, &shape);
        }
        DenseTensor::new(shape, data)
    }

    /// `n × n` identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { shape: vec![n, n], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Rows of an order-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.order(), 2);
        self.shape[0]
    }

    /// Columns of an order-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.order(), 2);
        self.shape[1]
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[flat_index(index, &self.shape)]
    }

    /// Reinterpret the flat data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} elements into {:?}",
                self.data.len(),
                shape
            )));
        }
        Ok(Self { shape, data: self.data })
    }

    /// Transpose of an order-2 tensor.
    pub fn transposed(&self) -> Result<Self> {
        if self.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "transpose requires an order-2 tensor, got order {}",
                self.order()
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self { shape: vec![c, r], data: out })
    }

    /// Mode-n unfolding: shape `(I_mode, Π_{n≠mode} I_n)`, columns cycling the
    /// remaining modes in increasing order, last fastest.
    pub fn unfold(&self, mode: usize) -> Result<DenseTensor> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange { mode, order: self.order() });
        }
        let i_m = self.shape[mode];
        let pre: usize = self.shape[..mode].iter().product();
        let post: usize = self.shape[mode + 1..].iter().product();
        let cols = pre * post;
        let mut out = vec![0.0f32; i_m * cols];
        for p in 0..pre {
            for i in 0..i_m {
                let src = (p * i_m + i) * post;
                let dst = i * cols + p * post;
                out[dst..dst + post].copy_from_slice(&self.data[src..src + post]);
            }
        }
        Ok(DenseTensor::from_parts(vec![i_m, cols], out))
    }

    /// Exact inverse of [`DenseTensor::unfold`].
    pub fn fold(&self, mode: usize, target_shape: &[usize]) -> Result<DenseTensor> {
        validate_shape(target_shape)?;
        if self.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "fold expects an order-2 tensor, got order {}",
                self.order()
            )));
        }
        if mode >= target_shape.len() {
            return Err(Error::ModeOutOfRange { mode, order: target_shape.len() });
        }
        let i_m = target_shape[mode];
        let pre: usize = target_shape[..mode].iter().product();
        let post: usize = target_shape[mode + 1..].iter().product();
        if self.shape[0] != i_m || self.shape[1] != pre * post {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold a {:?} matrix at mode {} into {:?}",
                self.shape, mode, target_shape
            )));
        }
        let cols = pre * post;
        let mut out = vec![0.0f32; i_m * cols];
        for p in 0..pre {
            for i in 0..i_m {
                let src = i * cols + p * post;
                let dst = (p * i_m + i) * post;
                out[dst..dst + post].copy_from_slice(&self.data[src..src + post]);
            }
        }
        Ok(DenseTensor::from_parts(target_shape.to_vec(), out))
    }

    /// Mode-n product `t ×_mode m`: contracts the tensor's `mode` dimension
    /// with the columns of `m`, replacing it by `rows(m)`.
    pub fn mode_n_product(&self, m: &DenseTensor, mode: usize) -> Result<DenseTensor> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange { mode, order: self.order() });
        }
        if m.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "mode-n product requires an order-2 factor, got order {}",
                m.order()
            )));
        }
        if m.cols() != self.shape[mode] {
            return Err(Error::ShapeMismatch(format!(
                "factor has {} columns but mode {} has size {}",
                m.cols(),
                mode,
                self.shape[mode]
            )));
        }
        let unfolded = self.unfold(mode)?;
        let product = m.matmul(&unfolded)?;
        let mut new_shape = self.shape.clone();
        new_shape[mode] = m.rows();
        product.fold(mode, &new_shape)
    }

    /// Matrix product of two order-2 tensors, `f64` accumulation.
    pub fn matmul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.order() != 2 || other.order() != 2 {
            return Err(Error::ShapeMismatch("matmul requires order-2 tensors".into()));
        }
        if self.cols() != other.rows() {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let a: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = other.data.iter().map(|&v| v as f64).collect();
        let mut out = vec![0.0f64; m * n];
        kernels::matmul_dispatch(&a, &b, m, k, n, &mut out);
        Ok(DenseTensor::from_parts(
            vec![m, n],
            out.into_iter().map(|v| v as f32).collect(),
        ))
    }

    /// Frobenius norm, accumulated in `f64`.
    pub fn frobenius_norm(&self) -> f64 {
        kernels::sum_sq_dispatch(&self.data).sqrt()
    }
}

/// `‖original − approx‖_F / ‖original‖_F`.
pub fn relative_error(original: &DenseTensor, approx: &DenseTensor) -> Result<f64> {
    if original.shape() != approx.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {:?} with {:?}",
            original.shape(),
            approx.shape()
        )));
    }
    let denom = original.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(kernels::diff_sq_dispatch(original.data(), approx.data()).sqrt() / denom)
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("tensor order must be at least 1".into()));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("zero dimension in shape {shape:?}")));
    }
    Ok(())
}

pub(crate) fn flat_index(index: &[usize], shape: &[usize]) -> usize {
    debug_assert_eq!(index.len(), shape.len());
    let mut flat = 0;
    for (i, d) in index.iter().zip(shape) {
        debug_assert!(i < d);
        flat = flat * d + i;
    }
    flat
}

/// Advance a row-major multi-index (last position fastest).
pub(crate) fn increment_index(index: &mut [usize], shape: &[usize]) {
    for pos in (0..index.len()).rev() {
        index[pos] += 1;
        if index[pos] < shape[pos] {
            return;
        }
        index[pos] = 0;
    }
}
