//! Low-level dense kernels, each in a sequential and a rayon variant.
//!
//! The public tensor API dispatches between the two based on the `parallel`
//! feature and the problem size; the benches compare them head to head.
//! Accumulation is always in `f64`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work threshold (in multiply-adds) below which the parallel dispatchers
/// fall back to the sequential kernel.
pub const PAR_FLOP_THRESHOLD: usize = 1 << 16;

/// `out[m×n] = a[m×k] · b[k×n]`, all row-major.
pub fn matmul_seq(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (i, out_row) in out.chunks_exact_mut(n).enumerate() {
        matmul_row(&a[i * k..(i + 1) * k], b, n, out_row);
    }
}

/// Parallel variant of [`matmul_seq`], split over output rows.
#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_exact_mut(n)
        .enumerate()
        .for_each(|(i, out_row)| matmul_row(&a[i * k..(i + 1) * k], b, n, out_row));
}

#[inline]
fn matmul_row(a_row: &[f64], b: &[f64], n: usize, out_row: &mut [f64]) {
    out_row.fill(0.0);
    for (av, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
        if *av == 0.0 {
            continue;
        }
        for (o, bv) in out_row.iter_mut().zip(b_row) {
            *o += av * bv;
        }
    }
}

/// Dispatching matmul used by the tensor API.
pub(crate) fn matmul_dispatch(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        return matmul_par(a, b, m, k, n, out);
    }
    matmul_seq(a, b, m, k, n, out)
}

/// Valid (no padding, stride 1) cross-correlation of a `(co, ci, k)` kernel
/// with a `(ci, frames)` signal into `(co, frames - k + 1)`.
pub fn conv1d_seq(w: &[f64], x: &[f64], co: usize, ci: usize, k: usize, frames: usize, out: &mut [f64]) {
    let out_frames = frames - k + 1;
    debug_assert_eq!(out.len(), co * out_frames);
    for (i, out_row) in out.chunks_exact_mut(out_frames).enumerate() {
        conv1d_row(&w[i * ci * k..(i + 1) * ci * k], x, ci, k, frames, out_row);
    }
}

/// Parallel variant of [`conv1d_seq`], split over output channels.
#[cfg(feature = "parallel")]
pub fn conv1d_par(w: &[f64], x: &[f64], co: usize, ci: usize, k: usize, frames: usize, out: &mut [f64]) {
    let out_frames = frames - k + 1;
    debug_assert_eq!(out.len(), co * out_frames);
    out.par_chunks_exact_mut(out_frames)
        .enumerate()
        .for_each(|(i, out_row)| conv1d_row(&w[i * ci * k..(i + 1) * ci * k], x, ci, k, frames, out_row));
}

#[inline]
fn conv1d_row(w_i: &[f64], x: &[f64], ci: usize, k: usize, frames: usize, out_row: &mut [f64]) {
    for (tau, o) in out_row.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for j in 0..ci {
            let wj = &w_i[j * k..(j + 1) * k];
            let xj = &x[j * frames + tau..j * frames + tau + k];
            for (wv, xv) in wj.iter().zip(xj) {
                acc += wv * xv;
            }
        }
        *o = acc;
    }
}

pub(crate) fn conv1d_dispatch(w: &[f64], x: &[f64], co: usize, ci: usize, k: usize, frames: usize, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if co * ci * k * (frames - k + 1) >= PAR_FLOP_THRESHOLD && co > 1 {
        return conv1d_par(w, x, co, ci, k, frames, out);
    }
    conv1d_seq(w, x, co, ci, k, frames, out)
}

/// Sum of squares of an `f32` slice, accumulated in `f64`.
pub fn sum_sq_seq(data: &[f32]) -> f64 {
    data.iter().map(|&v| {
        let v = v as f64;
        v * v
    }).sum()
}

/// Parallel variant of [`sum_sq_seq`].
#[cfg(feature = "parallel")]
pub fn sum_sq_par(data: &[f32]) -> f64 {
    data.par_chunks(1 << 14).map(sum_sq_seq).sum()
}

pub(crate) fn sum_sq_dispatch(data: &[f32]) -> f64 {
    #[cfg(feature = "parallel")]
    if data.len() >= PAR_FLOP_THRESHOLD {
        return sum_sq_par(data);
    }
    sum_sq_seq(data)
}

/// Sum of squared differences of two equal-length `f32` slices.
pub fn diff_sq_seq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[cfg(feature = "parallel")]
pub fn diff_sq_par(a: &[f32], b: &[f32]) -> f64 {
    a.par_chunks(1 << 14)
        .zip(b.par_chunks(1 << 14))
        .map(|(ca, cb)| diff_sq_seq(ca, cb))
        .sum()
}

pub(crate) fn diff_sq_dispatch(a: &[f32], b: &[f32]) -> f64 {
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_FLOP_THRESHOLD {
        return diff_sq_par(a, b);
    }
    diff_sq_seq(a, b)
}
