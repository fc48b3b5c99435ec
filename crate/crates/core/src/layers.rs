//! Inference operators for factored weights, dense oracles, and MAC
//! accounting.
//!
//! A factored linear layer applies as `y = a·(b·x)` instead of rebuilding the
//! dense matrix. A Tucker-factored convolution runs as a pipeline:
//!
//! 1. pointwise channel map `z = U²ᵀ·x` (J → S channels),
//! 2. kernel-basis filter `z̃[s,t,τ] = Σ_k U³[k,t]·z[s,τ+k]`,
//! 3. core contraction `out₂[r,τ] = Σ_{s,t} core[r,s,t]·z̃[s,t,τ]`,
//! 4. pointwise map `out = U¹·out₂` (R → I channels).
//!
//! The reported factored MAC figure counts the two channel maps and the core
//! contraction per frame, `J·S + S·R·T + R·I`, the terms that mirror the
//! parameter formula. The kernel-basis filter (`S·T·K` per frame, small next
//! to the channel terms) is tracked separately in [`MacBreakdown`].
//!
//! Convolution arithmetic is valid-mode correlation: no padding, stride 1,
//! no kernel flip. 2-D kernels run the same pipeline with both spatial modes
//! filtered into the kernel basis. Tensor-train weights get no factored
//! apply: the dense tensor must be rebuilt first, which is exactly why their
//! MAC report carries a no-speedup flag.

use crate::decompose::{CpFactors, SvdFactors, TuckerFactors};
use crate::error::{Error, Result};
use crate::kernels;
use crate::planner::{Method, RankPlan};
use crate::tensor::DenseTensor;

/// A `(channels × frames)` activation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: DenseTensor,
}

impl Signal {
    pub fn new(data: DenseTensor) -> Result<Self> {
        if data.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "signal must be order 2 (channels × frames), got {:?}",
                data.shape()
            )));
        }
        Ok(Self { data })
    }

    pub fn from_vec(channels: usize, frames: usize, values: Vec<f32>) -> Result<Self> {
        Ok(Self {
            data: DenseTensor::new(vec![channels, frames], values)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }
}

/// Dense vs factored multiply-accumulate counts for one tensor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MacCount {
    pub dense_macs: u64,
    pub factored_macs: u64,
    pub ratio: f64,
    /// Set for tensor-train plans: inference must rebuild the dense tensor,
    /// so the factored count exceeds the dense one.
    pub no_speedup: bool,
}

/// Stage-by-stage MAC totals from an instrumented factored convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacBreakdown {
    /// Input channel map, `J·S` per input frame.
    pub pointwise_in: u64,
    /// Kernel-basis filter, `S·T·K` per output frame (excluded from the
    /// principal figure).
    pub kernel_filter: u64,
    /// Core contraction, `R·S·T` per output frame.
    pub core_contraction: u64,
    /// Output channel map, `R·I` per output frame.
    pub pointwise_out: u64,
    pub frames_in: u64,
    pub frames_out: u64,
}

impl MacBreakdown {
    /// Per-frame count of the principal stages: `J·S + S·R·T + R·I`.
    pub fn principal_macs_per_frame(&self) -> u64 {
        debug_assert_eq!(self.pointwise_in % self.frames_in, 0);
        debug_assert_eq!(self.core_contraction % self.frames_out, 0);
        debug_assert_eq!(self.pointwise_out % self.frames_out, 0);
        self.pointwise_in / self.frames_in
            + self.core_contraction / self.frames_out
            + self.pointwise_out / self.frames_out
    }

    pub fn total_macs(&self) -> u64 {
        self.pointwise_in + self.kernel_filter + self.core_contraction + self.pointwise_out
    }
}

/// `y = a·(b·x)` without forming `a·b`. `R(I+J)` MACs.
pub fn apply_factored_linear(f: &SvdFactors, x: &[f32]) -> Result<Vec<f32>> {
    let (i, r, j) = (f.a.rows(), f.a.cols(), f.b.cols());
    if x.len() != j {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, factored linear wants {}",
            x.len(),
            j
        )));
    }
    let mut mid = vec![0.0f64; r];
    let b = f.b.data();
    for (row, slot) in mid.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for (col, &xv) in x.iter().enumerate() {
            acc += b[row * j + col] as f64 * xv as f64;
        }
        *slot = acc;
    }
    let a = f.a.data();
    let mut out = vec![0.0f32; i];
    for (row, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for (col, &mv) in mid.iter().enumerate() {
            acc += a[row * r + col] as f64 * mv;
        }
        *slot = acc as f32;
    }
    Ok(out)
}

/// Valid cross-correlation oracle: `out[i,τ] = Σ_{j,k} w[i,j,k]·x[j,τ+k]`.
pub fn dense_conv1d(w: &DenseTensor, x: &Signal) -> Result<Signal> {
    if w.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conv1d kernel must be order 3, got {:?}",
            w.shape()
        )));
    }
    let (co, ci, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if ci != x.channels() {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {} channels, signal has {}",
            ci,
            x.channels()
        )));
    }
    let frames = x.frames();
    if frames < k {
        return Err(Error::ShapeMismatch(format!(
            "signal length {frames} shorter than kernel {k}"
        )));
    }
    let w64: Vec<f64> = w.data().iter().map(|&v| v as f64).collect();
    let x64: Vec<f64> = x.data().data().iter().map(|&v| v as f64).collect();
    let out_frames = frames - k + 1;
    let mut out = vec![0.0f64; co * out_frames];
    kernels::conv1d_dispatch(&w64, &x64, co, ci, k, frames, &mut out);
    Signal::new(DenseTensor::from_parts(
        vec![co, out_frames],
        out.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Factored 1-D convolution through the four-stage pipeline.
pub fn apply_factored_conv1d(f: &TuckerFactors, x: &Signal) -> Result<Signal> {
    Ok(apply_factored_conv1d_counted(f, x)?.0)
}

/// As [`apply_factored_conv1d`], returning instrumented per-stage MAC totals.
pub fn apply_factored_conv1d_counted(
    f: &TuckerFactors,
    x: &Signal,
) -> Result<(Signal, MacBreakdown)> {
    if f.core.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "factored conv1d wants an order-3 core, got {:?}",
            f.core.shape()
        )));
    }
    let (i_dim, j_dim, k_dim) = (
        f.factors[0].rows(),
        f.factors[1].rows(),
        f.factors[2].rows(),
    );
    let (r, s, t) = (f.core.shape()[0], f.core.shape()[1], f.core.shape()[2]);
    if j_dim != x.channels() {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {} channels, signal has {}",
            j_dim,
            x.channels()
        )));
    }
    let frames = x.frames();
    if frames < k_dim {
        return Err(Error::ShapeMismatch(format!(
            "signal length {frames} shorter than kernel {k_dim}"
        )));
    }
    let out_frames = frames - k_dim + 1;

    // stage 1: z = U²ᵀ·x  (S × L)
    let u2 = f.factors[1].data();
    let x_data = x.data().data();
    let mut z = vec![0.0f64; s * frames];
    for si in 0..s {
        for tau in 0..frames {
            let mut acc = 0.0f64;
            for j in 0..j_dim {
                acc += u2[j * s + si] as f64 * x_data[j * frames + tau] as f64;
            }
            z[si * frames + tau] = acc;
        }
    }
    let pointwise_in = (s * j_dim * frames) as u64;

    // stage 2: kernel-basis filter z̃[t,s,τ] = Σ_k U³[k,t]·z[s,τ+k]
    let u3 = f.factors[2].data();
    let mut zt = vec![0.0f64; t * s * out_frames];
    for ti in 0..t {
        for si in 0..s {
            for tau in 0..out_frames {
                let mut acc = 0.0f64;
                for k in 0..k_dim {
                    acc += u3[k * t + ti] as f64 * z[si * frames + tau + k];
                }
                zt[(ti * s + si) * out_frames + tau] = acc;
            }
        }
    }
    let kernel_filter = (s * t * k_dim * out_frames) as u64;

    // stage 3: core contraction out₂[r,τ] = Σ_{s,t} core[r,s,t]·z̃[t,s,τ]
    let core = f.core.data();
    let mut mid = vec![0.0f64; r * out_frames];
    for ri in 0..r {
        for tau in 0..out_frames {
            let mut acc = 0.0f64;
            for si in 0..s {
                for ti in 0..t {
                    acc += core[(ri * s + si) * t + ti] as f64
                        * zt[(ti * s + si) * out_frames + tau];
                }
            }
            mid[ri * out_frames + tau] = acc;
        }
    }
    let core_contraction = (r * s * t * out_frames) as u64;

    // stage 4: out = U¹·out₂  (I × out_frames)
    let u1 = f.factors[0].data();
    let mut out = vec![0.0f32; i_dim * out_frames];
    for ii in 0..i_dim {
        for tau in 0..out_frames {
            let mut acc = 0.0f64;
            for ri in 0..r {
                acc += u1[ii * r + ri] as f64 * mid[ri * out_frames + tau];
            }
            out[ii * out_frames + tau] = acc as f32;
        }
    }
    let pointwise_out = (i_dim * r * out_frames) as u64;

    let signal = Signal::new(DenseTensor::from_parts(vec![i_dim, out_frames], out))?;
    Ok((
        signal,
        MacBreakdown {
            pointwise_in,
            kernel_filter,
            core_contraction,
            pointwise_out,
            frames_in: frames as u64,
            frames_out: out_frames as u64,
        },
    ))
}

/// Factored 1-D convolution for CP weights: the same pipeline with a
/// diagonal core, `J·R + R·K + R·I` MACs per frame.
pub fn apply_cp_conv1d(f: &CpFactors, x: &Signal) -> Result<Signal> {
    if f.factors.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "cp conv1d wants 3 factor matrices, got {}",
            f.factors.len()
        )));
    }
    let (i_dim, j_dim, k_dim) = (
        f.factors[0].rows(),
        f.factors[1].rows(),
        f.factors[2].rows(),
    );
    let r = f.rank();
    if j_dim != x.channels() {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {} channels, signal has {}",
            j_dim,
            x.channels()
        )));
    }
    let frames = x.frames();
    if frames < k_dim {
        return Err(Error::ShapeMismatch(format!(
            "signal length {frames} shorter than kernel {k_dim}"
        )));
    }
    let out_frames = frames - k_dim + 1;

    let u1 = f.factors[0].data();
    let u2 = f.factors[1].data();
    let u3 = f.factors[2].data();
    let x_data = x.data().data();

    // z = U²ᵀ·x, then a per-component depthwise filter, then λ·U¹
    let mut z = vec![0.0f64; r * frames];
    for ri in 0..r {
        for tau in 0..frames {
            let mut acc = 0.0f64;
            for j in 0..j_dim {
                acc += u2[j * r + ri] as f64 * x_data[j * frames + tau] as f64;
            }
            z[ri * frames + tau] = acc;
        }
    }
    let mut zf = vec![0.0f64; r * out_frames];
    for ri in 0..r {
        for tau in 0..out_frames {
            let mut acc = 0.0f64;
            for k in 0..k_dim {
                acc += u3[k * r + ri] as f64 * z[ri * frames + tau + k];
            }
            zf[ri * out_frames + tau] = acc;
        }
    }
    let mut out = vec![0.0f32; i_dim * out_frames];
    for ii in 0..i_dim {
        for tau in 0..out_frames {
            let mut acc = 0.0f64;
            for ri in 0..r {
                acc += f.weights[ri] as f64 * u1[ii * r + ri] as f64 * zf[ri * out_frames + tau];
            }
            out[ii * out_frames + tau] = acc as f32;
        }
    }
    Signal::new(DenseTensor::from_parts(vec![i_dim, out_frames], out))
}

/// Factored 2-D convolution for CP weights: per-component separable filters.
pub fn apply_cp_conv2d(f: &CpFactors, x: &DenseTensor) -> Result<DenseTensor> {
    if f.factors.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "cp conv2d wants 4 factor matrices, got {}",
            f.factors.len()
        )));
    }
    if x.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "cp conv2d input must be order 3, got {:?}",
            x.shape()
        )));
    }
    let (i_dim, j_dim, k1, k2) = (
        f.factors[0].rows(),
        f.factors[1].rows(),
        f.factors[2].rows(),
        f.factors[3].rows(),
    );
    let r = f.rank();
    let (cx, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if j_dim != cx {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {j_dim} channels, input has {cx}"
        )));
    }
    if h < k1 || wd < k2 {
        return Err(Error::ShapeMismatch(format!(
            "input {h}×{wd} smaller than kernel {k1}×{k2}"
        )));
    }
    let (ho, wo) = (h - k1 + 1, wd - k2 + 1);
    let u1 = f.factors[0].data();
    let u2 = f.factors[1].data();
    let u3 = f.factors[2].data();
    let u4 = f.factors[3].data();
    let xdat = x.data();

    let mut z = vec![0.0f64; r * h * wd];
    for ri in 0..r {
        for pix in 0..h * wd {
            let mut acc = 0.0f64;
            for j in 0..j_dim {
                acc += u2[j * r + ri] as f64 * xdat[j * h * wd + pix] as f64;
            }
            z[ri * h * wd + pix] = acc;
        }
    }
    let mut zf = vec![0.0f64; r * ho * wo];
    for ri in 0..r {
        for y in 0..ho {
            for xx in 0..wo {
                let mut acc = 0.0f64;
                for a in 0..k1 {
                    for b in 0..k2 {
                        acc += u3[a * r + ri] as f64
                            * u4[b * r + ri] as f64
                            * z[(ri * h + y + a) * wd + xx + b];
                    }
                }
                zf[(ri * ho + y) * wo + xx] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; i_dim * ho * wo];
    for ii in 0..i_dim {
        for pix in 0..ho * wo {
            let mut acc = 0.0f64;
            for ri in 0..r {
                acc += f.weights[ri] as f64 * u1[ii * r + ri] as f64 * zf[ri * ho * wo + pix];
            }
            out[ii * ho * wo + pix] = acc as f32;
        }
    }
    Ok(DenseTensor::from_parts(vec![i_dim, ho, wo], out))
}

/// Dense 2-D valid correlation oracle over a `(J, H, W)` input.
pub fn dense_conv2d(w: &DenseTensor, x: &DenseTensor) -> Result<DenseTensor> {
    if w.order() != 4 || x.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d wants an order-4 kernel and order-3 input, got {:?} and {:?}",
            w.shape(),
            x.shape()
        )));
    }
    let (co, ci, k1, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (cx, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if ci != cx {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {ci} channels, input has {cx}"
        )));
    }
    if h < k1 || wd < k2 {
        return Err(Error::ShapeMismatch(format!(
            "input {h}×{wd} smaller than kernel {k1}×{k2}"
        )));
    }
    let (ho, wo) = (h - k1 + 1, wd - k2 + 1);
    let wdat = w.data();
    let xdat = x.data();
    let mut out = vec![0.0f32; co * ho * wo];
    for i in 0..co {
        for y in 0..ho {
            for xx in 0..wo {
                let mut acc = 0.0f64;
                for j in 0..ci {
                    for a in 0..k1 {
                        for b in 0..k2 {
                            acc += wdat[((i * ci + j) * k1 + a) * k2 + b] as f64
                                * xdat[(j * h + y + a) * wd + xx + b] as f64;
                        }
                    }
                }
                out[(i * ho + y) * wo + xx] = acc as f32;
            }
        }
    }
    Ok(DenseTensor::from_parts(vec![co, ho, wo], out))
}

/// Factored 2-D convolution: both spatial modes filtered into the kernel
/// basis, then one core contraction between the channel maps.
pub fn apply_factored_conv2d(f: &TuckerFactors, x: &DenseTensor) -> Result<DenseTensor> {
    if f.core.order() != 4 || x.order() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "factored conv2d wants an order-4 core and order-3 input, got {:?} and {:?}",
            f.core.shape(),
            x.shape()
        )));
    }
    let (i_dim, j_dim, k1, k2) = (
        f.factors[0].rows(),
        f.factors[1].rows(),
        f.factors[2].rows(),
        f.factors[3].rows(),
    );
    let (r, s, t1, t2) = (
        f.core.shape()[0],
        f.core.shape()[1],
        f.core.shape()[2],
        f.core.shape()[3],
    );
    let (cx, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if j_dim != cx {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {j_dim} channels, input has {cx}"
        )));
    }
    if h < k1 || wd < k2 {
        return Err(Error::ShapeMismatch(format!(
            "input {h}×{wd} smaller than kernel {k1}×{k2}"
        )));
    }
    let (ho, wo) = (h - k1 + 1, wd - k2 + 1);
    let u1 = f.factors[0].data();
    let u2 = f.factors[1].data();
    let u3 = f.factors[2].data();
    let u4 = f.factors[3].data();
    let xdat = x.data();

    // z = U²ᵀ·x over pixels
    let mut z = vec![0.0f64; s * h * wd];
    for si in 0..s {
        for pix in 0..h * wd {
            let mut acc = 0.0f64;
            for j in 0..j_dim {
                acc += u2[j * s + si] as f64 * xdat[j * h * wd + pix] as f64;
            }
            z[si * h * wd + pix] = acc;
        }
    }
    // filter both spatial modes into the (t1,t2) basis
    let mut zt = vec![0.0f64; t1 * t2 * s * ho * wo];
    for ta in 0..t1 {
        for tb in 0..t2 {
            for si in 0..s {
                for y in 0..ho {
                    for xx in 0..wo {
                        let mut acc = 0.0f64;
                        for a in 0..k1 {
                            for b in 0..k2 {
                                acc += u3[a * t1 + ta] as f64
                                    * u4[b * t2 + tb] as f64
                                    * z[(si * h + y + a) * wd + xx + b];
                            }
                        }
                        zt[(((ta * t2 + tb) * s + si) * ho + y) * wo + xx] = acc;
                    }
                }
            }
        }
    }
    // core contraction + output channel map
    let core = f.core.data();
    let mut out = vec![0.0f32; i_dim * ho * wo];
    let mut mid = vec![0.0f64; r];
    for y in 0..ho {
        for xx in 0..wo {
            for (ri, slot) in mid.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for si in 0..s {
                    for ta in 0..t1 {
                        for tb in 0..t2 {
                            acc += core[((ri * s + si) * t1 + ta) * t2 + tb] as f64
                                * zt[(((ta * t2 + tb) * s + si) * ho + y) * wo + xx];
                        }
                    }
                }
                *slot = acc;
            }
            for ii in 0..i_dim {
                let mut acc = 0.0f64;
                for (ri, m) in mid.iter().enumerate() {
                    acc += u1[ii * r + ri] as f64 * m;
                }
                out[(ii * ho + y) * wo + xx] = acc as f32;
            }
        }
    }
    Ok(DenseTensor::from_parts(vec![i_dim, ho, wo], out))
}

/// Dense vs factored MAC counts for a plan on a shape. Linear weights count
/// `I·J` vs `R(I+J)` per application; convolutions count per output frame.
/// Tensor-train plans are flagged: their factored cost is the dense cost plus
/// the tensor reconstruction.
pub fn mac_report(plan: &RankPlan, shape: &[usize]) -> Result<MacCount> {
    // validates arity as a side effect
    crate::planner::param_counts(plan.method, shape, &plan.ranks)?;
    let dense: u64 = shape.iter().map(|&d| d as u64).product();
    let (factored, no_speedup) = match plan.method {
        Method::Svd => {
            let r = plan.ranks[0] as u64;
            (r * (shape[0] as u64 + shape[1] as u64), false)
        }
        Method::Tucker => {
            let r = plan.ranks[0] as u64;
            let s = plan.ranks[1] as u64;
            let core: u64 = plan.ranks.iter().map(|&x| x as u64).product();
            (shape[1] as u64 * s + core + r * shape[0] as u64, false)
        }
        Method::Cp => {
            let r = plan.ranks[0] as u64;
            let spatial: u64 = shape[2..].iter().map(|&d| d as u64).product();
            (shape[1] as u64 * r + r * spatial + r * shape[0] as u64, false)
        }
        Method::Tt => {
            // dense apply plus the cost of contracting the train back together
            let mut recon = 0u64;
            let mut left_elems = shape[0] as u64;
            let mut r_prev = *plan.ranks.first().unwrap_or(&1) as u64;
            for (n, &dim) in shape.iter().enumerate().skip(1) {
                let r_next = if n < plan.ranks.len() {
                    plan.ranks[n] as u64
                } else {
                    1
                };
                recon += left_elems * r_prev * dim as u64 * r_next;
                left_elems *= dim as u64;
                r_prev = r_next;
            }
            (dense + recon, true)
        }
    };
    Ok(MacCount {
        dense_macs: dense,
        factored_macs: factored,
        ratio: factored as f64 / dense as f64,
        no_speedup,
    })
}
