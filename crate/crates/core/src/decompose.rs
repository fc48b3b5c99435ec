//! The four factorization engines and their dense reconstructions.
//!
//! - SVD: truncated `W ≈ U·(SV)` with the diagonal pre-composed into the
//!   right factor, so a rank-R linear layer stores `IR + RJ` values.
//! - Tucker: HOSVD initialization (leading left singular vectors of every
//!   mode unfolding) refined by HOOI sweeps; stores a core plus one factor
//!   matrix per mode.
//! - CP: alternating least squares with unit-norm factor columns and the
//!   scale absorbed into a weight vector λ. Initialized from the HOSVD
//!   factors so results are deterministic.
//! - TT: a left-to-right sweep of reshapes and truncated SVDs producing
//!   order-3 cores `(r_{n−1}, I_n, r_n)` with `r_0 = r_N = 1`.
//!
//! Sign conventions are unconstrained throughout; every correctness claim is
//! about reconstructions, never raw factor entries.

use crate::error::{Error, Result};
use crate::planner::Method;
use crate::svd::{svd_full, svd_truncated};
use crate::tensor::{increment_index, relative_error, DenseTensor};

/// Truncated-SVD factors of a matrix: `a` is `I×R`, `b` is the pre-composed
/// `diag(s)·V` of shape `R×J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub a: DenseTensor,
    pub b: DenseTensor,
}

impl SvdFactors {
    pub fn new(a: DenseTensor, b: DenseTensor) -> Result<Self> {
        if a.order() != 2 || b.order() != 2 || a.cols() != b.rows() {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent svd factors: {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.a.matmul(&self.b)
    }
}

/// Tucker factors: an order-N core and one column-orthonormal factor matrix
/// per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<DenseTensor>,
}

impl TuckerFactors {
    pub fn new(core: DenseTensor, factors: Vec<DenseTensor>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::ShapeMismatch(format!(
                "tucker core order {} needs as many factors, got {}",
                core.order(),
                factors.len()
            )));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.order() != 2 || f.cols() != core.shape()[n] {
                return Err(Error::ShapeMismatch(format!(
                    "tucker factor {} has shape {:?}, core wants {} columns",
                    n,
                    f.shape(),
                    core.shape()[n]
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    pub fn original_shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let mut out = self.core.clone();
        for (n, f) in self.factors.iter().enumerate() {
            out = out.mode_n_product(f, n)?;
        }
        Ok(out)
    }
}

/// CP factors: weights λ and one `I_n×R` factor matrix per mode with
/// unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub weights: Vec<f32>,
    pub factors: Vec<DenseTensor>,
}

impl CpFactors {
    pub fn new(weights: Vec<f32>, factors: Vec<DenseTensor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::ShapeMismatch("cp factors need order ≥ 1".into()));
        }
        for f in &factors {
            if f.order() != 2 || f.cols() != weights.len() {
                return Err(Error::ShapeMismatch(format!(
                    "cp factor shape {:?} inconsistent with {} weights",
                    f.shape(),
                    weights.len()
                )));
            }
        }
        Ok(Self { weights, factors })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn original_shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let shape = self.original_shape();
        let rank = self.rank();
        let len: usize = shape.iter().product();
        let mut out = vec![0.0f64; len];
        let mut idx = vec![0usize; shape.len()];
        for slot in out.iter_mut() {
            let mut acc = 0.0f64;
            for r in 0..rank {
                let mut prod = self.weights[r] as f64;
                for (n, f) in self.factors.iter().enumerate() {
                    prod *= f.get(&[idx[n], r]) as f64;
                }
                acc += prod;
            }
            *slot = acc;
            increment_index(&mut idx, &shape);
        }
        Ok(DenseTensor::from_parts(
            shape,
            out.into_iter().map(|v| v as f32).collect(),
        ))
    }
}

/// Tensor-train cores, each of shape `(r_{n−1}, I_n, r_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtFactors {
    pub cores: Vec<DenseTensor>,
}

impl TtFactors {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::ShapeMismatch("tt needs at least one core".into()));
        }
        let mut prev = 1usize;
        for (n, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "tt core {} must be order 3, got {:?}",
                    n,
                    c.shape()
                )));
            }
            if c.shape()[0] != prev {
                return Err(Error::ShapeMismatch(format!(
                    "tt core {} left rank {} does not match previous right rank {}",
                    n,
                    c.shape()[0],
                    prev
                )));
            }
            prev = c.shape()[2];
        }
        if prev != 1 {
            return Err(Error::ShapeMismatch("tt boundary ranks must be 1".into()));
        }
        Ok(Self { cores })
    }

    /// Bond ranks `r_1..r_{N−1}`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[2])
            .collect()
    }

    pub fn original_shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let shape = self.original_shape();
        let first = &self.cores[0];
        let mut acc = first
            .clone()
            .reshape(vec![first.shape()[1], first.shape()[2]])?;
        for core in &self.cores[1..] {
            let (r_prev, dim, r_next) = (core.shape()[0], core.shape()[1], core.shape()[2]);
            let rhs = core.clone().reshape(vec![r_prev, dim * r_next])?;
            let rows = acc.rows();
            acc = acc.matmul(&rhs)?.reshape(vec![rows * dim, r_next])?;
        }
        acc.reshape(shape)
    }
}

/// A factored tensor of any of the four families.
#[derive(Debug, Clone, PartialEq)]
pub enum FactoredTensor {
    Svd(SvdFactors),
    Tucker(TuckerFactors),
    Cp(CpFactors),
    Tt(TtFactors),
}

impl FactoredTensor {
    pub fn method(&self) -> Method {
        match self {
            FactoredTensor::Svd(_) => Method::Svd,
            FactoredTensor::Tucker(_) => Method::Tucker,
            FactoredTensor::Cp(_) => Method::Cp,
            FactoredTensor::Tt(_) => Method::Tt,
        }
    }

    pub fn original_shape(&self) -> Vec<usize> {
        match self {
            FactoredTensor::Svd(f) => vec![f.a.rows(), f.b.cols()],
            FactoredTensor::Tucker(f) => f.original_shape(),
            FactoredTensor::Cp(f) => f.original_shape(),
            FactoredTensor::Tt(f) => f.original_shape(),
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match self {
            FactoredTensor::Svd(f) => vec![f.rank()],
            FactoredTensor::Tucker(f) => f.ranks(),
            FactoredTensor::Cp(f) => vec![f.rank()],
            FactoredTensor::Tt(f) => f.ranks(),
        }
    }

    /// Element-by-element tally of the stored values.
    pub fn param_count(&self) -> u64 {
        match self {
            FactoredTensor::Svd(f) => (f.a.len() + f.b.len()) as u64,
            FactoredTensor::Tucker(f) => {
                f.core.len() as u64 + f.factors.iter().map(|m| m.len() as u64).sum::<u64>()
            }
            FactoredTensor::Cp(f) => {
                f.weights.len() as u64 + f.factors.iter().map(|m| m.len() as u64).sum::<u64>()
            }
            FactoredTensor::Tt(f) => f.cores.iter().map(|c| c.len() as u64).sum(),
        }
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        match self {
            FactoredTensor::Svd(f) => f.reconstruct(),
            FactoredTensor::Tucker(f) => f.reconstruct(),
            FactoredTensor::Cp(f) => f.reconstruct(),
            FactoredTensor::Tt(f) => f.reconstruct(),
        }
    }
}

/// Rank-R truncated SVD with `S·V` pre-composed into the right factor.
pub fn decompose_svd(m: &DenseTensor, rank: usize) -> Result<SvdFactors> {
    let triple = svd_truncated(m, rank)?;
    let b = triple.sv_product();
    SvdFactors::new(triple.u, b)
}

/// Tucker decomposition: HOSVD initialization plus `hooi_sweeps` alternating
/// refinement sweeps.
pub fn decompose_tucker(
    t: &DenseTensor,
    ranks: &[usize],
    hooi_sweeps: usize,
) -> Result<TuckerFactors> {
    tucker_inner(t, ranks, hooi_sweeps, None)
}

/// As [`decompose_tucker`], also returning the relative reconstruction error
/// after HOSVD and after each HOOI sweep (`hooi_sweeps + 1` entries).
pub fn decompose_tucker_traced(
    t: &DenseTensor,
    ranks: &[usize],
    hooi_sweeps: usize,
) -> Result<(TuckerFactors, Vec<f64>)> {
    let mut trace = Vec::with_capacity(hooi_sweeps + 1);
    let factors = tucker_inner(t, ranks, hooi_sweeps, Some(&mut trace))?;
    Ok((factors, trace))
}

fn tucker_inner(
    t: &DenseTensor,
    ranks: &[usize],
    hooi_sweeps: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<TuckerFactors> {
    let order = t.order();
    if ranks.len() != order {
        return Err(Error::RankOutOfRange(format!(
            "expected {} tucker ranks, got {}",
            order,
            ranks.len()
        )));
    }
    for (n, (&r, &d)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::RankOutOfRange(format!(
                "tucker rank {r} invalid for mode {n} of size {d}"
            )));
        }
    }

    // HOSVD: leading left singular vectors of each unfolding.
    let mut factors: Vec<DenseTensor> = Vec::with_capacity(order);
    for n in 0..order {
        let unfolded = t.unfold(n)?;
        factors.push(mode_basis(&unfolded, ranks[n])?);
    }
    if let Some(trace) = trace.as_deref_mut() {
        trace.push(tucker_error(t, &factors)?);
    }

    for _sweep in 0..hooi_sweeps {
        for n in 0..order {
            let mut projected = t.clone();
            for m in 0..order {
                if m == n {
                    continue;
                }
                projected = projected.mode_n_product(&factors[m].transposed()?, m)?;
            }
            factors[n] = mode_basis(&projected.unfold(n)?, ranks[n])?;
        }
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(tucker_error(t, &factors)?);
        }
    }

    let mut core = t.clone();
    for (n, f) in factors.iter().enumerate() {
        core = core.mode_n_product(&f.transposed()?, n)?;
    }
    TuckerFactors::new(core, factors)
}

/// Leading `rank` left singular vectors of an unfolding. When the requested
/// rank exceeds the thin rank `min(rows, cols)` (a mode larger than the
/// product of the others) the basis is completed with extra orthonormal
/// columns; they span nullspace only, so the core stays exact.
fn mode_basis(unfolded: &DenseTensor, rank: usize) -> Result<DenseTensor> {
    let p = unfolded.rows().min(unfolded.cols());
    if rank <= p {
        return Ok(svd_truncated(unfolded, rank)?.u);
    }
    let thin = svd_full(unfolded)?.u;
    let rows = thin.rows();
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..rows).map(|r| thin.get(&[r, c]) as f64).collect())
        .collect();
    while cols.len() < rank {
        let next = crate::svd::completed_column(&cols, rows);
        cols.push(next);
    }
    let mut data = vec![0.0f32; rows * rank];
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            data[r * rank + c] = *v as f32;
        }
    }
    Ok(DenseTensor::from_parts(vec![rows, rank], data))
}

fn tucker_error(t: &DenseTensor, factors: &[DenseTensor]) -> Result<f64> {
    let mut core = t.clone();
    for (n, f) in factors.iter().enumerate() {
        core = core.mode_n_product(&f.transposed()?, n)?;
    }
    let approx = TuckerFactors::new(core, factors.to_vec())?.reconstruct()?;
    relative_error(t, &approx)
}

/// CP decomposition by alternating least squares. Deterministic: factor
/// matrices start from the leading singular vectors of each unfolding.
/// Stops after `max_iters` sweeps or when the per-sweep improvement in
/// relative reconstruction error drops below `tol`.
pub fn decompose_cp(
    t: &DenseTensor,
    rank: usize,
    max_iters: usize,
    tol: f64,
) -> Result<CpFactors> {
    Ok(decompose_cp_traced(t, rank, max_iters, tol)?.0)
}

/// As [`decompose_cp`], also returning the relative reconstruction error
/// after every completed sweep.
pub fn decompose_cp_traced(
    t: &DenseTensor,
    rank: usize,
    max_iters: usize,
    tol: f64,
) -> Result<(CpFactors, Vec<f64>)> {
    let shape = t.shape().to_vec();
    let order = shape.len();
    let min_dim = *shape.iter().min().expect("order ≥ 1");
    if rank == 0 || rank > min_dim {
        return Err(Error::RankOutOfRange(format!(
            "cp rank {rank} not in 1..={min_dim} for shape {shape:?}"
        )));
    }

    if order == 1 {
        // λ = ‖t‖ with a completed basis: exact, nothing to iterate.
        let norm = t.frobenius_norm();
        let dim = shape[0];
        let mut cols = vec![vec![0.0f32; rank]; dim];
        let mut weights = vec![0.0f32; rank];
        if norm > 0.0 {
            weights[0] = norm as f32;
            for (i, row) in cols.iter_mut().enumerate() {
                row[0] = (t.data()[i] as f64 / norm) as f32;
            }
        } else {
            cols[0][0] = 1.0;
        }
        for r in 1..rank {
            cols[r % dim][r] = 1.0; // any unit column works for zero weight
        }
        let flat: Vec<f32> = cols.into_iter().flatten().collect();
        let factor = DenseTensor::from_parts(vec![dim, rank], flat);
        return Ok((CpFactors::new(weights, vec![factor])?, vec![0.0]));
    }

    // f64 working factors, HOSVD init.
    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(order);
    for n in 0..order {
        let u = svd_truncated(&t.unfold(n)?, rank)?.u;
        factors.push(u.data().iter().map(|&v| v as f64).collect());
    }
    let mut lambda = vec![1.0f64; rank];

    let data_f64: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    let norm_t = t.frobenius_norm();
    let mut trace = Vec::new();
    let mut prev_err = f64::INFINITY;

    for sweep in 0..max_iters {
        for n in 0..order {
            let gram = hadamard_grams(&factors, &shape, rank, n);
            let mttkrp = mttkrp(&data_f64, &shape, &factors, rank, n);
            let updated = solve_normal_equations(&gram, &mttkrp, shape[n], rank)
                .ok_or(Error::SingularNormalEquations { sweep })?;
            // normalize columns into λ
            let mut norms = vec![0.0f64; rank];
            for row in updated.chunks_exact(rank) {
                for (r, v) in row.iter().enumerate() {
                    norms[r] += v * v;
                }
            }
            for n_r in norms.iter_mut() {
                *n_r = n_r.sqrt();
            }
            let mut normalized = updated;
            for row in normalized.chunks_exact_mut(rank) {
                for (r, v) in row.iter_mut().enumerate() {
                    if norms[r] > 0.0 {
                        *v /= norms[r];
                    }
                }
            }
            factors[n] = normalized;
            lambda = norms;
        }

        let err = cp_error(&data_f64, &shape, &lambda, &factors, rank, norm_t);
        trace.push(err);
        if prev_err - err < tol {
            break;
        }
        prev_err = err;
    }

    let weights: Vec<f32> = lambda.iter().map(|&v| v as f32).collect();
    let factor_tensors: Vec<DenseTensor> = factors
        .into_iter()
        .zip(&shape)
        .map(|(data, &dim)| {
            DenseTensor::from_parts(vec![dim, rank], data.into_iter().map(|v| v as f32).collect())
        })
        .collect();
    Ok((CpFactors::new(weights, factor_tensors)?, trace))
}

/// Hadamard product of the factor Gram matrices of every mode except `skip`.
fn hadamard_grams(factors: &[Vec<f64>], shape: &[usize], rank: usize, skip: usize) -> Vec<f64> {
    let mut gram = vec![1.0f64; rank * rank];
    for (n, factor) in factors.iter().enumerate() {
        if n == skip {
            continue;
        }
        let dim = shape[n];
        let mut g = vec![0.0f64; rank * rank];
        for row in 0..dim {
            let base = row * rank;
            for a in 0..rank {
                let va = factor[base + a];
                if va == 0.0 {
                    continue;
                }
                for b in 0..rank {
                    g[a * rank + b] += va * factor[base + b];
                }
            }
        }
        for (acc, v) in gram.iter_mut().zip(&g) {
            *acc *= v;
        }
    }
    gram
}

/// Matricized-tensor-times-Khatri-Rao-product for mode `n`: the `I_n×R`
/// matrix `M[i,r] = Σ t[..] Π_{m≠n} U^m[i_m, r]`.
fn mttkrp(data: &[f64], shape: &[usize], factors: &[Vec<f64>], rank: usize, n: usize) -> Vec<f64> {
    let order = shape.len();
    let mut out = vec![0.0f64; shape[n] * rank];
    let mut idx = vec![0usize; order];
    let mut prod = vec![0.0f64; rank];
    for &value in data {
        if value != 0.0 {
            prod.fill(1.0);
            for m in 0..order {
                if m == n {
                    continue;
                }
                let base = idx[m] * rank;
                let factor = &factors[m];
                for (r, p) in prod.iter_mut().enumerate() {
                    *p *= factor[base + r];
                }
            }
            let base = idx[n] * rank;
            for (r, p) in prod.iter().enumerate() {
                out[base + r] += value * p;
            }
        }
        increment_index(&mut idx, shape);
    }
    out
}

/// Solve `X · G = M` for X (the updated factor), i.e. `G xᵀ = mᵀ` per row,
/// by Gaussian elimination with partial pivoting. Returns `None` when G is
/// numerically singular.
fn solve_normal_equations(gram: &[f64], m: &[f64], dim: usize, rank: usize) -> Option<Vec<f64>> {
    let mut lu = gram.to_vec();
    let mut piv: Vec<usize> = (0..rank).collect();
    let scale = lu.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..rank {
        let (mut best, mut best_val) = (col, lu[piv[col] * rank + col].abs());
        for row in col + 1..rank {
            let v = lu[piv[row] * rank + col].abs();
            if v > best_val {
                best = row;
                best_val = v;
            }
        }
        if best_val <= scale * 1e-12 {
            return None;
        }
        piv.swap(col, best);
        let pivot = lu[piv[col] * rank + col];
        for row in col + 1..rank {
            let factor = lu[piv[row] * rank + col] / pivot;
            lu[piv[row] * rank + col] = factor;
            for k in col + 1..rank {
                lu[piv[row] * rank + k] -= factor * lu[piv[col] * rank + k];
            }
        }
    }
    let mut out = vec![0.0f64; dim * rank];
    let mut y = vec![0.0f64; rank];
    for row in 0..dim {
        let rhs = &m[row * rank..(row + 1) * rank];
        for i in 0..rank {
            let mut acc = rhs[piv[i]];
            for k in 0..i {
                acc -= lu[piv[i] * rank + k] * y[k];
            }
            y[i] = acc;
        }
        for i in (0..rank).rev() {
            let mut acc = y[i];
            for k in i + 1..rank {
                acc -= lu[piv[i] * rank + k] * out[row * rank + k];
            }
            out[row * rank + i] = acc / lu[piv[i] * rank + i];
        }
    }
    Some(out)
}

fn cp_error(
    data: &[f64],
    shape: &[usize],
    lambda: &[f64],
    factors: &[Vec<f64>],
    rank: usize,
    norm_t: f64,
) -> f64 {
    let mut idx = vec![0usize; shape.len()];
    let mut diff_sq = 0.0f64;
    for &value in data {
        let mut acc = 0.0f64;
        for r in 0..rank {
            let mut prod = lambda[r];
            for (m, factor) in factors.iter().enumerate() {
                prod *= factor[idx[m] * rank + r];
            }
            acc += prod;
        }
        let d = value - acc;
        diff_sq += d * d;
        increment_index(&mut idx, shape);
    }
    diff_sq.sqrt() / norm_t
}

/// TT-SVD: left-to-right reshapes and truncated SVDs. Requested bond ranks
/// above the effective structural bound `min(r_{n−1}·I_n, Π_{m>n} I_m)` are
/// capped to it; a zero rank is an error.
pub fn decompose_tt(t: &DenseTensor, ranks: &[usize]) -> Result<TtFactors> {
    Ok(decompose_tt_traced(t, ranks)?.0)
}

/// As [`decompose_tt`], also returning the discarded tail energy
/// `Σ_{i>r} s_i²` of each internal truncated SVD.
pub fn decompose_tt_traced(t: &DenseTensor, ranks: &[usize]) -> Result<(TtFactors, Vec<f64>)> {
    let shape = t.shape().to_vec();
    let order = shape.len();
    if order < 2 {
        return Err(Error::ShapeMismatch(format!(
            "tt decomposition needs order ≥ 2, got {shape:?}"
        )));
    }
    if ranks.len() != order - 1 {
        return Err(Error::RankOutOfRange(format!(
            "expected {} tt ranks, got {}",
            order - 1,
            ranks.len()
        )));
    }
    if let Some(pos) = ranks.iter().position(|&r| r == 0) {
        return Err(Error::RankOutOfRange(format!("tt rank at bond {pos} is zero")));
    }

    let mut cores = Vec::with_capacity(order);
    let mut tails = Vec::with_capacity(order - 1);
    let mut r_prev = 1usize;
    let mut rest: usize = shape.iter().product();
    let mut current = t.clone().reshape(vec![1, rest])?;

    for (n, &dim) in shape[..order - 1].iter().enumerate() {
        rest /= dim;
        let matrix = current.reshape(vec![r_prev * dim, rest])?;
        let triple = svd_full(&matrix)?;
        let bound = (r_prev * dim).min(rest);
        let r_n = ranks[n].min(bound);
        tails.push(triple.s[r_n..].iter().map(|s| s * s).sum::<f64>());
        let truncated = triple.truncate(r_n)?;
        cores.push(truncated.u.clone().reshape(vec![r_prev, dim, r_n])?);
        current = truncated.sv_product();
        r_prev = r_n;
    }
    cores.push(current.reshape(vec![r_prev, shape[order - 1], 1])?);

    Ok((TtFactors::new(cores)?, tails))
}
