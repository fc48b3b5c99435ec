//! Dense SVD via one-sided Jacobi rotations.
//!
//! `W = U·diag(s)·V` with `U` column-orthonormal (I×P), `V` row-orthonormal
//! (P×J), `P = min(I, J)`, singular values non-increasing. Near-square inputs
//! are orthogonalized directly; strongly rectangular inputs (the mode
//! unfoldings of convolution kernels) go through the Gram matrix of the short
//! side, which keeps the sweep cost independent of the long dimension. Both
//! paths share the same rotation worker, and rotation rounds over disjoint
//! column pairs run on rayon when the `parallel` feature is enabled.
//!
//! Signs and degenerate-subspace bases are not pinned down; callers must only
//! rely on reconstructions and singular values.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Relative off-diagonal threshold declaring a sweep converged.
const JACOBI_TOL: f64 = 1e-10;
/// Sweep budget; hitting it is a reported error, never a silent truncation.
const MAX_SWEEPS: usize = 60;
/// Aspect ratio at which `svd_full` switches to the Gram route.
const GRAM_ASPECT: usize = 2;
/// Minimum `pairs × column length` before a rotation round is parallelized.
#[cfg(feature = "parallel")]
const PAR_ROUND_WORK: usize = 1 << 14;

/// Thin SVD of a real matrix.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    /// Left factor, `I × P`, orthonormal columns.
    pub u: DenseTensor,
    /// Singular values, length `P`, non-increasing.
    pub s: Vec<f64>,
    /// Right factor, `P × J`, orthonormal rows.
    pub v: DenseTensor,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u · diag(s) · v`, accumulated in `f64`.
    pub fn reconstruct(&self) -> DenseTensor {
        let i = self.u.rows();
        let p = self.s.len();
        let j = self.v.cols();
        let u = self.u.data();
        let v = self.v.data();
        let mut out = vec![0.0f32; i * j];
        for row in 0..i {
            for col in 0..j {
                let mut acc = 0.0f64;
                for r in 0..p {
                    acc += u[row * p + r] as f64 * self.s[r] * v[r * j + col] as f64;
                }
                out[row * j + col] = acc as f32;
            }
        }
        DenseTensor::from_parts(vec![i, j], out)
    }

    /// Keep the leading `rank` singular triplets.
    pub fn truncate(&self, rank: usize) -> Result<SvdTriple> {
        let p = self.s.len();
        if rank == 0 || rank > p {
            return Err(Error::RankOutOfRange(format!("rank {rank} not in 1..={p}")));
        }
        let i = self.u.rows();
        let j = self.v.cols();
        let mut u = vec![0.0f32; i * rank];
        for row in 0..i {
            u[row * rank..(row + 1) * rank]
                .copy_from_slice(&self.u.data()[row * p..row * p + rank]);
        }
        let v = self.v.data()[..rank * j].to_vec();
        Ok(SvdTriple {
            u: DenseTensor::from_parts(vec![i, rank], u),
            s: self.s[..rank].to_vec(),
            v: DenseTensor::from_parts(vec![rank, j], v),
        })
    }

    /// `diag(s) · v` as a dense `P × J` matrix.
    pub fn sv_product(&self) -> DenseTensor {
        let p = self.s.len();
        let j = self.v.cols();
        let mut out = vec![0.0f32; p * j];
        for r in 0..p {
            for c in 0..j {
                out[r * j + c] = (self.s[r] * self.v.data()[r * j + c] as f64) as f32;
            }
        }
        DenseTensor::from_parts(vec![p, j], out)
    }
}

/// Full thin SVD of an order-2 tensor.
pub fn svd_full(m: &DenseTensor) -> Result<SvdTriple> {
    if m.order() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "svd requires an order-2 tensor, got order {}",
            m.order()
        )));
    }
    let (i_dim, j_dim) = (m.rows(), m.cols());
    let p = i_dim.min(j_dim);
    let transposed = i_dim < j_dim;

    // Column-major copy of the tall orientation, lifted to f64.
    let long = i_dim.max(j_dim);
    let mut tall: Vec<Vec<f64>> = vec![vec![0.0; long]; p];
    let data = m.data();
    for r in 0..i_dim {
        for c in 0..j_dim {
            let v = data[r * j_dim + c] as f64;
            if transposed {
                tall[r][c] = v;
            } else {
                tall[c][r] = v;
            }
        }
    }

    let (u_t, sigma, v_t) = if long >= GRAM_ASPECT * p && p > 1 {
        gram_route(&tall, long, p)?
    } else {
        direct_route(tall, long, p)?
    };

    // tall = U_t Σ V_tᵀ; map back to the original orientation.
    let (u, v) = if transposed {
        // m = V_t Σ U_tᵀ
        let mut u = vec![0.0f32; i_dim * p];
        for r in 0..i_dim {
            for c in 0..p {
                u[r * p + c] = v_t[c][r] as f32;
            }
        }
        let mut v = vec![0.0f32; p * j_dim];
        for r in 0..p {
            for c in 0..j_dim {
                v[r * j_dim + c] = u_t[r][c] as f32;
            }
        }
        (u, v)
    } else {
        let mut u = vec![0.0f32; i_dim * p];
        for r in 0..i_dim {
            for c in 0..p {
                u[r * p + c] = u_t[c][r] as f32;
            }
        }
        let mut v = vec![0.0f32; p * j_dim];
        for r in 0..p {
            for c in 0..j_dim {
                v[r * j_dim + c] = v_t[r][c] as f32;
            }
        }
        (u, v)
    };

    Ok(SvdTriple {
        u: DenseTensor::from_parts(vec![i_dim, p], u),
        s: sigma,
        v: DenseTensor::from_parts(vec![p, j_dim], v),
    })
}

/// Leading-`rank` truncated SVD.
pub fn svd_truncated(m: &DenseTensor, rank: usize) -> Result<SvdTriple> {
    if m.order() != 2 {
        return Err(Error::ShapeMismatch("svd requires an order-2 tensor".into()));
    }
    let p = m.rows().min(m.cols());
    if rank == 0 || rank > p {
        return Err(Error::RankOutOfRange(format!(
            "rank {} not in 1..={} for a {}x{} matrix",
            rank,
            p,
            m.rows(),
            m.cols()
        )));
    }
    svd_full(m)?.truncate(rank)
}

/// Direct path: orthogonalize the columns of the tall matrix itself.
fn direct_route(
    mut b: Vec<Vec<f64>>,
    rows: usize,
    n: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            col
        })
        .collect();
    one_sided_jacobi(&mut b, &mut v)?;

    let raw: Vec<f64> = b.iter().map(|col| norm(col)).collect();
    let order = sort_desc(&raw);
    permute(&mut b, &order);
    permute(&mut v, &order);
    let sigma: Vec<f64> = order.iter().map(|&j| raw[j]).collect();

    let s_max = sigma.first().copied().unwrap_or(0.0);
    let mut u = b;
    for (j, col) in u.iter_mut().enumerate() {
        if sigma[j] > s_max * 1e-13 && sigma[j] > 0.0 {
            let inv = 1.0 / sigma[j];
            col.iter_mut().for_each(|x| *x *= inv);
        } else {
            col.fill(0.0);
        }
    }
    // one-sided rotations keep nonzero columns orthogonal; only numerically
    // null ones need fresh directions
    for j in 0..u.len() {
        if sigma[j] <= s_max * 1e-13 || sigma[j] == 0.0 {
            u[j] = completed_column(&u, rows);
        }
    }
    Ok((u, sigma, v))
}

/// Gram path: diagonalize `AᵀA` of the short side, then recover the long-side
/// factor as `A·v/σ`. The per-pair relative convergence criterion keeps the
/// recovered columns orthonormal without an extra re-orthogonalization pass.
fn gram_route(
    tall: &[Vec<f64>],
    rows: usize,
    n: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let mut g: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
    #[cfg(feature = "parallel")]
    {
        g.par_iter_mut().enumerate().for_each(|(q, col)| {
            for (p, slot) in col.iter_mut().enumerate() {
                *slot = dot(&tall[p], &tall[q]);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    for q in 0..n {
        for p in 0..n {
            g[q][p] = dot(&tall[p], &tall[q]);
        }
    }

    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            col
        })
        .collect();
    one_sided_jacobi(&mut g, &mut v)?;

    let lambdas: Vec<f64> = g.iter().map(|col| norm(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());
    permute(&mut v, &order);

    // u_j = A v_j / ||A v_j||; the recomputed norm is the singular value.
    let mut u: Vec<Vec<f64>> = vec![vec![0.0; rows]; n];
    let mut sigma = vec![0.0f64; n];
    #[cfg(feature = "parallel")]
    {
        u.par_iter_mut()
            .zip(sigma.par_iter_mut())
            .enumerate()
            .for_each(|(j, (col, s))| *s = recover_column(tall, &v[j], col));
    }
    #[cfg(not(feature = "parallel"))]
    for j in 0..n {
        sigma[j] = recover_column(tall, &v[j], &mut u[j]);
    }

    // Recomputed norms can perturb the ordering of near-equal values.
    let order = sort_desc(&sigma);
    permute(&mut u, &order);
    permute(&mut v, &order);
    let sigma: Vec<f64> = {
        let mut s = sigma;
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    };

    // Squaring into the Gram loses the orthogonality of directions whose
    // singular value sits near σ_max·√ε, so the recovered side gets one
    // Gram-Schmidt pass in descending order. Dominant directions are already
    // orthogonal to ~1e-10 and barely move; near-null ones get replaced by
    // completed basis vectors.
    let s_max = sigma.first().copied().unwrap_or(0.0);
    for j in 0..u.len() {
        if sigma[j] > s_max * 1e-13 && sigma[j] > 0.0 {
            let inv = 1.0 / sigma[j];
            u[j].iter_mut().for_each(|x| *x *= inv);
            for k in 0..j {
                let proj = dot(&u[j], &u[k]);
                if proj != 0.0 {
                    let (head, tail) = u.split_at_mut(j);
                    for (c, o) in tail[0].iter_mut().zip(&head[k]) {
                        *c -= proj * o;
                    }
                }
            }
            let nrm = norm(&u[j]);
            if nrm > 0.5 {
                u[j].iter_mut().for_each(|x| *x /= nrm);
                continue;
            }
        }
        // numerically dependent or null: orthogonalize a canonical vector
        // against the finished prefix
        u[j] = completed_column(&u[..j], rows);
    }
    Ok((u, sigma, v))
}

fn recover_column(tall: &[Vec<f64>], v_col: &[f64], out: &mut [f64]) -> f64 {
    out.fill(0.0);
    for (p, &w) in v_col.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(&tall[p]) {
            *o += w * a;
        }
    }
    norm(out)
}

/// One-sided Jacobi: orthogonalize the columns of `b`, mirroring every
/// rotation onto `v`. Rotation rounds follow a round-robin schedule so the
/// pairs within a round touch disjoint columns; the sequential and parallel
/// executions are bit-identical.
fn one_sided_jacobi(b: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<usize> {
    let n = b.len();
    if n < 2 {
        return Ok(0);
    }
    #[cfg(feature = "parallel")]
    let col_len = b[0].len();
    let n_eff = n + n % 2;
    let mut ring: Vec<usize> = (0..n_eff).collect();

    for sweep in 0..MAX_SWEEPS {
        let mut max_rel = 0.0f64;
        for _round in 0..n_eff - 1 {
            let mut tasks = Vec::with_capacity(n_eff / 2);
            for k in 0..n_eff / 2 {
                let (p, q) = (ring[k], ring[n_eff - 1 - k]);
                if p >= n || q >= n {
                    continue;
                }
                tasks.push(PairTask {
                    p,
                    q,
                    bp: std::mem::take(&mut b[p]),
                    bq: std::mem::take(&mut b[q]),
                    vp: std::mem::take(&mut v[p]),
                    vq: std::mem::take(&mut v[q]),
                    rel: 0.0,
                });
            }

            #[cfg(feature = "parallel")]
            let done: Vec<PairTask> = if tasks.len() * col_len >= PAR_ROUND_WORK {
                tasks.into_par_iter().map(rotate_pair).collect()
            } else {
                tasks.into_iter().map(rotate_pair).collect()
            };
            #[cfg(not(feature = "parallel"))]
            let done: Vec<PairTask> = tasks.into_iter().map(rotate_pair).collect();

            for t in done {
                max_rel = max_rel.max(t.rel);
                b[t.p] = t.bp;
                b[t.q] = t.bq;
                v[t.p] = t.vp;
                v[t.q] = t.vq;
            }
            // rotate ring[1..] right by one
            let last = ring[n_eff - 1];
            for k in (2..n_eff).rev() {
                ring[k] = ring[k - 1];
            }
            ring[1] = last;
        }
        if max_rel <= JACOBI_TOL {
            return Ok(sweep + 1);
        }
    }
    Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS })
}

struct PairTask {
    p: usize,
    q: usize,
    bp: Vec<f64>,
    bq: Vec<f64>,
    vp: Vec<f64>,
    vq: Vec<f64>,
    rel: f64,
}

fn rotate_pair(mut t: PairTask) -> PairTask {
    let app = dot(&t.bp, &t.bp);
    let aqq = dot(&t.bq, &t.bq);
    let apq = dot(&t.bp, &t.bq);
    if app == 0.0 || aqq == 0.0 {
        return t;
    }
    let rel = apq.abs() / (app * aqq).sqrt();
    t.rel = rel;
    if rel <= JACOBI_TOL {
        return t;
    }
    let tau = (aqq - app) / (2.0 * apq);
    let tan = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
    let cos = 1.0 / (1.0 + tan * tan).sqrt();
    let sin = tan * cos;
    rotate(&mut t.bp, &mut t.bq, cos, sin);
    rotate(&mut t.vp, &mut t.vq, cos, sin);
    t
}

#[inline]
fn rotate(p: &mut [f64], q: &mut [f64], cos: f64, sin: f64) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let xp = cos * *x - sin * *y;
        let yq = sin * *x + cos * *y;
        *x = xp;
        *y = yq;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sort_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    order
}

fn permute<T>(cols: &mut [T], order: &[usize])
where
    T: Default + Clone,
{
    let taken: Vec<T> = order.iter().map(|&j| cols[j].clone()).collect();
    for (slot, col) in cols.iter_mut().zip(taken) {
        *slot = col;
    }
}

/// A unit vector orthogonal to every column in `existing`, built by
/// orthogonalizing canonical basis vectors; keeps `uᵀu = I` attainable for
/// rank-deficient inputs.
pub(crate) fn completed_column(existing: &[Vec<f64>], rows: usize) -> Vec<f64> {
    for cand in 0..rows {
        let mut col = vec![0.0f64; rows];
        col[cand] = 1.0;
        for other in existing {
            let proj = dot(&col, other);
            if proj != 0.0 {
                for (c, o) in col.iter_mut().zip(other) {
                    *c -= proj * o;
                }
            }
        }
        let nrm = norm(&col);
        if nrm > 0.5 {
            col.iter_mut().for_each(|x| *x /= nrm);
            return col;
        }
    }
    unreachable!("more columns than rows while completing a basis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::relative_error;

    fn seeded(shape: (usize, usize), scale: f32) -> DenseTensor {
        let mut state = (shape.0 as u64 * 31 + shape.1 as u64)
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(scale.to_bits() as u64);
        DenseTensor::from_fn(vec![shape.0, shape.1], |_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32 * scale
        })
        .unwrap()
    }

    fn assert_orthonormal_cols(u: &DenseTensor, tol: f64) {
        let p = u.cols();
        let gram = u.transposed().unwrap().matmul(u).unwrap();
        for r in 0..p {
            for c in 0..p {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!(
                    (gram.get(&[r, c]) as f64 - expect).abs() < tol,
                    "uᵀu[{r},{c}] = {}",
                    gram.get(&[r, c])
                );
            }
        }
    }

    fn assert_orthonormal_rows(v: &DenseTensor, tol: f64) {
        let p = v.rows();
        let gram = v.matmul(&v.transposed().unwrap()).unwrap();
        for r in 0..p {
            for c in 0..p {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((gram.get(&[r, c]) as f64 - expect).abs() < tol);
            }
        }
    }

    /// Independent oracle: eigenvalues of a symmetric matrix by classical
    /// two-sided Jacobi, sorted descending.
    fn sym_eigenvalues(a: &DenseTensor) -> Vec<f64> {
        let n = a.rows();
        let mut m: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
        for _ in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[p * n + q] * m[p * n + q];
                }
            }
            if off.sqrt() < 1e-12 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq.abs() < 1e-30 {
                        continue;
                    }
                    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[p * n + k];
                        let aqk = m[q * n + k];
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eig
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let svd = svd_full(&DenseTensor::identity(3)).unwrap();
        for s in &svd.s {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_case() {
        let m = DenseTensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let svd = svd_full(&m).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-6);
        assert!((svd.s[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reconstruction_and_eigen_oracle_tall() {
        let m = seeded((16, 9), 1.0);
        let svd = svd_full(&m).unwrap();
        assert!(relative_error(&m, &svd.reconstruct()).unwrap() < 1e-5);
        assert_orthonormal_cols(&svd.u, 1e-4);
        assert_orthonormal_rows(&svd.v, 1e-4);

        let gram = m.transposed().unwrap().matmul(&m).unwrap();
        let eig = sym_eigenvalues(&gram);
        for (s, lambda) in svd.s.iter().zip(&eig) {
            let expect = lambda.max(0.0).sqrt();
            assert!((s - expect).abs() / expect.max(1e-12) < 1e-4, "{s} vs {expect}");
        }
    }

    #[test]
    fn wide_matrix_orientation() {
        let m = seeded((5, 23), 2.0);
        let svd = svd_full(&m).unwrap();
        assert_eq!(svd.u.shape(), &[5, 5]);
        assert_eq!(svd.v.shape(), &[5, 23]);
        assert!(relative_error(&m, &svd.reconstruct()).unwrap() < 1e-5);
        assert_orthonormal_cols(&svd.u, 1e-4);
        assert_orthonormal_rows(&svd.v, 1e-4);
    }

    #[test]
    fn rank_deficient_input_still_orthonormal() {
        // rank 1: outer product
        let m = DenseTensor::from_fn(vec![6, 4], |i| (i[0] as f32 + 1.0) * (i[1] as f32 - 1.5)).unwrap();
        let svd = svd_full(&m).unwrap();
        assert_orthonormal_cols(&svd.u, 1e-4);
        assert_orthonormal_rows(&svd.v, 1e-4);
        assert!(relative_error(&m, &svd.reconstruct()).unwrap() < 1e-5);
        assert!(svd.s[1] < svd.s[0] * 1e-5);
    }

    #[test]
    fn zero_matrix() {
        let m = DenseTensor::zeros(vec![3, 3]).unwrap();
        let svd = svd_full(&m).unwrap();
        assert!(svd.s.iter().all(|&s| s == 0.0));
        assert_orthonormal_cols(&svd.u, 1e-6);
    }

    #[test]
    fn truncated_full_rank_matches_full() {
        let m = seeded((8, 8), 1.0);
        let full = svd_full(&m).unwrap();
        let trunc = svd_truncated(&m, 8).unwrap();
        assert!(relative_error(&full.reconstruct(), &trunc.reconstruct()).unwrap() < 1e-5);
    }

    #[test]
    fn truncated_diag_hand_case() {
        let m = DenseTensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let t = svd_truncated(&m, 1).unwrap();
        let rec = t.reconstruct();
        assert!((rec.get(&[0, 0]) - 3.0).abs() < 1e-5);
        assert!(rec.get(&[0, 1]).abs() < 1e-5);
        assert!(rec.get(&[1, 0]).abs() < 1e-5);
        assert!(rec.get(&[1, 1]).abs() < 1e-5);
        // absolute Frobenius error is exactly the dropped singular value
        let mut diff = 0.0f64;
        for (a, b) in m.data().iter().zip(rec.data()) {
            diff += ((a - b) as f64).powi(2);
        }
        assert!((diff.sqrt() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn truncated_beats_random_projections() {
        let m = seeded((32, 32), 1.0);
        let rank = 6;
        let t = svd_truncated(&m, rank).unwrap();
        let svd_err = relative_error(&m, &t.reconstruct()).unwrap();

        // oracle baseline: 50 random orthonormal rank-R projections built by
        // Gram-Schmidt, independent of the svd under test
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _trial in 0..50 {
            let mut q: Vec<Vec<f64>> = Vec::new();
            while q.len() < rank {
                let mut col: Vec<f64> = (0..32).map(|_| next()).collect();
                for prev in &q {
                    let proj: f64 = col.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (c, p) in col.iter_mut().zip(prev) {
                        *c -= proj * p;
                    }
                }
                let nrm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm > 1e-6 {
                    col.iter_mut().for_each(|x| *x /= nrm);
                    q.push(col);
                }
            }
            // approx = Q Qᵀ m
            let mut approx = vec![0.0f32; 32 * 32];
            for col in 0..32 {
                for r in 0..rank {
                    let mut qtm = 0.0f64;
                    for row in 0..32 {
                        qtm += q[r][row] * m.get(&[row, col]) as f64;
                    }
                    for row in 0..32 {
                        approx[row * 32 + col] += (q[r][row] * qtm) as f32;
                    }
                }
            }
            let approx = DenseTensor::from_parts(vec![32, 32], approx);
            let rand_err = relative_error(&m, &approx).unwrap();
            assert!(
                svd_err <= rand_err + 1e-9,
                "random projection beat truncated svd: {rand_err} < {svd_err}"
            );
        }
    }

    #[test]
    fn rank_out_of_range() {
        let m = seeded((4, 6), 1.0);
        assert!(svd_truncated(&m, 0).is_err());
        assert!(svd_truncated(&m, 5).is_err());
    }
}
