//! Rank selection from a target parameter-compression ratio.
//!
//! The compression ratio γ of a factorization is its stored parameter count
//! divided by the original tensor's element count:
//!
//! - SVD:    γ = (IR + RJ) / IJ, with R = γ·IJ/(I+J) inverted in closed form.
//! - Tucker: γ = (ΠR_n + ΣI_n·R_n) / ΠI_n; the ranks cannot be recovered in
//!   closed form, so they are found by iteratively halving every rank until
//!   the ratio drops under the target.
//! - CP:     γ = R(1 + ΣI_n) / ΠI_n, with R additionally clamped to the
//!   smallest dimension. On convolution kernels that clamp binds at the
//!   kernel size and collapses the achievable budget, which is why CP is a
//!   poor fit there.
//! - TT:     γ = Σ r_{n−1}·I_n·r_n / ΠI_n (r_0 = r_N = 1), reduced by the
//!   same halving loop starting from the exact-representation bounds.
//!
//! The halving loop has a deliberate quirk carried over verbatim from its
//! printed form: the running ratio starts at infinity, so at least one
//! halving happens even when the full ranks already satisfy the target. The
//! loop works on real-valued ranks, clamps each at 1, and the final ranks are
//! floored to integers on exit.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Decomposition family a plan applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svd,
    Tucker,
    Cp,
    Tt,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Svd => "svd",
            Method::Tucker => "tucker",
            Method::Cp => "cp",
            Method::Tt => "tt",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "svd" => Ok(Method::Svd),
            "tucker" => Ok(Method::Tucker),
            "cp" => Ok(Method::Cp),
            "tt" => Ok(Method::Tt),
            other => Err(format!("unknown method '{other}' (expected svd|tucker|cp|tt)")),
        }
    }
}

/// Resolved ranks for one tensor, with the predicted parameter budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPlan {
    pub method: Method,
    pub target_ratio: f64,
    /// One rank for svd/cp, one per mode for tucker, N−1 for tt.
    pub ranks: Vec<usize>,
    pub predicted_ratio: f64,
    pub original_params: u64,
    pub factored_params: u64,
}

impl RankPlan {
    fn assemble(method: Method, target: f64, ranks: Vec<usize>, shape: &[usize]) -> Result<Self> {
        let (original, factored) = param_counts(method, shape, &ranks)?;
        Ok(RankPlan {
            method,
            target_ratio: target,
            ranks,
            predicted_ratio: factored as f64 / original as f64,
            original_params: original,
            factored_params: factored,
        })
    }
}

/// Stored-parameter counts `(original, factored)` for a method at given ranks.
pub fn param_counts(method: Method, shape: &[usize], ranks: &[usize]) -> Result<(u64, u64)> {
    let original: u64 = shape.iter().map(|&d| d as u64).product();
    let factored = match method {
        Method::Svd => {
            if shape.len() != 2 || ranks.len() != 1 {
                return Err(arity_error(method, shape, ranks));
            }
            let (i, j) = (shape[0] as u64, shape[1] as u64);
            let r = ranks[0] as u64;
            i * r + r * j
        }
        Method::Tucker => {
            if ranks.len() != shape.len() {
                return Err(arity_error(method, shape, ranks));
            }
            let core: u64 = ranks.iter().map(|&r| r as u64).product();
            let factors: u64 = shape
                .iter()
                .zip(ranks)
                .map(|(&d, &r)| d as u64 * r as u64)
                .sum();
            core + factors
        }
        Method::Cp => {
            if ranks.len() != 1 {
                return Err(arity_error(method, shape, ranks));
            }
            let r = ranks[0] as u64;
            r * (1 + shape.iter().map(|&d| d as u64).sum::<u64>())
        }
        Method::Tt => {
            if shape.len() < 2 || ranks.len() != shape.len() - 1 {
                return Err(arity_error(method, shape, ranks));
            }
            let mut total = 0u64;
            let mut left = 1u64;
            for (n, &dim) in shape.iter().enumerate() {
                let right = if n < ranks.len() { ranks[n] as u64 } else { 1 };
                total += left * dim as u64 * right;
                left = right;
            }
            total
        }
    };
    Ok((original, factored))
}

fn arity_error(method: Method, shape: &[usize], ranks: &[usize]) -> Error {
    Error::ShapeMismatch(format!(
        "{method} plan arity mismatch: shape {shape:?}, ranks {ranks:?}"
    ))
}

fn check_ratio(gamma: f64, cap_at_one: bool) -> Result<()> {
    if !(gamma > 0.0) || (cap_at_one && gamma > 1.0) {
        return Err(Error::InvalidRatio(gamma));
    }
    Ok(())
}

/// SVD rank from the closed form `R = γ·IJ/(I+J)`, floored and clamped to
/// `[1, min(I,J)]`.
pub fn svd_rank(i: usize, j: usize, gamma: f64) -> Result<RankPlan> {
    check_ratio(gamma, true)?;
    let exact = gamma * (i as f64 * j as f64) / (i as f64 + j as f64);
    let rank = (exact.floor() as usize).clamp(1, i.min(j));
    RankPlan::assemble(Method::Svd, gamma, vec![rank], &[i, j])
}

/// Tucker ranks by the size-halving loop.
pub fn tucker_ranks(shape: &[usize], gamma_hat: f64) -> Result<RankPlan> {
    check_ratio(gamma_hat, false)?;
    if shape.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "tucker planning needs order ≥ 2, got shape {shape:?}"
        )));
    }
    let bounds: Vec<f64> = shape.iter().map(|&d| d as f64).collect();
    let ranks = halving_loop(&bounds, gamma_hat, |ranks| {
        let core: f64 = ranks.iter().product();
        let factors: f64 = shape.iter().zip(ranks).map(|(&d, &r)| d as f64 * r).sum();
        (core + factors) / shape.iter().map(|&d| d as f64).product::<f64>()
    });
    RankPlan::assemble(Method::Tucker, gamma_hat, ranks, shape)
}

/// CP rank from the closed form, clamped to the smallest dimension.
pub fn cp_rank(shape: &[usize], gamma: f64) -> Result<RankPlan> {
    check_ratio(gamma, true)?;
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("cp planning needs order ≥ 1".into()));
    }
    let numel: f64 = shape.iter().map(|&d| d as f64).product();
    let col_sum: f64 = 1.0 + shape.iter().map(|&d| d as f64).sum::<f64>();
    let exact = gamma * numel / col_sum;
    let min_dim = *shape.iter().min().expect("non-empty shape");
    let rank = (exact.floor() as usize).clamp(1, min_dim);
    RankPlan::assemble(Method::Cp, gamma, vec![rank], shape)
}

/// Tensor-train ranks: start each bond at its exact-representation bound
/// `min(Π_{m≤n} I_m, Π_{m>n} I_m)` and run the same halving loop on all of
/// them in lockstep.
pub fn tt_ranks(shape: &[usize], gamma_hat: f64) -> Result<RankPlan> {
    check_ratio(gamma_hat, false)?;
    if shape.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "tt planning needs order ≥ 2, got shape {shape:?}"
        )));
    }
    let bounds: Vec<f64> = tt_structural_bounds(shape)
        .into_iter()
        .map(|b| b as f64)
        .collect();
    let numel: f64 = shape.iter().map(|&d| d as f64).product();
    let ranks = halving_loop(&bounds, gamma_hat, |ranks| {
        let mut total = 0.0;
        let mut left = 1.0;
        for (n, &dim) in shape.iter().enumerate() {
            let right = if n < ranks.len() { ranks[n] } else { 1.0 };
            total += left * dim as f64 * right;
            left = right;
        }
        total / numel
    });
    RankPlan::assemble(Method::Tt, gamma_hat, ranks, shape)
}

/// Exact-representation bond bounds for a TT of the given shape.
pub fn tt_structural_bounds(shape: &[usize]) -> Vec<usize> {
    let n = shape.len();
    (1..n)
        .map(|split| {
            let left: usize = shape[..split].iter().product();
            let right: usize = shape[split..].iter().product();
            left.min(right)
        })
        .collect()
}

/// The shared halving loop: γ starts at ∞ (so one halving always runs), every
/// rank is halved as a real number and clamped below at 1, and the loop exits
/// once the recomputed ratio is under the target. Ranks are floored on exit.
/// Once every rank sits at 1 the ratio can no longer move, so the loop also
/// stops there rather than spinning on an unreachable target.
fn halving_loop(bounds: &[f64], gamma_hat: f64, ratio_of: impl Fn(&[f64]) -> f64) -> Vec<usize> {
    let mut ranks: Vec<f64> = bounds.to_vec();
    loop {
        for r in ranks.iter_mut() {
            *r /= 2.0;
            if *r < 1.0 {
                *r = 1.0;
            }
        }
        if ratio_of(&ranks) <= gamma_hat || ranks.iter().all(|&r| r == 1.0) {
            break;
        }
    }
    ranks.iter().map(|&r| (r.floor() as usize).max(1)).collect()
}

/// Re-evaluate a plan's compression-ratio formula for a shape. Exact rational
/// evaluation; equal to `plan.predicted_ratio` whenever the plan was produced
/// for this shape.
pub fn achieved_ratio(plan: &RankPlan, shape: &[usize]) -> Result<f64> {
    let (original, factored) = param_counts(plan.method, shape, &plan.ranks)?;
    Ok(factored as f64 / original as f64)
}
