//! Named, role-tagged tensor collections and end-to-end compression.
//!
//! The compression policy is per group: linear weights get SVD at the
//! group's target ratio, convolution kernels get the configured tensor
//! decomposition (tucker by default), and everything tagged `other` (biases,
//! norms, embeddings) passes through untouched. Per-name overrides can pin a
//! different method or ratio for individual tensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decompose::{
    decompose_cp, decompose_svd, decompose_tt, decompose_tucker, FactoredTensor,
};
use crate::error::{Error, Result};
use crate::layers::{
    apply_cp_conv1d, apply_cp_conv2d, apply_factored_conv1d, apply_factored_conv2d,
    apply_factored_linear, dense_conv1d, dense_conv2d, mac_report, Signal,
};
use crate::planner::{cp_rank, svd_rank, tt_ranks, tucker_ranks, Method, RankPlan};
use crate::synth::gaussian_tensor;
use crate::tensor::{relative_error, DenseTensor};

/// HOOI sweeps applied after HOSVD when compressing convolution kernels.
pub const TUCKER_HOOI_SWEEPS: usize = 2;
/// ALS sweep budget for CP compression.
pub const CP_ALS_MAX_SWEEPS: usize = 50;
/// ALS stops once the per-sweep error improvement falls under this.
pub const CP_ALS_TOL: f64 = 1e-6;
/// Fixed tolerance of the factored-vs-dense apply probes in [`verify`].
pub const PROBE_TOL: f64 = 1e-4;

/// What a tensor is used for; decides the default compression method and the
/// expected order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    LinearWeight,
    Conv1dKernel,
    Conv2dKernel,
    Other,
}

impl Role {
    pub fn expected_order(&self) -> Option<usize> {
        match self {
            Role::LinearWeight => Some(2),
            Role::Conv1dKernel => Some(3),
            Role::Conv2dKernel => Some(4),
            Role::Other => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::LinearWeight => "linear_weight",
            Role::Conv1dKernel => "conv1d_kernel",
            Role::Conv2dKernel => "conv2d_kernel",
            Role::Other => "other",
        }
    }
}

/// Which part of the model a tensor belongs to; each group carries its own
/// target ratio so encoder and decoder can be squeezed differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Decoder,
    Other,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::Decoder => "decoder",
            Group::Other => "other",
        }
    }
}

/// Either a dense tensor or one of the factored forms.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorPayload {
    Dense(DenseTensor),
    Factored(FactoredTensor),
}

impl TensorPayload {
    pub fn original_shape(&self) -> Vec<usize> {
        match self {
            TensorPayload::Dense(t) => t.shape().to_vec(),
            TensorPayload::Factored(f) => f.original_shape(),
        }
    }

    /// Stored parameter count.
    pub fn param_count(&self) -> u64 {
        match self {
            TensorPayload::Dense(t) => t.len() as u64,
            TensorPayload::Factored(f) => f.param_count(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, TensorPayload::Dense(_))
    }

    /// Storage kind as written in the file header.
    pub fn kind(&self) -> &'static str {
        match self {
            TensorPayload::Dense(_) => "dense",
            TensorPayload::Factored(f) => f.method().as_str(),
        }
    }

    pub fn ranks(&self) -> Option<Vec<usize>> {
        match self {
            TensorPayload::Dense(_) => None,
            TensorPayload::Factored(f) => Some(f.ranks()),
        }
    }
}

/// One named tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub role: Role,
    pub group: Group,
    pub payload: TensorPayload,
}

impl TensorEntry {
    pub fn new(name: String, role: Role, group: Group, payload: TensorPayload) -> Result<Self> {
        if let Some(expected) = role.expected_order() {
            let order = payload.original_shape().len();
            if order != expected {
                return Err(Error::RoleArity {
                    name,
                    detail: format!("role {} wants order {expected}, tensor has order {order}", role.as_str()),
                });
            }
        }
        Ok(Self { name, role, group, payload })
    }

    pub fn dense(name: &str, role: Role, group: Group, tensor: DenseTensor) -> Result<Self> {
        Self::new(name.to_string(), role, group, TensorPayload::Dense(tensor))
    }
}

/// An ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelContainer {
    entries: Vec<TensorEntry>,
}

impl ModelContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TensorEntry>) -> Result<Self> {
        let mut c = Self::new();
        for e in entries {
            c.push(e)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, entry: TensorEntry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(Error::DuplicateName(entry.name));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_params(&self) -> u64 {
        self.entries.iter().map(|e| e.payload.param_count()).sum()
    }
}

/// Per-name method/ratio override.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyOverride {
    pub method: Option<Method>,
    pub ratio: Option<f64>,
}

/// Group target ratios plus the convolution method.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionPolicy {
    pub encoder_ratio: f64,
    pub decoder_ratio: f64,
    /// Ratio for tensors in group `other`; `None` leaves them untouched.
    pub other_ratio: Option<f64>,
    pub conv_method: Method,
    pub overrides: BTreeMap<String, PolicyOverride>,
}

impl CompressionPolicy {
    pub fn new(encoder_ratio: f64, decoder_ratio: f64) -> Result<Self> {
        for r in [encoder_ratio, decoder_ratio] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidRatio(r));
            }
        }
        Ok(Self {
            encoder_ratio,
            decoder_ratio,
            other_ratio: None,
            conv_method: Method::Tucker,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_conv_method(mut self, method: Method) -> Result<Self> {
        if method == Method::Svd {
            return Err(Error::ShapeMismatch(
                "svd is not a convolution method; pick tucker, cp or tt".into(),
            ));
        }
        self.conv_method = method;
        Ok(self)
    }

    pub fn with_other_ratio(mut self, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidRatio(ratio));
        }
        self.other_ratio = Some(ratio);
        Ok(self)
    }

    pub fn with_override(mut self, name: &str, ov: PolicyOverride) -> Self {
        self.overrides.insert(name.to_string(), ov);
        self
    }

    fn group_ratio(&self, group: Group) -> Option<f64> {
        match group {
            Group::Encoder => Some(self.encoder_ratio),
            Group::Decoder => Some(self.decoder_ratio),
            Group::Other => self.other_ratio,
        }
    }
}

/// Resolve the method and ranks for every compressible tensor. Dense tensors
/// with role `other` (and anything in group `other` without a ratio) are
/// skipped; already-factored entries are never re-planned.
pub fn plan_compression(
    container: &ModelContainer,
    policy: &CompressionPolicy,
) -> Result<BTreeMap<String, RankPlan>> {
    for name in policy.overrides.keys() {
        if container.get(name).is_none() {
            return Err(Error::UnknownTensor(name.clone()));
        }
    }

    let mut plans = BTreeMap::new();
    for entry in container.entries() {
        if !entry.payload.is_dense() {
            continue;
        }
        let ov = policy.overrides.get(&entry.name);
        let ratio = ov
            .and_then(|o| o.ratio)
            .or_else(|| policy.group_ratio(entry.group));
        let method = ov.and_then(|o| o.method).or(match entry.role {
            Role::LinearWeight => Some(Method::Svd),
            Role::Conv1dKernel | Role::Conv2dKernel => Some(policy.conv_method),
            Role::Other => None,
        });
        let (Some(ratio), Some(method)) = (ratio, method) else {
            continue;
        };
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidRatio(ratio));
        }

        let shape = entry.payload.original_shape();
        let plan = match method {
            Method::Svd => {
                if shape.len() != 2 {
                    return Err(Error::RoleArity {
                        name: entry.name.clone(),
                        detail: format!("svd needs an order-2 tensor, got {shape:?}"),
                    });
                }
                svd_rank(shape[0], shape[1], ratio)
            }
            Method::Tucker => tucker_ranks(&shape, ratio),
            Method::Cp => cp_rank(&shape, ratio),
            Method::Tt => tt_ranks(&shape, ratio),
        }
        .map_err(|e| e.for_tensor(&entry.name))?;
        plans.insert(entry.name.clone(), plan);
    }
    Ok(plans)
}

/// Per-tensor row of a [`CompressionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub role: Role,
    pub group: Group,
    pub method: Option<Method>,
    pub shape: Vec<usize>,
    pub ranks: Option<Vec<usize>>,
    pub original_params: u64,
    pub factored_params: u64,
    pub achieved_ratio: f64,
    pub recon_error: f64,
    pub mac_ratio: f64,
    pub mac_no_speedup: bool,
}

/// Totals and per-tensor outcomes of one compression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub tensors: Vec<TensorReport>,
    pub total_params_before: u64,
    pub total_params_after: u64,
    pub global_ratio: f64,
}

/// Compress every planned tensor, leaving the input container untouched.
/// Fails on the first tensor whose decomposition fails, reported by name.
pub fn compress(
    container: &ModelContainer,
    policy: &CompressionPolicy,
) -> Result<(ModelContainer, CompressionReport)> {
    let plans = plan_compression(container, policy)?;

    let process = |entry: &TensorEntry| -> Result<(TensorEntry, TensorReport)> {
        let plan = plans.get(&entry.name);
        match (plan, &entry.payload) {
            (Some(plan), TensorPayload::Dense(dense)) => {
                let factored = run_plan(dense, plan).map_err(|e| e.for_tensor(&entry.name))?;
                let recon = factored.reconstruct().map_err(|e| e.for_tensor(&entry.name))?;
                let recon_error =
                    relative_error(dense, &recon).map_err(|e| e.for_tensor(&entry.name))?;
                let shape = dense.shape().to_vec();
                let mac = mac_report(plan, &shape).map_err(|e| e.for_tensor(&entry.name))?;
                let report = TensorReport {
                    name: entry.name.clone(),
                    role: entry.role,
                    group: entry.group,
                    method: Some(plan.method),
                    shape,
                    ranks: Some(plan.ranks.clone()),
                    original_params: dense.len() as u64,
                    factored_params: factored.param_count(),
                    achieved_ratio: factored.param_count() as f64 / dense.len() as f64,
                    recon_error,
                    mac_ratio: mac.ratio,
                    mac_no_speedup: mac.no_speedup,
                };
                let new_entry = TensorEntry {
                    name: entry.name.clone(),
                    role: entry.role,
                    group: entry.group,
                    payload: TensorPayload::Factored(factored),
                };
                Ok((new_entry, report))
            }
            _ => {
                let params = entry.payload.param_count();
                let report = TensorReport {
                    name: entry.name.clone(),
                    role: entry.role,
                    group: entry.group,
                    method: None,
                    shape: entry.payload.original_shape(),
                    ranks: None,
                    original_params: params,
                    factored_params: params,
                    achieved_ratio: 1.0,
                    recon_error: 0.0,
                    mac_ratio: 1.0,
                    mac_no_speedup: false,
                };
                Ok((entry.clone(), report))
            }
        }
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<(TensorEntry, TensorReport)>> = {
        use rayon::prelude::*;
        container.entries().par_iter().map(process).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(TensorEntry, TensorReport)>> =
        container.entries().iter().map(process).collect();

    let mut entries = Vec::with_capacity(results.len());
    let mut rows = Vec::with_capacity(results.len());
    for result in results {
        let (entry, row) = result?;
        entries.push(entry);
        rows.push(row);
    }

    let total_before: u64 = rows.iter().map(|r| r.original_params).sum();
    let total_after: u64 = rows.iter().map(|r| r.factored_params).sum();
    let report = CompressionReport {
        tensors: rows,
        total_params_before: total_before,
        total_params_after: total_after,
        global_ratio: total_after as f64 / total_before as f64,
    };
    Ok((ModelContainer::from_entries(entries)?, report))
}

fn run_plan(dense: &DenseTensor, plan: &RankPlan) -> Result<FactoredTensor> {
    Ok(match plan.method {
        Method::Svd => FactoredTensor::Svd(decompose_svd(dense, plan.ranks[0])?),
        Method::Tucker => {
            FactoredTensor::Tucker(decompose_tucker(dense, &plan.ranks, TUCKER_HOOI_SWEEPS)?)
        }
        Method::Cp => FactoredTensor::Cp(decompose_cp(
            dense,
            plan.ranks[0],
            CP_ALS_MAX_SWEEPS,
            CP_ALS_TOL,
        )?),
        Method::Tt => FactoredTensor::Tt(decompose_tt(dense, &plan.ranks)?),
    })
}

/// Outcome of verifying one tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub name: String,
    pub recon_error: f64,
    /// Relative error of the factored apply against the dense apply on the
    /// reconstructed tensor, where a factored pipeline exists for the role.
    pub probe_error: Option<f64>,
    pub passed: bool,
}

/// Per-tensor verification results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tensors: Vec<VerifyOutcome>,
    pub all_passed: bool,
}

/// Reconstruct every compressed tensor and compare against the original at
/// `tol`; additionally probes the factored inference pipelines against the
/// dense oracle on seeded random inputs (at the fixed [`PROBE_TOL`]).
pub fn verify(
    original: &ModelContainer,
    compressed: &ModelContainer,
    tol: f64,
    seed: u64,
) -> Result<VerifyReport> {
    if original.len() != compressed.len()
        || original
            .entries()
            .iter()
            .any(|e| compressed.get(&e.name).is_none())
    {
        let missing: Vec<&str> = original
            .entries()
            .iter()
            .filter(|e| compressed.get(&e.name).is_none())
            .map(|e| e.name.as_str())
            .collect();
        return Err(Error::NameSetMismatch(format!(
            "{} vs {} entries, missing from compressed: {missing:?}",
            original.len(),
            compressed.len()
        )));
    }

    let mut outcomes = Vec::with_capacity(original.len());
    for (index, entry) in compressed.entries().iter().enumerate() {
        let reference = &original
            .get(&entry.name)
            .expect("name checked above")
            .payload;
        let reference = match reference {
            TensorPayload::Dense(t) => t.clone(),
            TensorPayload::Factored(f) => f.reconstruct()?,
        };
        let (recon_error, probe_error) = match &entry.payload {
            TensorPayload::Dense(t) => (
                if reference.frobenius_norm() == 0.0 {
                    if t.frobenius_norm() == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    relative_error(&reference, t)?
                },
                None,
            ),
            TensorPayload::Factored(f) => {
                let recon = f.reconstruct()?;
                let err = if reference.frobenius_norm() == 0.0 {
                    if recon.frobenius_norm() == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    relative_error(&reference, &recon)?
                };
                let probe = probe_equivalence(entry.role, f, &recon, seed ^ index as u64)?;
                (err, probe)
            }
        };
        let passed = recon_error <= tol && probe_error.map_or(true, |p| p <= PROBE_TOL);
        outcomes.push(VerifyOutcome {
            name: entry.name.clone(),
            recon_error,
            probe_error,
            passed,
        });
    }
    let all_passed = outcomes.iter().all(|o| o.passed);
    Ok(VerifyReport {
        tensors: outcomes,
        all_passed,
    })
}

/// Compare the factored apply with the dense apply on the reconstruction
/// over a few seeded random probes; returns the worst relative error, or
/// `None` for role/method combinations without a factored pipeline.
fn probe_equivalence(
    role: Role,
    f: &FactoredTensor,
    recon: &DenseTensor,
    seed: u64,
) -> Result<Option<f64>> {
    const PROBES: usize = 3;
    let mut worst: Option<f64> = None;
    for p in 0..PROBES as u64 {
        let err = match (role, f) {
            (Role::LinearWeight, FactoredTensor::Svd(sf)) => {
                let j = sf.b.cols();
                let x = gaussian_tensor(&[j], seed.wrapping_add(p));
                let got = apply_factored_linear(sf, x.data())?;
                let expect = recon.matmul(&x.clone().reshape(vec![j, 1])?)?;
                Some(vec_rel_error(&got, expect.data()))
            }
            (Role::Conv1dKernel, FactoredTensor::Tucker(tf)) => {
                let (j, k) = (tf.factors[1].rows(), tf.factors[2].rows());
                let x = Signal::new(gaussian_tensor(&[j, k + 7], seed.wrapping_add(p)))?;
                let got = apply_factored_conv1d(tf, &x)?;
                let expect = dense_conv1d(recon, &x)?;
                Some(vec_rel_error(got.data().data(), expect.data().data()))
            }
            (Role::Conv1dKernel, FactoredTensor::Cp(cf)) => {
                let (j, k) = (cf.factors[1].rows(), cf.factors[2].rows());
                let x = Signal::new(gaussian_tensor(&[j, k + 7], seed.wrapping_add(p)))?;
                let got = apply_cp_conv1d(cf, &x)?;
                let expect = dense_conv1d(recon, &x)?;
                Some(vec_rel_error(got.data().data(), expect.data().data()))
            }
            (Role::Conv2dKernel, FactoredTensor::Tucker(tf)) => {
                let (j, k1, k2) = (
                    tf.factors[1].rows(),
                    tf.factors[2].rows(),
                    tf.factors[3].rows(),
                );
                let x = gaussian_tensor(&[j, k1 + 3, k2 + 3], seed.wrapping_add(p));
                let got = apply_factored_conv2d(tf, &x)?;
                let expect = dense_conv2d(recon, &x)?;
                Some(vec_rel_error(got.data(), expect.data()))
            }
            (Role::Conv2dKernel, FactoredTensor::Cp(cf)) => {
                let (j, k1, k2) = (
                    cf.factors[1].rows(),
                    cf.factors[2].rows(),
                    cf.factors[3].rows(),
                );
                let x = gaussian_tensor(&[j, k1 + 3, k2 + 3], seed.wrapping_add(p));
                let got = apply_cp_conv2d(cf, &x)?;
                let expect = dense_conv2d(recon, &x)?;
                Some(vec_rel_error(got.data(), expect.data()))
            }
            _ => None,
        };
        match (err, worst) {
            (Some(e), Some(w)) if e > w => worst = Some(e),
            (Some(e), None) => worst = Some(e),
            _ => {}
        }
        if err.is_none() {
            return Ok(None);
        }
    }
    Ok(worst)
}

fn vec_rel_error(got: &[f32], expect: &[f32]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (g, e) in got.iter().zip(expect) {
        let d = (*g as f64) - (*e as f64);
        num += d * d;
        den += (*e as f64) * (*e as f64);
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}
