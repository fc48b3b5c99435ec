//! Neural-network weight compression through low-rank tensor decomposition.
//!
//! The crate factors weight tensors via truncated SVD, Tucker, CP and
//! Tensor-Train decompositions, with ranks chosen from a target parameter-compression
//! ratio, and applies the factored weights to activations without ever
//! rebuilding the dense tensors. Containers of named, role-tagged tensors are
//! persisted in the binary `TDZ1` format.
//!
//! Hot loops run on rayon when the default `parallel` feature is enabled and
//! fall back to sequential code without it; both paths produce identical
//! results.

pub mod container;
pub mod decompose;
pub mod error;
pub mod format;
pub mod kernels;
pub mod layers;
pub mod planner;
pub mod svd;
pub mod synth;
pub mod tensor;

pub use container::{
    CompressionPolicy, CompressionReport, Group, ModelContainer, Role, TensorEntry, TensorPayload,
};
pub use decompose::{CpFactors, FactoredTensor, SvdFactors, TtFactors, TuckerFactors};
pub use error::{Error, Result};
pub use format::FormatError;
pub use layers::{MacCount, Signal};
pub use planner::{Method, RankPlan};
pub use svd::SvdTriple;
pub use tensor::{relative_error, DenseTensor};
