//! Deterministic synthetic tensors and containers for tests and demos.
//!
//! `weight_like_tensor` produces tensors with geometrically decaying
//! per-mode spectra, the structure trained network weights actually have
//! and the regime where rank truncation at moderate ratios keeps most of the
//! energy. Pure i.i.d. noise has no such structure and would make every
//! truncation look equally bad.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Group, ModelContainer, Role, TensorEntry};
use crate::error::Result;
use crate::tensor::{increment_index, DenseTensor};

/// Default spectral decay rate for synthetic weights: mode energy falls off
/// as `exp(−2·decay·i/I_n)` along each mode.
pub const DEFAULT_DECAY: f64 = 12.0;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per draw keeps the stream layout obvious
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// I.i.d. standard-normal tensor.
pub fn gaussian_tensor(shape: &[usize], seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data: Vec<f32> = (0..len).map(|_| standard_normal(&mut rng) as f32).collect();
    DenseTensor::from_parts(shape.to_vec(), data)
}

/// Tensor with decaying multilinear spectrum: a gaussian core scaled by
/// `Π_n exp(−decay·i_n/I_n)`, mixed by one dense gaussian matrix per mode.
pub fn weight_like_tensor(shape: &[usize], seed: u64, decay: f64) -> DenseTensor {
    let decays = vec![decay; shape.len()];
    weight_like_tensor_anisotropic(shape, seed, &decays)
}

/// As [`weight_like_tensor`] with one decay rate per mode. Convolution
/// kernels are typically rich across channels and smooth along the kernel
/// axis; a large decay on the kernel mode models that.
pub fn weight_like_tensor_anisotropic(shape: &[usize], seed: u64, decays: &[f64]) -> DenseTensor {
    assert_eq!(shape.len(), decays.len(), "one decay per mode");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();

    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..len {
        let scale: f64 = idx
            .iter()
            .zip(shape)
            .zip(decays)
            .map(|((&i, &d), &decay)| (-decay * i as f64 / d as f64).exp())
            .product();
        data.push((standard_normal(&mut rng) * scale) as f32);
        increment_index(&mut idx, shape);
    }
    let mut t = DenseTensor::from_parts(shape.to_vec(), data);

    if shape.len() >= 2 {
        for (mode, &dim) in shape.iter().enumerate() {
            let inv_sqrt = 1.0 / (dim as f64).sqrt();
            let mix: Vec<f32> = (0..dim * dim)
                .map(|_| (standard_normal(&mut rng) * inv_sqrt) as f32)
                .collect();
            let mix = DenseTensor::from_parts(vec![dim, dim], mix);
            t = t.mode_n_product(&mix, mode).expect("square mixing matrix");
        }
    }
    t
}

/// Tensor of exact multilinear rank at most `ranks`: a gaussian core of that
/// size expanded by one `I_n × r_n` gaussian map per mode.
pub fn exact_rank_tensor(shape: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clamped: Vec<usize> = ranks
        .iter()
        .zip(shape)
        .map(|(&r, &d)| r.clamp(1, d))
        .collect();
    let core_len: usize = clamped.iter().product();
    let core = DenseTensor::new(
        clamped.clone(),
        (0..core_len)
            .map(|_| standard_normal(&mut rng) as f32)
            .collect(),
    )?;
    let mut t = core;
    for (mode, (&dim, &r)) in shape.iter().zip(&clamped).enumerate() {
        let map: Vec<f32> = (0..dim * r)
            .map(|_| (standard_normal(&mut rng) / (r as f64).sqrt()) as f32)
            .collect();
        let map = DenseTensor::new(vec![dim, r], map)?;
        t = t.mode_n_product(&map, mode)?;
    }
    Ok(t)
}

/// One tensor of a shape inventory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub name: String,
    pub role: Role,
    pub group: Group,
    pub shape: Vec<usize>,
}

/// JSON-loadable description of a synthetic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeInventory {
    pub tensors: Vec<InventoryEntry>,
}

fn fnv1a(name: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in name.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Build a container from an inventory. Weights get the decaying-spectrum
/// generator; `other` tensors (biases and the like) are plain gaussian. Each
/// tensor's stream is seeded from the container seed and its name, so the
/// result does not depend on inventory order.
pub fn container_from_inventory(inv: &ShapeInventory, seed: u64) -> Result<ModelContainer> {
    let mut container = ModelContainer::new();
    for entry in &inv.tensors {
        let tensor_seed = seed ^ fnv1a(&entry.name);
        let tensor = match entry.role {
            Role::Other => gaussian_tensor(&entry.shape, tensor_seed),
            _ => weight_like_tensor(&entry.shape, tensor_seed, DEFAULT_DECAY),
        };
        container.push(TensorEntry::new(
            entry.name.clone(),
            entry.role,
            entry.group,
            crate::container::TensorPayload::Dense(tensor),
        )?)?;
    }
    Ok(container)
}
