//! The `TDZ1` container file format.
//!
//! Byte layout:
//!
//! | bytes                | content                                          |
//! |----------------------|--------------------------------------------------|
//! | `0..4`               | magic `54 44 5A 31` (`"TDZ1"`)                   |
//! | `4..8`               | `u32` LE length of the JSON header               |
//! | `8..8+hlen`          | UTF-8 JSON header                                |
//! | `8+hlen..8+hlen+4`   | `u32` LE CRC32 of the JSON header bytes          |
//! | pad to 64            | zeros                                            |
//! | payload              | segments, each 64-byte aligned                   |
//!
//! A segment is raw little-endian `f32` data followed by a `u32` LE CRC32 of
//! those bytes. Segment offsets in the header are relative to the payload
//! start (the first 64-byte boundary after the header checksum), so the
//! header's own length never feeds back into its content.
//!
//! The header is `{"version":1,"tensors":[...]}`, one record per tensor with
//! `name`, `role`, `group`, `kind` (`dense|svd|tucker|cp|tt`), `shape`,
//! optional `ranks`, `dtype` (`"f32"`) and the segment table. Segment order
//! per kind: dense `[data]`; svd `[a, b]`; tucker `[core, factor_0...]`;
//! cp `[weights, factor_0...]`; tt `[core_0...]`.
//!
//! Every validation failure is a distinct typed error and the loader never
//! returns a partially built container.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{Group, ModelContainer, Role, TensorEntry, TensorPayload};
use crate::decompose::{CpFactors, FactoredTensor, SvdFactors, TtFactors, TuckerFactors};
use crate::tensor::DenseTensor;

pub const MAGIC: [u8; 4] = *b"TDZ1";
pub const VERSION: u32 = 1;
const ALIGN: usize = 64;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes (expected \"TDZ1\")")]
    BadMagic,

    #[error("unsupported container version {0}")]
    Version(u32),

    #[error("header checksum mismatch")]
    HeaderChecksum,

    #[error("checksum mismatch in segment {segment} of tensor '{name}'")]
    Checksum { name: String, segment: usize },

    #[error("malformed container: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    tensors: Vec<HeaderTensor>,
}

#[derive(Serialize, Deserialize)]
struct HeaderTensor {
    name: String,
    role: Role,
    group: Group,
    kind: String,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ranks: Option<Vec<usize>>,
    dtype: String,
    segments: Vec<SegmentRef>,
}

#[derive(Serialize, Deserialize)]
struct SegmentRef {
    offset: u64,
    len: u64,
}

fn align_up(v: usize) -> usize {
    v.div_ceil(ALIGN) * ALIGN
}

/// Serialize a container to the TDZ1 byte layout.
pub fn to_bytes(container: &ModelContainer) -> Vec<u8> {
    struct Pending<'a> {
        kind: &'static str,
        ranks: Option<Vec<usize>>,
        shape: Vec<usize>,
        arrays: Vec<&'a [f32]>,
    }

    let pendings: Vec<(&TensorEntry, Pending)> = container
        .entries()
        .iter()
        .map(|entry| {
            let p = match &entry.payload {
                TensorPayload::Dense(t) => Pending {
                    kind: "dense",
                    ranks: None,
                    shape: t.shape().to_vec(),
                    arrays: vec![t.data()],
                },
                TensorPayload::Factored(FactoredTensor::Svd(f)) => Pending {
                    kind: "svd",
                    ranks: Some(vec![f.rank()]),
                    shape: vec![f.a.rows(), f.b.cols()],
                    arrays: vec![f.a.data(), f.b.data()],
                },
                TensorPayload::Factored(FactoredTensor::Tucker(f)) => Pending {
                    kind: "tucker",
                    ranks: Some(f.ranks()),
                    shape: f.original_shape(),
                    arrays: std::iter::once(f.core.data())
                        .chain(f.factors.iter().map(|m| m.data()))
                        .collect(),
                },
                TensorPayload::Factored(FactoredTensor::Cp(f)) => Pending {
                    kind: "cp",
                    ranks: Some(vec![f.rank()]),
                    shape: f.original_shape(),
                    arrays: std::iter::once(&f.weights[..])
                        .chain(f.factors.iter().map(|m| m.data()))
                        .collect(),
                },
                TensorPayload::Factored(FactoredTensor::Tt(f)) => Pending {
                    kind: "tt",
                    ranks: Some(f.ranks()),
                    shape: f.original_shape(),
                    arrays: f.cores.iter().map(|c| c.data()).collect(),
                },
            };
            (entry, p)
        })
        .collect();

    // assign payload-relative offsets
    let mut cursor = 0usize;
    let mut header_tensors = Vec::with_capacity(pendings.len());
    for (entry, p) in &pendings {
        let mut segments = Vec::with_capacity(p.arrays.len());
        for arr in &p.arrays {
            segments.push(SegmentRef {
                offset: cursor as u64,
                len: arr.len() as u64,
            });
            cursor = align_up(cursor + arr.len() * 4 + 4);
        }
        header_tensors.push(HeaderTensor {
            name: entry.name.clone(),
            role: entry.role,
            group: entry.group,
            kind: p.kind.to_string(),
            shape: p.shape.clone(),
            ranks: p.ranks.clone(),
            dtype: "f32".into(),
            segments,
        });
    }

    let header = Header {
        version: VERSION,
        tensors: header_tensors,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let payload_start = align_up(8 + header_json.len() + 4);
    let mut out = Vec::with_capacity(payload_start + cursor);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&crc32fast::hash(&header_json).to_le_bytes());
    out.resize(payload_start, 0);

    for (_, p) in &pendings {
        for arr in &p.arrays {
            // pad up to this segment's 64-byte boundary; no padding trails
            // the final segment
            out.resize(align_up(out.len()), 0);
            let start = out.len();
            out.reserve(arr.len() * 4 + 4);
            for v in *arr {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend_from_slice(&crc.to_le_bytes());
        }
    }
    out
}

/// Parse a container from TDZ1 bytes. All arithmetic is overflow-checked so
/// corrupted headers produce typed errors rather than panics.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelContainer, FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::Malformed("file shorter than the fixed prefix".into()));
    }
    if bytes[0..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .ok_or_else(|| FormatError::Malformed("header length overflows".into()))?;
    if header_end
        .checked_add(4)
        .map_or(true, |end| end > bytes.len())
    {
        return Err(FormatError::Malformed(format!(
            "header length {header_len} exceeds file size {}",
            bytes.len()
        )));
    }
    let header_bytes = &bytes[8..header_end];
    let stored_crc = u32::from_le_bytes(bytes[header_end..header_end + 4].try_into().unwrap());
    if crc32fast::hash(header_bytes) != stored_crc {
        return Err(FormatError::HeaderChecksum);
    }
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| FormatError::Malformed(format!("header json: {e}")))?;
    if header.version != VERSION {
        return Err(FormatError::Version(header.version));
    }
    let payload_start = align_up(header_end + 4);

    let mut entries = Vec::with_capacity(header.tensors.len());
    for t in header.tensors {
        if t.dtype != "f32" {
            return Err(FormatError::Malformed(format!(
                "tensor '{}' has unsupported dtype '{}'",
                t.name, t.dtype
            )));
        }
        if t.shape.is_empty() || t.shape.contains(&0) {
            return Err(FormatError::Malformed(format!(
                "tensor '{}' has invalid shape {:?}",
                t.name, t.shape
            )));
        }
        let expected = expected_segment_lens(&t.kind, &t.shape, t.ranks.as_deref())
            .map_err(|msg| FormatError::Malformed(format!("tensor '{}': {msg}", t.name)))?;
        if expected.len() != t.segments.len() {
            return Err(FormatError::Malformed(format!(
                "tensor '{}' wants {} segments, header lists {}",
                t.name,
                expected.len(),
                t.segments.len()
            )));
        }

        let mut arrays: Vec<Vec<f32>> = Vec::with_capacity(expected.len());
        for (i, (seg, &want_len)) in t.segments.iter().zip(&expected).enumerate() {
            if seg.len != want_len as u64 {
                return Err(FormatError::Malformed(format!(
                    "segment {i} of tensor '{}' has length {}, expected {want_len}",
                    t.name, seg.len
                )));
            }
            if seg.offset % ALIGN as u64 != 0 {
                return Err(FormatError::Malformed(format!(
                    "segment {i} of tensor '{}' is not 64-byte aligned",
                    t.name
                )));
            }
            let start = (payload_start as u64)
                .checked_add(seg.offset)
                .and_then(|v| usize::try_from(v).ok())
                .ok_or_else(|| FormatError::Malformed("segment offset overflows".into()))?;
            let nbytes = seg
                .len
                .checked_mul(4)
                .and_then(|v| usize::try_from(v).ok())
                .ok_or_else(|| FormatError::Malformed("segment size overflows".into()))?;
            let end = start
                .checked_add(nbytes)
                .and_then(|v| v.checked_add(4))
                .ok_or_else(|| FormatError::Malformed("segment end overflows".into()))?;
            if end > bytes.len() {
                return Err(FormatError::Malformed(format!(
                    "segment {i} of tensor '{}' runs past the end of the file",
                    t.name
                )));
            }
            let data = &bytes[start..start + nbytes];
            let stored = u32::from_le_bytes(bytes[start + nbytes..end].try_into().unwrap());
            if crc32fast::hash(data) != stored {
                return Err(FormatError::Checksum {
                    name: t.name.clone(),
                    segment: i,
                });
            }
            arrays.push(
                data.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }

        let payload = rebuild_payload(&t.kind, &t.shape, t.ranks.as_deref(), arrays)
            .map_err(|msg| FormatError::Malformed(format!("tensor '{}': {msg}", t.name)))?;
        let entry = TensorEntry::new(t.name.clone(), t.role, t.group, payload)
            .map_err(|e| FormatError::Malformed(e.to_string()))?;
        entries.push(entry);
    }

    ModelContainer::from_entries(entries).map_err(|e| FormatError::Malformed(e.to_string()))
}

/// Expected per-segment element counts for a kind, with checked arithmetic.
fn expected_segment_lens(
    kind: &str,
    shape: &[usize],
    ranks: Option<&[usize]>,
) -> Result<Vec<usize>, String> {
    let product = |dims: &[usize]| -> Result<usize, String> {
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| "element count overflows".to_string())
    };
    let mul = |a: usize, b: usize| -> Result<usize, String> {
        a.checked_mul(b).ok_or_else(|| "element count overflows".to_string())
    };

    match kind {
        "dense" => {
            if ranks.is_some() {
                return Err("dense tensors carry no ranks".into());
            }
            Ok(vec![product(shape)?])
        }
        "svd" => {
            let ranks = ranks.ok_or("svd needs ranks")?;
            if shape.len() != 2 || ranks.len() != 1 {
                return Err(format!("svd arity mismatch: shape {shape:?}, ranks {ranks:?}"));
            }
            let r = ranks[0];
            if r == 0 {
                return Err("zero rank".into());
            }
            Ok(vec![mul(shape[0], r)?, mul(r, shape[1])?])
        }
        "tucker" => {
            let ranks = ranks.ok_or("tucker needs ranks")?;
            if ranks.len() != shape.len() || ranks.contains(&0) {
                return Err(format!("tucker arity mismatch: shape {shape:?}, ranks {ranks:?}"));
            }
            let mut lens = vec![product(ranks)?];
            for (&d, &r) in shape.iter().zip(ranks) {
                lens.push(mul(d, r)?);
            }
            Ok(lens)
        }
        "cp" => {
            let ranks = ranks.ok_or("cp needs ranks")?;
            if ranks.len() != 1 || ranks[0] == 0 {
                return Err(format!("cp arity mismatch: ranks {ranks:?}"));
            }
            let r = ranks[0];
            let mut lens = vec![r];
            for &d in shape {
                lens.push(mul(d, r)?);
            }
            Ok(lens)
        }
        "tt" => {
            let ranks = ranks.ok_or("tt needs ranks")?;
            if shape.len() < 2 || ranks.len() != shape.len() - 1 || ranks.contains(&0) {
                return Err(format!("tt arity mismatch: shape {shape:?}, ranks {ranks:?}"));
            }
            let mut lens = Vec::with_capacity(shape.len());
            let mut prev = 1usize;
            for (n, &d) in shape.iter().enumerate() {
                let next = if n < ranks.len() { ranks[n] } else { 1 };
                lens.push(mul(mul(prev, d)?, next)?);
                prev = next;
            }
            Ok(lens)
        }
        other => Err(format!("unknown kind '{other}'")),
    }
}

fn rebuild_payload(
    kind: &str,
    shape: &[usize],
    ranks: Option<&[usize]>,
    mut arrays: Vec<Vec<f32>>,
) -> Result<TensorPayload, String> {
    let tensor = |shape: Vec<usize>, data: Vec<f32>| -> Result<DenseTensor, String> {
        DenseTensor::new(shape, data).map_err(|e| e.to_string())
    };
    match kind {
        "dense" => Ok(TensorPayload::Dense(tensor(
            shape.to_vec(),
            arrays.pop().expect("validated arity"),
        )?)),
        "svd" => {
            let r = ranks.unwrap()[0];
            let b = tensor(vec![r, shape[1]], arrays.pop().unwrap())?;
            let a = tensor(vec![shape[0], r], arrays.pop().unwrap())?;
            Ok(TensorPayload::Factored(FactoredTensor::Svd(
                SvdFactors::new(a, b).map_err(|e| e.to_string())?,
            )))
        }
        "tucker" => {
            let ranks = ranks.unwrap();
            let mut iter = arrays.into_iter();
            let core = tensor(ranks.to_vec(), iter.next().unwrap())?;
            let mut factors = Vec::with_capacity(shape.len());
            for (&d, &r) in shape.iter().zip(ranks) {
                factors.push(tensor(vec![d, r], iter.next().unwrap())?);
            }
            Ok(TensorPayload::Factored(FactoredTensor::Tucker(
                TuckerFactors::new(core, factors).map_err(|e| e.to_string())?,
            )))
        }
        "cp" => {
            let r = ranks.unwrap()[0];
            let mut iter = arrays.into_iter();
            let weights = iter.next().unwrap();
            if weights.iter().any(|v| !v.is_finite()) {
                return Err("non-finite cp weights".into());
            }
            let mut factors = Vec::with_capacity(shape.len());
            for &d in shape {
                factors.push(tensor(vec![d, r], iter.next().unwrap())?);
            }
            Ok(TensorPayload::Factored(FactoredTensor::Cp(
                CpFactors::new(weights, factors).map_err(|e| e.to_string())?,
            )))
        }
        "tt" => {
            let ranks = ranks.unwrap();
            let mut cores = Vec::with_capacity(shape.len());
            let mut prev = 1usize;
            for ((n, &d), data) in shape.iter().enumerate().zip(arrays) {
                let next = if n < ranks.len() { ranks[n] } else { 1 };
                cores.push(tensor(vec![prev, d, next], data)?);
                prev = next;
            }
            Ok(TensorPayload::Factored(FactoredTensor::Tt(
                TtFactors::new(cores).map_err(|e| e.to_string())?,
            )))
        }
        _ => unreachable!("kind validated earlier"),
    }
}

/// Write a container to disk atomically (temp file + rename).
pub fn save(container: &ModelContainer, path: &Path) -> Result<(), FormatError> {
    let bytes = to_bytes(container);
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a container from disk.
pub fn load(path: &Path) -> Result<ModelContainer, FormatError> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}
