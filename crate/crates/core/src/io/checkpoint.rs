//! Model checkpoints.
//!
//! Layout: `"HNBCKPT\0"` magic, `u32` version, `u32` metadata length, a JSON
//! metadata blob, the raw tensor data (row-major `f64` little-endian, in
//! manifest order), and a trailing FNV-1a checksum. The metadata names every
//! tensor (`<group>.w<i>` / `<group>.b<i>` following the canonical group
//! order) with its shape, so a loader can verify the file against the
//! architecture implied by the variant tag before reading a single float.
//! Parameter values round-trip bit-exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gn::mlp::Activation;
use crate::models::{GraphPolicy, ModelParams, ModelVariant};
use crate::sim::ForceLaw;

use super::{seal, unseal, ByteReader};

pub const CKPT_MAGIC: &[u8; 8] = b"HNBCKPT\0";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: ModelVariant,
    pub force_law: ForceLaw,
    pub with_hier: bool,
    /// Interaction graph the parameters were trained with; evaluation
    /// defaults to the same policy.
    pub graph: GraphPolicy,
    pub activation: Activation,
    /// Training seed (provenance only).
    pub seed: u64,
    /// Optimizer steps behind these parameters.
    pub train_steps: usize,
    pub n_params: usize,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

/// `(name, tensor)` pairs in canonical order: groups as in
/// [`ModelParams::groups`], each layer's weights before its bias.
fn named_tensors(params: &ModelParams) -> Vec<(String, &Array2<f64>)> {
    let mut out = Vec::new();
    for (group, mlp) in params.groups() {
        for (i, (w, b)) in mlp.layers.iter().enumerate() {
            out.push((format!("{group}.w{i}"), w));
            out.push((format!("{group}.b{i}"), b));
        }
    }
    out
}

pub fn checkpoint_to_bytes(
    params: &ModelParams,
    graph: &GraphPolicy,
    seed: u64,
    train_steps: usize,
) -> Result<Vec<u8>> {
    let tensors = named_tensors(params);
    let meta = CheckpointMeta {
        variant: params.variant,
        force_law: params.force_law,
        with_hier: params.hier.is_some(),
        graph: *graph,
        activation: params.variant.activation(),
        seed,
        train_steps,
        n_params: params.n_params(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorInfo { name: name.clone(), rows: t.nrows(), cols: t.ncols() })
            .collect(),
    };
    let meta_json = serde_json::to_vec(&meta)
        .map_err(|e| Error::Format(format!("cannot encode checkpoint metadata: {e}")))?;

    let mut buf = Vec::with_capacity(24 + meta_json.len() + meta.n_params * 8);
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    for (_, t) in &tensors {
        for &v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    seal(&mut buf);
    Ok(buf)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let body = unseal(bytes)?;
    let mut r = ByteReader::new(body);
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CKPT_VERSION})"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Format(format!("bad checkpoint metadata: {e}")))?;
    if meta.activation != meta.variant.activation() {
        return Err(Error::Format(format!(
            "metadata claims {:?} activation for the {} variant",
            meta.activation, meta.variant
        )));
    }

    let mut params = ModelParams::zeros(meta.variant, meta.force_law, meta.with_hier);
    let mut manifest = meta.tensors.iter();
    for (group, mlp) in params.groups_mut() {
        for (i, (w, b)) in mlp.layers.iter_mut().enumerate() {
            for (suffix, t) in [("w", &mut *w), ("b", b)] {
                let info = manifest.next().ok_or_else(|| {
                    Error::Format(format!("manifest ends before tensor {group}.{suffix}{i}"))
                })?;
                let want_name = format!("{group}.{suffix}{i}");
                if info.name != want_name {
                    return Err(Error::Format(format!(
                        "tensor name mismatch: manifest says {:?}, architecture expects {want_name:?}",
                        info.name
                    )));
                }
                if (info.rows, info.cols) != t.dim() {
                    return Err(Error::Format(format!(
                        "tensor {want_name} is {}x{} in the manifest, {}x{} in the architecture",
                        info.rows,
                        info.cols,
                        t.nrows(),
                        t.ncols()
                    )));
                }
                for v in t.iter_mut() {
                    *v = r.f64()?;
                }
            }
        }
    }
    if let Some(extra) = manifest.next() {
        return Err(Error::Format(format!(
            "manifest lists unexpected tensor {:?}",
            extra.name
        )));
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor data",
            r.remaining()
        )));
    }
    if params.n_params() != meta.n_params {
        return Err(Error::Format(format!(
            "metadata claims {} parameters, tensors hold {}",
            meta.n_params,
            params.n_params()
        )));
    }
    Ok(Checkpoint { params, meta })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    graph: &GraphPolicy,
    seed: u64,
    train_steps: usize,
) -> Result<()> {
    let bytes = checkpoint_to_bytes(params, graph, seed, train_steps)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    checkpoint_from_bytes(&fs::read(path)?)
}
