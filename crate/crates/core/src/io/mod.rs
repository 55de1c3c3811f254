//! On-disk formats: trajectory files, dataset directories, model checkpoints,
//! graph dumps, metric reports and experiment configs.
//!
//! The two binary formats (trajectories, checkpoints) share the same shape:
//! an 8-byte magic, a little-endian header, a payload, and a trailing FNV-1a
//! checksum over everything before it. Loaders verify magic, version and
//! checksum before touching the payload, so a truncated or bit-flipped file
//! fails with [`Error::Format`] instead of producing quiet garbage.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod graph_json;
pub mod reports;
pub mod traj;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{
    config_hash, load_experiment_config, save_experiment_config, validate_graph_policy,
    DatasetSizes, ExperimentConfig,
};
pub use dataset::{dataset_seed_offset, generate_dataset, load_split, save_split, split_dir, traj_file_name, Split};
pub use graph_json::{graph_to_json, model_graph_to_json, save_graph_json};
pub use reports::{bench_csv, curve_csv, eval_report_csv, gen_rows_csv, save_json, save_text};
pub use traj::{export_trajectory_csv, load_trajectory, save_trajectory, trajectory_from_bytes, trajectory_to_bytes};

/// 64-bit FNV-1a. Used for file checksums and config hashes; not
/// cryptographic, just cheap corruption detection with a stable definition.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Appends the checksum of everything written so far.
pub(crate) fn seal(buf: &mut Vec<u8>) {
    let sum = fnv1a64(buf);
    buf.extend_from_slice(&sum.to_le_bytes());
}

/// Verifies the trailing checksum and returns the sealed content.
pub(crate) fn unseal(buf: &[u8]) -> Result<&[u8]> {
    if buf.len() < 8 {
        return Err(Error::Format("file too short to hold a checksum".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(Error::Format(format!(
            "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
        )));
    }
    Ok(body)
}

/// Sequential little-endian reader over a byte slice; all reads are
/// bounds-checked and report truncation as a format error.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated file: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
