//! Trajectory files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "HNBTRAJ\0"
//! version          u32      currently 1
//! force_law        u8       0 = gravity, 1 = coulomb
//! status           u8       0 = complete, 1 = truncated
//! truncated_at     u32      base step of truncation (0 when complete)
//! n_particles      u32
//! n_snapshots      u32
//! seed             u64      initial-condition seed
//! grav_const       f64
//! coulomb_const    f64
//! softening        f64
//! eta              f64
//! dt_base          f64
//! cell_size        f64      box side L
//! n_base_steps     u32
//! max_timestep_level u32
//! payload          n_snapshots x n_particles records [m, x, y, vx, vy(, c)]
//! checksum         u64      FNV-1a over everything above
//! ```
//!
//! The record width is 5 floats under gravity and 6 under Coulomb. A CSV
//! export exists for inspection; loading always goes through the binary form.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{ForceLaw, ParticleSystem, SimConfig, TrajStatus, Trajectory};

use super::{seal, unseal, ByteReader};

pub const TRAJ_MAGIC: &[u8; 8] = b"HNBTRAJ\0";
pub const TRAJ_VERSION: u32 = 1;

fn force_law_byte(f: ForceLaw) -> u8 {
    match f {
        ForceLaw::Gravity => 0,
        ForceLaw::Coulomb => 1,
    }
}

fn force_law_from_byte(b: u8) -> Result<ForceLaw> {
    match b {
        0 => Ok(ForceLaw::Gravity),
        1 => Ok(ForceLaw::Coulomb),
        _ => Err(Error::Format(format!("unknown force law byte {b}"))),
    }
}

pub fn trajectory_to_bytes(traj: &Trajectory) -> Result<Vec<u8>> {
    let config = &traj.config;
    config.validate()?;
    if traj.snapshots.is_empty() {
        return Err(Error::invalid("trajectory has no snapshots"));
    }
    let n = traj.n_particles();
    for (s, snap) in traj.snapshots.iter().enumerate() {
        if snap.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "snapshot {s} has {} particles, expected {n}",
                snap.len()
            )));
        }
        snap.validate(config)
            .map_err(|e| Error::invalid(format!("snapshot {s}: {e}")))?;
    }
    let rec = if config.force_law.has_charges() { 6 } else { 5 };
    let (status, truncated_at) = match traj.status {
        TrajStatus::Complete => (0u8, 0u32),
        TrajStatus::Truncated { at_base_step } => (1, at_base_step as u32),
    };

    let mut buf = Vec::with_capacity(96 + traj.snapshots.len() * n * rec * 8);
    buf.extend_from_slice(TRAJ_MAGIC);
    buf.extend_from_slice(&TRAJ_VERSION.to_le_bytes());
    buf.push(force_law_byte(config.force_law));
    buf.push(status);
    buf.extend_from_slice(&truncated_at.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(traj.snapshots.len() as u32).to_le_bytes());
    buf.extend_from_slice(&traj.seed.to_le_bytes());
    for v in [
        config.grav_const,
        config.coulomb_const,
        config.softening,
        config.eta,
        config.dt_base,
        config.cell_size,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(config.n_base_steps as u32).to_le_bytes());
    buf.extend_from_slice(&config.max_timestep_level.to_le_bytes());

    for snap in &traj.snapshots {
        let charges = snap.charges.as_deref();
        for i in 0..n {
            let mut rec_vals = [0.0f64; 6];
            rec_vals[0] = snap.masses[i];
            rec_vals[1] = snap.positions[i][0];
            rec_vals[2] = snap.positions[i][1];
            rec_vals[3] = snap.velocities[i][0];
            rec_vals[4] = snap.velocities[i][1];
            if let Some(c) = charges {
                rec_vals[5] = c[i];
            }
            for v in &rec_vals[..rec] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    seal(&mut buf);
    Ok(buf)
}

pub fn trajectory_from_bytes(bytes: &[u8]) -> Result<Trajectory> {
    let body = unseal(bytes)?;
    let mut r = ByteReader::new(body);
    if r.take(8)? != TRAJ_MAGIC {
        return Err(Error::Format("not a trajectory file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != TRAJ_VERSION {
        return Err(Error::Format(format!(
            "unsupported trajectory version {version} (expected {TRAJ_VERSION})"
        )));
    }
    let force_law = force_law_from_byte(r.u8()?)?;
    let status_byte = r.u8()?;
    let truncated_at = r.u32()?;
    let n = r.u32()? as usize;
    let n_snapshots = r.u32()? as usize;
    let seed = r.u64()?;
    let config = SimConfig {
        force_law,
        grav_const: r.f64()?,
        coulomb_const: r.f64()?,
        softening: r.f64()?,
        eta: r.f64()?,
        dt_base: r.f64()?,
        cell_size: r.f64()?,
        n_base_steps: r.u32()? as usize,
        max_timestep_level: r.u32()?,
    };
    config.validate().map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let status = match status_byte {
        0 => TrajStatus::Complete,
        1 => TrajStatus::Truncated { at_base_step: truncated_at as usize },
        b => return Err(Error::Format(format!("unknown status byte {b}"))),
    };
    if n == 0 || n_snapshots == 0 {
        return Err(Error::Format("trajectory with zero particles or snapshots".into()));
    }

    let rec = if force_law.has_charges() { 6 } else { 5 };
    let expected = n_snapshots * n * rec * 8;
    if r.remaining() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            r.remaining()
        )));
    }
    let mut snapshots = Vec::with_capacity(n_snapshots);
    for s in 0..n_snapshots {
        let mut snap = ParticleSystem {
            masses: Vec::with_capacity(n),
            positions: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            charges: force_law.has_charges().then(|| Vec::with_capacity(n)),
        };
        for _ in 0..n {
            snap.masses.push(r.f64()?);
            snap.positions.push([r.f64()?, r.f64()?]);
            snap.velocities.push([r.f64()?, r.f64()?]);
            if let Some(c) = &mut snap.charges {
                c.push(r.f64()?);
            }
        }
        snap.validate(&config)
            .map_err(|e| Error::Format(format!("snapshot {s} invalid: {e}")))?;
        snapshots.push(snap);
    }
    Ok(Trajectory { config, seed, snapshots, status })
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let bytes = trajectory_to_bytes(traj)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    trajectory_from_bytes(&fs::read(path)?)
}

/// Writes the trajectory as CSV for inspection. One row per particle per
/// snapshot; floats use the shortest representation that round-trips.
pub fn export_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let has_charges = traj.config.force_law.has_charges();
    if has_charges {
        writeln!(w, "step,particle,mass,x,y,vx,vy,charge")?;
    } else {
        writeln!(w, "step,particle,mass,x,y,vx,vy")?;
    }
    for (s, snap) in traj.snapshots.iter().enumerate() {
        for i in 0..snap.len() {
            write!(
                w,
                "{s},{i},{},{},{},{},{}",
                snap.masses[i],
                snap.positions[i][0],
                snap.positions[i][1],
                snap.velocities[i][0],
                snap.velocities[i][1]
            )?;
            if let Some(c) = &snap.charges {
                write!(w, ",{}", c[i])?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
