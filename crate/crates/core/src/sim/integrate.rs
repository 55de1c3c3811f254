//! Leapfrog integration with hierarchical per-particle timestep levels.
//!
//! A base step of length `dt_base` is subdivided into levels `n` with
//! `dt_n = dt_base / 2^n`. Each particle is assigned the smallest level whose
//! step is below its adaptive criterion `dt_i = eta * sqrt(eps / |a_i|)`
//! (clamped to `0..=max_timestep_level`), from the accelerations at the start
//! of the base step.
//!
//! Kicks are scheduled *per pair*, not per particle: the interaction (i, j)
//! is applied with kick-drift-kick cadence at level `min(n_i, n_j)`, i.e. at
//! every substep boundary both particles share, with weight `dt_level` at
//! interior boundaries and `dt_level / 2` at the two ends of the base step.
//! All particles drift every finest substep, so positions stay synchronised.
//! This is a nested (RESPA-style) splitting of the pair potential: each
//! impulse is pairwise antisymmetric, which conserves total linear momentum
//! to rounding error — a per-particle kick schedule would not, because mixed
//! pairs would receive unequal kick totals between force refreshes.

use super::forces::{accelerations_unchecked, pair_force_raw};
use super::pbc::wrap_pos;
use super::{ParticleSystem, SimConfig, TrajStatus, Trajectory};
use crate::error::{Error, Result};

/// Timestep level for a particle with acceleration `accel`: the smallest `n`
/// with `dt_base / 2^n` strictly below `eta * sqrt(eps / |a|)`, clamped.
/// Zero acceleration means no constraint, hence level 0.
pub fn assign_timestep_level(accel: [f64; 2], config: &SimConfig) -> u32 {
    let a = (accel[0] * accel[0] + accel[1] * accel[1]).sqrt();
    if a == 0.0 {
        return 0;
    }
    let dt_wanted = config.eta * (config.softening / a).sqrt();
    let mut dt_n = config.dt_base;
    for n in 0..=config.max_timestep_level {
        if dt_n < dt_wanted {
            return n;
        }
        dt_n *= 0.5;
    }
    config.max_timestep_level
}

/// One time-synchronised kick-drift-kick step at a uniform dt:
/// `q1 = q0 + v0 dt + a0 dt^2 / 2`, `v1 = v0 + (a0 + a1) dt / 2`.
pub fn leapfrog_step(sys: &ParticleSystem, dt: f64, config: &SimConfig) -> Result<ParticleSystem> {
    config.validate()?;
    sys.validate(config)?;
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::invalid(format!("dt must be finite and nonzero, got {dt}")));
    }
    let a0 = accelerations_unchecked(config, sys);
    let mut next = sys.clone();
    for (i, q) in next.positions.iter_mut().enumerate() {
        let v = sys.velocities[i];
        q[0] += v[0] * dt + 0.5 * a0[i][0] * dt * dt;
        q[1] += v[1] * dt + 0.5 * a0[i][1] * dt * dt;
        *q = wrap_pos(*q, config.cell_size);
    }
    let a1 = accelerations_unchecked(config, &next);
    for (i, v) in next.velocities.iter_mut().enumerate() {
        v[0] += 0.5 * (a0[i][0] + a1[i][0]) * dt;
        v[1] += 0.5 * (a0[i][1] + a1[i][1]) * dt;
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("state after leapfrog step".into()));
    }
    Ok(next)
}

/// Advances one base step with hierarchical sublevels. Levels are assigned
/// once, from the accelerations at the start of the step.
pub fn hierarchical_base_step(sys: &ParticleSystem, config: &SimConfig) -> Result<ParticleSystem> {
    config.validate()?;
    sys.validate(config)?;
    let acc = accelerations_unchecked(config, sys);
    let levels: Vec<u32> = acc.iter().map(|&a| assign_timestep_level(a, config)).collect();
    step_with_levels(sys, config, &levels)
}

fn step_with_levels(sys: &ParticleSystem, config: &SimConfig, levels: &[u32]) -> Result<ParticleSystem> {
    let n = sys.len();
    let n_max = levels.iter().copied().max().unwrap_or(0);
    let s_total: u64 = 1 << n_max;
    let h = config.dt_base / s_total as f64;

    let mut positions = sys.positions.clone();
    let mut velocities = sys.velocities.clone();
    let masses = &sys.masses;
    let charges = sys.charges.as_deref();
    // Particle i participates in kicks at boundaries divisible by its stride.
    let strides: Vec<u64> = levels.iter().map(|&l| 1u64 << (n_max - l)).collect();

    let mut active = Vec::with_capacity(n);
    for s in 0..=s_total {
        active.clear();
        active.extend((0..n).filter(|&i| s % strides[i] == 0));
        // Ends of the base step carry half kicks (the interior full kicks are
        // two merged halves of adjacent intervals).
        let end_factor = if s == 0 || s == s_total { 0.5 } else { 1.0 };
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                // Both strides divide s, so the pair's own boundary (at the
                // coarser of the two levels) is exactly now.
                let pair_level = levels[i].min(levels[j]);
                let w = end_factor * config.dt_base / (1u64 << pair_level) as f64;
                let f = pair_force_raw(config, &positions, masses, charges, i, j);
                velocities[i][0] += w * f[0] / masses[i];
                velocities[i][1] += w * f[1] / masses[i];
                velocities[j][0] -= w * f[0] / masses[j];
                velocities[j][1] -= w * f[1] / masses[j];
            }
        }
        if s < s_total {
            for (q, v) in positions.iter_mut().zip(&velocities) {
                q[0] += v[0] * h;
                q[1] += v[1] * h;
                *q = wrap_pos(*q, config.cell_size);
            }
        }
    }

    let next = ParticleSystem {
        masses: sys.masses.clone(),
        positions,
        velocities,
        charges: sys.charges.clone(),
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("state after hierarchical base step".into()));
    }
    Ok(next)
}

/// Runs `config.n_base_steps` hierarchical base steps from `init`, recording a
/// snapshot after each. Numerical overflow does not fail the call: the
/// trajectory is returned truncated with an explicit status.
pub fn simulate_trajectory(init: &ParticleSystem, config: &SimConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    init.validate(config)?;
    let mut snapshots = Vec::with_capacity(config.n_base_steps + 1);
    snapshots.push(init.clone());
    let mut status = TrajStatus::Complete;
    for step in 0..config.n_base_steps {
        match hierarchical_base_step(snapshots.last().unwrap(), config) {
            Ok(next) => snapshots.push(next),
            Err(Error::NonFinite(_)) => {
                status = TrajStatus::Truncated { at_base_step: step };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { config: config.clone(), seed, snapshots, status })
}
