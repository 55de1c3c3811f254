//! Ground-truth N-body simulator.
//!
//! Point particles in a 2-D periodic box interact through softened gravity or
//! Coulomb forces and are integrated with a time-synchronised leapfrog that
//! supports per-particle hierarchical timestep levels. The simulator is the
//! source of all training and evaluation data, so it is deliberately boring:
//! plain `f64`, fixed iteration order, deterministic for a given seed.

pub mod forces;
pub mod init;
pub mod integrate;
pub mod pbc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pair interaction the simulator (and models conditioned on it) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceLaw {
    Gravity,
    Coulomb,
}

impl ForceLaw {
    /// Charges are an extra per-particle state variable under Coulomb forces.
    pub fn has_charges(self) -> bool {
        matches!(self, ForceLaw::Coulomb)
    }
}

impl std::fmt::Display for ForceLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForceLaw::Gravity => write!(f, "gravity"),
            ForceLaw::Coulomb => write!(f, "coulomb"),
        }
    }
}

/// Physical constants and integration controls for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub force_law: ForceLaw,
    /// Gravitational constant G.
    pub grav_const: f64,
    /// Coulomb constant k (like charges repel).
    pub coulomb_const: f64,
    /// Plummer softening length; also sets the timestep criterion scale.
    pub softening: f64,
    /// Accuracy parameter of the adaptive timestep criterion.
    pub eta: f64,
    /// Base (coarsest) timestep.
    pub dt_base: f64,
    /// Number of base steps per trajectory.
    pub n_base_steps: usize,
    /// Periodic box side length L.
    pub cell_size: f64,
    /// Timestep levels are clamped to `0..=max_timestep_level`.
    pub max_timestep_level: u32,
}

impl SimConfig {
    /// Defaults matching the data-generation setup: G = k = 2, eps = 0.2,
    /// eta = 1e-3, dt = 0.01, 200 base steps, box area 12 per particle.
    pub fn for_particle_count(n: usize, force_law: ForceLaw) -> Self {
        SimConfig {
            force_law,
            grav_const: 2.0,
            coulomb_const: 2.0,
            softening: 0.2,
            eta: 1e-3,
            dt_base: 0.01,
            n_base_steps: 200,
            cell_size: (12.0 * n as f64).sqrt(),
            max_timestep_level: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grav_const", self.grav_const),
            ("coulomb_const", self.coulomb_const),
            ("softening", self.softening),
            ("eta", self.eta),
            ("dt_base", self.dt_base),
            ("cell_size", self.cell_size),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if self.max_timestep_level > 24 {
            return Err(Error::Config(format!(
                "max_timestep_level {} would mean 2^{} substeps",
                self.max_timestep_level, self.max_timestep_level
            )));
        }
        Ok(())
    }
}

/// Instantaneous state of the particle system (positions live in `[0, L)^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    /// Present iff the force law is Coulomb.
    pub charges: Option<Vec<f64>>,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Structural validation against a config: consistent lengths, charges
    /// present exactly for Coulomb, all state finite, positions in the box.
    pub fn validate(&self, config: &SimConfig) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::invalid("particle system is empty"));
        }
        if self.positions.len() != n || self.velocities.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "masses/positions/velocities lengths {}/{}/{} differ",
                n,
                self.positions.len(),
                self.velocities.len()
            )));
        }
        match (&self.charges, config.force_law.has_charges()) {
            (Some(c), true) if c.len() != n => {
                return Err(Error::ShapeMismatch(format!(
                    "charges length {} != particle count {n}",
                    c.len()
                )));
            }
            (Some(_), true) | (None, false) => {}
            (Some(_), false) => {
                return Err(Error::DataMismatch("charges present under gravity".into()));
            }
            (None, true) => {
                return Err(Error::DataMismatch("charges missing under coulomb".into()));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("particle state".into()));
        }
        for (i, q) in self.positions.iter().enumerate() {
            for c in q {
                if !(0.0..config.cell_size).contains(c) {
                    return Err(Error::invalid(format!(
                        "particle {i} position {c} outside [0, {})",
                        config.cell_size
                    )));
                }
            }
        }
        for (i, &m) in self.masses.iter().enumerate() {
            if m <= 0.0 {
                return Err(Error::invalid(format!("particle {i} mass {m} must be positive")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.masses.iter().all(|m| m.is_finite())
            && self.positions.iter().all(|q| q[0].is_finite() && q[1].is_finite())
            && self.velocities.iter().all(|v| v[0].is_finite() && v[1].is_finite())
            && self
                .charges
                .as_ref()
                .map_or(true, |cs| cs.iter().all(|c| c.is_finite()))
    }
}

/// Why a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum TrajStatus {
    /// All requested base steps completed.
    Complete,
    /// Numerical overflow: the state stopped being finite during this base
    /// step, and the trajectory is truncated just before it.
    Truncated { at_base_step: usize },
}

/// A simulated trajectory: `snapshots[s]` is the state after `s` base steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SimConfig,
    /// Seed that produced the initial conditions (recorded for provenance).
    pub seed: u64,
    pub snapshots: Vec<ParticleSystem>,
    pub status: TrajStatus,
}

impl Trajectory {
    pub fn n_particles(&self) -> usize {
        self.snapshots.first().map_or(0, ParticleSystem::len)
    }

    /// Number of base steps actually recorded (= snapshots - 1).
    pub fn steps_recorded(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }
}
