//! Random initial conditions for data generation.

use rand::Rng;

use super::{ForceLaw, ParticleSystem, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};

/// Draws a random initial state: unit masses, positions uniform in the box,
/// velocity components uniform in [-1, 1), and (for Coulomb) charges with
/// magnitude uniform in [0.5, 1.5) and a random sign.
///
/// Draw order is part of the reproducibility contract: all positions (x then
/// y per particle), then all velocities, then all charges (magnitude then
/// sign per particle).
pub fn init_system(n: usize, config: &SimConfig, seed: u64) -> Result<ParticleSystem> {
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("cannot initialise an empty system"));
    }
    let mut rng = stream_rng(seed, domain::INIT, 0);
    let l = config.cell_size;
    let positions = (0..n)
        .map(|_| [rng.gen_range(0.0..l), rng.gen_range(0.0..l)])
        .collect();
    let velocities = (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let charges = match config.force_law {
        ForceLaw::Gravity => None,
        ForceLaw::Coulomb => Some(
            (0..n)
                .map(|_| {
                    let magnitude = rng.gen_range(0.5..1.5);
                    if rng.gen::<bool>() {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect(),
        ),
    };
    Ok(ParticleSystem {
        masses: vec![1.0; n],
        positions,
        velocities,
        charges,
    })
}

/// Initialises and simulates trajectory `index` of a dataset rooted at
/// `base_seed`. The per-trajectory seed is derived with [`crate::rng::derive_seed`]
/// and recorded in the returned trajectory.
pub fn generate_trajectory(
    n: usize,
    config: &SimConfig,
    base_seed: u64,
    index: u64,
) -> Result<Trajectory> {
    let seed = crate::rng::derive_seed(base_seed, index);
    let init = init_system(n, config, seed)?;
    super::integrate::simulate_trajectory(&init, config, seed)
}
