//! Shared fixtures for unit tests.

use crate::rng::{domain, stream_rng};
use crate::sim::{ForceLaw, ParticleSystem, SimConfig};
use rand::Rng;

/// A finite random system in the default box for `n`, with non-unit masses so
/// tests exercise the mass handling that unit-mass data would hide.
pub(crate) fn random_system(n: usize, force_law: ForceLaw, seed: u64) -> (ParticleSystem, SimConfig) {
    let config = SimConfig::for_particle_count(n, force_law);
    let mut rng = stream_rng(seed, domain::TEST, 0);
    let l = config.cell_size;
    let sys = ParticleSystem {
        masses: (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
        positions: (0..n)
            .map(|_| [rng.gen_range(0.0..l), rng.gen_range(0.0..l)])
            .collect(),
        velocities: (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect(),
        charges: force_law
            .has_charges()
            .then(|| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()),
    };
    (sys, config)
}
