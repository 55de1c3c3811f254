//! Softened pair forces and the conserved quantities used to audit them.
//!
//! Both force laws share one shape: the force on particle i from particle j is
//! `coupling_ij * d_ij / (|d_ij|^2 + eps^2)^{3/2}` with `d_ij = q_i - q_j`
//! taken under the minimum-image convention. The coupling is `-G m_i m_j` for
//! gravity (attractive) and `+k c_i c_j` for Coulomb (like charges repel).
//! The potential energy of a pair is `coupling_ij / sqrt(|d_ij|^2 + eps^2)`,
//! so the force is exactly the negative gradient of the potential and energy
//! conservation is a meaningful diagnostic rather than an approximation.

use super::pbc::min_image_unchecked;
use super::{ForceLaw, ParticleSystem, SimConfig};
use crate::error::Result;

/// Signed pair coupling; see the module docs for the sign convention.
#[inline]
fn pair_coupling(
    config: &SimConfig,
    masses: &[f64],
    charges: Option<&[f64]>,
    i: usize,
    j: usize,
) -> f64 {
    match config.force_law {
        ForceLaw::Gravity => -config.grav_const * masses[i] * masses[j],
        ForceLaw::Coulomb => {
            let c = charges.expect("validated: coulomb has charges");
            config.coulomb_const * c[i] * c[j]
        }
    }
}

/// Force on particle `i` from particle `j` (no validation; hot path). Takes
/// the state as raw slices so the integrator can mutate velocities while
/// reading positions.
#[inline]
pub(crate) fn pair_force_raw(
    config: &SimConfig,
    positions: &[[f64; 2]],
    masses: &[f64],
    charges: Option<&[f64]>,
    i: usize,
    j: usize,
) -> [f64; 2] {
    let d = min_image_unchecked(positions[i], positions[j], config.cell_size);
    let r2 = d[0] * d[0] + d[1] * d[1] + config.softening * config.softening;
    let c = pair_coupling(config, masses, charges, i, j) / (r2 * r2.sqrt());
    [c * d[0], c * d[1]]
}

pub(crate) fn accelerations_unchecked(config: &SimConfig, sys: &ParticleSystem) -> Vec<[f64; 2]> {
    let n = sys.len();
    let charges = sys.charges.as_deref();
    let mut acc = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            // One evaluation per pair; Newton's third law gives the reaction.
            let f = pair_force_raw(config, &sys.positions, &sys.masses, charges, i, j);
            acc[i][0] += f[0] / sys.masses[i];
            acc[i][1] += f[1] / sys.masses[i];
            acc[j][0] -= f[0] / sys.masses[j];
            acc[j][1] -= f[1] / sys.masses[j];
        }
    }
    acc
}

/// Accelerations of every particle under the configured force law, O(N^2).
pub fn compute_accelerations(sys: &ParticleSystem, config: &SimConfig) -> Result<Vec<[f64; 2]>> {
    config.validate()?;
    sys.validate(config)?;
    Ok(accelerations_unchecked(config, sys))
}

pub(crate) fn potential_energy_unchecked(config: &SimConfig, sys: &ParticleSystem) -> f64 {
    let n = sys.len();
    let charges = sys.charges.as_deref();
    let mut pe = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = min_image_unchecked(sys.positions[i], sys.positions[j], config.cell_size);
            let r2 = d[0] * d[0] + d[1] * d[1] + config.softening * config.softening;
            pe += pair_coupling(config, &sys.masses, charges, i, j) / r2.sqrt();
        }
    }
    pe
}

/// Total softened pair potential energy.
pub fn potential_energy(sys: &ParticleSystem, config: &SimConfig) -> Result<f64> {
    config.validate()?;
    sys.validate(config)?;
    Ok(potential_energy_unchecked(config, sys))
}

pub fn kinetic_energy(sys: &ParticleSystem) -> f64 {
    sys.masses
        .iter()
        .zip(&sys.velocities)
        .map(|(m, v)| 0.5 * m * (v[0] * v[0] + v[1] * v[1]))
        .sum()
}

/// Total energy H = KE + PE; conserved by the dynamics up to integration error.
pub fn hamiltonian(sys: &ParticleSystem, config: &SimConfig) -> Result<f64> {
    Ok(kinetic_energy(sys) + potential_energy(sys, config)?)
}

/// Total linear momentum; conserved exactly (to rounding) because every
/// impulse the integrator applies is pairwise antisymmetric.
pub fn total_momentum(sys: &ParticleSystem) -> [f64; 2] {
    let mut p = [0.0; 2];
    for (m, v) in sys.masses.iter().zip(&sys.velocities) {
        p[0] += m * v[0];
        p[1] += m * v[1];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_system;

    fn two_body(sep: f64, force_law: ForceLaw) -> (ParticleSystem, SimConfig) {
        let mut config = SimConfig::for_particle_count(2, force_law);
        config.cell_size = 10.0;
        let sys = ParticleSystem {
            masses: vec![1.0, 1.0],
            positions: vec![[1.0, 5.0], [1.0 + sep, 5.0]],
            velocities: vec![[0.0; 2]; 2],
            charges: force_law.has_charges().then(|| vec![1.0, 1.0]),
        };
        (sys, config)
    }

    #[test]
    fn two_body_gravity_magnitude() {
        // Unit masses, G = 2, eps = 0.2, separation 1:
        // |a| = 2 / (1 + 0.04)^{3/2}, pointing at the other body.
        let (sys, config) = two_body(1.0, ForceLaw::Gravity);
        let acc = compute_accelerations(&sys, &config).unwrap();
        let expected = 2.0 / 1.04f64.powf(1.5);
        assert!((acc[0][0] - expected).abs() < 1e-14, "{:?}", acc);
        assert!((acc[1][0] + expected).abs() < 1e-14);
        assert_eq!(acc[0][1], 0.0);
        assert_eq!(acc[1][1], 0.0);
    }

    #[test]
    fn two_body_coulomb_repels_like_charges() {
        let (sys, config) = two_body(1.0, ForceLaw::Coulomb);
        let acc = compute_accelerations(&sys, &config).unwrap();
        let expected = 2.0 / 1.04f64.powf(1.5);
        // particle 0 sits to the left, so repulsion pushes it further left
        assert!((acc[0][0] + expected).abs() < 1e-14);
        assert!((acc[1][0] - expected).abs() < 1e-14);

        let mut sys = sys;
        sys.charges = Some(vec![1.0, -1.0]);
        let acc = compute_accelerations(&sys, &config).unwrap();
        assert!((acc[0][0] - expected).abs() < 1e-14, "opposite charges attract");
    }

    #[test]
    fn two_body_hamiltonian_hand_value() {
        // At rest, separation 1: H = PE = -2 / sqrt(1.04) = -1.9611613513818404...
        let (sys, config) = two_body(1.0, ForceLaw::Gravity);
        let h = hamiltonian(&sys, &config).unwrap();
        assert!((h - (-1.9611613513818404)).abs() < 1e-13, "H = {h}");
    }

    #[test]
    fn interaction_wraps_through_boundary() {
        // Separation across the boundary is 1, same as the unwrapped pair.
        let (reference, config) = two_body(1.0, ForceLaw::Gravity);
        let wrapped = ParticleSystem {
            positions: vec![[9.5, 5.0], [0.5, 5.0]],
            ..reference.clone()
        };
        let pe_ref = potential_energy(&reference, &config).unwrap();
        let pe_wrap = potential_energy(&wrapped, &config).unwrap();
        assert!((pe_ref - pe_wrap).abs() < 1e-14);

        let acc = compute_accelerations(&wrapped, &config).unwrap();
        // 0 at x=9.5 is pulled rightwards through the boundary towards 0.5.
        assert!(acc[0][0] > 0.0);
        assert!(acc[1][0] < 0.0);
    }

    /// Independent oracle: forces must equal the negative potential gradient.
    #[test]
    fn force_is_negative_potential_gradient() {
        for &force_law in &[ForceLaw::Gravity, ForceLaw::Coulomb] {
            let (sys, config) = random_system(6, force_law, 7);
            let acc = compute_accelerations(&sys, &config).unwrap();
            let h = 1e-6;
            for i in 0..sys.len() {
                for axis in 0..2 {
                    let mut plus = sys.clone();
                    plus.positions[i][axis] += h;
                    let mut minus = sys.clone();
                    minus.positions[i][axis] -= h;
                    let grad = (potential_energy_unchecked(&config, &plus)
                        - potential_energy_unchecked(&config, &minus))
                        / (2.0 * h);
                    let expected = -grad / sys.masses[i];
                    assert!(
                        (acc[i][axis] - expected).abs() < 1e-7 * (1.0 + expected.abs()),
                        "{force_law}: particle {i} axis {axis}: {} vs {expected}",
                        acc[i][axis]
                    );
                }
            }
        }
    }

    #[test]
    fn net_force_vanishes() {
        for &force_law in &[ForceLaw::Gravity, ForceLaw::Coulomb] {
            let (sys, config) = random_system(20, force_law, 11);
            let acc = compute_accelerations(&sys, &config).unwrap();
            let mut f = [0.0; 2];
            for (m, a) in sys.masses.iter().zip(&acc) {
                f[0] += m * a[0];
                f[1] += m * a[1];
            }
            assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn rejects_mismatched_charges() {
        let (mut sys, config) = two_body(1.0, ForceLaw::Gravity);
        sys.charges = Some(vec![1.0, 1.0]);
        assert!(compute_accelerations(&sys, &config).is_err());

        let (mut sys, config) = two_body(1.0, ForceLaw::Coulomb);
        sys.charges = None;
        assert!(compute_accelerations(&sys, &config).is_err());
    }
}
