//! Autoregressive rollout: feed the model its own output, rebuilding the
//! interaction graph from the predicted state at every base step. Numerical
//! blow-ups truncate the trajectory with the offending step recorded rather
//! than crashing the evaluation.

use crate::error::{Error, Result};
use crate::models::{build_model_graph, predict_step_plain, ForwardOpts, GraphPolicy, ModelParams};
use crate::sim::integrate::hierarchical_base_step;
use crate::sim::{ParticleSystem, SimConfig, TrajStatus, Trajectory};

/// A rollout plus the instrumentation used to assert the rebuild-per-step
/// contract.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub trajectory: Trajectory,
    /// Number of interaction graphs built (one per completed model step).
    pub graph_builds: usize,
}

/// Shared driver: `step_fn` maps the current state to the next. A NonFinite
/// or Diverged error (or a non-finite state slipping through) truncates the
/// rollout at that step; other errors abort.
pub fn rollout_with<F>(
    init: &ParticleSystem,
    config: &SimConfig,
    seed: u64,
    steps: usize,
    mut step_fn: F,
) -> Result<Trajectory>
where
    F: FnMut(&ParticleSystem, usize) -> Result<ParticleSystem>,
{
    let mut snapshots = Vec::with_capacity(steps + 1);
    snapshots.push(init.clone());
    let mut status = TrajStatus::Complete;
    for s in 1..=steps {
        match step_fn(snapshots.last().expect("nonempty"), s) {
            Ok(next) if next.is_finite() => snapshots.push(next),
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::Diverged { .. }) => {
                status = TrajStatus::Truncated { at_base_step: s };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { config: config.clone(), seed, snapshots, status })
}

/// Rolls a learned model out for `steps` base steps of `config.dt_base`.
pub fn rollout_model(
    params: &ModelParams,
    policy: &GraphPolicy,
    init: &ParticleSystem,
    config: &SimConfig,
    seed: u64,
    steps: usize,
    opts: &ForwardOpts,
) -> Result<RolloutOutcome> {
    let mut graph_builds = 0;
    let trajectory = rollout_with(init, config, seed, steps, |sys, _| {
        let graph = build_model_graph(sys, config.cell_size, policy)?;
        graph_builds += 1;
        predict_step_plain(params, sys, config.cell_size, config.dt_base, &graph, opts)
    })?;
    Ok(RolloutOutcome { trajectory, graph_builds })
}

/// Ground-truth oracle rollout: the "model" is the simulator's own base step,
/// so this must reproduce `simulate_trajectory` exactly.
pub fn rollout_oracle(
    init: &ParticleSystem,
    config: &SimConfig,
    seed: u64,
    steps: usize,
) -> Result<RolloutOutcome> {
    let trajectory =
        rollout_with(init, config, seed, steps, |sys, _| hierarchical_base_step(sys, config))?;
    Ok(RolloutOutcome { trajectory, graph_builds: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelVariant;
    use crate::sim::init::init_system;
    use crate::sim::integrate::simulate_trajectory;
    use crate::sim::ForceLaw;
    use crate::testutil::random_system;

    #[test]
    fn identity_model_keeps_the_state_constant() {
        let (sys, cfg) = random_system(6, ForceLaw::Gravity, 80);
        let mut params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, false, 80);
        for (name, mlp) in params.groups_mut() {
            if name == "decoder" {
                mlp.zero_out();
            }
        }
        let out = rollout_model(
            &params, &GraphPolicy::Full, &sys, &cfg, 80, 5, &ForwardOpts::default(),
        )
        .unwrap();
        assert_eq!(out.graph_builds, 5);
        assert_eq!(out.trajectory.snapshots.len(), 6);
        for snap in &out.trajectory.snapshots {
            assert_eq!(snap.positions, sys.positions);
            assert_eq!(snap.velocities, sys.velocities);
        }
    }

    #[test]
    fn oracle_rollout_reproduces_the_simulator() {
        let mut cfg = crate::sim::SimConfig::for_particle_count(8, ForceLaw::Gravity);
        cfg.n_base_steps = 10;
        let sys = init_system(8, &cfg, 81).unwrap();
        let truth = simulate_trajectory(&sys, &cfg, 81).unwrap();
        let out = rollout_oracle(&sys, &cfg, 81, 10).unwrap();
        assert_eq!(out.trajectory.snapshots.len(), truth.snapshots.len());
        for (a, b) in out.trajectory.snapshots.iter().zip(&truth.snapshots) {
            for i in 0..a.len() {
                for d in 0..2 {
                    assert!((a.positions[i][d] - b.positions[i][d]).abs() < 1e-10);
                    assert!((a.velocities[i][d] - b.velocities[i][d]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn divergence_is_reported_with_its_step() {
        let (sys, cfg) = random_system(3, ForceLaw::Gravity, 82);
        let traj = rollout_with(&sys, &cfg, 82, 10, |s, step| {
            if step == 3 {
                let mut bad = s.clone();
                bad.velocities[0][0] = f64::INFINITY;
                Ok(bad)
            } else {
                Ok(s.clone())
            }
        })
        .unwrap();
        assert_eq!(traj.status, TrajStatus::Truncated { at_base_step: 3 });
        // init plus the two good steps
        assert_eq!(traj.snapshots.len(), 3);
    }

    #[test]
    fn model_rollout_positions_stay_in_the_box() {
        let (sys, cfg) = random_system(5, ForceLaw::Gravity, 83);
        let params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, false, 83);
        let out = rollout_model(
            &params, &GraphPolicy::Full, &sys, &cfg, 83, 4, &ForwardOpts::default(),
        )
        .unwrap();
        for snap in &out.trajectory.snapshots {
            for q in &snap.positions {
                assert!((0.0..cfg.cell_size).contains(&q[0]));
                assert!((0.0..cfg.cell_size).contains(&q[1]));
            }
        }
    }
}
