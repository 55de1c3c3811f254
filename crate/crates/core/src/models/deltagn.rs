//! The direct state-change predictor: one GN pass whose decoder emits
//! (Δq, Δq̇) per particle, applied additively to the current state.

use ndarray::Array2;

use super::features::{hier_topology, particle_graph_data, ModelGraph};
use super::hier::{hier_cell_edges_plain, hier_cell_edges_t, hier_state_const};
use super::params::{ModelParams, ModelVariant, ModelVars};
use super::ForwardOpts;
use crate::error::{Error, Result};
use crate::gn::blocks::{
    aggregate_incoming_t, edge_aggregate_chunked_plain, edge_block_t, node_block_plain,
    node_block_t, GraphVars,
};
use crate::gn::tape::{Tape, Var};
use crate::sim::pbc::wrap_pos;
use crate::sim::ParticleSystem;

fn require_delta(params: &ModelParams) -> Result<()> {
    if params.variant == ModelVariant::Delta {
        Ok(())
    } else {
        Err(Error::Config("delta forward called with a non-delta model".into()))
    }
}

/// Plain forward pass: per-particle (Δq, Δq̇) as an [N x 4] matrix. Edge
/// processing is chunked so full graphs at large N stay within memory.
pub fn deltagn_forward_plain(
    params: &ModelParams,
    sys: &ParticleSystem,
    cell_size: f64,
    dt: f64,
    graph: &ModelGraph,
    opts: &ForwardOpts,
) -> Result<Array2<f64>> {
    require_delta(params)?;
    let act = params.variant.activation();
    let topo = graph.particle_topology();
    let gd = particle_graph_data(sys, cell_size, &topo, params.variant, dt);
    gd.validate()?;
    let mut agg = edge_aggregate_chunked_plain(&gd, &params.edge, act, opts.chunk_rows);
    if let ModelGraph::Hier(g) = graph {
        let ht = hier_topology(g);
        let extra = hier_cell_edges_plain(params, g, &ht, sys, dt, opts)?;
        agg = agg + extra;
    }
    let v = node_block_plain(&gd, &agg, &params.node, act);
    Ok(params.decoder.forward_plain(&v, act))
}

/// Tape forward pass with parameters registered as leaves. All features are
/// constants for this variant; only parameter gradients are needed.
pub fn deltagn_delta_t(
    tape: &mut Tape,
    params: &ModelParams,
    sys: &ParticleSystem,
    cell_size: f64,
    dt: f64,
    graph: &ModelGraph,
    opts: &ForwardOpts,
) -> Result<(ModelVars, Var)> {
    require_delta(params)?;
    let n = sys.len();
    let vars = params.leaf_on(tape);
    let topo = graph.particle_topology();
    let gd = particle_graph_data(sys, cell_size, &topo, params.variant, dt);
    gd.validate()?;
    let gvars = GraphVars {
        nodes: tape.leaf(gd.node_features.clone()),
        edges: tape.leaf(gd.edge_features.clone()),
        global: gd.global_features.clone().map(|u| tape.leaf(u)),
    };
    let e_out = edge_block_t(tape, &topo.senders, &topo.receivers, gvars, &vars.edge);
    let mut agg = aggregate_incoming_t(tape, &topo.receivers, n, e_out);
    if let ModelGraph::Hier(g) = graph {
        let hv = vars
            .hier
            .as_ref()
            .ok_or_else(|| Error::Config("hierarchical graph but no hierarchy parameters".into()))?;
        let ht = hier_topology(g);
        let st = hier_state_const(tape, g, sys, params, dt);
        let extra = hier_cell_edges_t(tape, hv, &st, &ht, cell_size, opts);
        agg = tape.add(agg, extra);
    }
    let v = node_block_t(tape, n, gvars, agg, &vars.node);
    let delta = vars.decoder.forward(tape, v);
    Ok((vars, delta))
}

/// Applies (Δq, Δq̇) to a system: positions shift and wrap back into the
/// box, velocities shift, masses and charges carry over.
pub fn apply_delta(
    sys: &ParticleSystem,
    delta: &Array2<f64>,
    cell_size: f64,
) -> Result<ParticleSystem> {
    let n = sys.len();
    if delta.dim() != (n, 4) {
        return Err(Error::ShapeMismatch(format!(
            "delta must be {n} x 4, got {} x {}",
            delta.nrows(),
            delta.ncols()
        )));
    }
    let mut out = sys.clone();
    for i in 0..n {
        out.positions[i] = wrap_pos(
            [sys.positions[i][0] + delta[(i, 0)], sys.positions[i][1] + delta[(i, 1)]],
            cell_size,
        );
        out.velocities[i][0] += delta[(i, 2)];
        out.velocities[i][1] += delta[(i, 3)];
    }
    Ok(out)
}

/// Unwrapped predicted next state on the tape: (q + Δq, q̇ + Δq̇).
pub fn delta_prediction_t(
    tape: &mut Tape,
    sys: &ParticleSystem,
    delta: Var,
) -> (Var, Var) {
    let q0 = tape.leaf(super::features::positions_matrix(&sys.positions));
    let v0 = tape.leaf(super::features::positions_matrix(&sys.velocities));
    let dq = tape.slice_cols(delta, 0, 2);
    let dv = tape.slice_cols(delta, 2, 4);
    let q = tape.add(q0, dq);
    let v = tape.add(v0, dv);
    (q, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::baselines::full_graph;
    use crate::models::features::{build_model_graph, FlatTopo, GraphPolicy};
    use crate::hierarchy::DepthPolicy;
    use crate::sim::ForceLaw;
    use crate::testutil::random_system;

    fn policies() -> Vec<GraphPolicy> {
        vec![
            GraphPolicy::Full,
            GraphPolicy::Knn { k: 4 },
            GraphPolicy::Hier { depth: DepthPolicy::Fixed(3), periodic: true },
        ]
    }

    #[test]
    fn zero_decoder_means_no_change() {
        let (sys, cfg) = random_system(9, ForceLaw::Gravity, 41);
        let mut params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, true, 41);
        params.decoder.zero_out();
        for policy in policies() {
            let g = build_model_graph(&sys, cfg.cell_size, &policy).unwrap();
            let delta = deltagn_forward_plain(
                &params, &sys, cfg.cell_size, cfg.dt_base, &g, &ForwardOpts::default(),
            )
            .unwrap();
            assert_eq!(delta, Array2::<f64>::zeros((9, 4)));
            let next = apply_delta(&sys, &delta, cfg.cell_size).unwrap();
            assert_eq!(next.positions, sys.positions);
            assert_eq!(next.velocities, sys.velocities);
        }
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        for (seed, force) in [(42u64, ForceLaw::Gravity), (43, ForceLaw::Coulomb)] {
            let (sys, cfg) = random_system(14, force, seed);
            let params = ModelParams::seeded(ModelVariant::Delta, force, true, seed);
            for policy in policies() {
                let g = build_model_graph(&sys, cfg.cell_size, &policy).unwrap();
                let plain = deltagn_forward_plain(
                    &params, &sys, cfg.cell_size, cfg.dt_base, &g, &ForwardOpts::default(),
                )
                .unwrap();
                let mut tape = Tape::new();
                let (_, delta) = deltagn_delta_t(
                    &mut tape, &params, &sys, cfg.cell_size, cfg.dt_base, &g,
                    &ForwardOpts::default(),
                )
                .unwrap();
                assert_eq!(tape.value(delta), &plain, "policy {policy:?}");
            }
        }
    }

    /// Relabeling particles permutes the rows of the output.
    #[test]
    fn forward_is_permutation_equivariant() {
        let (sys, cfg) = random_system(7, ForceLaw::Gravity, 44);
        let params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, false, 44);
        let g = build_model_graph(&sys, cfg.cell_size, &GraphPolicy::Full).unwrap();
        let base = deltagn_forward_plain(
            &params, &sys, cfg.cell_size, cfg.dt_base, &g, &ForwardOpts::default(),
        )
        .unwrap();

        let perm = [2usize, 5, 0, 6, 1, 4, 3];
        let mut permuted = sys.clone();
        for (old, &new) in perm.iter().enumerate() {
            permuted.positions[new] = sys.positions[old];
            permuted.velocities[new] = sys.velocities[old];
            permuted.masses[new] = sys.masses[old];
        }
        let gp = build_model_graph(&permuted, cfg.cell_size, &GraphPolicy::Full).unwrap();
        let out = deltagn_forward_plain(
            &params, &permuted, cfg.cell_size, cfg.dt_base, &gp, &ForwardOpts::default(),
        )
        .unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for c in 0..4 {
                assert!((base[(old, c)] - out[(new, c)]).abs() < 1e-12);
            }
        }
    }

    /// Hierarchical model with zeroed hierarchy MLPs, run on a full
    /// particle-level graph, reproduces the plain model bit for bit.
    #[test]
    fn reduction_to_base_model_is_exact() {
        for seed in [45u64, 46, 47] {
            let (sys, cfg) = random_system(16, ForceLaw::Gravity, seed);
            let mut hier_params =
                ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, true, seed);
            hier_params.zero_hierarchy();
            let mut base_params = hier_params.clone();
            base_params.hier = None;

            let policy = GraphPolicy::Hier { depth: DepthPolicy::Fixed(3), periodic: true };
            let mut g = match build_model_graph(&sys, cfg.cell_size, &policy).unwrap() {
                ModelGraph::Hier(g) => g,
                ModelGraph::Flat(_) => unreachable!(),
            };
            g.particle_edges = full_graph(sys.len());
            let g = ModelGraph::Hier(g);
            let base_graph =
                ModelGraph::Flat(FlatTopo::from_pairs(&full_graph(sys.len())));

            let opts = ForwardOpts::default();
            let hier_out =
                deltagn_forward_plain(&hier_params, &sys, cfg.cell_size, cfg.dt_base, &g, &opts)
                    .unwrap();
            let base_out = deltagn_forward_plain(
                &base_params, &sys, cfg.cell_size, cfg.dt_base, &base_graph, &opts,
            )
            .unwrap();
            assert_eq!(hier_out, base_out);

            let mut tape = Tape::new();
            let (_, ht) =
                deltagn_delta_t(&mut tape, &hier_params, &sys, cfg.cell_size, cfg.dt_base, &g, &opts)
                    .unwrap();
            let mut tape2 = Tape::new();
            let (_, bt) = deltagn_delta_t(
                &mut tape2, &base_params, &sys, cfg.cell_size, cfg.dt_base, &base_graph, &opts,
            )
            .unwrap();
            assert_eq!(tape.value(ht), tape2.value(bt));
        }
    }

    #[test]
    fn apply_delta_wraps_positions() {
        let (mut sys, cfg) = random_system(2, ForceLaw::Gravity, 48);
        sys.positions[0] = [cfg.cell_size - 0.05, 0.1];
        let mut delta = Array2::zeros((2, 4));
        delta[(0, 0)] = 0.2;
        let next = apply_delta(&sys, &delta, cfg.cell_size).unwrap();
        assert!((next.positions[0][0] - 0.15).abs() < 1e-12);
        assert!(matches!(
            apply_delta(&sys, &Array2::zeros((3, 4)), cfg.cell_size),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn hogn_params_are_rejected() {
        let (sys, cfg) = random_system(4, ForceLaw::Gravity, 49);
        let params = ModelParams::seeded(ModelVariant::Hogn, ForceLaw::Gravity, false, 49);
        let g = build_model_graph(&sys, cfg.cell_size, &GraphPolicy::Full).unwrap();
        let r = deltagn_forward_plain(
            &params, &sys, cfg.cell_size, cfg.dt_base, &g, &ForwardOpts::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
