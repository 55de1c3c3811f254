//! The Hamiltonian variant: the GN's global output is a scalar H(q, p), the
//! dynamics are Hamilton's equations (q̇, ṗ) = (∂H/∂p, −∂H/∂q) obtained by
//! differentiating the forward pass on the tape, and states advance by RK4.
//!
//! Because the tape's backward pass emits ops, the field itself stays
//! differentiable: training losses through an RK4 step backpropagate into
//! parameters through the H gradients (reverse over reverse).

use ndarray::Array2;

use super::features::{hier_topology, FlatTopo, HierTopo, ModelGraph};
use super::hier::{hier_cell_edges_t, hier_state_live};
use super::params::{ModelParams, ModelVariant, ModelVars};
use super::ForwardOpts;
use crate::error::{Error, Result};
use crate::gn::blocks::{aggregate_incoming_t, edge_block_t, global_block_t, node_block_t, GraphVars};
use crate::gn::tape::{Tape, Var};
use crate::sim::pbc::min_image_coord;

/// Everything an H evaluation needs besides the (q, p) state: frozen
/// topology, constant per-particle attributes, and knobs.
pub struct HognCtx<'a> {
    pub topo: FlatTopo,
    pub hier: Option<(&'a crate::hierarchy::HierGraph, HierTopo)>,
    pub masses: &'a [f64],
    pub charges: Option<&'a [f64]>,
    pub cell_size: f64,
    pub opts: ForwardOpts,
}

impl<'a> HognCtx<'a> {
    pub fn new(
        graph: &'a ModelGraph,
        masses: &'a [f64],
        charges: Option<&'a [f64]>,
        cell_size: f64,
        opts: ForwardOpts,
    ) -> Self {
        HognCtx {
            topo: graph.particle_topology(),
            hier: match graph {
                ModelGraph::Hier(g) => Some((g.as_ref(), hier_topology(g))),
                ModelGraph::Flat(_) => None,
            },
            masses,
            charges,
            cell_size,
            opts,
        }
    }
}

fn require_hogn(params: &ModelParams) -> Result<()> {
    if params.variant == ModelVariant::Hogn {
        Ok(())
    } else {
        Err(Error::Config("hogn forward called with a non-hogn model".into()))
    }
}

/// H(q, p) as a 1x1 tape value. Node features are (m, p, charge); edge
/// features are live min-image relative positions along the frozen topology,
/// so ∂H/∂q flows through them (and through the cell summaries).
pub fn hogn_hamiltonian_t(
    tape: &mut Tape,
    vars: &ModelVars,
    ctx: &HognCtx,
    q: Var,
    p: Var,
) -> Result<Var> {
    let n = ctx.masses.len();
    let mcol = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| ctx.masses[i]));
    let mut parts = vec![mcol, p];
    if let Some(c) = ctx.charges {
        let ccol = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| c[i]));
        parts.push(ccol);
    }
    let praw = tape.concat_cols(&parts);

    let qr = tape.gather_rows(q, ctx.topo.receivers.clone());
    let qs = tape.gather_rows(q, ctx.topo.senders.clone());
    let d = tape.sub(qr, qs);
    let off = {
        let dv = tape.value(d);
        Array2::from_shape_fn(dv.dim(), |(i, j)| {
            min_image_coord(dv[(i, j)], ctx.cell_size) - dv[(i, j)]
        })
    };
    let off = tape.leaf(off);
    let rel = tape.add(d, off);

    let gvars = GraphVars { nodes: praw, edges: rel, global: None };
    let e_out = edge_block_t(tape, &ctx.topo.senders, &ctx.topo.receivers, gvars, &vars.edge);
    let mut agg = aggregate_incoming_t(tape, &ctx.topo.receivers, n, e_out);
    let mut e_sum = tape.sum_rows(e_out);
    if let Some((g, ht)) = &ctx.hier {
        // Appended cell-to-particle edges join both the per-node aggregation
        // and the global edge sum. The zero-forcing knob skips them entirely
        // so the remaining tape is node-for-node the base model's.
        if !ctx.opts.force_zero_cell_edges {
            let hv = vars.hier.as_ref().ok_or_else(|| {
                Error::Config("hierarchical graph but no hierarchy parameters".into())
            })?;
            let st = hier_state_live(tape, g, ht, ctx.masses, ctx.charges, q, p);
            let extra = hier_cell_edges_t(tape, hv, &st, ht, ctx.cell_size, &ctx.opts);
            agg = tape.add(agg, extra);
            let extra_sum = tape.sum_rows(extra);
            e_sum = tape.add(e_sum, extra_sum);
        }
    }
    let v_out = node_block_t(tape, n, gvars, agg, &vars.node);
    let v_sum = tape.sum_rows(v_out);
    let u_mlp = vars
        .global
        .as_ref()
        .ok_or_else(|| Error::Config("hogn model is missing its global block".into()))?;
    let u_out = global_block_t(tape, e_sum, v_sum, None, u_mlp);
    Ok(vars.decoder.forward(tape, u_out))
}

/// Hamilton's field (q̇, ṗ) = (∂H/∂p, −∂H/∂q) at one state.
pub fn hogn_field_t(
    tape: &mut Tape,
    vars: &ModelVars,
    ctx: &HognCtx,
    q: Var,
    p: Var,
) -> Result<(Var, Var)> {
    let h = hogn_hamiltonian_t(tape, vars, ctx, q, p)?;
    let grads = tape.backward(h, &[q, p])?;
    let n = ctx.masses.len();
    let dq = match grads[0] {
        Some(v) => v,
        None => tape.leaf(Array2::zeros((n, 2))),
    };
    let dp = match grads[1] {
        Some(v) => v,
        None => tape.leaf(Array2::zeros((n, 2))),
    };
    let pdot = tape.scale(dq, -1.0);
    Ok((dp, pdot))
}

fn axpy(tape: &mut Tape, base: Var, a: f64, x: Var) -> Var {
    let s = tape.scale(x, a);
    tape.add(base, s)
}

fn ensure_finite(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// One RK4 step of the learned field on the tape. The topology in `ctx`
/// stays frozen for all four stages; relative positions and summaries are
/// recomputed from each stage's state.
pub fn hogn_rk4_t(
    tape: &mut Tape,
    vars: &ModelVars,
    ctx: &HognCtx,
    q0: Var,
    p0: Var,
    dt: f64,
) -> Result<(Var, Var)> {
    let (k1q, k1p) = hogn_field_t(tape, vars, ctx, q0, p0)?;
    ensure_finite(tape, k1q, "rk4 stage 1")?;
    let q = axpy(tape, q0, dt / 2.0, k1q);
    let p = axpy(tape, p0, dt / 2.0, k1p);
    let (k2q, k2p) = hogn_field_t(tape, vars, ctx, q, p)?;
    ensure_finite(tape, k2q, "rk4 stage 2")?;
    let q = axpy(tape, q0, dt / 2.0, k2q);
    let p = axpy(tape, p0, dt / 2.0, k2p);
    let (k3q, k3p) = hogn_field_t(tape, vars, ctx, q, p)?;
    ensure_finite(tape, k3q, "rk4 stage 3")?;
    let q = axpy(tape, q0, dt, k3q);
    let p = axpy(tape, p0, dt, k3p);
    let (k4q, k4p) = hogn_field_t(tape, vars, ctx, q, p)?;
    ensure_finite(tape, k4q, "rk4 stage 4")?;

    let combine = |tape: &mut Tape, k1: Var, k2: Var, k3: Var, k4: Var, base: Var| {
        let k2s = tape.scale(k2, 2.0);
        let k3s = tape.scale(k3, 2.0);
        let mut s = tape.add(k1, k2s);
        s = tape.add(s, k3s);
        s = tape.add(s, k4);
        axpy(tape, base, dt / 6.0, s)
    };
    let q1 = combine(tape, k1q, k2q, k3q, k4q, q0);
    let p1 = combine(tape, k1p, k2p, k3p, k4p, p0);
    ensure_finite(tape, q1, "rk4 result")?;
    ensure_finite(tape, p1, "rk4 result")?;
    Ok((q1, p1))
}

/// Full prediction entry point used by training/rollout: leaves (q, p),
/// one RK4 step, conversion back to velocities.
pub fn hogn_predict_t(
    tape: &mut Tape,
    params: &ModelParams,
    sys: &crate::sim::ParticleSystem,
    cell_size: f64,
    dt: f64,
    graph: &ModelGraph,
    opts: &ForwardOpts,
) -> Result<(ModelVars, Var, Var)> {
    require_hogn(params)?;
    let n = sys.len();
    let vars = params.leaf_on(tape);
    let q0 = tape.leaf(super::features::positions_matrix(&sys.positions));
    let p0 = tape.leaf(Array2::from_shape_fn((n, 2), |(i, d)| {
        sys.masses[i] * sys.velocities[i][d]
    }));
    let ctx = HognCtx::new(graph, &sys.masses, sys.charges.as_deref(), cell_size, *opts);
    let (q1, p1) = hogn_rk4_t(tape, &vars, &ctx, q0, p0, dt)?;
    let inv_m = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| 1.0 / sys.masses[i]));
    let v1 = tape.mul_col_vec(p1, inv_m);
    Ok((vars, q1, v1))
}
