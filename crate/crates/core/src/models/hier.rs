//! The hierarchy's upward and downward passes, producing one appended
//! cell-to-particle edge feature per particle.
//!
//! Upward: each cell embedding is its raw summary features with a summed
//! message from its children appended (particles at the finest level via
//! `p2c`, cells above via the level-shared `cc2cp`). Downward: near-neighbour
//! interactions (`c2c`) plus one interaction inherited from the already
//! updated parent (`cp2cc`, zero at the coarsest kept level) update each cell
//! (`phic`), and the finest updated cells emit one `c2p` edge per particle.
//!
//! Both a plain ndarray evaluation and a tape evaluation exist; with constant
//! features they perform identical arithmetic and tests pin them to bitwise
//! agreement.

use ndarray::{s, Array2, ArrayView2};

use super::features::{
    cell_positions_matrix, global_row, positions_matrix, raw_cell_features, raw_node_features,
    rel_matrix, HierTopo,
};
use super::params::{HierVars, ModelParams, EDGE_WIDTH};
use super::ForwardOpts;
use crate::error::{Error, Result};
use crate::gn::tape::{Tape, Var};
use crate::hierarchy::HierGraph;
use crate::sim::pbc::min_image_coord;
use crate::sim::ParticleSystem;

fn take_rows(m: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((ids.len(), m.ncols()), |(i, j)| m[(ids[i], j)])
}

fn scatter_rows(m: &Array2<f64>, ids: &[usize], rows: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, m.ncols()));
    for (src, &dst) in ids.iter().enumerate() {
        let mut row = out.row_mut(dst);
        row += &m.row(src);
    }
    out
}

/// Horizontal concatenation with an optional broadcast global row appended.
fn assemble(parts: &[ArrayView2<f64>], u: Option<&Array2<f64>>) -> Array2<f64> {
    let rows = parts[0].nrows();
    let u_cols = u.map_or(0, |u| u.ncols());
    let cols = parts.iter().map(|p| p.ncols()).sum::<usize>() + u_cols;
    let mut out = Array2::zeros((rows, cols));
    let mut c0 = 0;
    for p in parts {
        out.slice_mut(s![.., c0..c0 + p.ncols()]).assign(p);
        c0 += p.ncols();
    }
    if let Some(u) = u {
        for j in 0..u.ncols() {
            out.column_mut(c0 + j).fill(u[(0, j)]);
        }
    }
    out
}

/// Plain evaluation of the full hierarchy pass: returns the `E_{c->p}` edge
/// feature matrix, one row per particle.
pub fn hier_cell_edges_plain(
    params: &ModelParams,
    g: &HierGraph,
    topo: &HierTopo,
    sys: &ParticleSystem,
    dt: f64,
    opts: &ForwardOpts,
) -> Result<Array2<f64>> {
    let n = sys.len();
    if opts.force_zero_cell_edges {
        return Ok(Array2::zeros((n, EDGE_WIDTH)));
    }
    let h = params
        .hier
        .as_ref()
        .ok_or_else(|| Error::Config("model has no hierarchy parameters".into()))?;
    let act = params.variant.activation();
    let charged = sys.charges.is_some();
    let cell = g.cell_size;
    let u = global_row(params.variant, dt);
    let u = u.as_ref();
    let nl = g.levels.len();

    let raw: Vec<_> = (0..nl).map(|k| raw_cell_features(g, k, params.variant, charged)).collect();
    let pos: Vec<_> = (0..nl).map(|k| cell_positions_matrix(g, k)).collect();
    let ppos = positions_matrix(&sys.positions);
    let praw = raw_node_features(sys, params.variant);

    // Upward: finest level from particles, then each level from its children.
    let mut emb: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); nl];
    {
        let k = nl - 1;
        let link = &topo.finest_link;
        let rel = rel_matrix(&pos[k], &link.parent, &ppos, &link.child, cell);
        let x = assemble(
            &[take_rows(&raw[k], &link.parent).view(), take_rows(&praw, &link.child).view(), rel.view()],
            u,
        );
        let msg = h.p2c.forward_plain(&x, act);
        emb[k] = assemble(
            &[raw[k].view(), scatter_rows(&msg, &link.parent, g.levels[k].len()).view()],
            None,
        );
    }
    for j in (0..nl.saturating_sub(1)).rev() {
        let link = &topo.cell_links[j];
        let rel = rel_matrix(&pos[j], &link.parent, &pos[j + 1], &link.child, cell);
        let x = assemble(
            &[
                take_rows(&raw[j], &link.parent).view(),
                take_rows(&emb[j + 1], &link.child).view(),
                rel.view(),
            ],
            u,
        );
        let msg = h.cc2cp.forward_plain(&x, act);
        emb[j] = assemble(
            &[raw[j].view(), scatter_rows(&msg, &link.parent, g.levels[j].len()).view()],
            None,
        );
    }

    // Downward: near-neighbour interactions plus the updated parent's one.
    let mut emb2: Vec<Array2<f64>> = Vec::with_capacity(nl);
    for k in 0..nl {
        let nk = g.levels[k].len();
        let send = &topo.near_send[k];
        let recv = &topo.near_recv[k];
        let rel = rel_matrix(&pos[k], recv, &pos[k], send, cell);
        let x = assemble(
            &[take_rows(&emb[k], recv).view(), take_rows(&emb[k], send).view(), rel.view()],
            u,
        );
        let mut e = scatter_rows(&h.c2c.forward_plain(&x, act), recv, nk);
        if k > 0 {
            // one row per cell, aligned with cell ids; the top kept level has
            // no parent and keeps the zero term
            let par: &[usize] = &topo.parent_of[k];
            let ids: Vec<usize> = (0..nk).collect();
            let rel = rel_matrix(&pos[k], &ids, &pos[k - 1], par, cell);
            let x = assemble(
                &[emb[k].view(), take_rows(&emb2[k - 1], par).view(), rel.view()],
                u,
            );
            e = e + h.cp2cc.forward_plain(&x, act);
        }
        let xc = assemble(&[emb[k].view(), e.view()], u);
        emb2.push(assemble(&[raw[k].view(), h.phic.forward_plain(&xc, act).view()], None));
    }

    // Finest updated cells -> one appended edge per particle.
    let k = nl - 1;
    let cof: &[usize] = &topo.cell_of;
    let ids: Vec<usize> = (0..n).collect();
    let rel = rel_matrix(&ppos, &ids, &pos[k], cof, cell);
    let x = assemble(&[praw.view(), take_rows(&emb2[k], cof).view(), rel.view()], u);
    Ok(h.c2p.forward_plain(&x, act))
}

/// Tape-side handles for the state the hierarchy pass reads. `live` marks
/// whether geometry (positions, summaries) should be differentiated through
/// or treated as constants.
pub struct HierStateT {
    /// Raw summary features per level.
    pub raw: Vec<Var>,
    /// COM positions per level.
    pub pos: Vec<Var>,
    /// Particle positions [N x 2].
    pub ppos: Var,
    /// Particle raw features [N x dv].
    pub praw: Var,
    /// Global row fed to every hierarchy MLP.
    pub u: Option<Var>,
    pub live: bool,
}

/// Constant-feature state (delta variant): everything is a leaf holding the
/// same matrices the plain path computes.
pub fn hier_state_const(
    tape: &mut Tape,
    g: &HierGraph,
    sys: &ParticleSystem,
    params: &ModelParams,
    dt: f64,
) -> HierStateT {
    let charged = sys.charges.is_some();
    let raw = (0..g.levels.len())
        .map(|k| {
            let m = raw_cell_features(g, k, params.variant, charged);
            tape.leaf(m)
        })
        .collect();
    let pos = (0..g.levels.len())
        .map(|k| {
            let m = cell_positions_matrix(g, k);
            tape.leaf(m)
        })
        .collect();
    let ppos = tape.leaf(positions_matrix(&sys.positions));
    let praw = tape.leaf(raw_node_features(sys, params.variant));
    let u = global_row(params.variant, dt).map(|m| tape.leaf(m));
    HierStateT { raw, pos, ppos, praw, u, live: false }
}

/// Live state for the Hamiltonian variant: summaries recomputed on the tape
/// from `q` and `p` so that ∂H/∂q and ∂H/∂p flow through COM positions and
/// total momenta. Masses and charges stay constant.
pub fn hier_state_live(
    tape: &mut Tape,
    g: &HierGraph,
    topo: &HierTopo,
    masses: &[f64],
    charges: Option<&[f64]>,
    q: Var,
    p: Var,
) -> HierStateT {
    let n = masses.len();
    let nl = g.levels.len();
    let cell = g.cell_size;

    let mass_col = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| masses[i]));
    let mut praw_parts = vec![mass_col, p];
    if let Some(c) = charges {
        let ccol = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| c[i]));
        praw_parts.push(ccol);
    }
    let praw = tape.concat_cols(&praw_parts);

    // Total momentum per cell: plain scatter sums up the tree.
    let mut mom = vec![Var::default(); nl];
    mom[nl - 1] = tape.scatter_add_rows(p, topo.cell_of.clone(), g.levels[nl - 1].len());
    for j in (0..nl - 1).rev() {
        mom[j] = tape.scatter_add_rows(mom[j + 1], topo.parent_of[j + 1].clone(), g.levels[j].len());
    }

    // COM per cell: mass-weighted mean of children unwrapped (min-image)
    // around the owning cell's geometric centre. The wrap offsets are eager
    // constants; the gradient treats the wrap as locally identity.
    let centre_of = |k: usize, c: usize| -> [f64; 2] {
        g.cell_centre(k as u32 + 1, g.levels[k][c].grid_index)
    };
    let mut com = vec![Var::default(); nl];
    {
        let k = nl - 1;
        let qv = tape.value(q);
        let mut off = Array2::zeros((n, 2));
        let mut w = Array2::zeros((n, 1));
        for i in 0..n {
            let cid = topo.cell_of[i];
            let centre = centre_of(k, cid);
            for d in 0..2 {
                let x = qv[(i, d)];
                off[(i, d)] = centre[d] + min_image_coord(x - centre[d], cell) - x;
            }
            w[(i, 0)] = masses[i] / g.levels[k][cid].total_mass;
        }
        let off = tape.leaf(off);
        let w = tape.leaf(w);
        let shifted = tape.add(q, off);
        let weighted = tape.mul_col_vec(shifted, w);
        com[k] = tape.scatter_add_rows(weighted, topo.cell_of.clone(), g.levels[k].len());
    }
    for j in (0..nl - 1).rev() {
        let nc = g.levels[j + 1].len();
        let parents = &topo.parent_of[j + 1];
        let cv = tape.value(com[j + 1]);
        let mut off = Array2::zeros((nc, 2));
        let mut w = Array2::zeros((nc, 1));
        for c in 0..nc {
            let centre = centre_of(j, parents[c]);
            for d in 0..2 {
                let x = cv[(c, d)];
                off[(c, d)] = centre[d] + min_image_coord(x - centre[d], cell) - x;
            }
            w[(c, 0)] = g.levels[j + 1][c].total_mass / g.levels[j][parents[c]].total_mass;
        }
        let off = tape.leaf(off);
        let w = tape.leaf(w);
        let shifted = tape.add(com[j + 1], off);
        let weighted = tape.mul_col_vec(shifted, w);
        com[j] = tape.scatter_add_rows(weighted, parents.clone(), g.levels[j].len());
    }

    let mut raw = Vec::with_capacity(nl);
    for (k, cells) in g.levels.iter().enumerate() {
        let mcol = tape.leaf(Array2::from_shape_fn((cells.len(), 1), |(i, _)| cells[i].total_mass));
        let mut parts = vec![mcol, mom[k]];
        if charges.is_some() {
            let ccol =
                tape.leaf(Array2::from_shape_fn((cells.len(), 1), |(i, _)| cells[i].total_charge));
            parts.push(ccol);
        }
        raw.push(tape.concat_cols(&parts));
    }

    HierStateT { raw, pos: com, ppos: q, praw, u: None, live: true }
}

/// Min-image displacement a - b on the tape. Constant state short-circuits
/// to a leaf computed with the same arithmetic as [`rel_matrix`]; live state
/// differentiates through the subtraction with an eager wrap offset.
fn rel_t(tape: &mut Tape, live: bool, cell: f64, a: Var, b: Var) -> Var {
    if live {
        let d = tape.sub(a, b);
        let off = {
            let dv = tape.value(d);
            Array2::from_shape_fn(dv.dim(), |(i, j)| {
                min_image_coord(dv[(i, j)], cell) - dv[(i, j)]
            })
        };
        let off = tape.leaf(off);
        tape.add(d, off)
    } else {
        let m = {
            let va = tape.value(a);
            let vb = tape.value(b);
            Array2::from_shape_fn(va.dim(), |(i, j)| {
                min_image_coord(va[(i, j)] - vb[(i, j)], cell)
            })
        };
        tape.leaf(m)
    }
}

fn assemble_t(tape: &mut Tape, parts: &[Var], u: Option<Var>) -> Var {
    let mut all = parts.to_vec();
    if let Some(u) = u {
        let rows = tape.value(parts[0]).nrows();
        all.push(tape.broadcast_rows(u, rows));
    }
    tape.concat_cols(&all)
}

/// Tape evaluation of the hierarchy pass; mirrors
/// [`hier_cell_edges_plain`] op for op.
pub fn hier_cell_edges_t(
    tape: &mut Tape,
    hv: &HierVars,
    st: &HierStateT,
    topo: &HierTopo,
    cell: f64,
    opts: &ForwardOpts,
) -> Var {
    let n = topo.cell_of.len();
    if opts.force_zero_cell_edges {
        return tape.leaf(Array2::zeros((n, EDGE_WIDTH)));
    }
    let nl = st.raw.len();
    let n_cells: Vec<usize> = (0..nl).map(|k| tape.value(st.raw[k]).nrows()).collect();

    let mut emb = vec![Var::default(); nl];
    {
        let k = nl - 1;
        let link = &topo.finest_link;
        let pr = tape.gather_rows(st.pos[k], link.parent.clone());
        let pc = tape.gather_rows(st.ppos, link.child.clone());
        let rel = rel_t(tape, st.live, cell, pr, pc);
        let rr = tape.gather_rows(st.raw[k], link.parent.clone());
        let rc = tape.gather_rows(st.praw, link.child.clone());
        let x = assemble_t(tape, &[rr, rc, rel], st.u);
        let msg = hv.p2c.forward(tape, x);
        let agg = tape.scatter_add_rows(msg, link.parent.clone(), n_cells[k]);
        emb[k] = tape.concat_cols(&[st.raw[k], agg]);
    }
    for j in (0..nl.saturating_sub(1)).rev() {
        let link = &topo.cell_links[j];
        let pr = tape.gather_rows(st.pos[j], link.parent.clone());
        let pc = tape.gather_rows(st.pos[j + 1], link.child.clone());
        let rel = rel_t(tape, st.live, cell, pr, pc);
        let rr = tape.gather_rows(st.raw[j], link.parent.clone());
        let ec = tape.gather_rows(emb[j + 1], link.child.clone());
        let x = assemble_t(tape, &[rr, ec, rel], st.u);
        let msg = hv.cc2cp.forward(tape, x);
        let agg = tape.scatter_add_rows(msg, link.parent.clone(), n_cells[j]);
        emb[j] = tape.concat_cols(&[st.raw[j], agg]);
    }

    let mut emb2 = vec![Var::default(); nl];
    for k in 0..nl {
        let send = &topo.near_send[k];
        let recv = &topo.near_recv[k];
        let pr = tape.gather_rows(st.pos[k], recv.clone());
        let ps = tape.gather_rows(st.pos[k], send.clone());
        let rel = rel_t(tape, st.live, cell, pr, ps);
        let er = tape.gather_rows(emb[k], recv.clone());
        let es = tape.gather_rows(emb[k], send.clone());
        let x = assemble_t(tape, &[er, es, rel], st.u);
        let near = hv.c2c.forward(tape, x);
        let mut e = tape.scatter_add_rows(near, recv.clone(), n_cells[k]);
        if k > 0 {
            let par = &topo.parent_of[k];
            let pp = tape.gather_rows(st.pos[k - 1], par.clone());
            let rel = rel_t(tape, st.live, cell, st.pos[k], pp);
            let ep = tape.gather_rows(emb2[k - 1], par.clone());
            let x = assemble_t(tape, &[emb[k], ep, rel], st.u);
            let parent_term = hv.cp2cc.forward(tape, x);
            e = tape.add(e, parent_term);
        }
        let xc = assemble_t(tape, &[emb[k], e], st.u);
        let upd = hv.phic.forward(tape, xc);
        emb2[k] = tape.concat_cols(&[st.raw[k], upd]);
    }

    let k = nl - 1;
    let pc = tape.gather_rows(st.pos[k], topo.cell_of.clone());
    let rel = rel_t(tape, st.live, cell, st.ppos, pc);
    let ec = tape.gather_rows(emb2[k], topo.cell_of.clone());
    let x = assemble_t(tape, &[st.praw, ec, rel], st.u);
    hv.c2p.forward(tape, x)
}
