//! Graph-network blocks: edge, node and global updates with sum aggregation.
//!
//! Every block exists twice: on the tape (for training and for models that
//! need input gradients) and as a plain ndarray computation (for inference
//! and benchmarks). The two paths share the same matrix kernels and the same
//! accumulation order, and tests hold them to bitwise agreement on graphs
//! small enough to evaluate both ways.

use std::sync::Arc;

use ndarray::{s, Array2};

use super::mlp::{Activation, MlpParams, MlpVars};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A graph of node/edge/global features ready for a GN pass. Positions never
/// appear as node features; geometry enters only through relative-position
/// columns inside `edge_features`.
#[derive(Debug, Clone)]
pub struct GraphData {
    /// [N_v x d_v]
    pub node_features: Array2<f64>,
    pub senders: Arc<Vec<usize>>,
    pub receivers: Arc<Vec<usize>>,
    /// [N_e x d_e]
    pub edge_features: Array2<f64>,
    /// [1 x d_u]; None when the model has no global input.
    pub global_features: Option<Array2<f64>>,
}

impl GraphData {
    pub fn n_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_features.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.n_nodes();
        let ne = self.n_edges();
        if self.senders.len() != ne || self.receivers.len() != ne {
            return Err(Error::ShapeMismatch(format!(
                "{} edge feature rows vs {}/{} sender/receiver ids",
                ne,
                self.senders.len(),
                self.receivers.len()
            )));
        }
        if self.senders.iter().chain(self.receivers.iter()).any(|&id| id >= nv) {
            return Err(Error::ShapeMismatch(format!("edge endpoint out of {nv} nodes")));
        }
        let finite = self.node_features.iter().all(|v| v.is_finite())
            && self.edge_features.iter().all(|v| v.is_finite())
            && self
                .global_features
                .as_ref()
                .map_or(true, |u| u.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite("graph features".into()));
        }
        if let Some(u) = &self.global_features {
            if u.nrows() != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "global features must be a single row, got {} rows",
                    u.nrows()
                )));
            }
        }
        Ok(())
    }
}

/// Tape-side handles to one graph's features.
#[derive(Debug, Clone, Copy)]
pub struct GraphVars {
    pub nodes: Var,
    pub edges: Var,
    pub global: Option<Var>,
}

/// e'_k = phi_e(concat(e_k, v_recv, v_send, u))
pub fn edge_block_t(
    tape: &mut Tape,
    senders: &Arc<Vec<usize>>,
    receivers: &Arc<Vec<usize>>,
    vars: GraphVars,
    mlp: &MlpVars,
) -> Var {
    let ne = senders.len();
    let vr = tape.gather_rows(vars.nodes, receivers.clone());
    let vs = tape.gather_rows(vars.nodes, senders.clone());
    let mut parts = vec![vars.edges, vr, vs];
    if let Some(u) = vars.global {
        parts.push(tape.broadcast_rows(u, ne));
    }
    let x = tape.concat_cols(&parts);
    mlp.forward(tape, x)
}

/// Sum of incoming updated edges per node: rows of `edges_out` scattered by
/// receiver. Nodes without incoming edges aggregate to zero.
pub fn aggregate_incoming_t(
    tape: &mut Tape,
    receivers: &Arc<Vec<usize>>,
    n_nodes: usize,
    edges_out: Var,
) -> Var {
    tape.scatter_add_rows(edges_out, receivers.clone(), n_nodes)
}

/// v'_i = phi_v(concat(agg_i, v_i, u)); `agg` is usually
/// [`aggregate_incoming_t`] plus any extra appended incoming features.
pub fn node_block_t(
    tape: &mut Tape,
    n_nodes: usize,
    vars: GraphVars,
    agg: Var,
    mlp: &MlpVars,
) -> Var {
    let mut parts = vec![agg, vars.nodes];
    if let Some(u) = vars.global {
        parts.push(tape.broadcast_rows(u, n_nodes));
    }
    let x = tape.concat_cols(&parts);
    mlp.forward(tape, x)
}

/// u' = phi_u(concat(Σe', Σv', u)); callers pass the row sums so appended
/// edge sets can be folded in first.
pub fn global_block_t(
    tape: &mut Tape,
    e_sum: Var,
    v_sum: Var,
    global_in: Option<Var>,
    mlp: &MlpVars,
) -> Var {
    let mut parts = vec![e_sum, v_sum];
    if let Some(u) = global_in {
        parts.push(u);
    }
    let x = tape.concat_cols(&parts);
    mlp.forward(tape, x)
}

/// Plain edge block materialising all updated edge features.
pub fn edge_block_plain(g: &GraphData, mlp: &MlpParams, activation: Activation) -> Array2<f64> {
    let x = edge_inputs_plain(g, 0, g.n_edges());
    mlp.forward_plain(&x, activation)
}

/// Builds the concatenated edge-block input for edges [start, end).
fn edge_inputs_plain(g: &GraphData, start: usize, end: usize) -> Array2<f64> {
    let dv = g.node_features.ncols();
    let de = g.edge_features.ncols();
    let du = g.global_features.as_ref().map_or(0, Array2::ncols);
    let mut x = Array2::zeros((end - start, de + 2 * dv + du));
    for (row, k) in (start..end).enumerate() {
        x.slice_mut(s![row, 0..de]).assign(&g.edge_features.row(k));
        x.slice_mut(s![row, de..de + dv])
            .assign(&g.node_features.row(g.receivers[k]));
        x.slice_mut(s![row, de + dv..de + 2 * dv])
            .assign(&g.node_features.row(g.senders[k]));
        if let Some(u) = &g.global_features {
            x.slice_mut(s![row, de + 2 * dv..]).assign(&u.row(0));
        }
    }
    x
}

/// Edge block + incoming-sum aggregation without materialising all edge
/// outputs at once: edges are processed in index-order chunks, so the
/// per-node accumulation order matches the unchunked computation.
pub fn edge_aggregate_chunked_plain(
    g: &GraphData,
    mlp: &MlpParams,
    activation: Activation,
    chunk_rows: usize,
) -> Array2<f64> {
    let ne = g.n_edges();
    let width = mlp.spec.out_dim();
    let mut agg = Array2::zeros((g.n_nodes(), width));
    let mut start = 0;
    while start < ne {
        let end = (start + chunk_rows.max(1)).min(ne);
        let x = edge_inputs_plain(g, start, end);
        let e_out = mlp.forward_plain(&x, activation);
        for (row, k) in (start..end).enumerate() {
            let mut dst = agg.row_mut(g.receivers[k]);
            dst += &e_out.row(row);
        }
        start = end;
    }
    agg
}

/// Plain node block over a precomputed aggregation.
pub fn node_block_plain(
    g: &GraphData,
    agg: &Array2<f64>,
    mlp: &MlpParams,
    activation: Activation,
) -> Array2<f64> {
    let nv = g.n_nodes();
    let da = agg.ncols();
    let dv = g.node_features.ncols();
    let du = g.global_features.as_ref().map_or(0, Array2::ncols);
    let mut x = Array2::zeros((nv, da + dv + du));
    x.slice_mut(s![.., 0..da]).assign(agg);
    x.slice_mut(s![.., da..da + dv]).assign(&g.node_features);
    if let Some(u) = &g.global_features {
        for mut row in x.slice_mut(s![.., da + dv..]).rows_mut() {
            row.assign(&u.row(0));
        }
    }
    mlp.forward_plain(&x, activation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gn::mlp::MlpSpec;
    use crate::rng::{domain, stream_rng};
    use rand::Rng;

    fn toy_graph(seed: u64, nv: usize, ne: usize, with_u: bool) -> GraphData {
        let mut rng = stream_rng(seed, domain::TEST, 3);
        GraphData {
            node_features: Array2::from_shape_fn((nv, 3), |_| rng.gen_range(-1.0..1.0)),
            senders: Arc::new((0..ne).map(|_| rng.gen_range(0..nv)).collect()),
            receivers: Arc::new((0..ne).map(|_| rng.gen_range(0..nv)).collect()),
            edge_features: Array2::from_shape_fn((ne, 2), |_| rng.gen_range(-1.0..1.0)),
            global_features: with_u.then(|| Array2::from_elem((1, 1), 0.01)),
        }
    }

    /// Hand-checkable case: 2 nodes, 1 edge, identity-ish single-layer MLPs.
    #[test]
    fn two_node_one_edge_hand_computation() {
        let g = GraphData {
            node_features: ndarray::array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]],
            senders: Arc::new(vec![0]),
            receivers: Arc::new(vec![1]),
            edge_features: ndarray::array![[0.25, -0.75]],
            global_features: Some(ndarray::array![[0.01]]),
        };
        g.validate().unwrap();
        // phi_e: single activated layer summing all 9 inputs (weights 1).
        let spec = MlpSpec { in_dim: 9, widths: vec![1], activate_last: true };
        let mut mlp = MlpParams::zeros(spec);
        mlp.layers[0].0.fill(1.0);
        mlp.layers[0].1[(0, 0)] = 0.1;

        // concat order is (e, v_recv, v_send, u):
        // 0.25 - 0.75 + (-1 + 0 + 3) + (1 + 2 + 0.5) + 0.01 + bias 0.1
        let expected = 0.25 - 0.75 + 2.0 + 3.5 + 0.01 + 0.1;

        let plain = edge_block_plain(&g, &mlp, Activation::Relu);
        assert!((plain[(0, 0)] - expected).abs() < 1e-12, "{plain}");

        let mut tape = Tape::new();
        let vars = GraphVars {
            nodes: tape.leaf(g.node_features.clone()),
            edges: tape.leaf(g.edge_features.clone()),
            global: Some(tape.leaf(g.global_features.clone().unwrap())),
        };
        let mlp_vars = mlp.leaf_on(&mut tape, Activation::Relu);
        let e_out = edge_block_t(&mut tape, &g.senders, &g.receivers, vars, &mlp_vars);
        assert_eq!(tape.value(e_out), &plain);
    }

    #[test]
    fn aggregation_is_exact_sum() {
        // A node with no incoming edges aggregates to zero; duplicating an
        // edge row doubles its contribution; splitting a row into two halves
        // leaves the aggregate bit-identical.
        let e_out = ndarray::array![[1.5, -2.0], [0.25, 0.75]];
        let mut tape = Tape::new();
        let e = tape.leaf(e_out.clone());
        let recv = Arc::new(vec![1usize, 1]);
        let agg = tape.scatter_add_rows(e, recv, 3);
        assert_eq!(tape.value(agg).row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(tape.value(agg).row(2).to_vec(), vec![0.0, 0.0]);
        assert_eq!(tape.value(agg).row(1).to_vec(), vec![1.75, -1.25]);

        let halves = ndarray::array![[0.75, -1.0], [0.75, -1.0], [0.25, 0.75]];
        let h = tape.leaf(halves);
        let agg2 = tape.scatter_add_rows(h, Arc::new(vec![1, 1, 1]), 3);
        assert_eq!(tape.value(agg2), tape.value(agg));
    }

    #[test]
    fn zero_weight_edge_mlp_gives_bias_constant() {
        let g = toy_graph(7, 4, 6, true);
        let mut mlp = MlpParams::zeros(MlpSpec { in_dim: 9, widths: vec![5], activate_last: true });
        let plain = edge_block_plain(&g, &mlp, Activation::Relu);
        assert_eq!(plain, Array2::<f64>::zeros((6, 5)));
        mlp.layers[0].1.fill(0.3);
        let plain = edge_block_plain(&g, &mlp, Activation::Relu);
        assert!(plain.iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn chunked_aggregation_matches_unchunked() {
        let g = toy_graph(8, 17, 230, true);
        let mlp = MlpParams::init(
            MlpSpec { in_dim: 9, widths: vec![13, 13], activate_last: true },
            &mut stream_rng(8, domain::PARAMS, 0),
        );
        let full = {
            let e_out = edge_block_plain(&g, &mlp, Activation::Relu);
            let mut agg = Array2::zeros((17, 13));
            for (k, &r) in g.receivers.iter().enumerate() {
                let mut dst = agg.row_mut(r);
                dst += &e_out.row(k);
            }
            agg
        };
        for chunk in [1, 7, 64, 1000] {
            let got = edge_aggregate_chunked_plain(&g, &mlp, Activation::Relu, chunk);
            assert_eq!(got, full, "chunk {chunk}");
        }
    }

    #[test]
    fn tape_and_plain_paths_agree_bitwise() {
        let g = toy_graph(9, 11, 40, true);
        let mut rng = stream_rng(9, domain::PARAMS, 1);
        let e_mlp = MlpParams::init(MlpSpec { in_dim: 9, widths: vec![8, 8], activate_last: true }, &mut rng);
        let v_mlp = MlpParams::init(MlpSpec { in_dim: 12, widths: vec![6], activate_last: true }, &mut rng);

        let e_plain = edge_block_plain(&g, &e_mlp, Activation::Softplus);
        let agg_plain = edge_aggregate_chunked_plain(&g, &e_mlp, Activation::Softplus, usize::MAX);
        let v_plain = node_block_plain(&g, &agg_plain, &v_mlp, Activation::Softplus);

        let mut tape = Tape::new();
        let vars = GraphVars {
            nodes: tape.leaf(g.node_features.clone()),
            edges: tape.leaf(g.edge_features.clone()),
            global: g.global_features.as_ref().map(|u| tape.leaf(u.clone())),
        };
        let e_vars = e_mlp.leaf_on(&mut tape, Activation::Softplus);
        let v_vars = v_mlp.leaf_on(&mut tape, Activation::Softplus);
        let e_t = edge_block_t(&mut tape, &g.senders, &g.receivers, vars, &e_vars);
        let agg_t = aggregate_incoming_t(&mut tape, &g.receivers, g.n_nodes(), e_t);
        let v_t = node_block_t(&mut tape, g.n_nodes(), vars, agg_t, &v_vars);

        assert_eq!(tape.value(e_t), &e_plain);
        assert_eq!(tape.value(agg_t), &agg_plain);
        assert_eq!(tape.value(v_t), &v_plain);
    }

    /// Relabeling nodes permutes node outputs and leaves the global sum alone.
    #[test]
    fn permutation_equivariance() {
        let g = toy_graph(10, 6, 14, true);
        let mut rng = stream_rng(10, domain::PARAMS, 2);
        let e_mlp = MlpParams::init(MlpSpec { in_dim: 9, widths: vec![7], activate_last: true }, &mut rng);
        let v_mlp = MlpParams::init(MlpSpec { in_dim: 11, widths: vec![5], activate_last: true }, &mut rng);
        let u_mlp = MlpParams::init(MlpSpec { in_dim: 13, widths: vec![4], activate_last: true }, &mut rng);

        let run = |g: &GraphData| -> (Array2<f64>, Array2<f64>) {
            let mut tape = Tape::new();
            let vars = GraphVars {
                nodes: tape.leaf(g.node_features.clone()),
                edges: tape.leaf(g.edge_features.clone()),
                global: g.global_features.as_ref().map(|u| tape.leaf(u.clone())),
            };
            let ev = e_mlp.leaf_on(&mut tape, Activation::Softplus);
            let vv = v_mlp.leaf_on(&mut tape, Activation::Softplus);
            let uv = u_mlp.leaf_on(&mut tape, Activation::Softplus);
            let e_t = edge_block_t(&mut tape, &g.senders, &g.receivers, vars, &ev);
            let agg = aggregate_incoming_t(&mut tape, &g.receivers, g.n_nodes(), e_t);
            let v_t = node_block_t(&mut tape, g.n_nodes(), vars, agg, &vv);
            let e_sum = tape.sum_rows(e_t);
            let v_sum = tape.sum_rows(v_t);
            let u_t = global_block_t(&mut tape, e_sum, v_sum, vars.global, &uv);
            (tape.value(v_t).clone(), tape.value(u_t).clone())
        };

        let (v_orig, u_orig) = run(&g);

        // permutation: new id = perm[old id]
        let perm = [3usize, 0, 4, 1, 5, 2];
        let mut node_features = Array2::zeros(g.node_features.dim());
        for (old, &new) in perm.iter().enumerate() {
            node_features.row_mut(new).assign(&g.node_features.row(old));
        }
        let permuted = GraphData {
            node_features,
            senders: Arc::new(g.senders.iter().map(|&s| perm[s]).collect()),
            receivers: Arc::new(g.receivers.iter().map(|&r| perm[r]).collect()),
            edge_features: g.edge_features.clone(),
            global_features: g.global_features.clone(),
        };
        let (v_perm, u_perm) = run(&permuted);

        for (old, &new) in perm.iter().enumerate() {
            for c in 0..v_orig.ncols() {
                assert!((v_orig[(old, c)] - v_perm[(new, c)]).abs() < 1e-12);
            }
        }
        for (a, b) in u_orig.iter().zip(u_perm.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn validate_rejects_bad_graphs() {
        let mut g = toy_graph(11, 4, 5, false);
        g.validate().unwrap();
        let mut bad = g.clone();
        bad.receivers = Arc::new(vec![0, 1, 2, 3, 9]);
        assert!(bad.validate().is_err());
        g.node_features[(0, 0)] = f64::NAN;
        assert!(g.validate().is_err());
    }
}
