//! Feature extraction and graph selection: turning a `ParticleSystem` into
//! node/edge features and the index structure a model variant consumes.
//!
//! Positions never become node features. Geometry enters only through
//! min-image relative positions on edges and through cell summary positions,
//! which keeps every variant translation-consistent on the torus.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ModelVariant;
use crate::error::Result;
use crate::gn::blocks::GraphData;
use crate::hierarchy::baselines::{full_graph, knn_graph};
use crate::hierarchy::{build_hier_graph, DepthPolicy, HierGraph};
use crate::sim::pbc::min_image_coord;
use crate::sim::ParticleSystem;

/// Which interaction graph a model runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GraphPolicy {
    /// All N(N-1) directed pairs.
    Full,
    /// Directed edges from the k nearest neighbours (min-image metric).
    Knn { k: usize },
    /// Quadtree cells with near-neighbour lists.
    Hier { depth: DepthPolicy, periodic: bool },
}

/// Edge endpoints in struct-of-arrays form, shareable with the tape.
#[derive(Debug, Clone)]
pub struct FlatTopo {
    pub senders: Arc<Vec<usize>>,
    pub receivers: Arc<Vec<usize>>,
}

impl FlatTopo {
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        FlatTopo {
            senders: Arc::new(pairs.iter().map(|&(s, _)| s).collect()),
            receivers: Arc::new(pairs.iter().map(|&(_, r)| r).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }
}

/// A built interaction graph, ready for feature extraction.
#[derive(Debug, Clone)]
pub enum ModelGraph {
    Flat(FlatTopo),
    Hier(Box<HierGraph>),
}

impl ModelGraph {
    /// Particle-level edge endpoints (the hierarchy's finest-level edges).
    pub fn particle_topology(&self) -> FlatTopo {
        match self {
            ModelGraph::Flat(t) => t.clone(),
            ModelGraph::Hier(g) => FlatTopo::from_pairs(&g.particle_edges),
        }
    }

    /// Total directed edge count (all levels for the hierarchy).
    pub fn edge_count(&self) -> usize {
        match self {
            ModelGraph::Flat(t) => t.len(),
            ModelGraph::Hier(g) => g.n_edges(),
        }
    }
}

/// Builds the interaction graph for one snapshot under a policy.
pub fn build_model_graph(
    sys: &ParticleSystem,
    cell_size: f64,
    policy: &GraphPolicy,
) -> Result<ModelGraph> {
    match policy {
        GraphPolicy::Full => Ok(ModelGraph::Flat(FlatTopo::from_pairs(&full_graph(sys.len())))),
        GraphPolicy::Knn { k } => Ok(ModelGraph::Flat(FlatTopo::from_pairs(&knn_graph(
            sys, cell_size, *k,
        )?))),
        GraphPolicy::Hier { depth, periodic } => {
            let d = depth.resolve(sys, cell_size)?;
            Ok(ModelGraph::Hier(Box::new(build_hier_graph(sys, cell_size, d, *periodic)?)))
        }
    }
}

/// Particle features: mass, velocity (delta) or momentum (hogn), charge if
/// the system carries charges.
pub fn raw_node_features(sys: &ParticleSystem, variant: ModelVariant) -> Array2<f64> {
    let n = sys.len();
    let dv = if sys.charges.is_some() { 4 } else { 3 };
    let mut out = Array2::zeros((n, dv));
    for i in 0..n {
        let scale = match variant {
            ModelVariant::Delta => 1.0,
            ModelVariant::Hogn => sys.masses[i],
        };
        out[(i, 0)] = sys.masses[i];
        out[(i, 1)] = scale * sys.velocities[i][0];
        out[(i, 2)] = scale * sys.velocities[i][1];
        if let Some(c) = &sys.charges {
            out[(i, 3)] = c[i];
        }
    }
    out
}

/// Cell summaries at hierarchy level index `k` in the same layout: total
/// mass, COM velocity (delta) or total momentum (hogn), total charge.
pub fn raw_cell_features(g: &HierGraph, k: usize, variant: ModelVariant, charged: bool) -> Array2<f64> {
    let cells = &g.levels[k];
    let dv = if charged { 4 } else { 3 };
    let mut out = Array2::zeros((cells.len(), dv));
    for (i, c) in cells.iter().enumerate() {
        let scale = match variant {
            ModelVariant::Delta => 1.0,
            ModelVariant::Hogn => c.total_mass,
        };
        out[(i, 0)] = c.total_mass;
        out[(i, 1)] = scale * c.com_velocity[0];
        out[(i, 2)] = scale * c.com_velocity[1];
        if charged {
            out[(i, 3)] = c.total_charge;
        }
    }
    out
}

pub fn positions_matrix(positions: &[[f64; 2]]) -> Array2<f64> {
    let mut out = Array2::zeros((positions.len(), 2));
    for (i, p) in positions.iter().enumerate() {
        out[(i, 0)] = p[0];
        out[(i, 1)] = p[1];
    }
    out
}

pub fn cell_positions_matrix(g: &HierGraph, k: usize) -> Array2<f64> {
    let cells = &g.levels[k];
    let mut out = Array2::zeros((cells.len(), 2));
    for (i, c) in cells.iter().enumerate() {
        out[(i, 0)] = c.com_position[0];
        out[(i, 1)] = c.com_position[1];
    }
    out
}

/// Min-image displacement receiver - sender for each (recv, send) id pair,
/// with endpoints taken from possibly different position tables.
pub fn rel_matrix(
    recv_pos: &Array2<f64>,
    recv_ids: &[usize],
    send_pos: &Array2<f64>,
    send_ids: &[usize],
    cell_size: f64,
) -> Array2<f64> {
    debug_assert_eq!(recv_ids.len(), send_ids.len());
    let mut out = Array2::zeros((recv_ids.len(), 2));
    for (row, (&r, &s)) in recv_ids.iter().zip(send_ids.iter()).enumerate() {
        for c in 0..2 {
            out[(row, c)] = min_image_coord(recv_pos[(r, c)] - send_pos[(s, c)], cell_size);
        }
    }
    out
}

/// The global feature row: Δt for the delta variant, absent for hogn.
pub fn global_row(variant: ModelVariant, dt: f64) -> Option<Array2<f64>> {
    match variant {
        ModelVariant::Delta => Some(Array2::from_elem((1, 1), dt)),
        ModelVariant::Hogn => None,
    }
}

/// Assembles the particle-level `GraphData` for a flat topology.
pub fn particle_graph_data(
    sys: &ParticleSystem,
    cell_size: f64,
    topo: &FlatTopo,
    variant: ModelVariant,
    dt: f64,
) -> GraphData {
    let pos = positions_matrix(&sys.positions);
    GraphData {
        node_features: raw_node_features(sys, variant),
        edge_features: rel_matrix(&pos, &topo.receivers, &pos, &topo.senders, cell_size),
        senders: topo.senders.clone(),
        receivers: topo.receivers.clone(),
        global_features: global_row(variant, dt),
    }
}

/// One parent-child layer of the hierarchy as flat index lists, enumerated
/// parent-major so scatter accumulation order is deterministic.
#[derive(Debug, Clone)]
pub struct LevelLink {
    /// Fine-side ids (children or particles), one per edge.
    pub child: Arc<Vec<usize>>,
    /// Coarse-side ids, one per edge.
    pub parent: Arc<Vec<usize>>,
}

/// Index structure for the upward/downward passes over one `HierGraph`.
#[derive(Debug, Clone)]
pub struct HierTopo {
    /// `cell_links[j]` connects parent cells `levels[j]` to child cells
    /// `levels[j+1]`.
    pub cell_links: Vec<LevelLink>,
    /// Particles to finest-level cells.
    pub finest_link: LevelLink,
    /// `parent_of[k][c]` = parent id of cell c at level index k (k >= 1).
    pub parent_of: Vec<Arc<Vec<usize>>>,
    /// Near-neighbour edges per level, split into id lists.
    pub near_send: Vec<Arc<Vec<usize>>>,
    pub near_recv: Vec<Arc<Vec<usize>>>,
    /// Particle-level edges.
    pub particles: FlatTopo,
    /// Finest cell of each particle (sender of its appended edge).
    pub cell_of: Arc<Vec<usize>>,
}

pub fn hier_topology(g: &HierGraph) -> HierTopo {
    let n_levels = g.levels.len();
    let mut cell_links = Vec::with_capacity(n_levels.saturating_sub(1));
    for j in 0..n_levels.saturating_sub(1) {
        let mut child = Vec::new();
        let mut parent = Vec::new();
        for (pid, cell) in g.levels[j].iter().enumerate() {
            for &cc in &cell.children_cells {
                child.push(cc);
                parent.push(pid);
            }
        }
        cell_links.push(LevelLink { child: Arc::new(child), parent: Arc::new(parent) });
    }
    let finest = n_levels - 1;
    let mut fchild = Vec::new();
    let mut fparent = Vec::new();
    for (cid, cell) in g.levels[finest].iter().enumerate() {
        for &p in &cell.child_particles {
            fchild.push(p);
            fparent.push(cid);
        }
    }
    let mut parent_of = vec![Arc::new(Vec::new())];
    for k in 1..n_levels {
        parent_of.push(Arc::new(
            g.levels[k].iter().map(|c| c.parent.expect("non-top cell has a parent")).collect(),
        ));
    }
    let near_send: Vec<_> = g
        .near_edges
        .iter()
        .map(|edges| Arc::new(edges.iter().map(|&(s, _)| s).collect::<Vec<_>>()))
        .collect();
    let near_recv: Vec<_> = g
        .near_edges
        .iter()
        .map(|edges| Arc::new(edges.iter().map(|&(_, r)| r).collect::<Vec<_>>()))
        .collect();
    HierTopo {
        cell_links,
        finest_link: LevelLink { child: Arc::new(fchild), parent: Arc::new(fparent) },
        parent_of,
        near_send,
        near_recv,
        particles: FlatTopo::from_pairs(&g.particle_edges),
        cell_of: Arc::new(g.cell_of_particle.clone()),
    }
}
