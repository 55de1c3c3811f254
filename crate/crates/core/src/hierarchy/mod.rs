//! Hierarchical interaction graphs over a quadtree decomposition of the box.
//!
//! The box is divided into uniform grids of 2^(l+1) x 2^(l+1) cells at kept
//! levels l = 1..depth-1 (the trivial 2x2 top level is removed), with the
//! particles themselves forming the level below the finest cells. Interactions
//! are split by scale:
//!
//! * particles in the same or Chebyshev-adjacent finest cells interact
//!   directly (particle edges);
//! * cells at level l that are *not* adjacent but whose parents *are* adjacent
//!   interact via near-neighbour edges, which stand in for all particle pairs
//!   under them.
//!
//! Together these cover every particle pair exactly once: once two ancestors
//! separate (stop being adjacent) they stay separated at all finer levels, so
//! each pair is handed off at exactly one level — or reaches the particle
//! level still adjacent. [`crate::hierarchy::coverage`] checks this property
//! exhaustively. Cell adjacency wraps around the torus by default; a
//! non-periodic mode exists for comparison.

pub mod baselines;
pub mod coverage;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::pbc::{min_image_unchecked, wrap_pos};
use crate::sim::ParticleSystem;

/// One occupied quadtree cell. Ids are indices into the cell list of the
/// owning level.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Kept level, 1 = coarsest.
    pub level: u32,
    /// Grid coordinates in [0, 2^(level+1))^2.
    pub grid_index: [u32; 2],
    pub total_mass: f64,
    /// Mass-weighted mean of child positions (children are unwrapped relative
    /// to the cell centre before averaging, so a cell spanning no seam — which
    /// uniform cells never do — gets the plain convex combination).
    pub com_position: [f64; 2],
    pub com_velocity: [f64; 2],
    /// Sum of child charges; 0 under gravity.
    pub total_charge: f64,
    /// Ids of child cells one level finer (empty at the finest level).
    pub children_cells: Vec<usize>,
    /// Particle indices (populated only at the finest level).
    pub child_particles: Vec<usize>,
    /// Id of the parent cell one level coarser (None at level 1).
    pub parent: Option<usize>,
}

/// The hierarchical interaction graph for one snapshot.
#[derive(Debug, Clone)]
pub struct HierGraph {
    /// Depth parameter: cell levels 1..=depth-1 are kept, particles underneath.
    pub depth: usize,
    pub periodic: bool,
    pub cell_size: f64,
    /// `levels[k]` holds the cells of level k+1 (so `levels` has depth-1 entries).
    pub levels: Vec<Vec<Cell>>,
    /// `near_edges[k]`: directed (sender, receiver) cell-id pairs within level
    /// k+1. The relation is symmetric, so both directions are present.
    pub near_edges: Vec<Vec<(usize, usize)>>,
    /// Directed (sender, receiver) particle pairs in the same or adjacent
    /// finest cells; both directions present, no self-edges.
    pub particle_edges: Vec<(usize, usize)>,
    /// Finest-level cell id for each particle.
    pub cell_of_particle: Vec<usize>,
}

impl HierGraph {
    /// Number of kept cell levels (= depth - 1).
    pub fn n_cell_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn cells(&self, level: u32) -> &[Cell] {
        &self.levels[level as usize - 1]
    }

    pub fn near_edges_at(&self, level: u32) -> &[(usize, usize)] {
        &self.near_edges[level as usize - 1]
    }

    pub fn finest_level(&self) -> u32 {
        self.depth as u32 - 1
    }

    pub fn n_particles(&self) -> usize {
        self.cell_of_particle.len()
    }

    /// Total node count: particles plus kept cells.
    pub fn n_nodes(&self) -> usize {
        self.n_particles() + self.levels.iter().map(Vec::len).sum::<usize>()
    }

    /// Parent-child cell edges plus finest-cell-to-particle attachments,
    /// as (level of parent, parent id, child id) triples.
    pub fn parent_child_edges(&self) -> Vec<(u32, usize, usize)> {
        let mut edges = Vec::new();
        for (k, cells) in self.levels.iter().enumerate() {
            let level = k as u32 + 1;
            for (id, cell) in cells.iter().enumerate() {
                for &child in &cell.children_cells {
                    edges.push((level, id, child));
                }
                for &p in &cell.child_particles {
                    edges.push((level, id, p));
                }
            }
        }
        edges
    }

    /// Total directed edge count: near edges at every level, particle edges,
    /// and one count per parent-child link.
    pub fn n_edges(&self) -> usize {
        self.near_edges.iter().map(Vec::len).sum::<usize>()
            + self.particle_edges.len()
            + self.levels.iter().flatten().map(|c| c.children_cells.len() + c.child_particles.len()).sum::<usize>()
    }

    /// Side length of the level-`level` grid.
    pub fn grid_side(level: u32) -> u32 {
        1 << (level + 1)
    }

    /// Geometric centre of a cell.
    pub fn cell_centre(&self, level: u32, grid_index: [u32; 2]) -> [f64; 2] {
        let w = self.cell_size / f64::from(Self::grid_side(level));
        [
            (f64::from(grid_index[0]) + 0.5) * w,
            (f64::from(grid_index[1]) + 0.5) * w,
        ]
    }
}

/// How the hierarchy depth is chosen when building graphs for a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "value")]
pub enum DepthPolicy {
    /// `choose_depth(N)` from the particle count.
    Auto,
    /// Explicit depth override.
    Fixed(usize),
    /// Deepen the (still uniform) grid until every finest cell holds at most
    /// `kmax` particles, capped at depth 12.
    Adaptive { kmax: usize },
}

impl DepthPolicy {
    pub fn resolve(&self, sys: &ParticleSystem, cell_size: f64) -> Result<usize> {
        match *self {
            DepthPolicy::Auto => Ok(choose_depth(sys.len())),
            DepthPolicy::Fixed(d) => {
                if d < 2 {
                    return Err(Error::Config(format!("depth must be >= 2, got {d}")));
                }
                Ok(d)
            }
            DepthPolicy::Adaptive { kmax } => {
                if kmax == 0 {
                    return Err(Error::Config("adaptive kmax must be >= 1".into()));
                }
                Ok(adaptive_depth(sys, cell_size, kmax))
            }
        }
    }
}

/// Default hierarchy depth for N particles: round(log4 N), at least 2
/// (anything shallower has no near-neighbour pairs once the top level is
/// removed).
pub fn choose_depth(n: usize) -> usize {
    if n <= 1 {
        return 2;
    }
    let d = ((n as f64).ln() / 4f64.ln()).round() as usize;
    d.max(2)
}

const ADAPTIVE_DEPTH_CAP: usize = 12;

fn adaptive_depth(sys: &ParticleSystem, cell_size: f64, kmax: usize) -> usize {
    let mut depth = 2;
    while depth < ADAPTIVE_DEPTH_CAP {
        let side = HierGraph::grid_side(depth as u32 - 1);
        let mut occupancy: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for q in &sys.positions {
            let idx = grid_index_of(*q, cell_size, side);
            *occupancy.entry((idx[0], idx[1])).or_default() += 1;
        }
        if occupancy.values().all(|&c| c <= kmax) {
            break;
        }
        depth += 1;
    }
    depth
}

/// Finest-grid cell of a position; half-open intervals, so a coordinate at
/// exactly a cell boundary belongs to the cell on its right.
fn grid_index_of(q: [f64; 2], cell_size: f64, side: u32) -> [u32; 2] {
    let w = cell_size / f64::from(side);
    let ix = ((q[0] / w) as u32).min(side - 1);
    let iy = ((q[1] / w) as u32).min(side - 1);
    [ix, iy]
}

/// Chebyshev adjacency of two grid cells (distance <= 1 per axis, wrapping
/// around the torus if periodic). A cell is adjacent to itself.
fn cells_adjacent(a: [u32; 2], b: [u32; 2], side: u32, periodic: bool) -> bool {
    (0..2).all(|axis| {
        let d = a[axis].abs_diff(b[axis]);
        let d = if periodic { d.min(side - d) } else { d };
        d <= 1
    })
}

/// The distinct grid cells in the 3x3 neighbourhood of `c` (including `c`).
/// On small toroidal grids the wrapped offsets can collide, hence the dedup.
fn neighbourhood(c: [u32; 2], side: u32, periodic: bool) -> Vec<[u32; 2]> {
    let side_i = i64::from(side);
    let mut out = Vec::with_capacity(9);
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            let x = i64::from(c[0]) + dx;
            let y = i64::from(c[1]) + dy;
            if periodic {
                out.push([x.rem_euclid(side_i) as u32, y.rem_euclid(side_i) as u32]);
            } else if (0..side_i).contains(&x) && (0..side_i).contains(&y) {
                out.push([x as u32, y as u32]);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Builds the hierarchical interaction graph for one snapshot.
///
/// Positions must lie in `[0, cell_size)^2`. Empty cells are never created:
/// each level keeps only the occupied cells, in grid-index order.
pub fn build_hier_graph(
    sys: &ParticleSystem,
    cell_size: f64,
    depth: usize,
    periodic: bool,
) -> Result<HierGraph> {
    if depth < 2 {
        return Err(Error::invalid(format!("hierarchy depth must be >= 2, got {depth}")));
    }
    if depth > 16 {
        return Err(Error::invalid(format!("hierarchy depth {depth} is unreasonably deep")));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
    }
    let n = sys.len();
    if n == 0 {
        return Err(Error::invalid("cannot build a graph over an empty system"));
    }
    if !sys.is_finite() {
        return Err(Error::NonFinite("particle state".into()));
    }
    for (i, q) in sys.positions.iter().enumerate() {
        if !(0.0..cell_size).contains(&q[0]) || !(0.0..cell_size).contains(&q[1]) {
            return Err(Error::invalid(format!(
                "particle {i} at {q:?} outside [0, {cell_size})^2"
            )));
        }
    }

    let n_cell_levels = depth - 1;
    let finest = depth as u32 - 1;

    // Occupied finest cells in grid-index order, with their particles.
    let finest_side = HierGraph::grid_side(finest);
    let mut by_cell: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, &q) in sys.positions.iter().enumerate() {
        let idx = grid_index_of(q, cell_size, finest_side);
        by_cell.entry((idx[0], idx[1])).or_default().push(i);
    }

    let mut levels: Vec<Vec<Cell>> = vec![Vec::new(); n_cell_levels];
    let mut index_maps: Vec<BTreeMap<(u32, u32), usize>> = vec![BTreeMap::new(); n_cell_levels];

    let mut cell_of_particle = vec![usize::MAX; n];
    for (id, ((ix, iy), members)) in by_cell.into_iter().enumerate() {
        for &p in &members {
            cell_of_particle[p] = id;
        }
        levels[n_cell_levels - 1].push(Cell {
            level: finest,
            grid_index: [ix, iy],
            total_mass: 0.0,
            com_position: [0.0; 2],
            com_velocity: [0.0; 2],
            total_charge: 0.0,
            children_cells: Vec::new(),
            child_particles: members,
            parent: None,
        });
        index_maps[n_cell_levels - 1].insert((ix, iy), id);
    }

    // Coarser levels: the occupied cells are exactly the parents of occupied
    // finer cells.
    for level in (1..finest).rev() {
        let k = level as usize - 1;
        let mut parents: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for (child_id, child) in levels[k + 1].iter().enumerate() {
            let key = (child.grid_index[0] / 2, child.grid_index[1] / 2);
            parents.entry(key).or_default().push(child_id);
        }
        for (id, ((ix, iy), children)) in parents.into_iter().enumerate() {
            for &c in &children {
                levels[k + 1][c].parent = Some(id);
            }
            levels[k].push(Cell {
                level,
                grid_index: [ix, iy],
                total_mass: 0.0,
                com_position: [0.0; 2],
                com_velocity: [0.0; 2],
                total_charge: 0.0,
                children_cells: children,
                child_particles: Vec::new(),
                parent: None,
            });
            index_maps[k].insert((ix, iy), id);
        }
    }

    // Summaries, bottom-up. Child positions are taken relative to the cell
    // centre under the minimum image before averaging.
    let charges = sys.charges.as_deref();
    for k in (0..n_cell_levels).rev() {
        let child_summaries: Vec<([f64; 2], [f64; 2], f64, f64)> = if k == n_cell_levels - 1 {
            Vec::new()
        } else {
            levels[k + 1]
                .iter()
                .map(|c| (c.com_position, c.com_velocity, c.total_mass, c.total_charge))
                .collect()
        };
        let level = k as u32 + 1;
        let side = HierGraph::grid_side(level);
        let w = cell_size / f64::from(side);
        for cell in &mut levels[k] {
            let centre = [
                (f64::from(cell.grid_index[0]) + 0.5) * w,
                (f64::from(cell.grid_index[1]) + 0.5) * w,
            ];
            let mut mass = 0.0;
            let mut charge = 0.0;
            let mut mq = [0.0; 2];
            let mut mv = [0.0; 2];
            let mut absorb = |m: f64, q: [f64; 2], v: [f64; 2], c: f64| {
                let rel = min_image_unchecked(q, centre, cell_size);
                mass += m;
                charge += c;
                mq[0] += m * rel[0];
                mq[1] += m * rel[1];
                mv[0] += m * v[0];
                mv[1] += m * v[1];
            };
            for &p in &cell.child_particles {
                absorb(
                    sys.masses[p],
                    sys.positions[p],
                    sys.velocities[p],
                    charges.map_or(0.0, |c| c[p]),
                );
            }
            for &c in &cell.children_cells {
                let (q, v, m, ch) = child_summaries[c];
                absorb(m, q, v, ch);
            }
            cell.total_mass = mass;
            cell.total_charge = charge;
            cell.com_position = wrap_pos([centre[0] + mq[0] / mass, centre[1] + mq[1] / mass], cell_size);
            cell.com_velocity = [mv[0] / mass, mv[1] / mass];
        }
    }

    // Near-neighbour edges: candidates are the occupied children of the
    // receiver's parent's neighbourhood; keep those not adjacent to the
    // receiver. (Children of non-adjacent parents are at wrap distance >= 3,
    // so restricting candidates this way loses nothing.)
    let mut near_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_cell_levels];
    for k in 0..n_cell_levels {
        let level = k as u32 + 1;
        let side = HierGraph::grid_side(level);
        let parent_side = side / 2;
        let mut edges = Vec::new();
        for (recv_id, cell) in levels[k].iter().enumerate() {
            let parent_idx = [cell.grid_index[0] / 2, cell.grid_index[1] / 2];
            let mut senders: Vec<usize> = Vec::new();
            for p in neighbourhood(parent_idx, parent_side, periodic) {
                for child_slot in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                    let candidate = [2 * p[0] + child_slot[0], 2 * p[1] + child_slot[1]];
                    if let Some(&sender_id) = index_maps[k].get(&(candidate[0], candidate[1])) {
                        if sender_id != recv_id
                            && !cells_adjacent(candidate, cell.grid_index, side, periodic)
                        {
                            senders.push(sender_id);
                        }
                    }
                }
            }
            senders.sort_unstable();
            senders.dedup();
            edges.extend(senders.into_iter().map(|s| (s, recv_id)));
        }
        near_edges[k] = edges;
    }

    // Particle edges within the 3x3 neighbourhood of finest cells.
    let finest_cells = &levels[n_cell_levels - 1];
    let mut particle_edges = Vec::new();
    for (recv_cell_id, cell) in finest_cells.iter().enumerate() {
        let mut neighbour_cells: Vec<usize> = neighbourhood(cell.grid_index, finest_side, periodic)
            .into_iter()
            .filter_map(|idx| index_maps[n_cell_levels - 1].get(&(idx[0], idx[1])).copied())
            .collect();
        neighbour_cells.sort_unstable();
        let _ = recv_cell_id;
        for &recv in &cell.child_particles {
            for &nc in &neighbour_cells {
                for &send in &finest_cells[nc].child_particles {
                    if send != recv {
                        particle_edges.push((send, recv));
                    }
                }
            }
        }
    }

    Ok(HierGraph {
        depth,
        periodic,
        cell_size,
        levels,
        near_edges,
        particle_edges,
        cell_of_particle,
    })
}
