//! JSON dumps of interaction graphs, for inspection and plotting.
//!
//! Hierarchical graphs serialize level by level: each level carries its cells
//! (id, grid index, summary statistics, parent/child links) and its
//! near-neighbour edge array; the particle-level edges and the
//! particle-to-cell assignment come last. Flat graphs are just an edge list.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::HierGraph;
use crate::models::ModelGraph;

#[derive(Debug, Serialize)]
struct CellDump {
    id: usize,
    level: u32,
    grid_index: [u32; 2],
    total_mass: f64,
    com_position: [f64; 2],
    com_velocity: [f64; 2],
    total_charge: f64,
    children_cells: Vec<usize>,
    child_particles: Vec<usize>,
    parent: Option<usize>,
}

#[derive(Debug, Serialize)]
struct LevelDump {
    level: u32,
    grid_side: u32,
    n_cells: usize,
    cells: Vec<CellDump>,
    near_edges: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize)]
struct HierDump {
    graph: &'static str,
    depth: usize,
    periodic: bool,
    cell_size: f64,
    n_particles: usize,
    n_nodes: usize,
    n_edges: usize,
    levels: Vec<LevelDump>,
    particle_edges: Vec<[usize; 2]>,
    cell_of_particle: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct FlatDump {
    graph: &'static str,
    n_particles: usize,
    n_edges: usize,
    edges: Vec<[usize; 2]>,
}

fn hier_dump(g: &HierGraph) -> HierDump {
    HierDump {
        graph: "hier",
        depth: g.depth,
        periodic: g.periodic,
        cell_size: g.cell_size,
        n_particles: g.n_particles(),
        n_nodes: g.n_nodes(),
        n_edges: g.n_edges(),
        levels: (1..=g.finest_level())
            .map(|level| LevelDump {
                level,
                grid_side: HierGraph::grid_side(level),
                n_cells: g.cells(level).len(),
                cells: g
                    .cells(level)
                    .iter()
                    .enumerate()
                    .map(|(id, c)| CellDump {
                        id,
                        level: c.level,
                        grid_index: c.grid_index,
                        total_mass: c.total_mass,
                        com_position: c.com_position,
                        com_velocity: c.com_velocity,
                        total_charge: c.total_charge,
                        children_cells: c.children_cells.clone(),
                        child_particles: c.child_particles.clone(),
                        parent: c.parent,
                    })
                    .collect(),
                near_edges: g.near_edges_at(level).iter().map(|&(s, r)| [s, r]).collect(),
            })
            .collect(),
        particle_edges: g.particle_edges.iter().map(|&(s, r)| [s, r]).collect(),
        cell_of_particle: g.cell_of_particle.clone(),
    }
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot encode graph JSON: {e}")))
}

pub fn graph_to_json(g: &HierGraph) -> Result<String> {
    to_pretty(&hier_dump(g))
}

/// JSON for any model graph; flat graphs need the particle count supplied
/// because an edge list alone does not determine it.
pub fn model_graph_to_json(g: &ModelGraph, n_particles: usize) -> Result<String> {
    match g {
        ModelGraph::Hier(h) => graph_to_json(h),
        ModelGraph::Flat(t) => {
            let edges: Vec<[usize; 2]> = t
                .senders
                .iter()
                .zip(t.receivers.iter())
                .map(|(&s, &r)| [s, r])
                .collect();
            to_pretty(&FlatDump {
                graph: "flat",
                n_particles,
                n_edges: edges.len(),
                edges,
            })
        }
    }
}

pub fn save_graph_json(path: impl AsRef<Path>, g: &ModelGraph, n_particles: usize) -> Result<()> {
    let mut text = model_graph_to_json(g, n_particles)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model_graph, GraphPolicy};
    use crate::sim::init::init_system;
    use crate::sim::{ForceLaw, SimConfig};

    #[test]
    fn hier_dump_mirrors_the_graph() {
        let config = SimConfig::for_particle_count(40, ForceLaw::Gravity);
        let sys = init_system(40, &config, 5).unwrap();
        let policy = GraphPolicy::Hier {
            depth: crate::hierarchy::DepthPolicy::Fixed(3),
            periodic: true,
        };
        let g = build_model_graph(&sys, config.cell_size, &policy).unwrap();
        let json = model_graph_to_json(&g, 40).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();

        assert_eq!(v["graph"], "hier");
        assert_eq!(v["depth"], 3);
        assert_eq!(v["n_particles"], 40);
        let ModelGraph::Hier(h) = &g else { panic!("expected hier graph") };
        assert_eq!(v["levels"].as_array().unwrap().len(), 2);
        assert_eq!(
            v["levels"][0]["near_edges"].as_array().unwrap().len(),
            h.near_edges_at(1).len()
        );
        assert_eq!(
            v["levels"][1]["cells"].as_array().unwrap().len(),
            h.cells(2).len()
        );
        let cell0 = &v["levels"][0]["cells"][0];
        assert_eq!(cell0["id"], 0);
        assert_eq!(cell0["level"], 1);
        assert!(cell0["grid_index"].is_array());
        assert!(cell0["total_mass"].as_f64().unwrap() > 0.0);
        assert_eq!(
            v["cell_of_particle"].as_array().unwrap().len(),
            40
        );
    }

    #[test]
    fn flat_dump_lists_all_edges() {
        let config = SimConfig::for_particle_count(5, ForceLaw::Gravity);
        let sys = init_system(5, &config, 6).unwrap();
        let g = build_model_graph(&sys, config.cell_size, &GraphPolicy::Full).unwrap();
        let json = model_graph_to_json(&g, 5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["graph"], "flat");
        assert_eq!(v["n_edges"], 20);
        assert_eq!(v["edges"].as_array().unwrap().len(), 20);
    }

    #[test]
    fn save_writes_parseable_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = SimConfig::for_particle_count(8, ForceLaw::Coulomb);
        let sys = init_system(8, &config, 7).unwrap();
        let g = build_model_graph(&sys, config.cell_size, &GraphPolicy::Knn { k: 3 }).unwrap();
        let path = dir.path().join("graph.json");
        save_graph_json(&path, &g, 8).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n_edges"], 24); // 8 particles x 3 neighbours
    }
}
