//! Wall-clock scaling of graph construction and the model forward pass, plus
//! cross-particle-count generalisation tables. A failure at one N (say, an
//! allocation that does not fit) becomes a row status, not a crash.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::deltagn::deltagn_forward_plain;
use crate::models::{
    build_model_graph, ForwardOpts, GraphPolicy, ModelGraph, ModelParams, ModelVariant,
};
use crate::rng::derive_seed;
use crate::sim::init::init_system;
use crate::sim::{ForceLaw, SimConfig, Trajectory};

use super::metrics::evaluate;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Median over repeats.
    pub build_seconds: Option<f64>,
    pub forward_seconds: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTable {
    pub policy: GraphPolicy,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Least-squares slope of ln(y) against ln(x); the measured scaling exponent.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2, "need matched samples");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn bench_one(policy: &GraphPolicy, n: usize, repeats: usize, seed: u64) -> Result<BenchRow> {
    let cfg = SimConfig::for_particle_count(n, ForceLaw::Gravity);
    let sys = init_system(n, &cfg, derive_seed(seed, n as u64))?;
    let with_hier = matches!(policy, GraphPolicy::Hier { .. });
    // The timed forward is the direct state-change model: the shared GN
    // architecture whose cost is representative of both variants.
    let params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, with_hier, seed);
    let opts = ForwardOpts::default();

    // Warm-up pass so first-touch allocation cost lands outside the timings.
    let graph = build_model_graph(&sys, cfg.cell_size, policy)?;
    deltagn_forward_plain(&params, &sys, cfg.cell_size, cfg.dt_base, &graph, &opts)?;
    let (nodes, edges) = match &graph {
        ModelGraph::Flat(topo) => (n, topo.len()),
        ModelGraph::Hier(g) => (g.n_nodes(), g.n_edges()),
    };

    let mut builds = Vec::with_capacity(repeats);
    let mut forwards = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        let graph = build_model_graph(&sys, cfg.cell_size, policy)?;
        builds.push(t0.elapsed().as_secs_f64());
        let t1 = Instant::now();
        deltagn_forward_plain(&params, &sys, cfg.cell_size, cfg.dt_base, &graph, &opts)?;
        forwards.push(t1.elapsed().as_secs_f64());
    }
    Ok(BenchRow {
        n,
        nodes,
        edges,
        build_seconds: Some(median(&mut builds)),
        forward_seconds: Some(median(&mut forwards)),
        status: "ok".into(),
    })
}

/// Times graph build and forward pass at each N; errors become row statuses.
pub fn scaling_bench(
    policy: &GraphPolicy,
    n_list: &[usize],
    repeats: usize,
    seed: u64,
) -> BenchTable {
    let repeats = repeats.max(1);
    let rows = n_list
        .iter()
        .map(|&n| {
            bench_one(policy, n, repeats, seed).unwrap_or_else(|e| BenchRow {
                n,
                nodes: 0,
                edges: 0,
                build_seconds: None,
                forward_seconds: None,
                status: format!("error: {e}"),
            })
        })
        .collect();
    BenchTable { policy: policy.clone(), repeats, rows }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenRow {
    pub n: usize,
    pub n_trajectories: usize,
    pub rmse: Option<f64>,
    pub energy_mean_abs: Option<f64>,
    pub n_truncated: usize,
}

/// Rollout metrics for one checkpoint across datasets of different particle
/// counts (the training count need not be among them).
pub fn generalisation_eval(
    params: &ModelParams,
    policy: &GraphPolicy,
    datasets: &[Vec<Trajectory>],
    tau: usize,
    opts: &ForwardOpts,
    seed: u64,
    config_hash: u64,
) -> Result<Vec<GenRow>> {
    datasets
        .iter()
        .map(|set| {
            let report = evaluate(params, policy, set, &[tau], opts, seed, config_hash)?;
            let s = &report.summary[0];
            Ok(GenRow {
                n: set.first().map_or(0, Trajectory::n_particles),
                n_trajectories: set.len(),
                rmse: s.rmse,
                energy_mean_abs: s.energy_mean_abs,
                n_truncated: set.len() - s.n_evaluated,
            })
        })
        .collect()
}
