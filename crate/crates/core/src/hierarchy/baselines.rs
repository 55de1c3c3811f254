//! Baseline interaction graphs: fully connected and k-nearest-neighbour.

use crate::error::{Error, Result};
use crate::sim::pbc::min_image_unchecked;
use crate::sim::ParticleSystem;

/// All `n * (n - 1)` directed edges (sender, receiver), grouped by receiver.
pub fn full_graph(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n.saturating_sub(1) * n);
    for recv in 0..n {
        for send in 0..n {
            if send != recv {
                edges.push((send, recv));
            }
        }
    }
    edges
}

/// Directed edges from each particle's k nearest neighbours (minimum-image
/// metric) into it. Distance ties break towards the lower particle index.
pub fn knn_graph(sys: &ParticleSystem, cell_size: f64, k: usize) -> Result<Vec<(usize, usize)>> {
    let n = sys.len();
    if k >= n {
        return Err(Error::invalid(format!("k = {k} must be < N = {n}")));
    }
    if !sys.is_finite() {
        return Err(Error::NonFinite("particle state".into()));
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for recv in 0..n {
        dist.clear();
        for send in 0..n {
            if send == recv {
                continue;
            }
            let d = min_image_unchecked(sys.positions[send], sys.positions[recv], cell_size);
            dist.push((d[0] * d[0] + d[1] * d[1], send));
        }
        // total order: distances are finite, ties fall through to the index
        dist.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        edges.extend(dist[..k].iter().map(|&(_, send)| (send, recv)));
    }
    Ok(edges)
}
