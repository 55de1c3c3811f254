//! Exhaustive check that the hierarchical graph covers every particle pair
//! exactly once — the defining property of the construction. A pair is
//! covered by its direct particle edge, or by a near-neighbour edge between
//! its ancestor cells at some level; double or missing coverage means the
//! graph would double-count or drop that interaction.

use std::collections::HashSet;

use super::HierGraph;

/// One incorrectly covered unordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageViolation {
    pub i: usize,
    pub j: usize,
    /// Number of edges covering the pair (1 would be correct).
    pub coverage: usize,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub n_pairs: usize,
    pub violations: Vec<CoverageViolation>,
}

impl CoverageReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} violations over {} pairs",
            self.violations.len(),
            self.n_pairs
        )
    }
}

/// Counts, for every unordered particle pair, the direct particle edge plus
/// near-neighbour edges between the pair's ancestors at each level, and
/// reports every pair whose total differs from 1. O(N^2 * depth).
pub fn interaction_coverage_check(g: &HierGraph) -> CoverageReport {
    let n = g.n_particles();
    let n_levels = g.n_cell_levels();

    // ancestors[k][p] = id of particle p's ancestor cell at level k+1
    let mut ancestors = vec![vec![0usize; n]; n_levels];
    ancestors[n_levels - 1].copy_from_slice(&g.cell_of_particle);
    for k in (0..n_levels - 1).rev() {
        for p in 0..n {
            let child = ancestors[k + 1][p];
            ancestors[k][p] = g.levels[k + 1][child]
                .parent
                .expect("non-root cells have parents");
        }
    }

    let near_sets: Vec<HashSet<(usize, usize)>> = g
        .near_edges
        .iter()
        .map(|edges| edges.iter().copied().collect())
        .collect();
    let direct: HashSet<(usize, usize)> = g.particle_edges.iter().copied().collect();

    // Coverage is per unordered pair: an edge stored in either direction
    // counts once. (That both directions are stored is a separate graph
    // invariant with its own test.)
    let mut violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut coverage =
                usize::from(direct.contains(&(i, j)) || direct.contains(&(j, i)));
            for k in 0..n_levels {
                let (a, b) = (ancestors[k][i], ancestors[k][j]);
                if a != b && (near_sets[k].contains(&(a, b)) || near_sets[k].contains(&(b, a))) {
                    coverage += 1;
                }
            }
            if coverage != 1 {
                violations.push(CoverageViolation { i, j, coverage });
            }
        }
    }
    CoverageReport { n_pairs: n * (n - 1) / 2, violations }
}
