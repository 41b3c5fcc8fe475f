//! Severity metrics of a completed cascade: yield (fraction of demand still
//! served), failure counts, round counts, and hop distances between
//! consecutive failure rounds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeTrace;
use crate::grid::Grid;

/// Sentinel hop distance for line pairs in different components of the
/// original topology.
pub const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    /// Demand served at stabilization over original demand, in [0, 1].
    pub yield_fraction: f64,
    /// Total number of failed lines, initial event included.
    pub failures: usize,
    /// Rounds until stabilization.
    pub rounds: usize,
    /// Minimum hop distance between consecutive failure rounds (0 when the
    /// cascade never propagated).
    pub min_consecutive_distance: usize,
    /// d(F_{i-1}, F_i) for i = 1..=t.
    pub per_round_distances: Vec<usize>,
}

/// Demand served at stabilization divided by the original demand. A grid
/// with no demand serves everything by convention.
pub fn yield_of(grid: &Grid, trace: &CascadeTrace) -> f64 {
    let original: f64 = grid.powers().iter().filter(|&&p| p < 0.0).map(|p| -p).sum();
    if original == 0.0 {
        return 1.0;
    }
    let served: f64 = trace
        .shed_log
        .last()
        .map(|powers| powers.iter().filter(|&&p| p < 0.0).map(|p| -p).sum())
        .unwrap_or(0.0);
    // Empty f64 sums are -0.0; keep the ratio's zero positive.
    served / original + 0.0
}

/// Hop distance between two lines in the original topology: the minimum bus
/// distance over their endpoint pairs. Adjacent or identical lines are at
/// distance 0; [`UNREACHABLE`] across components.
pub fn edge_distance(grid: &Grid, e: usize, f: usize) -> usize {
    let (le, lf) = match (grid.line(e), grid.line(f)) {
        (Some(a), Some(b)) => (a, b),
        _ => return UNREACHABLE,
    };
    let dist = bus_distances(grid, le.u, le.v);
    dist[lf.u].min(dist[lf.v])
}

/// BFS distances from the nearer of two source buses.
fn bus_distances(grid: &Grid, a: usize, b: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; grid.num_buses()];
    let mut queue = VecDeque::new();
    dist[a] = 0;
    dist[b] = 0;
    queue.push_back(a);
    queue.push_back(b);
    while let Some(u) = queue.pop_front() {
        for &(_, w) in grid.adjacency(u) {
            if dist[w] == UNREACHABLE {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn round_distance(grid: &Grid, prev: &[usize], next: &[usize]) -> usize {
    let mut best = UNREACHABLE;
    for &e in prev {
        for &f in next {
            best = best.min(edge_distance(grid, e, f));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

/// All severity metrics of a trace. Pure function of (grid, trace).
pub fn cascade_metrics(grid: &Grid, trace: &CascadeTrace) -> CascadeMetrics {
    let per_round_distances: Vec<usize> = (1..trace.rounds.len())
        .map(|i| round_distance(grid, &trace.rounds[i - 1], &trace.rounds[i]))
        .collect();
    let min_consecutive_distance = per_round_distances.iter().copied().min().unwrap_or(0);
    CascadeMetrics {
        yield_fraction: yield_of(grid, trace),
        failures: trace.rounds.iter().map(|r| r.len()).sum(),
        rounds: trace.t,
        min_consecutive_distance,
        per_round_distances,
    }
}
