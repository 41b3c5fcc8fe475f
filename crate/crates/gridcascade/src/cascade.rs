//! Cascade evolution: repeated removal of overloaded lines with per-island
//! load shedding until the network stabilizes.
//!
//! Two engines produce identical traces. The reference engine refactorizes
//! the pseudo-inverse from scratch every round (O(t |V|^3)). The fast engine
//! factorizes once and then maintains the pseudo-inverse across removals:
//! non-cut lines by the O(|V|^2) rank-1 update, cut lines by an O(|V|)
//! component split with no matrix update at all (the stale matrix still
//! solves the flow equations once injections are balanced per island),
//! for O(|V|^3 + |F*| |V|^2) total.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcflow::{solve_flows, FlowState};
use crate::error::{Error, Result};
use crate::grid::{shed_load_with_factors, Grid, ShedFactor};
use crate::spectral::{is_cut_edge, split_subset, PseudoInverse};

/// Failure slack: a line fails when |f| exceeds capacity by more than this.
/// Keeps exact-capacity operating points from failing on float noise.
pub fn failure_tolerance(capacity: f64) -> f64 {
    1e-9 * capacity.max(1.0)
}

/// Processing order of a round's failed lines in the fast engine. The trace
/// does not depend on it; the option exists so tests can prove that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntraRoundOrder {
    #[default]
    Ascending,
    Descending,
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CascadeOptions {
    /// Error out (instead of logging) when pre-failure flows already violate
    /// capacities.
    pub strict_initial_feasibility: bool,
    pub intra_round_order: IntraRoundOrder,
    /// After stabilization, compare the maintained pseudo-inverse against a
    /// scratch refactorization and record the relative error (fast engine
    /// only; one check per run).
    pub verify_rank1: bool,
}

/// Runtime observations of one cascade run.
#[derive(Debug, Clone, Default)]
pub struct CascadeDiagnostics {
    /// Lines whose pre-failure flow already violated capacity.
    pub initial_infeasible_lines: Vec<usize>,
    /// Full refactorizations forced by a tripped numerical guard.
    pub fallbacks: u32,
    /// Entrywise relative error of the maintained pseudo-inverse against a
    /// scratch recomputation (when requested and no fallback interfered).
    pub rank1_verify_max_rel: Option<f64>,
}

/// Complete record of a cascade: failure rounds, per-round solved states,
/// per-round shedding, and the stabilized flows.
#[derive(Debug, Clone)]
pub struct CascadeTrace {
    /// Failure sets F_0 ..= F_t, each sorted ascending; pairwise disjoint.
    pub rounds: Vec<Vec<usize>>,
    /// State i is solved after removing all failures through round i.
    pub flow_snapshots: Vec<FlowState>,
    /// Injections used for state i (original powers shed against round i's
    /// island structure).
    pub shed_log: Vec<Vec<f64>>,
    /// Scale factors behind each entry of `shed_log`, per component in
    /// lowest-bus-first order.
    pub shed_factors: Vec<Vec<ShedFactor>>,
    /// Index of the last round with new failures.
    pub t: usize,
    /// Flows on surviving lines at stabilization.
    pub final_flows: BTreeMap<usize, f64>,
    pub diagnostics: CascadeDiagnostics,
}

impl CascadeTrace {
    /// Union of all failure rounds.
    pub fn all_failed(&self) -> BTreeSet<usize> {
        self.rounds.iter().flatten().copied().collect()
    }

    pub fn to_document(&self) -> TraceDocument {
        TraceDocument {
            meta: None,
            rounds: self.rounds.clone(),
            t: self.t,
            flows: self.flow_snapshots.iter().map(|s| s.to_map()).collect(),
            shed_powers: self.shed_log.clone(),
            shed_factors: self.shed_factors.clone(),
            final_flows: self.final_flows.clone(),
        }
    }

    /// Rebuild a trace from its serialized form. Flow snapshots carry no
    /// angles; everything metrics need is present.
    pub fn from_document(doc: &TraceDocument, grid: &Grid) -> CascadeTrace {
        let mut removed = 0u64;
        let mut snapshots = Vec::with_capacity(doc.flows.len());
        for (round, map) in doc.rounds.iter().zip(&doc.flows) {
            removed += round.len() as u64;
            snapshots.push(FlowState::from_flow_map(map, grid.num_lines(), removed));
        }
        CascadeTrace {
            rounds: doc.rounds.clone(),
            flow_snapshots: snapshots,
            shed_log: doc.shed_powers.clone(),
            shed_factors: doc.shed_factors.clone(),
            t: doc.t,
            final_flows: doc.final_flows.clone(),
            diagnostics: CascadeDiagnostics::default(),
        }
    }
}

/// On-disk trace format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
    pub rounds: Vec<Vec<usize>>,
    pub t: usize,
    pub flows: Vec<BTreeMap<usize, f64>>,
    pub shed_powers: Vec<Vec<f64>>,
    pub shed_factors: Vec<Vec<ShedFactor>>,
    pub final_flows: BTreeMap<usize, f64>,
}

fn validate_f0(grid: &Grid, f0: &[usize]) -> Result<BTreeSet<usize>> {
    let mut set = BTreeSet::new();
    for &id in f0 {
        if id >= grid.num_lines() {
            return Err(Error::validation(
                "f0",
                format!("unknown line id {id} (grid has {} lines)", grid.num_lines()),
            ));
        }
        set.insert(id);
    }
    Ok(set)
}

fn overloaded_lines(grid: &Grid, state: &FlowState, removed: &BTreeSet<usize>) -> Vec<usize> {
    grid.lines()
        .iter()
        .filter(|line| !removed.contains(&line.id))
        .filter(|line| {
            let f = state.flow(line.id).unwrap_or(0.0).abs();
            f > line.capacity + failure_tolerance(line.capacity)
        })
        .map(|line| line.id)
        .collect()
}

fn check_initial_feasibility(
    grid: &Grid,
    pinv: &PseudoInverse,
    opts: &CascadeOptions,
) -> Result<Vec<usize>> {
    let state = solve_flows(grid, pinv, &grid.powers())?;
    let violations = overloaded_lines(grid, &state, &BTreeSet::new());
    if !violations.is_empty() {
        if opts.strict_initial_feasibility {
            return Err(Error::InfeasibleInitialState { lines: violations });
        }
        log::warn!("pre-failure flows exceed capacity on lines {violations:?}; continuing anyway");
    }
    Ok(violations)
}

/// Reference cascade engine: remove the failures accumulated so far, shed
/// per island, re-solve from a fresh factorization, fail every line whose
/// |flow| exceeds capacity, and repeat until no new failures appear.
pub fn run_cfe(grid: &Grid, f0: &[usize]) -> Result<CascadeTrace> {
    run_cfe_with_options(grid, f0, &CascadeOptions::default())
}

pub fn run_cfe_with_options(
    grid: &Grid,
    f0: &[usize],
    opts: &CascadeOptions,
) -> Result<CascadeTrace> {
    let f0 = validate_f0(grid, f0)?;
    let infeasible = {
        let pinv = PseudoInverse::of_grid(grid)?;
        check_initial_feasibility(grid, &pinv, opts)?
    };
    let original_powers = grid.powers();

    let mut rounds: Vec<Vec<usize>> = vec![f0.iter().copied().collect()];
    let mut removed: BTreeSet<usize> = f0;
    let mut snapshots = Vec::new();
    let mut shed_log = Vec::new();
    let mut shed_factors = Vec::new();

    loop {
        let partition = grid.components(&removed);
        let (powers, factors) = shed_load_with_factors(&original_powers, &partition);
        let pinv = PseudoInverse::of_subgraph(grid, &removed)?;
        let state = solve_flows(grid, &pinv, &powers)?;
        let next = overloaded_lines(grid, &state, &removed);
        snapshots.push(state);
        shed_log.push(powers);
        shed_factors.push(factors);
        if next.is_empty() {
            break;
        }
        removed.extend(next.iter().copied());
        rounds.push(next);
    }

    let t = rounds.len() - 1;
    let final_flows = snapshots.last().map(|s| s.to_map()).unwrap_or_default();
    Ok(CascadeTrace {
        rounds,
        flow_snapshots: snapshots,
        shed_log,
        shed_factors,
        t,
        final_flows,
        diagnostics: CascadeDiagnostics {
            initial_infeasible_lines: infeasible,
            fallbacks: 0,
            rank1_verify_max_rel: None,
        },
    })
}

/// Fast cascade engine: one factorization up front, then per failed line
/// either a rank-1 update (non-cut) or a component split with the matrix
/// left stale (cut). Produces the same trace as [`run_cfe`].
pub fn run_cfe_pb(grid: &Grid, f0: &[usize]) -> Result<CascadeTrace> {
    run_cfe_pb_with_options(grid, f0, &CascadeOptions::default())
}

pub fn run_cfe_pb_with_options(
    grid: &Grid,
    f0: &[usize],
    opts: &CascadeOptions,
) -> Result<CascadeTrace> {
    let f0 = validate_f0(grid, f0)?;
    let mut pinv = PseudoInverse::of_grid(grid)?;
    let infeasible = check_initial_feasibility(grid, &pinv, opts)?;
    let original_powers = grid.powers();

    let mut partition = grid.components(&BTreeSet::new());
    let mut removed: BTreeSet<usize> = BTreeSet::new();
    // Lines whose removal was applied to the matrix; the matrix represents
    // the grid minus exactly this set (cut removals stay stale).
    let mut rank1_removed: BTreeSet<usize> = BTreeSet::new();
    let mut fallbacks = 0u32;
    let mut fallback_since_rank1 = false;

    let mut rounds: Vec<Vec<usize>> = vec![f0.iter().copied().collect()];
    let mut snapshots: Vec<FlowState> = Vec::new();
    let mut shed_log = Vec::new();
    let mut shed_factors = Vec::new();
    let mut round_index = 0usize;

    loop {
        let current: Vec<usize> = order_round(&rounds[round_index], opts.intra_round_order);
        for line_id in current {
            let line = grid.line(line_id).expect("validated line id");
            removed.insert(line_id);
            if is_cut_edge(&pinv, line) {
                let comp = partition
                    .iter()
                    .position(|c| c.binary_search(&line.u).is_ok())
                    .expect("line endpoint in some component");
                match split_subset(&pinv, line, &partition[comp]) {
                    Ok((side_u, side_v)) => {
                        partition.remove(comp);
                        partition.push(side_u);
                        partition.push(side_v.clone());
                        partition.sort_by_key(|c| c[0]);
                        pinv.mark_removed_cut(line, &side_v)?;
                    }
                    Err(err) => {
                        log::warn!("component split failed ({err}); refactorizing");
                        fallbacks += 1;
                        fallback_since_rank1 = true;
                        pinv = PseudoInverse::of_subgraph(grid, &removed)?;
                        rank1_removed = removed.clone();
                        partition = grid.components(&removed);
                    }
                }
            } else {
                match pinv.rank1_remove_in_place(line) {
                    Ok(()) => {
                        rank1_removed.insert(line_id);
                        fallback_since_rank1 = false;
                    }
                    Err(err) => {
                        // Borderline cut expression: the O(1) test and the
                        // update disagree inside the tolerance band.
                        log::warn!("rank-1 update refused line {line_id} ({err}); refactorizing");
                        fallbacks += 1;
                        fallback_since_rank1 = true;
                        pinv = PseudoInverse::of_subgraph(grid, &removed)?;
                        rank1_removed = removed.clone();
                        partition = grid.components(&removed);
                    }
                }
            }
        }

        let (powers, factors) = shed_load_with_factors(&original_powers, &partition);
        let mut state = solve_flows(grid, &pinv, &powers)?;
        if conservation_residual(grid, &state, &powers) > 1e-6 * power_scale(&powers) {
            log::warn!("flow conservation drifted; refactorizing round {round_index}");
            fallbacks += 1;
            fallback_since_rank1 = true;
            pinv = PseudoInverse::of_subgraph(grid, &removed)?;
            rank1_removed = removed.clone();
            partition = grid.components(&removed);
            state = solve_flows(grid, &pinv, &powers)?;
        }

        let next = overloaded_lines(grid, &state, &removed);
        snapshots.push(state);
        shed_log.push(powers);
        shed_factors.push(factors);
        if next.is_empty() {
            break;
        }
        rounds.push(next);
        round_index += 1;
    }

    let rank1_verify_max_rel =
        if opts.verify_rank1 && !fallback_since_rank1 && !rank1_removed.is_empty() {
            let scratch = PseudoInverse::of_subgraph(grid, &rank1_removed)?;
            let scale = scratch.matrix().amax().max(1e-300);
            Some((pinv.matrix() - scratch.matrix()).amax() / scale)
        } else {
            None
        };

    let t = rounds.len() - 1;
    let final_flows = snapshots.last().map(|s| s.to_map()).unwrap_or_default();
    Ok(CascadeTrace {
        rounds,
        flow_snapshots: snapshots,
        shed_log,
        shed_factors,
        t,
        final_flows,
        diagnostics: CascadeDiagnostics {
            initial_infeasible_lines: infeasible,
            fallbacks,
            rank1_verify_max_rel,
        },
    })
}

fn order_round(round: &[usize], order: IntraRoundOrder) -> Vec<usize> {
    let mut out = round.to_vec();
    match order {
        IntraRoundOrder::Ascending => out.sort_unstable(),
        IntraRoundOrder::Descending => {
            out.sort_unstable();
            out.reverse();
        }
        IntraRoundOrder::Shuffled(seed) => {
            out.sort_unstable();
            out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
    }
    out
}

fn power_scale(powers: &[f64]) -> f64 {
    powers.iter().fold(1.0_f64, |acc, p| acc.max(p.abs()))
}

fn conservation_residual(grid: &Grid, state: &FlowState, powers: &[f64]) -> f64 {
    let mut net = powers.to_vec();
    for (line_id, f) in state.flows() {
        let line = grid.line(line_id).unwrap();
        net[line.u] -= f;
        net[line.v] += f;
    }
    net.iter().fold(0.0_f64, |acc, r| acc.max(r.abs()))
}
