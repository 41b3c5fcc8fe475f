//! DC power-flow solves and the effect of a single line failure on every
//! other line's flow.
//!
//! Phase angles come from the pseudo-inverse, `theta = A+ P`; per-line
//! signed flows follow from `f = (theta_u - theta_v) / x`, oriented from the
//! lower-id endpoint to the higher-id endpoint. Flow magnitudes are what
//! capacities bound.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{Grid, Line};
use crate::spectral::{
    cut_expression, cut_tolerance, edge_resistance_distance, line_resistance, PseudoInverse,
};

/// Fraction of the mean |flow| below which the edge flow change ratio is
/// reported as undefined rather than blown up by a near-zero denominator.
pub const LOW_FLOW_FRACTION: f64 = 0.01;

/// One solved network state: per-bus angles and per-line signed flows.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// Per-bus phase angles; the offset per component is arbitrary. Empty
    /// for states reconstructed from serialized traces.
    pub angles: Vec<f64>,
    flows: Vec<Option<f64>>,
    /// Graph version of the pseudo-inverse this state was solved against.
    pub version: u64,
}

impl FlowState {
    /// Signed flow on a line, `None` if the line is removed in this state.
    pub fn flow(&self, line_id: usize) -> Option<f64> {
        self.flows.get(line_id).copied().flatten()
    }

    /// All surviving lines with their signed flows.
    pub fn flows(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.flows
            .iter()
            .enumerate()
            .filter_map(|(id, f)| f.map(|f| (id, f)))
    }

    pub fn to_map(&self) -> BTreeMap<usize, f64> {
        self.flows().collect()
    }

    pub fn mean_abs_flow(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (_, f) in self.flows() {
            sum += f.abs();
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub(crate) fn from_parts(angles: Vec<f64>, flows: Vec<Option<f64>>, version: u64) -> Self {
        FlowState {
            angles,
            flows,
            version,
        }
    }

    /// Rebuild a state from a serialized per-line flow map (no angles).
    pub fn from_flow_map(map: &BTreeMap<usize, f64>, num_lines: usize, version: u64) -> Self {
        let mut flows = vec![None; num_lines];
        for (&id, &f) in map {
            if id < num_lines {
                flows[id] = Some(f);
            }
        }
        FlowState {
            angles: Vec::new(),
            flows,
            version,
        }
    }
}

/// Solve the flow equations for balanced injections.
///
/// Balance is checked per connected component of the grid with the
/// pseudo-inverse's removed lines deleted; imbalance beyond a 1e-9 relative
/// tolerance is an error (shed first).
pub fn solve_flows(grid: &Grid, p: &PseudoInverse, powers: &[f64]) -> Result<FlowState> {
    let n = grid.num_buses();
    if powers.len() != n {
        return Err(Error::validation(
            "powers",
            format!("expected {n} entries, got {}", powers.len()),
        ));
    }
    for comp in grid.components(p.removed()) {
        let sum: f64 = comp.iter().map(|&b| powers[b]).sum();
        let scale: f64 = comp.iter().map(|&b| powers[b].abs()).sum::<f64>().max(1.0);
        if sum.abs() > 1e-9 * scale {
            return Err(Error::Imbalance {
                bus: comp[0],
                imbalance: sum,
            });
        }
    }
    let theta = p.matrix() * DVector::from_column_slice(powers);
    let flows = flows_from_angles(grid, theta.as_slice(), p);
    Ok(FlowState::from_parts(
        theta.as_slice().to_vec(),
        flows,
        p.graph_version(),
    ))
}

fn flows_from_angles(grid: &Grid, theta: &[f64], p: &PseudoInverse) -> Vec<Option<f64>> {
    grid.lines()
        .iter()
        .map(|line| {
            if p.is_removed(line.id) {
                None
            } else {
                Some((theta[line.u] - theta[line.v]) / line.reactance)
            }
        })
        .collect()
}

/// Signed flow changes on every surviving line after removing `failed`,
/// from the rank-1 form of the pseudo-inverse update. The failed line must
/// not be a cut line. Agrees with re-solving from scratch.
pub fn flow_change_single_failure(
    grid: &Grid,
    p: &PseudoInverse,
    state: &FlowState,
    failed: &Line,
) -> Result<BTreeMap<usize, f64>> {
    if p.is_removed(failed.id) {
        return Err(Error::StaleVersion {
            line: failed.id,
            version: p.graph_version(),
        });
    }
    let denom = cut_expression(p, failed);
    if denom.abs() <= cut_tolerance(failed) {
        return Err(Error::CutEdge {
            line: failed.id,
            message: "flow-change form needs a non-cut line".into(),
        });
    }
    let f_failed = state.flow(failed.id).ok_or(Error::StaleVersion {
        line: failed.id,
        version: state.version,
    })?;
    let (fp, fq) = (failed.u, failed.v);
    let mut deltas = BTreeMap::new();
    for line in grid.lines() {
        if line.id == failed.id || p.is_removed(line.id) {
            continue;
        }
        let k =
            p.entry(line.u, fp) - p.entry(line.u, fq) - p.entry(line.v, fp) + p.entry(line.v, fq);
        // a_rs / a_pq = x_failed / x_target for per-line admittances.
        let delta = -(failed.reactance / line.reactance) * (k / denom) * f_failed;
        deltas.insert(line.id, delta);
    }
    Ok(deltas)
}

/// Flow change ratios after a single failure. `s` is |delta f / f| on the
/// surviving line (undefined when its pre-failure flow is below
/// [`LOW_FLOW_FRACTION`] of the mean |flow|); `m` is |delta f / f_failed|
/// (undefined when the failed line carried no flow).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeRatios {
    pub s: Option<f64>,
    pub m: Option<f64>,
}

pub fn change_ratios(
    state: &FlowState,
    deltas: &BTreeMap<usize, f64>,
    failed: &Line,
) -> BTreeMap<usize, ChangeRatios> {
    let threshold = LOW_FLOW_FRACTION * state.mean_abs_flow();
    let f_failed = state.flow(failed.id).unwrap_or(0.0);
    deltas
        .iter()
        .map(|(&id, &delta)| {
            let f = state.flow(id).unwrap_or(0.0);
            let s = if f.abs() < threshold {
                None
            } else {
                Some((delta / f).abs())
            };
            let m = if f_failed == 0.0 {
                None
            } else {
                Some((delta / f_failed).abs())
            };
            (id, ChangeRatios { s, m })
        })
        .collect()
}

/// Upper bounds on the mutual flow change ratio after a failure, derived for
/// unit reactance: a global bound `r(p,q) / (1 - r(p,q))` over all lines and
/// a per-target bound `r(e,e') / (1 - r(p,q))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowChangeBounds {
    pub global: f64,
    pub pairwise: f64,
}

pub fn flow_change_bounds(
    grid: &Grid,
    p: &PseudoInverse,
    failed: &Line,
    target: &Line,
) -> Result<FlowChangeBounds> {
    for line in grid.lines() {
        if line.reactance != 1.0 {
            return Err(Error::NonUnitReactance {
                line: line.id,
                reactance: line.reactance,
            });
        }
    }
    let r_fail = line_resistance(p, failed);
    if (1.0 - r_fail).abs() <= cut_tolerance(failed) {
        return Err(Error::CutEdge {
            line: failed.id,
            message: "bounds diverge on a cut line".into(),
        });
    }
    let r_pair = edge_resistance_distance(p, target, failed);
    Ok(FlowChangeBounds {
        global: r_fail / (1.0 - r_fail),
        pairwise: r_pair / (1.0 - r_fail),
    })
}

/// The mutual-change coefficient `|delta f_e| / |f_failed|` straight from
/// resistance distances. Defined for any injections; equals the measured
/// ratio whenever the failed line carries flow.
pub fn mutual_change_coefficient(p: &PseudoInverse, failed: &Line, target: &Line) -> Result<f64> {
    let r_fail = line_resistance(p, failed);
    if (failed.reactance - r_fail).abs() <= cut_tolerance(failed) {
        return Err(Error::CutEdge {
            line: failed.id,
            message: "coefficient diverges on a cut line".into(),
        });
    }
    let (i, j) = (target.u, target.v);
    let (fp, fq) = (failed.u, failed.v);
    let combo = -resistance_distance_raw(p, i, fp)
        + resistance_distance_raw(p, i, fq)
        + resistance_distance_raw(p, j, fp)
        - resistance_distance_raw(p, j, fq);
    Ok((0.5 * combo / (failed.reactance - r_fail)).abs() * (failed.reactance / target.reactance))
}

fn resistance_distance_raw(p: &PseudoInverse, i: usize, j: usize) -> f64 {
    p.entry(i, i) + p.entry(j, j) - 2.0 * p.entry(i, j)
}
