//! Grid model: buses with injections, transmission lines with reactance and
//! capacity, multigraph adjacency, the admittance matrix, connected
//! components, and proportional load shedding.
//!
//! Buses and lines carry dense integer ids. Parallel lines between the same
//! bus pair are allowed and keep distinct ids; the admittance matrix
//! aggregates their admittances per bus pair while flows and capacities stay
//! per line.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on per-component power sums at validation time.
pub const BALANCE_TOL: f64 = 1e-9;

/// Relative tolerance for the post-shedding component sums.
pub const SHED_TOL: f64 = 1e-12;

/// A bus with its active power injection (positive supply, negative demand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub power: f64,
}

/// A transmission line between two distinct buses.
///
/// Endpoints are stored with `u < v`; signed flows are oriented from `u`
/// to `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub reactance: f64,
    pub capacity: f64,
}

impl Line {
    /// Admittance contribution of this single line, `-1/x`.
    pub fn admittance(&self) -> f64 {
        -1.0 / self.reactance
    }

    /// The endpoint that is not `bus`.
    pub fn other(&self, bus: usize) -> usize {
        if bus == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Instance description as read from or written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Line record in an instance file; endpoints in either order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSpec {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub reactance: f64,
    pub capacity: f64,
}

/// What to do when a component's injections do not sum to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalancePolicy {
    /// Reject the instance with [`Error::Imbalance`].
    #[default]
    Reject,
    /// Proportionally shed the surplus side so every component balances.
    Shed,
}

/// Validated grid: multigraph plus per-bus injections.
#[derive(Debug, Clone)]
pub struct Grid {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    /// Per bus: (line id, neighbor bus) pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Dense admittance matrix of a grid (a weighted Laplacian): off-diagonal
/// entries are the negated summed admittances per bus pair, diagonals make
/// every row sum to zero. Symmetric positive semidefinite; its null-space
/// dimension equals the number of connected components.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    matrix: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Build a validated [`Grid`] from an instance description.
///
/// Rejects self-loops, nonpositive reactances/capacities, dangling
/// endpoints, and non-dense ids. Component imbalance is rejected or
/// shed away depending on `policy`.
pub fn build_grid(spec: &InstanceSpec, policy: BalancePolicy) -> Result<Grid> {
    let n = spec.buses.len();
    let mut powers = vec![f64::NAN; n];
    for bus in &spec.buses {
        if bus.id >= n {
            return Err(Error::validation(
                "bus.id",
                format!("bus id {} outside dense range 0..{}", bus.id, n),
            ));
        }
        if !powers[bus.id].is_nan() {
            return Err(Error::validation(
                "bus.id",
                format!("duplicate bus id {}", bus.id),
            ));
        }
        if !bus.power.is_finite() {
            return Err(Error::validation(
                "bus.power",
                format!("bus {} has non-finite power", bus.id),
            ));
        }
        powers[bus.id] = bus.power;
    }

    let m = spec.lines.len();
    let mut lines: Vec<Option<Line>> = vec![None; m];
    for line in &spec.lines {
        if line.id >= m {
            return Err(Error::validation(
                "line.id",
                format!("line id {} outside dense range 0..{}", line.id, m),
            ));
        }
        if lines[line.id].is_some() {
            return Err(Error::validation(
                "line.id",
                format!("duplicate line id {}", line.id),
            ));
        }
        if line.u == line.v {
            return Err(Error::validation(
                "line.endpoints",
                format!("line {} is a self-loop on bus {}", line.id, line.u),
            ));
        }
        if line.u >= n || line.v >= n {
            return Err(Error::validation(
                "line.endpoints",
                format!("line {} references a missing bus", line.id),
            ));
        }
        if line.reactance <= 0.0 || !line.reactance.is_finite() {
            return Err(Error::validation(
                "line.reactance",
                format!(
                    "line {} needs reactance > 0, got {}",
                    line.id, line.reactance
                ),
            ));
        }
        if line.capacity <= 0.0 || line.capacity.is_nan() {
            return Err(Error::validation(
                "line.capacity",
                format!("line {} needs capacity > 0, got {}", line.id, line.capacity),
            ));
        }
        let (u, v) = if line.u < line.v {
            (line.u, line.v)
        } else {
            (line.v, line.u)
        };
        lines[line.id] = Some(Line {
            id: line.id,
            u,
            v,
            reactance: line.reactance,
            capacity: line.capacity,
        });
    }
    let lines: Vec<Line> = lines.into_iter().map(|l| l.unwrap()).collect();

    let mut grid = Grid::assemble(
        spec.buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                power: b.power,
            })
            .collect(),
        lines,
    );
    grid.buses.sort_by_key(|b| b.id);

    let partition = grid.components(&BTreeSet::new());
    for comp in &partition {
        let sum: f64 = comp.iter().map(|&b| grid.buses[b].power).sum();
        if sum.abs() > BALANCE_TOL {
            match policy {
                BalancePolicy::Reject => {
                    return Err(Error::Imbalance {
                        bus: comp[0],
                        imbalance: sum,
                    })
                }
                BalancePolicy::Shed => {
                    let shedded = shed_load(&grid.powers(), &partition);
                    grid.set_powers(&shedded);
                    break;
                }
            }
        }
    }
    Ok(grid)
}

impl Grid {
    fn assemble(buses: Vec<Bus>, lines: Vec<Line>) -> Grid {
        let mut adjacency = vec![Vec::new(); buses.len()];
        for line in &lines {
            adjacency[line.u].push((line.id, line.v));
            adjacency[line.v].push((line.id, line.u));
        }
        Grid {
            buses,
            lines,
            adjacency,
        }
    }

    /// Construct directly from validated parts; used by generators.
    pub(crate) fn from_parts(buses: Vec<Bus>, lines: Vec<Line>) -> Grid {
        Grid::assemble(buses, lines)
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, id: usize) -> Option<&Line> {
        self.lines.get(id)
    }

    pub fn adjacency(&self, bus: usize) -> &[(usize, usize)] {
        &self.adjacency[bus]
    }

    /// Per-bus injections in id order.
    pub fn powers(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.power).collect()
    }

    pub(crate) fn set_powers(&mut self, powers: &[f64]) {
        for (bus, &p) in self.buses.iter_mut().zip(powers) {
            bus.power = p;
        }
    }

    /// Replace injections and capacities; used by operating-point assignment.
    pub(crate) fn with_operating_point(mut self, powers: &[f64], capacities: &[f64]) -> Grid {
        self.set_powers(powers);
        for (line, &c) in self.lines.iter_mut().zip(capacities) {
            line.capacity = c;
        }
        self
    }

    /// Admittance matrix of the full grid.
    pub fn admittance_matrix(&self) -> AdmittanceMatrix {
        self.admittance_of_subgraph(&BTreeSet::new())
    }

    /// Admittance matrix with the given lines removed.
    pub fn admittance_of_subgraph(&self, removed: &BTreeSet<usize>) -> AdmittanceMatrix {
        let n = self.buses.len();
        let mut m = DMatrix::zeros(n, n);
        for line in &self.lines {
            if removed.contains(&line.id) {
                continue;
            }
            let w = 1.0 / line.reactance;
            m[(line.u, line.v)] -= w;
            m[(line.v, line.u)] -= w;
            m[(line.u, line.u)] += w;
            m[(line.v, line.v)] += w;
        }
        AdmittanceMatrix { matrix: m }
    }

    /// Connected components of the grid after deleting `removed` lines.
    ///
    /// Deterministic: components ordered by their smallest bus id and each
    /// component's bus list sorted ascending.
    pub fn components(&self, removed: &BTreeSet<usize>) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &(line_id, w) in &self.adjacency[u] {
                    if !seen[w] && !removed.contains(&line_id) {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Cut lines (bridges) of the grid after deleting `removed` lines,
    /// found by lowlink depth-first search. Skips the incoming *line id*
    /// rather than the parent bus, so parallel lines shield each other.
    pub fn bridges(&self, removed: &BTreeSet<usize>) -> BTreeSet<usize> {
        let n = self.buses.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut bridges = BTreeSet::new();
        let mut counter = 0usize;
        // Iterative DFS: (bus, incoming line id, adjacency cursor).
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push((root, usize::MAX, 0));
            while let Some(&mut (u, in_line, ref mut cursor)) = stack.last_mut() {
                if *cursor < self.adjacency[u].len() {
                    let (line_id, w) = self.adjacency[u][*cursor];
                    *cursor += 1;
                    if removed.contains(&line_id) || line_id == in_line {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push((w, line_id, 0));
                    } else {
                        low[u] = low[u].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&mut (parent, _, _)) = stack.last_mut() {
                        low[parent] = low[parent].min(low[u]);
                        if low[u] > disc[parent] {
                            bridges.insert(in_line);
                        }
                    }
                }
            }
        }
        bridges
    }

    /// Serialize back to an instance description.
    pub fn to_spec(&self) -> InstanceSpec {
        InstanceSpec {
            buses: self.buses.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| LineSpec {
                    id: l.id,
                    u: l.u,
                    v: l.v,
                    reactance: l.reactance,
                    capacity: l.capacity,
                })
                .collect(),
            meta: None,
        }
    }
}

/// Proportional load shedding.
///
/// Within each component, the surplus side is scaled down so supply equals
/// demand: if demand exceeds supply every demand is multiplied by
/// supply/demand, otherwise every supply is multiplied by demand/supply.
/// Components with zero supply or zero demand are zeroed entirely. Already
/// balanced components (within [`SHED_TOL`] relative) pass through
/// unchanged, which makes the operation idempotent.
pub fn shed_load(powers: &[f64], partition: &[Vec<usize>]) -> Vec<f64> {
    shed_load_with_factors(powers, partition).0
}

/// Per-component scaling applied by [`shed_load`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShedFactor {
    pub supply_scale: f64,
    pub demand_scale: f64,
}

/// Shedding plus the supply/demand scale factors per component, in partition
/// order.
pub fn shed_load_with_factors(
    powers: &[f64],
    partition: &[Vec<usize>],
) -> (Vec<f64>, Vec<ShedFactor>) {
    let mut out = powers.to_vec();
    let mut factors = Vec::with_capacity(partition.len());
    for comp in partition {
        let supply: f64 = comp.iter().map(|&b| powers[b].max(0.0)).sum();
        let demand: f64 = comp.iter().map(|&b| (-powers[b]).max(0.0)).sum();
        let factor = if supply == 0.0 || demand == 0.0 {
            for &b in comp {
                out[b] = 0.0;
            }
            ShedFactor {
                supply_scale: 0.0,
                demand_scale: 0.0,
            }
        } else if (supply - demand).abs() <= SHED_TOL * supply.max(demand) {
            ShedFactor {
                supply_scale: 1.0,
                demand_scale: 1.0,
            }
        } else if demand > supply {
            let scale = supply / demand;
            for &b in comp {
                if out[b] < 0.0 {
                    out[b] *= scale;
                }
            }
            ShedFactor {
                supply_scale: 1.0,
                demand_scale: scale,
            }
        } else {
            let scale = demand / supply;
            for &b in comp {
                if out[b] > 0.0 {
                    out[b] *= scale;
                }
            }
            ShedFactor {
                supply_scale: scale,
                demand_scale: 1.0,
            }
        };
        factors.push(factor);
    }
    (out, factors)
}

/// Read an instance file (JSON) and build the grid.
pub fn read_instance(path: impl AsRef<Path>, policy: BalancePolicy) -> Result<Grid> {
    let text = std::fs::read_to_string(path)?;
    let spec: InstanceSpec = serde_json::from_str(&text)?;
    build_grid(&spec, policy)
}

/// Write a grid as an instance file (JSON, pretty-printed). Grids with
/// unbounded sentinel capacities cannot be written; assign an operating
/// point first.
pub fn write_instance(
    grid: &Grid,
    path: impl AsRef<Path>,
    meta: Option<serde_json::Value>,
) -> Result<()> {
    for line in grid.lines() {
        if !line.capacity.is_finite() {
            return Err(Error::validation(
                "line.capacity",
                format!("line {} has a non-finite capacity", line.id),
            ));
        }
    }
    let mut spec = grid.to_spec();
    spec.meta = meta;
    let text = serde_json::to_string_pretty(&spec)?;
    std::fs::write(path, text)?;
    Ok(())
}
