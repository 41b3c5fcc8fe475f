//! Synthetic grid topologies (Erdos-Renyi, Watts-Strogatz, Barabasi-Albert),
//! hand-built fixture instances with known cascade behavior, and
//! operating-point assignment (power draws plus factor-of-safety
//! capacities).

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dcflow::solve_flows;
use crate::error::{Error, Result};
use crate::grid::{Bus, Grid, Line};
use crate::spectral::PseudoInverse;

const CONNECTIVITY_ATTEMPTS: u32 = 100;

/// Random-graph family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleModel {
    ErdosRenyi { p: f64 },
    WattsStrogatz { k: usize, p: f64 },
    BarabasiAlbert { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub model: EnsembleModel,
    pub n: usize,
    pub seed: u64,
}

/// Generate a connected topology: zero injections, unit reactance, and
/// unbounded (infinite) capacities until an operating point is assigned.
/// Seeded and deterministic; disconnected draws are retried up to 100 times
/// on the same stream.
pub fn generate(spec: &EnsembleSpec) -> Result<Grid> {
    validate_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..CONNECTIVITY_ATTEMPTS {
        let edges = match spec.model {
            EnsembleModel::ErdosRenyi { p } => erdos_renyi(&mut rng, spec.n, p),
            EnsembleModel::WattsStrogatz { k, p } => watts_strogatz(&mut rng, spec.n, k, p),
            EnsembleModel::BarabasiAlbert { k } => barabasi_albert(&mut rng, spec.n, k),
        };
        let grid = topology_grid(spec.n, &edges);
        if grid.components(&BTreeSet::new()).len() == 1 {
            return Ok(grid);
        }
    }
    Err(Error::DisconnectedEnsemble {
        attempts: CONNECTIVITY_ATTEMPTS,
    })
}

fn validate_spec(spec: &EnsembleSpec) -> Result<()> {
    if spec.n < 2 {
        return Err(Error::validation("ensemble.n", "need at least 2 buses"));
    }
    match spec.model {
        EnsembleModel::ErdosRenyi { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::validation("ensemble.p", "need p in (0, 1]"));
            }
        }
        EnsembleModel::WattsStrogatz { k, p } => {
            if k == 0 || k % 2 != 0 || k >= spec.n {
                return Err(Error::validation(
                    "ensemble.k",
                    "need an even neighbor count 0 < k < n",
                ));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation("ensemble.p", "need rewiring p in [0, 1]"));
            }
        }
        EnsembleModel::BarabasiAlbert { k } => {
            if k == 0 || k + 1 > spec.n {
                return Err(Error::validation("ensemble.k", "need 0 < k and n >= k + 1"));
            }
        }
    }
    Ok(())
}

fn topology_grid(n: usize, edges: &[(usize, usize)]) -> Grid {
    let buses = (0..n).map(|id| Bus { id, power: 0.0 }).collect();
    let lines = edges
        .iter()
        .enumerate()
        .map(|(id, &(u, v))| Line {
            id,
            u: u.min(v),
            v: u.max(v),
            reactance: 1.0,
            capacity: f64::INFINITY,
        })
        .collect();
    Grid::from_parts(buses, lines)
}

fn erdos_renyi(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn watts_strogatz(rng: &mut ChaCha8Rng, n: usize, k: usize, p: f64) -> Vec<(usize, usize)> {
    let mut present: BTreeSet<(usize, usize)> = BTreeSet::new();
    let norm = |u: usize, v: usize| (u.min(v), u.max(v));
    for j in 1..=k / 2 {
        for u in 0..n {
            present.insert(norm(u, (u + j) % n));
        }
    }
    // Rewire the far endpoint of each lattice edge with probability p.
    for j in 1..=k / 2 {
        for u in 0..n {
            if rng.random::<f64>() >= p {
                continue;
            }
            let old = norm(u, (u + j) % n);
            if !present.contains(&old) {
                continue;
            }
            // A node adjacent to everyone has nowhere to rewire.
            if present.iter().filter(|e| e.0 == u || e.1 == u).count() >= n - 1 {
                continue;
            }
            loop {
                let w = rng.random_range(0..n);
                if w == u || present.contains(&norm(u, w)) {
                    continue;
                }
                present.remove(&old);
                present.insert(norm(u, w));
                break;
            }
        }
    }
    present.into_iter().collect()
}

fn barabasi_albert(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<(usize, usize)> {
    // Seed with a complete graph on k + 1 nodes, then attach each new node
    // with k edges chosen preferentially by degree.
    let mut edges = Vec::new();
    let mut endpoint_pool = Vec::new();
    for u in 0..=k {
        for v in (u + 1)..=k {
            edges.push((u, v));
            endpoint_pool.push(u);
            endpoint_pool.push(v);
        }
    }
    for v in (k + 1)..n {
        let mut targets = BTreeSet::new();
        while targets.len() < k {
            targets.insert(endpoint_pool[rng.random_range(0..endpoint_pool.len())]);
        }
        for &t in &targets {
            edges.push((t, v));
            endpoint_pool.push(t);
            endpoint_pool.push(v);
        }
    }
    edges
}

/// Named fixture instances with parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fixture {
    /// Two buses joined by a parallel pair with reactances `x1 < x2`; the
    /// stiffer line carries the larger share and failing it multiplies the
    /// other line's flow by exactly `x2 / x1`.
    Obs51 { x1: f64, x2: f64 },
    /// Four-bus instance with a parallel pair where one initial outage
    /// collapses the grid to yield 0 while a strictly larger initial outage
    /// set is completely harmless.
    Obs61,
    /// `m` parallel lines whose capacities are staggered so a single outage
    /// fails them one per round: the cascade lasts `|E| - 1` rounds and
    /// serves nothing.
    Obs62 { m: usize, eps: f64 },
    /// `l` long parallel paths plus a shortcut; consecutive failures land at
    /// least `d` hops apart for at least `l` rounds.
    Obs63 {
        l: usize,
        d: usize,
        eps: f64,
        mu: f64,
    },
    /// Parallel-line instance where the first outage is harmless...
    Obs64Base { m: usize, eps: f64 },
    /// ...but shaving `eps` off one capacity collapses everything...
    Obs64CMinus { m: usize, eps: f64 },
    /// ...as does shaving `mu` off one reactance.
    Obs64XMinus { m: usize, eps: f64, mu: f64 },
}

impl Fixture {
    /// Stable name used by instance files and the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Fixture::Obs51 { .. } => "obs51",
            Fixture::Obs61 => "obs61",
            Fixture::Obs62 { .. } => "obs62",
            Fixture::Obs63 { .. } => "obs63",
            Fixture::Obs64Base { .. } => "obs64_base",
            Fixture::Obs64CMinus { .. } => "obs64_c_minus",
            Fixture::Obs64XMinus { .. } => "obs64_x_minus",
        }
    }
}

/// Build a fixture instance, rejecting parameters outside their admissible
/// ranges.
pub fn fixture(f: &Fixture) -> Result<Grid> {
    match *f {
        Fixture::Obs51 { x1, x2 } => obs51(x1, x2),
        Fixture::Obs61 => Ok(obs61()),
        Fixture::Obs62 { m, eps } => obs62(m, eps),
        Fixture::Obs63 { l, d, eps, mu } => obs63(l, d, eps, mu),
        Fixture::Obs64Base { m, eps } => obs64(m, eps, Obs64Variant::Base),
        Fixture::Obs64CMinus { m, eps } => obs64(m, eps, Obs64Variant::CapacityMinus),
        Fixture::Obs64XMinus { m, eps, mu } => {
            if !(mu > 0.0 && mu <= 1.0 / (m as f64 - 1.0)) {
                return Err(Error::ParamRange {
                    param: "mu",
                    message: format!("need 0 < mu <= 1/(m-1) = {}", 1.0 / (m as f64 - 1.0)),
                });
            }
            obs64(m, eps, Obs64Variant::ReactanceMinus { mu })
        }
    }
}

fn obs51(x1: f64, x2: f64) -> Result<Grid> {
    if !(x1 > 0.0 && x2 > x1) {
        return Err(Error::ParamRange {
            param: "x1,x2",
            message: "need 0 < x1 < x2".into(),
        });
    }
    let buses = vec![Bus { id: 0, power: 1.0 }, Bus { id: 1, power: -1.0 }];
    let line = |id, x| Line {
        id,
        u: 0,
        v: 1,
        reactance: x,
        capacity: 1.0,
    };
    Ok(Grid::from_parts(buses, vec![line(0, x1), line(1, x2)]))
}

fn obs61() -> Grid {
    let powers = [27.0, 5.0, 0.0, -32.0];
    let buses = powers
        .iter()
        .enumerate()
        .map(|(id, &power)| Bus { id, power })
        .collect();
    let mk = |id, u, v, reactance, capacity| Line {
        id,
        u,
        v,
        reactance,
        capacity,
    };
    let lines = vec![
        mk(0, 0, 1, 1.0, 20.0),
        mk(1, 0, 3, 1.0, 30.0),
        mk(2, 0, 3, 10.0, 30.0),
        mk(3, 1, 2, 1.0, 20.0),
        mk(4, 2, 3, 1.0, 20.0),
    ];
    Grid::from_parts(buses, lines)
}

fn check_obs6x_params(m: usize, eps: f64) -> Result<()> {
    if m < 2 {
        return Err(Error::ParamRange {
            param: "m",
            message: "need m >= 2".into(),
        });
    }
    let bound = 1.0 / (m as f64 - 1.0);
    if !(eps > 0.0 && eps <= bound) {
        return Err(Error::ParamRange {
            param: "eps",
            message: format!("need 0 < eps <= 1/(m-1) = {bound}"),
        });
    }
    Ok(())
}

fn parallel_bank(m: usize, capacities: Vec<f64>, reactances: Vec<f64>) -> Grid {
    let buses = vec![
        Bus {
            id: 0,
            power: m as f64,
        },
        Bus {
            id: 1,
            power: -(m as f64),
        },
    ];
    let lines = capacities
        .into_iter()
        .zip(reactances)
        .enumerate()
        .map(|(id, (capacity, reactance))| Line {
            id,
            u: 0,
            v: 1,
            reactance,
            capacity,
        })
        .collect();
    Grid::from_parts(buses, lines)
}

fn obs62(m: usize, eps: f64) -> Result<Grid> {
    check_obs6x_params(m, eps)?;
    let mf = m as f64;
    let capacities = (0..m)
        .map(|i| {
            if i == 0 {
                1.0
            } else {
                mf / (mf - i as f64) - eps
            }
        })
        .collect();
    Ok(parallel_bank(m, capacities, vec![1.0; m]))
}

enum Obs64Variant {
    Base,
    CapacityMinus,
    ReactanceMinus { mu: f64 },
}

fn obs64(m: usize, eps: f64, variant: Obs64Variant) -> Result<Grid> {
    check_obs6x_params(m, eps)?;
    let mf = m as f64;
    let mut capacities: Vec<f64> = (0..m)
        .map(|i| match i {
            0 => 1.0,
            1 => mf / (mf - 1.0),
            _ => mf / (mf - i as f64) - eps,
        })
        .collect();
    let mut reactances = vec![1.0; m];
    match variant {
        Obs64Variant::Base => {}
        Obs64Variant::CapacityMinus => capacities[1] -= eps,
        Obs64Variant::ReactanceMinus { mu } => reactances[1] = 1.0 - mu,
    }
    Ok(parallel_bank(m, capacities, reactances))
}

fn obs63(l: usize, d: usize, eps: f64, mu: f64) -> Result<Grid> {
    if l < 2 {
        return Err(Error::ParamRange {
            param: "l",
            message: "need l >= 2".into(),
        });
    }
    if d < 1 {
        return Err(Error::ParamRange {
            param: "d",
            message: "need d >= 1".into(),
        });
    }
    let eps_bound = 1.0 / (l as f64 - 1.0);
    if !(eps > 0.0 && eps < eps_bound) {
        return Err(Error::ParamRange {
            param: "eps",
            message: format!("need 0 < eps < 1/(l-1) = {eps_bound}"),
        });
    }
    let mu_bound = (d as f64 - eps * d as f64) / (eps * l as f64);
    if !(mu > 0.0 && mu < mu_bound) {
        return Err(Error::ParamRange {
            param: "mu",
            message: format!("need 0 < mu < (d - eps d)/(eps l) = {mu_bound}"),
        });
    }

    // One source, one sink, l disjoint paths of 2d + 1 lines each, plus a
    // direct low-reactance shortcut. The capacity-limited line of path i sits
    // exactly d hops from either end, so consecutive failures are d (first
    // round) or 2d (later rounds) hops apart.
    let per_path = 2 * d;
    let n = 2 + l * per_path;
    let s = 0;
    let t = n - 1;
    let lf = l as f64;

    let mut buses: Vec<Bus> = (0..n).map(|id| Bus { id, power: 0.0 }).collect();
    buses[s].power = lf;
    buses[t].power = -lf;

    let mut lines = Vec::new();
    let push = |u: usize, v: usize, reactance: f64, capacity: f64, lines: &mut Vec<Line>| {
        let id = lines.len();
        lines.push(Line {
            id,
            u: u.min(v),
            v: u.max(v),
            reactance,
            capacity,
        });
    };
    push(s, t, mu, lf, &mut lines);
    for i in 0..l {
        let base = 1 + i * per_path;
        let node = |j: usize| base + (j - 1); // u^i_j for j = 1..=2d
        let weak = lf / (lf - i as f64) - eps;
        push(s, node(1), 1.0, lf, &mut lines);
        for j in 1..per_path {
            let capacity = if j == d { weak } else { lf };
            push(node(j), node(j + 1), 1.0, capacity, &mut lines);
        }
        push(node(per_path), t, 1.0, lf, &mut lines);
    }
    Ok(Grid::from_parts(buses, lines))
}

/// The capacity-limited line of ladder path `i` in the `obs63` fixture.
pub fn obs63_weak_line(l: usize, d: usize, path: usize) -> usize {
    debug_assert!(path < l);
    1 + path * (2 * d + 1) + d
}

/// How injections are drawn by [`assign_operating_point`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerDist {
    /// Independent standard normal draws on every bus; the highest-id bus is
    /// the slack and absorbs minus the sum of the others.
    Normal,
    /// `n_sd` supply buses at +1 and `n_sd` demand buses at -1, chosen
    /// uniformly without replacement; everyone else neutral.
    PlusMinusOne,
}

/// Draw injections, solve the resulting flows, and set every capacity to
/// `fos` times the line's initial |flow|. Lines with (numerically) zero flow
/// get `fos` times the mean |flow| instead so they are not stillborn.
pub fn assign_operating_point(
    grid: &Grid,
    n_sd: usize,
    dist: PowerDist,
    fos: f64,
    seed: u64,
) -> Result<Grid> {
    let n = grid.num_buses();
    if grid.components(&BTreeSet::new()).len() != 1 {
        return Err(Error::validation(
            "grid",
            "operating-point assignment needs a connected grid",
        ));
    }
    if fos <= 0.0 || fos.is_nan() {
        return Err(Error::validation("fos", "need fos > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let powers = match dist {
        PowerDist::Normal => {
            let mut p: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let rest: f64 = p[..n - 1].iter().sum();
            p[n - 1] = -rest;
            p
        }
        PowerDist::PlusMinusOne => {
            if n_sd == 0 || 2 * n_sd > n {
                return Err(Error::validation(
                    "n_sd",
                    format!("need 1 <= n_sd <= |V|/2 = {}", n / 2),
                ));
            }
            let chosen = rand::seq::index::sample(&mut rng, n, 2 * n_sd);
            let mut p = vec![0.0; n];
            for (k, bus) in chosen.into_iter().enumerate() {
                p[bus] = if k < n_sd { 1.0 } else { -1.0 };
            }
            p
        }
    };

    let pinv = PseudoInverse::of_grid(grid)?;
    let state = solve_flows(grid, &pinv, &powers)?;
    let mean_abs = state.mean_abs_flow();
    let zero_tol = 1e-12 * mean_abs.max(1.0);
    let capacities: Vec<f64> = grid
        .lines()
        .iter()
        .map(|line| {
            let f = state.flow(line.id).unwrap_or(0.0).abs();
            if f <= zero_tol {
                fos * mean_abs
            } else {
                fos * f
            }
        })
        .collect();
    Ok(grid.clone().with_operating_point(&powers, &capacities))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
