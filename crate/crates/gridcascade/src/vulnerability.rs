//! Selection of damaging initial failure sets: a resistance-distance-based
//! heuristic, a random baseline, and an exhaustive minimum-yield search for
//! small instances.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{run_cfe_pb, CascadeTrace};
use crate::dcflow::solve_flows;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metrics::yield_of;
use crate::spectral::{line_resistance, PseudoInverse};

/// Default cap on the number of subsets the exhaustive search may visit.
pub const DEFAULT_SUBSET_CAP: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    MvesRb,
    Random,
    BruteForce,
}

/// A chosen initial failure set together with the cascade it causes.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub method: AttackMethod,
    pub chosen: Vec<usize>,
    pub trace: CascadeTrace,
    pub yield_fraction: f64,
}

/// Rank lines by initial |flow| times the resistance distance across their
/// endpoints, descending (ties by ascending line id), and return the top k.
/// High scores mark lines whose loss moves the most flow the furthest.
pub fn mves_rb(grid: &Grid, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > grid.num_lines() {
        return Err(Error::validation(
            "k",
            format!("need 1 <= k <= |E| = {}", grid.num_lines()),
        ));
    }
    let pinv = PseudoInverse::of_grid(grid)?;
    let state = solve_flows(grid, &pinv, &grid.powers())?;
    let mut scored: Vec<(f64, usize)> = grid
        .lines()
        .iter()
        .map(|line| {
            let f = state.flow(line.id).unwrap_or(0.0).abs();
            (f * line_resistance(&pinv, line), line.id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
}

/// Uniform k-subset of the lines, deterministic in the seed.
pub fn random_attack(grid: &Grid, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > grid.num_lines() {
        return Err(Error::validation(
            "k",
            format!("need 1 <= k <= |E| = {}", grid.num_lines()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, grid.num_lines(), k).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Run the cascade for an initial failure set and score its yield.
pub fn evaluate_attack(grid: &Grid, f0: &[usize], method: AttackMethod) -> Result<AttackResult> {
    let trace = run_cfe_pb(grid, f0)?;
    let yield_fraction = yield_of(grid, &trace);
    let mut chosen: Vec<usize> = BTreeSet::from_iter(f0.iter().copied())
        .into_iter()
        .collect();
    chosen.sort_unstable();
    Ok(AttackResult {
        method,
        chosen,
        trace,
        yield_fraction,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    let mut result: u128 = 1;
    for i in 0..k.min(n.saturating_sub(k)) {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    if k > n {
        0
    } else {
        result
    }
}

/// Number of candidate subsets the exhaustive search would visit.
pub fn brute_force_subset_count(num_lines: usize, k: usize) -> u128 {
    (1..=k.min(num_lines))
        .map(|s| binomial(num_lines as u128, s as u128))
        .fold(0u128, u128::saturating_add)
}

/// Exhaustive minimum-yield search over every failure set of size 1..=k.
///
/// Sizes strictly below k are included because a smaller set can strictly
/// out-damage its supersets. Ties resolve to the lexicographically smallest
/// id set, independent of evaluation order. Refuses to enumerate more than
/// `cap` subsets (default [`DEFAULT_SUBSET_CAP`]).
pub fn brute_force_min_yield(grid: &Grid, k: usize, cap: Option<u128>) -> Result<AttackResult> {
    if k == 0 || k > grid.num_lines() {
        return Err(Error::validation(
            "k",
            format!("need 1 <= k <= |E| = {}", grid.num_lines()),
        ));
    }
    let cap = cap.unwrap_or(DEFAULT_SUBSET_CAP);
    let subsets = brute_force_subset_count(grid.num_lines(), k);
    if subsets > cap {
        return Err(Error::TooLarge { subsets, cap });
    }

    let candidates: Vec<Vec<usize>> = (1..=k)
        .flat_map(|s| (0..grid.num_lines()).combinations(s))
        .collect();
    let best: (f64, Vec<usize>) = candidates
        .into_par_iter()
        .map(|f0| -> Result<(f64, Vec<usize>)> {
            let trace = run_cfe_pb(grid, &f0)?;
            let y = yield_of(grid, &trace);
            Ok((y, f0))
        })
        .reduce(
            || Ok((f64::INFINITY, Vec::new())),
            |a, b| match (a, b) {
                (Err(e), _) | (_, Err(e)) => Err(e),
                (Ok(a), Ok(b)) => Ok(min_by_yield_then_lex(a, b)),
            },
        )?;

    evaluate_attack(grid, &best.1, AttackMethod::BruteForce)
}

fn min_by_yield_then_lex(a: (f64, Vec<usize>), b: (f64, Vec<usize>)) -> (f64, Vec<usize>) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}
