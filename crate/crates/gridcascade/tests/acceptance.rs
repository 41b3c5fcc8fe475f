//! Acceptance suite: one test per acceptance criterion. Each test prints a
//! single `[criterion NN] ... PASS/FAIL` line (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gridcascade::cascade::{
    run_cfe, run_cfe_pb, run_cfe_pb_with_options, CascadeOptions, CascadeTrace,
};
use gridcascade::dcflow::{
    change_ratios, flow_change_bounds, flow_change_single_failure, solve_flows,
};
use gridcascade::generators::{
    assign_operating_point, fixture, generate, EnsembleModel, EnsembleSpec, Fixture, PowerDist,
};
use gridcascade::grid::{build_grid, BalancePolicy, Bus, Grid, InstanceSpec, LineSpec};
use gridcascade::metrics::{cascade_metrics, yield_of};
use gridcascade::spectral::{is_cut_edge, kirchhoff_index, resistance_distance, PseudoInverse};
use gridcascade::vulnerability::{
    brute_force_min_yield, evaluate_attack, mves_rb, random_attack, AttackMethod,
};

fn check(id: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[criterion {id:>2}] {name}: {verdict} ({detail})");
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn mk_grid(buses: Vec<f64>, lines: Vec<(usize, usize, f64, f64)>) -> Grid {
    let spec = InstanceSpec {
        buses: buses
            .into_iter()
            .enumerate()
            .map(|(id, power)| Bus { id, power })
            .collect(),
        lines: lines
            .into_iter()
            .enumerate()
            .map(|(id, (u, v, reactance, capacity))| LineSpec {
                id,
                u,
                v,
                reactance,
                capacity,
            })
            .collect(),
        meta: None,
    };
    build_grid(&spec, BalancePolicy::Reject).unwrap()
}

#[test]
fn criterion_01_golden_cascade_and_harmless_superset() {
    let start = Instant::now();
    let g = fixture(&Fixture::Obs61).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for trace in [run_cfe(&g, &[1]).unwrap(), run_cfe_pb(&g, &[1]).unwrap()] {
        ok &= trace.rounds == vec![vec![1], vec![3, 4], vec![2]];
        let flows = trace.flow_snapshots[0].to_map();
        for (line, want) in [(2usize, 7.0), (0, 20.0), (3, 25.0), (4, 25.0)] {
            ok &= (flows[&line] - want).abs() < 1e-9;
        }
        ok &= yield_of(&g, &trace) == 0.0;
    }
    let superset = run_cfe_pb(&g, &[1, 0]).unwrap();
    ok &= superset.t == 0 && yield_of(&g, &superset) == 1.0;
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    detail.push_str(&format!(
        "rounds ({{1}},{{3,4}},{{2}}), yields 0 and 1, {elapsed:?}"
    ));
    check(1, "golden cascade", ok, &detail);
}

#[test]
fn criterion_02_staggered_collapse_for_three_sizes() {
    let start = Instant::now();
    let mut ok = true;
    for m in [3usize, 5, 8] {
        let eps = 1.0 / (2.0 * (m as f64 - 1.0));
        let g = fixture(&Fixture::Obs62 { m, eps }).unwrap();
        let trace = run_cfe_pb(&g, &[0]).unwrap();
        let metrics = cascade_metrics(&g, &trace);
        ok &= metrics.rounds == m - 1;
        ok &= metrics.failures == m;
        ok &= metrics.yield_fraction == 0.0;
        let want: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        ok &= trace.rounds == want;
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    check(
        2,
        "staggered collapse",
        ok,
        &format!("m in {{3,5,8}}: L=|E|-1, all fail, yield 0; {elapsed:?}"),
    );
}

#[test]
fn criterion_03_far_apart_consecutive_failures() {
    let (l, d) = (4usize, 7usize);
    let eps = 1.0 / 6.0;
    let mu = 2.0;
    let g = fixture(&Fixture::Obs63 { l, d, eps, mu }).unwrap();
    let trace = run_cfe_pb(&g, &[0]).unwrap();
    let metrics = cascade_metrics(&g, &trace);
    let ok = metrics.min_consecutive_distance >= d && metrics.rounds >= l;
    check(
        3,
        "distance between failures",
        ok,
        &format!(
            "D = {} (>= {d}), L = {} (>= {l})",
            metrics.min_consecutive_distance, metrics.rounds
        ),
    );
}

#[test]
fn criterion_04_parameter_sensitivity() {
    let m = 5usize;
    let eps = 1.0 / 8.0;
    let mu = 1.0 / 8.0;

    let base = fixture(&Fixture::Obs64Base { m, eps }).unwrap();
    let base_trace = run_cfe_pb(&base, &[0]).unwrap();
    let mut ok = base_trace.t == 0 && yield_of(&base, &base_trace) == 1.0;

    for variant in [
        Fixture::Obs64CMinus { m, eps },
        Fixture::Obs64XMinus { m, eps, mu },
    ] {
        let g = fixture(&variant).unwrap();
        let trace = run_cfe_pb(&g, &[0]).unwrap();
        ok &= yield_of(&g, &trace) == 0.0 && trace.t == m - 1;
    }
    check(
        4,
        "small parameter changes flip the outcome",
        ok,
        "base stable; capacity and reactance perturbations collapse in |E|-1 rounds",
    );
}

#[test]
fn criterion_05_exact_flow_change_ratio() {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for ratio in [2.0, 3.0, 10.0] {
        let g = fixture(&Fixture::Obs51 { x1: 1.0, x2: ratio }).unwrap();
        let pinv = PseudoInverse::of_grid(&g).unwrap();
        let state = solve_flows(&g, &pinv, &g.powers()).unwrap();
        let failed = g.line(0).unwrap();
        let deltas = flow_change_single_failure(&g, &pinv, &state, failed).unwrap();
        let ratios = change_ratios(&state, &deltas, failed);
        let s = ratios[&1].s.unwrap();
        worst = worst.max((s - ratio).abs());
        ok &= (s - ratio).abs() < 1e-12;
    }
    check(
        5,
        "stiff/soft ratio transfers exactly",
        ok,
        &format!("max |error| = {worst:.3e} over ratios 2, 3, 10"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7 share one batch of randomized runs.

struct EquivRun {
    label: String,
    rounds_equal: bool,
    max_flow_diff: f64,
    t: usize,
    rank1_verify: Option<f64>,
}

struct EquivBatch {
    runs: Vec<EquivRun>,
    elapsed: Duration,
}

static EQUIV: OnceLock<EquivBatch> = OnceLock::new();

fn equiv_batch() -> &'static EquivBatch {
    EQUIV.get_or_init(|| {
        let start = Instant::now();
        let sizes = [10usize, 17, 24, 31, 38, 45, 52, 60];
        let fos_levels = [1.05, 1.1, 1.5];
        let f0_sizes = [1usize, 2, 3];
        let mut runs = Vec::new();
        let mut counter = 0u64;
        for (mi, model_name) in ["er", "ws", "ba"].iter().enumerate() {
            for &n in &sizes {
                for &fos in &fos_levels {
                    for &k in &f0_sizes {
                        counter += 1;
                        let seed = 1000 + counter;
                        let model = match mi {
                            0 => EnsembleModel::ErdosRenyi {
                                p: if n <= 31 { 0.22 } else { 0.12 },
                            },
                            1 => EnsembleModel::WattsStrogatz { k: 4, p: 0.1 },
                            _ => EnsembleModel::BarabasiAlbert { k: 3 },
                        };
                        let topo = generate(&EnsembleSpec { model, n, seed }).unwrap();
                        let dist = if counter.is_multiple_of(2) {
                            PowerDist::Normal
                        } else {
                            PowerDist::PlusMinusOne
                        };
                        let g =
                            assign_operating_point(&topo, (n / 5).max(1), dist, fos, seed ^ 0xabc)
                                .unwrap();
                        let f0 = random_attack(&g, k, seed ^ 0x5eed).unwrap();

                        let reference = run_cfe(&g, &f0).unwrap();
                        let opts = CascadeOptions {
                            verify_rank1: true,
                            ..Default::default()
                        };
                        let fast = run_cfe_pb_with_options(&g, &f0, &opts).unwrap();

                        let rounds_equal = reference.rounds == fast.rounds;
                        let max_flow_diff = max_snapshot_diff(&reference, &fast);
                        runs.push(EquivRun {
                            label: format!("{model_name}-n{n}-fos{fos}-k{k}-seed{seed}"),
                            rounds_equal,
                            max_flow_diff,
                            t: fast.t,
                            rank1_verify: fast.diagnostics.rank1_verify_max_rel,
                        });
                    }
                }
            }
        }
        EquivBatch {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

fn max_snapshot_diff(a: &CascadeTrace, b: &CascadeTrace) -> f64 {
    if a.rounds != b.rounds {
        return f64::INFINITY;
    }
    let mut worst = 0.0_f64;
    for (sa, sb) in a.flow_snapshots.iter().zip(&b.flow_snapshots) {
        let ma = sa.to_map();
        let mb = sb.to_map();
        if ma.len() != mb.len() {
            return f64::INFINITY;
        }
        for (id, f) in &ma {
            worst = worst.max((f - mb[id]).abs());
        }
    }
    worst
}

#[test]
fn criterion_06_fast_engine_reproduces_reference_traces() {
    let batch = equiv_batch();
    let total = batch.runs.len();
    let bad: Vec<&str> = batch
        .runs
        .iter()
        .filter(|r| !r.rounds_equal || r.max_flow_diff.is_nan() || r.max_flow_diff > 1e-6)
        .map(|r| r.label.as_str())
        .collect();
    let worst = batch
        .runs
        .iter()
        .map(|r| r.max_flow_diff)
        .fold(0.0_f64, f64::max);
    let cascades_with_rounds = batch.runs.iter().filter(|r| r.t > 0).count();
    let ok = total >= 200 && bad.is_empty() && batch.elapsed < Duration::from_secs(300);
    check(
        6,
        "engine equivalence",
        ok,
        &format!(
            "{total} instances ({cascades_with_rounds} with t>0), max flow diff {worst:.3e}, \
             mismatches {bad:?}, {:?}",
            batch.elapsed
        ),
    );
}

#[test]
fn criterion_07_maintained_pseudo_inverse_matches_scratch() {
    let batch = equiv_batch();
    let checked: Vec<f64> = batch.runs.iter().filter_map(|r| r.rank1_verify).collect();
    let worst = checked.iter().copied().fold(0.0_f64, f64::max);
    let ok = !checked.is_empty() && worst <= 1e-8;
    check(
        7,
        "rank-1 maintenance accuracy",
        ok,
        &format!(
            "{} of {} runs sampled, worst relative drift {worst:.3e}",
            checked.len(),
            batch.runs.len()
        ),
    );
}

fn complete_graph(n: usize) -> Grid {
    let mut lines = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            lines.push((u, v, 1.0, 1.0));
        }
    }
    mk_grid(vec![0.0; n], lines)
}

fn cycle_graph(n: usize) -> Grid {
    let lines = (0..n)
        .map(|u| {
            let v = (u + 1) % n;
            (u.min(v), u.max(v), 1.0, 1.0)
        })
        .collect();
    mk_grid(vec![0.0; n], lines)
}

#[test]
fn criterion_08_kirchhoff_closed_forms() {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for n in [5usize, 20, 50] {
        let nf = n as f64;
        let complete = kirchhoff_index(&PseudoInverse::of_grid(&complete_graph(n)).unwrap())
            .unwrap()
            .value;
        let cycle = kirchhoff_index(&PseudoInverse::of_grid(&cycle_graph(n)).unwrap())
            .unwrap()
            .value;
        let want_complete = nf - 1.0;
        let want_cycle = (nf - 1.0) * nf * (nf + 1.0) / 12.0;
        let rel_complete = (complete - want_complete).abs() / want_complete;
        let rel_cycle = (cycle - want_cycle).abs() / want_cycle;
        worst = worst.max(rel_complete).max(rel_cycle);
        ok &= rel_complete < 1e-8 && rel_cycle < 1e-8;
    }
    check(
        8,
        "closed-form indices",
        ok,
        &format!("complete and cycle graphs, n in {{5,20,50}}, worst rel err {worst:.3e}"),
    );
}

#[test]
fn criterion_09_mean_line_resistance() {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for trial in 0..100u64 {
        let n = 10 + (trial as usize % 31);
        let p = 0.18 + 0.02 * (trial % 10) as f64;
        let g = generate(&EnsembleSpec {
            model: EnsembleModel::ErdosRenyi { p },
            n,
            seed: 9000 + trial,
        })
        .unwrap();
        let pinv = PseudoInverse::of_grid(&g).unwrap();
        let mean: f64 = g
            .lines()
            .iter()
            .map(|l| resistance_distance(&pinv, l.u, l.v))
            .sum::<f64>()
            / g.num_lines() as f64;
        let want = (g.num_buses() - 1) as f64 / g.num_lines() as f64;
        let err = (mean - want).abs();
        worst = worst.max(err);
        ok &= err < 1e-8;
    }
    check(
        9,
        "mean resistance over lines",
        ok,
        &format!("100 connected simple graphs, worst |error| = {worst:.3e}"),
    );
}

#[test]
fn criterion_10_mutual_ratio_bounds() {
    // Checked exactly as stated: for every ordered pair (target e, failed
    // e') with e' non-cut and the mutual ratio defined,
    //   M <= r(e,e')/(1 - r(p,q)) <= r(p,q)/(1 - r(p,q)).
    let mut pairs = 0usize;
    let mut m_over_pairwise = 0usize;
    let mut m_over_global = 0usize;
    let mut pairwise_over_global = 0usize;
    let mut shared_endpoint_overruns = 0usize;

    for trial in 0..50u64 {
        let n = 14 + (trial as usize % 7);
        let topo = generate(&EnsembleSpec {
            model: EnsembleModel::ErdosRenyi { p: 0.3 },
            n,
            seed: 4000 + trial,
        })
        .unwrap();
        let g = assign_operating_point(&topo, 0, PowerDist::Normal, 1.1, 4100 + trial).unwrap();
        let pinv = PseudoInverse::of_grid(&g).unwrap();
        let state = solve_flows(&g, &pinv, &g.powers()).unwrap();

        for failed in g.lines() {
            if is_cut_edge(&pinv, failed) {
                continue;
            }
            if state.flow(failed.id).unwrap_or(0.0) == 0.0 {
                continue;
            }
            let deltas = flow_change_single_failure(&g, &pinv, &state, failed).unwrap();
            let ratios = change_ratios(&state, &deltas, failed);
            for target in g.lines() {
                if target.id == failed.id {
                    continue;
                }
                let Some(m) = ratios[&target.id].m else {
                    continue;
                };
                let bounds = flow_change_bounds(&g, &pinv, failed, target).unwrap();
                pairs += 1;
                let shares_bus = target.u == failed.u
                    || target.u == failed.v
                    || target.v == failed.u
                    || target.v == failed.v;
                if m > bounds.pairwise + 1e-9 {
                    m_over_pairwise += 1;
                    if shares_bus {
                        shared_endpoint_overruns += 1;
                    }
                }
                if m > bounds.global + 1e-9 {
                    m_over_global += 1;
                }
                if bounds.pairwise > bounds.global + 1e-9 {
                    pairwise_over_global += 1;
                }
            }
        }
    }

    let ok = m_over_pairwise == 0 && pairwise_over_global == 0;
    check(
        10,
        "mutual ratio bounds",
        ok,
        &format!(
            "{pairs} pairs: M>pairwise {m_over_pairwise} (of which {shared_endpoint_overruns} share \
             a bus with the failed line), pairwise>global {pairwise_over_global}, \
             M>global {m_over_global}"
        ),
    );
}

#[test]
fn criterion_11_cut_line_oracle() {
    let mut graphs = 0usize;
    let mut lines_checked = 0usize;
    let mut disagreements = 0usize;

    let mut check_grid = |g: &Grid| {
        let pinv = PseudoInverse::of_grid(g).unwrap();
        let bridges = g.bridges(&BTreeSet::new());
        for line in g.lines() {
            lines_checked += 1;
            if is_cut_edge(&pinv, line) != bridges.contains(&line.id) {
                disagreements += 1;
            }
        }
        graphs += 1;
    };

    // Sparse-to-dense random graphs; skip seeds whose draws stay
    // disconnected so exactly 40 graphs are collected.
    let mut seed = 7000u64;
    let mut collected = 0usize;
    while collected < 40 {
        seed += 1;
        let n = 8 + (seed as usize % 25);
        let p = (0.1 + 0.03 * (seed % 10) as f64).max(2.5 * (n as f64).ln() / n as f64);
        if let Ok(g) = generate(&EnsembleSpec {
            model: EnsembleModel::ErdosRenyi { p },
            n,
            seed,
        }) {
            check_grid(&g);
            collected += 1;
        }
    }
    // Random attachment trees: every line is a bridge.
    for trial in 0..30u64 {
        let n = 5 + (trial as usize % 26);
        let lines: Vec<(usize, usize, f64, f64)> = (1..n)
            .map(|v| {
                let u = (trial as usize * 7919 + v * 104729) % v;
                (u.min(v), u.max(v), 1.0, 1.0)
            })
            .collect();
        check_grid(&mk_grid(vec![0.0; n], lines));
    }
    // Multigraphs: ring lattices plus duplicated lines.
    for trial in 0..30u64 {
        let n = 6 + (trial as usize % 12);
        let mut lines: Vec<(usize, usize, f64, f64)> = (0..n)
            .map(|u| {
                let v = (u + 1) % n;
                (u.min(v), u.max(v), 1.0 + (u % 3) as f64, 1.0)
            })
            .collect();
        // Duplicate a couple of lines and hang a pendant path off bus 0.
        lines.push((0, 1, 2.0, 1.0));
        lines.push((2, 3, 0.5, 1.0));
        let mut buses = vec![0.0; n];
        buses.push(0.0);
        buses.push(0.0);
        lines.push((0, n, 1.0, 1.0));
        lines.push((n, n + 1, 1.0, 1.0));
        check_grid(&mk_grid(buses, lines));
    }

    let ok = graphs == 100 && disagreements == 0;
    check(
        11,
        "cut-line test vs depth-first search",
        ok,
        &format!("{graphs} graphs, {lines_checked} lines, {disagreements} disagreements"),
    );
}

#[test]
fn criterion_12_attack_selection_dominance() {
    let start = Instant::now();
    let mut instances = Vec::new();
    let mut seed = 0u64;
    while instances.len() < 20 {
        seed += 1;
        let topo = match generate(&EnsembleSpec {
            model: EnsembleModel::ErdosRenyi { p: 0.1 },
            n: 30,
            seed: 2000 + seed,
        }) {
            Ok(g) => g,
            Err(_) => continue,
        };
        if topo.num_lines() > 60 {
            continue;
        }
        let g =
            assign_operating_point(&topo, 6, PowerDist::PlusMinusOne, 1.1, 2100 + seed).unwrap();
        instances.push(g);
    }

    let mut ok = true;
    let mut mves_yields = Vec::new();
    let mut random_yields = Vec::new();
    for (idx, g) in instances.iter().enumerate() {
        for k in [1usize, 2] {
            let brute = brute_force_min_yield(g, k, None).unwrap();
            let heuristic =
                evaluate_attack(g, &mves_rb(g, k).unwrap(), AttackMethod::MvesRb).unwrap();
            if brute.yield_fraction > heuristic.yield_fraction + 1e-12 {
                ok = false;
            }
            mves_yields.push(heuristic.yield_fraction);
            for draw in 0..50u64 {
                let f0 = random_attack(g, k, (idx as u64) * 1000 + k as u64 * 100 + draw).unwrap();
                let random = evaluate_attack(g, &f0, AttackMethod::Random).unwrap();
                if brute.yield_fraction > random.yield_fraction + 1e-12 {
                    ok = false;
                }
                random_yields.push(random.yield_fraction);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mves_mean = mean(&mves_yields);
    let random_mean = mean(&random_yields);
    ok &= mves_mean <= random_mean;
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    check(
        12,
        "attack dominance",
        ok,
        &format!(
            "20 instances, k in {{1,2}}: exhaustive <= heuristic everywhere; mean yields \
             heuristic {mves_mean:.4} <= random {random_mean:.4}; {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_13_fast_engine_wall_time() {
    // Ten seeded (instance, trigger line) pairs whose cascades run for at
    // least ten rounds at a 1.05 margin; found by scanning every single-line
    // trigger of the seeded instances and re-validated below.
    let trials_spec: [(u64, usize); 10] = [
        (3, 362),
        (4, 400),
        (5, 156),
        (6, 365),
        (7, 237),
        (8, 219),
        (9, 135),
        (11, 299),
        (12, 465),
        (13, 15),
    ];
    let mut trials = Vec::new();
    for (seed, trigger) in trials_spec {
        let topo = generate(&EnsembleSpec {
            model: EnsembleModel::ErdosRenyi { p: 0.03 },
            n: 200,
            seed: 3000 + seed,
        })
        .unwrap();
        let g = assign_operating_point(&topo, 0, PowerDist::Normal, 1.05, 3100 + seed).unwrap();
        let f0 = vec![trigger];

        let t0 = Instant::now();
        let reference = run_cfe(&g, &f0).unwrap();
        let cfe_time = t0.elapsed();
        let t1 = Instant::now();
        let fast = run_cfe_pb(&g, &f0).unwrap();
        let pb_time = t1.elapsed();

        assert!(reference.t >= 10, "seed {seed} cascade too short");
        assert_eq!(reference.rounds, fast.rounds);
        trials.push((reference.t, cfe_time, pb_time));
    }

    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
    };
    let cfe_median = median(trials.iter().map(|t| t.1.as_secs_f64()).collect());
    let pb_median = median(trials.iter().map(|t| t.2.as_secs_f64()).collect());
    let ratio = pb_median / cfe_median;
    let ts: Vec<usize> = trials.iter().map(|t| t.0).collect();
    let ok = pb_median < 0.6 * cfe_median;
    check(
        13,
        "maintained-inverse engine is faster",
        ok,
        &format!(
            "medians: reference {:.1} ms, fast {:.1} ms, ratio {ratio:.3} (< 0.6); t = {ts:?}",
            cfe_median * 1e3,
            pb_median * 1e3
        ),
    );
}

#[test]
fn criterion_14_exhaustive_search_returns_the_smaller_set() {
    let g = fixture(&Fixture::Obs61).unwrap();
    let best = brute_force_min_yield(&g, 2, None).unwrap();
    let superset = evaluate_attack(&g, &[0, 1], AttackMethod::BruteForce).unwrap();
    let ok = best.chosen == vec![1] && best.yield_fraction == 0.0 && superset.yield_fraction == 1.0;
    check(
        14,
        "non-monotone damage",
        ok,
        &format!(
            "size <= 2 search picks {:?} with yield {}, while its superset {{0,1}} yields {}",
            best.chosen, best.yield_fraction, superset.yield_fraction
        ),
    );
}
