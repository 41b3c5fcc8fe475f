//! Implementations of the CLI subcommands.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use gridcascade::cascade::{
    failure_tolerance, run_cfe_pb_with_options, run_cfe_with_options, CascadeOptions, CascadeTrace,
    TraceDocument,
};
use gridcascade::dcflow::{change_ratios, flow_change_single_failure, solve_flows};
use gridcascade::error::{Error, Result};
use gridcascade::generators::{
    assign_operating_point, fixture, generate as generate_topology, EnsembleModel, EnsembleSpec,
    Fixture, PowerDist,
};
use gridcascade::grid::{read_instance, write_instance, BalancePolicy, Grid};
use gridcascade::metrics::{cascade_metrics, edge_distance, UNREACHABLE};
use gridcascade::spectral::{is_cut_edge, resistance_distance, PseudoInverse};
use gridcascade::vulnerability::{
    brute_force_min_yield, brute_force_subset_count, evaluate_attack, mves_rb, random_attack,
    AttackMethod, DEFAULT_SUBSET_CAP,
};

use crate::{
    AttackArgs, BenchArgs, CascadeArgs, DistArg, EngineArg, EnsembleArg, FigdataArgs, GenerateArgs,
    MethodArg, MetricsArgs, SolveArgs,
};

fn meta(stamp: bool) -> Option<serde_json::Value> {
    stamp.then(|| {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        json!({ "generated_unix_ms": ms })
    })
}

fn write_json(path: &str, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn balance_policy(shed: bool) -> BalancePolicy {
    if shed {
        BalancePolicy::Shed
    } else {
        BalancePolicy::Reject
    }
}

pub fn solve(args: &SolveArgs, stamp: bool) -> Result<()> {
    let grid = read_instance(&args.input, balance_policy(args.shed))?;
    let pinv = PseudoInverse::of_grid(&grid)?;
    let state = solve_flows(&grid, &pinv, &grid.powers())?;
    let violations: Vec<usize> = grid
        .lines()
        .iter()
        .filter(|line| {
            state.flow(line.id).unwrap_or(0.0).abs()
                > line.capacity + failure_tolerance(line.capacity)
        })
        .map(|line| line.id)
        .collect();
    let doc = json!({
        "meta": meta(stamp),
        "angles": state.angles,
        "flows": state.to_map(),
        "mean_abs_flow": state.mean_abs_flow(),
        "feasible": violations.is_empty(),
        "violations": violations,
    });
    write_json(&args.output, &doc)
}

pub fn cascade(args: &CascadeArgs, stamp: bool) -> Result<()> {
    let grid = read_instance(&args.input, balance_policy(args.shed))?;
    let opts = CascadeOptions {
        strict_initial_feasibility: args.strict,
        ..Default::default()
    };
    let trace = match args.engine {
        EngineArg::Cfe => run_cfe_with_options(&grid, &args.f0, &opts)?,
        EngineArg::CfePb => run_cfe_pb_with_options(&grid, &args.f0, &opts)?,
    };
    let metrics = cascade_metrics(&grid, &trace);

    let mut doc = trace.to_document();
    doc.meta = meta(stamp);
    write_json(&args.output, &serde_json::to_value(&doc)?)?;
    let metrics_doc = json!({ "meta": meta(stamp), "metrics": metrics });
    write_json(&format!("{}.metrics.json", args.output), &metrics_doc)
}

pub fn attack(args: &AttackArgs, stamp: bool) -> Result<()> {
    let grid = read_instance(&args.input, BalancePolicy::Reject)?;
    let result = match args.method {
        MethodArg::MvesRb => {
            let chosen = mves_rb(&grid, args.k)?;
            evaluate_attack(&grid, &chosen, AttackMethod::MvesRb)?
        }
        MethodArg::Random => {
            let chosen = random_attack(&grid, args.k, args.seed)?;
            evaluate_attack(&grid, &chosen, AttackMethod::Random)?
        }
        MethodArg::BruteForce => brute_force_min_yield(&grid, args.k, args.cap)?,
    };

    let trace_path = args
        .trace_output
        .clone()
        .unwrap_or_else(|| format!("{}.trace.json", args.output));
    let mut trace_doc = result.trace.to_document();
    trace_doc.meta = meta(stamp);
    write_json(&trace_path, &serde_json::to_value(&trace_doc)?)?;

    let doc = json!({
        "meta": meta(stamp),
        "method": result.method,
        "k": args.k,
        "chosen": result.chosen,
        "yield": result.yield_fraction,
        "trace_path": trace_path,
    });
    write_json(&args.output, &doc)
}

fn parse_fixture(args: &GenerateArgs) -> Result<Fixture> {
    let name = args.fixture.as_deref().unwrap_or_default();
    let need = |opt: Option<f64>, what: &str| {
        opt.ok_or_else(|| Error::Validation {
            field: "fixture".into(),
            message: format!("{name} needs --{what}"),
        })
    };
    let need_usize = |opt: Option<usize>, what: &str| {
        opt.ok_or_else(|| Error::Validation {
            field: "fixture".into(),
            message: format!("{name} needs --{what}"),
        })
    };
    Ok(match name {
        "obs51" => Fixture::Obs51 {
            x1: need(args.x1, "x1")?,
            x2: need(args.x2, "x2")?,
        },
        "obs61" => Fixture::Obs61,
        "obs62" => Fixture::Obs62 {
            m: need_usize(args.m, "m")?,
            eps: need(args.eps, "eps")?,
        },
        "obs63" => Fixture::Obs63 {
            l: need_usize(args.l, "l")?,
            d: need_usize(args.d, "d")?,
            eps: need(args.eps, "eps")?,
            mu: need(args.mu, "mu")?,
        },
        "obs64_base" => Fixture::Obs64Base {
            m: need_usize(args.m, "m")?,
            eps: need(args.eps, "eps")?,
        },
        "obs64_c_minus" => Fixture::Obs64CMinus {
            m: need_usize(args.m, "m")?,
            eps: need(args.eps, "eps")?,
        },
        "obs64_x_minus" => Fixture::Obs64XMinus {
            m: need_usize(args.m, "m")?,
            eps: need(args.eps, "eps")?,
            mu: need(args.mu, "mu")?,
        },
        other => {
            return Err(Error::Validation {
                field: "fixture".into(),
                message: format!(
                    "unknown fixture {other:?} (expected obs51, obs61, obs62, obs63, \
                     obs64_base, obs64_c_minus, obs64_x_minus)"
                ),
            })
        }
    })
}

fn ensemble_model(args: &GenerateArgs, which: EnsembleArg) -> EnsembleModel {
    match which {
        EnsembleArg::Er => EnsembleModel::ErdosRenyi {
            p: args.p.unwrap_or(0.01),
        },
        EnsembleArg::Ws => EnsembleModel::WattsStrogatz {
            k: args.knn.unwrap_or(4),
            p: args.p.unwrap_or(0.1),
        },
        EnsembleArg::Ba => EnsembleModel::BarabasiAlbert {
            k: args.knn.unwrap_or(3),
        },
    }
}

pub fn generate(args: &GenerateArgs, stamp: bool) -> Result<()> {
    let grid = if args.fixture.is_some() {
        fixture(&parse_fixture(args)?)?
    } else if let Some(which) = args.ensemble {
        let topo = generate_topology(&EnsembleSpec {
            model: ensemble_model(args, which),
            n: args.n,
            seed: args.seed,
        })?;
        let (dist, nsd) = match args.dist {
            DistArg::Normal => (PowerDist::Normal, 0),
            DistArg::Pm1 => (
                PowerDist::PlusMinusOne,
                args.nsd.ok_or_else(|| Error::Validation {
                    field: "nsd".into(),
                    message: "--dist pm1 needs --nsd".into(),
                })?,
            ),
        };
        assign_operating_point(&topo, nsd, dist, args.fos, args.seed ^ 0x9e3779b9)?
    } else {
        return Err(Error::Validation {
            field: "generate".into(),
            message: "pass either --ensemble or --fixture".into(),
        });
    };
    write_instance(&grid, &args.output, meta(stamp))
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    if args.trials < 3 {
        return Err(Error::Validation {
            field: "trials".into(),
            message: "need at least 3 trials per cell".into(),
        });
    }
    let mut writer = csv::Writer::from_path(&args.output).map_err(csv_err)?;
    writer
        .write_record([
            "n",
            "fos",
            "trials",
            "t_median",
            "cfe_ms_median",
            "cfepb_ms_median",
            "speedup",
        ])
        .map_err(csv_err)?;

    for &n in &args.sizes {
        let p = args
            .p
            .unwrap_or_else(|| (2.5 * (n as f64).ln() / n as f64).clamp(0.01, 0.5));
        for &fos in &args.fos_levels {
            let mut ts = Vec::new();
            let mut cfe_ms = Vec::new();
            let mut pb_ms = Vec::new();
            let mut trial = 0u64;
            let mut attempts = 0u64;
            while ts.len() < args.trials && attempts < 10 * args.trials as u64 {
                attempts += 1;
                trial += 1;
                let seed = args
                    .seed
                    .wrapping_add(trial)
                    .wrapping_add((n as u64) << 20)
                    .wrapping_add((fos * 1000.0) as u64);
                let Ok(topo) = generate_topology(&EnsembleSpec {
                    model: EnsembleModel::ErdosRenyi { p },
                    n,
                    seed,
                }) else {
                    continue;
                };
                let grid = assign_operating_point(&topo, 0, PowerDist::Normal, fos, seed ^ 0xb0b)?;
                let f0 = mves_rb(&grid, 3.min(grid.num_lines()))?;
                let opts = CascadeOptions::default();

                let t0 = Instant::now();
                let reference = run_cfe_with_options(&grid, &f0, &opts)?;
                let cfe = t0.elapsed().as_secs_f64() * 1e3;
                let t1 = Instant::now();
                let fast = run_cfe_pb_with_options(&grid, &f0, &opts)?;
                let pb = t1.elapsed().as_secs_f64() * 1e3;
                debug_assert_eq!(reference.rounds, fast.rounds);

                ts.push(reference.t as f64);
                cfe_ms.push(cfe);
                pb_ms.push(pb);
            }
            if ts.is_empty() {
                return Err(Error::DisconnectedEnsemble {
                    attempts: attempts as u32,
                });
            }
            let t_median = median(&mut ts);
            let cfe_median = median(&mut cfe_ms);
            let pb_median = median(&mut pb_ms);
            writer
                .write_record([
                    n.to_string(),
                    format!("{fos}"),
                    args.trials.to_string(),
                    format!("{t_median}"),
                    format!("{cfe_median:.3}"),
                    format!("{pb_median:.3}"),
                    format!("{:.3}", cfe_median / pb_median),
                ])
                .map_err(csv_err)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    0.5 * (values[values.len() / 2] + values[(values.len() - 1) / 2])
}

fn csv_err(err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv: {other:?}")),
    }
}

fn model_name(which: EnsembleArg) -> &'static str {
    match which {
        EnsembleArg::Er => "er",
        EnsembleArg::Ws => "ws",
        EnsembleArg::Ba => "ba",
    }
}

fn default_model(which: EnsembleArg, n: usize) -> EnsembleModel {
    match which {
        // Dense enough to stay connected at moderate sizes.
        EnsembleArg::Er => EnsembleModel::ErdosRenyi {
            p: (2.5 * (n as f64).ln() / n as f64).min(0.5),
        },
        EnsembleArg::Ws => EnsembleModel::WattsStrogatz { k: 4, p: 0.1 },
        EnsembleArg::Ba => EnsembleModel::BarabasiAlbert { k: 3 },
    }
}

fn bus_distances_from(grid: &Grid, src: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; grid.num_buses()];
    let mut queue = VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
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

pub fn figdata(args: &FigdataArgs) -> Result<()> {
    std::fs::create_dir_all(&args.output_dir)?;
    let dir = Path::new(&args.output_dir);

    let mut scatter =
        csv::Writer::from_path(dir.join("distance_vs_resistance.csv")).map_err(csv_err)?;
    scatter
        .write_record(["graph", "seed", "i", "j", "d", "r"])
        .map_err(csv_err)?;
    let mut ratios_csv =
        csv::Writer::from_path(dir.join("flow_change_ratios.csv")).map_err(csv_err)?;
    ratios_csv
        .write_record(["graph", "seed", "e", "e_failed", "d", "r", "s", "m"])
        .map_err(csv_err)?;
    let mut attack_csv = csv::Writer::from_path(dir.join("attack_yield.csv")).map_err(csv_err)?;
    attack_csv
        .write_record(["graph", "seed", "method", "k", "yield"])
        .map_err(csv_err)?;

    for &which in &args.models {
        let name = model_name(which);
        let topo = generate_topology(&EnsembleSpec {
            model: default_model(which, args.n),
            n: args.n,
            seed: args.seed,
        })?;
        let grid = assign_operating_point(
            &topo,
            args.nsd,
            PowerDist::PlusMinusOne,
            args.fos,
            args.seed ^ 0xf16,
        )?;
        let pinv = PseudoInverse::of_grid(&grid)?;
        let state = solve_flows(&grid, &pinv, &grid.powers())?;

        // Node-pair scatter: hop distance vs resistance distance.
        for i in 0..grid.num_buses() {
            let hops = bus_distances_from(&grid, i);
            for (j, hop) in hops.iter().enumerate().skip(i + 1) {
                scatter
                    .write_record([
                        name.to_string(),
                        args.seed.to_string(),
                        i.to_string(),
                        j.to_string(),
                        hop.to_string(),
                        format!("{}", resistance_distance(&pinv, i, j)),
                    ])
                    .map_err(csv_err)?;
            }
        }

        // Single-failure flow change ratios for seeded random non-cut lines.
        let mut failures = Vec::new();
        let mut draw = 0u64;
        while failures.len() < args.trials && draw < 50 * args.trials as u64 {
            let pick = random_attack(&grid, 1, args.seed ^ (0xabc + draw))?[0];
            draw += 1;
            let line = grid.line(pick).unwrap();
            if !is_cut_edge(&pinv, line) && !failures.contains(&pick) {
                failures.push(pick);
            }
        }
        for &failed_id in &failures {
            let failed = grid.line(failed_id).unwrap();
            let deltas = flow_change_single_failure(&grid, &pinv, &state, failed)?;
            let ratios = change_ratios(&state, &deltas, failed);
            for (line_id, ratio) in &ratios {
                let target = grid.line(*line_id).unwrap();
                let d = edge_distance(&grid, *line_id, failed_id);
                let r = resistance_distance(&pinv, target.u, failed.u)
                    .min(resistance_distance(&pinv, target.u, failed.v))
                    .min(resistance_distance(&pinv, target.v, failed.u))
                    .min(resistance_distance(&pinv, target.v, failed.v));
                ratios_csv
                    .write_record([
                        name.to_string(),
                        args.seed.to_string(),
                        line_id.to_string(),
                        failed_id.to_string(),
                        d.to_string(),
                        format!("{r}"),
                        ratio.s.map(|s| format!("{s}")).unwrap_or_default(),
                        ratio.m.map(|m| format!("{m}")).unwrap_or_default(),
                    ])
                    .map_err(csv_err)?;
            }
        }

        // Attack yields: heuristic vs random draws vs exhaustive when small.
        let cap = args.cap.unwrap_or(DEFAULT_SUBSET_CAP);
        for k in 1..=args.k_max.min(grid.num_lines()) {
            let heuristic = evaluate_attack(&grid, &mves_rb(&grid, k)?, AttackMethod::MvesRb)?;
            attack_csv
                .write_record([
                    name.to_string(),
                    args.seed.to_string(),
                    "mves_rb".to_string(),
                    k.to_string(),
                    format!("{}", heuristic.yield_fraction),
                ])
                .map_err(csv_err)?;
            for draw in 0..args.attack_draws as u64 {
                let f0 = random_attack(&grid, k, args.seed ^ (k as u64) << 32 ^ draw)?;
                let random = evaluate_attack(&grid, &f0, AttackMethod::Random)?;
                attack_csv
                    .write_record([
                        name.to_string(),
                        args.seed.to_string(),
                        "random".to_string(),
                        k.to_string(),
                        format!("{}", random.yield_fraction),
                    ])
                    .map_err(csv_err)?;
            }
            if brute_force_subset_count(grid.num_lines(), k) <= cap {
                let brute = brute_force_min_yield(&grid, k, Some(cap))?;
                attack_csv
                    .write_record([
                        name.to_string(),
                        args.seed.to_string(),
                        "brute_force".to_string(),
                        k.to_string(),
                        format!("{}", brute.yield_fraction),
                    ])
                    .map_err(csv_err)?;
            }
        }
    }
    scatter.flush()?;
    ratios_csv.flush()?;
    attack_csv.flush()?;
    Ok(())
}

pub fn metrics(args: &MetricsArgs, stamp: bool) -> Result<()> {
    let grid = read_instance(&args.input, BalancePolicy::Reject)?;
    let text = std::fs::read_to_string(&args.trace)?;
    let doc: TraceDocument = serde_json::from_str(&text)?;
    let trace = CascadeTrace::from_document(&doc, &grid);
    let metrics = cascade_metrics(&grid, &trace);
    if args.output.ends_with(".csv") {
        let mut writer = csv::Writer::from_path(&args.output).map_err(csv_err)?;
        writer
            .write_record([
                "yield",
                "failures",
                "rounds",
                "min_consecutive_distance",
                "per_round_distances",
            ])
            .map_err(csv_err)?;
        let distances = metrics
            .per_round_distances
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        writer
            .write_record([
                format!("{}", metrics.yield_fraction),
                metrics.failures.to_string(),
                metrics.rounds.to_string(),
                metrics.min_consecutive_distance.to_string(),
                distances,
            ])
            .map_err(csv_err)?;
        writer.flush()?;
        return Ok(());
    }
    let out = json!({ "meta": meta(stamp), "metrics": metrics });
    write_json(&args.output, &out)
}
