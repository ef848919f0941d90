use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context as _};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rruc_core::analysis::{demand_cost_histogram, pearson, poly_fit, scaling_fit};
use rruc_core::dispatch::{economic_dispatch, DispatchUnit};
use rruc_core::fleet::{classify_fleet, Fleet, GeneratorParams, HydroUnit, SolverConfig};
use rruc_core::forecast::{ForecastSummary, LoadSeries};
use rruc_core::hydro::{balance, balance_with, check_theorem1, BalanceProblem, HydroSchedule};
use rruc_core::io::{self, BenchRow, Scenario};
use rruc_core::sim::{self, audit, cold_start, ramping_aggregates, SimulationRun};
use rruc_core::synth::{synth_hydro_fleet, synth_load, synthesize, HydroSpec, LoadSpec, SynthConfig};
use rruc_core::{relaxed, Error};
use serde_json::json;

use crate::{AnalyzeArgs, BenchArgs, HydroArgs, RunArgs, SweepArgs, SynthArgs, VerifyArgs};

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

pub fn synth(ctx: &Context, args: SynthArgs) -> anyhow::Result<ExitCode> {
    let mut config: SynthConfig = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.periods {
        config.load.periods = n;
    }
    if let Some(r) = args.replicate {
        config.replicate = r;
    }
    let s = synthesize(&config, ctx.seed)?;
    io::write_fleet(&ctx.path("fleet.csv"), &s.fleet)?;
    io::write_hydro(&ctx.path("hydro.csv"), &s.hydro)?;
    io::write_load(&ctx.path("load.csv"), &s.load)?;
    let lookahead = SolverConfig::default()
        .with_period_minutes(s.load.period_minutes)
        .lookahead_periods;
    let scenario = Scenario {
        fleet: "fleet.csv".into(),
        load: "load.csv".into(),
        hydro: Some("hydro.csv".into()),
        horizon: s.load.len().saturating_sub(lookahead).max(1),
        seed: ctx.seed,
        resample_minutes: None,
        solver: SolverConfig::default().with_period_minutes(s.load.period_minutes),
    };
    ctx.write_json("scenario.json", &serde_json::to_value(&scenario)?)?;
    let reserve = rruc_core::synth::reserve_shortfall(&s.fleet, s.load.peak());
    ctx.write_json(
        "synth_meta.json",
        &json!({
            "seed": ctx.seed,
            "config": config,
            "units": s.fleet.len(),
            "hydro_units": s.hydro.len(),
            "periods": s.load.len(),
            "capacity_mw": s.fleet.iter().map(|g| g.p_max).sum::<f64>(),
            "peak_mw": s.load.peak(),
            "reserve_shortfall_mw": reserve,
        }),
    )?;
    if let Some(short) = reserve {
        log::warn!("fleet capacity is {short:.1} MW short of a 20% reserve over peak");
    }
    Ok(ExitCode::SUCCESS)
}

struct LoadedScenario {
    scenario: Scenario,
    fleet: Vec<GeneratorParams>,
    load: LoadSeries,
    hydro: Option<Vec<HydroUnit>>,
}

fn load_scenario(path: &Path, resample: Option<f64>, threads: usize) -> anyhow::Result<LoadedScenario> {
    let mut scenario = Scenario::load_file(path)?;
    if resample.is_some() {
        scenario.resample_minutes = resample;
    }
    scenario.solver.sweep_threads = threads;
    let fleet = io::read_fleet(&scenario.fleet).with_context(|| format!("fleet {}", scenario.fleet.display()))?;
    let load = io::read_load(&scenario.load, scenario.resample_minutes)
        .with_context(|| format!("load {}", scenario.load.display()))?;
    let hydro = match &scenario.hydro {
        Some(p) => Some(io::read_hydro(p).with_context(|| format!("hydro {}", p.display()))?),
        None => None,
    };
    Ok(LoadedScenario {
        scenario,
        fleet,
        load,
        hydro,
    })
}

fn hydro_schedule(load: &LoadSeries, units: &[HydroUnit]) -> anyhow::Result<(HydroSchedule, Vec<String>)> {
    let problem = BalanceProblem::new(load.values.clone(), units.to_vec())?;
    let warnings = problem.warnings.clone();
    Ok((balance(&problem), warnings))
}

/// Cold-start the fleet against the (residual) first-period demand and run.
fn simulate(
    params: &[GeneratorParams],
    load: &LoadSeries,
    hydro: Option<&HydroSchedule>,
    config: &SolverConfig,
    horizon: usize,
) -> anyhow::Result<(SimulationRun, Fleet)> {
    let mut fleet = Fleet::from_params(params.to_vec())?;
    let d0 = match hydro {
        Some(h) => h.residual.first().copied().unwrap_or(0.0),
        None => load.values.first().copied().unwrap_or(0.0),
    };
    cold_start(&mut fleet, d0)?;
    let run = sim::run(load, &mut fleet, hydro, config, horizon)?;
    Ok((run, fleet))
}

pub fn run(ctx: &Context, args: RunArgs) -> anyhow::Result<ExitCode> {
    let sc = load_scenario(&args.scenario, args.resample, ctx.threads)?;
    let config = &sc.scenario.solver;
    let horizon = args.periods.unwrap_or(sc.scenario.horizon);
    let (schedule, hydro_warnings) = match &sc.hydro {
        Some(units) => {
            let (s, w) = hydro_schedule(&sc.load, units)?;
            (Some(s), w)
        }
        None => (None, Vec::new()),
    };

    if args.dump_model {
        let mut fleet = Fleet::from_params(sc.fleet.clone())?;
        let series = match &schedule {
            Some(s) => rruc_core::hydro::apply_schedule(s, &sc.load)?,
            None => sc.load.clone(),
        };
        cold_start(&mut fleet, series.values[0])?;
        let classes = classify_fleet(&fleet, 0);
        let forecast = ForecastSummary::at(&series, 0, config)?;
        let problem = relaxed::build(&fleet, &classes, &forecast, ramping_aggregates(&fleet), config)?;
        ctx.write_json("model.json", &problem.to_model_json())?;
    }

    let started = Instant::now();
    let (result, fleet) = simulate(&sc.fleet, &sc.load, schedule.as_ref(), config, horizon)?;
    let wall = started.elapsed().as_secs_f64();
    let issues = audit(&result, &fleet);
    io::write_records(&ctx.path("records.csv"), &result.records)?;
    println!("wrote {}", ctx.path("records.csv").display());
    for w in hydro_warnings.iter().chain(&result.warnings) {
        log::warn!("{w}");
    }
    ctx.write_json(
        "run.json",
        &json!({
            "seed": ctx.seed,
            "scenario": sc.scenario,
            "horizon": horizon,
            "wall_seconds": wall,
            "summary": result.summary,
            "aborted": result.aborted,
            "audit": issues,
            "warnings": hydro_warnings.iter().chain(&result.warnings).collect::<Vec<_>>(),
        }),
    )?;
    let s = &result.summary;
    println!(
        "periods {} cost {:.2} starts {} shutdowns {} fallbacks {} audit issues {}",
        s.periods,
        s.total_cost,
        s.starts,
        s.shutdowns,
        s.fallback_periods,
        issues.len()
    );
    if let Some(reason) = &result.aborted {
        eprintln!("run stopped early: {reason}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn hydro(ctx: &Context, args: HydroArgs) -> anyhow::Result<ExitCode> {
    let sc = load_scenario(&args.scenario, args.resample, ctx.threads)?;
    let Some(units) = sc.hydro else {
        bail!(config_error("scenario has no hydro units"));
    };
    let mut demands = sc.load.values.clone();
    if let Some(n) = args.periods {
        if n > demands.len() {
            bail!(config_error(format!("--periods {n} exceeds the {} load periods", demands.len())));
        }
        demands.truncate(n);
    }
    let problem = BalanceProblem::new(demands, units)?;
    let started = Instant::now();
    let schedule = balance_with(&problem, args.ordering.into());
    let seconds = started.elapsed().as_secs_f64();
    io::write_schedule(&ctx.path("schedule.csv"), &schedule)?;
    println!("wrote {}", ctx.path("schedule.csv").display());

    let k = problem.max_capacity();
    let exact = match check_theorem1(&problem) {
        Ok(c) => json!({ "method": "exact", "gap": c.gap, "bound": c.bound, "holds": c.holds }),
        // Var* ≤ Var(heap), so the guarantee implies this floor on Var*.
        Err(Error::InstanceTooLarge(_)) => json!({
            "method": "a-posteriori",
            "optimum_variance_at_least": (schedule.variance.sqrt() - k).max(0.0).powi(2),
        }),
        Err(e) => return Err(e.into()),
    };
    ctx.write_json(
        "hydro.json",
        &json!({
            "seed": ctx.seed,
            "scenario": args.scenario,
            "ordering": format!("{:?}", args.ordering),
            "periods": problem.periods(),
            "units": problem.units.len(),
            "variance": schedule.variance,
            "demand_variance": rruc_core::hydro::variance(&problem.demands),
            "k": k,
            "bound_check": exact,
            "seconds": seconds,
            "warnings": problem.warnings.iter().chain(&schedule.warnings).collect::<Vec<_>>(),
        }),
    )?;
    println!("variance {:.4} (demand {:.4}), K {:.4}", schedule.variance, rruc_core::hydro::variance(&problem.demands), k);
    Ok(ExitCode::SUCCESS)
}

pub fn sweep_fpm(ctx: &Context, args: SweepArgs) -> anyhow::Result<ExitCode> {
    if args.k.is_empty() {
        bail!(config_error("--k needs at least one value"));
    }
    let mut cases: Vec<(u64, Vec<GeneratorParams>, LoadSeries, SolverConfig)> = Vec::new();
    match &args.scenario {
        Some(p) => {
            let sc = load_scenario(p, None, ctx.threads)?;
            cases.push((sc.scenario.seed, sc.fleet, sc.load, sc.scenario.solver));
        }
        None => {
            let base = SolverConfig {
                sweep_threads: ctx.threads,
                ..Default::default()
            };
            for seed in ctx.seed..ctx.seed + args.seeds {
                let cfg = SynthConfig {
                    load: LoadSpec {
                        periods: args.periods + base.lookahead_periods,
                        ..Default::default()
                    },
                    ..Default::default()
                };
                let s = synthesize(&cfg, seed)?;
                cases.push((seed, s.fleet, s.load, base.clone()));
            }
        }
    }

    let mut csv = String::from("seed,k,total_cost,cost_ratio,mean_solve_ms,mean_relaxed_ms,fallback_periods\n");
    let mut rows = Vec::new();
    for (seed, params, load, base) in &cases {
        let mut reference = None;
        let mut ordered = args.k.clone();
        // The k = 0 run is the normalizer.
        ordered.sort_by_key(|&k| (k != 0, k));
        ordered.dedup();
        for k in ordered {
            let config = SolverConfig { fpm_count: k, ..base.clone() };
            let (result, _) = simulate(params, load, None, &config, args.periods)?;
            if let Some(reason) = &result.aborted {
                eprintln!("seed {seed} k {k}: {reason}");
                return Ok(ExitCode::from(2));
            }
            let n = result.records.len().max(1) as f64;
            let cost = result.summary.total_cost;
            let reference = *reference.get_or_insert(cost);
            let solve = result.summary.total_solve_ms / n;
            let relaxed_ms = result.records.iter().map(|r| r.relaxed_ms).sum::<f64>() / n;
            csv += &format!(
                "{seed},{k},{cost},{},{solve},{relaxed_ms},{}\n",
                cost / reference,
                result.summary.fallback_periods
            );
            println!("seed {seed} k {k}: cost ratio {:.4}, {solve:.3} ms/period", cost / reference);
            rows.push(json!({
                "seed": seed, "k": k, "total_cost": cost, "cost_ratio": cost / reference,
                "mean_solve_ms": solve, "mean_relaxed_ms": relaxed_ms,
                "fallback_periods": result.summary.fallback_periods,
            }));
        }
    }
    std::fs::write(ctx.path("sweep_fpm.csv"), csv)?;
    println!("wrote {}", ctx.path("sweep_fpm.csv").display());
    ctx.write_json(
        "sweep_fpm.json",
        &json!({ "seed": ctx.seed, "seeds": args.seeds, "periods": args.periods, "scenario": args.scenario, "rows": rows }),
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn bench(ctx: &Context, args: BenchArgs) -> anyhow::Result<ExitCode> {
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        bail!(config_error("--sizes must be positive"));
    }
    let mut rows = Vec::new();
    if args.hydro {
        let units = 56;
        for &n in &args.sizes {
            let load = synth_load(&LoadSpec { periods: n, ..Default::default() }, ctx.seed.wrapping_add(100))?;
            let hydro = synth_hydro_fleet(&HydroSpec { units, ..Default::default() }, n, ctx.seed.wrapping_add(200))?;
            let problem = BalanceProblem::new(load.values, hydro)?;
            let seconds = median_seconds(5, || {
                balance(&problem);
            });
            println!("hydro n={n}: {seconds:.6} s");
            rows.push(BenchRow { size: n as f64, seconds });
        }
    } else {
        let base_units = rruc_core::synth::FleetSpec::default().units;
        let config = SolverConfig {
            sweep_threads: ctx.threads,
            ..Default::default()
        };
        for &size in &args.sizes {
            if size % base_units != 0 {
                bail!(config_error(format!("fleet size {size} is not a multiple of {base_units}")));
            }
            let cfg = SynthConfig {
                load: LoadSpec {
                    periods: args.periods + config.lookahead_periods,
                    ..Default::default()
                },
                replicate: size / base_units,
                ..Default::default()
            };
            let s = synthesize(&cfg, ctx.seed)?;
            let (result, _) = simulate(&s.fleet, &s.load, None, &config, args.periods)?;
            if let Some(reason) = &result.aborted {
                eprintln!("size {size}: {reason}");
                return Ok(ExitCode::from(2));
            }
            let seconds = result.summary.total_solve_ms / 1e3 / result.records.len().max(1) as f64;
            println!("units {size}: {seconds:.6} s/period");
            rows.push(BenchRow { size: size as f64, seconds });
        }
    }
    io::write_bench(&ctx.path("bench.csv"), &rows)?;
    println!("wrote {}", ctx.path("bench.csv").display());
    let exponent = if rows.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.size, r.seconds)).unzip();
        Some(scaling_fit(&x, &y)?)
    } else {
        None
    };
    if let Some(e) = exponent {
        println!("scaling exponent {e:.3}");
    }
    ctx.write_json(
        "bench.json",
        &json!({
            "seed": ctx.seed,
            "kind": if args.hydro { "hydro" } else { "commitment" },
            "periods": args.periods,
            "rows": rows,
            "exponent": exponent,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

fn random_balance_problem(rng: &mut impl Rng) -> rruc_core::Result<BalanceProblem> {
    let n = rng.gen_range(1..=12);
    let m = rng.gen_range(1..=4);
    let demands = (0..n).map(|_| rng.gen_range(1.0..=100.0)).collect();
    let units = (0..m)
        .map(|j| HydroUnit {
            id: format!("h{j}"),
            capacity: rng.gen_range(1.0..=20.0),
            period_budget: rng.gen_range(0..=n),
        })
        .collect();
    BalanceProblem::new(demands, units)
}

fn random_dispatch(rng: &mut impl Rng) -> (Vec<DispatchUnit>, f64) {
    let n = rng.gen_range(1..=8);
    let units: Vec<DispatchUnit> = (0..n)
        .map(|_| {
            let lo = rng.gen_range(0.0..50.0);
            DispatchUnit {
                a: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.001..0.1) },
                b: rng.gen_range(0.0..40.0),
                c: rng.gen_range(0.0..100.0),
                lo,
                hi: lo + rng.gen_range(1.0..200.0),
                penalty: 0.0,
            }
        })
        .collect();
    let lo: f64 = units.iter().map(|u| u.lo).sum();
    let hi: f64 = units.iter().map(|u| u.hi).sum();
    (units, rng.gen_range(lo..=hi))
}

/// KKT certificate for min Σ cost s.t. Σ P ≥ D, lo ≤ P ≤ hi.
fn dispatch_certificate(units: &[DispatchUnit], demand: f64, p: &[f64], lambda: f64) -> Option<String> {
    let tol = 1e-6 * (1.0 + lambda.abs());
    let total: f64 = p.iter().sum();
    if total < demand - 1e-6 * (1.0 + demand) {
        return Some(format!("supply {total} below demand {demand}"));
    }
    if lambda > tol && total > demand + 1e-6 * (1.0 + demand) {
        return Some(format!("slack demand row with price {lambda}"));
    }
    for (j, (u, &pj)) in units.iter().zip(p).enumerate() {
        let mc = 2.0 * u.a * pj + u.b;
        let span = 1e-9 * (1.0 + u.hi);
        if pj < u.lo - span || pj > u.hi + span {
            return Some(format!("unit {j} outside its box"));
        }
        let at_lo = pj <= u.lo + span;
        let at_hi = pj >= u.hi - span;
        let ok = (at_lo && mc >= lambda - tol) || (at_hi && mc <= lambda + tol) || (mc - lambda).abs() <= tol;
        // A linear unit strictly inside its box must sit exactly at λ = b.
        if !ok && !(u.a == 0.0 && (u.b - lambda).abs() <= tol) {
            return Some(format!("unit {j}: marginal {mc} vs price {lambda}"));
        }
    }
    None
}

pub fn verify(ctx: &Context, args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let all = !(args.theorem1 || args.theorem2 || args.dispatch);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut report = serde_json::Map::new();
    let mut ok = true;

    if all || args.theorem1 {
        let mut failures = Vec::new();
        let mut worst: f64 = 0.0;
        for i in 0..args.instances {
            let problem = random_balance_problem(&mut rng)?;
            let c = check_theorem1(&problem)?;
            worst = worst.max(if c.bound > 0.0 { c.gap / c.bound } else { 0.0 });
            if !c.holds {
                failures.push(json!({ "instance": i, "gap": c.gap, "bound": c.bound, "problem": problem }));
            }
        }
        let pass = failures.is_empty();
        println!(
            "{} hydro gap bound: {}/{} instances, worst gap/bound {:.3}",
            if pass { "PASS" } else { "FAIL" },
            args.instances - failures.len(),
            args.instances,
            worst
        );
        ok &= pass;
        report.insert("theorem1".into(), json!({ "pass": pass, "instances": args.instances, "worst_ratio": worst, "failures": failures }));
    }

    if all || args.dispatch {
        let mut failures = Vec::new();
        for i in 0..args.instances {
            let (units, demand) = random_dispatch(&mut rng);
            let r = economic_dispatch(&units, demand)?;
            if let Some(why) = dispatch_certificate(&units, demand, &r.p, r.lambda) {
                failures.push(json!({ "instance": i, "reason": why, "units": units, "demand": demand }));
            }
        }
        let pass = failures.is_empty();
        println!(
            "{} dispatch optimality: {}/{} instances",
            if pass { "PASS" } else { "FAIL" },
            args.instances - failures.len(),
            args.instances
        );
        ok &= pass;
        report.insert("dispatch".into(), json!({ "pass": pass, "instances": args.instances, "failures": failures }));
    }

    if all || args.theorem2 {
        let mut times = Vec::new();
        for n in [10_000usize, 20_000, 40_000] {
            let load = synth_load(&LoadSpec { periods: n, ..Default::default() }, ctx.seed.wrapping_add(100))?;
            let hydro = synth_hydro_fleet(&HydroSpec::default(), n, ctx.seed.wrapping_add(200))?;
            let problem = BalanceProblem::new(load.values, hydro)?;
            times.push(median_seconds(7, || {
                balance(&problem);
            }));
        }
        let ratios = [times[1] / times[0], times[2] / times[1]];
        let pass = ratios.iter().all(|&r| r <= 2.5);
        println!(
            "{} hydro runtime doubling: ratios {:.2}, {:.2} (limit 2.5)",
            if pass { "PASS" } else { "FAIL" },
            ratios[0],
            ratios[1]
        );
        ok &= pass;
        report.insert("theorem2".into(), json!({ "pass": pass, "seconds": times, "ratios": ratios }));
    }

    report.insert("seed".into(), json!(ctx.seed));
    ctx.write_json("verify.json", &serde_json::Value::Object(report))?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn analyze(ctx: &Context, args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    if args.bins == 0 {
        bail!(config_error("--bins must be positive"));
    }
    let pairs = io::read_record_pairs(&args.records)?;
    let (demand, cost): (Vec<f64>, Vec<f64>) = pairs.into_iter().filter(|(d, c)| d.is_finite() && c.is_finite()).unzip();
    if demand.is_empty() {
        bail!(config_error("no periods with a marginal cost"));
    }
    let hist = demand_cost_histogram(&demand, &cost, (args.bins, args.bins))?;
    std::fs::write(ctx.path("histogram.csv"), hist.to_csv())?;
    println!("wrote {}", ctx.path("histogram.csv").display());

    let fits: Vec<serde_json::Value> = (1..=4)
        .map(|d| match poly_fit(&demand, &cost, d) {
            Ok(f) => serde_json::to_value(f).unwrap_or_default(),
            Err(e) => json!({ "degree": d, "error": e.to_string() }),
        })
        .collect();
    let r = pearson(&demand, &cost);
    ctx.write_json(
        "fit.json",
        &json!({
            "records": args.records,
            "periods": demand.len(),
            "pearson": r,
            "narrow_band": hist.narrow_band,
            "bins": args.bins,
            "demand_edges": hist.demand_edges,
            "cost_edges": hist.cost_edges,
            "standardization": "z = (demand - mean) / std; raw coefficients back-transformed",
            "fits": fits,
        }),
    )?;
    println!("pearson {r:.4}, narrow band {}", hist.narrow_band);

    if let Some(bench) = &args.bench {
        let rows = io::read_bench(bench)?;
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.size, r.seconds)).unzip();
        let exponent = scaling_fit(&x, &y)?;
        ctx.write_json("scaling.json", &json!({ "bench": bench, "rows": rows, "exponent": exponent }))?;
        println!("scaling exponent {exponent:.3}");
    }
    Ok(ExitCode::SUCCESS)
}
