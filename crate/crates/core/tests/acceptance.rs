//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rruc_core::analysis::{pearson, poly_fit, scaling_fit};
use rruc_core::dispatch::economic_dispatch;
use rruc_core::fleet::{Fleet, SolverConfig};
use rruc_core::hydro::{balance, BalanceProblem, HydroSchedule};
use rruc_core::sim::{audit, cold_start, run, SimulationRun};
use rruc_core::synth::{
    replicate_hydro, synth_hydro_fleet, synth_load, synthesize, HydroSpec, LoadSpec, SynthConfig, Synthetic,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const DAY: usize = 288;

/// Feasibility and coverage tallies over every simulation in the suite.
#[derive(Default)]
struct Ledger {
    runs: usize,
    periods: usize,
    fallbacks: usize,
    uncovered: usize,
    audit_issues: Vec<String>,
    aborted: Vec<String>,
}

impl Ledger {
    fn simulate(
        &mut self,
        s: &Synthetic,
        hydro: Option<&HydroSchedule>,
        config: &SolverConfig,
        periods: usize,
    ) -> SimulationRun {
        let mut fleet = Fleet::from_params(s.fleet.clone()).expect("valid fleet");
        let d0 = hydro.map_or(s.load.values[0], |h| h.residual[0]);
        cold_start(&mut fleet, d0).expect("cold start");
        let r = run(&s.load, &mut fleet, hydro, config, periods).expect("run");
        self.runs += 1;
        self.periods += r.records.len();
        self.fallbacks += r.summary.fallback_periods;
        self.uncovered += r.records.iter().filter(|x| !x.delta_covered).count();
        self.audit_issues.extend(audit(&r, &fleet));
        if let Some(a) = &r.aborted {
            self.aborted.push(a.clone());
        }
        r
    }
}

fn scenario(seed: u64, periods: usize, replicate: usize) -> Synthetic {
    let cfg = SynthConfig {
        load: LoadSpec {
            periods: periods + SolverConfig::default().lookahead_periods,
            ..Default::default()
        },
        replicate,
        ..Default::default()
    };
    synthesize(&cfg, seed).expect("synthetic scenario")
}

fn with_k(k: usize) -> SolverConfig {
    SolverConfig {
        fpm_count: k,
        ..Default::default()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
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
    t[reps / 2]
}

type Outcome = (bool, String);

fn hydro_gap_bound() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 250;
    let (mut violations, mut worst) = (0, 0.0_f64);
    for _ in 0..instances {
        let (d, units) = common::random_hydro(&mut rng, 4, 12);
        let opt = common::hydro_optimum(&d, &units);
        let alg = balance(&BalanceProblem::new(d, units.clone()).expect("valid")).variance;
        let k = units.iter().map(|u| u.capacity).fold(0.0, f64::max);
        let gap = alg - opt;
        let bound = k * k + 2.0 * k * opt.sqrt();
        if gap < -1e-9 || gap > bound + 1e-9 {
            violations += 1;
        }
        if bound > 0.0 {
            worst = worst.max(gap / bound);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    (
        violations == 0 && secs < 60.0,
        format!("{instances} instances, {violations} violations, worst gap/bound {worst:.3}, {secs:.1} s (limit 60 s)"),
    )
}

fn dispatch_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut mismatches, mut worst) = (0, 0.0_f64);
    for _ in 0..500 {
        let (units, demand) = common::random_dispatch(&mut rng, 10);
        let got = economic_dispatch(&units, demand).expect("feasible").running_cost;
        let (want, _) = common::dispatch_oracle(&units, demand);
        let rel = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-6 {
            mismatches += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    (
        mismatches == 0 && secs < 60.0,
        format!("500 instances, {mismatches} beyond 1e-6, worst relative error {worst:.1e}, {secs:.1} s (limit 60 s)"),
    )
}

fn fpm_cost_trend(ledger: &mut Ledger) -> Outcome {
    let started = Instant::now();
    let ks = [0usize, 1, 3, 4];
    let mut totals = vec![Vec::new(); ks.len()];
    for seed in SEEDS {
        let s = scenario(seed, DAY, 1);
        for (i, &k) in ks.iter().enumerate() {
            totals[i].push(ledger.simulate(&s, None, &with_k(k), DAY).summary.total_cost);
        }
    }
    let c: Vec<f64> = totals.iter().map(|t| mean(t)).collect();
    let secs = started.elapsed().as_secs_f64();
    let gain = |a: f64, b: f64| 100.0 * (a - b) / a;
    let pass = c[0] > c[1] && c[1] > c[2] && gain(c[2], c[3]) < 2.0 && secs < 600.0;
    (
        pass,
        format!(
            "mean cost 0/1/3/4-FPM = {:.0}/{:.0}/{:.0}/{:.0}; 1-FPM {:.2}% (advisory >= 3%), 3-FPM {:.2}% (advisory >= 5%), 4 over 3 {:.2}% (< 2%), {secs:.0} s",
            c[0],
            c[1],
            c[2],
            c[3],
            gain(c[0], c[1]),
            gain(c[0], c[2]),
            gain(c[2], c[3])
        ),
    )
}

fn fpm_runtime_linearity(ledger: &mut Ledger) -> Outcome {
    let s = scenario(0, DAY, 1);
    // Best of three runs per k to damp scheduler noise.
    let t: Vec<f64> = (1..=5)
        .map(|k| {
            (0..3)
                .map(|_| {
                    let r = ledger.simulate(&s, None, &with_k(k), DAY);
                    mean(&r.records.iter().map(|x| x.relaxed_ms).collect::<Vec<_>>())
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let ratios: Vec<f64> = t.windows(2).map(|w| w[1] / w[0]).collect();
    let avg = mean(&ratios);
    (
        avg <= 1.5,
        format!(
            "relaxed ms/period k=1..5: {}; mean step ratio {avg:.3} (limit 1.5)",
            t.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn rruc_scaling(ledger: &mut Ledger) -> Outcome {
    let started = Instant::now();
    let sizes = [42usize, 84, 168, 336];
    let times: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let s = scenario(0, DAY, n / 42);
            ledger.simulate(&s, None, &SolverConfig::default(), DAY).summary.total_solve_ms / 1e3
        })
        .collect();
    let x: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let e = scaling_fit(&x, &times).expect("positive timings");
    let secs = started.elapsed().as_secs_f64();
    (
        e <= 1.8 && secs < 1800.0,
        format!(
            "total solve s at 42/84/168/336 units: {}; exponent {e:.3} (limit 1.8), {secs:.0} s",
            times.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
        ),
    )
}

fn hydro_scaling() -> Outcome {
    let problem = |n: usize, units: Vec<rruc_core::fleet::HydroUnit>, seed: u64| {
        let load = synth_load(&LoadSpec { periods: n, ..Default::default() }, seed).expect("load");
        BalanceProblem::new(load.values, units).expect("valid")
    };
    let times: Vec<f64> = [10_000usize, 20_000, 40_000]
        .iter()
        .map(|&n| {
            let p = problem(n, synth_hydro_fleet(&HydroSpec::default(), n, 9).expect("hydro"), 8);
            median_seconds(7, || {
                balance(&p);
            })
        })
        .collect();
    let ratios = [times[1] / times[0], times[2] / times[1]];

    let year = 105_120;
    let base = synth_hydro_fleet(&HydroSpec::default(), year, 9).expect("hydro");
    let units = replicate_hydro(&base, 32, year, 365.0, 10);
    let big = problem(year, units, 8);
    let started = Instant::now();
    let schedule = balance(&big);
    let big_secs = started.elapsed().as_secs_f64();
    let completed = schedule.placed.len() == year && big.units.len() == 1792;
    (
        ratios.iter().all(|&r| r <= 2.5) && completed,
        format!(
            "doubling ratios {:.2}, {:.2} (limit 2.5); 1792 units x {year} periods {} in {big_secs:.1} s (reference 20 s, advisory)",
            ratios[0],
            ratios[1],
            if completed { "completed" } else { "did not complete" }
        ),
    )
}

fn hydro_value(ledger: &mut Ledger) -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for seed in SEEDS {
        let s = scenario(seed, DAY, 1);
        let share = s.hydro.iter().map(|h| h.capacity).sum::<f64>() / s.fleet.iter().map(|g| g.p_max).sum::<f64>();
        let schedule = balance(&BalanceProblem::new(s.load.values.clone(), s.hydro.clone()).expect("valid"));
        let config = SolverConfig::default();
        let without = ledger.simulate(&s, None, &config, DAY).summary.total_cost;
        let with = ledger.simulate(&s, Some(&schedule), &config, DAY).summary.total_cost;
        all &= with < without;
        lines.push(format!("seed {seed}: {:.2}% ({:.2}% capacity)", 100.0 * (without - with) / without, 100.0 * share));
    }
    (all, format!("cost reduction with hydro: {} (advisory 1.5%)", lines.join(", ")))
}

fn correlation(ledger: &mut Ledger) -> Outcome {
    let week = 7 * DAY;
    let s = scenario(0, week, 1);
    let r = ledger.simulate(&s, None, &SolverConfig::default(), week);
    let (d, c): (Vec<f64>, Vec<f64>) = r
        .records
        .iter()
        .filter(|x| x.marginal_cost.is_finite())
        .map(|x| (x.demand, x.marginal_cost))
        .unzip();
    let rho = pearson(&d, &c);
    let fit = poly_fit(&d, &c, 3).expect("cubic fit");
    (
        rho > 0.8 && fit.linear_dominant && fit.standardized[1] > 0.0,
        format!(
            "{} of {week} periods priced; pearson {rho:.3} (limit 0.8); cubic standardized terms {:?}, linear dominant {}",
            d.len(),
            fit.standardized[1..].iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
            fit.linear_dominant
        ),
    )
}

fn feasibility(ledger: &Ledger) -> Outcome {
    let rate = ledger.fallbacks as f64 / ledger.periods.max(1) as f64;
    let ok = ledger.audit_issues.is_empty() && ledger.aborted.is_empty() && rate < 0.01;
    let mut detail = format!(
        "{} runs, {} periods: {} audit violations, {} aborted runs, fallback rate {:.3}% (limit 1%)",
        ledger.runs,
        ledger.periods,
        ledger.audit_issues.len(),
        ledger.aborted.len(),
        100.0 * rate
    );
    if let Some(first) = ledger.audit_issues.first().or(ledger.aborted.first()) {
        detail += &format!("; first: {first}");
    }
    (ok, detail)
}

fn coverage(ledger: &Ledger) -> Outcome {
    (
        ledger.uncovered == 0 && ledger.periods > 0,
        format!("{} of {} periods with an uncovered future demand point", ledger.uncovered, ledger.periods),
    )
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut check = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let (pass, detail) = f();
        println!(
            "criterion {n:>2} {name}: {} | {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        results.push((n, name, (pass, detail)));
    };
    check(1, "hydro optimality gap bound", &mut hydro_gap_bound);
    check(2, "dispatch oracle equivalence", &mut dispatch_oracle);
    check(3, "future-demand cost trend", &mut || fpm_cost_trend(&mut ledger));
    check(4, "future-demand runtime linearity", &mut || fpm_runtime_linearity(&mut ledger));
    check(5, "commitment scaling exponent", &mut || rruc_scaling(&mut ledger));
    check(6, "hydro runtime scaling", &mut hydro_scaling);
    check(7, "hydro lowers cost", &mut || hydro_value(&mut ledger));
    check(10, "demand / marginal-cost correlation", &mut || correlation(&mut ledger));
    check(8, "feasibility audit", &mut || feasibility(&ledger));
    check(9, "future-demand coverage", &mut || coverage(&ledger));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
