//! Rolling-horizon commitment: one relax-and-round decision per period,
//! applied to the unit state machines, with realized cost accounting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{Action, Fleet, SolverConfig, UnitMode, UnitState};
use crate::forecast::{ForecastSummary, LoadSeries};
use crate::hydro::{apply_schedule, HydroSchedule};
use crate::relaxed::{self, RampingAggregates};
use crate::rounding::{self, CommitmentDecision};

/// Output of ramping units this period and the capacity of those ramping up.
pub fn ramping_aggregates(fleet: &Fleet) -> RampingAggregates {
    let mut agg = RampingAggregates::default();
    for u in &fleet.units {
        match u.state.mode {
            UnitMode::RampingUp { .. } => {
                agg.s_r += u.state.ramp_output(&u.params);
                agg.s_max_r += u.params.p_max;
                agg.s_min_r += u.params.p_min;
            }
            UnitMode::RampingDown { .. } => agg.s_r += u.state.ramp_output(&u.params),
            _ => {}
        }
    }
    agg
}

/// Initial commitment: fastest-ramping units first until the On capacity
/// covers `d0` plus the largest On unit. Output is split in proportion to
/// p_max within each unit's limits. Units start with their minimum on time
/// already served.
pub fn cold_start(fleet: &mut Fleet, d0: f64) -> Result<()> {
    let total = fleet.total_capacity();
    if total < d0 {
        return Err(Error::InsufficientCapacity {
            required: d0,
            available: total,
        });
    }
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| {
        let (ga, gb) = (&fleet.units[a].params, &fleet.units[b].params);
        gb.ramp_up
            .total_cmp(&ga.ramp_up)
            .then(gb.p_max.total_cmp(&ga.p_max))
            .then(ga.id.cmp(&gb.id))
    });
    let mut chosen = Vec::new();
    let (mut cap, mut largest) = (0.0, 0.0_f64);
    for &i in &order {
        if cap >= d0 + largest {
            break;
        }
        let p = fleet.units[i].params.p_max;
        chosen.push(i);
        cap += p;
        largest = largest.max(p);
    }
    if cap < d0 + largest {
        log::warn!("cold start: fleet cannot hold a reserve over {d0:.1} MW; all units committed");
    }
    for u in &mut fleet.units {
        u.state = UnitState::off();
    }
    let share = if cap > 0.0 { d0 / cap } else { 0.0 };
    for &i in &chosen {
        let g = &fleet.units[i].params;
        let p = (share * g.p_max).clamp(g.p_min, g.p_max);
        fleet.units[i].state = UnitState::on(p, g.min_on_time);
    }
    Ok(())
}

/// One simulated period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub demand: f64,
    pub sigma: f64,
    /// Units under dispatch control (must-run plus stay-on).
    pub committed_count: usize,
    /// Units ramping up after this decision, including new starts.
    pub ramping_up: usize,
    pub supply: f64,
    /// Output of units that were already ramping when the period began.
    pub ramping_supply: f64,
    pub shortfall: f64,
    /// Sweep objective of the chosen commitment.
    pub objective: f64,
    /// Realized cost: dispatch + ramping output + change penalties.
    pub cost: f64,
    /// Highest 2aP + b among dispatched units; NaN when none is dispatched.
    pub marginal_cost: f64,
    pub solve_ms: f64,
    /// Time spent assembling and solving the relaxation.
    pub relaxed_ms: f64,
    pub fallback: bool,
    pub delta_covered: bool,
    pub m_tilde: usize,
    pub m_tilde_max: usize,
    pub k: usize,
    pub relaxed_iterations: usize,
}

/// A commitment change: a start or a shutdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentEvent {
    pub period: usize,
    pub unit: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub periods: usize,
    pub total_cost: f64,
    pub total_solve_ms: f64,
    pub fallback_periods: usize,
    pub shortfall_periods: usize,
    pub uncovered_periods: usize,
    pub starts: usize,
    pub shutdowns: usize,
    pub fpm_count: usize,
    pub hydro: bool,
    pub billing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub config: SolverConfig,
    pub initial_states: Vec<UnitState>,
    pub final_states: Vec<UnitState>,
    pub records: Vec<PeriodRecord>,
    pub events: Vec<CommitmentEvent>,
    pub warnings: Vec<String>,
    /// Set when a step failed and the run stopped early.
    pub aborted: Option<String>,
    pub summary: RunSummary,
}

const BILLING_NOTE: &str = "dispatch cost at realized output; ramping and shutdown output billed at the unit cost curve; commitment-change penalty per start or shutdown";

/// Decide and apply the commitment for period `t` of `series`.
pub fn step(
    fleet: &mut Fleet,
    series: &LoadSeries,
    t: usize,
    config: &SolverConfig,
) -> Result<(CommitmentDecision, PeriodRecord, Vec<String>)> {
    let started = Instant::now();
    for u in &mut fleet.units {
        u.state.evict_starts(t, config.start_window_periods);
    }
    let classes = crate::fleet::classify_fleet(fleet, t);
    let agg = ramping_aggregates(fleet);
    let forecast = ForecastSummary::at(series, t, config)?;
    let mut warnings = Vec::new();

    let mut bounds_info = (0, 0);
    let mut iterations = 0;
    let mut relaxed_ms = 0.0;
    let planned = (|| -> Result<CommitmentDecision> {
        let relax_start = Instant::now();
        let solved = relaxed::build(fleet, &classes, &forecast, agg, config).and_then(|p| {
            let sol = p.solve(config)?;
            Ok((p, sol))
        });
        relaxed_ms = relax_start.elapsed().as_secs_f64() * 1e3;
        let (problem, sol) = solved?;
        iterations = sol.diagnostics.outer_iterations;
        let ordering = rounding::order_units(&rounding::candidates(fleet, &problem, &sol));
        let bounds = rounding::commitment_bounds(fleet, &classes, ordering, &forecast, &agg, config)?;
        bounds_info = (bounds.m_tilde, bounds.m_tilde_max);
        warnings.extend(bounds.warnings.iter().map(|w| format!("period {t}: {w}")));
        rounding::sweep(fleet, &classes, &bounds, &forecast, &agg, config)
    })();
    let decision = match planned {
        Ok(d) => d,
        Err(e) if e.is_infeasibility() || matches!(e, Error::NoPrefixSatisfies { .. } | Error::MaxIterations { .. }) => {
            warnings.push(format!("period {t}: fallback commitment ({e})"));
            rounding::fallback_commitment(fleet, &classes, &forecast, &agg, config)
        }
        Err(e) => return Err(e),
    };

    for (i, u) in fleet.units.iter_mut().enumerate() {
        match decision.actions[i] {
            Some(action) => u.state.apply(&u.params, action, decision.output[i], t)?,
            None => u.state.advance_ramp(&u.params),
        }
    }
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    let marginal = crate::analysis::marginal_cost(fleet, &decision).unwrap_or(f64::NAN);

    let record = PeriodRecord {
        period: t,
        demand: forecast.d_now,
        sigma: forecast.sigma,
        committed_count: decision.committed,
        ramping_up: fleet
            .units
            .iter()
            .filter(|u| matches!(u.state.mode, UnitMode::RampingUp { .. }))
            .count(),
        supply: decision.supply,
        ramping_supply: agg.s_r,
        shortfall: decision.shortfall,
        objective: decision.objective,
        cost: decision.dispatch_cost + decision.ramp_cost + decision.penalty_cost,
        marginal_cost: marginal,
        solve_ms: elapsed,
        relaxed_ms,
        fallback: decision.fallback,
        delta_covered: decision.coverage.iter().all(|c| c.covered),
        m_tilde: bounds_info.0,
        m_tilde_max: bounds_info.1,
        k: decision.k,
        relaxed_iterations: iterations,
    };
    Ok((decision, record, warnings))
}

/// Simulate `horizon` periods. The fleet should already hold its initial
/// state (see [`cold_start`]). With a hydro schedule the thermal fleet serves
/// the residual demand.
pub fn run(
    series: &LoadSeries,
    fleet: &mut Fleet,
    hydro: Option<&HydroSchedule>,
    config: &SolverConfig,
    horizon: usize,
) -> Result<SimulationRun> {
    config.validate()?;
    let residual;
    let series = match hydro {
        Some(s) => {
            residual = apply_schedule(s, series)?;
            &residual
        }
        None => series,
    };
    if horizon > 0 && horizon - 1 + config.lookahead_periods > series.len() {
        return Err(Error::WindowOutOfRange {
            start: horizon - 1,
            end: horizon - 1 + config.lookahead_periods,
            len: series.len(),
        });
    }
    let initial_states: Vec<UnitState> = fleet.units.iter().map(|u| u.state.clone()).collect();
    let mut records = Vec::with_capacity(horizon);
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    let mut aborted = None;
    for t in 0..horizon {
        match step(fleet, series, t, config) {
            Ok((decision, record, w)) => {
                for (unit, a) in decision.actions.iter().enumerate() {
                    if let Some(action) = a.filter(|a| a.is_change()) {
                        events.push(CommitmentEvent { period: t, unit, action });
                    }
                }
                records.push(record);
                warnings.extend(w);
            }
            Err(e) => {
                aborted = Some(format!("period {t}: {e}"));
                break;
            }
        }
    }
    let summary = RunSummary {
        periods: records.len(),
        total_cost: records.iter().map(|r| r.cost).sum(),
        total_solve_ms: records.iter().map(|r| r.solve_ms).sum(),
        fallback_periods: records.iter().filter(|r| r.fallback).count(),
        shortfall_periods: records.iter().filter(|r| r.shortfall > 1e-6).count(),
        uncovered_periods: records.iter().filter(|r| !r.delta_covered).count(),
        starts: events.iter().filter(|e| e.action == Action::StartRamp).count(),
        shutdowns: events.iter().filter(|e| e.action == Action::TurnOff).count(),
        fpm_count: config.fpm_count,
        hydro: hydro.is_some(),
        billing: BILLING_NOTE.into(),
    };
    Ok(SimulationRun {
        config: config.clone(),
        initial_states,
        final_states: fleet.units.iter().map(|u| u.state.clone()).collect(),
        records,
        events,
        warnings,
        aborted,
        summary,
    })
}

/// Replays the event log against the unit parameters and reports every
/// minimum-on-time or start-limit violation and every period whose supply
/// falls short of demand without a fallback explaining it.
pub fn audit(run: &SimulationRun, fleet: &Fleet) -> Vec<String> {
    let mut issues = Vec::new();
    let window = run.config.start_window_periods;
    // Period from which each unit counts as On; None while not On.
    let mut on_since: Vec<Option<i64>> = run
        .initial_states
        .iter()
        .map(|s| match s.mode {
            UnitMode::On => Some(-(s.on_duration as i64)),
            UnitMode::RampingUp { periods_remaining } => Some(periods_remaining as i64),
            _ => None,
        })
        .collect();
    let mut starts: Vec<Vec<usize>> = run
        .initial_states
        .iter()
        .map(|s| s.start_times.iter().copied().collect())
        .collect();
    for e in &run.events {
        let g = &fleet.units[e.unit].params;
        match e.action {
            Action::TurnOff => {
                match on_since[e.unit] {
                    Some(since) if e.period as i64 - since >= g.min_on_time as i64 => {}
                    Some(since) => issues.push(format!(
                        "unit {} turned off at period {} after {} periods on (minimum {})",
                        g.id,
                        e.period,
                        e.period as i64 - since,
                        g.min_on_time
                    )),
                    None => issues.push(format!("unit {} turned off at period {} while not on", g.id, e.period)),
                }
                on_since[e.unit] = None;
            }
            Action::StartRamp => {
                let recent = starts[e.unit]
                    .iter()
                    .filter(|&&s| s + window > e.period)
                    .count();
                if recent >= g.max_daily_starts as usize {
                    issues.push(format!(
                        "unit {} exceeded {} starts in the window ending at period {}",
                        g.id, g.max_daily_starts, e.period
                    ));
                }
                starts[e.unit].push(e.period);
                on_since[e.unit] = Some((e.period + g.ramp_up_duration as usize + 1) as i64);
            }
            _ => {}
        }
    }
    for r in &run.records {
        if r.supply < r.demand - 1e-6 && !r.fallback {
            issues.push(format!(
                "period {}: supply {:.3} below demand {:.3}",
                r.period, r.supply, r.demand
            ));
        }
    }
    issues
}
