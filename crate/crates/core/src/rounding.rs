//! Rounding of the relaxed commitment: order discretionary units, bound the
//! number of units to commit from both sides, then sweep economic dispatch
//! over every admissible prefix and keep the cheapest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{economic_dispatch, DispatchUnit};
use crate::error::{Error, Result};
use crate::fleet::{Action, Classification, Fleet, SolverConfig, UnitMode};
use crate::forecast::ForecastSummary;
use crate::relaxed::{RampingAggregates, RelaxedProblem, RelaxedSolution};

/// Sort key material for one discretionary unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCandidate {
    pub unit: usize,
    pub id: String,
    pub is_on: bool,
    /// y for On units, z for Off units.
    pub weight: f64,
    /// 2a·P_typ + b.
    pub marginal_at_typical: f64,
}

/// Discretionary units from a relaxed solution, in problem order.
pub fn candidates(fleet: &Fleet, problem: &RelaxedProblem, sol: &RelaxedSolution) -> Vec<OrderCandidate> {
    problem
        .units
        .iter()
        .enumerate()
        .filter(|(_, u)| u.role.is_choice())
        .map(|(i, u)| {
            let g = &fleet.units[u.unit].params;
            OrderCandidate {
                unit: u.unit,
                id: u.id.clone(),
                is_on: fleet.units[u.unit].state.mode == UnitMode::On,
                weight: sol.point.weight[i],
                marginal_at_typical: g.marginal_cost(g.typical_production()),
            }
        })
        .collect()
}

/// On units by descending y, then Off units by descending z. Weights are
/// compared on a 1e-8 grid so solver noise does not break ties; ties go to
/// the cheaper unit at typical output, then the smaller id.
pub fn order_units(cands: &[OrderCandidate]) -> Vec<usize> {
    let grid = |w: f64| (w * 1e8).round() as i64;
    let mut sorted: Vec<&OrderCandidate> = cands.iter().collect();
    sorted.sort_by(|a, b| {
        b.is_on
            .cmp(&a.is_on)
            .then(grid(b.weight).cmp(&grid(a.weight)))
            .then(a.marginal_at_typical.total_cmp(&b.marginal_at_typical))
            .then(a.id.cmp(&b.id))
    });
    sorted.into_iter().map(|c| c.unit).collect()
}

/// Smallest prefix k with Σ_m p_max + Σ_{≤k} p_max ≥ requirement + R_k, where
/// R_k is the largest p_max among must-run units and the prefix.
///
/// Σ − max is non-decreasing in k, so the predicate is monotone and the
/// search is a binary search over prefix sums.
pub fn find_min_fleet(ordered_p_max: &[f64], must_run_p_max: &[f64], requirement: f64) -> Result<usize> {
    let base: f64 = must_run_p_max.iter().sum();
    let base_max = must_run_p_max.iter().copied().fold(0.0, f64::max);
    let mut sums = Vec::with_capacity(ordered_p_max.len() + 1);
    let (mut s, mut r) = (base, base_max);
    sums.push(s - r);
    for &p in ordered_p_max {
        s += p;
        r = r.max(p);
        sums.push(s - r);
    }
    let k = sums.partition_point(|&margin| margin < requirement);
    if k == sums.len() {
        return Err(Error::NoPrefixSatisfies {
            required: requirement + r,
        });
    }
    Ok(k)
}

/// Largest prefix k with Σ_m p_min + Σ_{≤k} p_min ≤ budget. Returns 0 and a
/// warning when even the must-run units exceed the budget.
pub fn find_max_fleet(ordered_p_min: &[f64], must_run_p_min: &[f64], budget: f64) -> (usize, Option<String>) {
    let mut s: f64 = must_run_p_min.iter().sum();
    if s > budget {
        return (
            0,
            Some(format!(
                "must-run minimum output {s:.3} MW exceeds budget {budget:.3} MW"
            )),
        );
    }
    let mut k = 0;
    for &p in ordered_p_min {
        s += p;
        if s > budget {
            break;
        }
        k += 1;
    }
    (k, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentBounds {
    /// Discretionary fleet indices in commitment preference order.
    pub ordering: Vec<usize>,
    pub m_tilde: usize,
    pub m_tilde_max: usize,
    /// Reserve at m_tilde: largest p_max among must-run and included units.
    pub reserve: f64,
    pub warnings: Vec<String>,
}

impl CommitmentBounds {
    pub fn is_degenerate(&self) -> bool {
        self.m_tilde_max <= self.m_tilde
    }
}

/// Prefix bounds [m̃, m̃_max] for an ordering.
pub fn commitment_bounds(
    fleet: &Fleet,
    classes: &Classification,
    ordering: Vec<usize>,
    forecast: &ForecastSummary,
    agg: &RampingAggregates,
    config: &SolverConfig,
) -> Result<CommitmentBounds> {
    let p_max: Vec<f64> = ordering.iter().map(|&i| fleet.units[i].params.p_max).collect();
    let p_min: Vec<f64> = ordering.iter().map(|&i| fleet.units[i].params.p_min).collect();
    let m_max: Vec<f64> = classes.must_run.iter().map(|&i| fleet.units[i].params.p_max).collect();
    let m_min: Vec<f64> = classes.must_run.iter().map(|&i| fleet.units[i].params.p_min).collect();
    let requirement = forecast.d_max72 + config.sigma_multiplier_max * forecast.sigma - agg.s_max_r;
    let budget = forecast.d_min72 - config.sigma_multiplier_min * forecast.sigma - agg.s_min_r;

    let m_tilde = find_min_fleet(&p_max, &m_max, requirement)?;
    let (mut m_tilde_max, warn) = find_max_fleet(&p_min, &m_min, budget);
    let mut warnings: Vec<String> = warn.into_iter().collect();
    if m_tilde_max < m_tilde {
        warnings.push(format!(
            "maximum fleet {m_tilde_max} below minimum fleet {m_tilde}; using {m_tilde}"
        ));
        m_tilde_max = m_tilde;
    }
    let reserve = m_max
        .iter()
        .chain(&p_max[..m_tilde])
        .copied()
        .fold(0.0, f64::max);
    Ok(CommitmentBounds {
        ordering,
        m_tilde,
        m_tilde_max,
        reserve,
        warnings,
    })
}

/// Capacity span of the committed and ramping-up units against one future demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaCoverage {
    pub demand: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentDecision {
    /// Action per fleet unit; `None` for ramping units.
    pub actions: Vec<Option<Action>>,
    /// Output per fleet unit this period, including ramping and shutdown output.
    pub output: Vec<f64>,
    /// Number of discretionary units committed (prefix length).
    pub k: usize,
    /// Units producing under dispatch control (must-run plus stay-on).
    pub committed: usize,
    /// Dispatch cost plus ramp-output cost plus change penalties.
    pub objective: f64,
    pub dispatch_cost: f64,
    pub ramp_cost: f64,
    pub penalty_cost: f64,
    pub start_bias: f64,
    pub lambda: f64,
    /// Total supply this period including ramping units.
    pub supply: f64,
    /// max(0, D − supply).
    pub shortfall: f64,
    pub coverage: Vec<DeltaCoverage>,
    pub fallback: bool,
    pub degenerate_range: bool,
}

/// Cost of a ramping or shutting-down unit at its profile output.
fn profile_cost(g: &crate::fleet::GeneratorParams, p: f64) -> f64 {
    if p > 0.0 {
        g.cost(p)
    } else {
        0.0
    }
}

struct Evaluation {
    k: usize,
    objective: f64,
    decision: CommitmentDecision,
}

/// Evaluate one commitment choice: `commit[i]` says whether discretionary
/// unit i ends the period committed (stay on / start).
fn evaluate(
    fleet: &Fleet,
    classes: &Classification,
    commit: &dyn Fn(usize) -> bool,
    forecast: &ForecastSummary,
    agg: &RampingAggregates,
    config: &SolverConfig,
) -> Result<CommitmentDecision> {
    let n = fleet.len();
    let mut actions = vec![None; n];
    let mut output = vec![0.0; n];
    let mut ramp_cost = 0.0;
    let mut penalty_cost = 0.0;
    let mut start_bias = 0.0;
    let mut dispatch_idx = Vec::new();
    let mut shutdown_supply = 0.0;
    let mut lower = agg.s_min_r;
    let mut upper = agg.s_max_r;

    for &i in &classes.must_run {
        actions[i] = Some(Action::StayOn);
        dispatch_idx.push(i);
        lower += fleet.units[i].params.p_min;
        upper += fleet.units[i].params.p_max;
    }
    for &i in &classes.discretionary {
        let u = &fleet.units[i];
        let g = &u.params;
        let on = u.state.mode == UnitMode::On;
        let keep = commit(i);
        let action = match (on, keep) {
            (true, true) => Action::StayOn,
            (true, false) => Action::TurnOff,
            (false, true) => Action::StartRamp,
            (false, false) => Action::StayOff,
        };
        actions[i] = Some(action);
        if keep {
            lower += g.p_min;
            upper += g.p_max;
        }
        match action {
            Action::StayOn => dispatch_idx.push(i),
            Action::TurnOff => {
                let p = g.shutdown_residual(u.state.p_prev);
                output[i] = p;
                shutdown_supply += p;
                ramp_cost += profile_cost(g, p);
                penalty_cost += g.commit_penalty;
            }
            Action::StartRamp => {
                penalty_cost += g.commit_penalty;
                start_bias += config.beta * g.efficiency_weight();
            }
            Action::StayOff => {}
        }
    }
    let mut ramp_supply = 0.0;
    for &i in &classes.cannot_start {
        let u = &fleet.units[i];
        if u.state.mode.is_ramping() {
            let p = u.state.ramp_output(&u.params);
            output[i] = p;
            ramp_supply += p;
            ramp_cost += profile_cost(&u.params, p);
        } else {
            actions[i] = Some(Action::StayOff);
        }
    }

    let units: Vec<DispatchUnit> = dispatch_idx
        .iter()
        .map(|&i| {
            let u = &fleet.units[i];
            let (lo, hi) = u.params.dispatch_box(u.state.p_prev);
            DispatchUnit {
                a: u.params.a,
                b: u.params.b,
                c: u.params.c,
                lo,
                hi,
                penalty: 0.0,
            }
        })
        .collect();
    let need = forecast.d_now - agg.s_r - shutdown_supply;
    let ed = economic_dispatch(&units, need)?;
    let mut supply = shutdown_supply + ramp_supply;
    for (k, &i) in dispatch_idx.iter().enumerate() {
        output[i] = ed.p[k];
        supply += ed.p[k];
    }
    let coverage = forecast
        .d_delta
        .iter()
        .map(|&d| DeltaCoverage {
            demand: d,
            lower,
            upper,
            covered: lower <= d + 1e-9 * d.abs().max(1.0) && d <= upper + 1e-9 * d.abs().max(1.0),
        })
        .collect();
    Ok(CommitmentDecision {
        actions,
        output,
        k: 0,
        committed: dispatch_idx.len(),
        objective: ed.running_cost + ramp_cost + penalty_cost + start_bias,
        dispatch_cost: ed.running_cost,
        ramp_cost,
        penalty_cost,
        start_bias,
        lambda: ed.lambda,
        supply,
        shortfall: (forecast.d_now - supply).max(0.0),
        coverage,
        fallback: false,
        degenerate_range: false,
    })
}

/// Economic-dispatch sweep over k ∈ [m̃, m̃_max]; ties go to the smallest k.
pub fn sweep(
    fleet: &Fleet,
    classes: &Classification,
    bounds: &CommitmentBounds,
    forecast: &ForecastSummary,
    agg: &RampingAggregates,
    config: &SolverConfig,
) -> Result<CommitmentDecision> {
    let m_cap: f64 = classes.must_run.iter().map(|&i| fleet.units[i].params.p_max).sum();
    let m_min: f64 = classes.must_run.iter().map(|&i| fleet.units[i].params.p_min).sum();
    let requirement = forecast.d_max72 + config.sigma_multiplier_max * forecast.sigma - agg.s_max_r;
    let budget = forecast.d_min72 - config.sigma_multiplier_min * forecast.sigma - agg.s_min_r;
    let degenerate = bounds.is_degenerate();

    let position: std::collections::HashMap<usize, usize> =
        bounds.ordering.iter().enumerate().map(|(p, &u)| (u, p)).collect();

    let eval = |k: usize| -> Option<Evaluation> {
        let prefix = &bounds.ordering[..k];
        let cap = m_cap + prefix.iter().map(|&i| fleet.units[i].params.p_max).sum::<f64>();
        let min_out = m_min + prefix.iter().map(|&i| fleet.units[i].params.p_min).sum::<f64>();
        if cap + 1e-9 < requirement {
            return None;
        }
        if min_out > budget + 1e-9 && !degenerate {
            return None;
        }
        let commit = |i: usize| position.get(&i).is_some_and(|&p| p < k);
        let mut decision = evaluate(fleet, classes, &commit, forecast, agg, config).ok()?;
        decision.k = k;
        decision.degenerate_range = degenerate;
        Some(Evaluation {
            k,
            objective: decision.objective,
            decision,
        })
    };

    let hi = bounds.m_tilde_max.min(bounds.ordering.len());
    let ks: Vec<usize> = (bounds.m_tilde..=hi).collect();
    let evals: Vec<Option<Evaluation>> = if config.sweep_threads > 1 && ks.len() > 1 {
        ks.par_iter().map(|&k| eval(k)).collect()
    } else {
        ks.iter().map(|&k| eval(k)).collect()
    };
    evals
        .into_iter()
        .flatten()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.k.cmp(&b.k)))
        .map(|e| e.decision)
        .ok_or_else(|| Error::Infeasible("no fleet size in the sweep range is feasible".into()))
}

/// Commitment used when the relaxation or sweep fails: keep every On unit,
/// start startable units cheapest-first at typical output until the reserve
/// requirement holds, then dispatch. Any unmet demand is reported as shortfall.
pub fn fallback_commitment(
    fleet: &Fleet,
    classes: &Classification,
    forecast: &ForecastSummary,
    agg: &RampingAggregates,
    config: &SolverConfig,
) -> CommitmentDecision {
    let requirement = forecast.d_max72 + config.sigma_multiplier_max * forecast.sigma - agg.s_max_r;
    let mut committed: Vec<usize> = classes.must_run.clone();
    let mut starts = Vec::new();
    let mut off: Vec<usize> = Vec::new();
    for &i in &classes.discretionary {
        if fleet.units[i].state.mode == UnitMode::On {
            committed.push(i);
        } else {
            off.push(i);
        }
    }
    off.sort_by(|&a, &b| {
        let ga = &fleet.units[a].params;
        let gb = &fleet.units[b].params;
        ga.marginal_cost(ga.typical_production())
            .total_cmp(&gb.marginal_cost(gb.typical_production()))
            .then(ga.id.cmp(&gb.id))
    });
    let satisfied = |set: &[usize], extra: &[usize]| {
        let caps = set.iter().chain(extra).map(|&i| fleet.units[i].params.p_max);
        let (sum, max) = caps.fold((0.0, 0.0_f64), |(s, m), p| (s + p, m.max(p)));
        sum - max >= requirement
    };
    for &i in &off {
        if satisfied(&committed, &starts) {
            break;
        }
        starts.push(i);
    }
    let commit = |i: usize| {
        fleet.units[i].state.mode == UnitMode::On || starts.contains(&i)
    };
    let mut decision = match evaluate(fleet, classes, &commit, forecast, agg, config) {
        Ok(d) => d,
        Err(_) => {
            // Not enough on-line capacity: run everything dispatchable at its ceiling.
            let n = fleet.len();
            let mut actions = vec![None; n];
            let mut output = vec![0.0; n];
            let mut dispatch_cost = 0.0;
            let mut ramp_cost = 0.0;
            let mut penalty_cost = 0.0;
            let mut supply = 0.0;
            for (i, u) in fleet.units.iter().enumerate() {
                let g = &u.params;
                match u.state.mode {
                    UnitMode::On => {
                        let (_, hi) = g.dispatch_box(u.state.p_prev);
                        actions[i] = Some(Action::StayOn);
                        output[i] = hi;
                        dispatch_cost += g.cost(hi);
                    }
                    UnitMode::Off => {
                        if starts.contains(&i) {
                            actions[i] = Some(Action::StartRamp);
                            penalty_cost += g.commit_penalty;
                        } else {
                            actions[i] = Some(Action::StayOff);
                        }
                    }
                    _ => {
                        output[i] = u.state.ramp_output(g);
                        ramp_cost += profile_cost(g, output[i]);
                    }
                }
                supply += output[i];
            }
            CommitmentDecision {
                actions,
                output,
                k: 0,
                committed: classes.must_run.len(),
                objective: dispatch_cost + ramp_cost + penalty_cost,
                dispatch_cost,
                ramp_cost,
                penalty_cost,
                start_bias: 0.0,
                lambda: f64::NAN,
                supply,
                shortfall: (forecast.d_now - supply).max(0.0),
                coverage: Vec::new(),
                fallback: true,
                degenerate_range: false,
            }
        }
    };
    decision.k = committed.len() - classes.must_run.len() + starts.len();
    decision.fallback = true;
    decision
}
