//! Continuous relaxation of the single-period commitment problem with
//! future-demand terms.
//!
//! Binary stay-on (u) and start (v) decisions become weights y, z ∈ [0, 1].
//! The model is bilinear in (weights, outputs), so it is solved by
//! alternating exact block minimizations:
//!
//! * outputs P for the current period and P_δ for every representative
//!   future demand, each a separable convex QP with one coupling row, solved
//!   by incremental-cost bisection;
//! * weights (y, z), a separable convex QP over the unit box with a few dense
//!   rows, solved by [`crate::qp::BoxQp`].
//!
//! Each block step is accepted only if it does not raise the objective, so
//! the outer objective sequence is non-increasing.

use serde::{Deserialize, Serialize};

use crate::dispatch::allocate;
use crate::error::{Error, Result};
use crate::fleet::{Classification, Fleet, SolverConfig, UnitMode};
use crate::forecast::ForecastSummary;
use crate::qp::BoxQp;

/// Supply and capacity of units that are already ramping and cannot be changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RampingAggregates {
    /// Output this period from all ramping units.
    pub s_r: f64,
    /// Total p_max of ramping-up units.
    pub s_max_r: f64,
    /// Total p_min of ramping-up units.
    pub s_min_r: f64,
}

/// What a unit's variables mean in the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    /// On and cannot turn off: weight fixed at 1.
    MustRun,
    /// On and discretionary: y ∈ [0, 1].
    StayOn,
    /// Off and startable: z ∈ [0, 1].
    Start,
    /// Ramping up: weight fixed at 1 in the future-demand rows only.
    RampingUp,
}

impl VarRole {
    pub fn is_choice(self) -> bool {
        matches!(self, VarRole::StayOn | VarRole::Start)
    }

    fn dispatched(self) -> bool {
        matches!(self, VarRole::MustRun | VarRole::StayOn)
    }

    fn in_capacity_rows(self) -> bool {
        !matches!(self, VarRole::RampingUp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedUnit {
    /// Index into the fleet.
    pub unit: usize,
    pub id: String,
    pub role: VarRole,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub commit_penalty: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Ramp-limited dispatch box for the current period.
    pub lo: f64,
    pub hi: f64,
    pub p_prev: f64,
    /// Output delivered this period if the unit is turned off.
    pub shutdown_residual: f64,
    /// a·P_typ + b + c/P_typ.
    pub efficiency: f64,
}

impl RelaxedUnit {
    fn cost(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedProblem {
    pub units: Vec<RelaxedUnit>,
    pub demand: f64,
    pub sigma: f64,
    pub d_min72: f64,
    pub d_max72: f64,
    pub d_delta: Vec<f64>,
    pub ramping: RampingAggregates,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_multiplier_max: f64,
    pub sigma_multiplier_min: f64,
}

/// Point in the relaxed variable space; vectors are indexed like `problem.units`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPoint {
    /// y for StayOn, z for Start, 1 for MustRun and RampingUp.
    pub weight: Vec<f64>,
    /// Current-period output (meaningful for MustRun and StayOn).
    pub p: Vec<f64>,
    /// Output at each representative demand, `p_delta[δ][unit]`.
    pub p_delta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub demand: f64,
    pub capacity: f64,
    pub min_output: f64,
    pub future: f64,
    pub bounds: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [self.demand, self.capacity, self.min_output, self.future, self.bounds]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Objective after every accepted outer iteration.
    pub objective_trace: Vec<f64>,
    pub residuals: Residuals,
    /// Largest weight change in the final outer iteration.
    pub last_step: f64,
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub point: RelaxedPoint,
    pub objective: f64,
    pub diagnostics: SolveDiagnostics,
}

impl RelaxedSolution {
    pub fn weight_of(&self, problem: &RelaxedProblem, unit: usize) -> Option<f64> {
        problem
            .units
            .iter()
            .position(|u| u.unit == unit)
            .map(|i| self.point.weight[i])
    }
}

/// Assemble the relaxation for the current classification and forecast.
pub fn build(
    fleet: &Fleet,
    classes: &Classification,
    forecast: &ForecastSummary,
    aggregates: RampingAggregates,
    config: &SolverConfig,
) -> Result<RelaxedProblem> {
    let mut units = Vec::new();
    let mut push = |idx: usize, role: VarRole| {
        let u = &fleet.units[idx];
        let g = &u.params;
        let (lo, hi) = if role.dispatched() {
            g.dispatch_box(u.state.p_prev)
        } else {
            (0.0, 0.0)
        };
        units.push(RelaxedUnit {
            unit: idx,
            id: g.id.clone(),
            role,
            a: g.a,
            b: g.b,
            c: g.c,
            commit_penalty: g.commit_penalty,
            p_min: g.p_min,
            p_max: g.p_max,
            lo,
            hi,
            p_prev: u.state.p_prev,
            shutdown_residual: if role == VarRole::StayOn {
                g.shutdown_residual(u.state.p_prev)
            } else {
                0.0
            },
            efficiency: g.efficiency_weight(),
        });
    };
    for &i in &classes.must_run {
        push(i, VarRole::MustRun);
    }
    for &i in &classes.discretionary {
        match fleet.units[i].state.mode {
            UnitMode::On => push(i, VarRole::StayOn),
            _ => push(i, VarRole::Start),
        }
    }
    for &i in &classes.cannot_start {
        if matches!(fleet.units[i].state.mode, UnitMode::RampingUp { .. }) {
            push(i, VarRole::RampingUp);
        }
    }
    let problem = RelaxedProblem {
        units,
        demand: forecast.d_now,
        sigma: forecast.sigma,
        d_min72: forecast.d_min72,
        d_max72: forecast.d_max72,
        d_delta: forecast.d_delta.clone(),
        ramping: aggregates,
        beta: config.beta,
        gamma: config.gamma,
        sigma_multiplier_max: config.sigma_multiplier_max,
        sigma_multiplier_min: config.sigma_multiplier_min,
    };
    problem.check_structure()?;
    Ok(problem)
}

impl RelaxedProblem {
    /// Right-hand side of the current-demand row.
    pub fn demand_rhs(&self) -> f64 {
        self.demand - self.ramping.s_r
    }

    /// Capacity the committed fleet must cover: D_max,72 + 3σ − S_max,r.
    pub fn capacity_rhs(&self) -> f64 {
        self.d_max72 + self.sigma_multiplier_max * self.sigma - self.ramping.s_max_r
    }

    /// Ceiling on committed minimum output: D_min,72 − σ − S_min,r.
    pub fn min_output_rhs(&self) -> f64 {
        self.d_min72 - self.sigma_multiplier_min * self.sigma - self.ramping.s_min_r
    }

    fn sum_over(&self, pred: impl Fn(&RelaxedUnit) -> bool, val: impl Fn(&RelaxedUnit) -> f64) -> f64 {
        self.units.iter().filter(|u| pred(u)).map(val).sum()
    }

    /// Reject problems that no choice of weights can satisfy.
    pub fn check_structure(&self) -> Result<()> {
        let now_cap = self.sum_over(|u| u.role.dispatched(), |u| u.hi);
        if now_cap + 1e-9 < self.demand_rhs() {
            return Err(Error::InsufficientCapacity {
                required: self.demand_rhs(),
                available: now_cap,
            });
        }
        let total_cap = self.sum_over(|u| u.role.in_capacity_rows(), |u| u.p_max);
        if total_cap + 1e-9 < self.capacity_rhs() {
            return Err(Error::Infeasible(format!(
                "capacity {total_cap:.3} MW below requirement {:.3} MW",
                self.capacity_rhs()
            )));
        }
        let forced_min = self.sum_over(|u| u.role == VarRole::MustRun, |u| u.p_min);
        if forced_min > self.min_output_rhs() + 1e-9 {
            return Err(Error::Infeasible(format!(
                "must-run minimum output {forced_min:.3} MW exceeds ceiling {:.3} MW",
                self.min_output_rhs()
            )));
        }
        // Joint capacity / minimum-output check: cheapest p_min per MW of p_max first.
        let mut need = self.capacity_rhs() - self.sum_over(|u| u.role == VarRole::MustRun, |u| u.p_max);
        let mut min_used = forced_min;
        let mut choices: Vec<&RelaxedUnit> = self
            .units
            .iter()
            .filter(|u| u.role.is_choice() && u.p_max > 0.0)
            .collect();
        choices.sort_by(|a, b| (a.p_min / a.p_max).total_cmp(&(b.p_min / b.p_max)));
        for u in choices {
            if need <= 0.0 {
                break;
            }
            let frac = (need / u.p_max).min(1.0);
            need -= frac * u.p_max;
            min_used += frac * u.p_min;
        }
        if min_used > self.min_output_rhs() + 1e-9 {
            return Err(Error::Infeasible(format!(
                "covering {:.3} MW needs at least {min_used:.3} MW of minimum output, ceiling {:.3} MW",
                self.capacity_rhs(),
                self.min_output_rhs()
            )));
        }
        Ok(())
    }

    /// Objective of the relaxation at `pt`.
    pub fn objective(&self, pt: &RelaxedPoint) -> f64 {
        let mut f = 0.0;
        for (i, u) in self.units.iter().enumerate() {
            let w = pt.weight[i];
            match u.role {
                VarRole::MustRun => f += u.cost(pt.p[i]),
                VarRole::StayOn => {
                    f += w * u.cost(pt.p[i]) + u.commit_penalty * (1.0 - w).powi(2);
                }
                VarRole::Start => {
                    f += u.commit_penalty * (1.0 + w).powi(2) + self.beta * w * u.efficiency;
                }
                VarRole::RampingUp => {}
            }
            let future: f64 = pt.p_delta.iter().map(|pd| u.cost(pd[i])).sum();
            f += self.gamma * w * future;
        }
        f
    }

    /// Constraint violations at `pt` (all zero when feasible).
    pub fn residuals(&self, pt: &RelaxedPoint) -> Residuals {
        let mut supply = 0.0;
        let mut cap = 0.0;
        let mut min_out = 0.0;
        let mut bounds = 0.0_f64;
        for (i, u) in self.units.iter().enumerate() {
            let w = pt.weight[i];
            bounds = bounds.max(-w).max(w - 1.0);
            if u.role.dispatched() {
                bounds = bounds.max(u.lo - pt.p[i]).max(pt.p[i] - u.hi);
                supply += w * pt.p[i] + (1.0 - w) * u.shutdown_residual;
            }
            if u.role.in_capacity_rows() {
                cap += w * u.p_max;
                min_out += w * u.p_min;
            }
            for pd in &pt.p_delta {
                bounds = bounds.max(u.p_min - pd[i]).max(pd[i] - u.p_max);
            }
        }
        let future = self
            .d_delta
            .iter()
            .zip(&pt.p_delta)
            .map(|(d, pd)| {
                let cover: f64 = self.units.iter().enumerate().map(|(i, _)| pt.weight[i] * pd[i]).sum();
                (d - cover).max(0.0)
            })
            .fold(0.0, f64::max);
        Residuals {
            demand: (self.demand_rhs() - supply).max(0.0),
            capacity: (self.capacity_rhs() - cap).max(0.0),
            min_output: (min_out - self.min_output_rhs()).max(0.0),
            future,
            bounds: bounds.max(0.0),
        }
    }

    /// Warm start: incumbent commitment, previous outputs clamped to their
    /// boxes, future outputs as capacity-proportional shares.
    pub fn initial_point(&self) -> RelaxedPoint {
        let weight = self
            .units
            .iter()
            .map(|u| match u.role {
                VarRole::Start => 0.0,
                _ => 1.0,
            })
            .collect();
        let p = self
            .units
            .iter()
            .map(|u| if u.role.dispatched() { u.p_prev.clamp(u.lo, u.hi) } else { 0.0 })
            .collect();
        let total: f64 = self.units.iter().map(|u| u.p_max).sum();
        let p_delta = self
            .d_delta
            .iter()
            .map(|d| {
                self.units
                    .iter()
                    .map(|u| {
                        let share = if total > 0.0 { d * u.p_max / total } else { 0.0 };
                        share.clamp(u.p_min, u.p_max)
                    })
                    .collect()
            })
            .collect();
        RelaxedPoint { weight, p, p_delta }
    }

    /// Exact minimization over current outputs for fixed weights.
    fn solve_outputs(&self, pt: &RelaxedPoint) -> Vec<f64> {
        let mut rhs = self.demand_rhs();
        let mut spec = Vec::new();
        let mut idx = Vec::new();
        for (i, u) in self.units.iter().enumerate() {
            if !u.role.dispatched() {
                continue;
            }
            let w = pt.weight[i];
            rhs -= (1.0 - w) * u.shutdown_residual;
            if w > 1e-12 {
                spec.push((u.a, u.b, u.lo, u.hi, w));
                idx.push(i);
            }
        }
        let lambda = match allocate(&spec, rhs) {
            Ok((lambda, p)) => {
                let mut out = pt.p.clone();
                for (k, &i) in idx.iter().enumerate() {
                    out[i] = p[k];
                }
                return self.fill_idle(out, lambda, pt, None);
            }
            Err(_) => f64::INFINITY,
        };
        self.fill_idle(pt.p.clone(), lambda, pt, None)
    }

    /// Exact minimization over outputs at representative demand `d`.
    fn solve_future(&self, pt: &RelaxedPoint, delta: usize) -> Vec<f64> {
        let d = self.d_delta[delta];
        let mut spec = Vec::new();
        let mut idx = Vec::new();
        for (i, u) in self.units.iter().enumerate() {
            let w = pt.weight[i];
            if w > 1e-12 {
                spec.push((u.a, u.b, u.p_min, u.p_max, w));
                idx.push(i);
            }
        }
        match allocate(&spec, d) {
            Ok((lambda, p)) => {
                let mut out = pt.p_delta[delta].clone();
                for (k, &i) in idx.iter().enumerate() {
                    out[i] = p[k];
                }
                self.fill_idle(out, lambda, pt, Some(delta))
            }
            Err(_) => self
                .units
                .iter()
                .map(|u| u.p_max)
                .collect(),
        }
    }

    /// Units carrying zero weight do not affect the block objective; give
    /// them the output they would have at the system incremental cost so the
    /// weight block sees a meaningful cost.
    fn fill_idle(&self, mut out: Vec<f64>, lambda: f64, pt: &RelaxedPoint, delta: Option<usize>) -> Vec<f64> {
        for (i, u) in self.units.iter().enumerate() {
            if pt.weight[i] > 1e-12 {
                continue;
            }
            let (lo, hi) = match delta {
                Some(_) => (u.p_min, u.p_max),
                None if u.role.dispatched() => (u.lo, u.hi),
                None => continue,
            };
            out[i] = if lambda.is_infinite() {
                hi
            } else if u.a > 0.0 {
                ((lambda - u.b) / (2.0 * u.a)).clamp(lo, hi)
            } else if lambda > u.b {
                hi
            } else {
                lo
            };
        }
        out
    }

    /// Weight-block QP for fixed outputs.
    fn weight_qp(&self, pt: &RelaxedPoint) -> (BoxQp, Vec<usize>) {
        let choice: Vec<usize> = (0..self.units.len()).filter(|&i| self.units[i].role.is_choice()).collect();
        let mut h = Vec::with_capacity(choice.len());
        let mut g = Vec::with_capacity(choice.len());
        for &i in &choice {
            let u = &self.units[i];
            let k = u.commit_penalty;
            let future: f64 = pt.p_delta.iter().map(|pd| u.cost(pd[i])).sum();
            h.push(2.0 * k);
            g.push(match u.role {
                VarRole::StayOn => u.cost(pt.p[i]) - 2.0 * k + self.gamma * future,
                _ => 2.0 * k + self.beta * u.efficiency + self.gamma * future,
            });
        }

        let fixed = |f: &dyn Fn(usize, &RelaxedUnit) -> f64| -> f64 {
            self.units
                .iter()
                .enumerate()
                .filter(|(_, u)| !u.role.is_choice())
                .map(|(i, u)| f(i, u))
                .sum()
        };
        let mut rows = Vec::new();
        let mut rhs = Vec::new();

        // Current demand: Σ_on y (P − s) ≥ D − S_r − Σ_m P − Σ_on s
        let shut: f64 = choice
            .iter()
            .filter(|&&i| self.units[i].role == VarRole::StayOn)
            .map(|&i| self.units[i].shutdown_residual)
            .sum();
        rows.push(
            choice
                .iter()
                .map(|&i| {
                    let u = &self.units[i];
                    if u.role == VarRole::StayOn {
                        -(pt.p[i] - u.shutdown_residual)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        let must_supply = fixed(&|i, u| if u.role == VarRole::MustRun { pt.p[i] } else { 0.0 });
        rhs.push(-(self.demand_rhs() - must_supply - shut));

        // Capacity adequacy
        rows.push(choice.iter().map(|&i| -self.units[i].p_max).collect());
        let must_cap = fixed(&|_, u| if u.role == VarRole::MustRun { u.p_max } else { 0.0 });
        rhs.push(-(self.capacity_rhs() - must_cap));

        // Minimum-output ceiling
        rows.push(choice.iter().map(|&i| self.units[i].p_min).collect());
        let must_min = fixed(&|_, u| if u.role == VarRole::MustRun { u.p_min } else { 0.0 });
        rhs.push(self.min_output_rhs() - must_min);

        // Future demand coverage
        for (dl, d) in self.d_delta.iter().enumerate() {
            rows.push(choice.iter().map(|&i| -pt.p_delta[dl][i]).collect());
            let fixed_cover = fixed(&|i, _| pt.p_delta[dl][i]);
            rhs.push(-(d - fixed_cover));
        }
        (BoxQp { h, g, rows, rhs }, choice)
    }

    /// Solve the relaxation to block stationarity.
    pub fn solve(&self, config: &SolverConfig) -> Result<RelaxedSolution> {
        let mut pt = self.initial_point();
        let mut trace = Vec::new();
        let mut inner = 0;
        let mut last_step = f64::INFINITY;
        let mut stationary = false;
        let mut outer = 0;
        let mut current = f64::INFINITY;

        for it in 0..config.max_outer_iterations {
            outer = it + 1;
            let mut cand = pt.clone();
            cand.p = self.solve_outputs(&cand);
            for dl in 0..self.d_delta.len() {
                cand.p_delta[dl] = self.solve_future(&cand, dl);
            }
            if it == 0 || self.objective(&cand) <= self.objective(&pt) {
                pt = cand;
            }

            let (qp, choice) = self.weight_qp(&pt);
            let sol = qp.solve().map_err(|e| match e {
                Error::Infeasible(msg) => Error::Infeasible(format!("weight block: {msg}")),
                other => other,
            })?;
            inner += sol.iterations;
            let mut cand = pt.clone();
            for (k, &i) in choice.iter().enumerate() {
                cand.weight[i] = sol.x[k];
            }
            let f_new = self.objective(&cand);
            let f_old = self.objective(&pt);
            last_step = choice
                .iter()
                .map(|&i| (cand.weight[i] - pt.weight[i]).abs())
                .fold(0.0, f64::max);
            // The incumbent weights are infeasible until the first weight solve.
            if it == 0 || f_new <= f_old {
                pt = cand;
            } else {
                last_step = 0.0;
            }
            let f = self.objective(&pt);
            let change = (current - f).abs();
            current = f;
            trace.push(f);
            if it > 0 && change <= config.opt_tol * f.abs().max(1.0) && last_step <= 1e-5 {
                stationary = true;
                break;
            }
        }

        let residuals = self.residuals(&pt);
        if residuals.max() > config.feas_tol {
            return Err(Error::Infeasible(format!(
                "relaxed point violates constraints by {:.3e}",
                residuals.max()
            )));
        }
        let objective = self.objective(&pt);
        Ok(RelaxedSolution {
            point: pt,
            objective,
            diagnostics: SolveDiagnostics {
                outer_iterations: outer,
                inner_iterations: inner,
                objective_trace: trace,
                residuals,
                last_step,
                stationary,
            },
        })
    }

    /// Explicit variable and constraint listing for debugging.
    pub fn to_model_json(&self) -> serde_json::Value {
        use serde_json::json;
        let mut vars = Vec::new();
        for u in &self.units {
            match u.role {
                VarRole::StayOn => vars.push(json!({"name": format!("y[{}]", u.id), "lo": 0.0, "hi": 1.0})),
                VarRole::Start => vars.push(json!({"name": format!("z[{}]", u.id), "lo": 0.0, "hi": 1.0})),
                _ => {}
            }
            if u.role.dispatched() {
                vars.push(json!({"name": format!("P[{}]", u.id), "lo": u.lo, "hi": u.hi}));
            }
            for (dl, _) in self.d_delta.iter().enumerate() {
                vars.push(json!({"name": format!("Pd[{dl}][{}]", u.id), "lo": u.p_min, "hi": u.p_max}));
            }
        }
        let weight_name = |u: &RelaxedUnit| match u.role {
            VarRole::StayOn => format!("y[{}]", u.id),
            VarRole::Start => format!("z[{}]", u.id),
            _ => "1".to_string(),
        };
        let mut constraints = vec![
            json!({
                "name": "demand",
                "sense": ">=",
                "rhs": self.demand_rhs(),
                "terms": self.units.iter().filter(|u| u.role.dispatched()).map(|u| json!({
                    "weight": weight_name(u),
                    "var": format!("P[{}]", u.id),
                    "off_supply": u.shutdown_residual,
                })).collect::<Vec<_>>(),
            }),
            json!({
                "name": "capacity",
                "sense": ">=",
                "rhs": self.capacity_rhs(),
                "terms": self.units.iter().filter(|u| u.role.in_capacity_rows())
                    .map(|u| json!({"weight": weight_name(u), "coef": u.p_max})).collect::<Vec<_>>(),
            }),
            json!({
                "name": "min_output",
                "sense": "<=",
                "rhs": self.min_output_rhs(),
                "terms": self.units.iter().filter(|u| u.role.in_capacity_rows())
                    .map(|u| json!({"weight": weight_name(u), "coef": u.p_min})).collect::<Vec<_>>(),
            }),
        ];
        for (dl, d) in self.d_delta.iter().enumerate() {
            constraints.push(json!({
                "name": format!("future[{dl}]"),
                "sense": ">=",
                "rhs": d,
                "terms": self.units.iter().map(|u| json!({
                    "weight": weight_name(u),
                    "var": format!("Pd[{dl}][{}]", u.id),
                })).collect::<Vec<_>>(),
            }));
        }
        json!({
            "variables": vars,
            "constraints": constraints,
            "beta": self.beta,
            "gamma": self.gamma,
            "ramping": self.ramping,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{classify_fleet, GeneratorParams, Unit, UnitState};

    fn gen(id: &str, a: f64, b: f64, c: f64, p_min: f64, p_max: f64) -> GeneratorParams {
        GeneratorParams {
            id: id.into(),
            a,
            b,
            c,
            p_min,
            p_max,
            ramp_up: p_max,
            ramp_down: p_max,
            commit_penalty: 50.0,
            ramp_up_duration: 2,
            ramp_down_duration: 1,
            min_on_time: 0,
            max_daily_starts: 3,
            must_run: false,
        }
    }

    fn forecast(d: f64, lo: f64, hi: f64, pts: Vec<f64>) -> ForecastSummary {
        ForecastSummary {
            d_now: d,
            sigma: 0.0,
            d_min72: lo,
            d_max72: hi,
            mean72: 0.5 * (lo + hi),
            d_delta: pts,
        }
    }

    fn config(gamma: f64, k: usize) -> SolverConfig {
        SolverConfig {
            gamma,
            fpm_count: k,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn single_must_run_unit() {
        let mut g = gen("m", 0.01, 10.0, 5.0, 20.0, 100.0);
        g.must_run = true;
        let fleet = Fleet {
            units: vec![Unit { params: g, state: UnitState::on(50.0, 5) }],
        };
        let classes = classify_fleet(&fleet, 0);
        let fc = forecast(60.0, 20.0, 90.0, vec![]);
        let cfg = config(0.0, 0);
        let p = build(&fleet, &classes, &fc, RampingAggregates::default(), &cfg).unwrap();
        let s = p.solve(&cfg).unwrap();
        assert!((s.point.p[0] - 60.0).abs() < 1e-6);
        let fc = forecast(5.0, 20.0, 90.0, vec![]);
        let p = build(&fleet, &classes, &fc, RampingAggregates::default(), &cfg).unwrap();
        let s = p.solve(&cfg).unwrap();
        assert!((s.point.p[0] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn start_bias_term() {
        let g = gen("z", 0.01, 10.0, 40.0, 20.0, 100.0);
        let fleet = Fleet {
            units: vec![Unit { params: g.clone(), state: UnitState::off() }],
        };
        let classes = classify_fleet(&fleet, 0);
        let cfg = config(0.0, 0);
        let p = build(&fleet, &classes, &forecast(0.0, 0.0, 0.0, vec![]), RampingAggregates::default(), &cfg);
        // Needs 0 capacity and D_min − σ = 0 ≥ 20 z ⇒ z = 0 only; problem is feasible.
        let p = p.unwrap();
        let pt = RelaxedPoint {
            weight: vec![1.0],
            p: vec![0.0],
            p_delta: vec![],
        };
        let pt0 = RelaxedPoint {
            weight: vec![0.0],
            ..pt.clone()
        };
        let p_typ = 84.0;
        let bias = 0.001 * (0.01 * p_typ + 10.0 + 40.0 / p_typ);
        // K(1+1)² − K(1+0)² = 3K plus the start bias.
        let diff = p.objective(&pt) - p.objective(&pt0);
        assert!((diff - (3.0 * 50.0 + bias)).abs() < 1e-12);
    }

    #[test]
    fn insufficient_fleet_is_rejected_before_solving() {
        let fleet = Fleet {
            units: vec![Unit { params: gen("a", 0.01, 10.0, 0.0, 0.0, 50.0), state: UnitState::on(40.0, 5) }],
        };
        let classes = classify_fleet(&fleet, 0);
        let cfg = config(1.0, 1);
        let err = build(&fleet, &classes, &forecast(40.0, 30.0, 80.0, vec![55.0]), RampingAggregates::default(), &cfg)
            .unwrap_err();
        assert!(err.is_infeasibility());
    }

    #[test]
    fn cheapest_unit_gets_highest_weight() {
        let units = vec![
            Unit { params: gen("cheap", 0.001, 5.0, 10.0, 0.0, 100.0), state: UnitState::on(30.0, 5) },
            Unit { params: gen("mid", 0.001, 10.0, 10.0, 0.0, 100.0), state: UnitState::on(30.0, 5) },
            Unit { params: gen("dear", 0.001, 20.0, 10.0, 0.0, 100.0), state: UnitState::on(30.0, 5) },
        ];
        let fleet = Fleet { units };
        let classes = classify_fleet(&fleet, 0);
        let cfg = config(0.0, 0);
        let p = build(&fleet, &classes, &forecast(90.0, 80.0, 100.0, vec![]), RampingAggregates::default(), &cfg)
            .unwrap();
        let s = p.solve(&cfg).unwrap();
        let w = &s.point.weight;
        assert!(w[0] >= w[1] - 1e-9 && w[1] >= w[2] - 1e-9, "{w:?}");
        assert!(w[0] > 0.99);
        assert!(s.diagnostics.residuals.max() <= 1e-6);
    }

    #[test]
    fn objective_trace_non_increasing() {
        let units: Vec<Unit> = (0..6)
            .map(|i| {
                let g = gen(&format!("u{i}"), 0.002 * (i + 1) as f64, 8.0 + 3.0 * i as f64, 30.0, 10.0, 80.0);
                let state = if i < 4 { UnitState::on(40.0, 5) } else { UnitState::off() };
                Unit { params: g, state }
            })
            .collect();
        let fleet = Fleet { units };
        let classes = classify_fleet(&fleet, 0);
        let cfg = config(1.0, 3);
        let fc = forecast(150.0, 90.0, 260.0, vec![90.0, 170.0, 260.0]);
        let p = build(&fleet, &classes, &fc, RampingAggregates::default(), &cfg).unwrap();
        let s = p.solve(&cfg).unwrap();
        for w in s.diagnostics.objective_trace.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{:?}", s.diagnostics.objective_trace);
        }
        assert!(s.diagnostics.residuals.max() <= 1e-6);
        assert!(s.point.weight.iter().all(|w| (0.0..=1.0).contains(w)));
    }
}
