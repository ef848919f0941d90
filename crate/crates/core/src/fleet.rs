//! Generator data, the per-unit production-cycle state machine, and
//! must-run / discretionary / cannot-start classification.
//!
//! All power quantities are MW; costs are per period. Ramp rates are stored
//! per period (already multiplied by the period length).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of a thermal unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub id: String,
    /// Quadratic cost coefficient, $/MW²·period.
    pub a: f64,
    /// Linear cost coefficient, $/MW·period.
    pub b: f64,
    /// No-load cost, $/period.
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Maximum upward change per period.
    pub ramp_up: f64,
    /// Maximum downward change per period.
    pub ramp_down: f64,
    /// Penalty charged on every commitment change.
    pub commit_penalty: f64,
    /// Periods spent ramping from Off to On.
    pub ramp_up_duration: u32,
    /// Minimum periods spent ramping from On to Off.
    pub ramp_down_duration: u32,
    pub min_on_time: u32,
    pub max_daily_starts: u32,
    /// Units flagged must-run are never turned off while On.
    #[serde(default)]
    pub must_run: bool,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidGenerator {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        let finite = [
            self.a,
            self.b,
            self.c,
            self.p_min,
            self.p_max,
            self.ramp_up,
            self.ramp_down,
            self.commit_penalty,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("non-finite parameter");
        }
        if self.p_min < 0.0 || self.p_min > self.p_max {
            return fail("require 0 <= p_min <= p_max");
        }
        if self.a < 0.0 {
            return fail("quadratic coefficient must be non-negative");
        }
        if self.ramp_up <= 0.0 || self.ramp_down <= 0.0 {
            return fail("ramp rates must be positive");
        }
        if self.commit_penalty < 0.0 {
            return fail("commitment penalty must be non-negative");
        }
        if self.ramp_up_duration < 1 || self.ramp_down_duration < 1 {
            return fail("ramp durations must be at least one period");
        }
        Ok(())
    }

    /// Running cost a·P² + b·P + c.
    pub fn cost(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }

    /// Incremental cost 2a·P + b.
    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.a * p + self.b
    }

    pub fn typical_production(&self) -> f64 {
        typical_production(self)
    }

    /// Start-bias weight a·P_typ + b + c/P_typ (average cost per MW at a peak).
    pub fn efficiency_weight(&self) -> f64 {
        let p = self.typical_production();
        if p > 0.0 {
            self.a * p + self.b + self.c / p
        } else {
            self.b
        }
    }

    /// Ramp-limited operating box for an On unit that produced `p_prev`.
    pub fn dispatch_box(&self, p_prev: f64) -> (f64, f64) {
        let lo = self.p_min.max(p_prev - self.ramp_down);
        let hi = self.p_max.min(p_prev + self.ramp_up);
        // A unit above p_max after a parameter change still needs a valid box.
        (lo.min(hi), hi)
    }

    /// Output produced in the period a unit is turned off.
    pub fn shutdown_residual(&self, p_prev: f64) -> f64 {
        (p_prev - self.ramp_down).max(0.0)
    }

    pub fn can_turn_off(&self, p_prev: f64) -> bool {
        !self.must_run && p_prev - self.ramp_down <= self.p_min
    }

    /// Periods spent ramping down after shutting off at `p_at_shutdown`.
    /// At least the configured duration, and long enough for output to reach zero.
    pub fn ramp_down_periods(&self, p_at_shutdown: f64) -> u32 {
        let to_zero = (p_at_shutdown / self.ramp_down).ceil().max(0.0) as u32;
        self.ramp_down_duration.max(to_zero)
    }
}

/// Typical production level during a peak, (4·p_max + p_min)/5.
pub fn typical_production(g: &GeneratorParams) -> f64 {
    (4.0 * g.p_max + g.p_min) / 5.0
}

/// Position in the production cycle Off → RampingUp → On → RampingDown → Off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UnitMode {
    Off,
    RampingUp { periods_remaining: u32 },
    On,
    RampingDown { periods_remaining: u32, p_at_shutdown: f64 },
}

impl UnitMode {
    pub fn is_ramping(&self) -> bool {
        matches!(self, UnitMode::RampingUp { .. } | UnitMode::RampingDown { .. })
    }
}

/// Commitment action for a discretionary unit in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    StayOn,
    TurnOff,
    StartRamp,
    StayOff,
}

impl Action {
    pub fn is_change(self) -> bool {
        matches!(self, Action::TurnOff | Action::StartRamp)
    }
}

/// Dynamic state of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitState {
    pub mode: UnitMode,
    /// Output in the previous period.
    pub p_prev: f64,
    /// Consecutive periods spent On.
    pub on_duration: u32,
    /// Periods at which the unit started ramping up, oldest first.
    pub start_times: VecDeque<usize>,
}

impl UnitState {
    pub fn off() -> Self {
        Self {
            mode: UnitMode::Off,
            p_prev: 0.0,
            on_duration: 0,
            start_times: VecDeque::new(),
        }
    }

    pub fn on(p_prev: f64, on_duration: u32) -> Self {
        Self {
            mode: UnitMode::On,
            p_prev,
            on_duration,
            start_times: VecDeque::new(),
        }
    }

    pub fn starts_in_window(&self) -> usize {
        self.start_times.len()
    }

    /// Drop start records older than `window` periods before `now`.
    pub fn evict_starts(&mut self, now: usize, window: usize) {
        while let Some(&s) = self.start_times.front() {
            if now >= s + window {
                self.start_times.pop_front();
            } else {
                break;
            }
        }
    }

    /// Uncontrollable output of a ramping unit in the current period.
    ///
    /// Ramp-up is linear from 0 to p_min across the ramp-up duration; ramp-down
    /// falls by r_d per period from the shutdown level, floored at zero.
    pub fn ramp_output(&self, g: &GeneratorParams) -> f64 {
        match self.mode {
            UnitMode::RampingUp { periods_remaining } => {
                let total = g.ramp_up_duration;
                let step = total.saturating_sub(periods_remaining) + 1;
                g.p_min * step as f64 / total as f64
            }
            UnitMode::RampingDown {
                periods_remaining,
                p_at_shutdown,
            } => {
                let total = g.ramp_down_periods(p_at_shutdown);
                let step = total.saturating_sub(periods_remaining) + 1;
                (p_at_shutdown - step as f64 * g.ramp_down).max(0.0)
            }
            _ => 0.0,
        }
    }

    /// Remaining output profile of a ramping unit, current period first.
    pub fn ramp_profile(&self, g: &GeneratorParams) -> Vec<f64> {
        let mut probe = self.clone();
        let mut out = Vec::new();
        while probe.mode.is_ramping() {
            out.push(probe.ramp_output(g));
            probe.advance_ramp(g);
        }
        out
    }

    /// End-of-period progression for a ramping unit.
    pub fn advance_ramp(&mut self, g: &GeneratorParams) {
        let produced = self.ramp_output(g);
        match self.mode {
            UnitMode::RampingUp { periods_remaining } => {
                if periods_remaining <= 1 {
                    self.mode = UnitMode::On;
                    self.p_prev = g.p_min;
                    self.on_duration = 0;
                } else {
                    self.mode = UnitMode::RampingUp {
                        periods_remaining: periods_remaining - 1,
                    };
                    self.p_prev = produced;
                }
            }
            UnitMode::RampingDown {
                periods_remaining,
                p_at_shutdown,
            } => {
                if periods_remaining <= 1 {
                    self.mode = UnitMode::Off;
                    self.p_prev = 0.0;
                } else {
                    self.mode = UnitMode::RampingDown {
                        periods_remaining: periods_remaining - 1,
                        p_at_shutdown,
                    };
                    self.p_prev = produced;
                }
            }
            _ => {}
        }
    }

    /// Apply a commitment action chosen at period `now`. `output` is the
    /// dispatched level for a unit that stays on.
    pub fn apply(&mut self, g: &GeneratorParams, action: Action, output: f64, now: usize) -> Result<()> {
        match (self.mode, action) {
            (UnitMode::On, Action::StayOn) => {
                self.p_prev = output;
                self.on_duration += 1;
            }
            (UnitMode::On, Action::TurnOff) => {
                if !g.can_turn_off(self.p_prev) {
                    return Err(Error::InvalidInput(format!(
                        "unit {} cannot turn off from {:.3} MW",
                        g.id, self.p_prev
                    )));
                }
                let p_sd = g.shutdown_residual(self.p_prev);
                self.mode = UnitMode::RampingDown {
                    periods_remaining: g.ramp_down_periods(p_sd),
                    p_at_shutdown: p_sd,
                };
                self.p_prev = p_sd;
                self.on_duration = 0;
            }
            (UnitMode::Off, Action::StartRamp) => {
                if self.starts_in_window() >= g.max_daily_starts as usize {
                    return Err(Error::InvalidInput(format!(
                        "unit {} exceeded its daily start limit",
                        g.id
                    )));
                }
                self.mode = UnitMode::RampingUp {
                    periods_remaining: g.ramp_up_duration,
                };
                self.p_prev = 0.0;
                self.start_times.push_back(now);
            }
            (UnitMode::Off, Action::StayOff) => {}
            (mode, action) => {
                return Err(Error::InvalidInput(format!(
                    "illegal action {action:?} for unit {} in mode {mode:?}",
                    g.id
                )))
            }
        }
        Ok(())
    }
}

/// A thermal unit: parameters plus state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub params: GeneratorParams,
    pub state: UnitState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub units: Vec<Unit>,
}

impl Fleet {
    /// Fleet with every unit Off.
    pub fn from_params(params: Vec<GeneratorParams>) -> Result<Self> {
        for p in &params {
            p.validate()?;
        }
        let mut seen = std::collections::HashSet::new();
        for p in &params {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::InvalidGenerator {
                    id: p.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            units: params
                .into_iter()
                .map(|params| Unit {
                    params,
                    state: UnitState::off(),
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn total_capacity(&self) -> f64 {
        self.units.iter().map(|u| u.params.p_max).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &GeneratorParams> {
        self.units.iter().map(|u| &u.params)
    }
}

/// Role assigned to each unit for one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    MustRun,
    Discretionary,
    CannotStart,
}

/// Partition of unit indices for one period.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub must_run: Vec<usize>,
    pub discretionary: Vec<usize>,
    pub cannot_start: Vec<usize>,
}

impl Classification {
    pub fn role_of(&self, idx: usize) -> Option<Role> {
        if self.must_run.contains(&idx) {
            Some(Role::MustRun)
        } else if self.discretionary.contains(&idx) {
            Some(Role::Discretionary)
        } else if self.cannot_start.contains(&idx) {
            Some(Role::CannotStart)
        } else {
            None
        }
    }
}

/// Role of a single unit given its current state.
pub fn classify_unit(unit: &Unit) -> Role {
    let (g, s) = (&unit.params, &unit.state);
    match s.mode {
        UnitMode::On => {
            if g.must_run || s.on_duration < g.min_on_time || s.p_prev - g.ramp_down > g.p_min {
                Role::MustRun
            } else {
                Role::Discretionary
            }
        }
        UnitMode::Off => {
            if s.starts_in_window() >= g.max_daily_starts as usize {
                Role::CannotStart
            } else {
                Role::Discretionary
            }
        }
        UnitMode::RampingUp { .. } | UnitMode::RampingDown { .. } => Role::CannotStart,
    }
}

/// Split the fleet into must-run, discretionary and cannot-start sets.
///
/// Start records are assumed to be evicted up to `now` already; `now` is
/// accepted so callers can classify a snapshot without mutating it.
pub fn classify_fleet(fleet: &Fleet, _now: usize) -> Classification {
    let mut out = Classification::default();
    for (i, unit) in fleet.units.iter().enumerate() {
        match classify_unit(unit) {
            Role::MustRun => out.must_run.push(i),
            Role::Discretionary => out.discretionary.push(i),
            Role::CannotStart => out.cannot_start.push(i),
        }
    }
    out
}

/// All-or-nothing hydro unit with a per-window operating budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroUnit {
    pub id: String,
    /// Output when running, MW.
    pub capacity: f64,
    /// Periods the unit may run within the planning window.
    pub period_budget: usize,
}

impl HydroUnit {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::InvalidHydro {
                id: self.id.clone(),
                reason: "capacity must be positive".into(),
            });
        }
        Ok(())
    }
}

/// How the demand deviation σ_D is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaMode {
    /// Fixed fraction of current demand.
    Fraction { fraction: f64 },
    /// Standard deviation of first differences over the lookahead window.
    Differences,
}

impl Default for SigmaMode {
    fn default() -> Self {
        SigmaMode::Fraction { fraction: 0.02 }
    }
}

/// Tunables for the relaxation, rounding and rolling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Start-efficiency bias.
    pub beta: f64,
    /// Weight of future-demand cost terms.
    pub gamma: f64,
    /// Number of representative future demand points.
    pub fpm_count: usize,
    pub sigma_multiplier_max: f64,
    pub sigma_multiplier_min: f64,
    pub sigma_mode: SigmaMode,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_outer_iterations: usize,
    /// Lookahead window length in periods (72 h at 5 min = 864).
    pub lookahead_periods: usize,
    /// Rolling start-count window in periods (24 h at 5 min = 288).
    pub start_window_periods: usize,
    /// Worker threads for the per-k dispatch sweep; 1 runs inline.
    pub sweep_threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.001,
            gamma: 1.0,
            fpm_count: 3,
            sigma_multiplier_max: 3.0,
            sigma_multiplier_min: 1.0,
            sigma_mode: SigmaMode::default(),
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_outer_iterations: 200,
            lookahead_periods: 864,
            start_window_periods: 288,
            sweep_threads: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("beta and gamma must be non-negative".into()));
        }
        if self.lookahead_periods == 0 || self.start_window_periods == 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if self.feas_tol <= 0.0 || self.opt_tol <= 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Window lengths for a given period length in minutes.
    pub fn with_period_minutes(mut self, minutes: f64) -> Self {
        self.lookahead_periods = (72.0 * 60.0 / minutes).round() as usize;
        self.start_window_periods = (24.0 * 60.0 / minutes).round() as usize;
        self
    }
}
