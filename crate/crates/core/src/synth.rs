//! Seeded synthetic fleets, hydro units and load profiles, plus the noisy
//! replication used to scale instances up.
//!
//! Cost coefficients are generated per period: running a unit at P for one
//! period costs a·P² + b·P + c dollars, and K is dollars per commitment change.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{GeneratorParams, HydroUnit};
use crate::forecast::LoadSeries;

/// Ranges for the synthetic thermal fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub units: usize,
    pub total_capacity: f64,
    pub period_minutes: f64,
    /// p_max drawn log-uniformly, then rescaled to the total.
    pub p_max_range: (f64, f64),
    pub p_min_fraction: (f64, f64),
    /// Incremental cost at p_min, $/MWh, log-uniform.
    pub marginal_at_min: (f64, f64),
    /// Slope of the incremental cost as a fraction of the steepest slope that
    /// keeps the linear coefficient non-negative.
    pub slope_fraction: (f64, f64),
    /// No-load cost as a fraction of p_max priced at the p_min incremental cost.
    pub no_load_fraction: (f64, f64),
    /// Commitment-change penalty per MW of capacity, $.
    pub penalty_per_mw: (f64, f64),
    /// Ramp rate as a fraction of p_max per 5 minutes.
    pub ramp_fraction: (f64, f64),
    pub ramp_up_periods: (u32, u32),
    pub ramp_down_periods: (u32, u32),
    pub min_on_periods: (u32, u32),
    pub max_daily_starts: (u32, u32),
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            units: 42,
            total_capacity: 9047.9,
            period_minutes: 5.0,
            p_max_range: (40.0, 500.0),
            p_min_fraction: (0.1, 0.3),
            marginal_at_min: (10.0, 40.0),
            slope_fraction: (0.7, 1.0),
            no_load_fraction: (0.05, 0.15),
            penalty_per_mw: (30.0, 33.0),
            ramp_fraction: (0.04, 0.2),
            ramp_up_periods: (2, 12),
            ramp_down_periods: (1, 4),
            min_on_periods: (6, 36),
            max_daily_starts: (2, 4),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn synth_base_fleet(spec: &FleetSpec, seed: u64) -> Result<Vec<GeneratorParams>> {
    let bad = |m: &str| Err(Error::Config(format!("fleet spec: {m}")));
    if spec.units == 0 || !(spec.total_capacity > 0.0) || !(spec.period_minutes > 0.0) {
        return bad("units, capacity and period length must be positive");
    }
    if spec.p_min_fraction.0 < 0.0 || spec.p_min_fraction.1 > 1.0 || spec.p_min_fraction.0 > spec.p_min_fraction.1 {
        return bad("p_min fraction must lie in [0, 1]");
    }
    if spec.marginal_at_min.0 <= 0.0 || spec.p_max_range.0 <= 0.0 {
        return bad("cost and capacity ranges must be positive");
    }
    if spec.slope_fraction.0 < 0.0 || spec.slope_fraction.1 > 1.0 {
        return bad("slope fraction must lie in [0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..spec.units).map(|_| log_uniform(&mut rng, spec.p_max_range)).collect();
    let scale = spec.total_capacity / raw.iter().sum::<f64>();
    let dt = spec.period_minutes / 60.0;
    let per5 = spec.period_minutes / 5.0;
    let width = spec.units.to_string().len().max(2);

    let mut fleet = Vec::with_capacity(spec.units);
    for (i, r) in raw.iter().enumerate() {
        let p_max = r * scale;
        let p_min = p_max * uniform(&mut rng, spec.p_min_fraction);
        // Incremental cost rises linearly from mc_min at p_min; with b ≥ 0 the
        // steepest admissible slope is mc_min / p_min.
        let mc_min = log_uniform(&mut rng, spec.marginal_at_min);
        let slope = uniform(&mut rng, spec.slope_fraction) * mc_min / p_min.max(1e-9 * p_max);
        let a = 0.5 * slope;
        let b = mc_min - slope * p_min;
        let c = mc_min * p_max * uniform(&mut rng, spec.no_load_fraction);
        let ramp = p_max * uniform(&mut rng, spec.ramp_fraction) * per5;
        fleet.push(GeneratorParams {
            id: format!("g{i:0width$}"),
            a: a * dt,
            b: b * dt,
            c: c * dt,
            p_min,
            p_max,
            ramp_up: ramp,
            ramp_down: ramp,
            commit_penalty: p_max * uniform(&mut rng, spec.penalty_per_mw),
            ramp_up_duration: rng.gen_range(spec.ramp_up_periods.0..=spec.ramp_up_periods.1),
            ramp_down_duration: rng.gen_range(spec.ramp_down_periods.0..=spec.ramp_down_periods.1),
            min_on_time: rng.gen_range(spec.min_on_periods.0..=spec.min_on_periods.1),
            max_daily_starts: rng.gen_range(spec.max_daily_starts.0..=spec.max_daily_starts.1),
            must_run: false,
        });
    }
    // Absorb rescaling round-off so the total is exact.
    let drift = spec.total_capacity - fleet.iter().map(|g| g.p_max).sum::<f64>();
    let last = fleet.last_mut().expect("at least one unit");
    last.p_max += drift;
    last.p_min = last.p_min.min(last.p_max);
    for g in &fleet {
        g.validate()?;
    }
    Ok(fleet)
}

/// `factor − 1` noisy copies of every base unit appended to the base fleet.
/// Each copy's p_max, p_min, a, b, c and ramp rates are scaled by independent
/// factors in [0.9, 1.1]; the p_min/p_max pair is redrawn until ordered.
pub fn replicate_fleet(base: &[GeneratorParams], factor: usize, seed: u64) -> Vec<GeneratorParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = base.to_vec();
    let noise = |rng: &mut ChaCha8Rng| rng.gen_range(0.9..=1.1);
    for copy in 1..factor {
        for g in base {
            let mut h = g.clone();
            h.id = format!("{}_r{copy}", g.id);
            loop {
                h.p_max = g.p_max * noise(&mut rng);
                h.p_min = g.p_min * noise(&mut rng);
                if h.p_min <= h.p_max {
                    break;
                }
            }
            h.a = g.a * noise(&mut rng);
            h.b = g.b * noise(&mut rng);
            h.c = g.c * noise(&mut rng);
            h.ramp_up = g.ramp_up * noise(&mut rng);
            h.ramp_down = g.ramp_down * noise(&mut rng);
            out.push(h);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HydroSpec {
    pub units: usize,
    /// Total hydro capacity, MW.
    pub total_capacity: f64,
    pub capacity_factor: (f64, f64),
}

impl Default for HydroSpec {
    fn default() -> Self {
        Self {
            units: 56,
            // 0.51 % of the 9047.9 MW base fleet.
            total_capacity: 0.0051 * 9047.9,
            capacity_factor: (0.28, 0.47),
        }
    }
}

/// Hydro units whose period budget is round(cf·periods) with cf uniform in
/// the configured range.
pub fn synth_hydro_fleet(spec: &HydroSpec, periods: usize, seed: u64) -> Result<Vec<HydroUnit>> {
    if spec.units == 0 || !(spec.total_capacity > 0.0) {
        return Err(Error::Config("hydro spec: units and capacity must be positive".into()));
    }
    let (lo, hi) = spec.capacity_factor;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(Error::Config("hydro spec: capacity factors must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..spec.units).map(|_| rng.gen_range(0.5..=1.5)).collect();
    let scale = spec.total_capacity / raw.iter().sum::<f64>();
    let width = spec.units.to_string().len().max(2);
    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let cf = uniform(&mut rng, spec.capacity_factor);
            HydroUnit {
                id: format!("h{i:0width$}"),
                capacity: r * scale,
                period_budget: (cf * periods as f64).round() as usize,
            }
        })
        .collect())
}

/// `factor − 1` noisy copies of every base hydro unit: capacity within ±10 %
/// and period budget shifted by up to ±10 periods per day of horizon, clamped
/// to [0, periods].
pub fn replicate_hydro(base: &[HydroUnit], factor: usize, periods: usize, days: f64, seed: u64) -> Vec<HydroUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = (10.0 * days).round() as i64;
    let mut out = base.to_vec();
    for copy in 1..factor {
        for h in base {
            let delta = rng.gen_range(-shift..=shift);
            out.push(HydroUnit {
                id: format!("{}_r{copy}", h.id),
                capacity: h.capacity * rng.gen_range(0.9..=1.1),
                period_budget: (h.period_budget as i64 + delta).clamp(0, periods as i64) as usize,
            });
        }
    }
    out
}

/// Synthetic load: two daily peaks over a trough, a mild weekly cycle and
/// smooth AR(1) noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadSpec {
    pub periods: usize,
    pub period_minutes: f64,
    pub peak: f64,
    /// Overnight trough as a fraction of the daily peak.
    pub trough_fraction: f64,
    /// Morning peak height relative to the evening peak.
    pub morning_ratio: f64,
    /// Relative day-to-day variation of the daily peak.
    pub daily_variation: f64,
    /// Standard deviation of the AR(1) noise as a fraction of peak.
    pub noise: f64,
    pub noise_persistence: f64,
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            periods: 288 + 864,
            period_minutes: 5.0,
            peak: 9047.9 / 1.2,
            trough_fraction: 0.6,
            morning_ratio: 0.85,
            daily_variation: 0.05,
            noise: 0.005,
            noise_persistence: 0.95,
        }
    }
}

pub fn synth_load(spec: &LoadSpec, seed: u64) -> Result<LoadSeries> {
    if spec.periods == 0 || !(spec.peak > 0.0) || !(spec.period_minutes > 0.0) {
        return Err(Error::Config("load spec: periods, peak and period length must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.trough_fraction) {
        return Err(Error::Config("load spec: trough fraction must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_day = 24.0 * 60.0 / spec.period_minutes;
    let days = (spec.periods as f64 / per_day).ceil() as usize + 1;
    let day_scale: Vec<f64> = (0..days)
        .map(|d| {
            let weekly = if d % 7 >= 5 { 0.93 } else { 1.0 };
            weekly * (1.0 + spec.daily_variation * rng.gen_range(-1.0..=1.0))
        })
        .collect();
    let bump = |h: f64, centre: f64, width: f64| {
        let x = (h - centre) / width;
        (-0.5 * x * x).exp()
    };
    let mut noise = 0.0;
    let innovation = spec.noise * (1.0 - spec.noise_persistence.powi(2)).sqrt();
    let values: Vec<f64> = (0..spec.periods)
        .map(|t| {
            let hour = (t as f64 * spec.period_minutes / 60.0) % 24.0;
            let day = (t as f64 / per_day) as usize;
            // Two peaks over a daytime plateau; midnight wraps via the cosine.
            let plateau = 0.3 * (1.0 - (2.0 * PI * (hour - 3.0) / 24.0).cos());
            let shape = (spec.morning_ratio * bump(hour, 8.5, 2.0))
                .max(bump(hour, 18.5, 2.5))
                .max(plateau);
            let level = spec.trough_fraction + (1.0 - spec.trough_fraction) * shape.min(1.0);
            let z: f64 = rng.sample(StandardNormal);
            noise = spec.noise_persistence * noise + innovation * z;
            (spec.peak * day_scale[day] * level * (1.0 + noise)).max(0.0)
        })
        .collect();
    let series = LoadSeries::from_values(values);
    Ok(scale_load(
        &LoadSeries {
            period_minutes: spec.period_minutes,
            ..series
        },
        spec.peak,
    ))
}

/// Rescale so the series peak equals `target_peak`.
pub fn scale_load(series: &LoadSeries, target_peak: f64) -> LoadSeries {
    let peak = series.peak();
    let factor = if peak > 0.0 { target_peak / peak } else { 1.0 };
    LoadSeries {
        start: series.start,
        period_minutes: series.period_minutes,
        values: series.values.iter().map(|v| v * factor).collect(),
    }
}

/// Capacity shortfall against a 20 % cold reserve over `peak`, if any.
pub fn reserve_shortfall(fleet: &[GeneratorParams], peak: f64) -> Option<f64> {
    let cap: f64 = fleet.iter().map(|g| g.p_max).sum();
    let need = 1.2 * peak;
    (cap < need).then_some(need - cap)
}

/// Everything needed for a synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fleet: FleetSpec,
    pub hydro: HydroSpec,
    pub load: LoadSpec,
    /// Replication factor applied to the fleet, hydro units and load peak.
    pub replicate: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fleet: FleetSpec::default(),
            hydro: HydroSpec::default(),
            load: LoadSpec::default(),
            replicate: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub fleet: Vec<GeneratorParams>,
    pub hydro: Vec<HydroUnit>,
    pub load: LoadSeries,
}

/// Fleet, hydro and load from one seed. Each part draws from its own stream
/// (seed, seed + 100, seed + 200, replication seed + 300), so changing one
/// spec leaves the others untouched.
pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Synthetic> {
    if config.replicate == 0 {
        return Err(Error::Config("replication factor must be at least 1".into()));
    }
    let factor = config.replicate;
    let base = synth_base_fleet(&config.fleet, seed)?;
    let load = synth_load(&config.load, seed.wrapping_add(100))?;
    let load = scale_load(&load, load.peak() * factor as f64);
    let periods = load.len();
    let days = periods as f64 * load.period_minutes / 1440.0;
    let hydro = synth_hydro_fleet(&config.hydro, periods, seed.wrapping_add(200))?;
    Ok(Synthetic {
        fleet: replicate_fleet(&base, factor, seed.wrapping_add(300)),
        hydro: replicate_hydro(&hydro, factor, periods, days, seed.wrapping_add(300)),
        load,
    })
}
