//! File formats: fleet, hydro and load CSVs, run records, hydro schedules and
//! scenario JSON.

use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{GeneratorParams, HydroUnit, SolverConfig};
use crate::forecast::{resample_linear, LoadSeries};
use crate::hydro::HydroSchedule;
use crate::sim::PeriodRecord;

#[derive(Debug, Serialize, Deserialize)]
struct FleetRow {
    id: String,
    a: f64,
    b: f64,
    c: f64,
    p_min: f64,
    p_max: f64,
    r_u: f64,
    r_d: f64,
    #[serde(rename = "K")]
    k: f64,
    ramp_up_dur: u32,
    ramp_down_dur: u32,
    min_on: u32,
    max_starts: u32,
    must_run_flag: u8,
}

impl From<&GeneratorParams> for FleetRow {
    fn from(g: &GeneratorParams) -> Self {
        Self {
            id: g.id.clone(),
            a: g.a,
            b: g.b,
            c: g.c,
            p_min: g.p_min,
            p_max: g.p_max,
            r_u: g.ramp_up,
            r_d: g.ramp_down,
            k: g.commit_penalty,
            ramp_up_dur: g.ramp_up_duration,
            ramp_down_dur: g.ramp_down_duration,
            min_on: g.min_on_time,
            max_starts: g.max_daily_starts,
            must_run_flag: g.must_run as u8,
        }
    }
}

impl From<FleetRow> for GeneratorParams {
    fn from(r: FleetRow) -> Self {
        Self {
            id: r.id,
            a: r.a,
            b: r.b,
            c: r.c,
            p_min: r.p_min,
            p_max: r.p_max,
            ramp_up: r.r_u,
            ramp_down: r.r_d,
            commit_penalty: r.k,
            ramp_up_duration: r.ramp_up_dur,
            ramp_down_duration: r.ramp_down_dur,
            min_on_time: r.min_on,
            max_daily_starts: r.max_starts,
            must_run: r.must_run_flag != 0,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_fleet(path: &Path, fleet: &[GeneratorParams]) -> Result<()> {
    let mut w = writer(path)?;
    for g in fleet {
        w.serialize(FleetRow::from(g))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a fleet CSV.
pub fn read_fleet(path: &Path) -> Result<Vec<GeneratorParams>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<FleetRow>() {
        let g = GeneratorParams::from(row?);
        g.validate()?;
        out.push(g);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct HydroRow {
    id: String,
    capacity_mw: f64,
    period_budget: usize,
}

pub fn write_hydro(path: &Path, units: &[HydroUnit]) -> Result<()> {
    let mut w = writer(path)?;
    for u in units {
        w.serialize(HydroRow {
            id: u.id.clone(),
            capacity_mw: u.capacity,
            period_budget: u.period_budget,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hydro(path: &Path) -> Result<Vec<HydroUnit>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<HydroRow>() {
        let row = row?;
        let u = HydroUnit {
            id: row.id,
            capacity: row.capacity_mw,
            period_budget: row.period_budget,
        };
        u.validate()?;
        out.push(u);
    }
    Ok(out)
}

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Serialize, Deserialize)]
struct LoadRow {
    timestamp: String,
    mw: f64,
}

pub fn write_load(path: &Path, series: &LoadSeries) -> Result<()> {
    let mut w = writer(path)?;
    for (t, v) in series.values.iter().enumerate() {
        w.serialize(LoadRow {
            timestamp: series.timestamp(t).format(TIME_FORMAT).to_string(),
            mw: *v,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `timestamp,mw` CSV. Samples must be evenly spaced unless
/// `resample_minutes` is given, in which case they are linearly interpolated
/// onto that grid.
pub fn read_load(path: &Path, resample_minutes: Option<f64>) -> Result<LoadSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let mut samples: Vec<(NaiveDateTime, f64)> = Vec::new();
    for row in r.deserialize::<LoadRow>() {
        let row = row?;
        let ts = NaiveDateTime::parse_from_str(&row.timestamp, TIME_FORMAT)
            .map_err(|e| Error::InvalidInput(format!("bad timestamp {:?}: {e}", row.timestamp)))?;
        samples.push((ts, row.mw));
    }
    let start = samples
        .first()
        .map(|s| s.0)
        .ok_or_else(|| Error::InvalidInput("load file has no rows".into()))?;
    let minutes: Vec<(f64, f64)> = samples
        .iter()
        .map(|(t, v)| ((*t - start).num_seconds() as f64 / 60.0, *v))
        .collect();
    if let Some(step) = resample_minutes {
        return LoadSeries::new(start, step, resample_linear(&minutes, step)?);
    }
    if minutes.len() < 2 {
        return LoadSeries::new(start, 5.0, minutes.iter().map(|m| m.1).collect());
    }
    let step = minutes[1].0 - minutes[0].0;
    if minutes.windows(2).any(|w| ((w[1].0 - w[0].0) - step).abs() > 1e-9) || step <= 0.0 {
        return Err(Error::InvalidInput(
            "load timestamps are not evenly spaced; pass a resampling period".into(),
        ));
    }
    LoadSeries::new(start, step, minutes.iter().map(|m| m.1).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    period: usize,
    demand: f64,
    sigma: f64,
    committed_count: usize,
    supply: f64,
    objective: f64,
    marginal_cost: f64,
    solve_ms: f64,
    fallback_flag: u8,
}

pub fn write_records(path: &Path, records: &[PeriodRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for r in records {
        w.serialize(RecordRow {
            period: r.period,
            demand: r.demand,
            sigma: r.sigma,
            committed_count: r.committed_count,
            supply: r.supply,
            objective: r.objective,
            marginal_cost: r.marginal_cost,
            solve_ms: r.solve_ms,
            fallback_flag: r.fallback as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// (demand, marginal cost) pairs from a run-record CSV.
pub fn read_record_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<RecordRow>() {
        let row = row?;
        out.push((row.demand, row.marginal_cost));
    }
    Ok(out)
}

pub fn write_schedule(path: &Path, schedule: &HydroSchedule) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["period", "demand", "placed", "residual"])?;
    for t in 0..schedule.placed.len() {
        w.write_record(&[
            t.to_string(),
            schedule.demand[t].to_string(),
            schedule.placed[t].to_string(),
            schedule.residual[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: f64,
    pub seconds: f64,
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize::<BenchRow>().collect::<std::result::Result<_, _>>()?)
}

/// A rolling-simulation scenario. Relative paths are resolved against the
/// scenario file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub fleet: PathBuf,
    pub load: PathBuf,
    #[serde(default)]
    pub hydro: Option<PathBuf>,
    /// Periods to simulate.
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Resample the load onto this period length, minutes.
    #[serde(default)]
    pub resample_minutes: Option<f64>,
    #[serde(flatten)]
    pub solver: SolverConfig,
}

impl Scenario {
    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        s.solver.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut s.fleet);
        resolve(&mut s.load);
        if let Some(h) = s.hydro.as_mut() {
            resolve(h);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::tests::unit;

    #[test]
    fn fleet_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fleet.csv");
        let mut g = unit("x", 10.0, 50.0);
        g.must_run = true;
        let fleet = vec![g, unit("y", 0.0, 20.0)];
        write_fleet(&p, &fleet).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "id,a,b,c,p_min,p_max,r_u,r_d,K,ramp_up_dur,ramp_down_dur,min_on,max_starts,must_run_flag\n"
        ));
        assert_eq!(read_fleet(&p).unwrap(), fleet);
    }

    #[test]
    fn invalid_fleet_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fleet.csv");
        std::fs::write(
            &p,
            "id,a,b,c,p_min,p_max,r_u,r_d,K,ramp_up_dur,ramp_down_dur,min_on,max_starts,must_run_flag\n\
             bad,0.1,1,1,60,50,5,5,1,1,1,1,1,0\n",
        )
        .unwrap();
        assert!(matches!(read_fleet(&p), Err(Error::InvalidGenerator { .. })));
    }

    #[test]
    fn hydro_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = vec![HydroUnit { id: "h1".into(), capacity: 2.5, period_budget: 7 }];
        let hp = dir.path().join("hydro.csv");
        write_hydro(&hp, &h).unwrap();
        assert_eq!(read_hydro(&hp).unwrap(), h);

        let series = LoadSeries::from_values(vec![1.0, 2.5, 3.0]);
        let lp = dir.path().join("load.csv");
        write_load(&lp, &series).unwrap();
        let back = read_load(&lp, None).unwrap();
        assert_eq!(back.values, series.values);
        assert_eq!(back.period_minutes, 5.0);
    }

    #[test]
    fn uneven_load_needs_resampling() {
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("load.csv");
        std::fs::write(
            &lp,
            "timestamp,mw\n2025-06-18T00:00:00,0\n2025-06-18T00:10:00,10\n2025-06-18T00:30:00,0\n",
        )
        .unwrap();
        assert!(read_load(&lp, None).is_err());
        let s = read_load(&lp, Some(5.0)).unwrap();
        assert_eq!(s.values, vec![0.0, 5.0, 10.0, 7.5, 5.0, 2.5, 0.0]);
    }

    #[test]
    fn scenario_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("s.json");
        std::fs::write(
            &sp,
            r#"{"fleet": "f.csv", "load": "/abs/l.csv", "horizon": 288, "fpm_count": 1, "beta": 0.002}"#,
        )
        .unwrap();
        let s = Scenario::load_file(&sp).unwrap();
        assert_eq!(s.fleet, dir.path().join("f.csv"));
        assert_eq!(s.load, PathBuf::from("/abs/l.csv"));
        assert_eq!(s.solver.fpm_count, 1);
        assert_eq!(s.solver.beta, 0.002);
        assert_eq!(s.solver.gamma, 1.0);
        assert!(s.hydro.is_none());
    }

    #[test]
    fn bench_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bench.csv");
        let rows = vec![BenchRow { size: 42.0, seconds: 0.5 }, BenchRow { size: 84.0, seconds: 1.25 }];
        write_bench(&p, &rows).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("size,seconds\n"));
        assert_eq!(read_bench(&p).unwrap(), rows);
    }
}
