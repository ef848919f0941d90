//! Hydro pre-commitment: place all-or-nothing hydro output on the periods
//! that flatten residual demand the most, using an indexed min-heap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::HydroUnit;
use crate::forecast::LoadSeries;
use crate::heap::IndexedMinHeap;

/// Order in which units are placed. Only `KappaSqrtPi` carries the
/// optimality-gap guarantee; the others exist for experiments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydroOrdering {
    #[default]
    KappaSqrtPi,
    Kappa,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceProblem {
    pub demands: Vec<f64>,
    pub units: Vec<HydroUnit>,
    pub warnings: Vec<String>,
}

impl BalanceProblem {
    /// Validates units and clamps any period budget above the horizon.
    pub fn new(demands: Vec<f64>, units: Vec<HydroUnit>) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::InvalidInput("hydro problem needs at least one period".into()));
        }
        if let Some(d) = demands.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid demand {d}")));
        }
        let n = demands.len();
        let mut warnings = Vec::new();
        let mut units = units;
        for u in &mut units {
            u.validate()?;
            if u.period_budget > n {
                warnings.push(format!(
                    "hydro unit {}: period budget {} clamped to horizon {n}",
                    u.id, u.period_budget
                ));
                u.period_budget = n;
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self {
            demands,
            units,
            warnings,
        })
    }

    pub fn periods(&self) -> usize {
        self.demands.len()
    }

    /// Largest unit capacity K (0 with no units).
    pub fn max_capacity(&self) -> f64 {
        self.units.iter().map(|u| u.capacity).fold(0.0, f64::max)
    }

    /// Total hydro energy V = Σ κ π.
    pub fn energy(&self) -> f64 {
        self.units.iter().map(|u| u.capacity * u.period_budget as f64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroSchedule {
    pub demand: Vec<f64>,
    pub placed: Vec<f64>,
    pub residual: Vec<f64>,
    /// Population variance of the residual.
    pub variance: f64,
    /// Unit id and its assigned periods, ascending.
    pub assignment: Vec<(String, Vec<usize>)>,
    pub warnings: Vec<String>,
}

pub fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn schedule_from(problem: &BalanceProblem, placed: Vec<f64>, mut assignment: Vec<(String, Vec<usize>)>) -> HydroSchedule {
    for (_, p) in &mut assignment {
        p.sort_unstable();
    }
    let residual: Vec<f64> = problem.demands.iter().zip(&placed).map(|(d, l)| d - l).collect();
    HydroSchedule {
        demand: problem.demands.clone(),
        variance: variance(&residual),
        placed,
        residual,
        assignment,
        warnings: problem.warnings.clone(),
    }
}

pub fn balance(problem: &BalanceProblem) -> HydroSchedule {
    balance_with(problem, HydroOrdering::KappaSqrtPi)
}

/// Greedy heap placement. Each period's key is L_t − T_t, where T_t is its
/// demand above the mean residual; units are placed one period at a time on
/// the lowest key. A period is masked with +∞ as soon as the current unit
/// takes it, and restored with its updated key once the unit is done.
pub fn balance_with(problem: &BalanceProblem, ordering: HydroOrdering) -> HydroSchedule {
    let n = problem.periods();
    let r_bar = (problem.demands.iter().sum::<f64>() - problem.energy()) / n as f64;
    let mut placed = vec![0.0; n];
    let mut heap = IndexedMinHeap::new(problem.demands.iter().map(|d| r_bar - d).collect());
    let mut masked: Vec<(usize, f64)> = Vec::new();

    let mut order: Vec<usize> = (0..problem.units.len()).collect();
    let score = |u: &HydroUnit| match ordering {
        HydroOrdering::KappaSqrtPi => u.capacity * (u.period_budget as f64).sqrt(),
        HydroOrdering::Kappa => u.capacity,
        HydroOrdering::Energy => u.capacity * u.period_budget as f64,
    };
    order.sort_by(|&a, &b| {
        let (ua, ub) = (&problem.units[a], &problem.units[b]);
        score(ub).total_cmp(&score(ua)).then(ua.id.cmp(&ub.id))
    });

    let mut assignment = Vec::with_capacity(order.len());
    for &j in &order {
        let unit = &problem.units[j];
        let mut periods = Vec::with_capacity(unit.period_budget);
        for _ in 0..unit.period_budget {
            let (t, key) = heap.peek().expect("horizon is non-empty");
            debug_assert!(key.is_finite(), "budget is clamped to the horizon");
            placed[t] += unit.capacity;
            masked.push((t, key + unit.capacity));
            heap.set_key(t, f64::INFINITY);
            periods.push(t);
        }
        heap.set_keys(&masked);
        masked.clear();
        assignment.push((unit.id.clone(), periods));
    }
    schedule_from(problem, placed, assignment)
}

/// Exact minimum-variance placement with every unit used on exactly its
/// period budget. Dynamic program over periods whose state is the vector of
/// remaining placements per unit.
pub fn brute_force_optimum(problem: &BalanceProblem) -> Result<HydroSchedule> {
    let n = problem.periods();
    let m = problem.units.len();
    if m > 4 || n > 12 {
        return Err(Error::InstanceTooLarge(format!(
            "exact search supports at most 4 units and 12 periods, got {m} and {n}"
        )));
    }
    let radix: Vec<usize> = problem.units.iter().map(|u| u.period_budget + 1).collect();
    let states: usize = radix.iter().product();
    let mut stride = vec![1usize; m];
    for j in 1..m {
        stride[j] = stride[j - 1] * radix[j - 1];
    }
    let count = |s: usize, j: usize| (s / stride[j]) % radix[j];
    let subset_cap: Vec<f64> = (0..1usize << m)
        .map(|mask| (0..m).filter(|&j| mask >> j & 1 == 1).map(|j| problem.units[j].capacity).sum())
        .collect();

    // value[t][s]: min Σ_{τ≥t} r_τ² with s placements still owed.
    let mut value = vec![vec![f64::INFINITY; states]; n + 1];
    let mut choice = vec![vec![0usize; states]; n];
    value[n][0] = 0.0;
    for t in (0..n).rev() {
        let left = n - t;
        for s in 0..states {
            if (0..m).any(|j| count(s, j) > left) {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for mask in 0..1usize << m {
                if (0..m).any(|j| mask >> j & 1 == 1 && count(s, j) == 0) {
                    continue;
                }
                let next = s - (0..m).filter(|&j| mask >> j & 1 == 1).map(|j| stride[j]).sum::<usize>();
                let r = problem.demands[t] - subset_cap[mask];
                let v = r * r + value[t + 1][next];
                if v < best {
                    best = v;
                    arg = mask;
                }
            }
            value[t][s] = best;
            choice[t][s] = arg;
        }
    }

    let mut s: usize = (0..m).map(|j| problem.units[j].period_budget * stride[j]).sum();
    let mut placed = vec![0.0; n];
    let mut assignment: Vec<(String, Vec<usize>)> =
        problem.units.iter().map(|u| (u.id.clone(), Vec::new())).collect();
    for t in 0..n {
        let mask = choice[t][s];
        for j in 0..m {
            if mask >> j & 1 == 1 {
                placed[t] += problem.units[j].capacity;
                assignment[j].1.push(t);
                s -= stride[j];
            }
        }
    }
    Ok(schedule_from(problem, placed, assignment))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compare the heap placement against the exact optimum:
/// 0 ≤ Var(heap) − Var* ≤ K² + 2K√Var*.
pub fn check_theorem1(problem: &BalanceProblem) -> Result<GapCheck> {
    let opt = brute_force_optimum(problem)?;
    let alg = balance(problem);
    let k = problem.max_capacity();
    let gap = alg.variance - opt.variance;
    let bound = k * k + 2.0 * k * opt.variance.max(0.0).sqrt();
    Ok(GapCheck {
        gap,
        bound,
        holds: gap <= bound + 1e-9 && gap >= -1e-9,
    })
}

/// Residual demand series d − L, floored at zero.
pub fn apply_schedule(schedule: &HydroSchedule, series: &LoadSeries) -> Result<LoadSeries> {
    if schedule.placed.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            actual: schedule.placed.len(),
        });
    }
    let mut over = 0;
    let values = series
        .values
        .iter()
        .zip(&schedule.placed)
        .map(|(d, l)| {
            if l > d {
                over += 1;
            }
            (d - l).max(0.0)
        })
        .collect();
    if over > 0 {
        log::warn!("hydro placement exceeds demand in {over} periods; residual floored at zero");
    }
    Ok(LoadSeries {
        start: series.start,
        period_minutes: series.period_minutes,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hu(id: &str, capacity: f64, period_budget: usize) -> HydroUnit {
        HydroUnit {
            id: id.into(),
            capacity,
            period_budget,
        }
    }

    #[test]
    fn single_unit_takes_peak() {
        let p = BalanceProblem::new(vec![10.0, 6.0, 6.0], vec![hu("h", 5.0, 1)]).unwrap();
        let s = balance(&p);
        assert_eq!(s.placed, vec![5.0, 0.0, 0.0]);
        assert_eq!(s.residual, vec![5.0, 6.0, 6.0]);
        assert!((s.variance - 2.0 / 9.0).abs() < 1e-12);
        let o = brute_force_optimum(&p).unwrap();
        assert!((o.variance - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn no_units_is_identity() {
        let d = vec![3.0, 9.0, 4.0, 1.0];
        let p = BalanceProblem::new(d.clone(), vec![]).unwrap();
        let s = balance(&p);
        assert_eq!(s.residual, d);
        assert!((s.variance - variance(&d)).abs() < 1e-12);
        let g = check_theorem1(&p).unwrap();
        assert_eq!((g.gap, g.bound, g.holds), (0.0, 0.0, true));
    }

    #[test]
    fn full_budget_shifts_uniformly() {
        let d = vec![7.0, 2.0, 11.0, 5.0, 5.0];
        let p = BalanceProblem::new(d.clone(), vec![hu("h", 1.0, 5)]).unwrap();
        let s = balance(&p);
        assert_eq!(s.placed, vec![1.0; 5]);
        assert!((s.variance - variance(&d)).abs() < 1e-12);
    }

    #[test]
    fn budget_clamped_with_warning() {
        let p = BalanceProblem::new(vec![1.0, 2.0], vec![hu("h", 1.0, 5)]).unwrap();
        assert_eq!(p.units[0].period_budget, 2);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn no_double_placement_and_mean_shift() {
        let d: Vec<f64> = (0..40).map(|i| 50.0 + ((i * 37) % 23) as f64).collect();
        let units = vec![hu("a", 9.0, 30), hu("b", 4.0, 12), hu("c", 15.0, 3)];
        let p = BalanceProblem::new(d.clone(), units).unwrap();
        let s = balance(&p);
        for ((_, periods), u) in s.assignment.iter().zip([30, 3, 12]) {
            let mut q = periods.clone();
            q.dedup();
            assert_eq!(q.len(), u);
        }
        let mean_r = s.residual.iter().sum::<f64>() / 40.0;
        let mean_d = d.iter().sum::<f64>() / 40.0;
        assert!((mean_r - (mean_d - p.energy() / 40.0)).abs() < 1e-9);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let p = BalanceProblem::new(vec![1.0; 13], vec![hu("h", 1.0, 1)]).unwrap();
        assert!(matches!(brute_force_optimum(&p), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn apply_schedule_floors_and_checks_length() {
        let series = LoadSeries::from_values(vec![10.0, 6.0, 6.0]);
        let p = BalanceProblem::new(series.values.clone(), vec![hu("h", 8.0, 1)]).unwrap();
        let s = balance(&p);
        let r = apply_schedule(&s, &series).unwrap();
        assert_eq!(r.values, vec![2.0, 6.0, 6.0]);
        let short = LoadSeries::from_values(vec![1.0]);
        assert!(apply_schedule(&s, &short).is_err());
        let p = BalanceProblem::new(vec![4.0], vec![hu("h", 8.0, 1)]).unwrap();
        let r = apply_schedule(&balance(&p), &LoadSeries::from_values(vec![4.0])).unwrap();
        assert_eq!(r.values, vec![0.0]);
    }
}
