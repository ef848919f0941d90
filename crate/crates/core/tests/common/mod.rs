//! Independent reference solvers shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rruc_core::dispatch::DispatchUnit;
use rruc_core::fleet::HydroUnit;

/// Exact dispatch by enumerating every lo / hi / interior status pattern.
/// For each pattern the interior units share a price λ solving the balance
/// row (or sit at their unconstrained minimum if the row is slack); the
/// cheapest pattern that satisfies all KKT sign conditions is optimal
/// because the problem is convex. Requires a > 0 on every unit.
pub fn dispatch_oracle(units: &[DispatchUnit], demand: f64) -> (f64, Vec<f64>) {
    let n = units.len();
    assert!(n <= 10 && units.iter().all(|u| u.a > 0.0));
    let tol = 1e-9;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut status = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            status.push(c % 3);
            c /= 3;
        }
        // Candidate prices: the slack case and the binding-row case.
        let fixed: f64 = units
            .iter()
            .zip(&status)
            .map(|(u, &s)| match s {
                0 => u.lo,
                1 => u.hi,
                _ => 0.0,
            })
            .sum();
        let (mut num, mut den) = (demand - fixed, 0.0);
        for (u, &s) in units.iter().zip(&status) {
            if s == 2 {
                num += u.b / (2.0 * u.a);
                den += 1.0 / (2.0 * u.a);
            }
        }
        let mut prices = vec![0.0];
        if den > 0.0 {
            prices.push(num / den);
        }
        for lambda in prices {
            if lambda < -tol {
                continue;
            }
            let p: Vec<f64> = units
                .iter()
                .zip(&status)
                .map(|(u, &s)| match s {
                    0 => u.lo,
                    1 => u.hi,
                    _ => (lambda - u.b) / (2.0 * u.a),
                })
                .collect();
            let total: f64 = p.iter().sum();
            let scale = 1.0 + demand.abs();
            if total < demand - 1e-9 * scale {
                continue;
            }
            if lambda > tol && (total - demand).abs() > 1e-9 * scale {
                continue;
            }
            let ok = units.iter().zip(&status).zip(&p).all(|((u, &s), &pj)| {
                let mc = 2.0 * u.a * pj + u.b;
                let slack = 1e-9 * (1.0 + mc.abs());
                match s {
                    0 => mc >= lambda - slack,
                    1 => mc <= lambda + slack,
                    _ => pj >= u.lo - 1e-9 && pj <= u.hi + 1e-9,
                }
            });
            if !ok {
                continue;
            }
            let cost: f64 = units.iter().zip(&p).map(|(u, &pj)| (u.a * pj + u.b) * pj + u.c).sum();
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, p));
            }
        }
    }
    best.expect("a feasible instance has a KKT point")
}

pub fn random_dispatch(rng: &mut impl Rng, max_units: usize) -> (Vec<DispatchUnit>, f64) {
    let n = rng.gen_range(1..=max_units);
    let units: Vec<DispatchUnit> = (0..n)
        .map(|_| {
            let lo = rng.gen_range(0.0..100.0);
            DispatchUnit {
                a: rng.gen_range(0.001..0.2),
                b: rng.gen_range(0.0..50.0),
                c: rng.gen_range(0.0..200.0),
                lo,
                hi: lo + rng.gen_range(1.0..400.0),
                penalty: 0.0,
            }
        })
        .collect();
    let lo: f64 = units.iter().map(|u| u.lo).sum();
    let hi: f64 = units.iter().map(|u| u.hi).sum();
    (units, rng.gen_range(lo..=hi))
}

pub fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Minimum residual variance with every unit used on exactly its budget of
/// distinct periods. With the total energy fixed the mean is fixed, so this
/// minimizes Σ (d_t − L_t)² by memoized recursion over (period, remaining).
pub fn hydro_optimum(demands: &[f64], units: &[HydroUnit]) -> f64 {
    fn go(
        t: usize,
        remaining: &mut Vec<usize>,
        demands: &[f64],
        units: &[HydroUnit],
        memo: &mut HashMap<(usize, Vec<usize>), f64>,
    ) -> f64 {
        let n = demands.len();
        if remaining.iter().any(|&r| r > n - t) {
            return f64::INFINITY;
        }
        if t == n {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(t, remaining.clone())) {
            return v;
        }
        let m = units.len();
        let mut best = f64::INFINITY;
        for mask in 0..(1usize << m) {
            if (0..m).any(|j| mask >> j & 1 == 1 && remaining[j] == 0) {
                continue;
            }
            let load: f64 = (0..m).filter(|j| mask >> j & 1 == 1).map(|j| units[j].capacity).sum();
            for j in (0..m).filter(|j| mask >> j & 1 == 1) {
                remaining[j] -= 1;
            }
            let rest = go(t + 1, remaining, demands, units, memo);
            for j in (0..m).filter(|j| mask >> j & 1 == 1) {
                remaining[j] += 1;
            }
            let r = demands[t] - load;
            best = best.min(r * r + rest);
        }
        memo.insert((t, remaining.clone()), best);
        best
    }
    let n = demands.len() as f64;
    let mut remaining: Vec<usize> = units.iter().map(|u| u.period_budget).collect();
    let sum_sq = go(0, &mut remaining, demands, units, &mut HashMap::new());
    let energy: f64 = units.iter().map(|u| u.capacity * u.period_budget as f64).sum();
    let mean = (demands.iter().sum::<f64>() - energy) / n;
    (sum_sq / n - mean * mean).max(0.0)
}

/// Literal enumeration of every budget-sized period subset per unit; only
/// for tiny instances.
pub fn hydro_enumerate(demands: &[f64], units: &[HydroUnit]) -> f64 {
    let n = demands.len();
    let subsets: Vec<Vec<usize>> = units
        .iter()
        .map(|u| (0..1usize << n).filter(|s| s.count_ones() as usize == u.period_budget).collect())
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; units.len()];
    loop {
        let mut r = demands.to_vec();
        for (j, u) in units.iter().enumerate() {
            let s = subsets[j][idx[j]];
            for (t, rt) in r.iter_mut().enumerate() {
                if s >> t & 1 == 1 {
                    *rt -= u.capacity;
                }
            }
        }
        best = best.min(population_variance(&r));
        let mut j = 0;
        loop {
            if j == units.len() {
                return best;
            }
            idx[j] += 1;
            if idx[j] < subsets[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

pub fn random_hydro(rng: &mut impl Rng, max_units: usize, max_periods: usize) -> (Vec<f64>, Vec<HydroUnit>) {
    let n = rng.gen_range(1..=max_periods);
    let m = rng.gen_range(1..=max_units);
    let demands = (0..n).map(|_| rng.gen_range(1.0..=100.0)).collect();
    let units = (0..m)
        .map(|j| HydroUnit {
            id: format!("h{j}"),
            capacity: rng.gen_range(1.0..=20.0),
            period_budget: rng.gen_range(0..=n),
        })
        .collect();
    (demands, units)
}
