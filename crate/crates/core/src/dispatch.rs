//! Economic dispatch by equal incremental cost.
//!
//! For a fixed committed set, min Σ (a P² + b P + c) s.t. Σ P ≥ D and box
//! limits. At the optimum every unit not at a bound runs at the common
//! incremental cost λ, so P_j(λ) = clamp((λ − b_j)/(2 a_j), lo_j, hi_j) and λ
//! is found by bisection on the monotone total Σ P_j(λ).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchUnit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lo: f64,
    pub hi: f64,
    /// Commitment-change penalty attached to this unit for the candidate
    /// commitment; constant for a fixed commitment.
    pub penalty: f64,
}

impl DispatchUnit {
    pub fn cost(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub p: Vec<f64>,
    /// System incremental cost; zero when the demand constraint is slack.
    pub lambda: f64,
    /// Σ a P² + b P + c.
    pub running_cost: f64,
    /// running_cost plus every unit's penalty.
    pub objective: f64,
}

/// Weighted incremental-cost allocation: min Σ w_j (a_j P_j² + b_j P_j)
/// s.t. Σ w_j P_j ≥ demand, lo_j ≤ P_j ≤ hi_j, all w_j > 0.
///
/// The weights cancel in stationarity, so the same λ rule applies. Units with
/// a = 0 are steps at λ = b and absorb the remainder in slice order.
/// Returns (λ, P).
pub(crate) fn allocate(units: &[(f64, f64, f64, f64, f64)], demand: f64) -> Result<(f64, Vec<f64>)> {
    // (a, b, lo, hi, w)
    let at = |lambda: f64, upper_step: bool| -> Vec<f64> {
        units
            .iter()
            .map(|&(a, b, lo, hi, _)| {
                if a > 0.0 {
                    ((lambda - b) / (2.0 * a)).clamp(lo, hi)
                } else if lambda > b || (upper_step && lambda == b) {
                    hi
                } else {
                    lo
                }
            })
            .collect()
    };
    let total = |p: &[f64]| -> f64 { p.iter().zip(units).map(|(p, u)| p * u.4).sum() };

    let cap: f64 = units.iter().map(|u| u.3 * u.4).sum();
    if cap < demand {
        return Err(Error::InsufficientCapacity {
            required: demand,
            available: cap,
        });
    }
    let free = at(0.0, false);
    if total(&free) >= demand {
        return Ok((0.0, free));
    }

    let mut lo_l = 0.0_f64;
    let mut hi_l = units
        .iter()
        .map(|&(a, b, _, hi, _)| 2.0 * a * hi + b)
        .fold(0.0_f64, f64::max)
        .max(1.0)
        * 2.0;
    while total(&at(hi_l, true)) < demand {
        hi_l *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_l + hi_l);
        if mid <= lo_l || mid >= hi_l {
            break;
        }
        if total(&at(mid, true)) >= demand {
            hi_l = mid;
        } else {
            lo_l = mid;
        }
    }

    // a > 0 units at the upper end of the bracket; steps inside the bracket
    // are marginal and fill the gap in order.
    let mut p: Vec<f64> = units
        .iter()
        .map(|&(a, b, lo, hi, _)| {
            if a > 0.0 {
                ((hi_l - b) / (2.0 * a)).clamp(lo, hi)
            } else if b < lo_l {
                hi
            } else {
                lo
            }
        })
        .collect();
    let mut deficit = demand - total(&p);
    for (j, &(a, b, lo, hi, w)) in units.iter().enumerate() {
        if deficit <= 0.0 {
            break;
        }
        if a == 0.0 && b >= lo_l && b <= hi_l {
            let add = (deficit / w).min(hi - lo);
            p[j] += add;
            deficit -= add * w;
        }
    }
    if deficit > 0.0 {
        // Only reachable through rounding; saturate whatever headroom remains.
        for (j, &(_, _, _, hi, w)) in units.iter().enumerate() {
            if deficit <= 0.0 {
                break;
            }
            let add = (deficit / w).min(hi - p[j]);
            if add > 0.0 {
                p[j] += add;
                deficit -= add * w;
            }
        }
    }
    Ok((hi_l, p))
}

/// Least-cost dispatch of a committed set against demand `demand`.
pub fn economic_dispatch(units: &[DispatchUnit], demand: f64) -> Result<DispatchResult> {
    for u in units {
        if !(u.lo <= u.hi) || u.a < 0.0 {
            return Err(Error::InvalidInput(format!(
                "invalid dispatch unit: box [{}, {}], a = {}",
                u.lo, u.hi, u.a
            )));
        }
    }
    let spec: Vec<_> = units.iter().map(|u| (u.a, u.b, u.lo, u.hi, 1.0)).collect();
    let (lambda, p) = allocate(&spec, demand)?;
    let running_cost: f64 = units.iter().zip(&p).map(|(u, &p)| u.cost(p)).sum();
    let penalties: f64 = units.iter().map(|u| u.penalty).sum();
    Ok(DispatchResult {
        p,
        lambda,
        running_cost,
        objective: running_cost + penalties,
    })
}
