//! Post-run analytics: system marginal cost, demand/cost histogram,
//! polynomial fits with adjusted R², and log-log scaling exponents.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{Action, Fleet};
use crate::rounding::CommitmentDecision;

/// Highest incremental cost 2aP + b among units dispatched in `decision`;
/// `None` when nothing is dispatched.
pub fn marginal_cost(fleet: &Fleet, decision: &CommitmentDecision) -> Option<f64> {
    decision
        .actions
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Some(Action::StayOn))
        .map(|(i, _)| fleet.units[i].params.marginal_cost(decision.output[i]))
        .reduce(f64::max)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub demand_edges: Vec<f64>,
    pub cost_edges: Vec<f64>,
    /// counts[demand_bin][cost_bin].
    pub counts: Vec<Vec<usize>>,
    pub pearson: f64,
    /// Every row and column has its nonzero cells within 3 adjacent bins.
    pub narrow_band: bool,
}

impl Histogram2d {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Rows of `demand_bin,cost_bin,count` for nonzero cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("demand_bin,cost_bin,count\n");
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    out.push_str(&format!("{i},{j},{c}\n"));
                }
            }
        }
        out
    }
}

fn edges(v: &[f64], bins: usize) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

fn bin_of(v: f64, e: &[f64]) -> usize {
    let bins = e.len() - 1;
    let (lo, hi) = (e[0], e[bins]);
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
}

/// Equal-width 2-D histogram of (demand, marginal cost) pairs. Pairs with a
/// non-finite cost are skipped.
pub fn demand_cost_histogram(demand: &[f64], cost: &[f64], bins: (usize, usize)) -> Result<Histogram2d> {
    if demand.len() != cost.len() {
        return Err(Error::LengthMismatch {
            expected: demand.len(),
            actual: cost.len(),
        });
    }
    if bins.0 == 0 || bins.1 == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin per axis".into()));
    }
    let (d, c): (Vec<f64>, Vec<f64>) = demand
        .iter()
        .zip(cost)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if d.is_empty() {
        return Err(Error::InvalidInput("no finite demand/cost pairs".into()));
    }
    let de = edges(&d, bins.0);
    let ce = edges(&c, bins.1);
    let mut counts = vec![vec![0usize; bins.1]; bins.0];
    for (a, b) in d.iter().zip(&c) {
        counts[bin_of(*a, &de)][bin_of(*b, &ce)] += 1;
    }
    let span_ok = |cells: &mut dyn Iterator<Item = usize>| {
        let nz: Vec<usize> = cells.collect();
        match (nz.first(), nz.last()) {
            (Some(f), Some(l)) => l - f < 3,
            _ => true,
        }
    };
    let rows_ok = (0..bins.0).all(|i| span_ok(&mut (0..bins.1).filter(|&j| counts[i][j] > 0)));
    let cols_ok = (0..bins.1).all(|j| span_ok(&mut (0..bins.0).filter(|&i| counts[i][j] > 0)));
    Ok(Histogram2d {
        demand_edges: de,
        cost_edges: ce,
        counts,
        pearson: pearson(&d, &c),
        narrow_band: rows_ok && cols_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Coefficients of 1, x, x², … in raw demand units.
    pub coefficients: Vec<f64>,
    /// Coefficients in the standardized variable z = (x − mean) / scale.
    pub standardized: Vec<f64>,
    pub mean: f64,
    pub scale: f64,
    pub r2: f64,
    pub adjusted_r2: f64,
    /// Standardized linear coefficient is positive and the largest in magnitude
    /// among the non-constant terms.
    pub linear_dominant: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares polynomial of `degree` in standardized x.
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if !(1..=4).contains(&degree) {
        return Err(Error::InvalidInput(format!("degree {degree} outside 1..=4")));
    }
    let n = x.len();
    if n < degree + 2 {
        return Err(Error::InvalidInput(format!("{n} points are too few for degree {degree}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::RankDeficient);
    }
    let design = DMatrix::from_fn(n, degree + 1, |i, j| ((x[i] - mean) / sd).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 {
        return Err(Error::RankDeficient);
    }
    let beta = svd.solve(&rhs, 0.0).map_err(|_| Error::RankDeficient)?;
    let fitted = &design * &beta;
    let my = y.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let adjusted_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - degree - 1) as f64;

    // Σ β_j ((x − m)/s)^j expanded into powers of x.
    let mut raw = vec![0.0; degree + 1];
    for (j, b) in beta.iter().enumerate() {
        let f = b / sd.powi(j as i32);
        for k in 0..=j {
            raw[k] += f * binomial(j, k) * (-mean).powi((j - k) as i32);
        }
    }
    let standardized: Vec<f64> = beta.iter().copied().collect();
    let linear_dominant = standardized[1] > 0.0
        && standardized[2..].iter().all(|b| b.abs() <= standardized[1].abs());
    Ok(PolyFit {
        degree,
        coefficients: raw,
        standardized,
        mean,
        scale: sd,
        r2,
        adjusted_r2,
        linear_dominant,
    })
}

/// Slope of the least-squares line through (ln size, ln time).
pub fn scaling_fit(sizes: &[f64], times: &[f64]) -> Result<f64> {
    if sizes.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: sizes.len(),
            actual: times.len(),
        });
    }
    if sizes.len() < 3 {
        return Err(Error::InvalidInput("scaling fit needs at least 3 points".into()));
    }
    if sizes.iter().chain(times).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("sizes and times must be positive".into()));
    }
    let lx: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("sizes must not all be equal".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{tests::unit, UnitState};

    #[test]
    fn marginal_cost_is_max_over_dispatched() {
        let mut g = unit("a", 0.0, 100.0);
        g.a = 0.01;
        g.b = 10.0;
        let mut h = unit("b", 0.0, 100.0);
        h.a = 0.0;
        h.b = 10.5;
        let fleet = Fleet {
            units: vec![
                crate::fleet::Unit { params: g, state: UnitState::on(50.0, 9) },
                crate::fleet::Unit { params: h, state: UnitState::on(10.0, 9) },
            ],
        };
        let mut d = CommitmentDecision {
            actions: vec![Some(Action::StayOn), Some(Action::StayOff)],
            output: vec![50.0, 0.0],
            k: 0,
            committed: 1,
            objective: 0.0,
            dispatch_cost: 0.0,
            ramp_cost: 0.0,
            penalty_cost: 0.0,
            start_bias: 0.0,
            lambda: 0.0,
            supply: 50.0,
            shortfall: 0.0,
            coverage: vec![],
            fallback: false,
            degenerate_range: false,
        };
        assert!((marginal_cost(&fleet, &d).unwrap() - 11.0).abs() < 1e-12);
        d.actions[1] = Some(Action::StayOn);
        d.output[1] = 5.0;
        assert!((marginal_cost(&fleet, &d).unwrap() - 11.0).abs() < 1e-12);
        d.output[0] = 10.0;
        assert!((marginal_cost(&fleet, &d).unwrap() - 10.5).abs() < 1e-12);
        d.actions = vec![Some(Action::StayOff); 2];
        assert_eq!(marginal_cost(&fleet, &d), None);
    }

    #[test]
    fn constant_pairs_fill_one_bin() {
        let h = demand_cost_histogram(&[5.0; 10], &[2.0; 10], (15, 15)).unwrap();
        assert_eq!(h.counts[0][0], 10);
        assert_eq!(h.total(), 10);
        assert!(h.narrow_band);
    }

    #[test]
    fn histogram_counts_sum_and_correlation() {
        let d: Vec<f64> = (0..300).map(|i| 1000.0 + i as f64).collect();
        let c: Vec<f64> = d.iter().map(|x| 0.02 * x + 3.0).collect();
        let h = demand_cost_histogram(&d, &c, (15, 15)).unwrap();
        assert_eq!(h.total(), 300);
        assert!((h.pearson - 1.0).abs() < 1e-12);
        assert!(h.narrow_band);
        assert!(h.to_csv().starts_with("demand_bin,cost_bin,count\n0,0,20\n"));
    }

    #[test]
    fn exact_line_fit() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = poly_fit(&x, &y, 1).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-9);
        assert!((f.adjusted_r2 - 1.0).abs() < 1e-12);
        assert!(f.linear_dominant);
    }

    #[test]
    fn cubic_fit_recovers_raw_coefficients() {
        let x: Vec<f64> = (0..40).map(|i| 100.0 + 5.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v + 0.002 * v * v + 1e-6 * v * v * v).collect();
        let f3 = poly_fit(&x, &y, 3).unwrap();
        for (a, b) in f3.coefficients.iter().zip([3.0, -0.5, 0.002, 1e-6]) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{:?}", f3.coefficients);
        }
        let f1 = poly_fit(&x, &y, 1).unwrap();
        assert!(f3.adjusted_r2 >= f1.adjusted_r2);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(poly_fit(&[1.0; 6], &[1.0; 6], 2), Err(Error::RankDeficient)));
        assert!(poly_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2).is_err());
        assert!(poly_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 5).is_err());
    }

    #[test]
    fn scaling_exponents() {
        let n = [42.0, 84.0, 168.0, 336.0];
        let t: Vec<f64> = n.iter().map(|v: &f64| 0.3 * v.powf(1.5)).collect();
        assert!((scaling_fit(&n, &t).unwrap() - 1.5).abs() < 1e-9);
        assert!(scaling_fit(&n, &[2.0; 4]).unwrap().abs() < 1e-12);
        let big = [1e4, 2e4, 4e4];
        let nl: Vec<f64> = big.iter().map(|v: &f64| v * v.ln()).collect();
        let e = scaling_fit(&big, &nl).unwrap();
        assert!(e > 1.0 && e < 1.15, "{e}");
        assert!(scaling_fit(&n, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(scaling_fit(&n[..2], &t[..2]).is_err());
    }
}
