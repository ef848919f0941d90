//! Primal-dual interior-point solver for separable box-constrained QPs with a
//! handful of dense linear inequality rows:
//!
//!   min Σ ½ h_i x_i² + g_i x_i   s.t.  G x ≤ r,  0 ≤ x ≤ 1.
//!
//! The Newton system is reduced to an m×m SPD system in the row multipliers,
//! so each iteration costs O(n·m²).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BoxQp {
    /// Diagonal Hessian, h_i ≥ 0.
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    /// Dense rows of G.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    /// Row multipliers in the original scaling.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Worst row violation max(0, G x − r) in original units.
    pub primal_residual: f64,
}

const MAX_ITERS: usize = 150;
const TOL: f64 = 1e-11;

impl BoxQp {
    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.h.iter().zip(&self.g))
            .map(|(x, (h, g))| 0.5 * h * x * x + g * x)
            .sum()
    }

    pub fn row_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, r)| (dot(row, x) - r).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<BoxQpSolution> {
        let n = self.g.len();
        // Constant rows either hold trivially or make the problem infeasible.
        let mut row_idx = Vec::new();
        for (j, row) in self.rows.iter().enumerate() {
            let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                if self.rhs[j] < -1e-9 * self.rhs[j].abs().max(1.0) {
                    return Err(Error::Infeasible(format!("constant row {j} violated")));
                }
            } else {
                row_idx.push((j, scale));
            }
        }
        if n == 0 {
            return Ok(BoxQpSolution {
                x: Vec::new(),
                duals: vec![0.0; self.rows.len()],
                iterations: 0,
                primal_residual: 0.0,
            });
        }
        // Quick box-level infeasibility: a row that cannot be met even at its
        // most favourable corner.
        for &(j, _) in &row_idx {
            let best: f64 = self.rows[j].iter().map(|v| v.min(0.0)).sum();
            if best > self.rhs[j] + 1e-9 * self.rhs[j].abs().max(1.0) {
                return Err(Error::Infeasible(format!(
                    "row {j} needs {best:.6} <= {:.6}",
                    self.rhs[j]
                )));
            }
        }

        let m = row_idx.len();
        let obj_scale = self
            .g
            .iter()
            .map(|v| v.abs())
            .chain(self.h.iter().copied())
            .fold(0.0_f64, f64::max)
            .max(1e-300);
        let h: Vec<f64> = self.h.iter().map(|v| v / obj_scale).collect();
        let g: Vec<f64> = self.g.iter().map(|v| v / obj_scale).collect();
        let rows: Vec<Vec<f64>> = row_idx
            .iter()
            .map(|&(j, s)| self.rows[j].iter().map(|v| v / s).collect())
            .collect();
        let rhs: Vec<f64> = row_idx.iter().map(|&(j, s)| self.rhs[j] / s).collect();

        let mut x = vec![0.5; n];
        let mut zl = vec![1.0; n];
        let mut zu = vec![1.0; n];
        let mut s: Vec<f64> = rows
            .iter()
            .zip(&rhs)
            .map(|(row, r)| (r - dot(row, &x)).max(1.0))
            .collect();
        let mut lam = vec![1.0; m];

        let mut iterations = 0;
        let mut converged = false;
        for it in 0..MAX_ITERS {
            iterations = it + 1;
            // rd = h x + g + Gᵀλ − zl + zu ; rp = G x + s − r
            let mut rd: Vec<f64> = (0..n).map(|i| h[i] * x[i] + g[i] - zl[i] + zu[i]).collect();
            for (k, row) in rows.iter().enumerate() {
                for i in 0..n {
                    rd[i] += row[i] * lam[k];
                }
            }
            let rp: Vec<f64> = (0..m).map(|k| dot(&rows[k], &x) + s[k] - rhs[k]).collect();
            let comp: f64 = (0..n).map(|i| zl[i] * x[i] + zu[i] * (1.0 - x[i])).sum::<f64>()
                + (0..m).map(|k| lam[k] * s[k]).sum::<f64>();
            let mu = comp / (2 * n + m) as f64;
            let rd_norm = rd.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let rp_norm = rp.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if rd_norm < TOL && rp_norm < TOL && mu < TOL {
                converged = true;
                break;
            }
            if lam.iter().any(|l| *l > 1e14) && rp_norm > 1e-6 {
                return Err(Error::Infeasible("row multipliers diverged".into()));
            }

            let dg: Vec<f64> = (0..n).map(|i| h[i] + zl[i] / x[i] + zu[i] / (1.0 - x[i])).collect();
            let wdiag: Vec<f64> = (0..m).map(|k| s[k] / lam[k]).collect();
            // Schur complement G Dg⁻¹ Gᵀ + diag(s/λ)
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for a in 0..m {
                for b in a..m {
                    let v: f64 = (0..n).map(|i| rows[a][i] * rows[b][i] / dg[i]).sum();
                    schur[(a, b)] = v;
                    schur[(b, a)] = v;
                }
                schur[(a, a)] += wdiag[a];
            }
            let chol = schur
                .cholesky()
                .ok_or_else(|| Error::Infeasible("singular interior-point system".into()))?;

            let newton = |r_zl: &[f64], r_zu: &[f64], r_ls: &[f64]| {
                let b1: Vec<f64> = (0..n)
                    .map(|i| -rd[i] - r_zl[i] / x[i] + r_zu[i] / (1.0 - x[i]))
                    .collect();
                let b2: Vec<f64> = (0..m).map(|k| -rp[k] + r_ls[k] / lam[k]).collect();
                let rhs_l = DVector::from_iterator(
                    m,
                    (0..m).map(|k| {
                        (0..n).map(|i| rows[k][i] * b1[i] / dg[i]).sum::<f64>() - b2[k]
                    }),
                );
                let dl = chol.solve(&rhs_l);
                let dx: Vec<f64> = (0..n)
                    .map(|i| {
                        let gt: f64 = (0..m).map(|k| rows[k][i] * dl[k]).sum();
                        (b1[i] - gt) / dg[i]
                    })
                    .collect();
                let dzl: Vec<f64> = (0..n).map(|i| (-r_zl[i] - zl[i] * dx[i]) / x[i]).collect();
                let dzu: Vec<f64> = (0..n)
                    .map(|i| (-r_zu[i] + zu[i] * dx[i]) / (1.0 - x[i]))
                    .collect();
                let dl: Vec<f64> = dl.iter().copied().collect();
                let ds: Vec<f64> = (0..m).map(|k| (-r_ls[k] - s[k] * dl[k]) / lam[k]).collect();
                (dx, dzl, dzu, dl, ds)
            };
            let max_step = |dx: &[f64], dzl: &[f64], dzu: &[f64], dl: &[f64], ds: &[f64]| {
                let mut a = 1.0_f64;
                for i in 0..n {
                    if dx[i] < 0.0 {
                        a = a.min(-x[i] / dx[i]);
                    }
                    if dx[i] > 0.0 {
                        a = a.min((1.0 - x[i]) / dx[i]);
                    }
                    if dzl[i] < 0.0 {
                        a = a.min(-zl[i] / dzl[i]);
                    }
                    if dzu[i] < 0.0 {
                        a = a.min(-zu[i] / dzu[i]);
                    }
                }
                for k in 0..m {
                    if dl[k] < 0.0 {
                        a = a.min(-lam[k] / dl[k]);
                    }
                    if ds[k] < 0.0 {
                        a = a.min(-s[k] / ds[k]);
                    }
                }
                a
            };

            // Predictor
            let r_zl: Vec<f64> = (0..n).map(|i| zl[i] * x[i]).collect();
            let r_zu: Vec<f64> = (0..n).map(|i| zu[i] * (1.0 - x[i])).collect();
            let r_ls: Vec<f64> = (0..m).map(|k| lam[k] * s[k]).collect();
            let (ax, azl, azu, al, as_) = newton(&r_zl, &r_zu, &r_ls);
            let a_aff = max_step(&ax, &azl, &azu, &al, &as_);
            let comp_aff: f64 = (0..n)
                .map(|i| {
                    (zl[i] + a_aff * azl[i]) * (x[i] + a_aff * ax[i])
                        + (zu[i] + a_aff * azu[i]) * (1.0 - x[i] - a_aff * ax[i])
                })
                .sum::<f64>()
                + (0..m)
                    .map(|k| (lam[k] + a_aff * al[k]) * (s[k] + a_aff * as_[k]))
                    .sum::<f64>();
            let mu_aff = comp_aff / (2 * n + m) as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector
            let r_zl: Vec<f64> = (0..n).map(|i| zl[i] * x[i] + ax[i] * azl[i] - sigma * mu).collect();
            let r_zu: Vec<f64> = (0..n)
                .map(|i| zu[i] * (1.0 - x[i]) - ax[i] * azu[i] - sigma * mu)
                .collect();
            let r_ls: Vec<f64> = (0..m).map(|k| lam[k] * s[k] + al[k] * as_[k] - sigma * mu).collect();
            let (dx, dzl, dzu, dl, ds) = newton(&r_zl, &r_zu, &r_ls);
            let a = (0.99 * max_step(&dx, &dzl, &dzu, &dl, &ds)).min(1.0);
            for i in 0..n {
                x[i] += a * dx[i];
                zl[i] += a * dzl[i];
                zu[i] += a * dzu[i];
            }
            for k in 0..m {
                lam[k] += a * dl[k];
                s[k] += a * ds[k];
            }
        }

        let x: Vec<f64> = x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let primal_residual = self.row_violation(&x);
        let feas_scale = self.rhs.iter().fold(1.0_f64, |a, r| a.max(r.abs()));
        if !converged && primal_residual > 1e-7 * feas_scale {
            return Err(Error::Infeasible(format!(
                "no feasible point after {iterations} iterations (violation {primal_residual:.3e})"
            )));
        }
        let mut duals = vec![0.0; self.rows.len()];
        for (k, &(j, scale)) in row_idx.iter().enumerate() {
            duals[j] = lam[k] * obj_scale / scale;
        }
        Ok(BoxQpSolution {
            x,
            duals,
            iterations,
            primal_residual,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
