//! Independent oracle: direct Newton solution of the resonant hull equation.
//!
//! At a fixed transversal phase `eta` the equation
//!
//! ```text
//! v(psi + Omega) + v(psi - Omega) - 2 v(psi)
//!     + eps W((psi, eta) + beta v(psi)) + lambda = 0
//! ```
//!
//! is solved for the zero-average function `v : T^{d-1} -> R` and the scalar
//! `lambda` by Newton iteration in a real Fourier basis. The linear part is
//! diagonal with the second-difference divisors `2(cos(2 pi k.Omega) - 1)`;
//! the nonlinear part is multiplication by `eps * (beta.grad W)` on the
//! collocation grid, transformed column by column. This code path shares no
//! solver machinery with the Lindstedt expansion, which is what makes the
//! cross-validation meaningful.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use thiserror::Error;

use crate::fourier::{FourierError, TrigSeries};
use crate::lindstedt::LindstedtSolution;
use num_complex::Complex64;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error("Newton did not reach tolerance in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Newton system is singular at iteration {0}")]
    SingularSystem(usize),
}

/// Converged Newton data at one `(eps, eta)`.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    /// Zero-average hull correction on `T^{d-1}` (pure psi axes).
    pub v: TrigSeries,
    pub lambda: f64,
    pub iterations: usize,
    /// Sup collocation residual before each iteration and after the last.
    pub residual_history: Vec<f64>,
    pub sup_residual: f64,
}

/// Half-space mode enumeration: `0 < |k|_inf <= cutoff`, first nonzero
/// component positive.
fn half_modes(dim: usize, cutoff: u32) -> Vec<Vec<i32>> {
    let c = cutoff as i32;
    let mut modes = Vec::new();
    let mut k = vec![-c; dim];
    loop {
        if k.iter().any(|&x| x != 0) && *k.iter().find(|&&x| x != 0).unwrap() > 0 {
            modes.push(k.clone());
        }
        let mut i = dim;
        loop {
            if i == 0 {
                modes.sort();
                return modes;
            }
            i -= 1;
            k[i] += 1;
            if k[i] <= c {
                break;
            }
            k[i] = -c;
        }
    }
}

struct NewtonWorkspace {
    dim_psi: usize,
    modes: Vec<Vec<i32>>,
    /// collocation points, row-major over the psi grid
    points: Vec<Vec<f64>>,
    /// cos/sin tables: basis[m][j] = (cos, sin)(2 pi k_m . psi_j)
    basis: Vec<Vec<(f64, f64)>>,
    divisors: Vec<f64>,
}

impl NewtonWorkspace {
    fn new(dim_psi: usize, cutoff: u32, omega: &[f64]) -> Self {
        let modes = half_modes(dim_psi, cutoff);
        let m = 2 * cutoff as usize + 1;
        let total = m.pow(dim_psi as u32);
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim_psi];
        for _ in 0..total {
            points.push(idx.iter().map(|&i| i as f64 / m as f64).collect());
            for a in (0..dim_psi).rev() {
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
            }
        }
        let basis = modes
            .iter()
            .map(|k| {
                points
                    .iter()
                    .map(|p| {
                        let phase: f64 = k.iter().zip(p).map(|(&ki, &pi)| ki as f64 * pi).sum();
                        let (s, c) = (2.0 * PI * phase).sin_cos();
                        (c, s)
                    })
                    .collect()
            })
            .collect();
        let divisors = modes
            .iter()
            .map(|k| {
                let k_omega: f64 = k.iter().zip(omega).map(|(&ki, &oi)| ki as f64 * oi).sum();
                2.0 * ((2.0 * PI * k_omega).cos() - 1.0)
            })
            .collect();
        NewtonWorkspace {
            dim_psi,
            modes,
            points,
            basis,
            divisors,
        }
    }

    fn n_unknowns(&self) -> usize {
        2 * self.modes.len() + 1
    }

    /// u(psi_j) for coefficients z = [a..., b..., lambda].
    fn synthesize(&self, z: &DVector<f64>) -> Vec<f64> {
        let h = self.modes.len();
        let mut u = vec![0.0f64; self.points.len()];
        for (m, table) in self.basis.iter().enumerate() {
            let (a, b) = (z[m], z[h + m]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            for (j, &(c, s)) in table.iter().enumerate() {
                u[j] += a * c + b * s;
            }
        }
        u
    }

    /// Projects a grid field onto [cos_k..., sin_k..., mean].
    fn project(&self, field: &[f64]) -> DVector<f64> {
        let h = self.modes.len();
        let n = self.points.len() as f64;
        let mut out = DVector::zeros(self.n_unknowns());
        for (m, table) in self.basis.iter().enumerate() {
            let mut pc = 0.0;
            let mut ps = 0.0;
            for (j, &(c, s)) in table.iter().enumerate() {
                pc += field[j] * c;
                ps += field[j] * s;
            }
            out[m] = 2.0 * pc / n;
            out[h + m] = 2.0 * ps / n;
        }
        out[2 * h] = field.iter().sum::<f64>() / n;
        out
    }
}

/// Solves the hull equation at fixed `eta` by Newton iteration at the given
/// psi cutoff. `init` (a pure-psi series) seeds the iteration; `None` starts
/// from zero.
pub fn grid_newton_solve(
    model: &crate::lindstedt::ResonantModel,
    eps: f64,
    eta: f64,
    init: Option<&TrigSeries>,
    cutoff: u32,
    max_iter: usize,
) -> Result<NewtonSolution, VerifyError> {
    let w = crate::lindstedt::build_w(&model.potential, &model.alpha, &model.intrinsic)
        .expect("model W is well formed");
    newton_solve_with_w(
        &w,
        &model.intrinsic.omega_intrinsic,
        &model.intrinsic.beta,
        eps,
        eta,
        init,
        cutoff,
        max_iter,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn newton_solve_with_w(
    w: &TrigSeries,
    omega: &[f64],
    beta: &[f64],
    eps: f64,
    eta: f64,
    init: Option<&TrigSeries>,
    cutoff: u32,
    max_iter: usize,
) -> Result<NewtonSolution, VerifyError> {
    let dim = w.dim();
    let dim_psi = dim - 1;
    let ws = NewtonWorkspace::new(dim_psi, cutoff, omega);
    let h = ws.modes.len();
    let n = ws.n_unknowns();
    let dw = w.directional_derivative(beta, 1)?;

    let mut z = DVector::zeros(n);
    if let Some(series) = init {
        assert_eq!(series.dim(), dim_psi, "init must be a pure psi series");
        for (m, k) in ws.modes.iter().enumerate() {
            let c = series.coeff(k);
            z[m] = 2.0 * c.re;
            z[h + m] = -2.0 * c.im;
        }
    }

    // assembles the residual field E(psi_j) and the multiplier field
    let eval_fields = |z: &DVector<f64>| -> (Vec<f64>, Vec<f64>, f64) {
        let u = ws.synthesize(z);
        let lambda = z[n - 1];
        let mut resid = vec![0.0f64; ws.points.len()];
        let mut mult = vec![0.0f64; ws.points.len()];
        let mut point = vec![0.0f64; dim];
        let mut sup: f64 = 0.0;
        for (j, p) in ws.points.iter().enumerate() {
            let mut lin = 0.0;
            for (m, table) in ws.basis.iter().enumerate() {
                let (c, s) = table[j];
                lin += ws.divisors[m] * (z[m] * c + z[h + m] * s);
            }
            for (a, &pa) in p.iter().enumerate() {
                point[a] = pa + beta[a] * u[j];
            }
            point[dim - 1] = eta + beta[dim - 1] * u[j];
            let w_val = w.evaluate(&point).expect("dims match");
            let r = lin + eps * w_val + lambda;
            resid[j] = r;
            sup = sup.max(r.abs());
            mult[j] = eps * dw.evaluate(&point).expect("dims match");
        }
        (resid, mult, sup)
    };

    let mut history = Vec::new();
    for iter in 0..=max_iter {
        let (resid, mult, sup) = eval_fields(&z);
        history.push(sup);
        let scale = 1.0 + eps * w.l1_norm();
        if sup <= 1e-13 * scale {
            let v = series_from_coeffs(&ws, &z, cutoff);
            return Ok(NewtonSolution {
                v,
                lambda: z[n - 1],
                iterations: iter,
                residual_history: history,
                sup_residual: sup,
            });
        }
        if iter == max_iter {
            break;
        }
        // Jacobian: diagonal divisors + nonlinear multiplication columns
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut column = vec![0.0f64; ws.points.len()];
        for (m, table) in ws.basis.iter().enumerate() {
            for (j, &(c, _)) in table.iter().enumerate() {
                column[j] = mult[j] * c;
            }
            let proj = ws.project(&column);
            for r in 0..n {
                jac[(r, m)] = proj[r];
            }
            jac[(m, m)] += ws.divisors[m];

            for (j, &(_, s)) in table.iter().enumerate() {
                column[j] = mult[j] * s;
            }
            let proj = ws.project(&column);
            for r in 0..n {
                jac[(r, h + m)] = proj[r];
            }
            jac[(h + m, h + m)] += ws.divisors[m];
        }
        // lambda enters every collocation equation with coefficient 1: only
        // the mean projection survives
        jac[(n - 1, n - 1)] = 1.0;

        let rhs = ws.project(&resid);
        let lu = jac.lu();
        match lu.solve(&(-rhs)) {
            Some(delta) => z += delta,
            None => return Err(VerifyError::SingularSystem(iter)),
        }
    }
    Err(VerifyError::NoConvergence {
        iterations: max_iter,
        residual: *history.last().unwrap(),
    })
}

fn series_from_coeffs(ws: &NewtonWorkspace, z: &DVector<f64>, cutoff: u32) -> TrigSeries {
    let h = ws.modes.len();
    let mut v = TrigSeries::zero(ws.dim_psi, &vec![cutoff; ws.dim_psi]);
    for (m, k) in ws.modes.iter().enumerate() {
        let c = Complex64::new(0.5 * z[m], -0.5 * z[h + m]);
        if c.norm() != 0.0 {
            v.set_pair(k, c).expect("modes are within the cutoff");
        }
    }
    v
}

/// One row of the Lindstedt-vs-Newton comparison table.
#[derive(Debug, Clone)]
pub struct CrossRow {
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
    pub sup_residual: f64,
    /// Sup over a dense psi grid of the difference of hull corrections.
    pub v_diff: f64,
    pub lambda_diff: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub rows: Vec<CrossRow>,
    /// Least-squares log-log slope of `v_diff` against `eps` over the
    /// converged rows; expected `N + 1` for an order-`N` partial sum.
    pub v_slope: Option<f64>,
}

/// Cross-validates the Lindstedt partial sums against independent Newton
/// solves for each `eps`; rows that fail to converge are marked, not fatal.
pub fn cross_validate(
    sol: &LindstedtSolution,
    eps_list: &[f64],
    eta: f64,
    cutoff: u32,
    max_iter: usize,
) -> CrossValidation {
    let dim = sol.model.dim();
    let probe = 512usize;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let slice = sol.v_partial(eps).fix_last_axis(eta);
        match grid_newton_solve(&sol.model, eps, eta, Some(&slice), cutoff, max_iter) {
            Ok(newton) => {
                let mut v_diff: f64 = 0.0;
                let mut point = vec![0.0f64; dim - 1];
                for j in 0..probe {
                    // probe line through the psi torus (diagonal for d > 2)
                    let t = j as f64 / probe as f64;
                    point.iter_mut().for_each(|x| *x = t);
                    let a = newton.v.evaluate(&point).expect("dims match");
                    let b = slice.evaluate(&point).expect("dims match");
                    v_diff = v_diff.max((a - b).abs());
                }
                let lambda_diff = (newton.lambda - sol.lambda_value(eta, eps)).abs();
                rows.push(CrossRow {
                    eps,
                    converged: true,
                    iterations: newton.iterations,
                    sup_residual: newton.sup_residual,
                    v_diff,
                    lambda_diff,
                });
            }
            Err(_) => rows.push(CrossRow {
                eps,
                converged: false,
                iterations: max_iter,
                sup_residual: f64::NAN,
                v_diff: f64::NAN,
                lambda_diff: f64::NAN,
            }),
        }
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.converged && r.v_diff > 1e-14)
        .map(|r| (r.eps.ln(), r.v_diff.ln()))
        .collect();
    let v_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    } else {
        None
    };
    CrossValidation { rows, v_slope }
}
