//! The auxiliary equation: absorbing an external force into the transversal
//! phase.
//!
//! With the counterterm series `lambda(eta, eps) = sum_n eps^n lambda^n(eta)`
//! in hand, a prescribed force `lambda* = eps^{n0} mu` admits an equilibrium
//! exactly when `lambda(eta, eps) = lambda*` can be solved for the phase
//! `eta(eps) = eta* + sum_q eps^q eta_q`. Here `n0` is the first order whose
//! counterterm is not identically zero; the scaling by `eps^{n0}` is what
//! makes the order-matching well-posed as `eps -> 0`. Forces outside the
//! range of the partial sum admit no equilibrium at this order: depinning.

use thiserror::Error;

use crate::fourier::TrigSeries;
use crate::lindstedt::LindstedtSolution;

/// Default derivative floor for the nondegeneracy check.
pub const NONDEG_FLOOR: f64 = 1e-8;
/// Default dense-sampling resolution for root isolation.
pub const ZERO_SAMPLES: usize = 4096;

#[derive(Debug, Error)]
pub enum AuxiliaryError {
    #[error("series is identically zero (all coefficients below 1e-14)")]
    IdenticallyZero,
    #[error("degenerate base point: |d lambda/d eta| = {slope:e} at eta* = {eta_star}")]
    Degenerate { slope: f64, eta_star: f64 },
    #[error("lambda^{n0}(eta*) = {value:e} does not match mu = {mu:e}")]
    BaseMismatch { n0: usize, value: f64, mu: f64 },
    #[error("requested {need} phase coefficients but the solution only supports {have}")]
    OrderTooHigh { have: usize, need: usize },
}

/// A zero of a 1-D trigonometric polynomial with the derivative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub eta: f64,
    pub slope: f64,
}

/// All zeros of a 1-D trigonometric polynomial in `[0, 1)`, located by dense
/// sampling plus bisection to `1e-13`, each with its derivative.
pub fn lambda_zeros(lambda_n: &TrigSeries) -> Result<Vec<Zero>, AuxiliaryError> {
    lambda_zeros_with(lambda_n, ZERO_SAMPLES)
}

pub fn lambda_zeros_with(
    lambda_n: &TrigSeries,
    samples: usize,
) -> Result<Vec<Zero>, AuxiliaryError> {
    assert_eq!(lambda_n.dim(), 1);
    if is_identically_zero(lambda_n) {
        return Err(AuxiliaryError::IdenticallyZero);
    }
    let deriv = lambda_n
        .directional_derivative(&[1.0], 1)
        .expect("1-D series");
    let roots = roots_dense(lambda_n, samples);
    Ok(roots
        .into_iter()
        .map(|eta| Zero {
            eta,
            slope: deriv.evaluate(&[eta]).expect("1-D series"),
        })
        .collect())
}

pub(crate) fn is_identically_zero(series: &TrigSeries) -> bool {
    series.iter().all(|(_, c)| c.norm() < 1e-14)
}

/// Roots of a scalar periodic trig polynomial on `[0, 1)`: dense samples
/// classified into exact-hit runs and sign changes, the latter refined by
/// bisection.
fn roots_dense(f: &TrigSeries, samples: usize) -> Vec<f64> {
    let eval = |x: f64| f.evaluate(&[x]).expect("1-D series");
    let atol = 1e-12 * (1.0 + f.l1_norm());
    let values: Vec<f64> = (0..samples)
        .map(|j| eval(j as f64 / samples as f64))
        .collect();
    let sgn: Vec<i8> = values
        .iter()
        .map(|&v| {
            if v.abs() <= atol {
                0
            } else if v > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let mut roots: Vec<f64> = Vec::new();
    if sgn.iter().all(|&s| s == 0) {
        // numerically flat zero everywhere; callers reject this earlier
        return vec![0.0];
    }
    // each maximal circular run of zero samples contributes one root at its
    // midpoint; a run starts where the previous sample is nonzero
    for start in 0..samples {
        if sgn[start] != 0 || sgn[(start + samples - 1) % samples] == 0 {
            continue;
        }
        let mut len = 0usize;
        let mut j = start;
        while sgn[j] == 0 {
            len += 1;
            j = (j + 1) % samples;
        }
        let mid = (start as f64 + (len as f64 - 1.0) / 2.0) / samples as f64;
        roots.push(mid.rem_euclid(1.0));
    }
    // sign changes between adjacent nonzero samples (circular)
    for j in 0..samples {
        let a = sgn[j];
        let b = sgn[(j + 1) % samples];
        if a != 0 && b != 0 && a != b {
            let mut lo = j as f64 / samples as f64;
            let mut hi = (j + 1) as f64 / samples as f64;
            let mut flo = values[j];
            for _ in 0..100 {
                if hi - lo < 1e-14 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push((0.5 * (lo + hi)).rem_euclid(1.0));
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Formal power series for the transversal phase:
/// `eta(eps) = eta* + sum_{q=1}^{N} eps^q eta_q`, solving
/// `lambda(eta(eps), eps) = eps^{n0} mu` order by order.
#[derive(Debug, Clone)]
pub struct PhaseSeries {
    pub eta_star: f64,
    pub coeffs: Vec<f64>,
    /// First order whose counterterm is not identically zero.
    pub n0: usize,
}

impl PhaseSeries {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `eta(eps)` as the truncated series.
    pub fn eta_at(&self, eps: f64) -> f64 {
        let mut acc = self.eta_star;
        let mut p = 1.0;
        for &c in &self.coeffs {
            p *= eps;
            acc += c * p;
        }
        acc
    }

    /// The matching defect `|sum_n eps^n lambda^n(eta(eps)) - eps^{n0} mu|`;
    /// expected `O(eps^{n0 + order + 1})`.
    pub fn defect(&self, sol: &LindstedtSolution, mu: f64, eps: f64) -> f64 {
        let eta = self.eta_at(eps);
        let lam = sol.lambda_value(eta, eps);
        (lam - eps.powi(self.n0 as i32) * mu).abs()
    }
}

/// Solves the auxiliary equation at the base zero `eta*` for `N = n_coeffs`
/// phase coefficients, under the convention `lambda* = eps^{n0} mu`.
///
/// Requires `lambda^{n0}(eta*) = mu` (the order-zero matching) and the
/// nondegeneracy `|d_eta lambda^{n0}(eta*)| > NONDEG_FLOOR`; each `eta_q` is
/// then fixed linearly by the coefficient of `eps^q`, Taylor-expanding each
/// counterterm order around `eta*` with exact Fourier derivatives.
pub fn phase_series(
    sol: &LindstedtSolution,
    eta_star: f64,
    mu: f64,
    n_coeffs: usize,
) -> Result<PhaseSeries, AuxiliaryError> {
    let n_order = sol.order();
    let n0 = (1..=n_order)
        .find(|&j| !is_identically_zero(sol.lambda_jet.term(j)))
        .ok_or(AuxiliaryError::IdenticallyZero)?;
    let lam_n0 = sol.lambda_jet.term(n0);
    let base = lam_n0.evaluate(&[eta_star]).expect("1-D series");
    let base_tol = 1e-9 * (1.0 + lam_n0.l1_norm());
    if (base - mu).abs() > base_tol {
        return Err(AuxiliaryError::BaseMismatch {
            n0,
            value: base,
            mu,
        });
    }
    let slope = lam_n0
        .directional_derivative(&[1.0], 1)
        .expect("1-D series")
        .evaluate(&[eta_star])
        .expect("1-D series");
    if slope.abs() <= NONDEG_FLOOR {
        return Err(AuxiliaryError::Degenerate {
            slope: slope.abs(),
            eta_star,
        });
    }
    if n0 + n_coeffs > n_order {
        return Err(AuxiliaryError::OrderTooHigh {
            have: n_order.saturating_sub(n0),
            need: n_coeffs,
        });
    }

    // Taylor data: d^r/d eta^r lambda^j (eta*) / r! for j = n0..n0+N, r = 0..N
    let p_max = n_coeffs;
    let mut taylor: Vec<Vec<f64>> = Vec::new();
    for j in n0..=(n0 + p_max) {
        let term = sol.lambda_jet.term(j);
        let mut row = Vec::with_capacity(p_max + 1);
        let mut fact = 1.0;
        for r in 0..=p_max {
            if r > 0 {
                fact *= r as f64;
            }
            let d_r = term
                .directional_derivative(&[1.0], r as u32)
                .expect("1-D series")
                .evaluate(&[eta_star])
                .expect("1-D series");
            row.push(d_r / fact);
        }
        taylor.push(row);
    }

    let mut coeffs: Vec<f64> = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        // residual coefficient of eps^p with eta_p = 0
        let c_p = matching_coefficient(&taylor, &coeffs, p);
        coeffs.push(-c_p / slope);
    }
    Ok(PhaseSeries {
        eta_star,
        coeffs,
        n0,
    })
}

/// Coefficient of `eps^p` in `sum_j eps^{j - n0} lambda^j(eta* + delta(eps))`
/// where `delta = sum_{q=1}^{p-1} eps^q eta_q` (the unknown `eta_p` set to 0).
fn matching_coefficient(taylor: &[Vec<f64>], etas: &[f64], p: usize) -> f64 {
    // delta jet through order p
    let mut delta = vec![0.0f64; p + 1];
    for (q, &e) in etas.iter().enumerate().take(p) {
        delta[q + 1] = e;
    }
    // delta^r jets, accumulated
    let mut total = 0.0f64;
    let mut power = vec![0.0f64; p + 1];
    power[0] = 1.0; // delta^0
    for r in 0..=p {
        if r > 0 {
            power = jet_mul_scalar(&power, &delta, p);
        }
        // contribution of lambda^{n0+s} at epsilon offset s: coefficient of
        // eps^{p} needs the eps^{p-s} coefficient of delta^r
        for (s, row) in taylor.iter().enumerate() {
            if s > p {
                break;
            }
            total += row[r] * power[p - s];
        }
    }
    total
}

fn jet_mul_scalar(a: &[f64], b: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; order + 1];
    for i in 0..=order {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..=(order - i) {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// Range of forces the phase can absorb at this order: the min and max over
/// `eta` of the partial sum `sum_{n=1}^{N} eps^n lambda^n(eta)`. Outside this
/// interval no equilibrium with the prescribed resonant frequency exists at
/// perturbative order `N` (depinning).
pub fn depinning_range(sol: &LindstedtSolution, eps: f64) -> (f64, f64) {
    let lam = sol.lambda_partial(eps);
    if is_identically_zero(&lam) {
        return (0.0, 0.0);
    }
    let eval = |x: f64| lam.evaluate(&[x]).expect("1-D series");
    let deriv = lam.directional_derivative(&[1.0], 1).expect("1-D series");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..ZERO_SAMPLES {
        let v = eval(j as f64 / ZERO_SAMPLES as f64);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // refine through the critical points when the derivative is not flat
    if !is_identically_zero(&deriv) {
        for root in roots_dense(&deriv, ZERO_SAMPLES) {
            let v = eval(root);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}
