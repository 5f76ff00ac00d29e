//! First- and second-difference equations along the intrinsic rotation.
//!
//! For a rotation `T_Omega v(psi, eta) = v(psi + Omega, eta)` the equations
//!
//! ```text
//! (T_Omega - I) v = phi                 (first difference)
//! (T_Omega + T_{-Omega} - 2I) v = phi   (second difference)
//! ```
//!
//! are diagonal in Fourier space with the small divisors
//! `e^{2 pi i k_psi.Omega} - 1` and `2 (cos(2 pi k_psi.Omega) - 1)`. Both are
//! solvable exactly when `phi` has zero average over the `psi` directions for
//! every `eta`, and the solution with zero `psi`-average is unique.
//!
//! Series are laid out with the `psi` axes first; `eta`, when present, is the
//! last axis. A series of dimension `Omega.len()` is treated as a function of
//! `psi` alone; dimension `Omega.len() + 1` carries a trailing `eta` axis
//! (divisors depend only on `k_psi` either way).

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fourier::TrigSeries;

/// Default floor below which a divisor is treated as a genuine resonance.
pub const DIVISOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CohomologyError {
    #[error("series dim {dim} incompatible with Omega of dimension {omega_dim}")]
    BadLayout { dim: usize, omega_dim: usize },
    #[error("right-hand side has nonzero psi-average: |coeff{index:?}| = {mass:e}")]
    NonZeroAverage { index: Vec<i32>, mass: f64 },
    #[error("small divisor at mode {index:?}: |divisor| = {divisor:e} below floor {floor:e}")]
    SmallDivisor {
        index: Vec<i32>,
        divisor: f64,
        floor: f64,
    },
}

fn psi_axes(phi: &TrigSeries, omega: &[f64]) -> Result<usize, CohomologyError> {
    let n = omega.len();
    if phi.dim() == n || phi.dim() == n + 1 {
        Ok(n)
    } else {
        Err(CohomologyError::BadLayout {
            dim: phi.dim(),
            omega_dim: n,
        })
    }
}

fn check_zero_average(phi: &TrigSeries, n_psi: usize) -> Result<(), CohomologyError> {
    for (k, c) in phi.iter() {
        if k[..n_psi].iter().all(|&x| x == 0) && c.norm() > 1e-12 {
            return Err(CohomologyError::NonZeroAverage {
                index: k.clone(),
                mass: c.norm(),
            });
        }
    }
    Ok(())
}

fn solve_diagonal<F>(
    phi: &TrigSeries,
    omega: &[f64],
    divisor_floor: f64,
    divisor: F,
) -> Result<TrigSeries, CohomologyError>
where
    F: Fn(f64) -> Complex64,
{
    let n_psi = psi_axes(phi, omega)?;
    check_zero_average(phi, n_psi)?;
    let mut v = TrigSeries::zero(phi.dim(), phi.cutoff());
    for (k, c) in phi.iter() {
        if k[..n_psi].iter().all(|&x| x == 0) {
            continue; // below-tolerance average mass is dropped
        }
        let k_omega: f64 = k[..n_psi]
            .iter()
            .zip(omega)
            .map(|(&ki, &oi)| ki as f64 * oi)
            .sum();
        let d = divisor(k_omega);
        if d.norm() < divisor_floor {
            return Err(CohomologyError::SmallDivisor {
                index: k.clone(),
                divisor: d.norm(),
                floor: divisor_floor,
            });
        }
        v.set_coeff_unchecked(k.clone(), c / d);
    }
    Ok(v)
}

/// Solves `v(psi + Omega, eta) - v(psi, eta) = phi(psi, eta)` with zero
/// psi-average: `v_k = phi_k / (e^{2 pi i k_psi.Omega} - 1)` for `k_psi != 0`.
pub fn solve_first_difference(
    phi: &TrigSeries,
    omega: &[f64],
    divisor_floor: f64,
) -> Result<TrigSeries, CohomologyError> {
    solve_diagonal(phi, omega, divisor_floor, |k_omega| {
        let (s, c) = (2.0 * PI * k_omega).sin_cos();
        Complex64::new(c - 1.0, s)
    })
}

/// Solves `v(psi + Omega, eta) + v(psi - Omega, eta) - 2 v(psi, eta) = phi`
/// with zero psi-average: `v_k = phi_k / (2 (cos(2 pi k_psi.Omega) - 1))`.
pub fn solve_second_difference(
    phi: &TrigSeries,
    omega: &[f64],
    divisor_floor: f64,
) -> Result<TrigSeries, CohomologyError> {
    solve_diagonal(phi, omega, divisor_floor, |k_omega| {
        Complex64::new(2.0 * ((2.0 * PI * k_omega).cos() - 1.0), 0.0)
    })
}

/// The forward operator `(T_Omega - I) v`.
pub fn apply_first_difference(v: &TrigSeries, omega: &[f64]) -> TrigSeries {
    let shift = extend_shift(v, omega);
    v.shift(&shift).unwrap().sub(v).unwrap()
}

/// The forward operator `(T_Omega + T_{-Omega} - 2I) v`.
pub fn apply_second_difference(v: &TrigSeries, omega: &[f64]) -> TrigSeries {
    let shift = extend_shift(v, omega);
    let neg: Vec<f64> = shift.iter().map(|s| -s).collect();
    v.shift(&shift)
        .unwrap()
        .add(&v.shift(&neg).unwrap())
        .unwrap()
        .sub(&v.scale(2.0))
        .unwrap()
}

fn extend_shift(v: &TrigSeries, omega: &[f64]) -> Vec<f64> {
    let mut s = omega.to_vec();
    while s.len() < v.dim() {
        s.push(0.0); // eta axis is not rotated
    }
    assert_eq!(s.len(), v.dim(), "series dim incompatible with Omega");
    s
}
