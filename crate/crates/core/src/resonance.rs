//! Integer resonance algebra for quasi-periodic frequencies.
//!
//! Given a medium frequency vector `alpha` and a mean spacing `omega`, a
//! discrete resonance is an integer pair `(k, m)` with `k.(omega alpha) = m`.
//! This module detects such resonances in a finite box, verifies that the
//! resonance module has rank one, completes `k` to a unimodular matrix `B`
//! with last row `k`, and extracts the intrinsic frequencies `Omega` from
//! `B (omega alpha) = (Omega, 0) + L`.

use thiserror::Error;

use crate::intmat::{extended_gcd, gcd_slice, IntMatrix};

/// Default tolerance for resonance identities in floating point.
pub const TOL_RES: f64 = 1e-9;
/// Default box size for finite nonresonance checks.
pub const K_CHECK: u32 = 20;

#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error("alpha must have dimension >= 2, got {0}")]
    BadDimension(usize),
    #[error("medium frequency is resonant: k = {k:?} gives |k.alpha| = {dist:e}")]
    MediumResonant { k: Vec<i64>, dist: f64 },
    #[error("k.alpha = {0:e} is degenerate (below tolerance)")]
    DegenerateDirection(f64),
    #[error("k must be a nonzero primitive integer vector (gcd 1)")]
    NotPrimitive,
    #[error("m must be nonzero")]
    ZeroM,
    #[error(
        "resonance identity violated: |k.(omega alpha) - m| = {residual:e} exceeds tol {tol:e}"
    )]
    NotResonant { residual: f64, tol: f64 },
    #[error("two independent resonances found: {first:?} and {second:?}; tolerance too loose")]
    MultiplicityViolation {
        first: (Vec<i64>, i64),
        second: (Vec<i64>, i64),
    },
    #[error("intrinsic frequency is resonant: k' = {k:?} gives dist(k'.Omega, Z) = {dist:e}")]
    IntrinsicResonant { k: Vec<i64>, dist: f64 },
}

/// Frequencies of the quasi-periodic substratum.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumFrequency {
    alpha: Vec<f64>,
    tol_res: f64,
    k_check: u32,
}

impl MediumFrequency {
    /// Validates `d >= 2` and finite nonresonance of `alpha` with the default
    /// tolerance and box.
    ///
    /// Nonresonance of the medium means no integer combination of the
    /// frequencies vanishes: `k.alpha != 0` for all `0 < |k|_inf <= K_check`
    /// (the components are rationally independent as far as the box can see).
    pub fn new(alpha: &[f64]) -> Result<Self, ResonanceError> {
        Self::with_params(alpha, TOL_RES, K_CHECK)
    }

    pub fn with_params(alpha: &[f64], tol_res: f64, k_check: u32) -> Result<Self, ResonanceError> {
        if alpha.len() < 2 {
            return Err(ResonanceError::BadDimension(alpha.len()));
        }
        for k in IntBox::new(alpha.len(), k_check) {
            let dot: f64 = k.iter().zip(alpha).map(|(&ki, &ai)| ki as f64 * ai).sum();
            if dot.abs() <= tol_res {
                return Err(ResonanceError::MediumResonant { k, dist: dot.abs() });
            }
        }
        Ok(MediumFrequency {
            alpha: alpha.to_vec(),
            tol_res,
            k_check,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn tol_res(&self) -> f64 {
        self.tol_res
    }

    pub fn dot_int(&self, k: &[i64]) -> f64 {
        k.iter()
            .zip(&self.alpha)
            .map(|(&ki, &ai)| ki as f64 * ai)
            .sum()
    }
}

/// A discrete resonance `k.(omega alpha) = m` together with the resonant
/// frequency `omega` (the mean spacing).
#[derive(Debug, Clone, PartialEq)]
pub struct Resonance {
    pub k: Vec<i64>,
    pub m: i64,
    pub omega: f64,
}

impl Resonance {
    /// Validates primitivity of `k`, `m != 0`, and the resonance identity.
    pub fn new(
        k: &[i64],
        m: i64,
        omega: f64,
        alpha: &MediumFrequency,
    ) -> Result<Self, ResonanceError> {
        if k.iter().all(|&x| x == 0) || gcd_slice(k) != 1 {
            return Err(ResonanceError::NotPrimitive);
        }
        if m == 0 {
            return Err(ResonanceError::ZeroM);
        }
        let residual = (omega * alpha.dot_int(k) - m as f64).abs();
        if residual > alpha.tol_res {
            return Err(ResonanceError::NotResonant {
                residual,
                tol: alpha.tol_res,
            });
        }
        Ok(Resonance {
            k: k.to_vec(),
            m,
            omega,
        })
    }
}

/// Unimodular reduction data: `B (omega alpha) = (Omega, 0) + L`,
/// `beta = B alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicData {
    pub b: IntMatrix,
    pub omega_intrinsic: Vec<f64>,
    pub l: Vec<i64>,
    pub beta: Vec<f64>,
}

impl IntrinsicData {
    /// Components of `beta` along the invariant torus directions.
    pub fn beta_psi(&self) -> &[f64] {
        &self.beta[..self.beta.len() - 1]
    }

    /// Component of `beta` along the transversal phase.
    pub fn beta_eta(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }
}

/// The resonant frequency generated by `(k, m)`: `omega = m / (k.alpha)`.
pub fn omega_from_resonance(
    k: &[i64],
    m: i64,
    alpha: &MediumFrequency,
) -> Result<f64, ResonanceError> {
    if k.iter().all(|&x| x == 0) {
        return Err(ResonanceError::NotPrimitive);
    }
    let dot = alpha.dot_int(k);
    if dot.abs() < alpha.tol_res {
        return Err(ResonanceError::DegenerateDirection(dot));
    }
    Ok(m as f64 / dot)
}

/// Scans `0 < |k|_inf <= k_box`, `|m| <= m_box` for hits of
/// `|k.(omega alpha) - m| <= tol` and returns the primitive generator.
///
/// All hits are reduced by the joint gcd of `(k, m)`, sign-normalized so the
/// first nonzero component of `k` is positive, and checked for pairwise
/// proportionality `k1 m2 = k2 m1`; failing that check means the tolerance
/// admits two independent resonances. Ties are broken by smallest `|k|_inf`,
/// then lexicographic order on `(k, m)`.
pub fn find_resonance(
    alpha: &MediumFrequency,
    omega: f64,
    k_box: u32,
    m_box: u32,
    tol: f64,
) -> Result<Option<Resonance>, ResonanceError> {
    assert!(k_box >= 1 && m_box >= 1);
    let mut hits: Vec<(Vec<i64>, i64)> = Vec::new();
    for k in IntBox::new(alpha.dim(), k_box) {
        let dot = omega * alpha.dot_int(&k);
        let m_near = dot.round();
        if m_near.abs() > m_box as f64 {
            continue;
        }
        let m = m_near as i64;
        if (dot - m as f64).abs() <= tol {
            let mut joint: Vec<i64> = k.clone();
            joint.push(m);
            let g = gcd_slice(&joint);
            let mut kk: Vec<i64> = k.iter().map(|x| x / g).collect();
            let mut mm = m / g;
            let lead = kk.iter().find(|&&x| x != 0).copied().unwrap_or(0);
            if lead < 0 {
                kk.iter_mut().for_each(|x| *x = -*x);
                mm = -mm;
            }
            if !hits.contains(&(kk.clone(), mm)) {
                hits.push((kk, mm));
            }
        }
    }
    if hits.is_empty() {
        return Ok(None);
    }
    hits.sort_by(|a, b| {
        let na = a.0.iter().map(|x| x.abs()).max().unwrap();
        let nb = b.0.iter().map(|x| x.abs()).max().unwrap();
        na.cmp(&nb).then(a.cmp(b))
    });
    let (k0, m0) = hits[0].clone();
    for (k, m) in &hits[1..] {
        let proportional = k0
            .iter()
            .zip(k)
            .all(|(&a, &b)| a as i128 * *m as i128 == b as i128 * m0 as i128);
        if !proportional {
            return Err(ResonanceError::MultiplicityViolation {
                first: (k0, m0),
                second: (k.clone(), *m),
            });
        }
    }
    if m0 == 0 {
        // k.(omega alpha) ~ 0 within tol: not a discrete resonance, the
        // tolerance is picking up a near-resonance of the medium itself
        return Err(ResonanceError::DegenerateDirection(0.0));
    }
    if gcd_slice(&k0) != 1 {
        return Err(ResonanceError::NotPrimitive);
    }
    Ok(Some(Resonance::new(&k0, m0, omega, alpha)?))
}

/// Completes a primitive integer vector `k` to a matrix `B` in `SL(d, Z)`
/// whose last row is `k`.
///
/// Construction: column extended-gcd steps reduce `k` to `e_d` while the
/// inverse operations accumulate on the identity; the top rows are then
/// reduced modulo `k` (smallest `|.|_inf`, then `|.|_1`, then lexicographically
/// largest), which makes the completion deterministic.
pub fn unimodular_completion(k: &[i64]) -> Result<IntMatrix, ResonanceError> {
    let d = k.len();
    if d == 0 || k.iter().all(|&x| x == 0) || gcd_slice(k) != 1 {
        return Err(ResonanceError::NotPrimitive);
    }
    let mut c: Vec<i64> = k.to_vec();
    let mut b = IntMatrix::identity(d);
    for i in 0..d - 1 {
        if c[i] == 0 {
            continue;
        }
        let (g, x, y) = extended_gcd(c[i], c[d - 1]);
        let (ci, cd) = (c[i] / g, c[d - 1] / g);
        // columns (i, d-1) of the reducing matrix are [[cd, x], [-ci, y]];
        // accumulate the inverse [[y, -x], [ci, cd]] on the rows of B
        for j in 0..d {
            let ri = b[(i, j)];
            let rd = b[(d - 1, j)];
            b[(i, j)] = y * ri - x * rd;
            b[(d - 1, j)] = ci * ri + cd * rd;
        }
        c[i] = 0;
        c[d - 1] = g;
    }
    debug_assert_eq!(c[d - 1], 1);
    debug_assert_eq!(b.row(d - 1), k);
    // canonical form: reduce each top row modulo the last row
    for i in 0..d - 1 {
        let row: Vec<i64> = b.row(i).to_vec();
        let norm_inf = |r: &[i64]| r.iter().map(|x| x.abs()).max().unwrap();
        let norm_1 = |r: &[i64]| r.iter().map(|x| x.abs()).sum::<i64>();
        let range = 2 * norm_inf(&row) + 4;
        let mut best: Option<Vec<i64>> = None;
        for t in -range..=range {
            let cand: Vec<i64> = row.iter().zip(k).map(|(&r, &ki)| r + t * ki).collect();
            let better = match &best {
                None => true,
                Some(b) => (norm_inf(&cand), norm_1(&cand))
                    .cmp(&(norm_inf(b), norm_1(b)))
                    .then(b.cmp(&cand))
                    .is_lt(),
            };
            if better {
                best = Some(cand);
            }
        }
        let best = best.unwrap();
        for (j, &v) in best.iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    debug_assert_eq!(b.det(), 1, "completion must have determinant +1");
    Ok(b)
}

/// Builds the full intrinsic data for a resonance: the unimodular matrix,
/// the integer part `L`, the intrinsic frequencies `Omega`, and the pushed
/// frequency `beta = B alpha`.
pub fn intrinsic_data(
    res: &Resonance,
    alpha: &MediumFrequency,
) -> Result<IntrinsicData, ResonanceError> {
    let d = alpha.dim();
    let b = unimodular_completion(&res.k)?;
    let omega_alpha: Vec<f64> = alpha.alpha().iter().map(|a| res.omega * a).collect();
    let pushed = b.mul_vec_f64(&omega_alpha);
    let mut l: Vec<i64> = pushed.iter().map(|x| x.round() as i64).collect();
    l[d - 1] = res.m; // last component is the resonance integer exactly
    let omega_intrinsic: Vec<f64> = pushed[..d - 1]
        .iter()
        .zip(&l[..d - 1])
        .map(|(&x, &li)| x - li as f64)
        .collect();
    let last_residual = (pushed[d - 1] - res.m as f64).abs();
    if last_residual > alpha.tol_res {
        return Err(ResonanceError::NotResonant {
            residual: last_residual,
            tol: alpha.tol_res,
        });
    }
    for k in IntBox::new(d - 1, alpha.k_check) {
        let dot: f64 = k
            .iter()
            .zip(&omega_intrinsic)
            .map(|(&ki, &oi)| ki as f64 * oi)
            .sum();
        let dist = dist_to_integers(dot);
        if dist <= alpha.tol_res {
            return Err(ResonanceError::IntrinsicResonant { k, dist });
        }
    }
    let beta = b.mul_vec_f64(alpha.alpha());
    Ok(IntrinsicData {
        b,
        omega_intrinsic,
        l,
        beta,
    })
}

/// Finite-box profile of the subexponential smallness of divisors:
/// `S(N) = (1/N) max_{0 < |k|_inf <= N} |ln dist(k.Omega, Z)|` on a geometric
/// grid of box sizes up to `n_max`. Exact integer hits report
/// `S(N) = +infinity`. A decreasing profile is evidence (never proof) of the
/// subexponential condition, which is a statement about the `N -> infinity`
/// limit and cannot be decided numerically.
pub fn subexponential_profile(omega: &[f64], n_max: u32) -> Vec<(u32, f64)> {
    assert!(n_max >= 2);
    let mut grid: Vec<u32> = Vec::new();
    let mut n = 2u32;
    while n < n_max {
        grid.push(n);
        n = n.saturating_mul(2);
    }
    grid.push(n_max);
    let mut out = Vec::with_capacity(grid.len());
    for &nn in &grid {
        let mut worst: f64 = 0.0;
        for k in IntBox::new(omega.len(), nn) {
            let dot: f64 = k.iter().zip(omega).map(|(&ki, &oi)| ki as f64 * oi).sum();
            let dist = dist_to_integers(dot);
            let val = if dist == 0.0 {
                f64::INFINITY
            } else {
                dist.ln().abs()
            };
            worst = worst.max(val);
        }
        out.push((nn, worst / nn as f64));
    }
    out
}

/// Distance from `x` to the nearest integer.
pub fn dist_to_integers(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Iterator over nonzero integer vectors with `|k|_inf <= bound`.
struct IntBox {
    dim: usize,
    bound: i64,
    current: Option<Vec<i64>>,
}

impl IntBox {
    fn new(dim: usize, bound: u32) -> Self {
        let b = bound as i64;
        IntBox {
            dim,
            bound: b,
            current: Some(vec![-b; dim]),
        }
    }
}

impl Iterator for IntBox {
    type Item = Vec<i64>;
    fn next(&mut self) -> Option<Vec<i64>> {
        loop {
            let cur = self.current.as_mut()?;
            let item = cur.clone();
            // advance odometer, last coordinate fastest
            let mut i = self.dim;
            loop {
                if i == 0 {
                    self.current = None;
                    break;
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] <= self.bound {
                    break;
                }
                cur[i] = -self.bound;
            }
            if item.iter().any(|&x| x != 0) {
                return Some(item);
            }
        }
    }
}
