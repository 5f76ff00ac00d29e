//! Truncated multivariate Fourier series on the d-torus.
//!
//! A [`TrigSeries`] stores a sparse map of complex coefficients indexed by
//! integer modes `k` with `|k_i| <= cutoff_i`, under the Hermitian symmetry
//! `c(-k) = conj(c(k))` so that the represented function is real on real
//! arguments. The torus convention is `T^d = R^d / Z^d` with basis
//! `e^{2 pi i k.theta}`; a classical `cos x` potential becomes `cos(2 pi theta)`
//! after rescaling the spatial variable.
//!
//! Coefficients live in a `BTreeMap`, so every iteration order (and therefore
//! every floating-point sum in this crate) is deterministic.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::intmat::IntMatrix;

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("dimension mismatch: series has dim {expected}, argument has dim {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mode {index:?} exceeds the configured cutoff {cutoff:?}")]
    CutoffOverflow { index: Vec<i32>, cutoff: Vec<u32> },
    #[error("coefficients violate Hermitian symmetry at mode {index:?}")]
    NotHermitian { index: Vec<i32> },
    #[error("grid too coarse on axis {axis}: {points} points for cutoff {cutoff}")]
    GridTooCoarse {
        axis: usize,
        points: usize,
        cutoff: u32,
    },
}

/// Truncated real-valued Fourier series on `T^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    dim: usize,
    cutoff: Vec<u32>,
    coeffs: BTreeMap<Vec<i32>, Complex64>,
    truncation_loss: f64,
    rho: Option<f64>,
}

impl TrigSeries {
    /// The zero series.
    pub fn zero(dim: usize, cutoff: &[u32]) -> Self {
        assert_eq!(cutoff.len(), dim, "cutoff length must equal dim");
        assert!(dim >= 1);
        TrigSeries {
            dim,
            cutoff: cutoff.to_vec(),
            coeffs: BTreeMap::new(),
            truncation_loss: 0.0,
            rho: None,
        }
    }

    /// The constant series with value `c`.
    pub fn constant(dim: usize, cutoff: &[u32], c: f64) -> Self {
        let mut s = Self::zero(dim, cutoff);
        if c != 0.0 {
            s.coeffs.insert(vec![0; dim], Complex64::new(c, 0.0));
        }
        s
    }

    /// Real mode `amplitude * cos(2 pi (k.theta) + phase)`.
    ///
    /// Stores the Hermitian pair `c(k) = A/2 e^{i phase}`, `c(-k) = conj`.
    pub fn cosine_mode(
        dim: usize,
        cutoff: &[u32],
        k: &[i32],
        amplitude: f64,
        phase: f64,
    ) -> Result<Self, FourierError> {
        let mut s = Self::zero(dim, cutoff);
        s.add_cosine_mode(k, amplitude, phase)?;
        Ok(s)
    }

    /// Adds `amplitude * cos(2 pi k.theta + phase)` in place.
    pub fn add_cosine_mode(
        &mut self,
        k: &[i32],
        amplitude: f64,
        phase: f64,
    ) -> Result<(), FourierError> {
        self.check_dim(k.len())?;
        if k.iter().all(|&x| x == 0) {
            self.insert_raw(k.to_vec(), Complex64::new(amplitude * phase.cos(), 0.0))?;
            return Ok(());
        }
        let half = 0.5 * amplitude * Complex64::new(phase.cos(), phase.sin());
        self.insert_raw(k.to_vec(), half)?;
        self.insert_raw(k.iter().map(|&x| -x).collect(), half.conj())?;
        Ok(())
    }

    /// Sets the Hermitian pair `c(k) = c`, `c(-k) = conj(c)`.
    pub fn set_pair(&mut self, k: &[i32], c: Complex64) -> Result<(), FourierError> {
        self.check_dim(k.len())?;
        if k.iter().all(|&x| x == 0) {
            return self.set_raw(k.to_vec(), Complex64::new(c.re, 0.0));
        }
        self.set_raw(k.to_vec(), c)?;
        self.set_raw(k.iter().map(|&x| -x).collect(), c.conj())
    }

    fn insert_raw(&mut self, k: Vec<i32>, c: Complex64) -> Result<(), FourierError> {
        self.check_cutoff(&k)?;
        let entry = self
            .coeffs
            .entry(k.clone())
            .or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            self.coeffs.remove(&k);
        }
        Ok(())
    }

    fn set_raw(&mut self, k: Vec<i32>, c: Complex64) -> Result<(), FourierError> {
        self.check_cutoff(&k)?;
        if c.norm() == 0.0 {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c);
        }
        Ok(())
    }

    /// Sets a single coefficient without inserting its Hermitian partner.
    /// Callers must preserve the symmetry themselves.
    pub(crate) fn set_coeff_unchecked(&mut self, k: Vec<i32>, c: Complex64) {
        debug_assert!(self.check_cutoff(&k).is_ok());
        if c.norm() == 0.0 {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c);
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), FourierError> {
        if got != self.dim {
            return Err(FourierError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    fn check_cutoff(&self, k: &[i32]) -> Result<(), FourierError> {
        for (i, &ki) in k.iter().enumerate() {
            if ki.unsigned_abs() > self.cutoff[i] {
                return Err(FourierError::CutoffOverflow {
                    index: k.to_vec(),
                    cutoff: self.cutoff.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> &[u32] {
        &self.cutoff
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        assert!(rho >= 0.0);
        self.rho = Some(rho);
        self
    }

    /// Accumulated l1 mass of coefficients dropped by truncating operations.
    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn coeff(&self, k: &[i32]) -> Complex64 {
        self.coeffs
            .get(k)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i32>, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn num_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// Largest `|k_i|` among stored modes, per axis.
    pub fn max_mode_per_axis(&self) -> Vec<u32> {
        let mut m = vec![0u32; self.dim];
        for k in self.coeffs.keys() {
            for (i, &ki) in k.iter().enumerate() {
                m[i] = m[i].max(ki.unsigned_abs());
            }
        }
        m
    }

    /// Enlarges the cutoff (never shrinks; coefficients are untouched).
    pub fn grow_cutoff(&self, cutoff: &[u32]) -> Self {
        assert_eq!(cutoff.len(), self.dim);
        let merged: Vec<u32> = self
            .cutoff
            .iter()
            .zip(cutoff)
            .map(|(&a, &b)| a.max(b))
            .collect();
        let mut out = self.clone();
        out.cutoff = merged;
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        for (k, c) in &self.coeffs {
            let neg: Vec<i32> = k.iter().map(|&x| -x).collect();
            if (self.coeff(&neg) - c.conj()).norm() > tol {
                return false;
            }
        }
        true
    }

    fn debug_check(&self) {
        debug_assert!(
            self.is_hermitian(1e-10 * (1.0 + self.l1_norm())),
            "Hermitian symmetry violated"
        );
    }

    /// l1 norm of the coefficients; equals `strip_norm_bound(0)`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// `sum_k |c_k| e^{2 pi rho |k|_1}`, an upper bound for the sup norm on
    /// the complex strip of width `rho`.
    pub fn strip_norm_bound(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0);
        self.coeffs
            .iter()
            .map(|(k, c)| {
                let k1: f64 = k.iter().map(|&x| x.unsigned_abs() as f64).sum();
                c.norm() * (2.0 * PI * rho * k1).exp()
            })
            .sum()
    }

    /// Pointwise evaluation `sum_k c_k e^{2 pi i k.theta}`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64, FourierError> {
        self.check_dim(theta.len())?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in &self.coeffs {
            let mut phase = 0.0;
            for (ki, ti) in k.iter().zip(theta) {
                phase += *ki as f64 * ti;
            }
            let (s, co) = (2.0 * PI * phase).sin_cos();
            acc += c * Complex64::new(co, s);
        }
        debug_assert!(
            acc.im.abs() <= 1e-12 * (1.0 + self.l1_norm()),
            "imaginary residue {} too large",
            acc.im
        );
        Ok(acc.re)
    }

    pub fn add(&self, other: &TrigSeries) -> Result<TrigSeries, FourierError> {
        self.check_dim(other.dim)?;
        let cutoff: Vec<u32> = self
            .cutoff
            .iter()
            .zip(&other.cutoff)
            .map(|(&a, &b)| a.max(b))
            .collect();
        let mut out = TrigSeries::zero(self.dim, &cutoff);
        out.truncation_loss = self.truncation_loss + other.truncation_loss;
        out.coeffs = self.coeffs.clone();
        for (k, c) in &other.coeffs {
            let e = out
                .coeffs
                .entry(k.clone())
                .or_insert(Complex64::new(0.0, 0.0));
            *e += c;
        }
        out.coeffs.retain(|_, c| c.norm() != 0.0);
        out.debug_check();
        Ok(out)
    }

    pub fn sub(&self, other: &TrigSeries) -> Result<TrigSeries, FourierError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> TrigSeries {
        let mut out = self.clone();
        if factor == 0.0 {
            out.coeffs.clear();
            return out;
        }
        for c in out.coeffs.values_mut() {
            *c *= factor;
        }
        out
    }

    /// Coefficient convolution truncated to the merged cutoff; the l1 mass of
    /// dropped products accumulates into `truncation_loss`.
    pub fn multiply(&self, other: &TrigSeries) -> Result<TrigSeries, FourierError> {
        self.check_dim(other.dim)?;
        let cutoff: Vec<u32> = self
            .cutoff
            .iter()
            .zip(&other.cutoff)
            .map(|(&a, &b)| a.max(b))
            .collect();
        let mut out = TrigSeries::zero(self.dim, &cutoff);
        let mut loss = self.truncation_loss + other.truncation_loss;
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &other.coeffs {
                let k: Vec<i32> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                let c = c1 * c2;
                if k.iter()
                    .zip(&cutoff)
                    .any(|(ki, &cu)| ki.unsigned_abs() > cu)
                {
                    loss += c.norm();
                } else {
                    let e = out.coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0));
                    *e += c;
                }
            }
        }
        out.coeffs.retain(|_, c| c.norm() != 0.0);
        out.truncation_loss = loss;
        out.debug_check();
        Ok(out)
    }

    /// Directional derivative `(u . grad)^order`: multiplies each coefficient
    /// by `(2 pi i k.u)^order`.
    pub fn directional_derivative(
        &self,
        u: &[f64],
        order: u32,
    ) -> Result<TrigSeries, FourierError> {
        self.check_dim(u.len())?;
        let mut out = TrigSeries::zero(self.dim, &self.cutoff);
        out.truncation_loss = self.truncation_loss;
        for (k, c) in &self.coeffs {
            let ku: f64 = k.iter().zip(u).map(|(&ki, &ui)| ki as f64 * ui).sum();
            let factor = Complex64::new(0.0, 2.0 * PI * ku).powu(order);
            let v = c * factor;
            if v.norm() != 0.0 {
                out.coeffs.insert(k.clone(), v);
            }
        }
        out.debug_check();
        Ok(out)
    }

    /// Argument translation `g(theta) = f(theta + s)`: coefficients pick up
    /// the phase `e^{2 pi i k.s}`.
    pub fn shift(&self, s: &[f64]) -> Result<TrigSeries, FourierError> {
        self.check_dim(s.len())?;
        let mut out = TrigSeries::zero(self.dim, &self.cutoff);
        out.truncation_loss = self.truncation_loss;
        for (k, c) in &self.coeffs {
            let mut phase = 0.0;
            for (ki, si) in k.iter().zip(s) {
                phase += *ki as f64 * si;
            }
            let (sn, cs) = (2.0 * PI * phase).sin_cos();
            out.coeffs.insert(k.clone(), c * Complex64::new(cs, sn));
        }
        out.debug_check();
        Ok(out)
    }

    /// Exact pullback by a unimodular matrix: `g(theta) = f(B^{-1} theta)`,
    /// an integer remap of modes `k -> B^{-T} k`.
    pub fn pullback_by_unimodular(&self, b: &IntMatrix) -> Result<TrigSeries, FourierError> {
        assert_eq!(b.size(), self.dim, "matrix size must equal series dim");
        let det = b.det();
        assert!(det == 1 || det == -1, "matrix must be unimodular");
        let b_inv_t = b
            .inverse_unimodular()
            .expect("unimodular matrix is invertible")
            .transpose();
        let mut out = TrigSeries::zero(self.dim, &self.cutoff);
        out.truncation_loss = self.truncation_loss;
        for (k, c) in &self.coeffs {
            let k64: Vec<i64> = k.iter().map(|&x| x as i64).collect();
            let mapped = b_inv_t.mul_vec_i64(&k64);
            let new_k: Vec<i32> = mapped
                .iter()
                .map(|&x| i32::try_from(x).expect("remapped mode overflows i32"))
                .collect();
            out.check_cutoff(&new_k)?;
            out.coeffs.insert(new_k, *c);
        }
        out.debug_check();
        Ok(out)
    }

    /// Average over the first `dim - 1` axes: keeps only modes with
    /// `k_psi = 0` and returns them as a 1-D series in the last variable.
    pub fn partial_average(&self) -> TrigSeries {
        assert!(self.dim >= 2, "partial_average needs a (psi, eta) layout");
        let mut out = TrigSeries::zero(1, &[self.cutoff[self.dim - 1]]);
        for (k, c) in &self.coeffs {
            if k[..self.dim - 1].iter().all(|&x| x == 0) {
                out.coeffs.insert(vec![k[self.dim - 1]], *c);
            }
        }
        out.debug_check();
        out
    }

    /// Embeds a 1-D series into the last axis of a `dim`-dimensional torus.
    pub fn embed_last_axis(&self, dim: usize) -> TrigSeries {
        assert_eq!(self.dim, 1);
        let mut cutoff = vec![0u32; dim];
        cutoff[dim - 1] = self.cutoff[0];
        let mut out = TrigSeries::zero(dim, &cutoff);
        out.truncation_loss = self.truncation_loss;
        for (k, c) in &self.coeffs {
            let mut idx = vec![0i32; dim];
            idx[dim - 1] = k[0];
            out.coeffs.insert(idx, *c);
        }
        out
    }

    /// Partial evaluation of the last variable: returns the `(dim-1)`-series
    /// `theta' -> f(theta', x)`.
    pub fn fix_last_axis(&self, x: f64) -> TrigSeries {
        assert!(self.dim >= 2);
        let mut out = TrigSeries::zero(self.dim - 1, &self.cutoff[..self.dim - 1]);
        for (k, c) in &self.coeffs {
            let k_last = k[self.dim - 1];
            let (sn, cs) = (2.0 * PI * k_last as f64 * x).sin_cos();
            let head = k[..self.dim - 1].to_vec();
            let e = out.coeffs.entry(head).or_insert(Complex64::new(0.0, 0.0));
            *e += c * Complex64::new(cs, sn);
        }
        out.coeffs.retain(|_, c| c.norm() != 0.0);
        out.debug_check();
        out
    }

    /// Uniform-grid synthesis. Each `points[i]` must be odd and at least
    /// `2*cutoff[i] + 1` so the stored modes are alias-free.
    pub fn sample(&self, points: &[usize]) -> Result<GridSampling, FourierError> {
        self.check_dim(points.len())?;
        for (axis, (&m, &k)) in points.iter().zip(&self.cutoff).enumerate() {
            if m % 2 == 0 || m < 2 * k as usize + 1 {
                return Err(FourierError::GridTooCoarse {
                    axis,
                    points: m,
                    cutoff: k,
                });
            }
        }
        let total: usize = points.iter().product();
        let mut freq = vec![Complex64::new(0.0, 0.0); total];
        for (k, c) in &self.coeffs {
            let mut idx = 0;
            for (i, &ki) in k.iter().enumerate() {
                let m = points[i] as i64;
                let t = (ki as i64).rem_euclid(m) as usize;
                idx = idx * points[i] + t;
            }
            freq[idx] += c;
        }
        for axis in 0..self.dim {
            dft_axis(&mut freq, points, axis, true);
        }
        let l1 = self.l1_norm();
        let values = freq
            .iter()
            .map(|c| {
                debug_assert!(c.im.abs() <= 1e-11 * (1.0 + l1), "non-real synthesis");
                c.re
            })
            .collect();
        Ok(GridSampling {
            points: points.to_vec(),
            values,
        })
    }
}

/// Dense real samples on a uniform grid over `T^d` (row-major, last axis
/// fastest).
#[derive(Debug, Clone)]
pub struct GridSampling {
    points: Vec<usize>,
    values: Vec<f64>,
}

impl GridSampling {
    pub fn new(points: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(points.iter().product::<usize>(), values.len());
        assert!(
            points.iter().all(|&m| m % 2 == 1),
            "grids must be odd-sized"
        );
        GridSampling {
            points: points.to_vec(),
            values,
        }
    }

    /// Samples an arbitrary function on the uniform grid.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(points: &[usize], mut f: F) -> Self {
        let total: usize = points.iter().product();
        let dim = points.len();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0f64; dim];
        for _ in 0..total {
            for i in 0..dim {
                x[i] = idx[i] as f64 / points[i] as f64;
            }
            values.push(f(&x));
            for i in (0..dim).rev() {
                idx[i] += 1;
                if idx[i] < points[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        GridSampling::new(points, values)
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete Fourier analysis truncated to `cutoff`. Returns the series and
    /// the l1 mass of the visible modes beyond the cutoff (the recorded
    /// aliasing/truncation loss).
    pub fn to_series(&self, cutoff: &[u32]) -> (TrigSeries, f64) {
        let dim = self.points.len();
        assert_eq!(cutoff.len(), dim);
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        for axis in 0..dim {
            dft_axis(&mut data, &self.points, axis, false);
        }
        let mut series = TrigSeries::zero(dim, cutoff);
        let mut loss = 0.0;
        let mut idx = vec![0usize; dim];
        for c in data.iter() {
            let k: Vec<i32> = idx
                .iter()
                .zip(&self.points)
                .map(|(&t, &m)| {
                    let half = m / 2;
                    if t <= half {
                        t as i32
                    } else {
                        t as i32 - m as i32
                    }
                })
                .collect();
            if c.norm() != 0.0 {
                if k.iter().zip(cutoff).any(|(ki, &cu)| ki.unsigned_abs() > cu) {
                    loss += c.norm();
                } else {
                    series.coeffs.insert(k, *c);
                }
            }
            for i in (0..dim).rev() {
                idx[i] += 1;
                if idx[i] < self.points[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        series.truncation_loss = loss;
        (series, loss)
    }
}

/// Naive DFT along one axis of a row-major multidimensional array.
/// The forward transform (`inverse = false`) includes the `1/M` normalization,
/// so forward-transforming samples yields Fourier coefficients directly.
fn dft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, inverse: bool) {
    let m = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let mut twiddle = vec![Complex64::new(0.0, 0.0); m];
    for (r, t) in twiddle.iter_mut().enumerate() {
        let (s, c) = (sign * 2.0 * PI * r as f64 / m as f64).sin_cos();
        *t = Complex64::new(c, s);
    }
    for o in 0..outer {
        for s in 0..stride {
            let base = o * m * stride + s;
            for (j, lj) in line.iter_mut().enumerate() {
                *lj = data[base + j * stride];
            }
            for t in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, lj) in line.iter().enumerate() {
                    acc += lj * twiddle[(t * j) % m];
                }
                if !inverse {
                    acc /= m as f64;
                }
                data[base + t * stride] = acc;
            }
        }
    }
}

/// Parses potential mode records, one per line: `k1 k2 ... kd amplitude phase`,
/// each record contributing `amplitude * cos(2 pi k.theta + phase)`. Blank
/// lines and `#` comments are skipped.
pub fn parse_mode_records(text: &str, dim: usize, cutoff: &[u32]) -> Result<TrigSeries, String> {
    let mut series = TrigSeries::zero(dim, cutoff);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(format!(
                "line {}: expected {} fields (k1..k{} amplitude phase), got {}",
                lineno + 1,
                dim + 2,
                dim,
                fields.len()
            ));
        }
        let mut k = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            k.push(
                f.parse::<i32>()
                    .map_err(|e| format!("line {}: bad mode index {:?}: {}", lineno + 1, f, e))?,
            );
        }
        let amplitude: f64 = fields[dim]
            .parse()
            .map_err(|e| format!("line {}: bad amplitude: {}", lineno + 1, e))?;
        let phase: f64 = fields[dim + 1]
            .parse()
            .map_err(|e| format!("line {}: bad phase: {}", lineno + 1, e))?;
        series
            .add_cosine_mode(&k, amplitude, phase)
            .map_err(|e| format!("line {}: {}", lineno + 1, e))?;
    }
    Ok(series)
}
