//! The dynamical interpretation of the equilibrium recurrence.
//!
//! Equilibria `x_{n+1} + x_{n-1} - 2 x_n + eps (alpha.grad V)(alpha x_n)
//! + lambda = 0` are exactly the orbits of the skew map on `T^d x R`
//!
//! ```text
//! p' = p - eps (alpha.grad V)(q) - lambda
//! q' = q + alpha p'
//! ```
//!
//! a composition of two volume-preserving shears. Displacements `q' - q` are
//! always multiples of `alpha`, so the two-dimensional leaves
//! `{(p, q0 + alpha t)}` are preserved; that constraint pins `d-1` Lyapunov
//! exponents to zero, and volume preservation pins their sum. Linearizing the
//! recurrence around an equilibrium configuration gives a discrete
//! Schroedinger operator whose finite sections diagnose the phonon gap.

use nalgebra::DMatrix;

use crate::fourier::{FourierError, TrigSeries};
use crate::lindstedt::LindstedtSolution;
use crate::resonance::dist_to_integers;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Point of the phase space `R x T^d`, carried with a lift so that leaf
/// constraints can be checked without mod-1 loss.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitState {
    pub p: f64,
    pub q_lift: Vec<f64>,
}

impl OrbitState {
    pub fn new(p: f64, q_lift: Vec<f64>) -> Self {
        OrbitState { p, q_lift }
    }

    /// The torus point `q = q_lift mod 1`.
    pub fn q(&self) -> Vec<f64> {
        self.q_lift.iter().map(|&x| frac(x)).collect()
    }
}

/// The map `F_{eps, lambda}` with its exact tangent data.
#[derive(Debug, Clone)]
pub struct LatticeMap {
    alpha: Vec<f64>,
    eps: f64,
    lambda: f64,
    /// `alpha . grad V`
    force: TrigSeries,
    /// `grad (alpha . grad V)`, one series per coordinate
    force_grad: Vec<TrigSeries>,
}

/// Per-run knobs for [`LatticeMap::iterate`].
#[derive(Debug, Clone)]
pub struct OrbitOptions {
    /// Keep every `record_every`-th state in the summary (0 = none).
    pub record_every: usize,
    /// Accumulate tangent products and report Lyapunov exponents.
    pub lyapunov: bool,
    /// Re-orthonormalization period for the tangent frame.
    pub qr_every: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            record_every: 0,
            lyapunov: false,
            qr_every: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitSummary {
    pub samples: Vec<(usize, OrbitState)>,
    /// Mean momentum along the run: the rotation statistic.
    pub mean_p: f64,
    /// `d + 1` exponents, sorted descending, when requested.
    pub lyapunov: Option<Vec<f64>>,
    pub final_state: OrbitState,
}

#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Sup over the run of the distance from `q' - q` to the line `R alpha`.
    pub max_leaf_deviation: f64,
    /// Sup of `|det DF - 1|` along the run.
    pub max_det_error: f64,
    /// Sup of the difference between `step` and `map2(map1(.))`.
    pub max_factorization_error: f64,
    /// The map is exact volume preserving iff `lambda = 0`; this flag reports
    /// the configuration, not a numerical test.
    pub exact: bool,
}

impl LatticeMap {
    pub fn new(
        potential: &TrigSeries,
        alpha: &[f64],
        eps: f64,
        lambda: f64,
    ) -> Result<Self, FourierError> {
        let force = potential.directional_derivative(alpha, 1)?;
        let dim = alpha.len();
        let mut force_grad = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            force_grad.push(force.directional_derivative(&e, 1)?);
        }
        Ok(LatticeMap {
            alpha: alpha.to_vec(),
            eps,
            lambda,
            force,
            force_grad,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Exactness of the volume-preserving map holds iff the force vanishes.
    pub fn exact(&self) -> bool {
        self.lambda == 0.0
    }

    /// The kick `p' = p - eps (alpha.grad V)(q) - lambda`, `q` unchanged.
    pub fn map1(&self, s: &OrbitState) -> OrbitState {
        let fq = self.force.evaluate(&s.q()).expect("dims match");
        OrbitState {
            p: s.p - self.eps * fq - self.lambda,
            q_lift: s.q_lift.clone(),
        }
    }

    /// The shear `q' = q + alpha p`, `p` unchanged.
    pub fn map2(&self, s: &OrbitState) -> OrbitState {
        OrbitState {
            p: s.p,
            q_lift: s
                .q_lift
                .iter()
                .zip(&self.alpha)
                .map(|(&q, &a)| q + a * s.p)
                .collect(),
        }
    }

    /// One step of `F_{eps, lambda} = map2 . map1`.
    pub fn step(&self, s: &OrbitState) -> OrbitState {
        self.map2(&self.map1(s))
    }

    /// Exact Jacobian of `step` at `s`, in `(p, q)` coordinates.
    pub fn jacobian(&self, s: &OrbitState) -> DMatrix<f64> {
        let d = self.alpha.len();
        let q = s.q();
        let g: Vec<f64> = self
            .force_grad
            .iter()
            .map(|gj| gj.evaluate(&q).expect("dims match"))
            .collect();
        let mut j = DMatrix::zeros(d + 1, d + 1);
        j[(0, 0)] = 1.0;
        for c in 0..d {
            j[(0, c + 1)] = -self.eps * g[c];
        }
        for r in 0..d {
            j[(r + 1, 0)] = self.alpha[r];
            for c in 0..d {
                let delta = if r == c { 1.0 } else { 0.0 };
                j[(r + 1, c + 1)] = delta - self.eps * self.alpha[r] * g[c];
            }
        }
        j
    }

    /// Iterates the map, optionally accumulating tangent products with
    /// periodic QR re-orthonormalization for the Lyapunov spectrum.
    pub fn iterate(&self, s0: &OrbitState, n_steps: usize, opts: &OrbitOptions) -> OrbitSummary {
        assert!(n_steps >= 1);
        let d = self.alpha.len();
        let mut state = s0.clone();
        let mut samples = Vec::new();
        let mut p_sum = 0.0;
        let mut frame = DMatrix::<f64>::identity(d + 1, d + 1);
        let mut log_sums = vec![0.0f64; d + 1];
        let qr_every = opts.qr_every.max(1);
        for n in 1..=n_steps {
            if opts.lyapunov {
                frame = self.jacobian(&state) * frame;
            }
            state = self.step(&state);
            p_sum += state.p;
            if opts.record_every > 0 && n % opts.record_every == 0 {
                samples.push((n, state.clone()));
            }
            if opts.lyapunov && (n % qr_every == 0 || n == n_steps) {
                let qr = frame.clone().qr();
                let r = qr.r();
                for (i, ls) in log_sums.iter_mut().enumerate() {
                    *ls += r[(i, i)].abs().ln();
                }
                frame = qr.q();
            }
        }
        let lyapunov = if opts.lyapunov {
            let mut exps: Vec<f64> = log_sums.iter().map(|s| s / n_steps as f64).collect();
            exps.sort_by(|a, b| b.partial_cmp(a).unwrap());
            Some(exps)
        } else {
            None
        };
        OrbitSummary {
            samples,
            mean_p: p_sum / n_steps as f64,
            lyapunov,
            final_state: state,
        }
    }

    /// Runs the structural diagnostics along an orbit: leaf preservation,
    /// unit Jacobian determinant, and the kick/shear factorization.
    pub fn structure_checks(&self, s0: &OrbitState, n_steps: usize) -> StructureReport {
        let mut state = s0.clone();
        let mut max_leaf: f64 = 0.0;
        let mut max_det: f64 = 0.0;
        let mut max_fact: f64 = 0.0;
        for _ in 0..n_steps {
            let det = self.jacobian(&state).determinant();
            max_det = max_det.max((det - 1.0).abs());

            let next = self.step(&state);
            let composed = self.map2(&self.map1(&state));
            let mut fact: f64 = (next.p - composed.p).abs();
            for (a, b) in next.q_lift.iter().zip(&composed.q_lift) {
                fact = fact.max((a - b).abs());
            }
            max_fact = max_fact.max(fact);

            // q' - q must be p' * alpha
            for ((qn, qo), a) in next.q_lift.iter().zip(&state.q_lift).zip(&self.alpha) {
                max_leaf = max_leaf.max((qn - qo - next.p * a).abs());
            }
            state = next;
        }
        StructureReport {
            max_leaf_deviation: max_leaf,
            max_det_error: max_det,
            max_factorization_error: max_fact,
            exact: self.exact(),
        }
    }
}

/// Comparison of a hull-function orbit against direct map iteration.
#[derive(Debug, Clone)]
pub struct HullOrbitReport {
    pub omega: f64,
    /// The scalar counterterm `lambda(eta, eps)` driving the map.
    pub lambda: f64,
    /// Hull positions `x_0 .. x_{n_steps}`.
    pub positions: Vec<f64>,
    /// Sup deviation between the map orbit started at `(p_1, q_1)` and the
    /// hull-generated states; `O(eps^{N+1}) * n_steps` for an order-`N` sum.
    pub max_deviation: f64,
    /// How far `(xi_1, eta)` is from `beta xi_2` mod 1; nonzero values mean
    /// the phase parameters do not describe an equilibrium of the lattice.
    pub consistency_error: f64,
}

/// Derives the compatible phase parameters `(xi_1, eta)` from the offset
/// `xi_2` through `beta xi_2 = (xi_1, eta) mod 1`.
pub fn phases_from_offset(beta: &[f64], xi2: f64) -> (Vec<f64>, f64) {
    let pushed: Vec<f64> = beta.iter().map(|&b| frac(b * xi2)).collect();
    let (eta, xi1) = pushed.split_last().unwrap();
    (xi1.to_vec(), *eta)
}

/// Builds the configuration `x_n = n omega + v(n Omega + xi_1, eta) + xi_2`
/// from the Lindstedt partial sums and reports how well the dynamical system
/// reproduces it.
pub fn orbit_from_hull(
    sol: &LindstedtSolution,
    eps: f64,
    eta: f64,
    xi1: &[f64],
    xi2: f64,
    n_steps: usize,
) -> HullOrbitReport {
    assert!(n_steps >= 1);
    let intr = &sol.model.intrinsic;
    let omega = sol.model.resonance.omega;
    let alpha = sol.model.alpha.alpha();
    let n_psi = intr.omega_intrinsic.len();
    assert_eq!(xi1.len(), n_psi);

    let mut consistency: f64 = 0.0;
    for (i, &b) in intr.beta.iter().enumerate() {
        let target = if i < n_psi { xi1[i] } else { eta };
        consistency = consistency.max(dist_to_integers(b * xi2 - target));
    }

    let v_slice = sol.v_partial(eps).fix_last_axis(eta);
    let lambda = sol.lambda_value(eta, eps);

    let hull_x = |n: usize| -> f64 {
        let psi: Vec<f64> = intr
            .omega_intrinsic
            .iter()
            .zip(xi1)
            .map(|(&o, &x1)| frac(n as f64 * o + x1))
            .collect();
        n as f64 * omega + v_slice.evaluate(&psi).expect("dims match") + xi2
    };
    let positions: Vec<f64> = (0..=n_steps).map(hull_x).collect();

    let map = LatticeMap::new(&sol.model.potential, alpha, eps, lambda).expect("dims match");
    let mut state = OrbitState::new(
        positions[1] - positions[0],
        alpha.iter().map(|&a| a * positions[1]).collect(),
    );
    let mut max_dev: f64 = 0.0;
    for n in 2..=n_steps {
        state = map.step(&state);
        let p_ref = positions[n] - positions[n - 1];
        let mut dev = (state.p - p_ref).abs();
        for (ql, a) in state.q_lift.iter().zip(alpha) {
            dev = dev.max((ql - a * positions[n]).abs());
        }
        max_dev = max_dev.max(dev);
    }
    HullOrbitReport {
        omega,
        lambda,
        positions,
        max_deviation: max_dev,
        consistency_error: consistency,
    }
}

/// Symmetric tridiagonal section of the phonon operator: diagonal
/// `-2 + eps * curvature_n`, off-diagonal ones, Dirichlet ends.
#[derive(Debug, Clone)]
pub struct PhononSection {
    diag: Vec<f64>,
}

impl PhononSection {
    pub fn from_curvatures(curvatures: &[f64], eps: f64) -> Self {
        assert!(!curvatures.is_empty());
        PhononSection {
            diag: curvatures.iter().map(|&c| -2.0 + eps * c).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count for the
    /// `LDL^T` recurrence with unit off-diagonals).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for &d in &self.diag[1..] {
            if q == 0.0 {
                q = 1e-300;
            }
            q = d - x - 1.0 / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-indexed) by bisection on the count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.size());
        let lo0 = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0;
        let hi0 = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
        let (mut lo, mut hi) = (lo0 - 1e-9, hi0 + 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Distance from 0 to the section spectrum: the gap proxy.
    pub fn min_abs_eigenvalue(&self) -> f64 {
        let n = self.size();
        let below = self.count_below(0.0);
        let mut best = f64::INFINITY;
        if below > 0 {
            best = best.min(self.eigenvalue(below - 1).abs());
        }
        if below < n {
            best = best.min(self.eigenvalue(below).abs());
        }
        best
    }
}

/// Assembles phonon sections over the first `size` sites of an equilibrium
/// segment for each requested size and returns the gap proxies.
pub fn phonon_gap(
    x: &[f64],
    potential: &TrigSeries,
    alpha: &[f64],
    eps: f64,
    sizes: &[usize],
) -> Result<Vec<(usize, f64)>, FourierError> {
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    assert!(
        x.len() >= max_size,
        "need {} equilibrium sites, have {}",
        max_size,
        x.len()
    );
    let d2v = potential.directional_derivative(alpha, 2)?;
    let curvatures: Vec<f64> = x
        .iter()
        .take(max_size)
        .map(|&xn| {
            let theta: Vec<f64> = alpha.iter().map(|&a| frac(a * xn)).collect();
            d2v.evaluate(&theta)
        })
        .collect::<Result<_, _>>()?;
    Ok(sizes
        .iter()
        .map(|&s| {
            let section = PhononSection::from_curvatures(&curvatures[..s], eps);
            (s, section.min_abs_eigenvalue())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::DIVISOR_FLOOR;
    use crate::lindstedt::{expand, ResonantModel};
    use crate::resonance::{MediumFrequency, Resonance};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn example_model(a: f64, c: f64) -> ResonantModel {
        let alpha = MediumFrequency::new(&[1.0, SQRT2]).unwrap();
        let mut v = TrigSeries::zero(2, &[1, 1]);
        v.add_cosine_mode(&[1, 0], a, 0.0).unwrap();
        v.add_cosine_mode(&[1, 1], c, 0.0).unwrap();
        let res = Resonance::new(&[1, 1], 1, SQRT2 - 1.0, &alpha).unwrap();
        ResonantModel::new(v, alpha, res).unwrap()
    }

    fn cos_potential() -> TrigSeries {
        TrigSeries::cosine_mode(2, &[1, 1], &[1, 0], 1.0, 0.0).unwrap()
    }

    #[test]
    fn step_free_rotation() {
        let alpha = [1.0, SQRT2];
        let map = LatticeMap::new(&cos_potential(), &alpha, 0.0, 0.0).unwrap();
        let s = OrbitState::new(0.7, vec![0.1, 0.2]);
        let next = map.step(&s);
        assert_eq!(next.p, 0.7);
        assert!((next.q_lift[0] - (0.1 + 0.7)).abs() < 1e-15);
        assert!((next.q_lift[1] - (0.2 + 0.7 * SQRT2)).abs() < 1e-15);
    }

    #[test]
    fn step_linear_drift_under_force() {
        let alpha = [1.0, SQRT2];
        let map = LatticeMap::new(&cos_potential(), &alpha, 0.0, 0.1).unwrap();
        let s = OrbitState::new(1.0, vec![0.0, 0.0]);
        let next = map.step(&s);
        assert!((next.p - 0.9).abs() < 1e-15);
        assert!((next.q_lift[0] - 0.9).abs() < 1e-15);
        assert!((next.q_lift[1] - 0.9 * SQRT2).abs() < 1e-15);
    }

    #[test]
    fn step_kick_from_potential() {
        // dV along alpha at q1 = 1/4 is -2 pi sin(pi/2) = -2 pi
        let alpha = [1.0, SQRT2];
        let map = LatticeMap::new(&cos_potential(), &alpha, 0.01, 0.0).unwrap();
        let s = OrbitState::new(0.3, vec![0.25, 0.0]);
        let next = map.step(&s);
        assert!((next.p - (0.3 + 0.02 * PI)).abs() < 1e-14);
    }

    #[test]
    fn iterate_preserves_momentum_without_coupling() {
        let alpha = [1.0, SQRT2];
        let map = LatticeMap::new(&cos_potential(), &alpha, 0.0, 0.0).unwrap();
        let s0 = OrbitState::new(0.37, vec![0.0, 0.0]);
        let summary = map.iterate(&s0, 1000, &OrbitOptions::default());
        assert!((summary.mean_p - 0.37).abs() < 1e-13);
        assert_eq!(summary.final_state.p, 0.37);
    }

    #[test]
    fn lyapunov_of_integrable_shear_decays_like_log_n() {
        // the tangent products of the eps = 0 shear grow polynomially, so the
        // finite-time exponent estimates are bounded by ~ln(n |alpha|)/n
        let alpha = [1.0, SQRT2];
        let map = LatticeMap::new(&cos_potential(), &alpha, 0.0, 0.0).unwrap();
        let s0 = OrbitState::new(0.4142, vec![0.1, 0.9]);
        let opts = OrbitOptions {
            lyapunov: true,
            ..Default::default()
        };
        let n = 10_000;
        let summary = map.iterate(&s0, n, &opts);
        let exps = summary.lyapunov.unwrap();
        let envelope = ((n as f64) * 3.0).ln() / n as f64;
        for chi in &exps {
            assert!(chi.abs() <= 2.0 * envelope, "chi = {chi:e}");
        }
        // and they sum to zero much more tightly (volume preservation)
        let sum: f64 = exps.iter().sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn lyapunov_triplet_structure_at_small_coupling() {
        // amplitudes keep eps * d^2 V well below the hopping bandwidth, so
        // 20-step QR blocks stay numerically full rank
        let model = example_model(0.05, 0.05);
        let map = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.05, 0.0).unwrap();
        let s0 = OrbitState::new(SQRT2 - 1.0, vec![0.13, 0.41]);
        let opts = OrbitOptions {
            lyapunov: true,
            ..Default::default()
        };
        let summary = map.iterate(&s0, 30_000, &opts);
        let exps = summary.lyapunov.unwrap();
        assert_eq!(exps.len(), 3);
        // middle exponent pinned by the leaf constraint, sum by volume
        assert!(exps[1].abs() < 1e-3, "middle exponent {:e}", exps[1]);
        let sum: f64 = exps.iter().sum();
        assert!(sum.abs() < 1e-3, "sum {sum:e}");
    }

    #[test]
    fn lyapunov_strong_coupling_needs_frequent_qr() {
        // at strong effective coupling the 20-step blocks overflow the
        // contracting direction; re-orthonormalizing every step keeps the
        // triplet structure (chi, ~0, -chi) recoverable
        let model = example_model(1.0, 1.0);
        let map = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.05, 0.0).unwrap();
        let s0 = OrbitState::new(SQRT2 - 1.0, vec![0.13, 0.41]);
        let opts = OrbitOptions {
            lyapunov: true,
            qr_every: 1,
            ..Default::default()
        };
        let summary = map.iterate(&s0, 20_000, &opts);
        let exps = summary.lyapunov.unwrap();
        assert!(exps[0] > 1.0, "strongly chaotic: {exps:?}");
        assert!(exps[1].abs() < 2e-3, "middle exponent {:e}", exps[1]);
        let sum: f64 = exps.iter().sum();
        assert!(sum.abs() < 1e-9, "sum {sum:e}");
    }

    #[test]
    fn structure_checks_hold_along_random_orbits() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let model = example_model(1.0, 1.0);
        let map = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.1, 0.3).unwrap();
        let s0 = OrbitState::new(rng.gen_range(-1.0..1.0), vec![rng.gen(), rng.gen()]);
        let report = map.structure_checks(&s0, 1000);
        assert!(report.max_leaf_deviation <= 1e-10);
        assert!(report.max_det_error <= 1e-12);
        assert!(report.max_factorization_error <= 1e-15);
        assert!(!report.exact);

        let free = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.1, 0.0).unwrap();
        assert!(free.structure_checks(&s0, 10).exact);
    }

    #[test]
    fn jacobian_determinant_is_one_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let model = example_model(0.8, 1.2);
        let map = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.2, 0.15).unwrap();
        for _ in 0..50 {
            let s = OrbitState::new(rng.gen_range(-2.0..2.0), vec![rng.gen(), rng.gen()]);
            let det = map.jacobian(&s).determinant();
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = example_model(0.8, 1.2);
        let map = LatticeMap::new(&model.potential, model.alpha.alpha(), 0.2, 0.1).unwrap();
        let s = OrbitState::new(0.3, vec![0.21, 0.57]);
        let j = map.jacobian(&s);
        let h = 1e-6;
        // columns: p, q1, q2
        for col in 0..3 {
            let mut sp = s.clone();
            let mut sm = s.clone();
            if col == 0 {
                sp.p += h;
                sm.p -= h;
            } else {
                sp.q_lift[col - 1] += h;
                sm.q_lift[col - 1] -= h;
            }
            let fp = map.step(&sp);
            let fm = map.step(&sm);
            let fd = [
                (fp.p - fm.p) / (2.0 * h),
                (fp.q_lift[0] - fm.q_lift[0]) / (2.0 * h),
                (fp.q_lift[1] - fm.q_lift[1]) / (2.0 * h),
            ];
            for row in 0..3 {
                assert!(
                    (j[(row, col)] - fd[row]).abs() < 1e-6 * (1.0 + fd[row].abs()),
                    "row {row} col {col}"
                );
            }
        }
    }

    #[test]
    fn hull_orbit_exact_at_zero_coupling() {
        let model = example_model(1.0, 1.0);
        let sol = expand(&model, 1, DIVISOR_FLOOR).unwrap();
        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, 0.0);
        let report = orbit_from_hull(&sol, 0.0, eta, &xi1, 0.0, 100);
        assert!(report.max_deviation < 1e-12);
        assert!(report.consistency_error < 1e-12);
        // x_n = n omega exactly
        for (n, &x) in report.positions.iter().enumerate() {
            assert!((x - n as f64 * (SQRT2 - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn hull_orbit_deviation_scales_with_residual() {
        let model = example_model(1.0, 1.0);
        let sol = expand(&model, 1, DIVISOR_FLOOR).unwrap();
        let xi2 = 0.2;
        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, xi2);
        let n_steps = 100;
        let report = orbit_from_hull(&sol, 1e-3, eta, &xi1, xi2, n_steps);
        assert!(report.consistency_error < 1e-12);
        let residual = sol.residual(1e-3, 9);
        // accumulated drift stays within a modest multiple of n * residual
        assert!(
            report.max_deviation <= 20.0 * n_steps as f64 * residual,
            "deviation {:e} vs residual {:e}",
            report.max_deviation,
            residual
        );
        assert!(report.max_deviation > 0.0);
    }

    #[test]
    fn hull_orbit_deviation_scales_with_order() {
        // the defect of the order-N sum is O(eps^{N+1}); the map propagates
        // it ballistically while n * sqrt(eps * curvature) stays small, so a
        // short window and a small-eps decade give the clean N+1 slope
        // (longer windows resolve the eps-dependent phonon response and
        // shave the exponent toward N + 1/2)
        let model = example_model(0.05, 0.05);
        let xi2 = 0.5 / model.intrinsic.beta_eta(); // marginal phase eta = 1/2
        for n in [1usize, 2] {
            let sol = expand(&model, n, DIVISOR_FLOOR).unwrap();
            let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, xi2);
            let (e1, e2) = (1e-3, 1e-4);
            let d1 = orbit_from_hull(&sol, e1, eta, &xi1, xi2, 10).max_deviation;
            let d2 = orbit_from_hull(&sol, e2, eta, &xi1, xi2, 10).max_deviation;
            let slope = (d1 / d2).ln() / (e1 / e2).ln();
            assert!(
                (slope - (n as f64 + 1.0)).abs() < 0.3,
                "order {n}: slope {slope}"
            );
        }
    }

    #[test]
    fn hull_orbit_index_shift_identity() {
        // advancing (xi_1, xi_2) by (Omega, omega) advances the orbit by one
        // index: x_n(shifted) = x_{n+1}(original)
        let model = example_model(1.0, 1.0);
        let sol = expand(&model, 2, DIVISOR_FLOOR).unwrap();
        let eps = 1e-2;
        let omega = model.resonance.omega;
        let base_xi2 = 0.07;
        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, base_xi2);
        let base = orbit_from_hull(&sol, eps, eta, &xi1, base_xi2, 50);

        let shifted_xi2 = base_xi2 + omega;
        let (xi1_s, eta_s) = phases_from_offset(&model.intrinsic.beta, shifted_xi2);
        assert!((eta_s - eta).abs() < 1e-12, "eta is invariant mod 1");
        let shifted = orbit_from_hull(&sol, eps, eta_s, &xi1_s, shifted_xi2, 50);
        for n in 0..50 {
            assert!(
                (shifted.positions[n] - base.positions[n + 1]).abs() < 1e-10,
                "n = {n}"
            );
        }
    }

    #[test]
    fn phonon_gap_matches_dirichlet_laplacian_at_zero_coupling() {
        // eps = 0: section is tridiag(1, -2, 1) with eigenvalues
        // -2 + 2 cos(k pi / (N+1))
        let x: Vec<f64> = (0..128).map(|n| n as f64 * 0.414).collect();
        let gaps = phonon_gap(&x, &cos_potential(), &[1.0, SQRT2], 0.0, &[100]).unwrap();
        let expect = 2.0 - 2.0 * (PI / 101.0).cos();
        assert!((gaps[0].1 - expect).abs() < 1e-10);
        assert!((expect - 9.67e-4).abs() < 1e-5);
    }

    #[test]
    fn sturm_eigenvalues_match_closed_form() {
        let section = PhononSection::from_curvatures(&vec![0.0; 40], 0.0);
        for k in 0..40 {
            // ascending order: eigenvalue k is -2 + 2 cos((40-k) pi / 41)
            let expect = -2.0 + 2.0 * ((40 - k) as f64 * PI / 41.0).cos();
            assert!((section.eigenvalue(k) - expect).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn pinned_control_bounds_the_gap() {
        // constant curvature -c shifts the spectrum to [-4 - eps c, -eps c],
        // so the gap proxy is at least eps * c for every size
        let c = 1.7;
        let eps = 0.05;
        for n in [50usize, 100, 200] {
            let section = PhononSection::from_curvatures(&vec![-c; n], eps);
            assert!(section.min_abs_eigenvalue() >= eps * c);
        }
    }

    #[test]
    fn phonon_gap_decays_on_equilibrium_configuration() {
        // amplitudes chosen so the series is convergent at eps = 0.05 and the
        // phonon disorder is perturbative
        let model = example_model(0.05, 0.05);
        let sol = expand(&model, 3, DIVISOR_FLOOR).unwrap();
        let eps = 0.05;
        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, 0.0);
        let report = orbit_from_hull(&sol, eps, eta, &xi1, 0.0, 400);
        let gaps = phonon_gap(
            &report.positions,
            &model.potential,
            model.alpha.alpha(),
            eps,
            &[50, 100, 200, 400],
        )
        .unwrap();
        // Dirichlet bracketing: nested sections push the top eigenvalue up
        // toward the spectral edge, so the proxy decreases strictly
        for w in gaps.windows(2) {
            assert!(w[1].1 < w[0].1, "gap proxies must decrease: {:?}", gaps);
        }
    }

    #[test]
    fn phonon_gap_closes_at_the_marginal_phase() {
        // at the stable phase (eta = 0 branch) the mean curvature is
        // -eps beta_eta lambda1'(0) < 0 and the proxies converge to that
        // positive distance; at the opposite zero (eta = 1/2) the spectrum
        // straddles 0, so the sections reach gaps orders of magnitude smaller
        let model = example_model(0.05, 0.05);
        let sol = expand(&model, 3, DIVISOR_FLOOR).unwrap();
        let eps = 0.05;
        let beta_eta = model.intrinsic.beta_eta();

        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, 0.0);
        let stable = orbit_from_hull(&sol, eps, eta, &xi1, 0.0, 400);
        let stable_gaps = phonon_gap(
            &stable.positions,
            &model.potential,
            model.alpha.alpha(),
            eps,
            &[400],
        )
        .unwrap();
        // predicted band-edge distance eps * beta_eta * d(lambda^1)/d(eta)(0)
        let slope = sol
            .lambda_jet
            .term(1)
            .directional_derivative(&[1.0], 1)
            .unwrap()
            .evaluate(&[0.0])
            .unwrap();
        let predicted = eps * beta_eta * slope;
        assert!((stable_gaps[0].1 - predicted).abs() < 0.1 * predicted);

        let xi2 = 0.5 / beta_eta;
        let (xi1, eta) = phases_from_offset(&model.intrinsic.beta, xi2);
        assert!((eta - 0.5).abs() < 1e-12);
        let marginal = orbit_from_hull(&sol, eps, eta, &xi1, xi2, 400);
        let marginal_gaps = phonon_gap(
            &marginal.positions,
            &model.potential,
            model.alpha.alpha(),
            eps,
            &[50, 100, 200, 400],
        )
        .unwrap();
        let best = marginal_gaps
            .iter()
            .map(|g| g.1)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.02 * predicted, "marginal branch gap {best:e}");
    }
}
