//! Resonant quasi-periodic equilibria of 1-D Frenkel-Kontorova lattices.
//!
//! A chain of particles `x_n` sits in a quasi-periodic substrate potential
//! `V(x alpha)` with `alpha` a vector of `d >= 2` rationally independent
//! frequencies, under a constant external force. This crate computes the
//! equilibria whose mean spacing `omega` is *resonant* with the substrate
//! (`k . omega alpha = m` for integers `(k, m)`), which are exactly the
//! configurations that survive small forcing:
//!
//! - [`resonance`] detects discrete resonances, verifies that the resonance
//!   module has rank one, and reduces the torus by a unimodular matrix to
//!   intrinsic frequencies `Omega` on an invariant codimension-one torus.
//! - [`fourier`] is the underlying truncated Fourier arithmetic on the torus.
//! - [`cohomology`] solves the first- and second-difference equations along
//!   the `Omega` rotation with explicit small divisors.
//! - [`lindstedt`] builds the formal power series `(v, lambda)` of the
//!   resonant hull equation order by order, with the counterterm
//!   `lambda(eta)` fixed by solvability and the zero-average normalization.
//! - [`auxiliary`] solves `lambda(eta, eps) = lambda*` for the transversal
//!   phase as a formal series and computes the depinning force range.
//! - [`dynamics`] iterates the equivalent volume-preserving skew map,
//!   measures Lyapunov spectra and leaf/volume constraints, and estimates
//!   phonon gaps from finite tridiagonal sections.
//! - [`verify`] is an independent spectral Newton solver used to
//!   cross-validate the Lindstedt partial sums.
//!
//! Torus convention: `T^d = R^d / Z^d` with Fourier basis
//! `e^{2 pi i k.theta}`; classical potentials like `cos x` enter as
//! `cos(2 pi theta)` after rescaling.

pub mod auxiliary;
pub mod cohomology;
pub mod dynamics;
pub mod fourier;
pub mod intmat;
pub mod lindstedt;
pub mod resonance;
pub mod verify;

pub use fourier::{GridSampling, TrigSeries};
pub use intmat::IntMatrix;
pub use lindstedt::{EpsilonJet, LindstedtSolution, ResonantModel};
pub use resonance::{IntrinsicData, MediumFrequency, Resonance};

#[cfg(test)]
mod tests {
    // all domain values are immutable after construction and safe to share
    // across threads; keep that a compile-time fact
    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn domain_types_are_thread_safe() {
        assert_send_sync::<crate::TrigSeries>();
        assert_send_sync::<crate::GridSampling>();
        assert_send_sync::<crate::MediumFrequency>();
        assert_send_sync::<crate::Resonance>();
        assert_send_sync::<crate::IntrinsicData>();
        assert_send_sync::<crate::ResonantModel>();
        assert_send_sync::<crate::EpsilonJet>();
        assert_send_sync::<crate::LindstedtSolution>();
        assert_send_sync::<crate::auxiliary::PhaseSeries>();
        assert_send_sync::<crate::dynamics::LatticeMap>();
        assert_send_sync::<crate::dynamics::OrbitState>();
        assert_send_sync::<crate::dynamics::PhononSection>();
        assert_send_sync::<crate::verify::NewtonSolution>();
    }
}

/// Book chapters double as documentation tests: every fenced Rust block in
/// the guide compiles and runs under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/resonances.md")]
    mod resonances {}
    #[doc = include_str!("../../../book/src/fourier.md")]
    mod fourier {}
    #[doc = include_str!("../../../book/src/cohomology.md")]
    mod cohomology {}
    #[doc = include_str!("../../../book/src/lindstedt.md")]
    mod lindstedt {}
    #[doc = include_str!("../../../book/src/auxiliary.md")]
    mod auxiliary {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
