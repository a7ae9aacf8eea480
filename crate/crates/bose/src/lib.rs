//! Rigorous variational bounds and quasiparticle spectra for the homogeneous
//! Bose gas.
//!
//! The crate computes, in one consistent framework:
//!
//! * the Bogoliubov spectrum `ω(k) = √(k²/2 · (k²/2 + 2 v̂(k) ρ))` and the
//!   coherent-plus-squeezed trial states behind it ([`bogoliubov`]),
//! * improved variational upper bounds from general squeezed states: the
//!   energy `B`, quasiparticle energies `D(k)`, residuals `C` and `O(k)`,
//!   and the self-consistent solutions in a finite box and in the
//!   thermodynamic limit ([`hfb`]),
//! * subadditive hulls of candidate excitation curves, the tightest
//!   decompositions `ε(k) ≤ Σ ε(k_i)` on a momentum grid ([`subadditive`]),
//! * a small exact-diagonalization oracle that verifies every identity and
//!   inequality the bounds rest on: sum rules, uncertainty-type resolvent
//!   inequalities, Green-matrix symmetries, boost covariance, and the
//!   unitary squeeze transformation itself ([`oracle`]).
//!
//! Shared plumbing lives in [`model`] (potentials, boxes, momentum grids)
//! and [`numerics`] (graded radial quadrature, lattice sums, damped
//! fixed-point iteration). The `bose` binary is a thin front end; the
//! `examples/` directory demonstrates each capability as a runnable program.

pub mod bogoliubov;
pub mod error;
pub mod hfb;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod subadditive;

pub use error::{Error, Result};
