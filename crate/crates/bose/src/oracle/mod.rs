//! Exact diagonalization on small mode sets.
//!
//! Ground truth for the variational machinery: build Fock sectors over a
//! handful of momentum modes, assemble the second-quantized Hamiltonian
//! exactly, diagonalize, and check identities, sum rules, inequalities,
//! and transformation formulas against their definitions. Everything here
//! favors verifiable correctness over scale; dimensions beyond ~2×10⁴ are
//! out of scope by design.

pub mod sector;
pub mod spectral;

pub use sector::*;
pub use spectral::*;
