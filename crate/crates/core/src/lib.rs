//! Coupled-dipole simulation of multilayer atomic-array mirrors and
//! quantum memories.
//!
//! Lengths are in units of the resonant wavelength λ₀ (so k₀ = 2π), rates and
//! detunings in units of the single-atom decay rate Γ₀.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod greenfn;
pub mod idealized;
pub mod lattice;
pub mod linalg;
pub mod memory;
pub mod modes;
pub mod optimize;
pub mod response;
pub mod symmetry;

pub use error::{Error, Result};
pub use greenfn::{build_interaction_matrix, collective_modes, CollectiveModes, InteractionMatrix, Polarization};
pub use lattice::{lattice_stack, ArrayGeometry, LatticeKind, LatticeSpec, K0};
pub use memory::{k_matrix, max_retrieval, optimal_retrieval, retrieval_for_spinwave, KMatrix, RetrievalResult};
pub use modes::{Direction, ModeField, ModeVector};
pub use optimize::{fit_power_law, optimize, optimize_memory, optimize_reflectance, scaling_study, OptimizationProblem, OptimizeOptions, Params, PowerLawFit};
pub use response::{max_reflectance, reflectance_spectrum, ReflectanceResult, ScanOptions, Spectrum};
pub use symmetry::Reduction;
