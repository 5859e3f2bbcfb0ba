//! Retrieval efficiency of a stored spin wave into a detection mode.
//!
//! With a uniform control field the retrieved amplitude follows the free
//! collective decay, so the efficiency of a spin wave s is the quadratic form
//! η = (3/8π) s·K·s* with
//!
//! ```text
//! K = i Σ_ξξ' (𝓔·v_ξ)(𝓔*·v*_ξ') / (λ_ξ − λ*_ξ') v_ξ ⊗ v*_ξ'
//! ```
//!
//! equivalently K = ∫₀^∞ w(t) w(t)† dt with w(t) = e^{iGt}𝓔.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greenfn::{collective_modes, Basis, CollectiveModes, InteractionMatrix, Polarization};
use crate::lattice::ArrayGeometry;
use crate::linalg::{self, CMat, I};
use crate::modes::{ModeField, ModeVector};
use crate::response::ParamsEcho;
use crate::symmetry::{assemble, Reduction};

/// Largest accepted |Σ v v^T − I| when building K.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-6;

/// Tolerance on ‖s‖ = 1 for user-supplied spin waves.
pub const SPINWAVE_NORM_TOLERANCE: f64 = 1e-9;

/// 3/(8π).
pub const EFFICIENCY_SCALE: f64 = 3.0 / (8.0 * PI);

/// Hermitian retrieval operator.
#[derive(Debug, Clone)]
pub struct KMatrix {
    entries: CMat,
    basis: Basis,
    geometry_hash: u64,
    largest_term: f64,
}

impl KMatrix {
    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn geometry_hash(&self) -> u64 {
        self.geometry_hash
    }

    /// Largest |C_ξξ'| in the eigenbasis; compare with ‖K‖ to spot cancellation.
    pub fn largest_term(&self) -> f64 {
        self.largest_term
    }

    /// ‖K − K†‖_F/‖K‖_F.
    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.entries)
    }

    /// K scaled by a positive constant.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let n = self.dim();
        out.entries = Mat::from_fn(n, n, |i, j| self.entries[(i, j)] * c);
        out.largest_term *= c;
        out
    }

    fn hermitian_part(&self) -> CMat {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| 0.5 * (self.entries[(i, j)] + self.entries[(j, i)].conj()))
    }

    /// (3/8π)·eigenvalues of K, ascending: the efficiencies of its eigenvectors.
    pub fn efficiency_spectrum(&self) -> Result<Vec<f64>> {
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        let values = self
            .hermitian_part()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
        Ok(values.into_iter().map(|v| EFFICIENCY_SCALE * v).collect())
    }
}

/// Assemble K from the collective modes.
pub fn k_matrix(modes: &CollectiveModes, mode: &ModeVector) -> Result<KMatrix> {
    if modes.basis() != mode.basis() {
        return Err(Error::BasisMismatch);
    }
    let n = modes.len();
    if n != mode.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: mode.len(),
        });
    }
    let completeness = modes.completeness_error();
    if !(completeness <= COMPLETENESS_TOLERANCE) {
        return Err(Error::IncompleteModes { error: completeness });
    }
    let lambda = modes.eigenvalues();
    if let Some((index, l)) = lambda.iter().enumerate().find(|(_, l)| !(l.im > 0.0)) {
        return Err(Error::NonDecayingMode { index, imag: l.im });
    }

    let v = modes.vectors();
    let overlaps: Vec<Complex64> = (0..n).map(|xi| linalg::dot(mode.amplitudes(), &modes.vector(xi))).collect();
    let mut largest_term = 0.0f64;
    let coupling = Mat::from_fn(n, n, |a, b| {
        let c = I * overlaps[a] * overlaps[b].conj() / (lambda[a] - lambda[b].conj());
        largest_term = largest_term.max(c.norm());
        c
    });
    let entries = v * &coupling * v.adjoint();
    Ok(KMatrix {
        entries,
        basis: modes.basis().clone(),
        geometry_hash: mode.geometry_hash(),
        largest_term,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub eta_max: f64,
    /// ε_m = 1 − η_max.
    pub epsilon: f64,
    /// Optimal spin wave s, one amplitude per atom, Σ|s|² = 1, with its
    /// largest entry real and positive.
    pub spinwave: Vec<Complex64>,
    pub params: Option<ParamsEcho>,
}

/// Best efficiency and the spin wave attaining it.
pub fn max_retrieval(k: &KMatrix) -> Result<RetrievalResult> {
    let n = k.dim();
    if n == 0 {
        return Ok(RetrievalResult {
            eta_max: 0.0,
            epsilon: 1.0,
            spinwave: Vec::new(),
            params: None,
        });
    }
    let evd = k
        .hermitian_part()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
    let top = n - 1;
    let lambda = evd.S().column_vector()[top].re;
    // η = (3/8π) sᵀ K s*, maximized by s = conj(top eigenvector)
    let reduced: Vec<Complex64> = (0..n).map(|i| evd.U()[(i, top)].conj()).collect();
    let mut spinwave = match k.basis() {
        Basis::Atoms => reduced,
        Basis::Symmetric(orbits) => orbits.expand(&reduced),
    };
    fix_phase(&mut spinwave);
    let eta_max = EFFICIENCY_SCALE * lambda;
    Ok(RetrievalResult {
        eta_max,
        epsilon: 1.0 - eta_max,
        spinwave,
        params: None,
    })
}

fn fix_phase(s: &mut [Complex64]) {
    let Some(big) = s.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) else {
        return;
    };
    if big.norm() == 0.0 {
        return;
    }
    let rot = big.conj() / big.norm();
    s.iter_mut().for_each(|z| *z *= rot);
}

/// η = (3/8π) s·K·s* for a unit-norm atom-basis spin wave.
pub fn retrieval_for_spinwave(k: &KMatrix, s: &[Complex64]) -> Result<f64> {
    let norm = linalg::norm(s);
    if (norm - 1.0).abs() > SPINWAVE_NORM_TOLERANCE {
        return Err(Error::UnnormalizedSpinWave { norm });
    }
    let coords = match k.basis() {
        Basis::Atoms => s.to_vec(),
        Basis::Symmetric(orbits) => {
            if s.len() != orbits.atoms() {
                return Err(Error::DimensionMismatch {
                    expected: orbits.atoms(),
                    actual: s.len(),
                });
            }
            orbits.project(s)
        }
    };
    if coords.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            actual: coords.len(),
        });
    }
    let conj: Vec<Complex64> = coords.iter().map(|z| z.conj()).collect();
    let ks = linalg::matvec(&k.entries, &conj);
    Ok(EFFICIENCY_SCALE * linalg::dot(&coords, &ks).re)
}

/// K for `geometry` and detection `mode`, posed in the symmetric sector
/// when possible.
pub fn k_matrix_for(
    geometry: &ArrayGeometry,
    mode: &ModeField,
    pol: &Polarization,
    reduction: Reduction,
) -> Result<KMatrix> {
    let problem = assemble(geometry, pol, mode, reduction)?;
    k_matrix_from(&problem.matrix, &problem.mode)
}

/// K from an interaction matrix and a mode vector in the same basis.
pub fn k_matrix_from(matrix: &InteractionMatrix, mode: &ModeVector) -> Result<KMatrix> {
    if matrix.basis() != mode.basis() {
        return Err(Error::BasisMismatch);
    }
    k_matrix(&collective_modes(matrix)?, mode)
}

/// Best retrieval efficiency of `geometry` into `mode`.
pub fn optimal_retrieval(
    geometry: &ArrayGeometry,
    mode: &ModeField,
    pol: &Polarization,
    reduction: Reduction,
) -> Result<RetrievalResult> {
    let k = k_matrix_for(geometry, mode, pol, reduction)?;
    let mut result = max_retrieval(&k)?;
    result.params = Some(ParamsEcho::new(geometry, mode));
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{lattice_stack, LatticeKind};
    use crate::modes::Direction;
    use approx::assert_relative_eq;

    #[test]
    fn single_atom_gaussian() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3]]).unwrap();
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        let k = k_matrix_for(&g, &m, &Polarization::default(), Reduction::Full).unwrap();
        let e2 = m.evaluate([0.0; 3]).norm_sqr();
        assert_relative_eq!(k.entries()[(0, 0)].re, e2, epsilon = 1e-14);
        let r = max_retrieval(&k).unwrap();
        assert_relative_eq!(r.eta_max, EFFICIENCY_SCALE * e2, epsilon = 1e-14);
    }

    #[test]
    fn single_atom_two_way() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3]]).unwrap();
        let m = ModeField::two_way(1.0, [0.0; 3], 0.0).unwrap();
        let r = optimal_retrieval(&g, &m, &Polarization::default(), Reduction::Auto).unwrap();
        assert_relative_eq!(r.eta_max, 3.0 / (2.0 * PI * PI), epsilon = 1e-13);
    }

    #[test]
    fn reduced_matches_full() {
        let g = lattice_stack(LatticeKind::Triangular, 1.8, 2, 2, 1.4).unwrap();
        let m = ModeField::two_way_centered(2.0, 0.3, &g).unwrap();
        let pol = Polarization::default();
        let full = optimal_retrieval(&g, &m, &pol, Reduction::Full).unwrap();
        let reduced = optimal_retrieval(&g, &m, &pol, Reduction::Symmetric).unwrap();
        assert_relative_eq!(full.eta_max, reduced.eta_max, epsilon = 1e-10);
        let overlap = linalg::cdot(&full.spinwave, &reduced.spinwave).norm();
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-8);
        let k_full = k_matrix_for(&g, &m, &pol, Reduction::Full).unwrap();
        let k_red = k_matrix_for(&g, &m, &pol, Reduction::Symmetric).unwrap();
        let a = retrieval_for_spinwave(&k_full, &reduced.spinwave).unwrap();
        let b = retrieval_for_spinwave(&k_red, &full.spinwave).unwrap();
        assert_relative_eq!(a, full.eta_max, epsilon = 1e-10);
        assert_relative_eq!(b, full.eta_max, epsilon = 1e-10);
    }

    #[test]
    fn unnormalized_spinwave_rejected() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3], [0.7, 0.0, 0.0]]).unwrap();
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        let k = k_matrix_for(&g, &m, &Polarization::default(), Reduction::Full).unwrap();
        let s = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(matches!(retrieval_for_spinwave(&k, &s), Err(Error::UnnormalizedSpinWave { .. })));
    }

    #[test]
    fn scaling_k_scales_eta() {
        let g = lattice_stack(LatticeKind::Triangular, 0.9, 1, 1, 0.0).unwrap();
        let m = ModeField::gaussian_centered(1.0, &g).unwrap();
        let k = k_matrix_for(&g, &m, &Polarization::default(), Reduction::Full).unwrap();
        let a = max_retrieval(&k).unwrap();
        let b = max_retrieval(&k.scaled(0.37)).unwrap();
        assert_relative_eq!(b.eta_max, 0.37 * a.eta_max, epsilon = 1e-12);
        let overlap = linalg::cdot(&a.spinwave, &b.spinwave).norm();
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-10);
    }
}
