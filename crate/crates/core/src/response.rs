//! Weak-drive linear response and specular reflection.
//!
//! The steady-state coherences solve (Δ I + G) x = 𝓔 and the reflection
//! coefficient is r = −(3i/8π) 𝓔·x, an unconjugated contraction. In the
//! eigenbasis of G this becomes r(Δ) = −(3i/8π) Σ_ξ (𝓔·v_ξ)²/(Δ + λ_ξ),
//! which is what detuning scans use.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::greenfn::{collective_modes, CollectiveModes, InteractionMatrix, Polarization};
use crate::lattice::ArrayGeometry;
use crate::linalg::{self, I};
use crate::modes::{ModeField, ModeVector};
use crate::symmetry::{assemble, Assembled, Reduction};

/// Largest accepted normwise backward error of the direct solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// −3i/(8π).
pub fn reflection_prefactor() -> Complex64 {
    -3.0 * I / (8.0 * PI)
}

fn check_compatible(matrix: &InteractionMatrix, mode: &ModeVector) -> Result<()> {
    if matrix.basis() != mode.basis() {
        return Err(Error::BasisMismatch);
    }
    if matrix.dim() != mode.len() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: mode.len(),
        });
    }
    Ok(())
}

/// Solve (Δ I + G) x = 𝓔 by LU with partial pivoting.
pub fn steady_state(matrix: &InteractionMatrix, mode: &ModeVector, detuning: f64) -> Result<Vec<Complex64>> {
    check_compatible(matrix, mode)?;
    if !detuning.is_finite() {
        return Err(invalid("detuning", "detuning must be finite"));
    }
    let n = matrix.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = matrix.entries().clone();
    for i in 0..n {
        a[(i, i)] += detuning;
    }
    let e = mode.amplitudes();
    let b = Mat::from_fn(n, 1, |i, _| e[i]);
    let x = a.partial_piv_lu().solve(&b);
    let xs: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();

    let ax = linalg::matvec(&a, &xs);
    let residual: f64 = ax.iter().zip(e).map(|(l, r)| (l - r).norm_sqr()).sum::<f64>().sqrt();
    let scale = linalg::frobenius(&a) * linalg::norm(&xs) + linalg::norm(e);
    let backward = if scale == 0.0 { 0.0 } else { residual / scale };
    if !(backward < RESIDUAL_TOLERANCE) {
        return Err(Error::SingularSystem {
            detuning,
            residual: backward,
        });
    }
    Ok(xs)
}

/// r = −(3i/8π) 𝓔·x.
pub fn reflection_coefficient(mode: &ModeVector, excitation: &[Complex64]) -> Result<Complex64> {
    if mode.len() != excitation.len() {
        return Err(Error::DimensionMismatch {
            expected: mode.len(),
            actual: excitation.len(),
        });
    }
    Ok(reflection_prefactor() * linalg::dot(mode.amplitudes(), excitation))
}

/// Reflection in pole-residue form, cheap to evaluate at many detunings.
#[derive(Debug, Clone)]
pub struct SpectralResponse {
    poles: Vec<Complex64>,
    residues: Vec<Complex64>,
}

impl SpectralResponse {
    pub fn new(modes: &CollectiveModes, mode: &ModeVector) -> Result<Self> {
        if modes.basis() != mode.basis() {
            return Err(Error::BasisMismatch);
        }
        if modes.len() != mode.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                actual: mode.len(),
            });
        }
        let e = mode.amplitudes();
        let residues = (0..modes.len())
            .map(|xi| {
                let overlap = linalg::dot(e, &modes.vector(xi));
                overlap * overlap
            })
            .collect();
        Ok(Self {
            poles: modes.eigenvalues().to_vec(),
            residues,
        })
    }

    /// Diagonalize and build in one step.
    pub fn from_matrix(matrix: &InteractionMatrix, mode: &ModeVector) -> Result<Self> {
        check_compatible(matrix, mode)?;
        Self::new(&collective_modes(matrix)?, mode)
    }

    pub fn reflection(&self, detuning: f64) -> Complex64 {
        let sum: Complex64 = self
            .poles
            .iter()
            .zip(&self.residues)
            .map(|(l, c)| c / (detuning + l))
            .sum();
        reflection_prefactor() * sum
    }

    pub fn reflectance(&self, detuning: f64) -> f64 {
        self.reflection(detuning).norm_sqr()
    }

    /// (𝓔·v_ξ)² for every collective mode.
    pub fn residues(&self) -> &[Complex64] {
        &self.residues
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }
}

/// x = Σ_ξ v_ξ (v_ξ·𝓔)/(Δ + λ_ξ).
pub fn spectral_excitation(modes: &CollectiveModes, mode: &ModeVector, detuning: f64) -> Result<Vec<Complex64>> {
    if modes.len() != mode.len() {
        return Err(Error::DimensionMismatch {
            expected: modes.len(),
            actual: mode.len(),
        });
    }
    let n = modes.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for xi in 0..n {
        let v = modes.vector(xi);
        let weight = linalg::dot(&v, mode.amplitudes()) / (detuning + modes.eigenvalues()[xi]);
        for (xk, vk) in x.iter_mut().zip(&v) {
            *xk += weight * vk;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// One eigendecomposition, then the pole-residue sum at every detuning.
    #[default]
    Spectral,
    /// One LU solve per detuning.
    Direct,
}

/// Detuning scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    pub detuning_min: f64,
    pub detuning_max: f64,
    pub points: usize,
    /// Golden-section bracket width at which refinement stops.
    pub tolerance: f64,
    pub reduction: Reduction,
    pub solver: Solver,
    pub polarization: Polarization,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            detuning_min: -10.0,
            detuning_max: 10.0,
            points: 401,
            tolerance: 1e-6,
            reduction: Reduction::Auto,
            solver: Solver::Spectral,
            polarization: Polarization::default(),
        }
    }
}

impl ScanOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.detuning_min.is_finite() && self.detuning_max.is_finite() && self.detuning_min < self.detuning_max) {
            return Err(invalid("detuning", "scan window must be finite and increasing"));
        }
        if self.points < 3 {
            return Err(invalid("points", "a scan needs at least three points"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "refinement tolerance must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.detuning_max - self.detuning_min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.detuning_min + k as f64 * step).collect()
    }
}

/// Reflection sampled on a detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub detunings: Vec<f64>,
    pub r: Vec<Complex64>,
    pub reflectance: Vec<f64>,
}

impl Spectrum {
    /// Index and value of the largest sampled reflectance.
    pub fn peak(&self) -> Option<(usize, f64)> {
        self.reflectance
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Evaluator for an assembled problem with the chosen solver.
enum Evaluator<'a> {
    Spectral(SpectralResponse),
    Direct(&'a Assembled),
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a Assembled, solver: Solver) -> Result<Self> {
        Ok(match solver {
            Solver::Spectral => Evaluator::Spectral(SpectralResponse::from_matrix(&problem.matrix, &problem.mode)?),
            Solver::Direct => Evaluator::Direct(problem),
        })
    }

    fn reflection(&self, detuning: f64) -> Result<Complex64> {
        match self {
            Evaluator::Spectral(s) => Ok(s.reflection(detuning)),
            Evaluator::Direct(p) => {
                let x = steady_state(&p.matrix, &p.mode, detuning)?;
                reflection_coefficient(&p.mode, &x)
            }
        }
    }
}

/// Reflection of an assembled problem on `grid`.
pub fn spectrum_of(problem: &Assembled, grid: &[f64], solver: Solver) -> Result<Spectrum> {
    if grid.is_empty() {
        return Err(invalid("grid", "detuning grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid", "detuning grid must be strictly increasing"));
    }
    let eval = Evaluator::new(problem, solver)?;
    let r = grid.iter().map(|&d| eval.reflection(d)).collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        detunings: grid.to_vec(),
        reflectance: r.iter().map(|z| z.norm_sqr()).collect(),
        r,
    })
}

/// Reflection spectrum of `geometry` probed by `mode`.
pub fn reflectance_spectrum(
    geometry: &ArrayGeometry,
    mode: &ModeField,
    grid: &[f64],
    opts: &ScanOptions,
) -> Result<Spectrum> {
    let problem = assemble(geometry, &opts.polarization, mode, opts.reduction)?;
    spectrum_of(&problem, grid, opts.solver)
}

/// Geometry and mode parameters echoed with every result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub a: Option<f64>,
    pub d: Option<f64>,
    pub w: Option<f64>,
    pub phi: Option<f64>,
    /// Atoms per layer.
    pub n: usize,
    /// Number of layers.
    pub m: usize,
}

impl ParamsEcho {
    pub fn new(geometry: &ArrayGeometry, mode: &ModeField) -> Self {
        let d = (geometry.layer_shifts.len() > 1)
            .then(|| geometry.layer_shifts[1].z - geometry.layer_shifts[0].z);
        Self {
            a: geometry.lattice.map(|l| l.a),
            d,
            w: mode.waist(),
            phi: mode.phase(),
            n: geometry.atoms_per_layer(),
            m: geometry.layer_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceResult {
    pub r_max: f64,
    /// Detuning Δ* of the maximum, in units of Γ₀.
    pub detuning: f64,
    /// ε_R = 1 − R_max.
    pub epsilon: f64,
    /// The coarse maximum sat on the scan boundary; widen the window.
    pub at_window_edge: bool,
    pub params: ParamsEcho,
}

/// Maximize f on [a, b] by golden-section search; returns (x*, f(x*)).
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tolerance: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tolerance {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Coarse scan then golden-section refinement around the best grid point.
pub fn max_reflectance_of(problem: &Assembled, opts: &ScanOptions) -> Result<(f64, f64, bool)> {
    opts.validate()?;
    let grid = opts.grid();
    if problem.matrix.dim() == 0 {
        return Ok((0.0, 0.0, false));
    }
    let eval = Evaluator::new(problem, opts.solver)?;
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &d) in grid.iter().enumerate() {
        let r = eval.reflection(d)?.norm_sqr();
        if r > best.1 {
            best = (k, r);
        }
    }
    let last = grid.len() - 1;
    let at_edge = best.0 == 0 || best.0 == last;
    let lo = grid[best.0.saturating_sub(1)];
    let hi = grid[(best.0 + 1).min(last)];
    let mut failure = None;
    let (detuning, refined) = golden_section_max(
        |d| match eval.reflection(d) {
            Ok(r) => r.norm_sqr(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        opts.tolerance,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if refined >= best.1 {
        Ok((refined, detuning, at_edge))
    } else {
        Ok((best.1, grid[best.0], at_edge))
    }
}

/// Peak specular reflectance of `geometry` for the input `mode`.
pub fn max_reflectance(geometry: &ArrayGeometry, mode: &ModeField, opts: &ScanOptions) -> Result<ReflectanceResult> {
    let problem = assemble(geometry, &opts.polarization, mode, opts.reduction)?;
    let (r_max, detuning, at_window_edge) = max_reflectance_of(&problem, opts)?;
    Ok(ReflectanceResult {
        r_max,
        detuning,
        epsilon: 1.0 - r_max,
        at_window_edge,
        params: ParamsEcho::new(geometry, mode),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greenfn::build_interaction_matrix;
    use crate::lattice::{lattice_stack, LatticeKind};
    use crate::modes::Direction;
    use approx::assert_relative_eq;

    fn single_atom() -> (ArrayGeometry, ModeField) {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3]]).unwrap();
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        (g, m)
    }

    #[test]
    fn single_atom_solution() {
        let (g, m) = single_atom();
        let p = assemble(&g, &Polarization::default(), &m, Reduction::Full).unwrap();
        let x = steady_state(&p.matrix, &p.mode, 0.0).unwrap();
        let e = p.mode.amplitudes()[0];
        assert!((x[0] - (-2.0 * I * e)).norm() < 1e-15);
        let r = reflection_coefficient(&p.mode, &x).unwrap();
        assert!((r - Complex64::new(-3.0 / (2.0 * PI * PI), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn far_detuned_excitation_vanishes() {
        let (g, m) = single_atom();
        let p = assemble(&g, &Polarization::default(), &m, Reduction::Full).unwrap();
        let x = steady_state(&p.matrix, &p.mode, 1e6).unwrap();
        assert!(x[0].norm() * 1e6 < 1.0);
    }

    #[test]
    fn single_atom_maximum() {
        let (g, m) = single_atom();
        let res = max_reflectance(&g, &m, &ScanOptions::default()).unwrap();
        assert_relative_eq!(res.r_max, 9.0 / (4.0 * PI.powi(4)), epsilon = 1e-10);
        assert!(res.detuning.abs() < 1e-5);
        assert!(!res.at_window_edge);
    }

    #[test]
    fn empty_geometry_reflects_nothing() {
        let g = ArrayGeometry::from_positions(Vec::new()).unwrap();
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        let s = reflectance_spectrum(&g, &m, &[-1.0, 0.0, 1.0], &ScanOptions::default()).unwrap();
        assert!(s.reflectance.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn mismatched_dimensions() {
        let g = lattice_stack(LatticeKind::Triangular, 1.0, 1, 1, 0.0).unwrap();
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        let mode = m.sample(&g);
        assert!(reflection_coefficient(&mode, &[Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn reduced_and_full_agree() {
        let g = lattice_stack(LatticeKind::Triangular, 1.55, 3, 2, 1.5).unwrap();
        let m = ModeField::gaussian_centered(2.0, &g).unwrap();
        let pol = Polarization::default();
        let full = assemble(&g, &pol, &m, Reduction::Full).unwrap();
        let reduced = assemble(&g, &pol, &m, Reduction::Symmetric).unwrap();
        assert!(reduced.is_reduced());
        assert!(reduced.matrix.dim() < full.matrix.dim());
        for d in [-1.0, 0.0, 0.7] {
            let a = spectrum_of(&full, &[d], Solver::Direct).unwrap().r[0];
            let b = spectrum_of(&reduced, &[d], Solver::Direct).unwrap().r[0];
            assert!((a - b).norm() < 1e-11 * a.norm().max(1e-3));
        }
    }

    #[test]
    fn spectral_excitation_matches_solve() {
        let g = lattice_stack(LatticeKind::Square, 0.7, 3, 1, 0.0).unwrap();
        let m = ModeField::gaussian_centered(1.0, &g).unwrap();
        let matrix = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        let mode = m.sample(&g);
        let modes = collective_modes(&matrix).unwrap();
        let a = steady_state(&matrix, &mode, 0.3).unwrap();
        let b = spectral_excitation(&modes, &mode, 0.3).unwrap();
        let scale = linalg::norm(&a);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, f) = golden_section_max(|x| -(x - 0.123).powi(2), -1.0, 1.0, 1e-9);
        assert!((x - 0.123).abs() < 1e-8);
        assert!(f.abs() < 1e-15);
    }
}
