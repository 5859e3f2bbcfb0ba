//! Free-space dyadic Green function and the collective interaction matrix.
//!
//! For atoms at r_i, r_j the projected coupling is
//! G_ij = e*·G(r_i − r_j)·e with
//!
//! ```text
//! G(r) = 3 e^{ik₀r} / (4 (k₀r)³) [ ((k₀r)² + ik₀r − 1) I − ((k₀r)² + 3ik₀r − 3) r̂⊗r̂ ]
//! ```
//!
//! and the self term G_ii = i/2 (the Lamb shift is absorbed into the
//! transition frequency). Rates are in units of Γ₀.

use std::io::{Read, Write};
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{ArrayGeometry, K0};
use crate::linalg::{self, CMat};
use crate::symmetry::OrbitBasis;

/// Pairs closer than this (in λ₀) are rejected; Eq.-style 1/r³ near fields
/// dominate there and the point-dipole model is outside its regime.
pub const NEAR_FIELD_GUARD: f64 = 1e-3;

/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

/// Smallest acceptable |v·v| for a Hermitian-normalized eigenvector.
pub const MIN_BILINEAR_NORM: f64 = 1e-6;

pub type Tensor3 = [[Complex64; 3]; 3];

/// Unit polarization vector of the atomic dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polarization([Complex64; 3]);

impl Default for Polarization {
    fn default() -> Self {
        Self::circular_plus()
    }
}

impl Polarization {
    /// (x̂ + iŷ)/√2.
    pub fn circular_plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self([Complex64::new(s, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, 0.0)])
    }

    /// (x̂ − iŷ)/√2.
    pub fn circular_minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self([Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)])
    }

    pub fn linear_x() -> Self {
        Self([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)])
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn new(v: [Complex64; 3]) -> Result<Self> {
        let norm = linalg::norm(&v);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(invalid("polarization", "polarization vector must be non-zero"));
        }
        Ok(Self(v.map(|c| c / norm)))
    }

    pub fn vector(&self) -> [Complex64; 3] {
        self.0
    }

    /// True for in-plane circular polarization (either handedness, any phase).
    ///
    /// The projected coupling is then invariant under rotations about z and
    /// under mirror planes containing z.
    pub fn is_circular(&self) -> bool {
        let [x, y, z] = self.0;
        z.norm() < 1e-12
            && (x.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12
            && ((y - x * linalg::I).norm() < 1e-12 || (y + x * linalg::I).norm() < 1e-12)
    }
}

fn radial_coefficients(r: f64) -> (Complex64, Complex64, Complex64) {
    let kr = K0 * r;
    let ikr = Complex64::new(0.0, kr);
    let prefactor = 3.0 * ikr.exp() / (4.0 * kr * kr * kr);
    let iso = Complex64::new(kr * kr - 1.0, kr);
    let dyad = Complex64::new(kr * kr - 3.0, 3.0 * kr);
    (prefactor, iso, dyad)
}

/// Dimensionless dyadic Green function at displacement `r` (λ₀ units).
pub fn dyadic_green(r: [f64; 3]) -> Result<Tensor3> {
    let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if len == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let (pre, iso, dyad) = radial_coefficients(len);
    let rhat = r.map(|x| x / len);
    let mut g = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (a, row) in g.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            let delta = if a == b { 1.0 } else { 0.0 };
            *entry = pre * (iso * delta - dyad * (rhat[a] * rhat[b]));
        }
    }
    Ok(g)
}

/// e*·G(r)·e without forming the tensor.
pub fn projected_green(r: [f64; 3], pol: &Polarization) -> Result<Complex64> {
    let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if len == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let (pre, iso, dyad) = radial_coefficients(len);
    let e = pol.vector();
    let along: Complex64 = (0..3).map(|a| e[a] * (r[a] / len)).sum();
    Ok(pre * (iso - dyad * along.norm_sqr()))
}

/// Contract a tensor with the polarization: e*·T·e.
pub fn project(tensor: &Tensor3, pol: &Polarization) -> Complex64 {
    let e = pol.vector();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            acc += e[a].conj() * tensor[a][b] * e[b];
        }
    }
    acc
}

/// Coordinates in which an interaction matrix or mode vector is expressed.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// One entry per atom.
    Atoms,
    /// One entry per symmetry orbit; exact for observables of symmetric modes.
    Symmetric(Arc<OrbitBasis>),
}

impl Basis {
    pub fn is_atoms(&self) -> bool {
        matches!(self, Basis::Atoms)
    }
}

/// Complex symmetric coupling matrix G_{iα,jβ}.
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    entries: CMat,
    basis: Basis,
    geometry_hash: u64,
}

impl InteractionMatrix {
    pub(crate) fn from_parts(entries: CMat, basis: Basis, geometry_hash: u64) -> Self {
        Self {
            entries,
            basis,
            geometry_hash,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn geometry_hash(&self) -> u64 {
        self.geometry_hash
    }

    /// Largest |G_ij − G_ji| relative to the largest entry.
    pub fn symmetry_error(&self) -> f64 {
        linalg::symmetry_error(&self.entries)
    }

    /// Smallest eigenvalue of the symmetric part of Im G. Radiative passivity
    /// requires it to be non-negative.
    pub fn passivity_margin(&self) -> Result<f64> {
        let n = self.dim();
        let im = Mat::from_fn(n, n, |i, j| 0.5 * (self.entries[(i, j)].im + self.entries[(j, i)].im));
        Ok(linalg::symmetric_eigenvalues(&im)?.first().copied().unwrap_or(0.0))
    }

    /// Dump as JSON: `{"geometry_hash", "rows", "cols", "data": [[re, im], ...]}` row-major.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.dim();
        let data: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| [self.entries[(i, j)].re, self.entries[(i, j)].im])
            .collect();
        let dump = MatrixDump {
            geometry_hash: format!("{:016x}", self.geometry_hash),
            rows: n,
            cols: n,
            data,
        };
        serde_json::to_writer(writer, &dump)?;
        Ok(())
    }

    /// Binary dump: magic, format version, geometry hash, dimensions, then
    /// row-major little-endian (re, im) pairs.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        let n = self.dim() as u64;
        writer.write_all(BINARY_MAGIC)?;
        writer.write_all(&BINARY_VERSION.to_le_bytes())?;
        writer.write_all(&self.geometry_hash.to_le_bytes())?;
        writer.write_all(&n.to_le_bytes())?;
        writer.write_all(&n.to_le_bytes())?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.entries[(i, j)];
                writer.write_all(&z.re.to_le_bytes())?;
                writer.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a binary dump. With `expected_hash`, a dump written for a
    /// different geometry is rejected.
    pub fn read_binary<R: Read>(mut reader: R, expected_hash: Option<u64>) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("not an interaction matrix dump".into()));
        }
        let version = read_u32(&mut reader)?;
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        let hash = read_u64(&mut reader)?;
        if let Some(expected) = expected_hash {
            if expected != hash {
                return Err(Error::Format(format!(
                    "geometry hash {hash:016x} does not match expected {expected:016x}"
                )));
            }
        }
        let rows = read_u64(&mut reader)? as usize;
        let cols = read_u64(&mut reader)? as usize;
        if rows != cols {
            return Err(Error::Format(format!("dump is not square: {rows}x{cols}")));
        }
        let mut entries = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let re = read_f64(&mut reader)?;
                let im = read_f64(&mut reader)?;
                entries[(i, j)] = Complex64::new(re, im);
            }
        }
        Ok(Self::from_parts(entries, Basis::Atoms, hash))
    }
}

const BINARY_MAGIC: &[u8; 4] = b"DMIM";
const BINARY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixDump {
    geometry_hash: String,
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn check_near_field(geometry: &ArrayGeometry) -> Result<()> {
    match geometry.min_separation() {
        Some((i, j, d)) if d < NEAR_FIELD_GUARD => Err(Error::CoincidentAtoms {
            i,
            j,
            distance: d,
            min_distance: NEAR_FIELD_GUARD,
        }),
        _ => Ok(()),
    }
}

/// Assemble the full atom-basis interaction matrix.
pub fn build_interaction_matrix(
    geometry: &ArrayGeometry,
    pol: &Polarization,
) -> Result<InteractionMatrix> {
    check_near_field(geometry)?;
    let n = geometry.len();
    let mut entries = CMat::zeros(n, n);
    let p = &geometry.positions;
    for i in 0..n {
        entries[(i, i)] = Complex64::new(0.0, 0.5);
        for j in (i + 1)..n {
            let r = [p[i][0] - p[j][0], p[i][1] - p[j][1], p[i][2] - p[j][2]];
            let g = projected_green(r, pol)?;
            entries[(i, j)] = g;
            entries[(j, i)] = g;
        }
    }
    Ok(InteractionMatrix::from_parts(entries, Basis::Atoms, geometry.hash()))
}

/// Eigenpairs of an interaction matrix with unconjugated-orthonormal vectors.
#[derive(Debug, Clone)]
pub struct CollectiveModes {
    eigenvalues: Vec<Complex64>,
    vectors: CMat,
    basis: Basis,
}

impl CollectiveModes {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns.
    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn vector(&self, xi: usize) -> Vec<Complex64> {
        linalg::column(&self.vectors, xi)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Collective decay rates 2 Im λ_ξ in units of Γ₀.
    pub fn decay_rates(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| 2.0 * l.im).collect()
    }

    /// max |v_ξ·v_ξ' − δ_ξξ'|.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors;
        max_identity_deviation(&gram)
    }

    /// max |Σ_ξ v_ξ ⊗ v_ξ − I|.
    pub fn completeness_error(&self) -> f64 {
        let outer = &self.vectors * self.vectors.transpose();
        max_identity_deviation(&outer)
    }

    /// Σ_ξ λ_ξ v_ξ ⊗ v_ξ.
    pub fn reconstruct(&self) -> CMat {
        let n = self.len();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.eigenvalues[j]);
        &scaled * self.vectors.transpose()
    }
}

fn max_identity_deviation(m: &CMat) -> f64 {
    let mut err = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((m[(i, j)] - target).norm());
        }
    }
    err
}

fn normalize_bilinear(v: &mut [Complex64], index: usize) -> Result<()> {
    let h = linalg::norm(v);
    if h == 0.0 {
        return Err(Error::IllConditionedMode { index, norm: 0.0 });
    }
    v.iter_mut().for_each(|x| *x /= h);
    let vv = linalg::dot(v, v);
    if vv.norm() < MIN_BILINEAR_NORM {
        return Err(Error::IllConditionedMode { index, norm: vv.norm() });
    }
    let s = vv.sqrt();
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

/// Diagonalize `matrix`, normalize eigenvectors so v·v = 1 and
/// re-orthogonalize within degenerate clusters using the bilinear product.
///
/// Eigenvalues are sorted by Im λ descending, then Re λ ascending.
pub fn collective_modes(matrix: &InteractionMatrix) -> Result<CollectiveModes> {
    let n = matrix.dim();
    if n == 0 {
        return Ok(CollectiveModes {
            eigenvalues: Vec::new(),
            vectors: CMat::zeros(0, 0),
            basis: matrix.basis.clone(),
        });
    }
    let evd = matrix
        .entries
        .eigen()
        .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
    let values: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .im
            .partial_cmp(&values[a].im)
            .unwrap()
            .then(values[a].re.partial_cmp(&values[b].re).unwrap())
    });
    let eigenvalues: Vec<Complex64> = order.iter().map(|&k| values[k]).collect();
    let mut vecs: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&k| (0..n).map(|i| u[(i, k)]).collect())
        .collect();

    for cluster in degenerate_clusters(&eigenvalues) {
        if cluster.len() == 1 {
            normalize_bilinear(&mut vecs[cluster[0]], cluster[0])?;
        } else {
            orthonormalize_cluster(&mut vecs, &cluster)?;
        }
    }

    let vectors = Mat::from_fn(n, n, |i, j| vecs[j][i]);
    Ok(CollectiveModes {
        eigenvalues,
        vectors,
        basis: matrix.basis.clone(),
    })
}

fn degenerate_clusters(values: &[Complex64]) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() < DEGENERACY_TOLERANCE {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[root_slot[r]].push(i);
    }
    clusters
}

/// Rotate a degenerate eigenvector set into a bilinear-orthonormal one.
fn orthonormalize_cluster(vecs: &mut [Vec<Complex64>], cluster: &[usize]) -> Result<()> {
    let k = cluster.len();
    for &c in cluster {
        let h = linalg::norm(&vecs[c]);
        vecs[c].iter_mut().for_each(|x| *x /= h);
    }
    // the bilinear Gram matrix is complex symmetric; its eigenvectors for
    // distinct eigenvalues are bilinear-orthogonal
    let gram = Mat::from_fn(k, k, |a, b| linalg::dot(&vecs[cluster[a]], &vecs[cluster[b]]));
    let rotation = gram
        .eigen()
        .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
    let w = rotation.U();
    let dim = vecs[cluster[0]].len();
    let rotated: Vec<Vec<Complex64>> = (0..k)
        .map(|b| {
            (0..dim)
                .map(|i| (0..k).map(|a| vecs[cluster[a]][i] * w[(a, b)]).sum())
                .collect()
        })
        .collect();
    for (slot, mut v) in rotated.into_iter().enumerate() {
        // Gram-Schmidt clean-up against the vectors already fixed
        for &prev in &cluster[..slot] {
            let overlap = linalg::dot(&vecs[prev], &v);
            for (x, p) in v.iter_mut().zip(&vecs[prev]) {
                *x -= overlap * p;
            }
        }
        normalize_bilinear(&mut v, cluster[slot])?;
        vecs[cluster[slot]] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{lattice_stack, LatticeKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn random_geometry(rng: &mut ChaCha8Rng, n: usize) -> ArrayGeometry {
        loop {
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0)])
                .collect();
            if let Ok(g) = ArrayGeometry::from_positions(pts) {
                if g.min_separation().unwrap().2 > 0.2 {
                    return g;
                }
            }
        }
    }

    #[test]
    fn axial_unit_separation() {
        let g = projected_green([0.0, 0.0, 1.0], &Polarization::default()).unwrap();
        let expected = Complex64::new(TAU * TAU - 1.0, TAU) * 3.0 / (4.0 * TAU.powi(3));
        assert_relative_eq!(g.re, expected.re, epsilon = 1e-14);
        assert_relative_eq!(g.im, expected.im, epsilon = 1e-14);
    }

    #[test]
    fn projection_matches_full_tensor() {
        let pol = Polarization::default();
        for r in [[0.3, -0.2, 0.7], [1.1, 0.0, 0.0], [0.0, 0.4, -2.0]] {
            let full = project(&dyadic_green(r).unwrap(), &pol);
            let fast = projected_green(r, &pol).unwrap();
            assert!((full - fast).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_displacement_rejected() {
        assert!(matches!(dyadic_green([0.0; 3]), Err(Error::ZeroDisplacement)));
    }

    #[test]
    fn far_field_decay() {
        for r in [10.0, 100.0, 1000.0] {
            let t = dyadic_green([r * 0.6, r * 0.8, 0.0]).unwrap();
            let max = t.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(K0 * r * max < 1.0);
            assert!(K0 * r * max > 0.3);
        }
    }

    #[test]
    fn single_atom_matrix() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3]]).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.entries()[(0, 0)], Complex64::new(0.0, 0.5));
    }

    #[test]
    fn in_plane_pair_uses_half_projection() {
        let a = 1.3;
        let g = ArrayGeometry::from_positions(vec![[0.0; 3], [a, 0.0, 0.0]]).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        let t = dyadic_green([a, 0.0, 0.0]).unwrap();
        // e*·(iso I − dyad x̂x̂)·e with |x̂·e|² = 1/2
        let expected = t[1][1] * 0.5 + t[0][0] * 0.5;
        assert!((m.entries()[(0, 1)] - expected).norm() < 1e-14);
    }

    #[test]
    fn near_field_guard() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3], [5e-4, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            build_interaction_matrix(&g, &Polarization::default()),
            Err(Error::CoincidentAtoms { .. })
        ));
    }

    #[test]
    fn matrix_invariants_on_stack() {
        let g = lattice_stack(LatticeKind::Triangular, 1.55, 3, 2, 1.5).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        assert!(m.symmetry_error() < 1e-12);
        for i in 0..m.dim() {
            assert_eq!(m.entries()[(i, i)], Complex64::new(0.0, 0.5));
        }
        assert!(m.passivity_margin().unwrap() > -1e-9);
    }

    #[test]
    fn single_atom_modes() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3]]).unwrap();
        let modes = collective_modes(&build_interaction_matrix(&g, &Polarization::default()).unwrap()).unwrap();
        assert_eq!(modes.eigenvalues(), &[Complex64::new(0.0, 0.5)]);
        assert!((modes.vector(0)[0] - 1.0).norm() < 1e-15 || (modes.vector(0)[0] + 1.0).norm() < 1e-15);
    }

    #[test]
    fn distant_pair_decouples() {
        let g = ArrayGeometry::from_positions(vec![[0.0; 3], [50.0, 0.0, 0.0]]).unwrap();
        let modes = collective_modes(&build_interaction_matrix(&g, &Polarization::default()).unwrap()).unwrap();
        for l in modes.eigenvalues() {
            assert!((l - Complex64::new(0.0, 0.5)).norm() < 1e-2);
        }
    }

    #[test]
    fn degenerate_hexagon_modes_are_orthonormal() {
        // a C6-symmetric patch has exactly degenerate doublets
        let g = lattice_stack(LatticeKind::Triangular, 0.7, 2, 1, 0.0).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        let modes = collective_modes(&m).unwrap();
        assert!(modes.orthonormality_error() < 1e-8);
        assert!(modes.completeness_error() < 1e-7);
        let recon = modes.reconstruct();
        let diff = Mat::from_fn(m.dim(), m.dim(), |i, j| recon[(i, j)] - m.entries()[(i, j)]);
        assert!(linalg::frobenius(&diff) / linalg::frobenius(m.entries()) < 1e-7);
        assert!(modes.eigenvalues().iter().all(|l| l.im > 0.0));
        let v = modes.eigenvalues();
        assert!(v.windows(2).all(|w| w[0].im >= w[1].im));
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 6, 12] {
            let g = random_geometry(&mut rng, n);
            let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
            let modes = collective_modes(&m).unwrap();
            let recon = modes.reconstruct();
            let diff = Mat::from_fn(n, n, |i, j| recon[(i, j)] - m.entries()[(i, j)]);
            assert!(linalg::frobenius(&diff) / linalg::frobenius(m.entries()) < 1e-7);
            assert!(modes.orthonormality_error() < 1e-8);
        }
    }

    #[test]
    fn binary_dump_round_trip_and_hash_check() {
        let g = lattice_stack(LatticeKind::Square, 1.1, 2, 2, 0.5).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        let back = InteractionMatrix::read_binary(buf.as_slice(), Some(g.hash())).unwrap();
        assert_eq!(back.entries(), m.entries());
        assert!(InteractionMatrix::read_binary(buf.as_slice(), Some(g.hash() ^ 1)).is_err());

        let mut json = Vec::new();
        m.write_json(&mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["rows"], 8);
        assert_eq!(v["data"].as_array().unwrap().len(), 64);
        assert_eq!(v["data"][0][1], 0.5);
    }

    #[test]
    fn circular_detection() {
        assert!(Polarization::circular_plus().is_circular());
        assert!(Polarization::circular_minus().is_circular());
        assert!(!Polarization::linear_x().is_circular());
    }

    proptest! {
        #[test]
        fn green_is_even_and_symmetric(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            prop_assume!(x * x + y * y + z * z > 1e-4);
            let g = dyadic_green([x, y, z]).unwrap();
            let h = dyadic_green([-x, -y, -z]).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert!((g[a][b] - h[a][b]).norm() < 1e-12 * (1.0 + g[a][b].norm()));
                    prop_assert!((g[a][b] - g[b][a]).norm() < 1e-12 * (1.0 + g[a][b].norm()));
                }
            }
        }

        #[test]
        fn in_plane_rotation_invariance(r in 0.05f64..4.0, theta in 0.0f64..TAU) {
            let pol = Polarization::default();
            let g0 = projected_green([r, 0.0, 0.0], &pol).unwrap();
            let g1 = projected_green([r * theta.cos(), r * theta.sin(), 0.0], &pol).unwrap();
            prop_assert!((g0 - g1).norm() < 1e-12 * g0.norm().max(1.0));
        }

        #[test]
        fn random_geometry_passivity(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_geometry(&mut rng, 8);
            let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
            prop_assert!(m.symmetry_error() < 1e-12);
            prop_assert!(m.passivity_margin().unwrap() > -1e-9);
        }
    }

    #[test]
    fn polarization_normalizes() {
        let p = Polarization::new([Complex64::new(2.0, 0.0), Complex64::new(0.0, 2.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert!(p.is_circular());
        assert!(Polarization::new([Complex64::new(0.0, 0.0); 3]).is_err());
        let _ = PI;
    }
}
