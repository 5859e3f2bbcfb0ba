//! Two-dimensional Bravais lattices, diffraction orders, finite patches and
//! multilayer stacks.
//!
//! All lengths are in units of the resonant wavelength, so the free-space
//! wavenumber is [`K0`] = 2π.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// Free-space wavenumber in units of 1/λ₀.
pub const K0: f64 = TAU;

/// Smallest allowed distance between two atoms when validating a geometry.
pub const MIN_SEPARATION: f64 = 1e-9;

/// Default number of reciprocal shells returned by [`enumerate_orders`].
pub const DEFAULT_SHELLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    Triangular,
}

impl LatticeKind {
    /// Lattice constants for which exactly one shell of non-specular
    /// diffraction orders propagates.
    pub fn single_shell_window(self) -> (f64, f64) {
        match self {
            LatticeKind::Square => (1.0, 2f64.sqrt()),
            LatticeKind::Triangular => (2.0 / 3f64.sqrt(), 2.0),
        }
    }

    /// |g₁₀| · a, the first-shell reciprocal length times the lattice constant.
    fn first_shell_scale(self) -> f64 {
        match self {
            LatticeKind::Square => TAU,
            LatticeKind::Triangular => 4.0 * PI / 3f64.sqrt(),
        }
    }

    /// Lattice constant for which |g₁₀|/k₀ equals `ratio`.
    pub fn constant_for_ratio(self, ratio: f64) -> f64 {
        self.first_shell_scale() / (ratio * K0)
    }
}

/// A 2D Bravais lattice with its reciprocal generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    pub a: f64,
    pub basis_vectors: [[f64; 2]; 2],
    pub reciprocal_vectors: [[f64; 2]; 2],
    pub cell_area: f64,
}

impl LatticeSpec {
    pub fn new(kind: LatticeKind, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(invalid("a", format!("lattice constant must be positive, got {a}")));
        }
        let (basis_vectors, reciprocal_vectors) = match kind {
            LatticeKind::Square => {
                let g = TAU / a;
                ([[a, 0.0], [0.0, a]], [[g, 0.0], [0.0, g]])
            }
            LatticeKind::Triangular => {
                let s3 = 3f64.sqrt();
                let g = TAU / a;
                (
                    [[a, 0.0], [0.5 * a, 0.5 * s3 * a]],
                    [[g, -g / s3], [0.0, 2.0 * g / s3]],
                )
            }
        };
        let [b1, b2] = basis_vectors;
        let cell_area = (b1[0] * b2[1] - b1[1] * b2[0]).abs();
        Ok(Self {
            kind,
            a,
            basis_vectors,
            reciprocal_vectors,
            cell_area,
        })
    }

    /// Reciprocal vector g_mn = m g₁ + n g₂.
    pub fn reciprocal_vector(&self, m: i64, n: i64) -> [f64; 2] {
        let [g1, g2] = self.reciprocal_vectors;
        let (m, n) = (m as f64, n as f64);
        [m * g1[0] + n * g2[0], m * g1[1] + n * g2[1]]
    }

    /// Lattice point i b₁ + j b₂.
    pub fn point(&self, i: i64, j: i64) -> [f64; 2] {
        let [b1, b2] = self.basis_vectors;
        let (i, j) = (i as f64, j as f64);
        [i * b1[0] + j * b2[0], i * b1[1] + j * b2[1]]
    }

    /// |g₁₀|/k₀ for the shortest non-zero reciprocal vector.
    pub fn first_shell_ratio(&self) -> f64 {
        self.kind.first_shell_scale() / (self.a * K0)
    }

    pub fn is_subwavelength(&self) -> bool {
        self.first_shell_ratio() > 1.0
    }
}

pub fn make_lattice(kind: LatticeKind, a: f64) -> Result<LatticeSpec> {
    LatticeSpec::new(kind, a)
}

/// A diffraction channel (m, n) of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffractionIndex {
    pub m: i64,
    pub n: i64,
    pub g: [f64; 2],
    pub g_norm: f64,
    /// Longitudinal wavenumber √(k₀² − |g|²); positive imaginary when evanescent.
    pub k_z: Complex64,
    pub propagating: bool,
}

impl DiffractionIndex {
    fn new(spec: &LatticeSpec, m: i64, n: i64) -> Self {
        let g = spec.reciprocal_vector(m, n);
        let g_norm = g[0].hypot(g[1]);
        let kz2 = K0 * K0 - g_norm * g_norm;
        let propagating = g_norm < K0;
        let k_z = if propagating {
            Complex64::new(kz2.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-kz2).sqrt())
        };
        Self {
            m,
            n,
            g,
            g_norm,
            k_z,
            propagating,
        }
    }

    pub fn is_specular(&self) -> bool {
        self.m == 0 && self.n == 0
    }
}

/// Diffraction orders sorted by |g_mn|, starting with (0,0).
///
/// Returns every order in the first `shell_cutoff` non-zero shells, and in
/// any case every propagating order.
pub fn enumerate_orders(spec: &LatticeSpec, shell_cutoff: usize) -> Vec<DiffractionIndex> {
    let shell_cutoff = shell_cutoff.max(1);
    let g1 = spec.first_shell_ratio() * K0;
    // the k-th shell has norm at most k |g1|, and propagating orders at most k0
    let radius = (shell_cutoff as f64 * g1).max(K0) * (1.0 + 1e-9);
    // |m| <= |g| |b1| / 2π for any g with norm |g|
    let b_max = spec
        .basis_vectors
        .iter()
        .map(|b| b[0].hypot(b[1]))
        .fold(0.0, f64::max);
    let extent = (radius * b_max / TAU).ceil() as i64 + 1;

    let mut orders: Vec<DiffractionIndex> = (-extent..=extent)
        .flat_map(|m| (-extent..=extent).map(move |n| (m, n)))
        .map(|(m, n)| DiffractionIndex::new(spec, m, n))
        .filter(|o| o.g_norm <= radius)
        .collect();
    orders.sort_by(|x, y| {
        let ax = x.g[1].atan2(x.g[0]);
        let ay = y.g[1].atan2(y.g[0]);
        x.g_norm
            .partial_cmp(&y.g_norm)
            .unwrap()
            .then(ax.partial_cmp(&ay).unwrap())
    });

    // group into shells and keep the requested number of non-zero ones
    let tol = 1e-9 * g1;
    let mut shells = 0usize;
    let mut last = 0.0;
    let mut keep = 0usize;
    for (idx, o) in orders.iter().enumerate() {
        if idx > 0 && o.g_norm - last > tol {
            shells += 1;
            last = o.g_norm;
        }
        if shells > shell_cutoff && !o.propagating {
            break;
        }
        keep = idx + 1;
    }
    orders.truncate(keep);
    orders
}

/// Finite patch of lattice points centered on the origin.
///
/// Triangular lattices give a centered hexagon with `size` rings
/// (1 + 3k(k+1) points); square lattices give a `size` × `size` grid.
pub fn generate_patch(spec: &LatticeSpec, size: usize) -> Vec<[f64; 2]> {
    match spec.kind {
        LatticeKind::Triangular => {
            let k = size as i64;
            let mut pts = Vec::with_capacity(hexagonal_number(size));
            for i in -k..=k {
                for j in -k..=k {
                    if (i + j).abs() <= k {
                        pts.push(spec.point(i, j));
                    }
                }
            }
            pts
        }
        LatticeKind::Square => {
            let offset = (size as f64 - 1.0) / 2.0;
            let mut pts = Vec::with_capacity(size * size);
            for i in 0..size {
                for j in 0..size {
                    pts.push([
                        (i as f64 - offset) * spec.a,
                        (j as f64 - offset) * spec.a,
                    ]);
                }
            }
            pts
        }
    }
}

/// Centered hexagonal number 1 + 3k(k+1).
pub fn hexagonal_number(rings: usize) -> usize {
    1 + 3 * rings * (rings + 1)
}

/// Ring count of a centered hexagon with `n` atoms, if `n` is a centered
/// hexagonal number.
pub fn rings_for_count(n: usize) -> Option<usize> {
    (0..=n).take_while(|&k| hexagonal_number(k) <= n).find(|&k| hexagonal_number(k) == n)
}

/// In-plane shift ρ_α and height z_α of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShift {
    pub rho: [f64; 2],
    pub z: f64,
}

/// A finite set of atom positions organized in identical layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub lattice: Option<LatticeSpec>,
    pub positions: Vec<[f64; 3]>,
    pub layer_of: Vec<usize>,
    pub layer_count: usize,
    pub layer_shifts: Vec<LayerShift>,
}

impl ArrayGeometry {
    /// Single-layer geometry in the plane z = 0.
    pub fn monolayer(lattice: Option<LatticeSpec>, patch: &[[f64; 2]]) -> Result<Self> {
        stack_layers(lattice, patch, 1, 0.0, None)
    }

    /// Geometry from raw positions; every atom is placed in layer 0.
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        let n = positions.len();
        let geometry = Self {
            lattice: None,
            positions,
            layer_of: vec![0; n],
            layer_count: usize::from(n > 0),
            layer_shifts: vec![LayerShift { rho: [0.0; 2], z: 0.0 }],
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn atoms_per_layer(&self) -> usize {
        if self.layer_count == 0 {
            0
        } else {
            self.positions.len() / self.layer_count
        }
    }

    /// Point on the beam axis halfway through the stack.
    pub fn center(&self) -> [f64; 3] {
        if self.layer_shifts.is_empty() {
            return [0.0; 3];
        }
        let (lo, hi) = self
            .layer_shifts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.z), hi.max(s.z))
            });
        [0.0, 0.0, 0.5 * (lo + hi)]
    }

    /// Minimum pairwise distance and the pair realizing it.
    pub fn min_separation(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, p) in self.positions.iter().enumerate() {
            for (j, q) in self.positions.iter().enumerate().skip(i + 1) {
                let d = distance(p, q);
                if best.is_none_or(|b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_of.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                expected: self.positions.len(),
                actual: self.layer_of.len(),
            });
        }
        if let Some(&bad) = self.layer_of.iter().find(|&&l| l >= self.layer_count.max(1)) {
            return Err(invalid("layer_of", format!("layer index {bad} out of range")));
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("positions", "non-finite coordinate"));
        }
        match self.min_separation() {
            Some((i, j, d)) if d <= MIN_SEPARATION => Err(Error::CoincidentAtoms {
                i,
                j,
                distance: d,
                min_distance: MIN_SEPARATION,
            }),
            _ => Ok(()),
        }
    }

    /// Copy of the geometry rigidly translated by `shift`.
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            for (x, s) in p.iter_mut().zip(shift) {
                *x += s;
            }
        }
        for l in &mut out.layer_shifts {
            l.rho[0] += shift[0];
            l.rho[1] += shift[1];
            l.z += shift[2];
        }
        out
    }

    /// Copy of the geometry mirrored through the plane z = 0.
    pub fn mirrored_z(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            p[2] = -p[2];
        }
        for l in &mut out.layer_shifts {
            l.z = -l.z;
        }
        out
    }

    /// Stable content hash of positions and layer tags.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        for p in &self.positions {
            for x in p {
                h.update(x.to_le_bytes());
            }
        }
        for l in &self.layer_of {
            h.update((*l as u64).to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GeometryFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(text)?;
        file.into_geometry()
    }
}

/// On-disk geometry representation.
#[derive(Debug, Serialize, Deserialize)]
struct GeometryFile {
    lattice: Option<LatticeFile>,
    positions: Vec<[f64; 3]>,
    layer_of: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LatticeFile {
    kind: LatticeKind,
    a: f64,
}

impl From<&ArrayGeometry> for GeometryFile {
    fn from(g: &ArrayGeometry) -> Self {
        Self {
            lattice: g.lattice.map(|l| LatticeFile { kind: l.kind, a: l.a }),
            positions: g.positions.clone(),
            layer_of: g.layer_of.clone(),
        }
    }
}

impl GeometryFile {
    fn into_geometry(self) -> Result<ArrayGeometry> {
        let lattice = self
            .lattice
            .map(|l| LatticeSpec::new(l.kind, l.a))
            .transpose()?;
        if self.layer_of.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                expected: self.positions.len(),
                actual: self.layer_of.len(),
            });
        }
        let layer_count = self.layer_of.iter().max().map_or(0, |m| m + 1);
        let mut layer_shifts = vec![LayerShift { rho: [0.0; 2], z: 0.0 }; layer_count];
        for (layer, shift) in layer_shifts.iter_mut().enumerate() {
            if let Some(i) = self.layer_of.iter().position(|&l| l == layer) {
                shift.z = self.positions[i][2];
            }
        }
        let geometry = ArrayGeometry {
            lattice,
            positions: self.positions,
            layer_of: self.layer_of,
            layer_count,
            layer_shifts,
        };
        geometry.validate()?;
        Ok(geometry)
    }
}

/// Stack `layers` copies of `patch` at z_α = α·spacing with in-plane shifts ρ_α.
pub fn stack_layers(
    lattice: Option<LatticeSpec>,
    patch: &[[f64; 2]],
    layers: usize,
    spacing: f64,
    shifts: Option<&[[f64; 2]]>,
) -> Result<ArrayGeometry> {
    if layers == 0 {
        return Err(invalid("layers", "at least one layer is required"));
    }
    if layers > 1 && !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid("spacing", format!("layer spacing must be positive, got {spacing}")));
    }
    if let Some(s) = shifts {
        if s.len() != layers {
            return Err(Error::DimensionMismatch {
                expected: layers,
                actual: s.len(),
            });
        }
    }
    let layer_shifts: Vec<LayerShift> = (0..layers)
        .map(|alpha| LayerShift {
            rho: shifts.map_or([0.0; 2], |s| s[alpha]),
            z: if layers > 1 { alpha as f64 * spacing } else { 0.0 },
        })
        .collect();

    let mut positions = Vec::with_capacity(patch.len() * layers);
    let mut layer_of = Vec::with_capacity(patch.len() * layers);
    for (alpha, shift) in layer_shifts.iter().enumerate() {
        for p in patch {
            positions.push([p[0] + shift.rho[0], p[1] + shift.rho[1], shift.z]);
            layer_of.push(alpha);
        }
    }
    let geometry = ArrayGeometry {
        lattice,
        positions,
        layer_of,
        layer_count: layers,
        layer_shifts,
    };
    geometry.validate()?;
    Ok(geometry)
}

/// Hexagonal (triangular) or square multilayer geometry from scalar parameters.
pub fn lattice_stack(
    kind: LatticeKind,
    a: f64,
    size: usize,
    layers: usize,
    spacing: f64,
) -> Result<ArrayGeometry> {
    let lattice = LatticeSpec::new(kind, a)?;
    let patch = generate_patch(&lattice, size);
    stack_layers(Some(lattice), &patch, layers, spacing, None)
}

pub(crate) fn distance(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn propagating_non_specular(spec: &LatticeSpec) -> Vec<DiffractionIndex> {
        enumerate_orders(spec, DEFAULT_SHELLS)
            .into_iter()
            .filter(|o| o.propagating && !o.is_specular())
            .collect()
    }

    #[test]
    fn square_and_triangular_basics() {
        let sq = make_lattice(LatticeKind::Square, 1.0).unwrap();
        assert_relative_eq!(sq.cell_area, 1.0);
        let g10 = sq.reciprocal_vector(1, 0);
        assert_relative_eq!(g10[0].hypot(g10[1]), TAU);

        let tri = make_lattice(LatticeKind::Triangular, 1.0).unwrap();
        assert_relative_eq!(tri.cell_area, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        let g10 = tri.reciprocal_vector(1, 0);
        assert_relative_eq!(g10[0].hypot(g10[1]), 4.0 * PI / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn reciprocal_duality() {
        for kind in [LatticeKind::Square, LatticeKind::Triangular] {
            let spec = make_lattice(kind, 1.37).unwrap();
            for (i, b) in spec.basis_vectors.iter().enumerate() {
                for (j, g) in spec.reciprocal_vectors.iter().enumerate() {
                    let dot = b[0] * g[0] + b[1] * g[1];
                    let expected = if i == j { TAU } else { 0.0 };
                    assert_relative_eq!(dot, expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn triangular_first_shell_ratio() {
        let spec = make_lattice(LatticeKind::Triangular, 1.549).unwrap();
        let expected = 4.0 * PI / (3f64.sqrt() * 1.549 * K0);
        assert_relative_eq!(spec.first_shell_ratio(), expected, epsilon = 1e-14);
        assert!((spec.first_shell_ratio() - 0.745).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_positive_constant() {
        assert!(make_lattice(LatticeKind::Square, 0.0).is_err());
        assert!(make_lattice(LatticeKind::Triangular, -1.0).is_err());
        assert!(make_lattice(LatticeKind::Triangular, f64::NAN).is_err());
    }

    #[test]
    fn order_counts() {
        let sub = make_lattice(LatticeKind::Square, 0.8).unwrap();
        let orders = enumerate_orders(&sub, DEFAULT_SHELLS);
        assert!(orders[0].is_specular());
        assert!(orders[0].propagating);
        assert!(propagating_non_specular(&sub).is_empty());

        let tri = make_lattice(LatticeKind::Triangular, 1.549).unwrap();
        let prop = propagating_non_specular(&tri);
        assert_eq!(prop.len(), 6);
        for o in &prop {
            assert!((o.g_norm / K0 - 0.745).abs() < 1e-3);
        }

        let sq = make_lattice(LatticeKind::Square, 1.2).unwrap();
        let mut idx: Vec<(i64, i64)> = propagating_non_specular(&sq).iter().map(|o| (o.m, o.n)).collect();
        idx.sort();
        assert_eq!(idx, vec![(-1, 0), (0, -1), (0, 1), (1, 0)]);
    }

    #[test]
    fn kz_branches() {
        let tri = make_lattice(LatticeKind::Triangular, 1.549).unwrap();
        for o in enumerate_orders(&tri, 3) {
            if o.propagating {
                assert!(o.k_z.re > 0.0 && o.k_z.im == 0.0);
            } else {
                assert!(o.k_z.im > 0.0 && o.k_z.re == 0.0);
            }
        }
    }

    #[test]
    fn patches() {
        let tri = make_lattice(LatticeKind::Triangular, 1.0).unwrap();
        assert_eq!(generate_patch(&tri, 6).len(), 127);
        assert_eq!(generate_patch(&tri, 0), vec![[0.0, 0.0]]);

        let sq = make_lattice(LatticeKind::Square, 1.0).unwrap();
        let p = generate_patch(&sq, 4);
        assert_eq!(p.len(), 16);
        let (sx, sy) = p.iter().fold((0.0, 0.0), |(x, y), q| (x + q[0], y + q[1]));
        assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        assert!(p.contains(&[-1.5, -1.5]) && p.contains(&[1.5, 1.5]));
    }

    #[test]
    fn ring_lookup() {
        assert_eq!(rings_for_count(127), Some(6));
        assert_eq!(rings_for_count(1), Some(0));
        assert_eq!(rings_for_count(128), None);
    }

    #[test]
    fn trilayer_stack() {
        let g = lattice_stack(LatticeKind::Triangular, 1.6, 6, 3, 1.5).unwrap();
        assert_eq!(g.len(), 381);
        let mut zs: Vec<f64> = g.positions.iter().map(|p| p[2]).collect();
        zs.dedup();
        assert_eq!(zs, vec![0.0, 1.5, 3.0]);
        assert_eq!(g.center(), [0.0, 0.0, 1.5]);
        assert_eq!(g.atoms_per_layer(), 127);
    }

    #[test]
    fn single_layer_ignores_spacing() {
        let tri = make_lattice(LatticeKind::Triangular, 1.2).unwrap();
        let patch = generate_patch(&tri, 2);
        let g = stack_layers(Some(tri), &patch, 1, -3.0, None).unwrap();
        assert_eq!(g.len(), patch.len());
        assert!(g.positions.iter().zip(&patch).all(|(p, q)| p[0] == q[0] && p[1] == q[1] && p[2] == 0.0));
    }

    #[test]
    fn shifted_square_bilayer() {
        let sq = make_lattice(LatticeKind::Square, 1.2).unwrap();
        let patch = generate_patch(&sq, 3);
        let shifts = [[0.0, 0.0], [0.6, 0.6]];
        let g = stack_layers(Some(sq), &patch, 2, 0.5, Some(&shifts)).unwrap();
        assert_eq!(g.layer_shifts[1].rho, [0.6, 0.6]);
        assert_eq!(g.positions[9], [patch[0][0] + 0.6, patch[0][1] + 0.6, 0.5]);
    }

    #[test]
    fn stack_errors() {
        let sq = make_lattice(LatticeKind::Square, 1.0).unwrap();
        let patch = generate_patch(&sq, 2);
        assert!(stack_layers(None, &patch, 0, 1.0, None).is_err());
        assert!(stack_layers(None, &patch, 2, 0.0, None).is_err());
        assert!(stack_layers(None, &patch, 2, 1.0, Some(&[[0.0, 0.0]])).is_err());
        let dup = [[0.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            stack_layers(None, &dup, 1, 1.0, None),
            Err(Error::CoincidentAtoms { .. })
        ));
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = lattice_stack(LatticeKind::Triangular, 1.5, 2, 2, 1.5).unwrap();
        let back = ArrayGeometry::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.positions, g.positions);
        assert_eq!(back.layer_of, g.layer_of);
        assert_eq!(back.layer_count, 2);
        assert_eq!(back.hash(), g.hash());
        assert_eq!(back.lattice.unwrap().kind, LatticeKind::Triangular);
    }

    proptest! {
        #[test]
        fn enumeration_is_complete(a in 0.5f64..2.5, square in any::<bool>()) {
            let kind = if square { LatticeKind::Square } else { LatticeKind::Triangular };
            let spec = make_lattice(kind, a).unwrap();
            let orders = enumerate_orders(&spec, DEFAULT_SHELLS);
            for m in -10..=10i64 {
                for n in -10..=10i64 {
                    let g = spec.reciprocal_vector(m, n);
                    if g[0].hypot(g[1]) < K0 {
                        prop_assert!(orders.iter().any(|o| o.m == m && o.n == n));
                    }
                }
            }
            prop_assert!(orders.windows(2).all(|w| w[0].g_norm <= w[1].g_norm));
        }

        #[test]
        fn hexagon_count(k in 0usize..=10) {
            let spec = make_lattice(LatticeKind::Triangular, 1.0).unwrap();
            prop_assert_eq!(generate_patch(&spec, k).len(), 1 + 3 * k * (k + 1));
        }

        #[test]
        fn hexagon_is_sixfold_symmetric(k in 0usize..=8, a in 0.5f64..2.5) {
            let spec = make_lattice(LatticeKind::Triangular, a).unwrap();
            let pts = generate_patch(&spec, k);
            let (s, c) = (PI / 3.0).sin_cos();
            for p in &pts {
                let q = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
                prop_assert!(pts.iter().any(|r| (r[0] - q[0]).abs() < 1e-12 && (r[1] - q[1]).abs() < 1e-12));
            }
        }
    }
}
