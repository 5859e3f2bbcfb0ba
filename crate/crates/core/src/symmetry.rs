//! Exact reduction onto the fully symmetric sector of a point group.
//!
//! A centered hexagonal (or square) stack illuminated on axis with circular
//! polarization is invariant under the in-plane rotations and mirrors of the
//! lattice. The projected Green function depends only on |r| and on the
//! in-plane fraction of r, so it commutes with every such permutation of the
//! atoms, and an on-axis mode is constant on each orbit. The driven response
//! therefore never leaves the span of the normalized orbit indicators
//! u_O = 1_O/√|O|, and reflection and retrieval efficiency can be computed in
//! that basis without approximation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::greenfn::{
    build_interaction_matrix, check_near_field, projected_green, Basis, InteractionMatrix,
    Polarization,
};
use crate::lattice::ArrayGeometry;
use crate::linalg::CMat;
use crate::modes::{ModeField, ModeVector};

const MATCH_TOLERANCE: f64 = 1e-8;
const KEY_QUANTUM: f64 = 1e-6;
const INVARIANCE_TOLERANCE: f64 = 1e-9;

/// How the linear-algebra problem is posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Use the symmetric sector when the geometry, polarization and mode allow it.
    #[default]
    Auto,
    /// Always work with one amplitude per atom.
    Full,
    /// Require the symmetric sector; fail if it does not apply.
    Symmetric,
}

/// Partition of the atoms into orbits of a point group.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitBasis {
    orbits: Vec<Vec<usize>>,
    orbit_of: Vec<usize>,
    geometry_hash: u64,
}

impl OrbitBasis {
    /// Orbits under the rotations (by 60°, 90°, 120°, 180°) and mirrors
    /// (x, y, diagonal) about the vertical line through `axis` that map the
    /// geometry onto itself.
    pub fn detect(geometry: &ArrayGeometry, axis: [f64; 2]) -> Self {
        let n = geometry.len();
        let index = PointIndex::new(&geometry.positions);
        let mut parent: Vec<usize> = (0..n).collect();

        for op in candidate_operations() {
            let Some(perm) = permutation(&geometry.positions, &index, axis, &op) else {
                continue;
            };
            for (i, &j) in perm.iter().enumerate() {
                union(&mut parent, i, j);
            }
        }

        let mut orbits: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        let mut orbit_of = vec![0; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = orbits.len();
                orbits.push(Vec::new());
            }
            orbits[slot[r]].push(i);
            orbit_of[i] = slot[r];
        }
        Self {
            orbits,
            orbit_of,
            geometry_hash: geometry.hash(),
        }
    }

    pub fn dim(&self) -> usize {
        self.orbits.len()
    }

    pub fn atoms(&self) -> usize {
        self.orbit_of.len()
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn orbit_of(&self, atom: usize) -> usize {
        self.orbit_of[atom]
    }

    pub fn geometry_hash(&self) -> u64 {
        self.geometry_hash
    }

    /// True when every orbit is a single atom.
    pub fn is_trivial(&self) -> bool {
        self.dim() == self.atoms()
    }

    /// Whether `v` takes one value on each orbit.
    pub fn is_invariant(&self, v: &[Complex64]) -> bool {
        if v.len() != self.atoms() {
            return false;
        }
        let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        self.orbits.iter().all(|orbit| {
            let first = v[orbit[0]];
            orbit.iter().all(|&i| (v[i] - first).norm() <= INVARIANCE_TOLERANCE * scale)
        })
    }

    /// Uᵀv: coordinates of the orthogonal projection onto the symmetric sector.
    pub fn project(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.orbits
            .iter()
            .map(|orbit| {
                let sum: Complex64 = orbit.iter().map(|&i| v[i]).sum();
                sum / (orbit.len() as f64).sqrt()
            })
            .collect()
    }

    /// U·x: atom amplitudes of a symmetric-sector vector.
    pub fn expand(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.atoms()];
        for (orbit, &xo) in self.orbits.iter().zip(x) {
            let value = xo / (orbit.len() as f64).sqrt();
            for &i in orbit {
                out[i] = value;
            }
        }
        out
    }

    /// UᵀGU assembled from one row of G per orbit.
    pub fn reduced_interaction_matrix(
        self: &Arc<Self>,
        geometry: &ArrayGeometry,
        pol: &Polarization,
    ) -> Result<InteractionMatrix> {
        if geometry.len() != self.atoms() || geometry.hash() != self.geometry_hash {
            return Err(invalid("geometry", "orbit basis was built for a different geometry"));
        }
        check_near_field(geometry)?;
        let dim = self.dim();
        let p = &geometry.positions;
        let mut entries = CMat::zeros(dim, dim);
        for (o, orbit) in self.orbits.iter().enumerate() {
            let i = orbit[0];
            let mut acc = vec![Complex64::new(0.0, 0.0); dim];
            for (j, q) in p.iter().enumerate() {
                let g = if i == j {
                    Complex64::new(0.0, 0.5)
                } else {
                    projected_green([p[i][0] - q[0], p[i][1] - q[1], p[i][2] - q[2]], pol)?
                };
                acc[self.orbit_of[j]] += g;
            }
            let size_o = orbit.len() as f64;
            for (q, sum) in acc.into_iter().enumerate() {
                entries[(o, q)] = sum * (size_o / self.orbits[q].len() as f64).sqrt();
            }
        }
        // exact symmetry holds analytically; remove rounding asymmetry
        for o in 0..dim {
            for q in (o + 1)..dim {
                let mean = 0.5 * (entries[(o, q)] + entries[(q, o)]);
                entries[(o, q)] = mean;
                entries[(q, o)] = mean;
            }
        }
        Ok(InteractionMatrix::from_parts(
            entries,
            Basis::Symmetric(Arc::clone(self)),
            geometry.hash(),
        ))
    }
}

/// Interaction matrix and sampled mode posed in a common basis.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub matrix: InteractionMatrix,
    pub mode: ModeVector,
}

impl Assembled {
    pub fn is_reduced(&self) -> bool {
        !self.matrix.basis().is_atoms()
    }
}

/// Build the interaction matrix and mode vector, using the symmetric sector
/// when `reduction` allows and the problem is symmetric.
pub fn assemble(
    geometry: &ArrayGeometry,
    pol: &Polarization,
    mode: &ModeField,
    reduction: Reduction,
) -> Result<Assembled> {
    let sampled = mode.sample(geometry);
    if reduction != Reduction::Full {
        if let Some(basis) = symmetric_basis(geometry, pol, mode, &sampled) {
            let basis = Arc::new(basis);
            let matrix = basis.reduced_interaction_matrix(geometry, pol)?;
            let reduced = sampled.reduced(Arc::clone(&basis))?;
            return Ok(Assembled { matrix, mode: reduced });
        }
        if reduction == Reduction::Symmetric {
            return Err(invalid(
                "reduction",
                "geometry, polarization and mode are not jointly symmetric",
            ));
        }
    }
    let matrix = build_interaction_matrix(geometry, pol)?;
    Ok(Assembled { matrix, mode: sampled })
}

fn symmetric_basis(
    geometry: &ArrayGeometry,
    pol: &Polarization,
    mode: &ModeField,
    sampled: &ModeVector,
) -> Option<OrbitBasis> {
    if !pol.is_circular() || geometry.is_empty() {
        return None;
    }
    let axis = mode.axis()?;
    let basis = OrbitBasis::detect(geometry, axis);
    (!basis.is_trivial() && basis.is_invariant(sampled.amplitudes())).then_some(basis)
}

/// In-plane orthogonal map as a 2×2 matrix.
type Op = [[f64; 2]; 2];

fn candidate_operations() -> Vec<Op> {
    let rot = |theta: f64| [[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
    vec![
        rot(PI / 3.0),
        rot(PI / 2.0),
        rot(2.0 * PI / 3.0),
        rot(PI),
        [[1.0, 0.0], [0.0, -1.0]],
        [[-1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
    ]
}

struct PointIndex {
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl PointIndex {
    fn new(points: &[[f64; 3]]) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p)).or_default().push(i);
        }
        Self { cells }
    }

    fn find(&self, points: &[[f64; 3]], q: &[f64; 3]) -> Option<usize> {
        let k = key(q);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    if let Some(&i) = bucket
                        .iter()
                        .find(|&&i| crate::lattice::distance(&points[i], q) < MATCH_TOLERANCE)
                    {
                        return Some(i);
                    }
                }
            }
        }
        None
    }
}

fn key(p: &[f64; 3]) -> [i64; 3] {
    p.map(|x| (x / KEY_QUANTUM).round() as i64)
}

fn permutation(points: &[[f64; 3]], index: &PointIndex, axis: [f64; 2], op: &Op) -> Option<Vec<usize>> {
    points
        .iter()
        .map(|p| {
            let x = p[0] - axis[0];
            let y = p[1] - axis[1];
            let q = [
                op[0][0] * x + op[0][1] * y + axis[0],
                op[1][0] * x + op[1][1] * y + axis[1],
                p[2],
            ];
            index.find(points, &q)
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}
