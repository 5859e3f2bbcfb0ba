//! Optical modes coupling to the array and their sampled amplitudes.
//!
//! A mode vector holds 𝓔_i, the coupling of atom i to the mode. For
//! reflection the detection mode is the phase conjugate of the input beam, so
//! e·𝓔*_det(r_i) is just the input field at r_i; that is what
//! [`ModeField::evaluate`] returns. Fields are normalized so that a single
//! propagating beam carries ∫|𝓔|²d²ρ = λ₀² through every transverse plane.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::greenfn::Basis;
use crate::idealized;
use crate::lattice::{generate_patch, stack_layers, ArrayGeometry, LatticeKind, LatticeSpec, K0};
use crate::response::{max_reflectance, ScanOptions};
use crate::symmetry::OrbitBasis;

/// Smallest waist for which the paraxial Gaussian is used.
pub const MIN_WAIST: f64 = 0.5;

/// Propagation direction of a beam along the stack axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Towards +z.
    #[default]
    Forward,
    /// Towards −z.
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// A normalized scalar mode function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeField {
    /// Fundamental paraxial Gaussian focused at `focus`.
    Gaussian {
        waist: f64,
        focus: [f64; 3],
        direction: Direction,
    },
    /// (u₊ + e^{iφ}u₋)/√2 of two counter-propagating Gaussians sharing a focus.
    TwoWay {
        waist: f64,
        focus: [f64; 3],
        phase: f64,
    },
    /// Uniform beam of cross-section `area`, phase referenced to z = `origin`.
    PlaneWave {
        area: f64,
        origin: f64,
        direction: Direction,
    },
}

impl ModeField {
    pub fn gaussian(waist: f64, focus: [f64; 3], direction: Direction) -> Result<Self> {
        check_waist(waist)?;
        check_focus(focus)?;
        Ok(Self::Gaussian {
            waist,
            focus,
            direction,
        })
    }

    pub fn two_way(waist: f64, focus: [f64; 3], phase: f64) -> Result<Self> {
        check_waist(waist)?;
        check_focus(focus)?;
        if !phase.is_finite() {
            return Err(invalid("phase", "relative phase must be finite"));
        }
        Ok(Self::TwoWay { waist, focus, phase })
    }

    pub fn plane_wave(area: f64, origin: f64, direction: Direction) -> Result<Self> {
        if !(area.is_finite() && area > 0.0) {
            return Err(invalid("area", format!("cross-section must be positive, got {area}")));
        }
        Ok(Self::PlaneWave {
            area,
            origin,
            direction,
        })
    }

    /// Forward Gaussian focused at the centre of `geometry`.
    pub fn gaussian_centered(waist: f64, geometry: &ArrayGeometry) -> Result<Self> {
        Self::gaussian(waist, geometry.center(), Direction::Forward)
    }

    /// Two-way mode focused at the centre of `geometry`.
    pub fn two_way_centered(waist: f64, phase: f64, geometry: &ArrayGeometry) -> Result<Self> {
        Self::two_way(waist, geometry.center(), phase)
    }

    pub fn waist(&self) -> Option<f64> {
        match *self {
            Self::Gaussian { waist, .. } | Self::TwoWay { waist, .. } => Some(waist),
            Self::PlaneWave { .. } => None,
        }
    }

    pub fn phase(&self) -> Option<f64> {
        match *self {
            Self::TwoWay { phase, .. } => Some(phase),
            _ => None,
        }
    }

    /// In-plane position of the beam axis.
    pub fn axis(&self) -> Option<[f64; 2]> {
        match *self {
            Self::Gaussian { focus, .. } | Self::TwoWay { focus, .. } => Some([focus[0], focus[1]]),
            Self::PlaneWave { .. } => Some([0.0, 0.0]),
        }
    }

    /// The same mode for a geometry mirrored through z = 0.
    pub fn mirrored_z(&self) -> Self {
        match *self {
            Self::Gaussian {
                waist,
                focus,
                direction,
            } => Self::Gaussian {
                waist,
                focus: [focus[0], focus[1], -focus[2]],
                direction: direction.reversed(),
            },
            Self::TwoWay { waist, focus, phase } => Self::TwoWay {
                waist,
                focus: [focus[0], focus[1], -focus[2]],
                phase,
            },
            Self::PlaneWave {
                area,
                origin,
                direction,
            } => Self::PlaneWave {
                area,
                origin: -origin,
                direction: direction.reversed(),
            },
        }
    }

    /// The same mode translated by `shift`.
    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let mv = |f: [f64; 3]| [f[0] + shift[0], f[1] + shift[1], f[2] + shift[2]];
        match *self {
            Self::Gaussian {
                waist,
                focus,
                direction,
            } => Self::Gaussian {
                waist,
                focus: mv(focus),
                direction,
            },
            Self::TwoWay { waist, focus, phase } => Self::TwoWay {
                waist,
                focus: mv(focus),
                phase,
            },
            Self::PlaneWave {
                area,
                origin,
                direction,
            } => Self::PlaneWave {
                area,
                origin: origin + shift[2],
                direction,
            },
        }
    }

    /// Mode amplitude at `r`.
    pub fn evaluate(&self, r: [f64; 3]) -> Complex64 {
        match *self {
            Self::Gaussian {
                waist,
                focus,
                direction,
            } => {
                let (rho2, z) = local(r, focus);
                gaussian_profile(waist, rho2, direction.sign() * z)
            }
            Self::TwoWay { waist, focus, phase } => {
                let (rho2, z) = local(r, focus);
                let forward = gaussian_profile(waist, rho2, z);
                let backward = gaussian_profile(waist, rho2, -z);
                (forward + Complex64::from_polar(1.0, phase) * backward) * std::f64::consts::FRAC_1_SQRT_2
            }
            Self::PlaneWave {
                area,
                origin,
                direction,
            } => Complex64::from_polar(1.0 / area.sqrt(), K0 * direction.sign() * (r[2] - origin)),
        }
    }

    /// ∫|𝓔|²d²ρ over the plane at height `z`.
    ///
    /// For the two-way mode this includes the standing-wave interference
    /// between the components and is not conserved; see [`ModeField::flux`].
    pub fn intensity_integral(&self, z: f64) -> f64 {
        match *self {
            Self::PlaneWave { area, .. } => self.evaluate([0.0, 0.0, z]).norm_sqr() * area,
            Self::Gaussian { waist, focus, .. } | Self::TwoWay { waist, focus, .. } => {
                let w_z = beam_radius(waist, z - focus[2]);
                radial_integral(10.0 * w_z, |rho| {
                    self.evaluate([focus[0] + rho, focus[1], z]).norm_sqr()
                })
            }
        }
    }

    /// Power carried through the plane at `z`, summed over propagation
    /// directions. Equals λ₀² for every normalized mode and every plane.
    pub fn flux(&self, z: f64) -> f64 {
        match *self {
            Self::TwoWay { waist, focus, .. } => {
                let forward = Self::Gaussian {
                    waist,
                    focus,
                    direction: Direction::Forward,
                };
                let backward = Self::Gaussian {
                    waist,
                    focus,
                    direction: Direction::Backward,
                };
                0.5 * (forward.intensity_integral(z) + backward.intensity_integral(z))
            }
            _ => self.intensity_integral(z),
        }
    }

    /// Amplitudes at every atom of `geometry`.
    pub fn sample(&self, geometry: &ArrayGeometry) -> ModeVector {
        ModeVector {
            amplitudes: geometry.positions.iter().map(|&p| self.evaluate(p)).collect(),
            basis: Basis::Atoms,
            geometry_hash: geometry.hash(),
        }
    }

    fn cache_key(&self) -> Vec<u64> {
        let mut key = Vec::with_capacity(6);
        match *self {
            Self::Gaussian {
                waist,
                focus,
                direction,
            } => {
                key.push(0);
                key.extend([waist, focus[0], focus[1], focus[2], direction.sign()].map(f64::to_bits));
            }
            Self::TwoWay { waist, focus, phase } => {
                key.push(1);
                key.extend([waist, focus[0], focus[1], focus[2], phase].map(f64::to_bits));
            }
            Self::PlaneWave {
                area,
                origin,
                direction,
            } => {
                key.push(2);
                key.extend([area, origin, direction.sign()].map(f64::to_bits));
            }
        }
        key
    }
}

fn check_waist(waist: f64) -> Result<()> {
    if !(waist.is_finite() && waist >= MIN_WAIST) {
        return Err(invalid(
            "waist",
            format!("waist {waist} is below the paraxial floor {MIN_WAIST}"),
        ));
    }
    Ok(())
}

fn check_focus(focus: [f64; 3]) -> Result<()> {
    if focus.iter().any(|x| !x.is_finite()) {
        return Err(invalid("focus", "focus must be finite"));
    }
    Ok(())
}

fn local(r: [f64; 3], focus: [f64; 3]) -> (f64, f64) {
    let x = r[0] - focus[0];
    let y = r[1] - focus[1];
    (x * x + y * y, r[2] - focus[2])
}

fn rayleigh_range(waist: f64) -> f64 {
    PI * waist * waist
}

fn beam_radius(waist: f64, z: f64) -> f64 {
    waist * (1.0 + (z / rayleigh_range(waist)).powi(2)).sqrt()
}

/// Forward paraxial Gaussian normalized to unit transverse power.
fn gaussian_profile(waist: f64, rho2: f64, z: f64) -> Complex64 {
    let z_r = rayleigh_range(waist);
    let w_z = beam_radius(waist, z);
    let inv_curvature = z / (z * z + z_r * z_r);
    let gouy = (z / z_r).atan();
    let amplitude = (2.0 / (PI * waist * waist)).sqrt() * (waist / w_z) * (-rho2 / (w_z * w_z)).exp();
    let phase = K0 * z + K0 * rho2 * inv_curvature / 2.0 - gouy;
    Complex64::from_polar(amplitude, phase)
}

/// 2π∫₀^R ρ f(ρ) dρ by composite Simpson.
fn radial_integral(radius: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INTERVALS: usize = 4000;
    let h = radius / INTERVALS as f64;
    let g = |k: usize| {
        let rho = k as f64 * h;
        rho * f(rho)
    };
    let mut sum = g(0) + g(INTERVALS);
    for k in 1..INTERVALS {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k);
    }
    2.0 * PI * sum * h / 3.0
}

/// Mode amplitudes 𝓔_i, in the atom basis or a symmetric reduced basis.
#[derive(Debug, Clone)]
pub struct ModeVector {
    amplitudes: Vec<Complex64>,
    basis: Basis,
    geometry_hash: u64,
}

impl ModeVector {
    /// Wrap raw atom amplitudes.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>, geometry_hash: u64) -> Result<Self> {
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("amplitudes", "mode amplitudes must be finite"));
        }
        Ok(Self {
            amplitudes,
            basis: Basis::Atoms,
            geometry_hash,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn geometry_hash(&self) -> u64 {
        self.geometry_hash
    }

    /// Express an orbit-constant atom vector in the orbit basis.
    pub fn reduced(&self, basis: Arc<OrbitBasis>) -> Result<Self> {
        if !self.basis.is_atoms() {
            return Err(Error::BasisMismatch);
        }
        if self.len() != basis.atoms() {
            return Err(Error::DimensionMismatch {
                expected: basis.atoms(),
                actual: self.len(),
            });
        }
        if !basis.is_invariant(&self.amplitudes) {
            return Err(invalid("mode", "mode vector is not constant on symmetry orbits"));
        }
        Ok(Self {
            amplitudes: basis.project(&self.amplitudes),
            basis: Basis::Symmetric(basis),
            geometry_hash: self.geometry_hash,
        })
    }
}

type SampleKey = (Vec<u64>, u64);

/// Thread-safe memo of sampled mode vectors keyed by mode and geometry hash.
#[derive(Debug, Default)]
pub struct ModeSampler {
    cache: RwLock<HashMap<SampleKey, Arc<ModeVector>>>,
}

impl ModeSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&self, mode: &ModeField, geometry: &ArrayGeometry) -> Arc<ModeVector> {
        let key = (mode.cache_key(), geometry.hash());
        if let Some(hit) = self.cache.read().expect("mode cache poisoned").get(&key) {
            return Arc::clone(hit);
        }
        let fresh = Arc::new(mode.sample(geometry));
        let mut guard = self.cache.write().expect("mode cache poisoned");
        Arc::clone(guard.entry(key).or_insert(fresh))
    }

    pub fn len(&self) -> usize {
        self.cache.read().expect("mode cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of the finite-array versus infinite-array reflectance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveCheck {
    pub atoms_per_layer: usize,
    pub waist: f64,
    pub r_max: f64,
    pub r_ideal: f64,
    pub error: f64,
}

/// Waist used by [`validate_plane_wave_limit`], as a multiple of √N·a.
pub const PLANE_WAVE_WAIST_FACTOR: f64 = 1.0 / 3.0;

/// Compare the finite-array peak reflectance of a wide Gaussian with the
/// infinite-array prediction.
///
/// Uses a hexagonal (or square) patch with `size` rings (or sites per side)
/// and waist √N·a/3.
pub fn validate_plane_wave_limit(
    lattice: &LatticeSpec,
    layers: usize,
    spacing: f64,
    size: usize,
) -> Result<PlaneWaveCheck> {
    let n = generate_patch(lattice, size).len();
    let waist = PLANE_WAVE_WAIST_FACTOR * (n as f64).sqrt() * lattice.a;
    validate_plane_wave_limit_with_waist(lattice, layers, spacing, size, waist)
}

/// As [`validate_plane_wave_limit`] with an explicit waist.
pub fn validate_plane_wave_limit_with_waist(
    lattice: &LatticeSpec,
    layers: usize,
    spacing: f64,
    size: usize,
    waist: f64,
) -> Result<PlaneWaveCheck> {
    let patch = generate_patch(lattice, size);
    let geometry = stack_layers(Some(*lattice), &patch, layers, spacing, None)?;
    let mode = ModeField::gaussian_centered(waist, &geometry)?;
    let finite = max_reflectance(&geometry, &mode, &ScanOptions::default())?;
    let ideal = idealized::ideal_max_reflectance(lattice, layers, spacing, None)?;
    Ok(PlaneWaveCheck {
        atoms_per_layer: patch.len(),
        waist,
        r_max: finite.r_max,
        r_ideal: ideal.r_max,
        error: (finite.r_max - ideal.r_max).abs(),
    })
}

/// Lattice used by the default plane-wave self-test.
pub fn default_plane_wave_lattice() -> LatticeSpec {
    LatticeSpec::new(LatticeKind::Triangular, 0.8).expect("valid lattice")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::lattice_stack;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn focal_amplitude() {
        for w in [0.5, 1.0, 3.7] {
            let m = ModeField::gaussian(w, [0.0; 3], Direction::Forward).unwrap();
            assert_relative_eq!(m.evaluate([0.0; 3]).norm_sqr(), 2.0 / (PI * w * w), epsilon = 1e-14);
        }
    }

    #[test]
    fn rayleigh_range_halves_intensity() {
        let m = ModeField::gaussian(1.0, [0.0; 3], Direction::Forward).unwrap();
        let ratio = m.evaluate([0.0, 0.0, PI]).norm_sqr() / m.evaluate([0.0; 3]).norm_sqr();
        assert_relative_eq!(ratio, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn waist_radius_amplitude() {
        let w = 2.0;
        let m = ModeField::gaussian(w, [0.0; 3], Direction::Forward).unwrap();
        let ratio = m.evaluate([w, 0.0, 0.0]).norm() / m.evaluate([0.0; 3]).norm();
        assert_relative_eq!(ratio, (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn sub_paraxial_waist_rejected() {
        assert!(ModeField::gaussian(0.3, [0.0; 3], Direction::Forward).is_err());
        assert!(ModeField::two_way(0.49, [0.0; 3], 0.0).is_err());
    }

    #[test]
    fn normalization_integral() {
        for w in [0.7, 2.5] {
            let g = ModeField::gaussian(w, [0.0; 3], Direction::Forward).unwrap();
            let t = ModeField::two_way(w, [0.0; 3], 0.4).unwrap();
            for z in [0.0, 5.0, -2.3] {
                assert!((g.intensity_integral(z) - 1.0).abs() < 1e-6);
                assert!((t.flux(z) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_way_interference_at_focus() {
        let w = 1.5;
        let single = ModeField::gaussian(w, [0.0; 3], Direction::Forward).unwrap().evaluate([0.0; 3]);
        let constructive = ModeField::two_way(w, [0.0; 3], 0.0).unwrap().evaluate([0.0; 3]);
        let destructive = ModeField::two_way(w, [0.0; 3], PI).unwrap().evaluate([0.0; 3]);
        assert_relative_eq!(constructive.norm_sqr(), 2.0 * single.norm_sqr(), epsilon = 1e-14);
        assert!(destructive.norm() < 1e-15);
    }

    #[test]
    fn standing_wave_period() {
        let m = ModeField::two_way(4.0, [0.0; 3], 0.0).unwrap();
        // nodes of cos(k₀z) sit a quarter wavelength from the focus
        let node = m.evaluate([0.0, 0.0, 0.25]).norm() / m.evaluate([0.0; 3]).norm();
        let antinode = m.evaluate([0.0, 0.0, 0.5]).norm() / m.evaluate([0.0; 3]).norm();
        assert!(node < 0.01);
        assert!((antinode - 1.0).abs() < 0.01);
    }

    #[test]
    fn plane_wave_normalization() {
        let m = ModeField::plane_wave(12.5, 0.0, Direction::Forward).unwrap();
        assert_relative_eq!(m.intensity_integral(3.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sampler_caches() {
        let g = lattice_stack(LatticeKind::Triangular, 1.0, 2, 1, 0.0).unwrap();
        let m = ModeField::gaussian_centered(1.0, &g).unwrap();
        let sampler = ModeSampler::new();
        let a = sampler.sample(&m, &g);
        let b = sampler.sample(&m, &g);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(sampler.len(), 1);
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| sampler.sample(&m, &g));
            }
        });
        assert_eq!(sampler.len(), 1);
    }

    proptest! {
        #[test]
        fn translation_invariance(dx in -3.0f64..3.0, dy in -3.0f64..3.0, dz in -3.0f64..3.0, w in 0.5f64..4.0) {
            let g = lattice_stack(LatticeKind::Triangular, 1.2, 2, 2, 1.1).unwrap();
            let m = ModeField::gaussian_centered(w, &g).unwrap();
            let shift = [dx, dy, dz];
            let before = m.sample(&g);
            let after = m.translated(shift).sample(&g.translated(shift));
            for (a, b) in before.amplitudes().iter().zip(after.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn gaussian_power_is_conserved(w in 0.5f64..3.0, z in -6.0f64..6.0) {
            let m = ModeField::gaussian(w, [0.0; 3], Direction::Backward).unwrap();
            prop_assert!((m.intensity_integral(z) - 1.0).abs() < 1e-6);
        }
    }
}
