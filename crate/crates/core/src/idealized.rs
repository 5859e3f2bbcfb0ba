//! Infinite-array model of a stack of identical lattice layers.
//!
//! Each layer is a uniform q = 0 spin wave. It radiates into the specular
//! order and every propagating diffraction order (m, n), with rates
//!
//! ```text
//! Γ₀₀ = 3π/(k₀²𝒜),    Γ_mn = Γ₀₀ (k₀² + k_mn²)/(2 k₀ k_mn)
//! ```
//!
//! Layers couple through 𝒢_αβ = (i/2) Σ_mn (Γ_mn/Γ₀₀) e^{ik_mn|z_α−z_β|} e^{ig_mn·(ρ_α−ρ_β)}.
//! Evanescent orders are dropped, so coherent shifts mediated by them are
//! not represented.

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{enumerate_orders, LatticeKind, LatticeSpec, DEFAULT_SHELLS, K0};
use crate::linalg::{self, CMat, I};
use crate::response::golden_section_max;

/// Orders with ||g|/k₀ − 1| below this are rejected as grazing.
pub const GRAZING_TOLERANCE: f64 = 1e-6;

/// Max |Re 𝒢_αβ| (relative to Γ₀₀) accepted as a critical configuration.
pub const CRITICAL_TOLERANCE: f64 = 1e-8;

/// Relative singular-value threshold for the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// Decay of a layer into one propagating order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRate {
    pub m: i64,
    pub n: i64,
    pub g: [f64; 2],
    /// k_mn in units of 1/λ₀.
    pub k_z: f64,
    /// Γ_mn in units of Γ₀.
    pub rate: f64,
    /// Γ_mn/Γ₀₀.
    pub relative: f64,
}

/// Per-order decay bookkeeping of a uniformly excited layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates {
    pub gamma_00: f64,
    /// Propagating orders, specular first.
    pub orders: Vec<ChannelRate>,
    pub gamma_det: f64,
    pub gamma_diff: f64,
}

impl ChannelRates {
    pub fn total(&self) -> f64 {
        self.gamma_det + self.gamma_diff
    }

    /// Γ_det/(Γ_det + Γ_diff).
    pub fn branching_ratio(&self) -> f64 {
        self.gamma_det / self.total()
    }
}

/// Decay rates of the q = 0 spin wave of `lattice`, in units of Γ₀.
pub fn channel_rates(lattice: &LatticeSpec) -> Result<ChannelRates> {
    let gamma_00 = 3.0 * std::f64::consts::PI / (K0 * K0 * lattice.cell_area);
    let mut orders = Vec::new();
    for order in enumerate_orders(lattice, DEFAULT_SHELLS) {
        let ratio = order.g_norm / K0;
        if (ratio - 1.0).abs() < GRAZING_TOLERANCE {
            return Err(Error::GrazingOrder {
                m: order.m,
                n: order.n,
                ratio,
                tolerance: GRAZING_TOLERANCE,
            });
        }
        if !order.propagating {
            continue;
        }
        let k_z = order.k_z.re;
        let relative = (K0 * K0 + k_z * k_z) / (2.0 * K0 * k_z);
        orders.push(ChannelRate {
            m: order.m,
            n: order.n,
            g: order.g,
            k_z,
            rate: gamma_00 * relative,
            relative,
        });
    }
    let gamma_diff = orders.iter().skip(1).map(|o| o.rate).sum();
    Ok(ChannelRates {
        gamma_00,
        gamma_det: gamma_00,
        gamma_diff,
        orders,
    })
}

/// Inter-layer coupling matrix in units of Γ₀₀.
#[derive(Debug, Clone)]
pub struct IdealizedLayerMatrix {
    entries: CMat,
    rates: ChannelRates,
    spacing: f64,
    heights: Vec<f64>,
    shifts: Vec<[f64; 2]>,
}

impl IdealizedLayerMatrix {
    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn layers(&self) -> usize {
        self.heights.len()
    }

    pub fn rates(&self) -> &ChannelRates {
        &self.rates
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn shifts(&self) -> &[[f64; 2]] {
        &self.shifts
    }

    /// ℓ when the spacing is a whole number of half wavelengths.
    pub fn half_wavelengths(&self) -> Option<u32> {
        let two_d = 2.0 * self.spacing;
        (two_d >= 0.5 && (two_d - two_d.round()).abs() < 1e-9).then(|| two_d.round() as u32)
    }

    /// max |Re 𝒢_αβ|.
    pub fn max_real(&self) -> f64 {
        let m = self.layers();
        (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .map(|(a, b)| self.entries[(a, b)].re.abs())
            .fold(0.0, f64::max)
    }

    /// e^{ik₀z_α}: layer amplitudes of the specular channel.
    pub fn specular_vector(&self) -> Vec<Complex64> {
        self.heights.iter().map(|&z| Complex64::from_polar(1.0, K0 * z)).collect()
    }

    /// (Γ_det, Γ_diff) of a layer state `v` with Σ|v_α|² = 1, in units of Γ₀.
    ///
    /// Every order radiates both up and down; the specular pair is the
    /// detection channel.
    pub fn channel_split(&self, v: &[Complex64]) -> (f64, f64) {
        let mut det = 0.0;
        let mut diff = 0.0;
        for (c, order) in self.rates.orders.iter().enumerate() {
            for sigma in [1.0, -1.0] {
                let amp: Complex64 = self
                    .heights
                    .iter()
                    .zip(&self.shifts)
                    .zip(v)
                    .map(|((&z, rho), &vz)| {
                        let phase = sigma * order.k_z * z + order.g[0] * rho[0] + order.g[1] * rho[1];
                        Complex64::from_polar(1.0, -phase) * vz
                    })
                    .sum();
                let rate = 0.5 * order.rate * amp.norm_sqr();
                if c == 0 {
                    det += rate;
                } else {
                    diff += rate;
                }
            }
        }
        (det, diff)
    }
}

/// Build 𝒢 for `layers` copies at z_α = α·spacing with in-plane shifts.
pub fn interlayer_matrix(
    lattice: &LatticeSpec,
    layers: usize,
    spacing: f64,
    shifts: Option<&[[f64; 2]]>,
) -> Result<IdealizedLayerMatrix> {
    if layers == 0 {
        return Err(invalid("layers", "at least one layer is required"));
    }
    if layers > 1 && !(spacing.is_finite() && spacing > 0.0) {
        return Err(invalid("spacing", format!("layer spacing must be positive, got {spacing}")));
    }
    let shifts: Vec<[f64; 2]> = match shifts {
        Some(s) if s.len() != layers => {
            return Err(Error::DimensionMismatch {
                expected: layers,
                actual: s.len(),
            })
        }
        Some(s) => s.to_vec(),
        None => vec![[0.0; 2]; layers],
    };
    let rates = channel_rates(lattice)?;
    let heights: Vec<f64> = (0..layers).map(|a| a as f64 * spacing).collect();
    let entries = Mat::from_fn(layers, layers, |a, b| {
        let dz = (heights[a] - heights[b]).abs();
        let drho = [shifts[a][0] - shifts[b][0], shifts[a][1] - shifts[b][1]];
        let sum: Complex64 = rates
            .orders
            .iter()
            .map(|o| o.relative * Complex64::from_polar(1.0, o.k_z * dz + o.g[0] * drho[0] + o.g[1] * drho[1]))
            .sum();
        0.5 * I * sum
    });
    Ok(IdealizedLayerMatrix {
        entries,
        rates,
        spacing,
        heights,
        shifts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Diffraction channels in phase with the specular one: a single bright state.
    Even,
    /// Alternating channels: the specular bright state stops feeding diffraction.
    Odd,
}

impl Parity {
    pub fn of(q: u32) -> Self {
        if q.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// A lattice constant at which the inter-layer coupling is purely dissipative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorDesign {
    pub kind: LatticeKind,
    /// Critical lattice constant a*.
    pub a: f64,
    pub q: u32,
    pub parity: Parity,
    /// Layer spacing in half wavelengths.
    pub ell: u32,
    /// Layer spacing ℓ/2.
    pub spacing: f64,
}

/// Lattice-constant ranges over which the first diffraction shell alone
/// propagates, rounded outwards to the values quoted for design work.
pub fn design_window(kind: LatticeKind) -> (f64, f64) {
    match kind {
        LatticeKind::Square => (1.0, 2f64.sqrt()),
        LatticeKind::Triangular => (1.15, 2.0),
    }
}

/// All a* in `a_range` with integer Q = ℓ(1 + √(1 − |g₁₀|²/k₀²)), ascending.
pub fn critical_lattice_constants(
    kind: LatticeKind,
    ell: u32,
    a_range: (f64, f64),
) -> Result<Vec<MirrorDesign>> {
    let (lo, hi) = a_range;
    let (window_lo, window_hi) = design_window(kind);
    if !(lo <= hi) || lo < window_lo - 1e-12 || hi > window_hi + 1e-12 {
        return Err(Error::OutsideValidityWindow {
            lo,
            hi,
            window_lo,
            window_hi,
        });
    }
    if ell == 0 {
        return Err(invalid("ell", "layer spacing must be at least one half wavelength"));
    }
    let mut designs: Vec<MirrorDesign> = ((ell + 1)..(2 * ell))
        .filter_map(|q| {
            let c = q as f64 / ell as f64 - 1.0;
            let ratio = (1.0 - c * c).sqrt();
            let a = kind.constant_for_ratio(ratio);
            (a >= lo && a <= hi).then_some(MirrorDesign {
                kind,
                a,
                q,
                parity: Parity::of(q),
                ell,
                spacing: ell as f64 / 2.0,
            })
        })
        .collect();
    designs.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(designs)
}

/// A layer state with its emission split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub label: String,
    pub vector: Vec<f64>,
    /// Total decay rate in units of Γ₀.
    pub rate: f64,
    pub gamma_det: f64,
    pub gamma_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenstructure {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Eigenstates of the dissipative coupling, brightest first.
    pub states: Vec<LayerState>,
    /// The named bright states: `B` for even Q; `B1` (diffraction) and `B2`
    /// (specular, (−1)^{ℓα}/√M) for odd Q.
    pub named: Vec<LayerState>,
}

/// Rank and bright/dark structure of a critical layer matrix.
pub fn classify_eigenstructure(matrix: &IdealizedLayerMatrix, parity: Parity) -> Result<Eigenstructure> {
    let max_real = matrix.max_real();
    if max_real > CRITICAL_TOLERANCE {
        return Err(Error::NotCritical { max_real });
    }
    let m = matrix.layers();
    let gamma_00 = matrix.rates.gamma_00;
    // at criticality 𝒢 = iA with A real symmetric and positive semidefinite
    let a = Mat::from_fn(m, m, |i, j| 0.5 * (matrix.entries[(i, j)].im + matrix.entries[(j, i)].im));
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let mut singular_values: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > RANK_TOLERANCE * top).count();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    let states = order
        .iter()
        .enumerate()
        .map(|(k, &idx)| {
            let mut v: Vec<f64> = (0..m).map(|i| evd.U()[(i, idx)]).collect();
            fix_sign(&mut v);
            let label = if values[idx].abs() > RANK_TOLERANCE * top {
                format!("bright{}", k + 1)
            } else {
                format!("dark{}", k + 1 - rank)
            };
            layer_state(matrix, label, v, 2.0 * gamma_00 * values[idx])
        })
        .collect();

    let norm = 1.0 / (m as f64).sqrt();
    let specular: Vec<f64> = matrix.specular_vector().iter().map(|z| z.re * norm).collect();
    let mut named = Vec::new();
    match parity {
        Parity::Even => named.push(layer_state_from(matrix, "B", specular)),
        Parity::Odd => {
            if let Some(first) = matrix.rates.orders.get(1) {
                let diffraction: Vec<f64> = matrix
                    .heights
                    .iter()
                    .map(|&z| (first.k_z * z).cos() * norm)
                    .collect();
                named.push(layer_state_from(matrix, "B1", diffraction));
            }
            named.push(layer_state_from(matrix, "B2", specular));
        }
    }
    Ok(Eigenstructure {
        rank,
        singular_values,
        states,
        named,
    })
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn layer_state_from(matrix: &IdealizedLayerMatrix, label: &str, v: Vec<f64>) -> LayerState {
    let cv: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let (det, diff) = matrix.channel_split(&cv);
    LayerState {
        label: label.to_string(),
        vector: v,
        rate: det + diff,
        gamma_det: det,
        gamma_diff: diff,
    }
}

fn layer_state(matrix: &IdealizedLayerMatrix, label: String, v: Vec<f64>, rate: f64) -> LayerState {
    let mut s = layer_state_from(matrix, &label, v);
    s.rate = rate;
    s
}

/// Lorentzian reflection of a single layer state:
/// r = (iΓ_det/2)/(−Δ + J − i(Γ_det + Γ_diff)/2).
pub fn ideal_reflection(detuning: f64, gamma_det: f64, gamma_diff: f64, shift: f64) -> Result<Complex64> {
    if !(gamma_det >= 0.0 && gamma_diff >= 0.0) || gamma_det + gamma_diff == 0.0 {
        return Err(invalid(
            "gamma",
            format!("rates must be non-negative and not both zero (det {gamma_det}, diff {gamma_diff})"),
        ));
    }
    let num = 0.5 * I * gamma_det;
    let den = Complex64::new(-detuning + shift, -0.5 * (gamma_det + gamma_diff));
    Ok(num / den)
}

/// Plane-wave reflection of the layer stack:
/// r = −(iΓ₀₀/2) sᵀ(Δ + Γ₀₀𝒢)⁻¹s with s_α = e^{ik₀z_α}.
pub fn stack_reflection(matrix: &IdealizedLayerMatrix, detuning: f64) -> Result<Complex64> {
    let m = matrix.layers();
    let g00 = matrix.rates.gamma_00;
    let a = Mat::from_fn(m, m, |i, j| {
        g00 * matrix.entries[(i, j)] + if i == j { Complex64::new(detuning, 0.0) } else { Complex64::new(0.0, 0.0) }
    });
    let s = matrix.specular_vector();
    let b = Mat::from_fn(m, 1, |i, _| s[i]);
    let x = a.partial_piv_lu().solve(&b);
    let xs: Vec<Complex64> = (0..m).map(|i| x[(i, 0)]).collect();
    let r = -0.5 * I * g00 * linalg::dot(&s, &xs);
    if !(r.re.is_finite() && r.im.is_finite()) {
        return Err(Error::SingularSystem {
            detuning,
            residual: f64::INFINITY,
        });
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealReflectance {
    pub r_max: f64,
    pub detuning: f64,
}

/// Peak of |r|² for the ideal stack over Δ ∈ [−10, 10]Γ₀.
pub fn ideal_max_reflectance(
    lattice: &LatticeSpec,
    layers: usize,
    spacing: f64,
    shifts: Option<&[[f64; 2]]>,
) -> Result<IdealReflectance> {
    let matrix = interlayer_matrix(lattice, layers, spacing, shifts)?;
    let points = 2001;
    let (lo, hi) = (-10.0, 10.0);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..points {
        let r = stack_reflection(&matrix, lo + k as f64 * step)?.norm_sqr();
        if r > best.1 {
            best = (k, r);
        }
    }
    let a = lo + best.0.saturating_sub(1) as f64 * step;
    let b = lo + (best.0 + 1).min(points - 1) as f64 * step;
    let mut err = None;
    let (detuning, r_max) = golden_section_max(
        |d| match stack_reflection(&matrix, d) {
            Ok(r) => r.norm_sqr(),
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        1e-9,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(IdealReflectance {
        r_max: r_max.max(best.1),
        detuning,
    })
}
