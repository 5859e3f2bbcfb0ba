//! Randomized invariants of the interaction matrix, K matrix, modes and fits.

use dipole_mirror::greenfn::{build_interaction_matrix, Polarization};
use dipole_mirror::lattice::{lattice_stack, ArrayGeometry, LatticeKind};
use dipole_mirror::memory::{k_matrix_for, max_retrieval};
use dipole_mirror::modes::{Direction, ModeField};
use dipole_mirror::optimize::fit_power_law;
use dipole_mirror::response::{reflectance_spectrum, ScanOptions, Solver};
use dipole_mirror::symmetry::Reduction;
use proptest::prelude::*;

fn positions(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        (-1.5f64..1.5, -1.5f64..1.5, -1.0f64..1.0).prop_map(|(x, y, z)| [x, y, z]),
        n,
    )
    .prop_filter("atoms too close", |p| {
        p.iter()
            .enumerate()
            .all(|(i, a)| p[i + 1..].iter().all(|b| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>() > 0.04))
    })
}

fn geometry(p: Vec<[f64; 3]>) -> ArrayGeometry {
    ArrayGeometry::from_positions(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interaction_matrix_is_symmetric_and_passive(p in positions(7), circular in any::<bool>()) {
        let pol = if circular { Polarization::circular_plus() } else { Polarization::linear_x() };
        let m = build_interaction_matrix(&geometry(p), &pol).unwrap();
        prop_assert!(m.symmetry_error() < 1e-14);
        prop_assert!(m.passivity_margin().unwrap() > -1e-10);
    }

    #[test]
    fn k_matrix_is_hermitian_with_bounded_spectrum(p in positions(6), w in 0.6f64..3.0, phi in 0.0f64..6.3) {
        let g = geometry(p);
        let mode = ModeField::two_way_centered(w, phi, &g).unwrap();
        let k = k_matrix_for(&g, &mode, &Polarization::default(), Reduction::Full).unwrap();
        prop_assert!(k.hermiticity_error() < 1e-10);
        for eta in k.efficiency_spectrum().unwrap() {
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&eta), "η = {}", eta);
        }
        let best = max_retrieval(&k).unwrap();
        prop_assert!((best.epsilon + best.eta_max - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_form_matches_direct_solve(p in positions(6), w in 0.6f64..2.0, delta in -3.0f64..3.0) {
        let g = geometry(p);
        let mode = ModeField::gaussian_centered(w, &g).unwrap();
        let opts = |solver| ScanOptions { reduction: Reduction::Full, solver, ..ScanOptions::default() };
        let a = reflectance_spectrum(&g, &mode, &[delta], &opts(Solver::Spectral)).unwrap();
        let b = reflectance_spectrum(&g, &mode, &[delta], &opts(Solver::Direct)).unwrap();
        prop_assert!((a.r[0] - b.r[0]).norm() < 1e-9);
    }

    #[test]
    fn gaussian_flux_is_unity(w in 0.5f64..20.0, z in -50.0f64..50.0, backward in any::<bool>()) {
        let dir = if backward { Direction::Backward } else { Direction::Forward };
        let m = ModeField::gaussian(w, [0.3, -0.2, 1.0], dir).unwrap();
        prop_assert!((m.intensity_integral(z) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_way_flux_is_unity(w in 0.5f64..20.0, z in -20.0f64..20.0, phi in -3.2f64..3.2) {
        let m = ModeField::two_way(w, [0.0; 3], phi).unwrap();
        prop_assert!((m.flux(z) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_law_fit_is_exact(c in 0.01f64..100.0, p in -3.0f64..1.0) {
        let pts: Vec<(f64, f64)> = [7.0, 19.0, 37.0, 61.0, 91.0, 127.0].iter().map(|&n| (n, c * f64::powf(n, p))).collect();
        let fit = fit_power_law(&pts).unwrap();
        prop_assert!((fit.c / c - 1.0).abs() < 1e-10);
        prop_assert!((fit.p - p).abs() < 1e-12);
    }
}

#[test]
fn stacked_lattices_are_passive() {
    for (kind, a, layers, d) in [
        (LatticeKind::Triangular, 1.6, 3, 1.5),
        (LatticeKind::Triangular, 0.5, 2, 0.3),
        (LatticeKind::Square, 1.2, 4, 0.8),
    ] {
        let g = lattice_stack(kind, a, 3, layers, d).unwrap();
        let m = build_interaction_matrix(&g, &Polarization::default()).unwrap();
        assert!(m.symmetry_error() < 1e-14);
        assert!(m.passivity_margin().unwrap() > -1e-10);
    }
}
