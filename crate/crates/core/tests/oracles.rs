//! Independent numerical oracles for the response and memory pipelines.

use dipole_mirror::greenfn::{build_interaction_matrix, Polarization};
use dipole_mirror::idealized::channel_rates;
use dipole_mirror::lattice::{lattice_stack, ArrayGeometry, LatticeKind, LatticeSpec};
use dipole_mirror::memory::{k_matrix_for, max_retrieval, optimal_retrieval, retrieval_for_spinwave};
use dipole_mirror::modes::{default_plane_wave_lattice, validate_plane_wave_limit, ModeField};
use dipole_mirror::response::{max_reflectance, reflectance_spectrum, ScanOptions, Solver};
use dipole_mirror::symmetry::Reduction;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::{dense, random_geometry, random_unit, time_domain_efficiency};

fn full(solver: Solver) -> ScanOptions {
    ScanOptions {
        reduction: Reduction::Full,
        solver,
        ..ScanOptions::default()
    }
}

#[test]
fn time_domain_retrieval_matches_k_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pol = Polarization::default();
    let mut cases: Vec<ArrayGeometry> = (0..3).map(|_| random_geometry(&mut rng, 6, 1.2, 0.45)).collect();
    cases.push(lattice_stack(LatticeKind::Square, 1.2, 2, 2, 0.9).unwrap());
    cases.push(lattice_stack(LatticeKind::Triangular, 1.5, 1, 1, 0.0).unwrap());
    for geometry in cases {
        assert!(geometry.len() <= 8);
        let c = geometry.center();
        let mode = ModeField::two_way(1.1, c, 0.4).unwrap();
        let k = k_matrix_for(&geometry, &mode, &pol, Reduction::Full).unwrap();
        let g = dense(&build_interaction_matrix(&geometry, &pol).unwrap());
        let u = mode.sample(&geometry).amplitudes().to_vec();
        let best = max_retrieval(&k).unwrap();
        let mut spinwaves = vec![best.spinwave.clone()];
        spinwaves.extend((0..3).map(|_| random_unit(&mut rng, geometry.len())));
        for s in spinwaves {
            let oracle = time_domain_efficiency(&g, &u, &s);
            let eta = retrieval_for_spinwave(&k, &s).unwrap();
            assert!((oracle - eta).abs() < 1e-6, "N = {}: oracle {oracle} vs K {eta}", geometry.len());
        }
    }
}

#[test]
fn random_spinwaves_never_beat_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let geometry = lattice_stack(LatticeKind::Triangular, 1.7, 2, 2, 1.3).unwrap();
    let mode = ModeField::two_way_centered(1.8, 0.9, &geometry).unwrap();
    let k = k_matrix_for(&geometry, &mode, &Polarization::default(), Reduction::Full).unwrap();
    let best = max_retrieval(&k).unwrap();
    assert!(best.eta_max > 0.0 && best.eta_max <= 1.0);
    let at_optimum = retrieval_for_spinwave(&k, &best.spinwave).unwrap();
    assert!((at_optimum - best.eta_max).abs() < 1e-12);
    for _ in 0..1000 {
        let s = random_unit(&mut rng, geometry.len());
        let eta = retrieval_for_spinwave(&k, &s).unwrap();
        assert!(eta >= -1e-12 && eta <= best.eta_max + 1e-12, "η = {eta} > η_max = {}", best.eta_max);
    }
}

#[test]
fn spectral_and_direct_reflection_agree() {
    let grid: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
    let mut geometries = vec![
        lattice_stack(LatticeKind::Triangular, 1.6, 5, 2, 1.5).unwrap(),
        lattice_stack(LatticeKind::Triangular, 1.55, 4, 3, 1.5).unwrap(),
        lattice_stack(LatticeKind::Square, 0.7, 8, 3, 0.4).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    geometries.extend((0..20).map(|_| random_geometry(&mut rng, 6, 1.0, 0.2)));
    for geometry in geometries {
        assert!(geometry.len() <= 200);
        let mode = ModeField::gaussian_centered(1.5, &geometry).unwrap();
        let a = reflectance_spectrum(&geometry, &mode, &grid, &full(Solver::Spectral)).unwrap();
        let b = reflectance_spectrum(&geometry, &mode, &grid, &full(Solver::Direct)).unwrap();
        for (x, y) in a.r.iter().zip(&b.r) {
            assert!((x - y).norm() < 1e-9, "N = {}: {x} vs {y}", geometry.len());
        }
    }
}

#[test]
fn symmetric_sector_matches_full_problem() {
    let geometry = lattice_stack(LatticeKind::Triangular, 1.56, 5, 3, 1.5).unwrap();
    let mode = ModeField::gaussian_centered(4.0, &geometry).unwrap();
    let reduced = max_reflectance(&geometry, &mode, &ScanOptions::default()).unwrap();
    let full_r = max_reflectance(&geometry, &mode, &full(Solver::Spectral)).unwrap();
    assert!((reduced.r_max - full_r.r_max).abs() < 1e-10);

    let two_way = ModeField::two_way_centered(4.0, 0.3, &geometry).unwrap();
    let pol = Polarization::default();
    let a = optimal_retrieval(&geometry, &two_way, &pol, Reduction::Auto).unwrap();
    let b = optimal_retrieval(&geometry, &two_way, &pol, Reduction::Full).unwrap();
    assert!((a.eta_max - b.eta_max).abs() < 1e-10);
    let overlap: Complex64 = a.spinwave.iter().zip(&b.spinwave).map(|(x, y)| x.conj() * y).sum();
    assert!((overlap.norm() - 1.0).abs() < 1e-8);
}

#[test]
fn mirror_image_has_the_same_response() {
    let geometry = lattice_stack(LatticeKind::Triangular, 1.6, 4, 3, 1.4).unwrap();
    let mirrored = geometry.mirrored_z();
    let mode = ModeField::gaussian_centered(3.0, &geometry).unwrap();
    let grid = [-1.0, -0.2, 0.0, 0.3, 1.5];
    let opts = full(Solver::Direct);
    let a = reflectance_spectrum(&geometry, &mode, &grid, &opts).unwrap();
    let b = reflectance_spectrum(&mirrored, &mode.mirrored_z(), &grid, &opts).unwrap();
    for (x, y) in a.r.iter().zip(&b.r) {
        assert!((x - y).norm() < 1e-10);
    }
}

#[test]
fn plane_wave_limit_improves_with_size() {
    let lattice = default_plane_wave_lattice();
    let errors: Vec<f64> = [6, 9, 12]
        .iter()
        .map(|&rings| validate_plane_wave_limit(&lattice, 1, 0.0, rings).unwrap().error)
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.05);
}

#[test]
fn large_subwavelength_array_has_lorentzian_line() {
    // R(Δ) of a wide beam on a dense array approaches |Γ/2|²/(Δ² + Γ²/4)
    let lattice = default_plane_wave_lattice();
    let check = validate_plane_wave_limit(&lattice, 1, 0.0, 12).unwrap();
    assert!(check.r_ideal > 0.999);
    let geometry = lattice_stack(LatticeKind::Triangular, lattice.a, 12, 1, 0.0).unwrap();
    let mode = ModeField::gaussian_centered(check.waist, &geometry).unwrap();
    let best = max_reflectance(&geometry, &mode, &ScanOptions::default()).unwrap();
    let gamma = channel_rates(&lattice).unwrap().total();
    let grid = [best.detuning - gamma, best.detuning + gamma];
    let s = reflectance_spectrum(&geometry, &mode, &grid, &ScanOptions::default()).unwrap();
    for r in s.reflectance {
        assert!((r / best.r_max - 0.2).abs() < 0.05, "half-width ratio {}", r / best.r_max);
    }
}

#[test]
fn uniform_excitation_decays_at_the_channel_rate() {
    // the Rayleigh quotient 2 Im(uᵀGu) of the uniform spin wave on a large
    // patch approaches the infinite-array total rate Γ00 + Γdiff
    let pol = Polarization::default();
    for a in [0.8, 1.3, 6.0 / 15f64.sqrt(), 1.8] {
        let geometry = lattice_stack(LatticeKind::Triangular, a, 12, 1, 0.0).unwrap();
        let g = build_interaction_matrix(&geometry, &pol).unwrap();
        let n = geometry.len();
        let e = g.entries();
        let total: Complex64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| e[(i, j)]).sum();
        let rayleigh = 2.0 * total.im / n as f64;
        let ideal = channel_rates(&LatticeSpec::new(LatticeKind::Triangular, a).unwrap()).unwrap().total();
        assert!((rayleigh / ideal - 1.0).abs() < 0.03, "a = {a}: {rayleigh} vs {ideal}");
    }
}
