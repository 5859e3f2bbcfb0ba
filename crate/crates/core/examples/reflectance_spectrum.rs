//! Reflection spectrum of a trilayer mirror probed by a focused Gaussian,
//! compared with the monolayer.

use dipole_mirror::lattice::{lattice_stack, LatticeKind};
use dipole_mirror::modes::ModeField;
use dipole_mirror::response::{max_reflectance, reflectance_spectrum, ScanOptions};

fn main() -> dipole_mirror::Result<()> {
    let opts = ScanOptions::default();
    for (layers, a, d, w) in [(1, 1.8268, 0.0, 5.862), (3, 1.5646, 1.5002, 4.988)] {
        let geometry = lattice_stack(LatticeKind::Triangular, a, 6, layers, d)?;
        let mode = ModeField::gaussian_centered(w, &geometry)?;
        let best = max_reflectance(&geometry, &mode, &opts)?;
        println!(
            "M = {layers}, N = {}: R_max = {:.4} at Δ = {:+.4} Γ₀",
            geometry.atoms_per_layer(),
            best.r_max,
            best.detuning
        );
        let grid: Vec<f64> = (0..=8).map(|k| best.detuning - 2.0 + 0.5 * k as f64).collect();
        let spectrum = reflectance_spectrum(&geometry, &mode, &grid, &opts)?;
        for (d, r) in spectrum.detunings.iter().zip(&spectrum.reflectance) {
            println!("  Δ = {d:+.2}  R = {r:.4}  {}", "#".repeat((r * 50.0) as usize));
        }
    }
    Ok(())
}
