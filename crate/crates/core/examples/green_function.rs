//! Dipole–dipole couplings and collective modes of a small hexagonal patch:
//! the spread of decay rates shows super- and subradiant states.

use dipole_mirror::greenfn::{build_interaction_matrix, collective_modes, projected_green, Polarization};
use dipole_mirror::lattice::{lattice_stack, LatticeKind};

fn main() -> dipole_mirror::Result<()> {
    let pol = Polarization::circular_plus();
    println!("pair coupling e*·G·e along x and along z:");
    for r in [0.1, 0.25, 0.5, 1.0, 2.0] {
        let gx = projected_green([r, 0.0, 0.0], &pol)?;
        let gz = projected_green([0.0, 0.0, r], &pol)?;
        println!("  r = {r:>4}: in-plane {gx:.4}   axial {gz:.4}");
    }

    for a in [0.3, 0.8, 1.6] {
        let geometry = lattice_stack(LatticeKind::Triangular, a, 3, 1, 0.0)?;
        let matrix = build_interaction_matrix(&geometry, &pol)?;
        let modes = collective_modes(&matrix)?;
        let rates = modes.decay_rates();
        let max = rates.iter().copied().fold(f64::MIN, f64::max);
        let min = rates.iter().copied().fold(f64::MAX, f64::min);
        println!(
            "a = {a}: N = {}, Γ range [{min:.2e}, {max:.3}] Γ₀, Σ Γ / N = {:.6}, completeness error {:.1e}",
            geometry.len(),
            rates.iter().sum::<f64>() / geometry.len() as f64,
            modes.completeness_error()
        );
    }
    Ok(())
}
