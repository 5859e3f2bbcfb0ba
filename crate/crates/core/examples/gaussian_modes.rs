//! Paraxial Gaussian and two-way detection modes: flux normalization,
//! Rayleigh-range broadening and the standing-wave pattern on the axis.

use dipole_mirror::lattice::{lattice_stack, LatticeKind};
use dipole_mirror::modes::{Direction, ModeField};

fn main() -> dipole_mirror::Result<()> {
    let w = 2.0;
    let beam = ModeField::gaussian(w, [0.0; 3], Direction::Forward)?;
    let z_r = std::f64::consts::PI * w * w;
    for z in [0.0, 0.5 * z_r, z_r, 3.0 * z_r] {
        println!(
            "z = {z:>6.2}: ∫|E|² dA = {:.8}  on-axis |E|² = {:.5}",
            beam.intensity_integral(z),
            beam.evaluate([0.0, 0.0, z]).norm_sqr()
        );
    }

    let two_way = ModeField::two_way(w, [0.0; 3], 0.0)?;
    println!("two-way flux {:.8}", two_way.flux(0.0));
    for z in [0.0, 0.125, 0.25, 0.375, 0.5] {
        println!("  |E(0,0,{z})|² = {:.5}", two_way.evaluate([0.0, 0.0, z]).norm_sqr());
    }

    let geometry = lattice_stack(LatticeKind::Triangular, 1.6, 6, 3, 1.5)?;
    let mode = ModeField::gaussian_centered(6.0, &geometry)?;
    let v = mode.sample(&geometry);
    // each atom samples one unit cell of area √3a²/2, so Σ|E|²·A/M estimates the flux
    let cell = 3f64.sqrt() / 2.0 * 1.6 * 1.6;
    let total: f64 = v.amplitudes().iter().map(|c| c.norm_sqr()).sum();
    println!("sampled {} atoms, Σ|E|²·A_cell/M = {:.4}", v.len(), total * cell / 3.0);
    Ok(())
}
