//! Infinite-array design rules: critical lattice constants at which the
//! layers couple only dissipatively, their bright states and the resulting
//! plane-wave reflectance.

use dipole_mirror::idealized::{
    classify_eigenstructure, critical_lattice_constants, design_window, ideal_max_reflectance, interlayer_matrix,
};
use dipole_mirror::lattice::{LatticeKind, LatticeSpec};

fn main() -> dipole_mirror::Result<()> {
    let kind = LatticeKind::Triangular;
    for ell in 2..=4 {
        for design in critical_lattice_constants(kind, ell, design_window(kind))? {
            let spec = LatticeSpec::new(kind, design.a)?;
            let m = interlayer_matrix(&spec, 2, design.spacing, None)?;
            let r = ideal_max_reflectance(&spec, 2, design.spacing, None)?;
            println!(
                "d = {:.1}  a* = {:.4}  Q = {} ({:?})  max|Re 𝒢| = {:.1e}  bilayer R_max = {:.4}",
                design.spacing,
                design.a,
                design.q,
                design.parity,
                m.max_real(),
                r.r_max
            );
        }
    }

    let a_star = 6.0 / 15f64.sqrt();
    let spec = LatticeSpec::new(kind, a_star)?;
    let design = critical_lattice_constants(kind, 3, design_window(kind))?
        .into_iter()
        .find(|d| (d.a - a_star).abs() < 1e-12)
        .expect("a* is critical for ℓ = 3");
    for layers in 1..=4 {
        let m = interlayer_matrix(&spec, layers, 1.5, None)?;
        let r = ideal_max_reflectance(&spec, layers, 1.5, None)?;
        print!("M = {layers}: R_max = {:.5}", r.r_max);
        if layers > 1 {
            let e = classify_eigenstructure(&m, design.parity)?;
            print!("  rank {}", e.rank);
            for s in &e.named {
                print!("  {}: Γdet = {:.4}, Γdiff = {:.2e}", s.label, s.gamma_det, s.gamma_diff);
            }
        }
        println!();
    }
    Ok(())
}
