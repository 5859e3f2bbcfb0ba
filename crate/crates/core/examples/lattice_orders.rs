//! Diffraction orders and per-channel decay rates of a triangular lattice
//! as the lattice constant crosses the first-shell threshold.

use dipole_mirror::idealized::channel_rates;
use dipole_mirror::lattice::{enumerate_orders, LatticeKind, LatticeSpec};

fn main() -> dipole_mirror::Result<()> {
    let (lo, hi) = LatticeKind::Triangular.single_shell_window();
    println!("single-shell window: ({lo:.4}, {hi:.4}) λ₀");
    println!("{:>6} {:>10} {:>11} {:>9} {:>9} {:>9}", "a", "|g10|/k0", "propagating", "Γ00", "Γdiff", "Γ00/Γtot");
    for a in [0.8, 1.1, 1.3, 1.549, 1.8, 1.95] {
        let spec = LatticeSpec::new(LatticeKind::Triangular, a)?;
        let open = enumerate_orders(&spec, 2).iter().filter(|o| o.propagating).count();
        let rates = channel_rates(&spec)?;
        println!(
            "{a:>6.3} {:>10.4} {open:>11} {:>9.4} {:>9.4} {:>9.4}",
            spec.first_shell_ratio(),
            rates.gamma_00,
            rates.gamma_diff,
            rates.branching_ratio()
        );
    }

    // rates of the individual first-shell orders at the mirror lattice constant
    let spec = LatticeSpec::new(LatticeKind::Triangular, 6.0 / 15f64.sqrt())?;
    for o in channel_rates(&spec)?.orders {
        println!("({:>2},{:>2})  k_z = {:.4}  Γ/Γ00 = {:.4}", o.m, o.n, o.k_z, o.relative);
    }
    Ok(())
}
