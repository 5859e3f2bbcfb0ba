//! Retrieval of a stored spin wave into a two-way Gaussian: optimal
//! efficiency from the K matrix versus random and uniform spin waves.

use dipole_mirror::greenfn::Polarization;
use dipole_mirror::lattice::{lattice_stack, LatticeKind};
use dipole_mirror::memory::{k_matrix_for, max_retrieval, retrieval_for_spinwave};
use dipole_mirror::modes::ModeField;
use dipole_mirror::symmetry::Reduction;
use num_complex::Complex64;

fn main() -> dipole_mirror::Result<()> {
    let geometry = lattice_stack(LatticeKind::Triangular, 1.776, 3, 3, 1.357)?;
    let mode = ModeField::two_way_centered(2.6, 0.0, &geometry)?;
    // the full basis keeps K indexed by atom so arbitrary spin waves apply
    let k = k_matrix_for(&geometry, &mode, &Polarization::default(), Reduction::Full)?;
    let best = max_retrieval(&k)?;
    println!("N = {} × 3: η_max = {:.5}, ε_m = {:.5}", geometry.atoms_per_layer(), best.eta_max, best.epsilon);

    let n = geometry.len();
    let uniform = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    println!("uniform spin wave: η = {:.5}", retrieval_for_spinwave(&k, &uniform)?);

    // a cheap deterministic pseudo-random spin wave
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut s: Vec<Complex64> = (0..n).map(|_| Complex64::new(next(), next())).collect();
    let norm = s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    s.iter_mut().for_each(|c| *c /= norm);
    println!("random spin wave:  η = {:.5}", retrieval_for_spinwave(&k, &s)?);

    let spectrum = k.efficiency_spectrum()?;
    println!("top efficiencies: {:.4?}", &spectrum[spectrum.len() - 4..]);
    Ok(())
}
