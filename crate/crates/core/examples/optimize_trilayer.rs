//! Local optimization of lattice constant, spacing and waist for the
//! trilayer mirror and memory at N = 127 atoms per layer.

use dipole_mirror::optimize::{optimize_memory, optimize_reflectance, OptimizeOptions};

fn main() -> dipole_mirror::Result<()> {
    let opts = OptimizeOptions::default();
    let r = optimize_reflectance(6, 3, None, &opts)?;
    println!(
        "mirror: ε_R {:.4} → {:.5} (R = {:.4}) at a = {:.4}, d = {:.4}, w = {:.3} after {} evaluations",
        r.initial_epsilon,
        r.epsilon,
        1.0 - r.epsilon,
        r.params.a,
        r.params.d,
        r.params.w,
        r.evals
    );
    let m = optimize_memory(6, 3, None, &opts)?;
    println!(
        "memory: ε_m {:.4} → {:.5} at a = {:.4}, d = {:.4}, w = {:.3}, φ = {:.3} after {} evaluations",
        m.initial_epsilon, m.epsilon, m.params.a, m.params.d, m.params.w, m.params.phi, m.evals
    );
    for run in &m.runs {
        println!("  start a = {:.4} → ε = {:.5} ({} evals)", run.start.a, run.value, run.evals);
    }
    Ok(())
}
