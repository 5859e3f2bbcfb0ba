//! Coarse (a, d) reflectance map of a trilayer with the idealized critical
//! points overlaid, rendered as text.

use dipole_mirror::cli::{sweep_grid, Axis, Quantity, Scenario, SweepConfig};
use dipole_mirror::idealized::{critical_lattice_constants, design_window};
use dipole_mirror::lattice::LatticeKind;
use dipole_mirror::optimize::Param;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = Scenario::default();
    scenario.lattice.layers = 3;
    scenario.lattice.size = Some(4);
    let (a_pts, d_pts) = (35, 13);
    scenario.sweep = Some(SweepConfig {
        quantity: Quantity::Reflectance,
        axes: vec![
            Axis { param: Param::D, min: 1.0, max: 2.5, points: d_pts },
            Axis { param: Param::A, min: 1.15, max: 1.99, points: a_pts },
        ],
    });
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = sweep_grid(&scenario, workers, None, false)?;
    let values = table.values();

    let critical: Vec<_> = (2..=5)
        .flat_map(|ell| critical_lattice_constants(LatticeKind::Triangular, ell, design_window(LatticeKind::Triangular)).unwrap())
        .collect();
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    println!("N = 37 per layer; rows d = 2.5 … 1.0, columns a = 1.15 … 1.99; 'O' marks a critical point");
    for row in (0..d_pts).rev() {
        let d = 1.0 + 0.125 * row as f64;
        let line: String = (0..a_pts)
            .map(|col| {
                let a = 1.15 + (1.99 - 1.15) * col as f64 / (a_pts - 1) as f64;
                if critical.iter().any(|c| (c.spacing - d).abs() < 1e-9 && (c.a - a).abs() < 0.0124) {
                    return 'O';
                }
                let r = values[row * a_pts + col];
                if r.is_nan() { 'x' } else { shades[((r * 9.999) as usize).min(9)] }
            })
            .collect();
        println!("d = {d:.3} |{line}|");
    }
    Ok(())
}
