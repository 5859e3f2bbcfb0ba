//! Optimized reflectance error versus atoms per layer with a power-law fit.
//!
//! `cargo run --example scaling_fit -- 3` fits the trilayer over
//! N = 37…271; add `--extended` to continue to N = 817 and fit the upper
//! half separately, where the local exponent has steepened.

use dipole_mirror::optimize::{fit_power_law, scaling_study, OptimizationProblem, OptimizeOptions};

fn main() -> dipole_mirror::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let layers = args.iter().find_map(|a| a.parse().ok()).unwrap_or(2);
    let last = if args.iter().any(|a| a == "--extended") { 16 } else { 9 };
    let sizes: Vec<usize> = (3..=last).collect();

    let series = scaling_study(&OptimizationProblem::reflectance(3, layers), &sizes, &OptimizeOptions::default())?;
    for p in &series.points {
        println!("N = {:>3}: ε_R = {:.5}  (a = {:.4}, d = {:.4}, w = {:.3})", p.n, p.epsilon, p.params.a, p.params.d, p.params.w);
    }
    let pairs = series.pairs();
    let fit = fit_power_law(&pairs[..7])?;
    println!("N = 37…271: ε_R ≈ {:.2} N^{:.3} (rms log residual {:.3})", fit.c, fit.p, fit.residual);
    if pairs.len() > 7 {
        let tail = fit_power_law(&pairs[7..])?;
        println!("N = {}…{}: ε_R ≈ {:.2} N^{:.3}", pairs[7].0, pairs[pairs.len() - 1].0, tail.c, tail.p);
    }
    Ok(())
}
