//! Shared oracles for the integration tests.

#![allow(dead_code)]

use dipole_mirror::greenfn::InteractionMatrix;
use dipole_mirror::lattice::ArrayGeometry;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;

pub fn random_geometry(rng: &mut ChaCha8Rng, n: usize, box_size: f64, min_sep: f64) -> ArrayGeometry {
    let mut pts: Vec<[f64; 3]> = Vec::new();
    while pts.len() < n {
        let p = [
            rng.random_range(-box_size..box_size),
            rng.random_range(-box_size..box_size),
            rng.random_range(-0.5 * box_size..0.5 * box_size),
        ];
        if pts.iter().all(|q| {
            let d: f64 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum();
            d.sqrt() > min_sep
        }) {
            pts.push(p);
        }
    }
    ArrayGeometry::from_positions(pts).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn dense(m: &InteractionMatrix) -> Vec<Vec<Complex64>> {
    let e = m.entries();
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| e[(i, j)]).collect()).collect()
}

fn matmul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// exp(i G h) by scaling and squaring of a Taylor series.
fn propagator(g: &[Vec<Complex64>], h: f64) -> Vec<Vec<Complex64>> {
    let n = g.len();
    let norm: f64 = g.iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max) * h;
    let squarings = (norm / 0.1).log2().ceil().max(0.0) as u32;
    let step = h / 2f64.powi(squarings as i32);
    let a: Vec<Vec<Complex64>> = g.iter().map(|r| r.iter().map(|z| Complex64::i() * z * step).collect()).collect();
    let mut result: Vec<Vec<Complex64>> =
        (0..n).map(|i| (0..n).map(|j| Complex64::new(f64::from(u8::from(i == j)), 0.0)).collect()).collect();
    let mut term = result.clone();
    for k in 1..=20 {
        term = matmul(&term, &a).into_iter().map(|r| r.into_iter().map(|z| z / k as f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// η(s) = (3/8π) ∫₀^∞ |uᵀ e^{iGt} s|² dt by composite Simpson integration.
pub fn time_domain_efficiency(g: &[Vec<Complex64>], u: &[Complex64], s: &[Complex64]) -> f64 {
    let h = 0.01;
    let p = propagator(g, h);
    let mut x = s.to_vec();
    let emitted = |x: &[Complex64]| u.iter().zip(x).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr();
    let mut samples = vec![emitted(&x)];
    loop {
        x = p.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        samples.push(emitted(&x));
        let left: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        if left < 1e-18 && samples.len() % 2 == 1 {
            break;
        }
        assert!(samples.len() < 10_000_000, "excitation does not decay");
    }
    let m = samples.len() - 1;
    let mut sum = samples[0] + samples[m];
    for (k, f) in samples.iter().enumerate().take(m).skip(1) {
        sum += if k % 2 == 1 { 4.0 * f } else { 2.0 * f };
    }
    3.0 / (8.0 * PI) * sum * h / 3.0
}
