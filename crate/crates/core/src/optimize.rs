//! Local optimization of stack parameters, scaling studies and power-law fits.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::greenfn::Polarization;
use crate::lattice::{hexagonal_number, lattice_stack, LatticeKind};
use crate::memory::optimal_retrieval;
use crate::modes::ModeField;
use crate::response::{max_reflectance, ScanOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the simplex spans less than this fraction of every bound
    /// width and the vertex values agree to `f_tolerance`.
    pub tolerance: f64,
    pub f_tolerance: f64,
    /// Initial simplex edge as a fraction of each bound width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            tolerance: 1e-4,
            f_tolerance: 1e-9,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Weight of the quadratic penalty on out-of-bounds trial points, per
/// squared bound width.
const PENALTY: f64 = 1e3;

/// Minimize `objective` inside box `bounds` with the Nelder–Mead simplex.
///
/// Trial points outside the box are scored at their projection onto the box
/// plus a quadratic penalty in the violation, so the objective is only ever
/// evaluated at feasible points. The returned point is the best feasible
/// point seen.
pub fn nelder_mead(
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult> {
    let dim = x0.len();
    if bounds.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bounds.len(),
        });
    }
    for (k, (&x, &(lo, hi))) in x0.iter().zip(bounds).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("bounds", format!("bound {k} is not a finite increasing interval")));
        }
        if !(x >= lo && x <= hi) {
            return Err(invalid("x0", format!("component {k} = {x} lies outside [{lo}, {hi}]")));
        }
    }

    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let mut evals = 0usize;
    let mut best = (x0.to_vec(), f64::INFINITY);
    let mut score = |x: &[f64], evals: &mut usize, best: &mut (Vec<f64>, f64)| -> Result<f64> {
        let clamped: Vec<f64> = x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        let penalty: f64 = x
            .iter()
            .zip(&clamped)
            .zip(&widths)
            .map(|((v, c), w)| ((v - c) / w).powi(2))
            .sum::<f64>()
            * PENALTY;
        let f = objective(&clamped)?;
        *evals += 1;
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective { point: clamped });
        }
        if f < best.1 {
            *best = (clamped, f);
        }
        Ok(f + penalty)
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..dim {
        let mut v = x0.to_vec();
        let step = opts.initial_step * widths[k];
        // step towards the interior so the initial simplex is feasible
        v[k] = if v[k] + step <= bounds[k].1 { v[k] + step } else { v[k] - step };
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(dim + 1);
    for v in &simplex {
        values.push(score(v, &mut evals, &mut best)?);
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_x = (1..=dim)
            .flat_map(|i| (0..dim).map(move |k| (i, k)))
            .map(|(i, k)| (simplex[i][k] - simplex[0][k]).abs() / widths[k])
            .fold(0.0, f64::max);
        let spread_f = values[dim] - values[0];
        if spread_x <= opts.tolerance && spread_f <= opts.f_tolerance.max(opts.f_tolerance * values[0].abs()) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = score(&xr, &mut evals, &mut best)?;
        if fr < values[0] {
            let xe = along(gamma);
            let fe = score(&xe, &mut evals, &mut best)?;
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[dim] {
            let xc = along(rho);
            let fc = score(&xc, &mut evals, &mut best)?;
            (xc, fc.min(f64::INFINITY))
        } else {
            let xc = along(-rho);
            let fc = score(&xc, &mut evals, &mut best)?;
            (xc, fc)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            values[i] = score(&shrunk, &mut evals, &mut best)?;
            simplex[i] = shrunk;
        }
    }
    Ok(NelderMeadResult {
        x: best.0,
        f: best.1,
        evals,
        converged,
    })
}

/// The quantity being minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// ε_R = 1 − R_max for a forward Gaussian focused at the stack centre.
    ReflectanceError,
    /// ε_m = 1 − η_max for a two-way Gaussian focused at the stack centre.
    RetrievalError,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::ReflectanceError => "reflectance_error",
            Objective::RetrievalError => "retrieval_error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    /// Lattice constant.
    A,
    /// Layer spacing.
    D,
    /// Beam waist.
    W,
    /// Relative phase of the two-way mode.
    Phi,
}

/// A point in the {a, d, w, φ} parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub d: f64,
    pub w: f64,
    pub phi: f64,
}

impl Params {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::A => self.a,
            Param::D => self.d,
            Param::W => self.w,
            Param::Phi => self.phi,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::A => self.a = v,
            Param::D => self.d = v,
            Param::W => self.w = v,
            Param::Phi => self.phi = v,
        }
    }
}

/// Fixed context plus free parameters of one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub objective: Objective,
    pub kind: LatticeKind,
    /// Patch size: hexagon rings (triangular) or sites per side (square).
    pub size: usize,
    pub layers: usize,
    pub free: Vec<Param>,
    pub bounds: Vec<(f64, f64)>,
    pub x0: Params,
    pub scan: ScanOptions,
}

impl OptimizationProblem {
    /// Reflectance problem over {a, d, w} (or {a, w} for one layer) near the
    /// first selectively radiant configuration of a triangular stack.
    pub fn reflectance(rings: usize, layers: usize) -> Self {
        let n = hexagonal_number(rings) as f64;
        let a = 1.6;
        Self::triangular(
            Objective::ReflectanceError,
            rings,
            layers,
            Params {
                a,
                d: 1.5,
                w: n.sqrt() * a / 3.0,
                phi: 0.0,
            },
        )
    }

    /// Retrieval problem over {a, d, w, φ} (or {a, w, φ} for one layer).
    pub fn memory(rings: usize, layers: usize) -> Self {
        let n = hexagonal_number(rings) as f64;
        let a = 1.8;
        Self::triangular(
            Objective::RetrievalError,
            rings,
            layers,
            Params {
                a,
                d: 1.4,
                w: n.sqrt() * a / 3.0,
                phi: 0.0,
            },
        )
    }

    fn triangular(objective: Objective, rings: usize, layers: usize, x0: Params) -> Self {
        let mut problem = Self {
            objective,
            kind: LatticeKind::Triangular,
            size: rings,
            layers,
            free: Vec::new(),
            bounds: Vec::new(),
            x0,
            scan: ScanOptions::default(),
        };
        problem.reset_bounds();
        problem
    }

    /// Default free set and bounds: a within the single-shell window, d in
    /// [1, 2]λ₀, w from the paraxial floor to 0.6√N·a_max, φ over one period.
    pub fn reset_bounds(&mut self) {
        let (lo, hi) = self.kind.single_shell_window();
        let a_bounds = (lo + 0.005, hi - 0.01);
        let n = self.atoms_per_layer() as f64;
        let w_bounds = (0.5, (0.6 * n.sqrt() * a_bounds.1).max(1.0));
        let mut free = vec![(Param::A, a_bounds)];
        if self.layers > 1 {
            free.push((Param::D, (1.0, 2.0)));
        }
        free.push((Param::W, w_bounds));
        if self.objective == Objective::RetrievalError {
            free.push((Param::Phi, (-std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI)));
        }
        self.free = free.iter().map(|f| f.0).collect();
        self.bounds = free.iter().map(|f| f.1).collect();
    }

    pub fn atoms_per_layer(&self) -> usize {
        match self.kind {
            LatticeKind::Triangular => hexagonal_number(self.size),
            LatticeKind::Square => self.size * self.size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.len() != self.bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: self.free.len(),
                actual: self.bounds.len(),
            });
        }
        if self.layers == 0 {
            return Err(invalid("layers", "at least one layer is required"));
        }
        for (p, &(lo, hi)) in self.free.iter().zip(&self.bounds) {
            let v = self.x0.get(*p);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid("bounds", format!("bounds for {p:?} are not finite and increasing")));
            }
            if !(v >= lo && v <= hi) {
                return Err(invalid("x0", format!("{p:?} = {v} lies outside [{lo}, {hi}]")));
            }
        }
        self.scan.validate()
    }

    fn point(&self, x: &[f64]) -> Params {
        let mut p = self.x0;
        for (param, v) in self.free.iter().zip(x) {
            p.set(*param, *v);
        }
        p
    }

    fn vector(&self, p: &Params) -> Vec<f64> {
        self.free.iter().map(|&q| p.get(q)).collect()
    }

    /// Objective value at `p`.
    pub fn evaluate(&self, p: &Params) -> Result<f64> {
        let geometry = lattice_stack(self.kind, p.a, self.size, self.layers, p.d)?;
        let pol: Polarization = self.scan.polarization;
        match self.objective {
            Objective::ReflectanceError => {
                let mode = ModeField::gaussian_centered(p.w, &geometry)?;
                Ok(max_reflectance(&geometry, &mode, &self.scan)?.epsilon)
            }
            Objective::RetrievalError => {
                let mode = ModeField::two_way_centered(p.w, p.phi, &geometry)?;
                let reduction = self.scan.reduction;
                Ok(optimal_retrieval(&geometry, &mode, &pol, reduction)?.epsilon)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub nelder_mead: NelderMeadOptions,
    /// Total number of local runs: one from x0, the rest from jittered starts.
    pub starts: usize,
    /// Relative jitter of the extra starts.
    pub jitter: f64,
    pub seed: u64,
    /// Number of φ values tried at x0 before optimizing retrieval.
    pub phase_scan: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            nelder_mead: NelderMeadOptions::default(),
            starts: 3,
            jitter: 0.03,
            seed: 0,
            phase_scan: 8,
        }
    }
}

/// One local run of a multi-start optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub start: Params,
    pub end: Params,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub objective: Objective,
    pub params: Params,
    pub epsilon: f64,
    /// Objective at the supplied x0, before any phase scan.
    pub initial_epsilon: f64,
    pub evals: usize,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
}

/// Multi-start Nelder–Mead on `problem`.
pub fn optimize(problem: &OptimizationProblem, opts: &OptimizeOptions) -> Result<OptimizationOutcome> {
    problem.validate()?;
    if opts.starts == 0 {
        return Err(invalid("starts", "at least one start is required"));
    }
    let initial_epsilon = problem.evaluate(&problem.x0)?;
    let mut evals = 1;
    let mut x0 = problem.x0;
    if problem.objective == Objective::RetrievalError && problem.free.contains(&Param::Phi) && opts.phase_scan > 1 {
        let k = problem.free.iter().position(|&p| p == Param::Phi).unwrap();
        let (lo, hi) = problem.bounds[k];
        let mut best = (x0.phi, initial_epsilon);
        for j in 0..opts.phase_scan {
            let phi = lo + (hi - lo) * j as f64 / opts.phase_scan as f64;
            let mut trial = x0;
            trial.phi = phi;
            let f = problem.evaluate(&trial)?;
            evals += 1;
            if f < best.1 {
                best = (phi, f);
            }
        }
        x0.phi = best.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut runs = Vec::with_capacity(opts.starts);
    for s in 0..opts.starts {
        let mut start = x0;
        if s > 0 {
            for (p, &(lo, hi)) in problem.free.iter().zip(&problem.bounds) {
                let v = start.get(*p);
                let jittered = if *p == Param::Phi {
                    v + opts.jitter * (hi - lo) * rng.random_range(-1.0..=1.0)
                } else {
                    v * (1.0 + opts.jitter * rng.random_range(-1.0..=1.0))
                };
                start.set(*p, jittered.clamp(lo, hi));
            }
        }
        let res = nelder_mead(
            |x| problem.evaluate(&problem.point(x)),
            &problem.vector(&start),
            &problem.bounds,
            &opts.nelder_mead,
        )?;
        evals += res.evals;
        runs.push(RunRecord {
            start,
            end: problem.point(&res.x),
            value: res.f,
            evals: res.evals,
            converged: res.converged,
        });
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one run");
    let (params, epsilon) = if best.value <= initial_epsilon {
        (best.end, best.value)
    } else {
        (problem.x0, initial_epsilon)
    };
    Ok(OptimizationOutcome {
        objective: problem.objective,
        params,
        epsilon,
        initial_epsilon,
        evals,
        seed: opts.seed,
        runs,
    })
}

/// Optimize {a, d, w} for peak reflectance of a hexagonal stack.
pub fn optimize_reflectance(
    rings: usize,
    layers: usize,
    x0: Option<Params>,
    opts: &OptimizeOptions,
) -> Result<OptimizationOutcome> {
    let mut problem = OptimizationProblem::reflectance(rings, layers);
    if let Some(x) = x0 {
        problem.x0 = x;
    }
    optimize(&problem, opts)
}

/// Optimize {a, d, w, φ} for retrieval efficiency of a hexagonal stack.
pub fn optimize_memory(
    rings: usize,
    layers: usize,
    x0: Option<Params>,
    opts: &OptimizeOptions,
) -> Result<OptimizationOutcome> {
    let mut problem = OptimizationProblem::memory(rings, layers);
    if let Some(x) = x0 {
        problem.x0 = x;
    }
    optimize(&problem, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: usize,
    pub n: usize,
    pub epsilon: f64,
    pub params: Params,
    pub evals: usize,
}

/// Optimized error as a function of atoms per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub objective: Objective,
    pub layers: usize,
    pub points: Vec<ScalingPoint>,
}

impl ScalingSeries {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.n as f64, p.epsilon)).collect()
    }

    /// Largest relative increase of ε between consecutive points.
    pub fn worst_increase(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].epsilon - w[0].epsilon) / w[0].epsilon)
            .fold(0.0, f64::max)
    }
}

/// Optimize `template` at each patch size in `sizes`, warm-starting each size
/// from the previous optimum with the waist rescaled by √(N/N_prev).
pub fn scaling_study(
    template: &OptimizationProblem,
    sizes: &[usize],
    opts: &OptimizeOptions,
) -> Result<ScalingSeries> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sizes", "patch sizes must be strictly increasing"));
    }
    let mut points: Vec<ScalingPoint> = Vec::with_capacity(sizes.len());
    let mut warm: Option<(Params, usize)> = None;
    for (k, &size) in sizes.iter().enumerate() {
        let mut problem = template.clone();
        problem.size = size;
        problem.reset_bounds();
        let n = problem.atoms_per_layer();
        let mut run_opts = *opts;
        run_opts.seed = opts.seed.wrapping_add(k as u64);
        match warm {
            Some((p, n_prev)) => {
                let mut x0 = p;
                x0.w *= (n as f64 / n_prev as f64).sqrt();
                problem.x0 = clamp_into(&problem, x0);
                // the relative phase has already been chosen
                run_opts.phase_scan = 0;
            }
            None => {
                let scale = (n as f64 / template.atoms_per_layer() as f64).sqrt();
                let mut x0 = template.x0;
                x0.w *= scale;
                problem.x0 = clamp_into(&problem, x0);
            }
        }
        let out = optimize(&problem, &run_opts)?;
        warm = Some((out.params, n));
        points.push(ScalingPoint {
            size,
            n,
            epsilon: out.epsilon,
            params: out.params,
            evals: out.evals,
        });
    }
    Ok(ScalingSeries {
        objective: template.objective,
        layers: template.layers,
        points,
    })
}

fn clamp_into(problem: &OptimizationProblem, mut p: Params) -> Params {
    for (q, &(lo, hi)) in problem.free.iter().zip(&problem.bounds) {
        p.set(*q, p.get(*q).clamp(lo, hi));
    }
    p
}

/// ε ≈ c·N^p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub p: f64,
    /// Root-mean-square residual in ln ε.
    pub residual: f64,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.c * n.powf(self.p)
    }
}

/// Least-squares line through (ln N, ln ε).
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::InvalidFitData {
            needed: 3,
            reason: format!("got {} points", points.len()),
        });
    }
    if let Some(&(n, e)) = points.iter().find(|(n, e)| !(*n > 0.0 && *e > 0.0 && n.is_finite() && e.is_finite())) {
        return Err(Error::InvalidFitData {
            needed: 3,
            reason: format!("point (N = {n}, ε = {e}) is not positive"),
        });
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidFitData {
            needed: 3,
            reason: "all N are equal".into(),
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    let ln_c = my - p * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - ln_c - p * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(PowerLawFit {
        c: ln_c.exp(),
        p,
        residual,
    })
}
