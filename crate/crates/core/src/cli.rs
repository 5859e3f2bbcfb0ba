//! Scenario-driven command-line front end.
//!
//! A scenario is a TOML (or JSON) file describing one lattice stack, one
//! optical mode and the task-specific settings. Every output file carries
//! the SHA-256 of the canonical scenario JSON and the library version.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::greenfn::{build_interaction_matrix, collective_modes};
use crate::idealized::{
    channel_rates, classify_eigenstructure, critical_lattice_constants, design_window, ideal_max_reflectance,
    interlayer_matrix,
};
use crate::lattice::{generate_patch, rings_for_count, stack_layers, ArrayGeometry, LatticeKind, LatticeSpec};
use crate::memory::{k_matrix_for, max_retrieval};
use crate::modes::{default_plane_wave_lattice, validate_plane_wave_limit, Direction, ModeField, MIN_WAIST};
use crate::optimize::{
    fit_power_law, optimize, scaling_study, NelderMeadOptions, Objective, OptimizationProblem, OptimizeOptions,
    Param, Params,
};
use crate::response::{max_reflectance, reflectance_spectrum, ScanOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DIPOLE_MIRROR_OUT";
pub const DEFAULT_OUT_DIR: &str = "dipole-mirror-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Layer spacings accepted without `allow_out_of_window`.
pub const SPACING_WINDOW: (f64, f64) = (0.5, 3.0);
/// Largest patch accepted, in atoms per layer.
pub const MAX_ATOMS_PER_LAYER: usize = 2000;
pub const MAX_LAYERS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reflect,
    Memory,
    Idealized,
    Optimize,
    Scaling,
    Sweep,
    Validate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Reflect => "reflect",
            Task::Memory => "memory",
            Task::Idealized => "idealized",
            Task::Optimize => "optimize",
            Task::Scaling => "scaling",
            Task::Sweep => "sweep",
            Task::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    /// Hexagon rings (triangular) or sites per side (square).
    pub size: Option<usize>,
    /// Atoms per layer; must be a centered hexagonal or square number.
    pub n: Option<usize>,
    pub layers: usize,
    pub a: f64,
    pub d: f64,
    pub shifts: Option<Vec<[f64; 2]>>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            kind: LatticeKind::Triangular,
            size: None,
            n: None,
            layers: 1,
            a: 1.6,
            d: 1.5,
            shifts: None,
        }
    }
}

impl LatticeConfig {
    pub const DEFAULT_SIZE: usize = 6;

    pub fn resolved_size(&self) -> CliResult<usize> {
        let from_n = match self.n {
            None => None,
            Some(n) => Some(size_for_count(self.kind, n).ok_or_else(|| {
                schema(format!("lattice.n = {n} is not an admissible {:?} patch size", self.kind))
            })?),
        };
        match (self.size, from_n) {
            (Some(s), Some(t)) if s != t => Err(schema(format!(
                "lattice.size = {s} and lattice.n = {} disagree",
                self.n.unwrap_or(0)
            ))),
            (Some(s), _) => Ok(s),
            (None, Some(t)) => Ok(t),
            (None, None) => Ok(Self::DEFAULT_SIZE),
        }
    }

    pub fn atoms_per_layer(&self) -> CliResult<usize> {
        let s = self.resolved_size()?;
        Ok(count_for_size(self.kind, s))
    }
}

fn count_for_size(kind: LatticeKind, size: usize) -> usize {
    match kind {
        LatticeKind::Triangular => crate::lattice::hexagonal_number(size),
        LatticeKind::Square => size * size,
    }
}

fn size_for_count(kind: LatticeKind, n: usize) -> Option<usize> {
    match kind {
        LatticeKind::Triangular => rings_for_count(n),
        LatticeKind::Square => {
            let s = (n as f64).sqrt().round() as usize;
            (s * s == n && s > 0).then_some(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Gaussian,
    TwoWay,
    PlaneWave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    /// Defaults to `gaussian` for reflectance tasks and `two_way` for memory.
    pub kind: Option<ModeKind>,
    /// Explicit waist; otherwise `waist_factor`·√N·a.
    pub waist: Option<f64>,
    pub waist_factor: f64,
    pub phase: f64,
    /// Focus position; defaults to the stack centre.
    pub focus: Option<[f64; 3]>,
    pub direction: Direction,
    /// Plane-wave normalization area; defaults to N times the unit-cell area.
    pub area: Option<f64>,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            kind: None,
            waist: None,
            waist_factor: 1.0 / 3.0,
            phase: 0.0,
            focus: None,
            direction: Direction::Forward,
            area: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub objective: Option<Objective>,
    pub starts: usize,
    pub jitter: f64,
    pub phase_scan: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    /// Overrides of the default parameter bounds.
    pub bounds: BTreeMap<Param, [f64; 2]>,
    /// Parameters held fixed at their configured values.
    pub fixed: Vec<Param>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizeOptions::default();
        Self {
            objective: None,
            starts: o.starts,
            jitter: o.jitter,
            phase_scan: o.phase_scan,
            max_evals: o.nelder_mead.max_evals,
            tolerance: o.nelder_mead.tolerance,
            bounds: BTreeMap::new(),
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ScalingConfig {
    /// Patch sizes (rings or sites per side).
    pub sizes: Option<Vec<usize>>,
    /// Atoms per layer, as an alternative to `sizes`.
    pub counts: Option<Vec<usize>>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Peak reflectance R_max of the finite array.
    Reflectance,
    /// Optimal retrieval efficiency η_max.
    Retrieval,
    /// Peak reflectance of the infinite-array model.
    IdealReflectance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + k as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub quantity: Quantity,
    /// One or two axes; the last axis varies fastest.
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct IdealizedConfig {
    /// Layer spacing in half wavelengths for the critical-point search;
    /// defaults to round(2d).
    pub ell: Option<u32>,
    pub a_range: Option<[f64; 2]>,
}


/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Scenario {
    pub task: Option<Task>,
    pub seed: u64,
    /// Accept parameters outside the documented validity windows.
    pub allow_out_of_window: bool,
    pub lattice: LatticeConfig,
    pub mode: ModeConfig,
    pub scan: ScanOptions,
    pub optimizer: OptimizerConfig,
    pub scaling: ScalingConfig,
    pub sweep: Option<SweepConfig>,
    pub idealized: IdealizedConfig,
}


impl Scenario {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> CliResult<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| schema(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| schema(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Check everything that can be checked without running the task.
    pub fn validate(&self, task: Task) -> CliResult<()> {
        if let Some(t) = self.task {
            if t != task {
                return Err(schema(format!("scenario is for task `{}`, not `{}`", t.name(), task.name())));
            }
        }
        let l = &self.lattice;
        if !(l.a.is_finite() && l.a > 0.0) {
            return Err(schema(format!("lattice.a = {} must be positive", l.a)));
        }
        if l.layers == 0 || l.layers > MAX_LAYERS {
            return Err(schema(format!("lattice.layers = {} must lie in 1..={MAX_LAYERS}", l.layers)));
        }
        if !(l.d.is_finite() && l.d > 0.0) {
            return Err(schema(format!("lattice.d = {} must be positive", l.d)));
        }
        let size = l.resolved_size()?;
        if size == 0 {
            return Err(schema("lattice.size must be at least 1"));
        }
        let n = l.atoms_per_layer()?;
        if n > MAX_ATOMS_PER_LAYER {
            return Err(schema(format!("{n} atoms per layer exceeds the limit of {MAX_ATOMS_PER_LAYER}")));
        }
        if let Some(shifts) = &l.shifts {
            if shifts.len() != l.layers {
                return Err(schema(format!(
                    "lattice.shifts has {} entries for {} layers",
                    shifts.len(),
                    l.layers
                )));
            }
            if shifts.iter().flatten().any(|v| !v.is_finite()) {
                return Err(schema("lattice.shifts must be finite"));
            }
        }
        self.check_a(l.a, "lattice.a")?;
        if l.layers > 1 {
            self.check_d(l.d, "lattice.d")?;
        }

        let m = &self.mode;
        if let Some(w) = m.waist {
            if !(w.is_finite() && w >= MIN_WAIST) {
                return Err(schema(format!("mode.waist = {w} is below the paraxial limit {MIN_WAIST}")));
            }
        }
        if !(m.waist_factor.is_finite() && m.waist_factor > 0.0) {
            return Err(schema("mode.waist_factor must be positive"));
        }
        if !m.phase.is_finite() {
            return Err(schema("mode.phase must be finite"));
        }
        if m.focus.is_some_and(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(schema("mode.focus must be finite"));
        }
        if m.area.is_some_and(|a| !(a.is_finite() && a > 0.0)) {
            return Err(schema("mode.area must be positive"));
        }
        self.scan.validate().map_err(|e| schema(format!("scan: {e}")))?;

        match task {
            Task::Reflect | Task::Memory | Task::Validate => {
                let params = self.base_params()?;
                self.check_waist(params.w)?;
            }
            Task::Idealized => {
                if let Some([lo, hi]) = self.idealized.a_range {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(schema("idealized.a_range must be finite and increasing"));
                    }
                }
                if self.idealized.ell == Some(0) {
                    return Err(schema("idealized.ell must be at least 1"));
                }
            }
            Task::Optimize => {
                self.optimization_problem(size)?;
            }
            Task::Scaling => {
                let sizes = self.scaling_sizes()?;
                let problem = self.optimization_problem(sizes[0])?;
                if problem.free.is_empty() {
                    return Err(schema("optimizer has no free parameters"));
                }
            }
            Task::Sweep => {
                let sweep = self.sweep.as_ref().ok_or_else(|| schema("task `sweep` needs a [sweep] section"))?;
                self.validate_sweep(sweep)?;
            }
        }
        Ok(())
    }

    fn check_a(&self, a: f64, name: &str) -> CliResult<()> {
        let (lo, hi) = design_window(self.lattice.kind);
        if !self.allow_out_of_window && !(a >= lo && a <= hi) {
            return Err(schema(format!(
                "{name} = {a} lies outside the validity window [{lo}, {hi}]; set allow_out_of_window = true to override"
            )));
        }
        Ok(())
    }

    fn check_d(&self, d: f64, name: &str) -> CliResult<()> {
        let (lo, hi) = SPACING_WINDOW;
        if !self.allow_out_of_window && !(d >= lo && d <= hi) {
            return Err(schema(format!(
                "{name} = {d} lies outside the validity window [{lo}, {hi}]; set allow_out_of_window = true to override"
            )));
        }
        Ok(())
    }

    fn check_waist(&self, w: f64) -> CliResult<()> {
        if !(w.is_finite() && w >= MIN_WAIST) {
            return Err(schema(format!("beam waist {w} is below the paraxial limit {MIN_WAIST}")));
        }
        Ok(())
    }

    fn validate_sweep(&self, sweep: &SweepConfig) -> CliResult<()> {
        if sweep.axes.is_empty() || sweep.axes.len() > 2 {
            return Err(schema("sweep.axes must hold one or two axes"));
        }
        if sweep.axes.len() == 2 && sweep.axes[0].param == sweep.axes[1].param {
            return Err(schema("sweep axes must vary different parameters"));
        }
        for axis in &sweep.axes {
            if axis.points == 0 {
                return Err(schema(format!("sweep axis {:?} needs at least one point", axis.param)));
            }
            if !(axis.min.is_finite() && axis.max.is_finite() && axis.min <= axis.max) {
                return Err(schema(format!("sweep axis {:?} must be finite and increasing", axis.param)));
            }
            let name = format!("sweep axis {:?}", axis.param);
            match axis.param {
                Param::A => {
                    if !(axis.min > 0.0) {
                        return Err(schema("lattice constants must be positive"));
                    }
                    self.check_a(axis.min, &name)?;
                    self.check_a(axis.max, &name)?;
                }
                Param::D => {
                    if !(axis.min > 0.0) {
                        return Err(schema("layer spacings must be positive"));
                    }
                    self.check_d(axis.min, &name)?;
                    self.check_d(axis.max, &name)?;
                }
                Param::W => {
                    self.check_waist(axis.min)?;
                }
                Param::Phi => {
                    if sweep.quantity != Quantity::Retrieval {
                        return Err(schema("a φ axis only applies to retrieval sweeps"));
                    }
                }
            }
        }
        let points: usize = sweep.axes.iter().map(|a| a.points).product();
        if points > 1_000_000 {
            return Err(schema(format!("sweep has {points} points; the limit is 1000000")));
        }
        if sweep.quantity != Quantity::IdealReflectance && !sweep.axes.iter().any(|a| a.param == Param::W) {
            // the waist at the smallest lattice constant must still be paraxial
            let a_min = sweep
                .axes
                .iter()
                .find(|a| a.param == Param::A)
                .map_or(self.lattice.a, |a| a.min);
            let mut p = self.base_params()?;
            p.a = a_min;
            self.check_waist(self.waist_at(&p)?)?;
        }
        Ok(())
    }

    fn default_mode_kind(&self, quantity: Quantity) -> ModeKind {
        self.mode.kind.unwrap_or(match quantity {
            Quantity::Retrieval => ModeKind::TwoWay,
            _ => ModeKind::Gaussian,
        })
    }

    fn base_params(&self) -> CliResult<Params> {
        let mut p = Params {
            a: self.lattice.a,
            d: self.lattice.d,
            w: 0.0,
            phi: self.mode.phase,
        };
        p.w = self.waist_at(&p)?;
        Ok(p)
    }

    fn waist_at(&self, p: &Params) -> CliResult<f64> {
        Ok(match self.mode.waist {
            Some(w) => w,
            None => self.mode.waist_factor * (self.lattice.atoms_per_layer()? as f64).sqrt() * p.a,
        })
    }

    fn scaling_sizes(&self) -> CliResult<Vec<usize>> {
        let kind = self.lattice.kind;
        let sizes = match (&self.scaling.sizes, &self.scaling.counts) {
            (Some(_), Some(_)) => return Err(schema("give scaling.sizes or scaling.counts, not both")),
            (Some(s), None) => s.clone(),
            (None, Some(c)) => c
                .iter()
                .map(|&n| size_for_count(kind, n).ok_or_else(|| schema(format!("scaling count {n} is not admissible"))))
                .collect::<CliResult<_>>()?,
            (None, None) => (3..=9).collect(),
        };
        if sizes.len() < 2 || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
            return Err(schema("scaling sizes must be at least two strictly increasing positive values"));
        }
        if let Some(&s) = sizes.iter().find(|&&s| count_for_size(kind, s) > MAX_ATOMS_PER_LAYER) {
            return Err(schema(format!("scaling size {s} exceeds {MAX_ATOMS_PER_LAYER} atoms per layer")));
        }
        Ok(sizes)
    }

    fn objective(&self) -> Objective {
        self.optimizer.objective.unwrap_or(match self.mode.kind {
            Some(ModeKind::TwoWay) => Objective::RetrievalError,
            _ => Objective::ReflectanceError,
        })
    }

    /// The optimization problem described by the lattice, mode and
    /// optimizer sections at patch size `size`.
    pub fn optimization_problem(&self, size: usize) -> CliResult<OptimizationProblem> {
        let objective = self.objective();
        let layers = self.lattice.layers;
        let mut problem = match objective {
            Objective::ReflectanceError => OptimizationProblem::reflectance(1, layers),
            Objective::RetrievalError => OptimizationProblem::memory(1, layers),
        };
        problem.kind = self.lattice.kind;
        problem.size = size;
        problem.scan = self.scan;
        problem.reset_bounds();
        let n = problem.atoms_per_layer() as f64;
        problem.x0 = Params {
            a: self.lattice.a,
            d: self.lattice.d,
            w: self.mode.waist.unwrap_or(self.mode.waist_factor * n.sqrt() * self.lattice.a),
            phi: self.mode.phase,
        };
        for (param, [lo, hi]) in &self.optimizer.bounds {
            match problem.free.iter().position(|p| p == param) {
                Some(k) => problem.bounds[k] = (*lo, *hi),
                None => return Err(schema(format!("bounds given for {param:?}, which is not free"))),
            }
        }
        let keep: Vec<bool> = problem.free.iter().map(|p| !self.optimizer.fixed.contains(p)).collect();
        let mut k = 0;
        problem.free.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        problem.bounds.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        if !self.allow_out_of_window {
            for (p, (lo, hi)) in problem.free.iter().zip(&problem.bounds) {
                match p {
                    Param::A => {
                        self.check_a(*lo, "optimizer bound on a")?;
                        self.check_a(*hi, "optimizer bound on a")?;
                    }
                    Param::D => {
                        self.check_d(*lo, "optimizer bound on d")?;
                        self.check_d(*hi, "optimizer bound on d")?;
                    }
                    _ => {}
                }
            }
        }
        if self.optimizer.starts == 0 || self.optimizer.max_evals == 0 {
            return Err(schema("optimizer.starts and optimizer.max_evals must be positive"));
        }
        if !(self.optimizer.jitter >= 0.0 && self.optimizer.tolerance > 0.0) {
            return Err(schema("optimizer.jitter must be non-negative and optimizer.tolerance positive"));
        }
        problem.validate().map_err(|e| schema(format!("optimizer: {e}")))?;
        Ok(problem)
    }

    fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            nelder_mead: NelderMeadOptions {
                max_evals: self.optimizer.max_evals,
                tolerance: self.optimizer.tolerance,
                ..NelderMeadOptions::default()
            },
            starts: self.optimizer.starts,
            jitter: self.optimizer.jitter,
            seed: self.seed,
            phase_scan: self.optimizer.phase_scan,
        }
    }

    /// Geometry at parameters `p`.
    pub fn geometry(&self, p: &Params) -> crate::Result<ArrayGeometry> {
        let spec = LatticeSpec::new(self.lattice.kind, p.a)?;
        let size = self.lattice.resolved_size().map_err(|e| crate::error::invalid("size", e.to_string()))?;
        let patch = generate_patch(&spec, size);
        stack_layers(Some(spec), &patch, self.lattice.layers, p.d, self.lattice.shifts.as_deref())
    }

    /// Optical mode at parameters `p` for `geometry`.
    pub fn mode_field(&self, quantity: Quantity, p: &Params, geometry: &ArrayGeometry) -> crate::Result<ModeField> {
        let focus = self.mode.focus.unwrap_or_else(|| geometry.center());
        match self.default_mode_kind(quantity) {
            ModeKind::Gaussian => ModeField::gaussian(p.w, focus, self.mode.direction),
            ModeKind::TwoWay => ModeField::two_way(p.w, focus, p.phi),
            ModeKind::PlaneWave => {
                let area = match self.mode.area {
                    Some(a) => a,
                    None => geometry.atoms_per_layer() as f64 * geometry.lattice.map_or(1.0, |l| l.cell_area),
                };
                ModeField::plane_wave(area, focus[2], self.mode.direction)
            }
        }
    }
}

/// Value of one sweep point or direct evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    /// R_max or η_max.
    pub value: f64,
    pub epsilon: f64,
    /// Detuning of the reflectance peak; absent for retrieval.
    pub detuning: Option<f64>,
}

/// Evaluate `quantity` at `p`. Lattice constants on a grazing diffraction
/// order are rejected.
pub fn evaluate_point(scenario: &Scenario, quantity: Quantity, p: &Params) -> crate::Result<PointValue> {
    let spec = LatticeSpec::new(scenario.lattice.kind, p.a)?;
    channel_rates(&spec)?;
    if quantity == Quantity::IdealReflectance {
        let r = ideal_max_reflectance(&spec, scenario.lattice.layers, p.d, scenario.lattice.shifts.as_deref())?;
        return Ok(PointValue {
            value: r.r_max,
            epsilon: 1.0 - r.r_max,
            detuning: Some(r.detuning),
        });
    }
    let geometry = scenario.geometry(p)?;
    let mode = scenario.mode_field(quantity, p, &geometry)?;
    match quantity {
        Quantity::Retrieval => {
            let k = k_matrix_for(&geometry, &mode, &scenario.scan.polarization, scenario.scan.reduction)?;
            let r = max_retrieval(&k)?;
            Ok(PointValue {
                value: r.eta_max,
                epsilon: r.epsilon,
                detuning: None,
            })
        }
        _ => {
            let r = max_reflectance(&geometry, &mode, &scenario.scan)?;
            Ok(PointValue {
                value: r.r_max,
                epsilon: r.epsilon,
                detuning: Some(r.detuning),
            })
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub coords: Vec<f64>,
    pub result: Option<PointValue>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub quantity: Quantity,
    pub axes: Vec<Axis>,
    pub records: Vec<SweepRecord>,
}

impl SweepTable {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// Values on the grid, row-major with the last axis fastest; NaN where
    /// the point failed.
    pub fn values(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.result.map_or(f64::NAN, |v| v.value))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    config_hash: String,
    version: String,
    points: usize,
}

fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let values: Vec<Vec<f64>> = axes.iter().map(Axis::values).collect();
    let mut points = vec![Vec::new()];
    for v in &values {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                v.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    points
}

/// Evaluate the scenario's sweep on a bounded worker pool.
///
/// When `checkpoint` is given, each completed point is appended to it by a
/// single writer; with `resume`, points already recorded there are skipped.
/// Per-point failures are recorded and do not abort the sweep.
pub fn sweep_grid(
    scenario: &Scenario,
    workers: usize,
    checkpoint: Option<&Path>,
    resume: bool,
) -> CliResult<SweepTable> {
    let sweep = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| schema("task `sweep` needs a [sweep] section"))?;
    let points = grid_points(&sweep.axes);
    let total = points.len();
    let hash = scenario.hash();

    let mut done: HashMap<usize, SweepRecord> = HashMap::new();
    let mut writer = match checkpoint {
        None => None,
        Some(path) => {
            if resume && path.exists() {
                done = read_checkpoint(path, &hash, total)?;
                // rewrite so that a torn trailing line does not survive
                let mut w = BufWriter::new(File::create(path).map_err(io_err(format!("creating {}", path.display())))?);
                write_checkpoint_header(&mut w, &hash, total)?;
                let mut indices: Vec<_> = done.keys().copied().collect();
                indices.sort_unstable();
                for i in indices {
                    write_checkpoint_record(&mut w, &done[&i])?;
                }
                w.flush().map_err(io_err("writing checkpoint"))?;
                Some(w)
            } else {
                let mut w = BufWriter::new(File::create(path).map_err(io_err(format!("creating {}", path.display())))?);
                write_checkpoint_header(&mut w, &hash, total)?;
                w.flush().map_err(io_err("writing checkpoint"))?;
                Some(w)
            }
        }
    };

    let todo: Vec<usize> = (0..total).filter(|i| !done.contains_key(i)).collect();
    let base = scenario.base_params()?;
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(todo.len().max(1));
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next, points, base) = (&todo, &next, &points, &base);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&index) = todo.get(k) else { break };
                let coords = points[index].clone();
                let record = evaluate_record(scenario, sweep, base, index, coords);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            if let Some(w) = writer.as_mut() {
                if write_error.is_none() {
                    if let Err(e) = write_checkpoint_record(w, &record).and_then(|_| w.flush().map_err(io_err("writing checkpoint"))) {
                        write_error = Some(e);
                    }
                }
            }
            done.insert(record.index, record);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let mut records: Vec<SweepRecord> = done.into_values().collect();
    records.sort_by_key(|r| r.index);
    Ok(SweepTable {
        quantity: sweep.quantity,
        axes: sweep.axes.clone(),
        records,
    })
}

fn evaluate_record(scenario: &Scenario, sweep: &SweepConfig, base: &Params, index: usize, coords: Vec<f64>) -> SweepRecord {
    let mut p = *base;
    for (axis, &x) in sweep.axes.iter().zip(&coords) {
        p.set(axis.param, x);
    }
    if scenario.mode.waist.is_none() && !sweep.axes.iter().any(|a| a.param == Param::W) {
        match scenario.waist_at(&p) {
            Ok(w) => p.w = w,
            Err(e) => {
                return SweepRecord {
                    index,
                    coords,
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }
    match evaluate_point(scenario, sweep.quantity, &p) {
        Ok(v) => SweepRecord {
            index,
            coords,
            result: Some(v),
            error: None,
        },
        Err(e) => SweepRecord {
            index,
            coords,
            result: None,
            error: Some(e.to_string()),
        },
    }
}

fn write_checkpoint_header(w: &mut impl Write, hash: &str, points: usize) -> CliResult<()> {
    let header = CheckpointHeader {
        config_hash: hash.to_string(),
        version: VERSION.to_string(),
        points,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io_err("writing checkpoint"))
}

fn write_checkpoint_record(w: &mut impl Write, record: &SweepRecord) -> CliResult<()> {
    writeln!(w, "{}", serde_json::to_string(record).expect("record serializes")).map_err(io_err("writing checkpoint"))
}

fn read_checkpoint(path: &Path, hash: &str, total: usize) -> CliResult<HashMap<usize, SweepRecord>> {
    let file = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header: CheckpointHeader = match lines.next() {
        Some(line) => {
            let line = line.map_err(io_err("reading checkpoint"))?;
            serde_json::from_str(&line).map_err(|e| schema(format!("unreadable checkpoint header: {e}")))?
        }
        None => return Ok(HashMap::new()),
    };
    if header.config_hash != hash || header.points != total {
        return Err(schema(format!(
            "checkpoint {} belongs to a different scenario (hash {})",
            path.display(),
            header.config_hash
        )));
    }
    let mut done = HashMap::new();
    for line in lines {
        let line = line.map_err(io_err("reading checkpoint"))?;
        // an interrupted run may leave a torn final line
        if let Ok(record) = serde_json::from_str::<SweepRecord>(&line) {
            if record.index < total {
                done.insert(record.index, record);
            }
        }
    }
    Ok(done)
}

/// Options that affect where and how a scenario runs, but not its results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub resume: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            workers: default_workers(),
            resume: false,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub task: Task,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

fn envelope(task: Task, scenario: &Scenario, hash: &str, result: Value) -> Value {
    json!({
        "tool": "dipole-mirror",
        "version": VERSION,
        "config_hash": hash,
        "task": task.name(),
        "seed": scenario.seed,
        "result": result,
    })
}

/// Format with 12 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.11e}")
    }
}

struct Outputs {
    dir: PathBuf,
    hash: String,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(dir: &Path, hash: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            files: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let path = self.path(name);
        let mut text = format!("# dipole-mirror {VERSION} config_hash={}\n{}\n", self.hash, header.join(","));
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn append_log(&mut self, name: &str, entries: &[Value]) -> CliResult<()> {
        let path = self.path(name);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(format!("opening {}", path.display())))?;
        for e in entries {
            writeln!(f, "{}", serde_json::to_string(e).expect("json serializes")).map_err(io_err("writing run log"))?;
        }
        if !self.files.contains(&path) {
            self.files.push(path);
        }
        Ok(())
    }
}

/// Validate `scenario` for `task`, run it and write the result files.
///
/// Nothing is written unless validation succeeds. Numerical results are
/// computed before any file is created, except for sweeps, whose checkpoint
/// is written incrementally.
pub fn run_scenario(task: Task, scenario: &Scenario, opts: &RunOptions) -> CliResult<RunReport> {
    scenario.validate(task)?;
    let hash = scenario.hash();
    let (summary, files) = match task {
        Task::Reflect => run_reflect(scenario, &hash, opts)?,
        Task::Memory => run_memory(scenario, &hash, opts)?,
        Task::Idealized => run_idealized(scenario, &hash, opts)?,
        Task::Optimize => run_optimize(scenario, &hash, opts)?,
        Task::Scaling => run_scaling(scenario, &hash, opts)?,
        Task::Sweep => run_sweep(scenario, &hash, opts)?,
        Task::Validate => run_validate(scenario, &hash, opts)?,
    };
    Ok(RunReport {
        task,
        config_hash: hash,
        files,
        summary,
    })
}

type TaskOutput = CliResult<(Value, Vec<PathBuf>)>;

fn run_reflect(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let p = scenario.base_params()?;
    let spec = LatticeSpec::new(scenario.lattice.kind, p.a)?;
    channel_rates(&spec)?;
    let geometry = scenario.geometry(&p)?;
    let mode = scenario.mode_field(Quantity::Reflectance, &p, &geometry)?;
    let result = max_reflectance(&geometry, &mode, &scenario.scan)?;
    let spectrum = reflectance_spectrum(&geometry, &mode, &scenario.scan.grid(), &scenario.scan)?;

    let summary = envelope(Task::Reflect, scenario, hash, json!({ "reflectance": result, "spectrum": "spectrum.csv" }));
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.csv(
        "spectrum.csv",
        &["detuning", "re_r", "im_r", "reflectance"],
        spectrum
            .detunings
            .iter()
            .zip(&spectrum.r)
            .zip(&spectrum.reflectance)
            .map(|((d, r), rr)| vec![fmt_f64(*d), fmt_f64(r.re), fmt_f64(r.im), fmt_f64(*rr)]),
    )?;
    out.json("reflect.json", &summary)?;
    Ok((summary, out.files))
}

fn run_memory(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let p = scenario.base_params()?;
    let spec = LatticeSpec::new(scenario.lattice.kind, p.a)?;
    channel_rates(&spec)?;
    let geometry = scenario.geometry(&p)?;
    let mode = scenario.mode_field(Quantity::Retrieval, &p, &geometry)?;
    let k = k_matrix_for(&geometry, &mode, &scenario.scan.polarization, scenario.scan.reduction)?;
    let mut result = max_retrieval(&k)?;
    result.params = Some(crate::response::ParamsEcho::new(&geometry, &mode));

    let summary = envelope(
        Task::Memory,
        scenario,
        hash,
        json!({
            "eta_max": result.eta_max,
            "epsilon": result.epsilon,
            "params": result.params,
            "mode": mode,
            "spinwave": "spinwave.csv",
        }),
    );
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.csv(
        "spinwave.csv",
        &["atom", "x", "y", "z", "re_s", "im_s"],
        geometry
            .positions
            .iter()
            .zip(&result.spinwave)
            .enumerate()
            .map(|(i, (r, s)): (usize, (&[f64; 3], &Complex64))| {
                vec![i.to_string(), fmt_f64(r[0]), fmt_f64(r[1]), fmt_f64(r[2]), fmt_f64(s.re), fmt_f64(s.im)]
            }),
    )?;
    out.json("memory.json", &summary)?;
    Ok((summary, out.files))
}

fn run_idealized(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let l = &scenario.lattice;
    let spec = LatticeSpec::new(l.kind, l.a)?;
    let rates = channel_rates(&spec)?;
    let ell = scenario.idealized.ell.unwrap_or_else(|| (2.0 * l.d).round().max(1.0) as u32);
    let a_range = scenario
        .idealized
        .a_range
        .map_or_else(|| design_window(l.kind), |[lo, hi]| (lo, hi));
    let designs = critical_lattice_constants(l.kind, ell, a_range)?;
    let matrix = interlayer_matrix(&spec, l.layers, l.d, l.shifts.as_deref())?;
    let ideal = ideal_max_reflectance(&spec, l.layers, l.d, l.shifts.as_deref())?;
    let eigenstructure = designs
        .iter()
        .find(|d| (d.a - l.a).abs() < 1e-9 && (d.spacing - l.d).abs() < 1e-12)
        .map(|d| classify_eigenstructure(&matrix, d.parity))
        .transpose()?;

    let summary = envelope(
        Task::Idealized,
        scenario,
        hash,
        json!({
            "channel_rates": rates,
            "branching_ratio": rates.branching_ratio(),
            "ell": ell,
            "critical_points": designs,
            "max_real_coupling": matrix.max_real(),
            "ideal_reflectance": ideal,
            "eigenstructure": eigenstructure,
        }),
    );
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.json("idealized.json", &summary)?;
    Ok((summary, out.files))
}

fn run_optimize(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let size = scenario.lattice.resolved_size()?;
    let problem = scenario.optimization_problem(size)?;
    let options = scenario.optimize_options();
    let outcome = optimize(&problem, &options)?;

    let summary = envelope(
        Task::Optimize,
        scenario,
        hash,
        json!({
            "problem": problem,
            "options": options,
            "outcome": outcome,
        }),
    );
    let log: Vec<Value> = outcome
        .runs
        .iter()
        .enumerate()
        .map(|(k, run)| {
            json!({
                "version": VERSION,
                "config_hash": hash,
                "task": "optimize",
                "objective": problem.objective,
                "n": problem.atoms_per_layer(),
                "layers": problem.layers,
                "seed": options.seed,
                "run": k,
                "record": run,
            })
        })
        .collect();
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.json("optimize.json", &summary)?;
    out.append_log("runs.jsonl", &log)?;
    Ok((summary, out.files))
}

fn run_scaling(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let sizes = scenario.scaling_sizes()?;
    let template = scenario.optimization_problem(sizes[0])?;
    let options = scenario.optimize_options();
    let series = scaling_study(&template, &sizes, &options)?;
    let fit = fit_power_law(&series.pairs())?;
    let worst = series.worst_increase();

    let summary = envelope(
        Task::Scaling,
        scenario,
        hash,
        json!({
            "series": series,
            "fit": fit,
            "worst_increase": worst,
            "monotone_within_2_percent": worst <= 0.02,
        }),
    );
    let log: Vec<Value> = series
        .points
        .iter()
        .map(|p| {
            json!({
                "version": VERSION,
                "config_hash": hash,
                "task": "scaling",
                "objective": series.objective,
                "layers": series.layers,
                "seed": options.seed,
                "point": p,
            })
        })
        .collect();
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.csv(
        "scaling.csv",
        &["size", "n", "epsilon", "a", "d", "w", "phi"],
        series.points.iter().map(|p| {
            vec![
                p.size.to_string(),
                p.n.to_string(),
                fmt_f64(p.epsilon),
                fmt_f64(p.params.a),
                fmt_f64(p.params.d),
                fmt_f64(p.params.w),
                fmt_f64(p.params.phi),
            ]
        }),
    )?;
    out.json("scaling.json", &summary)?;
    out.append_log("runs.jsonl", &log)?;
    Ok((summary, out.files))
}

fn run_sweep(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    let checkpoint = out.path("sweep.checkpoint.jsonl");
    let table = sweep_grid(scenario, opts.workers, Some(&checkpoint), opts.resume)?;
    out.files.push(checkpoint);

    let names: Vec<String> = table.axes.iter().map(|a| param_name(a.param).to_string()).collect();
    let mut header: Vec<&str> = vec!["index"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["value", "epsilon", "detuning", "status", "error"]);
    out.csv(
        "sweep.csv",
        &header,
        table.records.iter().map(|r| {
            let mut row = vec![r.index.to_string()];
            row.extend(r.coords.iter().map(|&x| fmt_f64(x)));
            match r.result {
                Some(v) => {
                    row.push(fmt_f64(v.value));
                    row.push(fmt_f64(v.epsilon));
                    row.push(v.detuning.map_or_else(String::new, fmt_f64));
                    row.push("ok".into());
                    row.push(String::new());
                }
                None => {
                    row.extend([String::new(), String::new(), String::new(), "failed".into()]);
                    row.push(csv_quote(r.error.as_deref().unwrap_or("")));
                }
            }
            row
        }),
    )?;
    let best = table
        .records
        .iter()
        .filter_map(|r| r.result.map(|v| (r, v)))
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(r, v)| json!({ "index": r.index, "coords": r.coords, "value": v.value }));
    let summary = envelope(
        Task::Sweep,
        scenario,
        hash,
        json!({
            "quantity": table.quantity,
            "axes": table.axes,
            "points": table.records.len(),
            "failed": table.failed(),
            "best": best,
            "table": "sweep.csv",
        }),
    );
    out.json("sweep.json", &summary)?;
    Ok((summary, out.files))
}

fn param_name(p: Param) -> &'static str {
    match p {
        Param::A => "a",
        Param::D => "d",
        Param::W => "w",
        Param::Phi => "phi",
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// One self-test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

/// Normalization, passivity and consistency self-tests on the scenario's
/// geometry plus the plane-wave limit of a sub-wavelength monolayer.
pub fn self_tests(scenario: &Scenario) -> crate::Result<Vec<Check>> {
    let mut checks = Vec::new();
    let p = scenario.base_params().map_err(|e| crate::error::invalid("scenario", e.to_string()))?;
    let geometry = scenario.geometry(&p)?;
    let center = geometry.center();

    for (name, mode) in [
        ("gaussian flux", ModeField::gaussian(p.w, center, Direction::Forward)?),
        ("two-way flux", ModeField::two_way(p.w, center, p.phi)?),
    ] {
        let worst = [-3.0, -0.7, 0.0, 1.3, 4.0]
            .iter()
            .map(|dz| (mode.flux(center[2] + dz) - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check::below(name, worst, 1e-6));
    }

    let matrix = build_interaction_matrix(&geometry, &scenario.scan.polarization)?;
    checks.push(Check::below("interaction matrix symmetry", matrix.symmetry_error(), 1e-12));
    checks.push(Check::below("passivity deficit", -matrix.passivity_margin()?, 1e-10));

    let modes = collective_modes(&matrix)?;
    checks.push(Check::below("mode completeness", modes.completeness_error(), 1e-6));

    let two_way = ModeField::two_way(p.w, center, p.phi)?;
    let k = k_matrix_for(&geometry, &two_way, &scenario.scan.polarization, scenario.scan.reduction)?;
    checks.push(Check::below("K hermiticity", k.hermiticity_error(), 1e-10));
    let spectrum = k.efficiency_spectrum()?;
    let lo = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::below("K efficiency below 0", (-lo).max(0.0), 1e-9));
    checks.push(Check::below("K efficiency above 1", (hi - 1.0).max(0.0), 1e-9));

    let plane = validate_plane_wave_limit(&default_plane_wave_lattice(), 1, 0.0, 12)?;
    checks.push(Check::below("plane-wave limit (N = 469)", plane.error, 0.05));
    Ok(checks)
}

fn run_validate(scenario: &Scenario, hash: &str, opts: &RunOptions) -> TaskOutput {
    let checks = self_tests(scenario)?;
    let pass = checks.iter().all(|c| c.pass);
    let summary = envelope(Task::Validate, scenario, hash, json!({ "pass": pass, "checks": checks }));
    let mut out = Outputs::create(&opts.out_dir, hash)?;
    out.json("validate.json", &summary)?;
    if !pass {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::Numerical(Error::Format(format!("self-tests failed: {}", failed.join(", ")))));
    }
    Ok((summary, out.files))
}

#[derive(Debug, Parser)]
#[command(name = "dipole-mirror", version, about = "Atomic-array mirror and quantum-memory simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Peak reflectance and spectrum of one configuration.
    Reflect(CommonArgs),
    /// Optimal retrieval efficiency and spin wave.
    Memory(CommonArgs),
    /// Infinite-array design: channel rates, critical points, eigenstructure.
    Idealized(CommonArgs),
    /// Local optimization of {a, d, w, φ}.
    Optimize(CommonArgs),
    /// Optimized error versus atom number with a power-law fit.
    Scaling(CommonArgs),
    /// 1D or 2D parameter sweep with checkpointing.
    Sweep(CommonArgs),
    /// Normalization and passivity self-tests.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML, or JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Sweep worker threads (default: available parallelism).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Continue an interrupted sweep from its checkpoint.
    #[arg(long)]
    pub resume: bool,
}

impl Command {
    pub fn task_and_args(&self) -> (Task, &CommonArgs) {
        match self {
            Command::Reflect(a) => (Task::Reflect, a),
            Command::Memory(a) => (Task::Memory, a),
            Command::Idealized(a) => (Task::Idealized, a),
            Command::Optimize(a) => (Task::Optimize, a),
            Command::Scaling(a) => (Task::Scaling, a),
            Command::Sweep(a) => (Task::Sweep, a),
            Command::Validate(a) => (Task::Validate, a),
        }
    }
}

/// Parse arguments, run, report, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    let (task, args) = cli.command.task_and_args();
    let result = (|| {
        let mut scenario = match &args.config {
            Some(path) => Scenario::load(path)?,
            None => Scenario::default(),
        };
        if let Some(seed) = args.seed {
            scenario.seed = seed;
        }
        if args.workers == Some(0) {
            return Err(schema("--workers must be positive"));
        }
        let opts = RunOptions {
            out_dir: args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            workers: args.workers.unwrap_or_else(default_workers),
            resume: args.resume,
        };
        run_scenario(task, &scenario, &opts)
    })();
    match result {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let t = Scenario::parse("seed = 3\n[lattice]\nlayers = 2\na = 1.6\n").unwrap();
        let j = Scenario::parse(r#"{"seed": 3, "lattice": {"layers": 2, "a": 1.6}}"#).unwrap();
        assert_eq!(t, j);
        assert_eq!(t.hash(), j.hash());
        assert_eq!(t.hash().len(), 64);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(Scenario::parse("[lattice]\ncolour = 1\n"), Err(CliError::Schema(_))));
        assert!(matches!(Scenario::parse("speed = 1\n"), Err(CliError::Schema(_))));
    }

    #[test]
    fn window_enforced_unless_overridden() {
        let mut s = Scenario::default();
        s.lattice.a = 0.8;
        assert!(matches!(s.validate(Task::Reflect), Err(CliError::Schema(_))));
        s.allow_out_of_window = true;
        s.validate(Task::Reflect).unwrap();
    }

    #[test]
    fn counts_resolve_to_sizes() {
        let mut s = Scenario::default();
        s.lattice.n = Some(127);
        assert_eq!(s.lattice.resolved_size().unwrap(), 6);
        s.lattice.n = Some(128);
        assert!(s.lattice.resolved_size().is_err());
        s.lattice.kind = LatticeKind::Square;
        s.lattice.n = Some(49);
        assert_eq!(s.lattice.resolved_size().unwrap(), 7);
    }

    #[test]
    fn grid_is_row_major() {
        let axes = [
            Axis { param: Param::A, min: 1.0, max: 2.0, points: 2 },
            Axis { param: Param::D, min: 0.0, max: 1.0, points: 3 },
        ];
        let g = grid_points(&axes);
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![1.0, 0.5]);
        assert_eq!(g[3], vec![2.0, 0.0]);
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_f64(0.123456789012345), "1.23456789012e-1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn fixed_parameters_leave_the_free_set() {
        let mut s = Scenario::default();
        s.lattice.layers = 3;
        s.optimizer.fixed = vec![Param::D];
        let p = s.optimization_problem(3).unwrap();
        assert_eq!(p.free, vec![Param::A, Param::W]);
        assert_eq!(p.bounds.len(), 2);
    }
}
