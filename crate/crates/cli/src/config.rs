//! Run configuration: a `key = value` file with `[section]` headers (a TOML
//! subset). Unknown keys are rejected; every error names the offending line.

use std::fmt;
use std::path::Path;

use prandtl_core::nash_moser::{InnerSolver, IterationConfig};
use prandtl_core::norms::TangentialIndexMode;
use prandtl_core::oracle::OracleConfig;
use prandtl_core::shear_flow::ShearProfile;
use prandtl_core::GridSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub shear: ShearSection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub norms: NormsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Lattice extents and sizes. All six keys are required in a config file;
/// counts are read as signed integers so that negative values get a
/// constraint message rather than a type error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_final: f64,
    pub y_max: f64,
    pub l_x: f64,
    pub n_t: i64,
    pub n_x: i64,
    pub n_y: i64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { t_final: 0.25, y_max: 12.0, l_x: 1.0, n_t: 32, n_x: 32, n_y: 96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    Erf,
    ExpSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShearSection {
    pub profile: ProfileKind,
    /// Width of the `erf` profile.
    pub width: f64,
    /// Rate of the `exp_saturating` profile.
    pub a: f64,
}

impl Default for ShearSection {
    fn default() -> Self {
        ShearSection { profile: ProfileKind::Erf, width: 1.0, a: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationFamily {
    /// `eps sin(2 pi x / L_x) y exp(-y^2)`
    #[default]
    SinGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub family: PerturbationFamily,
    pub epsilon: f64,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection { family: PerturbationFamily::SinGaussian, epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub theta0: f64,
    pub n_max: i64,
    pub k0: i64,
    pub tolerance_residual: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let d = IterationConfig::default();
        ScheduleSection { theta0: d.theta0, n_max: d.n_max as i64, k0: d.k0 as i64, tolerance_residual: d.tolerance_residual }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsSection {
    /// `(k, ell, lambda)` triples tracked by the drivers.
    pub track: Vec<(i64, f64, f64)>,
    /// Weight exponent of residuals and energy estimates.
    pub ell: f64,
}

impl Default for NormsSection {
    fn default() -> Self {
        NormsSection { track: vec![(1, 1.0, 0.0)], ell: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub inner_solver: InnerSolver,
    pub tangential_index_mode: TangentialIndexMode,
    pub track_lambda: bool,
    pub inner_sweeps: i64,
    pub inner_tol: f64,
    pub picard_max: i64,
    pub picard_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let it = IterationConfig::default();
        let or = OracleConfig::default();
        SolverSection {
            inner_solver: it.inner_solver,
            tangential_index_mode: it.tangential_index_mode,
            track_lambda: it.track_lambda,
            inner_sweeps: it.inner_sweeps as i64,
            inner_tol: it.inner_tol,
            picard_max: or.picard_max as i64,
            picard_tol: or.picard_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Seed of the randomized corpora.
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "runs".into(), seed: 7 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSection::default(),
            shear: ShearSection::default(),
            perturbation: PerturbationSection::default(),
            schedule: ScheduleSection::default(),
            norms: NormsSection::default(),
            solver: SolverSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// A configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// `key` is absent.
fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(n + 1);
            }
            continue;
        }
        if current == section {
            if let (Some(k), Some((lhs, _))) = (key, line.split_once('=')) {
                if lhs.trim() == k {
                    return Some(n + 1);
                }
            }
        }
    }
    header
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    /// Parse and validate configuration text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            ConfigError { line, message: e.message().to_string() }
        })?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    /// Validate values; `text` (when available) is used to point at lines.
    pub fn validate_with(&self, text: &str) -> Result<(), ConfigError> {
        let err = |section: &str, key: Option<&str>, message: String| ConfigError { line: locate(text, section, key), message };
        let g = &self.grid;
        for (key, v, min) in [("n_t", g.n_t, 4), ("n_x", g.n_x, 4), ("n_y", g.n_y, 8)] {
            if v < min {
                return Err(err("grid", Some(key), format!("grid.{key} = {v}: must be an integer >= {min}")));
            }
        }
        for (key, v) in [("t_final", g.t_final), ("y_max", g.y_max), ("l_x", g.l_x)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err("grid", Some(key), format!("grid.{key} = {v}: must be finite and > 0")));
            }
        }
        self.grid_spec().map_err(|e| err("grid", None, e.to_string()))?;
        let sh = &self.shear;
        if !(sh.width > 0.0 && sh.width.is_finite()) {
            return Err(err("shear", Some("width"), format!("shear.width = {}: must be > 0", sh.width)));
        }
        if !(sh.a > 0.0 && sh.a.is_finite()) {
            return Err(err("shear", Some("a"), format!("shear.a = {}: must be > 0", sh.a)));
        }
        let eps = self.perturbation.epsilon;
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(err("perturbation", Some("epsilon"), format!("perturbation.epsilon = {eps}: must be finite and >= 0")));
        }
        let sc = &self.schedule;
        if !(sc.theta0 >= 4.0 && sc.theta0.is_finite()) {
            return Err(err("schedule", Some("theta0"), format!("schedule.theta0 = {}: must be >= 4", sc.theta0)));
        }
        if sc.n_max < 1 {
            return Err(err("schedule", Some("n_max"), format!("schedule.n_max = {}: must be >= 1", sc.n_max)));
        }
        if !(1..=2).contains(&sc.k0) {
            return Err(err("schedule", Some("k0"), format!("schedule.k0 = {}: must be 1 or 2", sc.k0)));
        }
        if !(sc.tolerance_residual >= 0.0) {
            return Err(err("schedule", Some("tolerance_residual"), "schedule.tolerance_residual must be >= 0".into()));
        }
        for &(k, ell, lambda) in &self.norms.track {
            if !(0..=prandtl_core::norms::MAX_NORM_ORDER as i64).contains(&k) {
                return Err(err(
                    "norms",
                    Some("track"),
                    format!("norms.track: k = {k} must lie in 0..={}", prandtl_core::norms::MAX_NORM_ORDER),
                ));
            }
            if !ell.is_finite() || !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(err("norms", Some("track"), format!("norms.track: ({k}, {ell}, {lambda}) needs finite ell and lambda >= 0")));
            }
        }
        if !self.norms.ell.is_finite() {
            return Err(err("norms", Some("ell"), "norms.ell must be finite".into()));
        }
        let so = &self.solver;
        if so.inner_sweeps < 1 {
            return Err(err("solver", Some("inner_sweeps"), format!("solver.inner_sweeps = {}: must be >= 1", so.inner_sweeps)));
        }
        if so.picard_max < 1 {
            return Err(err("solver", Some("picard_max"), format!("solver.picard_max = {}: must be >= 1", so.picard_max)));
        }
        for (key, v) in [("inner_tol", so.inner_tol), ("picard_tol", so.picard_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err("solver", Some(key), format!("solver.{key} = {v}: must be > 0")));
            }
        }
        if self.output.dir.trim().is_empty() {
            return Err(err("output", Some("dir"), "output.dir must not be empty".into()));
        }
        Ok(())
    }

    /// The config as it would be written to a file.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes to TOML")
    }

    pub fn grid_spec(&self) -> prandtl_core::Result<GridSpec> {
        let g = &self.grid;
        let count = |v: i64| usize::try_from(v).unwrap_or(0);
        GridSpec::new(g.t_final, g.y_max, g.l_x, count(g.n_t), count(g.n_x), count(g.n_y))
    }

    pub fn profile(&self) -> ShearProfile {
        match self.shear.profile {
            ProfileKind::Erf => ShearProfile::Erf { width: self.shear.width },
            ProfileKind::ExpSaturating => ShearProfile::ExpSaturating { a: self.shear.a },
        }
    }

    /// `(k, ell, lambda)` triples with `k` as an order.
    pub fn tracked(&self) -> Vec<(usize, f64, f64)> {
        self.norms.track.iter().map(|&(k, ell, lambda)| (k as usize, ell, lambda)).collect()
    }

    pub fn iteration(&self) -> IterationConfig {
        IterationConfig {
            epsilon: self.perturbation.epsilon,
            k0: self.schedule.k0 as usize,
            theta0: self.schedule.theta0,
            n_max: self.schedule.n_max as usize,
            inner_solver: self.solver.inner_solver,
            monitor_orders: self.tracked().iter().map(|&(k, ell, _)| (k, ell)).collect(),
            tolerance_residual: self.schedule.tolerance_residual,
            ell: self.norms.ell,
            inner_sweeps: self.solver.inner_sweeps as usize,
            inner_tol: self.solver.inner_tol,
            track_lambda: self.solver.track_lambda,
            tangential_index_mode: self.solver.tangential_index_mode,
        }
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            picard_max: self.solver.picard_max as usize,
            picard_tol: self.solver.picard_tol,
            ..OracleConfig::default()
        }
    }
}
