//! Experiment configuration: a TOML file with one section per concern.
//!
//! ```toml
//! task = "if-surface"
//! seed = 7
//!
//! [model]
//! preset = "paper-toeplitz"
//!
//! [penalty]
//! lambda = 8e-4
//!
//! [plugin]
//! kind = "spearman"
//!
//! [grid]
//! axes = [1, 2]
//! min = -6.0
//! max = 6.0
//! step = 0.25
//! ```
//!
//! Matrices are row-major lists. Indices in the file (`axes`, `components`)
//! are 1-based.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use rglasso::asv::{default_quadrature, DEFAULT_MC_SAMPLES, DEFAULT_ORDER};
use rglasso::{GaussianModel, McdOptions, PenaltySpec, PluginKind, QuadratureSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest number of grid points a single run may evaluate.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    IfSurface,
    ScSurface,
    GesScan,
    MaxDirection,
    Asv,
    EfficiencyTable,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::IfSurface => "if-surface",
            Task::ScSurface => "sc-surface",
            Task::GesScan => "ges-scan",
            Task::MaxDirection => "max-direction",
            Task::Asv => "asv",
            Task::EfficiencyTable => "efficiency-table",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Data matrix for `solve` (CSV, one observation per row).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltyConfig>,
    #[serde(default)]
    pub plugin: PluginConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub sc: ScConfig,
    #[serde(default)]
    pub asv: AsvConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reweight: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

fn default_kind() -> String {
    "classical".to_string()
}

impl Default for PluginConfig {
    fn default() -> Self {
        PluginConfig { kind: default_kind(), subset_fraction: None, reweight: None, starts: None, cutoff: None }
    }
}

/// Contamination points, given either as a regular grid over one or two
/// coordinates, as explicit points, or (for GES scans) as radii along
/// directions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Values of the coordinates not on a grid axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScConfig {
    #[serde(default = "default_sc_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_sc_n() -> usize {
    1000
}

fn default_replications() -> usize {
    50
}

impl Default for ScConfig {
    fn default() -> Self {
        ScConfig { n: default_sc_n(), replications: default_replications() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsvConfig {
    /// `gauss-hermite` or `monte-carlo`; by default Monte Carlo for the
    /// quadrant kind and Gauss-Hermite otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<String>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<String>>,
    #[serde(default = "default_components")]
    pub components: Vec<[usize; 2]>,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

fn default_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_components() -> Vec<[usize; 2]> {
    vec![[1, 1], [2, 2], [2, 1]]
}

impl Default for AsvConfig {
    fn default() -> Self {
        AsvConfig { quadrature: None, order: default_order(), samples: default_samples(), kinds: None, components: default_components() }
    }
}

fn invalid(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl FromStr for ExperimentConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

impl ExperimentConfig {
    /// Read a config file; a relative `data` path is taken relative to the
    /// file and made absolute so the manifest echo stays usable elsewhere.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig = text.parse().map_err(|e: CliError| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        if let Some(data) = &config.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                let joined = base.join(data);
                config.data = Some(joined.canonicalize().unwrap_or(joined));
            }
        }
        Ok(config)
    }

    /// Canonical TOML text of this config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn resolve(&self, task: Task) -> Result<Resolved, CliError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(invalid("task", format!("config declares '{t}' but '{task}' was requested")));
            }
        }
        let model = self.model_of()?;
        let p = model.dim();
        let kind = self.kind_of()?;
        let needs_penalty = matches!(task, Task::Solve | Task::IfSurface | Task::ScSurface | Task::Asv | Task::EfficiencyTable);
        let penalty = match (&self.penalty, needs_penalty) {
            (Some(pc), _) => Some(penalty_of(pc)?),
            (None, true) => return Err(invalid("penalty.lambda", format!("missing; task '{task}' needs a penalty"))),
            (None, false) => None,
        };
        let needs_functional = matches!(task, Task::IfSurface | Task::GesScan | Task::Asv | Task::EfficiencyTable);
        if needs_functional && !kind.has_functional() {
            return Err(invalid("plugin.kind", format!("'{kind}' has no functional version, so task '{task}' is unavailable")));
        }
        if task == Task::MaxDirection {
            if !matches!(kind, PluginKind::Classical) {
                return Err(invalid("plugin.kind", "max-direction applies to the classical plug-in"));
            }
            if penalty.map(|pen| pen.lambda != 0.0).unwrap_or(false) {
                return Err(invalid("penalty.lambda", "max-direction is defined for the unpenalised problem (lambda = 0)"));
            }
        }
        if self.data.is_some() && task != Task::Solve {
            return Err(invalid("data", format!("only used by 'solve', not '{task}'")));
        }
        let grid = match task {
            Task::IfSurface | Task::ScSurface => Some(self.grid_points(p)?),
            _ => None,
        };
        let scan = if task == Task::GesScan { Some(self.scan_of(p)?) } else { None };
        if task == Task::ScSurface {
            if self.sc.n < 4 {
                return Err(invalid("sc.n", "must be at least 4"));
            }
            if matches!(kind, PluginKind::FastMcd(_)) && self.sc.n <= 2 * p {
                return Err(invalid("sc.n", "FastMCD needs n > 2p"));
            }
            if self.sc.replications < 1 {
                return Err(invalid("sc.replications", "must be at least 1"));
            }
        }
        let (kinds, components) = if matches!(task, Task::Asv | Task::EfficiencyTable) {
            (self.kinds_of(task, kind)?, self.components_of(p)?)
        } else {
            (Vec::new(), Vec::new())
        };
        if matches!(task, Task::Asv | Task::EfficiencyTable) {
            for k in &kinds {
                self.quadrature_for(k)?;
            }
        }
        Ok(Resolved { task, model, penalty, kind, grid, scan, kinds, components, config: self.clone() })
    }

    fn model_of(&self) -> Result<GaussianModel, CliError> {
        let m = &self.model;
        match (&m.preset, &m.sigma) {
            (Some(_), Some(_)) => Err(invalid("model", "give either preset or sigma, not both")),
            (None, None) => Err(invalid("model", "missing; give preset = \"paper-toeplitz\" or p and sigma")),
            (Some(name), None) => {
                let model = match name.as_str() {
                    "paper-toeplitz" => GaussianModel::paper_toeplitz(),
                    "identity" => GaussianModel::identity(m.p.unwrap_or(3)).map_err(|e| invalid("model.p", e))?,
                    other => return Err(invalid("model.preset", format!("unknown preset '{other}'"))),
                };
                if let Some(p) = m.p {
                    if p != model.dim() {
                        return Err(invalid("model.p", format!("{p} does not match preset dimension {}", model.dim())));
                    }
                }
                Ok(model)
            }
            (None, Some(values)) => {
                let p = m.p.ok_or_else(|| invalid("model.p", "missing; required with sigma"))?;
                if values.len() != p * p {
                    return Err(invalid("model.sigma", format!("has {} entries, expected p^2 = {}", values.len(), p * p)));
                }
                GaussianModel::new(DMatrix::from_row_slice(p, p, values)).map_err(|e| invalid("model.sigma", e))
            }
        }
    }

    fn kind_of(&self) -> Result<PluginKind, CliError> {
        let pc = &self.plugin;
        let kind: PluginKind = pc.kind.parse().map_err(|e| invalid("plugin.kind", e))?;
        let mcd_fields = pc.subset_fraction.is_some() || pc.reweight.is_some() || pc.starts.is_some() || pc.cutoff.is_some();
        match kind {
            PluginKind::FastMcd(mut opts) => {
                if let Some(v) = pc.subset_fraction {
                    opts.subset_fraction = v;
                }
                if let Some(v) = pc.reweight {
                    opts.reweight = v;
                }
                if let Some(v) = pc.starts {
                    opts.starts = v;
                }
                if let Some(v) = pc.cutoff {
                    opts.cutoff = v;
                }
                opts.seed = self.seed;
                opts.validate().map_err(|e| invalid("plugin", e))?;
                Ok(PluginKind::FastMcd(opts))
            }
            _ if mcd_fields => Err(invalid("plugin", "subset_fraction, reweight, starts and cutoff apply only to fast-mcd")),
            k => Ok(k),
        }
    }

    fn grid_points(&self, p: usize) -> Result<Vec<DVector<f64>>, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| invalid("grid", "missing"))?;
        if g.radii.is_some() || g.directions.is_some() {
            return Err(invalid("grid", "radii and directions are only used by ges-scan"));
        }
        let pts = if let Some(points) = &g.points {
            if g.axes.is_some() || g.min.is_some() || g.max.is_some() || g.step.is_some() {
                return Err(invalid("grid", "give either points or axes/min/max/step"));
            }
            points
                .iter()
                .map(|z| {
                    if z.len() != p {
                        Err(invalid("grid.points", format!("point {z:?} does not have {p} coordinates")))
                    } else {
                        Ok(DVector::from_column_slice(z))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let axes = g.axes.as_ref().ok_or_else(|| invalid("grid.axes", "missing"))?;
            if axes.is_empty() || axes.len() > 2 {
                return Err(invalid("grid.axes", "give one or two coordinates"));
            }
            if axes.iter().any(|&a| a < 1 || a > p) || (axes.len() == 2 && axes[0] == axes[1]) {
                return Err(invalid("grid.axes", format!("coordinates must be distinct and in 1..={p}")));
            }
            let min = g.min.ok_or_else(|| invalid("grid.min", "missing"))?;
            let max = g.max.ok_or_else(|| invalid("grid.max", "missing"))?;
            let step = g.step.ok_or_else(|| invalid("grid.step", "missing"))?;
            let values = axis_values(min, max, step)?;
            let base = match &g.base {
                Some(b) if b.len() != p => return Err(invalid("grid.base", format!("has {} entries, expected {p}", b.len()))),
                Some(b) => DVector::from_column_slice(b),
                None => DVector::zeros(p),
            };
            let count = values.len().pow(axes.len() as u32);
            if count > MAX_GRID_POINTS {
                return Err(CliError::Budget(format!("grid has {count} points, limit {MAX_GRID_POINTS}")));
            }
            let mut out = Vec::with_capacity(count);
            if axes.len() == 1 {
                for &v in &values {
                    let mut z = base.clone();
                    z[axes[0] - 1] = v;
                    out.push(z);
                }
            } else {
                for &u in &values {
                    for &v in &values {
                        let mut z = base.clone();
                        z[axes[0] - 1] = u;
                        z[axes[1] - 1] = v;
                        out.push(z);
                    }
                }
            }
            out
        };
        if pts.is_empty() {
            return Err(invalid("grid", "no points"));
        }
        if pts.len() > MAX_GRID_POINTS {
            return Err(CliError::Budget(format!("grid has {} points, limit {MAX_GRID_POINTS}", pts.len())));
        }
        if pts.iter().any(|z| z.iter().any(|v| !v.is_finite())) {
            return Err(invalid("grid", "points must be finite"));
        }
        Ok(pts)
    }

    fn scan_of(&self, p: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>), CliError> {
        let g = self.grid.as_ref().ok_or_else(|| invalid("grid", "missing; ges-scan needs grid.radii"))?;
        let radii = g.radii.clone().ok_or_else(|| invalid("grid.radii", "missing"))?;
        if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(invalid("grid.radii", "must be a nonempty list of finite nonnegative numbers"));
        }
        let directions = match &g.directions {
            Some(ds) => ds
                .iter()
                .map(|d| {
                    if d.len() != p || !d.iter().any(|v| *v != 0.0) || d.iter().any(|v| !v.is_finite()) {
                        Err(invalid("grid.directions", format!("{d:?} is not a nonzero vector of length {p}")))
                    } else {
                        Ok(DVector::from_column_slice(d))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => (0..p).map(|j| DVector::from_fn(p, |i, _| f64::from(u8::from(i == j)))).collect(),
        };
        if directions.is_empty() {
            return Err(invalid("grid.directions", "empty"));
        }
        Ok((radii, directions))
    }

    fn kinds_of(&self, task: Task, kind: PluginKind) -> Result<Vec<PluginKind>, CliError> {
        let kinds = match (&self.asv.kinds, task) {
            (Some(names), _) => names.iter().map(|n| n.parse().map_err(|e| invalid("asv.kinds", e))).collect::<Result<Vec<PluginKind>, _>>()?,
            (None, Task::Asv) => vec![kind],
            (None, _) => vec![PluginKind::GaussRank, PluginKind::Kendall, PluginKind::Spearman, PluginKind::Quadrant],
        };
        if kinds.is_empty() {
            return Err(invalid("asv.kinds", "empty"));
        }
        if task == Task::Asv && kinds.len() != 1 {
            return Err(invalid("asv.kinds", "asv takes a single kind; use plugin.kind"));
        }
        if kinds.iter().any(|k| !k.has_functional()) {
            return Err(invalid("asv.kinds", "fast-mcd has no asymptotic variance here"));
        }
        Ok(kinds)
    }

    fn components_of(&self, p: usize) -> Result<Vec<(usize, usize)>, CliError> {
        if self.asv.components.is_empty() {
            return Err(invalid("asv.components", "empty"));
        }
        self.asv
            .components
            .iter()
            .map(|&[i, j]| {
                if i < 1 || j < 1 || i > p || j > p {
                    Err(invalid("asv.components", format!("[{i}, {j}] outside 1..={p}")))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect()
    }

    /// Integration rule for `kind`, from `[asv]` or the per-kind default.
    pub fn quadrature_for(&self, kind: &PluginKind) -> Result<QuadratureSpec, CliError> {
        let q = match self.asv.quadrature.as_deref() {
            None => default_quadrature(kind, self.seed),
            Some("gauss-hermite") => QuadratureSpec::gauss_hermite(self.asv.order),
            Some("monte-carlo") => QuadratureSpec::monte_carlo(self.asv.samples, self.seed),
            Some(other) => return Err(invalid("asv.quadrature", format!("unknown rule '{other}'"))),
        };
        q.map_err(|e| invalid("asv", e))
    }
}

fn penalty_of(pc: &PenaltyConfig) -> Result<PenaltySpec, CliError> {
    let mut spec = PenaltySpec::new(pc.lambda).map_err(|e| invalid("penalty.lambda", e))?;
    if let Some(t) = pc.tolerance {
        spec = spec.with_tolerance(t).map_err(|e| invalid("penalty.tolerance", e))?;
    }
    if let Some(m) = pc.max_iter {
        if m == 0 {
            return Err(invalid("penalty.max_iter", "must be positive"));
        }
        spec = spec.with_max_iter(m);
    }
    Ok(spec)
}

/// `min, min + step, ..., max`; the range must be a whole number of steps.
fn axis_values(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite() && max.is_finite() && min <= max) {
        return Err(invalid("grid.min", "min and max must be finite with min <= max"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("grid.step", "must be positive"));
    }
    let k = ((max - min) / step).round();
    if ((min + k * step) - max).abs() > 1e-9 * (1.0 + max.abs()) {
        return Err(invalid("grid.step", format!("range [{min}, {max}] is not a whole number of steps of {step}")));
    }
    if k + 1.0 > MAX_GRID_POINTS as f64 {
        return Err(CliError::Budget(format!("axis has {} values, limit {MAX_GRID_POINTS}", k + 1.0)));
    }
    let k = k as usize;
    // the last value is pinned to max so rounding never moves it
    Ok((0..=k).map(|i| if i == k { max } else { min + i as f64 * step }).collect())
}

/// A validated config with its library objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub task: Task,
    pub model: GaussianModel,
    pub penalty: Option<PenaltySpec>,
    pub kind: PluginKind,
    pub grid: Option<Vec<DVector<f64>>>,
    pub scan: Option<(Vec<f64>, Vec<DVector<f64>>)>,
    pub kinds: Vec<PluginKind>,
    pub components: Vec<(usize, usize)>,
    pub config: ExperimentConfig,
}

impl Resolved {
    pub fn mcd_options(&self) -> Option<McdOptions> {
        match self.kind {
            PluginKind::FastMcd(o) => Some(o),
            _ => None,
        }
    }
}
