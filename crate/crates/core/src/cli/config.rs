use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::AnalyticDomain;
use crate::ergodic::{AnalyticCoverage, WeightScheme};
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::mesh::{MeshFormat, TurbineParams};
use crate::optim::{EtoConfig, InitKind};

use super::presets;

/// Where the surface comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<MeshFormat>,
        /// Recenter the bounding box on the origin and rescale uniformly so
        /// its largest side has this length.
        #[serde(default)]
        fit_extent: Option<f64>,
    },
    /// `n x n` vertex grid on the unit square.
    UnitSquare { n: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    UvSphere { radius: f64, rings: usize, segments: usize },
    Icosphere { level: usize, radius: f64 },
    Torus { major: f64, minor: f64, n_major: usize, n_minor: usize },
    Turbine {
        #[serde(default)]
        params: TurbineParams,
    },
}

/// Where the information density comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    Uniform,
    /// Per-vertex channel stored in the mesh file.
    Channel { name: String },
    /// Sidecar CSV with `vertex_index,density` rows.
    Csv { path: PathBuf },
    /// `exp(-|v - center|^2 / (2 width^2))` in ambient distance.
    Bump { center: Point3, width: f64 },
}

/// Reference evaluation with a closed-form basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticReference {
    pub domain: AnalyticDomain,
    pub basis_size: usize,
    /// Gauss-Legendre nodes per axis (rectangle) or per polar angle (sphere,
    /// with twice as many azimuthal nodes).
    pub quadrature: usize,
    pub coverage: AnalyticCoverage,
}

impl Default for AnalyticReference {
    fn default() -> Self {
        AnalyticReference {
            domain: AnalyticDomain::Rectangle { lx: 1.0, ly: 1.0 },
            basis_size: 100,
            quadrature: 128,
            coverage: AnalyticCoverage::Point,
        }
    }
}

/// Per-axis bounds on the robot position; `null` leaves an axis free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBox {
    pub lower: [Option<f64>; 3],
    pub upper: [Option<f64>; 3],
}

impl StateBox {
    /// Bounds with `-inf`/`+inf` for free axes.
    pub fn as_bounds(&self) -> (Point3, Point3) {
        (
            self.lower.map(|v| v.unwrap_or(f64::NEG_INFINITY)),
            self.upper.map(|v| v.unwrap_or(f64::INFINITY)),
        )
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub mesh: MeshSource,
    pub map: MapSource,
    /// Number of eigenpairs requested (extended to close a degenerate cluster).
    pub basis_size: usize,
    pub eigen_tolerance: f64,
    pub weights: WeightScheme,
    pub sigma: f64,
    pub horizon: usize,
    pub dt: f64,
    /// Per-axis speed limit `|u_a| <= limit_a` (m/s); absent means unbounded.
    pub speed_limit: Option<Point3>,
    pub clearance: f64,
    pub state_box: Option<StateBox>,
    pub init: InitKind,
    pub fix_end: bool,
    pub solver: EtoConfig,
    pub analytic: Option<AnalyticReference>,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// Write one JSON line per outer iteration to `checkpoints.jsonl`.
    pub checkpoint_log: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            mesh: MeshSource::UnitSquare { n: 50 },
            map: MapSource::Uniform,
            basis_size: 100,
            eigen_tolerance: crate::spectral::DEFAULT_EIGEN_TOLERANCE,
            weights: WeightScheme::ExpDecay,
            sigma: 0.1,
            horizon: 100,
            dt: 0.1,
            speed_limit: None,
            clearance: 0.0,
            state_box: None,
            init: InitKind::StraightLine {
                start: [0.1, 0.1, 0.0],
                end: [0.9, 0.9, 0.0],
            },
            fix_end: false,
            solver: EtoConfig::default(),
            analytic: None,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            checkpoint_log: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("sigma", self.sigma)?;
        positive("dt", self.dt)?;
        positive("eigen_tolerance", self.eigen_tolerance)?;
        if self.basis_size == 0 {
            return Err(Error::Config("basis_size must be >= 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!("horizon must be >= 2, got {}", self.horizon)));
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(Error::Config(format!("clearance must be >= 0, got {}", self.clearance)));
        }
        if let Some(s) = self.speed_limit {
            for v in s {
                positive("speed_limit", v)?;
            }
        }
        if let Some(b) = &self.state_box {
            let (lo, hi) = b.as_bounds();
            if (0..3).any(|a| lo[a].is_nan() || hi[a].is_nan() || lo[a] > hi[a]) {
                return Err(Error::Config("state_box bounds must satisfy lower <= upper".into()));
            }
        }
        if let MeshSource::File { path, .. } = &self.mesh {
            if !path.exists() {
                return Err(Error::Config(format!("mesh file {} does not exist", path.display())));
            }
        }
        if let MapSource::Csv { path } = &self.map {
            if !path.exists() {
                return Err(Error::Config(format!("density file {} does not exist", path.display())));
            }
        }
        if let MapSource::Bump { width, .. } = &self.map {
            positive("bump width", *width)?;
        }
        if let InitKind::File { path } = &self.init {
            if !path.exists() {
                return Err(Error::Config(format!("initial trajectory {} does not exist", path.display())));
            }
        }
        if let Some(a) = &self.analytic {
            if a.basis_size == 0 || a.quadrature < 2 {
                return Err(Error::Config("analytic reference needs basis_size >= 1 and quadrature >= 2".into()));
            }
        }
        self.solver.validate()
    }
}

/// Overlay `patch` onto `base`, recursing into objects. Tagged enum objects
/// whose `kind` changes are replaced rather than merged.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && same_kind(slot, &v) => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Apply `key.path=value`; the value is parsed as JSON and falls back to a
/// plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("override key {key:?} has an empty component")));
        }
        if !slot.is_object() {
            *slot = Value::Object(Default::default());
        }
        let obj = slot.as_object_mut().expect("just made an object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split always yields at least one component")
}

/// Command-line layers on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Build the effective configuration: preset (from the flag or the file's
/// `preset` key) or defaults, then the file, then overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let file_doc = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Some(v)
        }
        None => None,
    };
    resolve_config_value(file_doc, overrides)
}

/// [`resolve_config`] for an already parsed configuration document.
pub fn resolve_config_value(file_doc: Option<Value>, overrides: &Overrides) -> Result<RunConfig> {
    if file_doc.as_ref().is_some_and(|d| !d.is_object()) {
        return Err(Error::Config("configuration top level must be an object".into()));
    }
    let preset = overrides.preset.clone().or_else(|| {
        file_doc
            .as_ref()
            .and_then(|d| d.get("preset"))
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    let base = match &preset {
        Some(name) => presets::preset(name)?,
        None => RunConfig::default(),
    };
    let mut doc = serde_json::to_value(&base).expect("configs serialize");
    if let Some(f) = file_doc {
        merge_json(&mut doc, f);
    }
    for s in &overrides.set {
        apply_override(&mut doc, s)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
    cfg.preset = preset;
    if let Some(d) = &overrides.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = overrides.seed {
        cfg.solver.seed = s;
    }
    if let Some(c) = &overrides.cache_dir {
        cfg.cache_dir = Some(c.clone());
    }
    Ok(cfg)
}
