use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticBasis, AnalyticDomain, QuadratureGrid};
use crate::ergodic::{
    coverage_field, ergodic_metric_value, evaluate_analytic_metric, spectral_weights, InformationMap, SensorModel,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::geom;
use crate::mesh::{
    icosphere, load_mesh, rectangle_grid, torus, unit_square_grid, uv_sphere, wind_turbine, write_ply, MeshFormat,
    PlyEncoding, TriangleMesh,
};
use crate::optim::{initial_trajectory, solve_eto, EtoProblem, EtoResult, Violations};
use crate::sdf::DistanceIndex;
use crate::spectral::{cached_eigenbasis, SpectralBasis};

use super::config::{AnalyticReference, MapSource, MeshSource, RunConfig};

/// Optimizer outcome as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub final_penalty: f64,
    pub attempt: usize,
}

/// Everything a run reports; written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub mesh_hash: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub basis_size_requested: usize,
    /// Basis size after extending over a degenerate cluster.
    pub basis_size: usize,
    /// Metric with the mesh basis.
    pub ergodic_metric: f64,
    /// Metric with the closed-form basis, when configured.
    pub analytic_metric: Option<f64>,
    pub initial_ergodic_metric: Option<f64>,
    pub initial_analytic_metric: Option<f64>,
    pub violations: Violations,
    pub optimizer: Option<OptimizerSummary>,
    pub eigensolve_time_s: f64,
    pub optimize_time_s: f64,
    pub trajectory_file: PathBuf,
    pub config: RunConfig,
}

/// Mesh, basis and map shared by the verbs.
pub struct Pipeline {
    pub mesh: TriangleMesh,
    pub basis: SpectralBasis,
    pub map: InformationMap,
    pub weights: Vec<f64>,
    pub model: SensorModel,
    pub eigensolve_time_s: f64,
}

pub fn build_mesh(source: &MeshSource) -> Result<TriangleMesh> {
    let positive = |n: usize, what: &str| {
        if n >= 2 {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} must be >= 2")))
        }
    };
    Ok(match source {
        MeshSource::File { path, format, fit_extent } => {
            let format = match format {
                Some(f) => *f,
                None => MeshFormat::from_path(path).ok_or_else(|| {
                    Error::Config(format!("cannot infer the mesh format of {}", path.display()))
                })?,
            };
            let mesh = load_mesh(path, format)?;
            match fit_extent {
                None => mesh,
                Some(extent) => {
                    if !(*extent > 0.0) {
                        return Err(Error::Config("fit_extent must be positive".into()));
                    }
                    let (lo, hi) = mesh.bounding_box();
                    let side = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
                    let center = geom::scale(geom::add(lo, hi), 0.5);
                    let s = extent / side;
                    mesh.map_vertices(|v| geom::scale(geom::sub(v, center), s))?
                }
            }
        }
        MeshSource::UnitSquare { n } => {
            positive(*n, "grid size")?;
            unit_square_grid(*n)
        }
        MeshSource::Rectangle { lx, ly, nx, ny } => {
            positive(*nx, "nx")?;
            positive(*ny, "ny")?;
            rectangle_grid(*lx, *ly, *nx, *ny)
        }
        MeshSource::UvSphere { radius, rings, segments } => uv_sphere(*radius, *rings, *segments),
        MeshSource::Icosphere { level, radius } => icosphere(*level, *radius),
        MeshSource::Torus { major, minor, n_major, n_minor } => torus(*major, *minor, *n_major, *n_minor),
        MeshSource::Turbine { params } => wind_turbine(params),
    })
}

pub fn build_map(source: &MapSource, mesh: &TriangleMesh) -> Result<InformationMap> {
    match source {
        MapSource::Uniform => Ok(InformationMap::uniform(mesh)),
        MapSource::Channel { name } => InformationMap::from_channel(mesh, name),
        MapSource::Csv { path } => InformationMap::from_csv(path, mesh),
        MapSource::Bump { center, width } => InformationMap::gaussian_bump(mesh, *center, *width),
    }
}

impl Pipeline {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = build_mesh(&cfg.mesh).map_err(|e| e.in_stage("mesh load"))?;
        log::info!("mesh: {} vertices, {} faces", mesh.vertex_count(), mesh.face_count());
        let clock = Instant::now();
        if let Some(dir) = &cfg.cache_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("eigensolve"))?;
        }
        let basis = cached_eigenbasis(&mesh, cfg.basis_size, cfg.eigen_tolerance, cfg.cache_dir.as_deref())
            .map_err(|e| e.in_stage("eigensolve"))?;
        let eigensolve_time_s = clock.elapsed().as_secs_f64();
        log::info!("basis: {} modes in {eigensolve_time_s:.2} s", basis.len());
        let map = build_map(&cfg.map, &mesh).map_err(|e| e.in_stage("information map"))?;
        let weights = spectral_weights(basis.eigenvalues(), cfg.weights)?;
        let model = SensorModel::new(cfg.sigma)?;
        Ok(Pipeline {
            mesh,
            basis,
            map,
            weights,
            model,
            eigensolve_time_s,
        })
    }

    /// Metric with untruncated footprints.
    pub fn metric(&self, traj: &Trajectory) -> Result<f64> {
        let cov = coverage_field(&self.model, traj, &self.mesh)?;
        ergodic_metric_value(&self.basis, &self.weights, &self.map, &cov)
    }
}

/// Closed-form reference metric; `None` when the map has no closed form.
pub fn analytic_metric(cfg: &RunConfig, reference: &AnalyticReference, traj: &Trajectory) -> Result<Option<f64>> {
    let basis = match reference.domain {
        AnalyticDomain::Rectangle { lx, ly } => AnalyticBasis::rectangle(lx, ly, reference.basis_size)?,
        AnalyticDomain::Sphere { center, radius } => AnalyticBasis::sphere(center, radius, reference.basis_size)?,
    };
    let n = reference.quadrature;
    let grid = match reference.domain {
        AnalyticDomain::Rectangle { lx, ly } => QuadratureGrid::rectangle(lx, ly, n, n),
        AnalyticDomain::Sphere { center, radius } => QuadratureGrid::sphere(center, radius, n, 2 * n),
    };
    let phi: Vec<f64> = match &cfg.map {
        MapSource::Uniform => vec![1.0; grid.len()],
        MapSource::Bump { center, width } => grid
            .points()
            .iter()
            .map(|p| (-0.5 * geom::dist2(*p, *center) / (width * width)).exp())
            .collect(),
        _ => {
            log::warn!("the information map has no closed form; skipping the analytic metric");
            return Ok(None);
        }
    };
    let weights = spectral_weights(basis.eigenvalues(), cfg.weights)?;
    let model = SensorModel::new(cfg.sigma)?;
    evaluate_analytic_metric(&basis, &weights, &grid, &phi, traj, &model, reference.coverage).map(Some)
}

fn trajectory_violations(cfg: &RunConfig, pipeline: &Pipeline, traj: &Trajectory) -> Violations {
    let defect = traj.max_defect();
    let bound = match cfg.speed_limit {
        None => 0.0,
        Some(lim) => traj
            .controls()
            .iter()
            .flat_map(|u| (0..3).map(move |a| u[a].abs() - lim[a]))
            .fold(0.0, f64::max),
    };
    let clearance = if cfg.clearance > 0.0 {
        let sdf = DistanceIndex::build(&pipeline.mesh);
        let last = if cfg.fix_end { traj.states().len() - 1 } else { traj.states().len() };
        traj.states()[1..last]
            .iter()
            .map(|x| cfg.clearance - sdf.signed_distance(*x))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let state_bound = match cfg.state_box {
        None => 0.0,
        Some(b) => {
            let (lo, hi) = b.as_bounds();
            let last = if cfg.fix_end { traj.states().len() - 1 } else { traj.states().len() };
            traj.states()[1..last]
                .iter()
                .flat_map(|x| (0..3).map(move |a| (lo[a] - x[a]).max(x[a] - hi[a])))
                .fold(0.0, f64::max)
        }
    };
    Violations { defect, clearance, state_bound, bound }
}

fn create_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("export"))
}

fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e).in_stage("export"))
}

fn problem_bounds(cfg: &RunConfig) -> ([f64; 3], [f64; 3]) {
    match cfg.speed_limit {
        Some(l) => ([-l[0], -l[1], -l[2]], l),
        None => ([f64::NEG_INFINITY; 3], [f64::INFINITY; 3]),
    }
}

/// Plan a trajectory and write `trajectory.csv`, `coverage.ply` and
/// `report.json` into the output directory.
pub fn run_plan(cfg: &RunConfig) -> Result<RunReport> {
    let pipeline = Pipeline::new(cfg)?;
    let initial = initial_trajectory(&cfg.init, cfg.horizon, cfg.dt).map_err(|e| e.in_stage("initial trajectory"))?;
    let (lower, upper) = problem_bounds(cfg);
    let (state_lower, state_upper) = match cfg.state_box {
        Some(b) => b.as_bounds(),
        None => ([f64::NEG_INFINITY; 3], [f64::INFINITY; 3]),
    };
    let problem = EtoProblem {
        mesh: &pipeline.mesh,
        basis: &pipeline.basis,
        map: &pipeline.map,
        model: pipeline.model,
        weights: pipeline.weights.clone(),
        horizon: cfg.horizon,
        dt: cfg.dt,
        control_lower: lower,
        control_upper: upper,
        state_lower,
        state_upper,
        clearance: cfg.clearance,
        fix_end: cfg.fix_end,
        initial: initial.clone(),
    };
    create_output_dir(&cfg.output_dir)?;
    let mut log_file = if cfg.checkpoint_log {
        let path = cfg.output_dir.join("checkpoints.jsonl");
        Some(std::fs::File::create(&path).map_err(|e| Error::io(&path, e).in_stage("export"))?)
    } else {
        None
    };
    let result: EtoResult = solve_eto(
        &problem,
        &cfg.solver,
        log_file.as_mut().map(|f| f as &mut dyn std::io::Write),
    )
    .map_err(|e| e.in_stage("optimize"))?;
    if let Some(f) = log_file.as_mut() {
        f.flush().map_err(|e| Error::io(cfg.output_dir.join("checkpoints.jsonl"), e))?;
    }
    log::info!(
        "optimized in {:.2} s: E = {:.6e} (initial {:.6e}), converged = {}",
        result.wall_time_s,
        result.metric,
        result.initial_metric,
        result.converged
    );

    let (analytic, initial_analytic) = match &cfg.analytic {
        Some(reference) => (
            analytic_metric(cfg, reference, &result.trajectory).map_err(|e| e.in_stage("analytic metric"))?,
            analytic_metric(cfg, reference, &initial).map_err(|e| e.in_stage("analytic metric"))?,
        ),
        None => (None, None),
    };

    let dir = &cfg.output_dir;
    let traj_path = dir.join("trajectory.csv");
    result
        .trajectory
        .write_csv(&traj_path)
        .map_err(|e| e.in_stage("export"))?;
    let coverage = coverage_field(&pipeline.model, &result.trajectory, &pipeline.mesh)?;
    write_ply(
        &pipeline.mesh,
        &[("mu", &coverage.mu), ("phi", pipeline.map.density())],
        PlyEncoding::BinaryLittleEndian,
        &dir.join("coverage.ply"),
    )
    .map_err(|e| e.in_stage("export"))?;

    let report = RunReport {
        command: "plan".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mesh_hash: pipeline.mesh.content_hash(),
        vertex_count: pipeline.mesh.vertex_count(),
        face_count: pipeline.mesh.face_count(),
        basis_size_requested: cfg.basis_size,
        basis_size: pipeline.basis.len(),
        ergodic_metric: result.metric,
        analytic_metric: analytic,
        initial_ergodic_metric: Some(result.initial_metric),
        initial_analytic_metric: initial_analytic,
        violations: result.violations,
        optimizer: Some(OptimizerSummary {
            converged: result.converged,
            outer_iterations: result.outer_iterations,
            inner_iterations: result.inner_iterations,
            evaluations: result.evaluations,
            final_penalty: result.rho,
            attempt: result.attempt,
        }),
        eigensolve_time_s: pipeline.eigensolve_time_s,
        optimize_time_s: result.wall_time_s,
        trajectory_file: traj_path,
        config: cfg.clone(),
    };
    write_report(dir, &report)?;
    Ok(report)
}

/// Score an existing trajectory without optimizing; writes `report.json`.
pub fn run_eval(cfg: &RunConfig, trajectory: &Path) -> Result<RunReport> {
    let pipeline = Pipeline::new(cfg)?;
    let traj = Trajectory::read_csv(trajectory).map_err(|e| e.in_stage("trajectory load"))?;
    let metric = pipeline.metric(&traj).map_err(|e| e.in_stage("metric"))?;
    let analytic = match &cfg.analytic {
        Some(reference) => analytic_metric(cfg, reference, &traj).map_err(|e| e.in_stage("analytic metric"))?,
        None => None,
    };
    let report = RunReport {
        command: "eval".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mesh_hash: pipeline.mesh.content_hash(),
        vertex_count: pipeline.mesh.vertex_count(),
        face_count: pipeline.mesh.face_count(),
        basis_size_requested: cfg.basis_size,
        basis_size: pipeline.basis.len(),
        ergodic_metric: metric,
        analytic_metric: analytic,
        initial_ergodic_metric: None,
        initial_analytic_metric: None,
        violations: trajectory_violations(cfg, &pipeline, &traj),
        optimizer: None,
        eigensolve_time_s: pipeline.eigensolve_time_s,
        optimize_time_s: 0.0,
        trajectory_file: trajectory.to_path_buf(),
        config: cfg.clone(),
    };
    create_output_dir(&cfg.output_dir)?;
    write_report(&cfg.output_dir, &report)?;
    Ok(report)
}

/// Write `eigenvalues.csv` and `eigenvectors.ply` (channels `f0`, `f1`, ...).
pub fn run_spectrum(cfg: &RunConfig) -> Result<SpectralBasis> {
    cfg.validate()?;
    let mesh = build_mesh(&cfg.mesh).map_err(|e| e.in_stage("mesh load"))?;
    if let Some(dir) = &cfg.cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("eigensolve"))?;
    }
    let basis = cached_eigenbasis(&mesh, cfg.basis_size, cfg.eigen_tolerance, cfg.cache_dir.as_deref())
        .map_err(|e| e.in_stage("eigensolve"))?;
    let dir = &cfg.output_dir;
    create_output_dir(dir)?;
    let csv_path = dir.join("eigenvalues.csv");
    let mut text = String::from("index,eigenvalue\n");
    for (k, l) in basis.eigenvalues().iter().enumerate() {
        text.push_str(&format!("{k},{l}\n"));
    }
    std::fs::write(&csv_path, text).map_err(|e| Error::io(&csv_path, e).in_stage("export"))?;
    let names: Vec<String> = (0..basis.len()).map(|k| format!("f{k}")).collect();
    let channels: Vec<(&str, &[f64])> = names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), basis.eigenvector(k)))
        .collect();
    write_ply(&mesh, &channels, PlyEncoding::BinaryLittleEndian, &dir.join("eigenvectors.ply"))
        .map_err(|e| e.in_stage("export"))?;
    Ok(basis)
}
