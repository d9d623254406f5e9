//! Trajectory optimization: forward-Euler transcription, an augmented
//! Lagrangian for the constraints and L-BFGS for the inner problems.

mod init;
mod lbfgs;
mod problem;

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ergodic::{coverage_field, ergodic_metric_value, Trajectory};
use crate::error::{Error, Result};

pub use init::{initial_trajectory, InitKind};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult};
pub use problem::{
    augmented_lagrangian_value_and_grad, transcribe, AugLagState, EtoModel, EtoProblem, Transcription, Violations,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtoConfig {
    pub outer_iters: usize,
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub constraint_tol: f64,
    pub inner: LbfgsConfig,
    pub seed: u64,
    /// Extra runs from randomly perturbed initial trajectories; the best
    /// feasible result is kept.
    pub restarts: usize,
    /// Perturbation amplitude for restarts, in units of the sensor width.
    pub restart_amplitude: f64,
    /// Restrict each footprint to vertices within six sensor widths.
    pub truncate_footprint: bool,
    /// Divide the metric by its value at the initial trajectory inside the
    /// augmented Lagrangian.
    pub scale_objective: bool,
}

impl Default for EtoConfig {
    fn default() -> Self {
        EtoConfig {
            outer_iters: 20,
            rho0: 10.0,
            rho_growth: 10.0,
            rho_max: 1e8,
            constraint_tol: 1e-6,
            inner: LbfgsConfig {
                max_iters: 5000,
                rel_tol: 1e-6,
                ..LbfgsConfig::default()
            },
            seed: 0,
            restarts: 0,
            restart_amplitude: 0.5,
            truncate_footprint: true,
            scale_objective: false,
        }
    }
}

impl EtoConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.rho0 > 0.0 && self.rho_growth >= 1.0 && self.rho_max >= self.rho0) {
            return Err(Error::Config("penalty schedule needs rho0 > 0, growth >= 1, rho_max >= rho0".into()));
        }
        if !(self.constraint_tol > 0.0) {
            return Err(Error::Config("constraint_tol must be positive".into()));
        }
        if !(self.restart_amplitude >= 0.0) {
            return Err(Error::Config("restart_amplitude must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtoResult {
    #[serde(skip)]
    pub trajectory: Trajectory,
    /// Metric of the returned trajectory with untruncated footprints.
    pub metric: f64,
    pub initial_metric: f64,
    pub violations: Violations,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub rho: f64,
    /// Which start produced the result: 0 is the given initial trajectory.
    pub attempt: usize,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct Checkpoint {
    attempt: usize,
    outer: usize,
    objective: f64,
    defect: f64,
    clearance: f64,
    bound: f64,
    rho: f64,
    inner_iterations: usize,
    inner_grad_inf: f64,
    inner_converged: bool,
}

struct Attempt {
    z: Vec<f64>,
    converged: bool,
    violations: Violations,
    outer: usize,
    inner: usize,
    evaluations: usize,
    rho: f64,
}

fn run_attempt(
    model: &EtoModel,
    config: &EtoConfig,
    z0: Vec<f64>,
    attempt: usize,
    log: &mut Option<&mut dyn Write>,
) -> Result<Attempt> {
    let tr = &model.transcription;
    let mut state = AugLagState::new(tr, config.rho0);
    let mut z = z0;
    let mut prev_violation = f64::INFINITY;
    let mut out = Attempt {
        z: Vec::new(),
        converged: false,
        violations: Violations::default(),
        outer: 0,
        inner: 0,
        evaluations: 0,
        rho: config.rho0,
    };
    for outer in 0..config.outer_iters {
        let res = lbfgs_minimize(
            |x| augmented_lagrangian_value_and_grad(model, &state, x),
            std::mem::take(&mut z),
            &config.inner,
        )?;
        z = res.x;
        out.outer = outer + 1;
        out.inner += res.iterations;
        out.evaluations += res.evaluations;
        let violations = model.violations(&z);
        let objective = model.objective.value(&tr.unpack(&z).0)?;
        log::debug!(
            "attempt {attempt} outer {outer}: E = {objective:.6e}, violation = {:.3e}, rho = {:.1e}, inner {} its, |g| = {:.2e}{}",
            violations.max(),
            state.rho,
            res.iterations,
            res.grad_inf,
            if res.converged { "" } else { " (not converged)" }
        );
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::to_string(&Checkpoint {
                attempt,
                outer,
                objective,
                defect: violations.defect,
                clearance: violations.clearance,
                bound: violations.bound,
                rho: state.rho,
                inner_iterations: res.iterations,
                inner_grad_inf: res.grad_inf,
                inner_converged: res.converged,
            })
            .expect("checkpoint serializes");
            writeln!(w, "{line}").map_err(|e| Error::io("<checkpoint log>", e))?;
        }
        out.violations = violations;
        out.rho = state.rho;
        let violation = violations.max();
        if violation <= config.constraint_tol && res.converged {
            out.converged = true;
            break;
        }
        let (eq, ineq) = model.constraints(&z);
        let rho = state.rho;
        state.lambda.iter_mut().zip(&eq).for_each(|(l, c)| *l += rho * c);
        state.mu.iter_mut().zip(&ineq).for_each(|(m, g)| *m = (*m + rho * g).max(0.0));
        if violation > config.constraint_tol && violation > 0.25 * prev_violation {
            state.rho = (state.rho * config.rho_growth).min(config.rho_max);
        }
        prev_violation = violation;
    }
    out.z = z;
    Ok(out)
}

/// Optimize `problem` starting from its initial trajectory. With restarts,
/// additional starts perturb the free states of the initial trajectory and
/// the best converged result (lowest metric) is returned.
pub fn solve_eto(problem: &EtoProblem, config: &EtoConfig, mut log: Option<&mut dyn Write>) -> Result<EtoResult> {
    config.validate()?;
    let clock = Instant::now();
    let mut model = EtoModel::new(problem, config.truncate_footprint)?;
    let dense_metric = |traj: &Trajectory| -> Result<f64> {
        let cov = coverage_field(&problem.model, traj, problem.mesh)?;
        ergodic_metric_value(problem.basis, &problem.weights, problem.map, &cov)
    };
    let initial_metric = dense_metric(&problem.initial)?;
    if config.scale_objective && initial_metric > 0.0 {
        model.objective_scale = 1.0 / initial_metric;
    }
    let tr = &model.transcription;
    let z0 = tr.pack(&problem.initial)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let amplitude = config.restart_amplitude * problem.model.sigma();
    let mut best: Option<(usize, Attempt, f64)> = None;
    let (mut outer_total, mut inner_total, mut evals_total) = (0, 0, 0);
    for attempt in 0..=config.restarts {
        let start = if attempt == 0 {
            z0.clone()
        } else {
            let (mut states, _) = tr.unpack(&z0);
            let last = if problem.fix_end { states.len() - 1 } else { states.len() };
            for x in &mut states[1..last] {
                for v in x.iter_mut() {
                    *v += amplitude * rng.random_range(-1.0..1.0);
                }
            }
            tr.pack(&Trajectory::from_states(states, problem.dt)?)?
        };
        let result = match run_attempt(&model, config, start, attempt, &mut log) {
            Ok(r) => r,
            Err(e) if attempt > 0 => {
                log::warn!("restart {attempt} failed: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        outer_total += result.outer;
        inner_total += result.inner;
        evals_total += result.evaluations;
        let metric = dense_metric(&tr.trajectory(&result.z)?)?;
        let better = match &best {
            None => true,
            Some((_, b, m)) => (result.converged && !b.converged) || (result.converged == b.converged && metric < *m),
        };
        if better {
            best = Some((attempt, result, metric));
        }
    }
    let (attempt, result, metric) = best.expect("the first attempt always produces a result");
    Ok(EtoResult {
        trajectory: tr.trajectory(&result.z)?,
        metric,
        initial_metric,
        violations: result.violations,
        converged: result.converged,
        outer_iterations: outer_total,
        inner_iterations: inner_total,
        evaluations: evals_total,
        rho: result.rho,
        attempt,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}
