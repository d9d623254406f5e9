use crate::ergodic::{ErgodicObjective, InformationMap, SensorModel, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::mesh::TriangleMesh;
use crate::sdf::DistanceIndex;
use crate::spectral::SpectralBasis;

/// Constrained trajectory optimization over one mesh.
///
/// The start state is the first state of `initial`; with `fix_end` the last
/// state of `initial` is held fixed as well.
#[derive(Debug, Clone)]
pub struct EtoProblem<'a> {
    pub mesh: &'a TriangleMesh,
    pub basis: &'a SpectralBasis,
    pub map: &'a InformationMap,
    pub model: SensorModel,
    pub weights: Vec<f64>,
    pub horizon: usize,
    pub dt: f64,
    /// Per-axis control bounds; infinite entries are unconstrained.
    pub control_lower: Point3,
    pub control_upper: Point3,
    /// Per-axis bounds on the free states; infinite entries are unconstrained.
    pub state_lower: Point3,
    pub state_upper: Point3,
    /// Minimum distance from the surface; 0 disables the constraint.
    pub clearance: f64,
    pub fix_end: bool,
    pub initial: Trajectory,
}

impl EtoProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Parameter(format!("horizon {} must be >= 2", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("time step {} must be positive", self.dt)));
        }
        for (what, lower, upper) in [
            ("control", self.control_lower, self.control_upper),
            ("state", self.state_lower, self.state_upper),
        ] {
            for a in 0..3 {
                let (lo, hi) = (lower[a], upper[a]);
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(Error::Parameter(format!("{what} bounds on axis {a} are not ordered: [{lo}, {hi}]")));
                }
            }
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(Error::Parameter(format!("clearance {} must be >= 0", self.clearance)));
        }
        if self.initial.horizon() != self.horizon {
            return Err(Error::Parameter(format!(
                "initial trajectory has {} steps, expected {}",
                self.initial.horizon(),
                self.horizon
            )));
        }
        if self.weights.len() != self.basis.len() {
            return Err(Error::Parameter(format!(
                "{} weights for {} basis functions",
                self.weights.len(),
                self.basis.len()
            )));
        }
        if self.mesh.vertex_count() != self.basis.vertex_count() || self.map.len() != self.mesh.vertex_count() {
            return Err(Error::Parameter("mesh, basis and information map sizes disagree".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundConstraint {
    axis: usize,
    upper: bool,
    value: f64,
}

/// Layout of the decision vector `[x_1..x_T (x_T omitted if fixed), u_0..u_{T-1}]`
/// and of the constraint vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcription {
    horizon: usize,
    dt: f64,
    start: Point3,
    end: Option<Point3>,
    clearance: f64,
    state_bounds: Vec<BoundConstraint>,
    control_bounds: Vec<BoundConstraint>,
}

fn box_constraints(lower: Point3, upper: Point3) -> Vec<BoundConstraint> {
    let mut out = Vec::new();
    for axis in 0..3 {
        if lower[axis].is_finite() {
            out.push(BoundConstraint { axis, upper: false, value: lower[axis] });
        }
        if upper[axis].is_finite() {
            out.push(BoundConstraint { axis, upper: true, value: upper[axis] });
        }
    }
    out
}

impl BoundConstraint {
    /// Value `g <= 0` and its gradient for the vector `v`.
    fn eval(&self, v: Point3) -> (f64, Point3) {
        let mut grad = [0.0; 3];
        if self.upper {
            grad[self.axis] = 1.0;
            (v[self.axis] - self.value, grad)
        } else {
            grad[self.axis] = -1.0;
            (self.value - v[self.axis], grad)
        }
    }
}

pub fn transcribe(problem: &EtoProblem) -> Transcription {
    let states = problem.initial.states();
    Transcription {
        horizon: problem.horizon,
        dt: problem.dt,
        start: states[0],
        end: problem.fix_end.then(|| states[problem.horizon]),
        clearance: problem.clearance,
        state_bounds: box_constraints(problem.state_lower, problem.state_upper),
        control_bounds: box_constraints(problem.control_lower, problem.control_upper),
    }
}

impl Transcription {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn free_states(&self) -> usize {
        if self.end.is_some() {
            self.horizon - 1
        } else {
            self.horizon
        }
    }

    pub fn n_vars(&self) -> usize {
        3 * (self.free_states() + self.horizon)
    }

    pub fn n_equalities(&self) -> usize {
        3 * self.horizon
    }

    pub fn n_clearance(&self) -> usize {
        if self.clearance > 0.0 {
            self.free_states()
        } else {
            0
        }
    }

    pub fn n_inequalities(&self) -> usize {
        self.n_clearance() + self.free_states() * self.state_bounds.len() + self.horizon * self.control_bounds.len()
    }

    pub fn pack(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.horizon() != self.horizon {
            return Err(Error::Parameter(format!(
                "trajectory has {} steps, expected {}",
                traj.horizon(),
                self.horizon
            )));
        }
        let mut z = Vec::with_capacity(self.n_vars());
        z.extend(traj.states()[1..=self.free_states()].iter().flatten());
        z.extend(traj.controls().iter().flatten());
        Ok(z)
    }

    /// Full state sequence (fixed states included) and controls.
    pub fn unpack(&self, z: &[f64]) -> (Vec<Point3>, Vec<Point3>) {
        debug_assert_eq!(z.len(), self.n_vars());
        let ns = self.free_states();
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(self.start);
        states.extend(z[..3 * ns].chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
        if let Some(end) = self.end {
            states.push(end);
        }
        let controls = z[3 * ns..].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        (states, controls)
    }

    pub fn trajectory(&self, z: &[f64]) -> Result<Trajectory> {
        let (states, controls) = self.unpack(z);
        Trajectory::new(states, controls, self.dt)
    }

    /// `c_t = x_{t+1} - x_t - dt u_t`, three entries per step.
    pub fn defects(&self, states: &[Point3], controls: &[Point3]) -> Vec<f64> {
        states
            .windows(2)
            .zip(controls)
            .flat_map(|(w, u)| (0..3).map(move |a| w[1][a] - w[0][a] - self.dt * u[a]))
            .collect()
    }

    /// Inequality values `g <= 0` with their gradients and the offset of the
    /// variable block they act on: clearance for every free state, the state
    /// box for every free state, then the control box for every step.
    fn inequalities_with_grad(
        &self,
        states: &[Point3],
        controls: &[Point3],
        sdf: Option<&DistanceIndex>,
    ) -> Vec<(f64, Point3, usize)> {
        let ns = self.free_states();
        let mut out = Vec::with_capacity(self.n_inequalities());
        if self.n_clearance() > 0 {
            let sdf = sdf.expect("clearance constraints need a distance index");
            for (t, x) in states[1..=ns].iter().enumerate() {
                let q = sdf.query(*x);
                out.push((self.clearance - q.distance, crate::geom::scale(q.gradient, -1.0), 3 * t));
            }
        }
        for (t, x) in states[1..=ns].iter().enumerate() {
            for b in &self.state_bounds {
                let (g, grad) = b.eval(*x);
                out.push((g, grad, 3 * t));
            }
        }
        for (t, u) in controls.iter().enumerate() {
            for b in &self.control_bounds {
                let (g, grad) = b.eval(*u);
                out.push((g, grad, 3 * ns + 3 * t));
            }
        }
        out
    }

    pub fn inequalities(&self, states: &[Point3], controls: &[Point3], sdf: Option<&DistanceIndex>) -> Vec<f64> {
        self.inequalities_with_grad(states, controls, sdf)
            .into_iter()
            .map(|(g, _, _)| g)
            .collect()
    }

    pub fn violations(&self, states: &[Point3], controls: &[Point3], sdf: Option<&DistanceIndex>) -> Violations {
        let defect = self.defects(states, controls).iter().fold(0.0, |m: f64, c| m.max(c.abs()));
        let ineq = self.inequalities(states, controls, sdf);
        let nc = self.n_clearance();
        let nsb = nc + self.free_states() * self.state_bounds.len();
        let pos = |s: &[f64]| s.iter().fold(0.0, |m: f64, g| m.max(*g));
        Violations {
            defect,
            clearance: pos(&ineq[..nc]),
            state_bound: pos(&ineq[nc..nsb]),
            bound: pos(&ineq[nsb..]),
        }
    }
}

/// Maximum constraint violations of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Violations {
    /// `||c||_inf` over all dynamics defects (m).
    pub defect: f64,
    /// `max(0, r - d(x_t))` over free states (m).
    pub clearance: f64,
    /// Largest state-box excess (m).
    #[serde(default)]
    pub state_bound: f64,
    /// Largest control-box excess (m/s).
    pub bound: f64,
}

impl Violations {
    pub fn max(&self) -> f64 {
        self.defect.max(self.clearance).max(self.state_bound).max(self.bound)
    }
}

/// Multipliers and penalty of the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct AugLagState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: f64,
}

impl AugLagState {
    pub fn new(trans: &Transcription, rho: f64) -> Self {
        AugLagState {
            lambda: vec![0.0; trans.n_equalities()],
            mu: vec![0.0; trans.n_inequalities()],
            rho,
        }
    }
}

/// Everything needed to evaluate the augmented Lagrangian of a problem.
pub struct EtoModel<'a> {
    pub objective: ErgodicObjective<'a>,
    pub transcription: Transcription,
    pub sdf: Option<DistanceIndex>,
    /// Factor applied to the metric inside the augmented Lagrangian.
    pub objective_scale: f64,
}

impl<'a> EtoModel<'a> {
    pub fn new(problem: &EtoProblem<'a>, truncate: bool) -> Result<Self> {
        problem.validate()?;
        let objective = ErgodicObjective::new(
            problem.mesh,
            problem.basis,
            problem.weights.clone(),
            problem.map,
            problem.model,
            truncate,
        )?;
        let transcription = transcribe(problem);
        let sdf = (transcription.n_clearance() > 0).then(|| {
            let idx = DistanceIndex::build(problem.mesh);
            if let Some(w) = idx.warning() {
                log::warn!("{w}");
            }
            idx
        });
        Ok(EtoModel {
            objective,
            transcription,
            sdf,
            objective_scale: 1.0,
        })
    }

    pub fn violations(&self, z: &[f64]) -> Violations {
        let (states, controls) = self.transcription.unpack(z);
        self.transcription.violations(&states, &controls, self.sdf.as_ref())
    }

    /// Equality and inequality constraint values at `z`.
    pub fn constraints(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (states, controls) = self.transcription.unpack(z);
        (
            self.transcription.defects(&states, &controls),
            self.transcription.inequalities(&states, &controls, self.sdf.as_ref()),
        )
    }
}

/// `L_A = s E + sum lambda.c + rho/2 |c|^2 + sum rho/2 [max(0, mu/rho + g)^2 - (mu/rho)^2]`
/// and its gradient with respect to the decision vector.
pub fn augmented_lagrangian_value_and_grad(
    model: &EtoModel,
    state: &AugLagState,
    z: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let tr = &model.transcription;
    if z.len() != tr.n_vars() || state.lambda.len() != tr.n_equalities() || state.mu.len() != tr.n_inequalities() {
        return Err(Error::Parameter("augmented Lagrangian dimensions are inconsistent".into()));
    }
    let (states, controls) = tr.unpack(z);
    let (energy, dx) = model.objective.value_and_gradient(&states)?;
    let scale = model.objective_scale;
    let ns = tr.free_states();
    let t_max = tr.horizon;
    let rho = state.rho;

    let mut grad = vec![0.0; z.len()];
    // d/dx_t for t = 1..=ns lives at 3(t-1).
    let state_slot = |t: usize| -> Option<usize> { (t >= 1 && t <= ns).then(|| 3 * (t - 1)) };
    let control_slot = |t: usize| 3 * ns + 3 * t;
    for t in 1..=ns {
        let s = 3 * (t - 1);
        for a in 0..3 {
            grad[s + a] = scale * dx[t][a];
        }
    }

    let mut value = scale * energy;
    let defects = tr.defects(&states, &controls);
    for t in 0..t_max {
        for a in 0..3 {
            let c = defects[3 * t + a];
            let lam = state.lambda[3 * t + a];
            value += lam * c + 0.5 * rho * c * c;
            let w = lam + rho * c;
            if let Some(s) = state_slot(t + 1) {
                grad[s + a] += w;
            }
            if let Some(s) = state_slot(t) {
                grad[s + a] -= w;
            }
            grad[control_slot(t) + a] -= tr.dt * w;
        }
    }

    let ineq = tr.inequalities_with_grad(&states, &controls, model.sdf.as_ref());
    for (j, (g, dg, slot)) in ineq.iter().enumerate() {
        let mu = state.mu[j];
        let shifted = (mu / rho + g).max(0.0);
        value += 0.5 * rho * (shifted * shifted - (mu / rho) * (mu / rho));
        let w = rho * shifted;
        if w != 0.0 {
            for a in 0..3 {
                grad[slot + a] += w * dg[a];
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::{spectral_weights, WeightScheme};
    use crate::laplace::{assemble_cotan_laplacian, assemble_mass_matrix};
    use crate::mesh::{icosphere, unit_square_grid};
    use crate::spectral::compute_eigenbasis;

    const INF: f64 = f64::INFINITY;

    struct Fixture {
        mesh: TriangleMesh,
        basis: SpectralBasis,
        map: InformationMap,
    }

    impl Fixture {
        fn new(mesh: TriangleMesh, k: usize) -> Self {
            let basis =
                compute_eigenbasis(&assemble_cotan_laplacian(&mesh), &assemble_mass_matrix(&mesh), k, 1e-10).unwrap();
            let map = InformationMap::uniform(&mesh);
            Fixture { mesh, basis, map }
        }

        fn problem(&self, initial: Trajectory, fix_end: bool, clearance: f64, speed: f64) -> EtoProblem<'_> {
            EtoProblem {
                mesh: &self.mesh,
                basis: &self.basis,
                map: &self.map,
                model: SensorModel::new(0.2).unwrap(),
                weights: spectral_weights(self.basis.eigenvalues(), WeightScheme::ExpDecay).unwrap(),
                horizon: initial.horizon(),
                dt: initial.dt(),
                control_lower: [-speed; 3],
                control_upper: [speed; 3],
                state_lower: [-INF; 3],
                state_upper: [INF; 3],
                clearance,
                fix_end,
                initial,
            }
        }
    }

    fn line(n: usize, dt: f64) -> Trajectory {
        let states = (0..=n).map(|t| {
            let s = t as f64 / n as f64;
            [0.2 + 0.6 * s, 0.3 + 0.4 * s * s, 0.1 * s]
        });
        Trajectory::from_states(states.collect(), dt).unwrap()
    }

    #[test]
    fn counts_for_two_steps() {
        let fx = Fixture::new(unit_square_grid(6), 6);
        let free = transcribe(&fx.problem(line(2, 0.1), false, 0.0, INF));
        assert_eq!(free.n_vars(), 12);
        assert_eq!(free.n_equalities(), 6);
        assert_eq!(free.n_inequalities(), 0);
        let fixed = transcribe(&fx.problem(line(2, 0.1), true, 0.0, 1.0));
        assert_eq!(fixed.n_vars(), 9);
        assert_eq!(fixed.n_equalities(), 6);
        // six control bounds per step, no clearance
        assert_eq!(fixed.n_inequalities(), 12);
        let clear = transcribe(&fx.problem(line(2, 0.1), true, 0.05, 1.0));
        assert_eq!(clear.n_clearance(), 1);
        assert_eq!(clear.n_inequalities(), 13);
    }

    #[test]
    fn pack_unpack_round_trip_and_zero_defects() {
        let fx = Fixture::new(unit_square_grid(6), 6);
        let traj = line(7, 0.25);
        for fix_end in [false, true] {
            let tr = transcribe(&fx.problem(traj.clone(), fix_end, 0.0, INF));
            let z = tr.pack(&traj).unwrap();
            assert_eq!(z.len(), tr.n_vars());
            let back = tr.trajectory(&z).unwrap();
            assert_eq!(back, traj);
            let (s, u) = tr.unpack(&z);
            assert!(tr.defects(&s, &u).iter().all(|c| c.abs() < 1e-15));
        }
    }

    #[test]
    fn violations_report_each_family() {
        let fx = Fixture::new(unit_square_grid(6), 6);
        let traj = line(4, 0.1);
        let mut p = fx.problem(traj.clone(), false, 0.0, 1.0);
        p.state_upper = [0.5, INF, INF];
        let tr = transcribe(&p);
        let (mut s, u) = tr.unpack(&tr.pack(&traj).unwrap());
        s[2][1] += 0.01;
        let v = tr.violations(&s, &u, None);
        assert!((v.defect - 0.01).abs() < 1e-12);
        assert!((v.state_bound - 0.3).abs() < 1e-12);
        // the last y step is 0.4 * (1 - 9/16) = 0.175 over dt 0.1, a control of 1.75
        assert!((v.bound - 0.75).abs() < 1e-12, "{}", v.bound);
        assert_eq!(v.clearance, 0.0);
        assert!((v.max() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn feasible_point_with_zero_multipliers_is_the_metric() {
        let fx = Fixture::new(unit_square_grid(8), 10);
        let traj = line(6, 0.1);
        let p = fx.problem(traj.clone(), false, 0.0, 100.0);
        let model = EtoModel::new(&p, false).unwrap();
        let z = model.transcription.pack(&traj).unwrap();
        let state = AugLagState::new(&model.transcription, 10.0);
        let (la, _) = augmented_lagrangian_value_and_grad(&model, &state, &z).unwrap();
        let e = model.objective.value(traj.states()).unwrap();
        assert!((la - e).abs() <= 1e-14 * e.abs().max(1.0));
    }

    #[test]
    fn doubling_rho_doubles_the_penalty() {
        let fx = Fixture::new(unit_square_grid(8), 10);
        let traj = line(6, 0.1);
        let p = fx.problem(traj.clone(), false, 0.0, 0.5);
        let model = EtoModel::new(&p, false).unwrap();
        let mut z = model.transcription.pack(&traj).unwrap();
        z[4] += 0.05;
        let e = {
            let (s, _) = model.transcription.unpack(&z);
            model.objective.value(&s).unwrap()
        };
        let at = |rho: f64| {
            let st = AugLagState::new(&model.transcription, rho);
            augmented_lagrangian_value_and_grad(&model, &st, &z).unwrap().0 - e
        };
        let (p1, p2) = (at(3.0), at(6.0));
        assert!(p1 > 0.0);
        assert!((p2 - 2.0 * p1).abs() <= 1e-12 * p2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fx = Fixture::new(icosphere(2, 0.5), 16);
        let states: Vec<Point3> = (0..=5)
            .map(|t| {
                let a = t as f64 * 0.9;
                [0.62 * a.cos(), 0.62 * a.sin(), 0.1 * t as f64 - 0.2]
            })
            .collect();
        let traj = Trajectory::from_states(states, 0.5).unwrap();
        let p = fx.problem(traj.clone(), false, 0.15, 0.8);
        let model = EtoModel::new(&p, false).unwrap();
        let tr = &model.transcription;
        let mut z = tr.pack(&traj).unwrap();
        // break dynamics so every equality term contributes
        for (i, v) in z.iter_mut().enumerate() {
            *v += 0.01 * ((i * 7 % 5) as f64 - 2.0);
        }
        let mut state = AugLagState::new(tr, 7.0);
        state.lambda.iter_mut().enumerate().for_each(|(i, l)| *l = 0.1 * (i % 3) as f64 - 0.1);
        state.mu.iter_mut().enumerate().for_each(|(i, m)| *m = 0.05 * (i % 4) as f64);
        let (_, grad) = augmented_lagrangian_value_and_grad(&model, &state, &z).unwrap();
        let h = 1e-6;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fp = augmented_lagrangian_value_and_grad(&model, &state, &zp).unwrap().0;
            let fm = augmented_lagrangian_value_and_grad(&model, &state, &zm).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "component {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let fx = Fixture::new(unit_square_grid(6), 6);
        let traj = line(3, 0.1);
        let p = fx.problem(traj.clone(), false, 0.0, INF);
        let model = EtoModel::new(&p, false).unwrap();
        let state = AugLagState::new(&model.transcription, 1.0);
        assert!(augmented_lagrangian_value_and_grad(&model, &state, &[0.0; 5]).is_err());
        let mut bad = fx.problem(traj, false, 0.0, INF);
        bad.horizon = 4;
        assert!(bad.validate().is_err());
    }
}
