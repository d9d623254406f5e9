//! Ergodic metric on a mesh: Gaussian sensor footprints, time-averaged
//! coverage, spectral coefficients, discount weights, metric value and its
//! exact gradient with respect to the trajectory states.

mod map;
mod trajectory;

pub use map::InformationMap;
pub use trajectory::Trajectory;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use serde::{Deserialize, Serialize};

use crate::analytic::{analytic_coefficients, AnalyticBasis, AnalyticDomain, QuadratureGrid, DOMAIN_TOL};
use crate::error::{check_len, Error, Result};
use crate::geom::{self, Point3};
use crate::mesh::TriangleMesh;
use crate::spectral::SpectralBasis;

/// Footprint truncation radius in units of sigma.
pub const TRUNCATION_SIGMAS: f64 = 6.0;
/// Normalizers below this value are reported as degenerate coverage.
pub const MIN_NORMALIZER: f64 = 1e-300;

/// Isotropic Gaussian sensor `s(v) = exp(-|v - x|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    sigma: f64,
}

impl SensorModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("sensor sigma {sigma} must be positive")));
        }
        Ok(SensorModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn response(&self, v: Point3, x: Point3) -> f64 {
        (-0.5 * geom::dist2(v, x) / (self.sigma * self.sigma)).exp()
    }
}

/// Footprint of a sensor at `x` on every vertex.
pub fn sensor_footprint(model: &SensorModel, x: Point3, mesh: &TriangleMesh) -> Vec<f64> {
    mesh.vertices().iter().map(|v| model.response(*v, x)).collect()
}

/// Normalized time-averaged coverage on the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageField {
    /// `mu_i = mu_hat_i / Z`, integrating to one.
    pub mu: Vec<f64>,
    /// Unnormalized average footprint.
    pub mu_hat: Vec<f64>,
    /// `Z = sum_i A_i mu_hat_i`.
    pub normalizer: f64,
}

impl CoverageField {
    fn from_unnormalized(mu_hat: Vec<f64>, areas: &[f64]) -> Result<Self> {
        let z: f64 = mu_hat.iter().zip(areas).map(|(m, a)| m * a).sum();
        if !(z >= MIN_NORMALIZER) {
            return Err(Error::DegenerateCoverage {
                normalizer: z,
                threshold: MIN_NORMALIZER,
            });
        }
        Ok(CoverageField {
            mu: mu_hat.iter().map(|m| m / z).collect(),
            mu_hat,
            normalizer: z,
        })
    }
}

/// Coverage of `traj` with uniform weights over all `T + 1` states and no
/// footprint truncation.
pub fn coverage_field(model: &SensorModel, traj: &Trajectory, mesh: &TriangleMesh) -> Result<CoverageField> {
    let mut mu_hat = vec![0.0; mesh.vertex_count()];
    for x in traj.states() {
        for (m, v) in mu_hat.iter_mut().zip(mesh.vertices()) {
            *m += model.response(*v, *x);
        }
    }
    let w = 1.0 / traj.states().len() as f64;
    mu_hat.iter_mut().for_each(|m| *m *= w);
    CoverageField::from_unnormalized(mu_hat, mesh.vertex_areas().as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `exp(-0.1 sqrt(lambda))`
    #[default]
    ExpDecay,
    /// `1 / (1 + sqrt(lambda))`
    InverseSqrt,
}

/// Per-mode discount weights. Eigenvalues in `[-1e-9, 0)` are treated as 0.
pub fn spectral_weights(eigenvalues: &[f64], scheme: WeightScheme) -> Result<Vec<f64>> {
    eigenvalues
        .iter()
        .map(|&l| {
            if l < -1e-9 || l.is_nan() {
                return Err(Error::Parameter(format!("negative eigenvalue {l}")));
            }
            let r = l.max(0.0).sqrt();
            Ok(match scheme {
                WeightScheme::ExpDecay => (-0.1 * r).exp(),
                WeightScheme::InverseSqrt => 1.0 / (1.0 + r),
            })
        })
        .collect()
}

fn weighted_distance(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum()
}

/// `sum_k Lambda_k (mu_k - phi_k)^2` using mesh-basis projections.
pub fn ergodic_metric_value(
    basis: &SpectralBasis,
    weights: &[f64],
    map: &InformationMap,
    coverage: &CoverageField,
) -> Result<f64> {
    check_len(basis.len(), weights.len())?;
    let phi = basis.project(map.density())?;
    let mu = basis.project(&coverage.mu)?;
    Ok(weighted_distance(weights, &mu, &phi))
}

/// Exact gradient of the metric with respect to every state, without
/// footprint truncation.
pub fn ergodic_metric_gradient(
    basis: &SpectralBasis,
    weights: &[f64],
    map: &InformationMap,
    model: &SensorModel,
    traj: &Trajectory,
    mesh: &TriangleMesh,
) -> Result<Vec<Point3>> {
    let obj = ErgodicObjective::new(mesh, basis, weights.to_vec(), map, *model, false)?;
    Ok(obj.value_and_gradient(traj.states())?.1)
}

/// Reusable metric evaluator for a fixed mesh, basis, map and sensor.
///
/// With truncation enabled, each footprint only touches vertices within
/// `6 sigma`, found through a KD-tree over the vertices.
pub struct ErgodicObjective<'a> {
    vertices: &'a [Point3],
    basis: &'a SpectralBasis,
    weights: Vec<f64>,
    phi_k: Vec<f64>,
    model: SensorModel,
    tree: Option<ImmutableKdTree<f64, 3>>,
}

impl<'a> ErgodicObjective<'a> {
    pub fn new(
        mesh: &'a TriangleMesh,
        basis: &'a SpectralBasis,
        weights: Vec<f64>,
        map: &InformationMap,
        model: SensorModel,
        truncate: bool,
    ) -> Result<Self> {
        check_len(mesh.vertex_count(), basis.vertex_count())?;
        check_len(basis.len(), weights.len())?;
        let phi_k = basis.project(map.density())?;
        let tree = truncate.then(|| ImmutableKdTree::new_from_slice(mesh.vertices()));
        Ok(ErgodicObjective {
            vertices: mesh.vertices(),
            basis,
            weights,
            phi_k,
            model,
            tree,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phi_coefficients(&self) -> &[f64] {
        &self.phi_k
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    /// `(vertex, response)` pairs of one footprint, sorted by vertex.
    fn footprint(&self, x: Point3) -> Vec<(usize, f64)> {
        match &self.tree {
            None => self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| (i, self.model.response(*v, x)))
                .collect(),
            Some(tree) => {
                let r = TRUNCATION_SIGMAS * self.model.sigma;
                let mut idx: Vec<usize> = tree
                    .within_unsorted::<SquaredEuclidean>(&x, r * r)
                    .into_iter()
                    .map(|n| n.item as usize)
                    .collect();
                idx.sort_unstable();
                idx.into_iter()
                    .map(|i| (i, self.model.response(self.vertices[i], x)))
                    .collect()
            }
        }
    }

    fn accumulate(&self, states: &[Point3]) -> Result<(CoverageField, Vec<Vec<(usize, f64)>>)> {
        if states.is_empty() {
            return Err(Error::Parameter("trajectory has no states".into()));
        }
        let mut mu_hat = vec![0.0; self.vertices.len()];
        let prints: Vec<_> = states.iter().map(|x| self.footprint(*x)).collect();
        for fp in &prints {
            for &(i, s) in fp {
                mu_hat[i] += s;
            }
        }
        let w = 1.0 / states.len() as f64;
        mu_hat.iter_mut().for_each(|m| *m *= w);
        let cov = CoverageField::from_unnormalized(mu_hat, self.basis.mass().diagonal())?;
        Ok((cov, prints))
    }

    pub fn coverage(&self, states: &[Point3]) -> Result<CoverageField> {
        Ok(self.accumulate(states)?.0)
    }

    pub fn value(&self, states: &[Point3]) -> Result<f64> {
        let cov = self.coverage(states)?;
        let mu_k = self.basis.project(&cov.mu)?;
        Ok(weighted_distance(&self.weights, &mu_k, &self.phi_k))
    }

    pub fn value_and_gradient(&self, states: &[Point3]) -> Result<(f64, Vec<Point3>)> {
        let (cov, prints) = self.accumulate(states)?;
        let mu_k = self.basis.project(&cov.mu)?;
        let value = weighted_distance(&self.weights, &mu_k, &self.phi_k);

        // dE/dmu_i = A_i sum_k 2 Lambda_k (mu_k - phi_k) f_k(i)
        let coef: Vec<f64> = (0..mu_k.len())
            .map(|k| 2.0 * self.weights[k] * (mu_k[k] - self.phi_k[k]))
            .collect();
        let areas = self.basis.mass().diagonal();
        let mut g = vec![0.0; self.vertices.len()];
        for (k, c) in coef.iter().enumerate() {
            for (gi, f) in g.iter_mut().zip(self.basis.eigenvector(k)) {
                *gi += c * f;
            }
        }
        g.iter_mut().zip(areas).for_each(|(gi, a)| *gi *= a);
        // Chain through the normalization mu = mu_hat / Z.
        let gmu: f64 = g.iter().zip(&cov.mu).map(|(a, b)| a * b).sum();
        let h: Vec<f64> = g
            .iter()
            .zip(areas)
            .map(|(gi, a)| (gi - a * gmu) / cov.normalizer)
            .collect();
        let scale = 1.0 / (states.len() as f64 * self.model.sigma * self.model.sigma);
        let grad = states
            .iter()
            .zip(&prints)
            .map(|(x, fp)| {
                let mut d = [0.0; 3];
                for &(i, s) in fp {
                    let w = h[i] * s;
                    let v = self.vertices[i];
                    for a in 0..3 {
                        d[a] += w * (v[a] - x[a]);
                    }
                }
                geom::scale(d, scale)
            })
            .collect();
        Ok((value, grad))
    }
}

/// How the trajectory statistics enter the analytic metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticCoverage {
    /// Time average of point masses at the states projected onto the domain
    /// (`mu_k = mean_t f_k(proj x_t)`), the classical ergodic statistic.
    #[default]
    Point,
    /// Time average of the 3D sensor footprints sampled on the quadrature
    /// grid and normalized there; the continuous counterpart of the mesh
    /// metric.
    Footprint,
}

/// Project `x` onto the analytic domain: orthogonally for the rectangle,
/// radially for the sphere.
pub fn project_to_domain(domain: AnalyticDomain, x: Point3) -> Result<Point3> {
    match domain {
        AnalyticDomain::Rectangle { lx, ly } => {
            let tol = DOMAIN_TOL * lx.max(ly);
            if x[0] < -tol || x[0] > lx + tol || x[1] < -tol || x[1] > ly + tol {
                return Err(Error::Domain(format!(
                    "state {x:?} projects outside the rectangle [0, {lx}] x [0, {ly}]"
                )));
            }
            Ok([x[0].clamp(0.0, lx), x[1].clamp(0.0, ly), 0.0])
        }
        AnalyticDomain::Sphere { center, radius } => {
            let d = geom::sub(x, center);
            let r = geom::norm(d);
            if r <= DOMAIN_TOL * radius {
                return Err(Error::Domain(format!(
                    "state {x:?} sits at the sphere center and has no radial projection"
                )));
            }
            Ok(geom::add(center, geom::scale(d, radius / r)))
        }
    }
}

/// Metric computed with an analytic basis. `phi_samples` (any positive
/// scale) is normalized on `grid` before projection.
///
/// With [`AnalyticCoverage::Footprint`], rectangle domains require states in
/// the `z = 0` plane and sphere domains require states away from the center.
/// With [`AnalyticCoverage::Point`], every state must project onto the domain.
pub fn evaluate_analytic_metric(
    basis: &AnalyticBasis,
    weights: &[f64],
    grid: &QuadratureGrid,
    phi_samples: &[f64],
    traj: &Trajectory,
    model: &SensorModel,
    coverage: AnalyticCoverage,
) -> Result<f64> {
    check_len(basis.len(), weights.len())?;
    check_len(grid.len(), phi_samples.len())?;
    let normalize = |vals: &[f64]| -> Result<Vec<f64>> {
        let z: f64 = vals.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
        if !(z >= MIN_NORMALIZER) {
            return Err(Error::DegenerateCoverage {
                normalizer: z,
                threshold: MIN_NORMALIZER,
            });
        }
        Ok(vals.iter().map(|v| v / z).collect())
    };
    let w = 1.0 / traj.states().len() as f64;
    let mu_k = match coverage {
        AnalyticCoverage::Point => {
            let mut mu_k = vec![0.0; basis.len()];
            for x in traj.states() {
                let p = project_to_domain(basis.domain(), *x)?;
                for (m, f) in mu_k.iter_mut().zip(basis.eval_all_unchecked(p)) {
                    *m += w * f;
                }
            }
            mu_k
        }
        AnalyticCoverage::Footprint => {
            for x in traj.states() {
                match basis.domain() {
                    AnalyticDomain::Rectangle { lx, ly } => {
                        if x[2].abs() > DOMAIN_TOL * lx.max(ly) {
                            return Err(Error::Domain(format!("state {x:?} is off the rectangle plane z = 0")));
                        }
                    }
                    AnalyticDomain::Sphere { .. } => {
                        project_to_domain(basis.domain(), *x)?;
                    }
                }
            }
            let mu_hat: Vec<f64> = grid
                .points()
                .iter()
                .map(|p| w * traj.states().iter().map(|x| model.response(*p, *x)).sum::<f64>())
                .collect();
            analytic_coefficients(basis, grid, &normalize(&mu_hat)?)?
        }
    };
    let phi_k = analytic_coefficients(basis, grid, &normalize(phi_samples)?)?;
    Ok(weighted_distance(weights, &mu_k, &phi_k))
}
