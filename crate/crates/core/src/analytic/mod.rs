//! Closed-form orthonormal bases on the rectangle (cosine Fourier modes) and
//! the sphere (real spherical harmonics), plus the quadrature grids used to
//! project densities onto them.

mod quadrature;

pub use quadrature::{gauss_legendre, QuadratureGrid};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geom::{self, Point3};

/// Relative tolerance for the on-sphere and in-rectangle checks.
pub const DOMAIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticDomain {
    /// `[0, lx] x [0, ly]` in the `z = 0` plane.
    Rectangle { lx: f64, ly: f64 },
    Sphere { center: Point3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fourier { k1: usize, k2: usize },
    Harmonic { l: usize, m: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticBasis {
    domain: AnalyticDomain,
    modes: Vec<Mode>,
    eigenvalues: Vec<f64>,
}

fn rect_eigenvalue(lx: f64, ly: f64, k1: usize, k2: usize) -> f64 {
    PI * PI * ((k1 as f64 / lx).powi(2) + (k2 as f64 / ly).powi(2))
}

impl AnalyticBasis {
    /// The `k` lowest-frequency cosine modes on `[0, lx] x [0, ly]`, extended
    /// to the end of the last eigenvalue cluster.
    pub fn rectangle(lx: f64, ly: f64, k: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Parameter(format!("rectangle sides {lx} x {ly} must be positive")));
        }
        if k == 0 {
            return Err(Error::Parameter("analytic basis size must be > 0".into()));
        }
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity((k + 1) * (k + 1));
        for k1 in 0..=k {
            for k2 in 0..=k {
                cands.push((rect_eigenvalue(lx, ly, k1, k2), k1, k2));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut end = k;
        while end < cands.len() && cands[end].0 - cands[end - 1].0 <= crate::spectral::CLUSTER_GAP * cands[end].0 {
            end += 1;
        }
        cands.truncate(end);
        Ok(AnalyticBasis {
            domain: AnalyticDomain::Rectangle { lx, ly },
            modes: cands.iter().map(|&(_, k1, k2)| Mode::Fourier { k1, k2 }).collect(),
            eigenvalues: cands.iter().map(|c| c.0).collect(),
        })
    }

    /// Whole degree shells `l = 0, 1, ...` until at least `k` harmonics.
    pub fn sphere(center: Point3, radius: f64, k: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("sphere radius {radius} must be positive")));
        }
        if k == 0 {
            return Err(Error::Parameter("analytic basis size must be > 0".into()));
        }
        let mut modes = Vec::new();
        let mut eigenvalues = Vec::new();
        let mut l = 0usize;
        while modes.len() < k {
            let lam = (l * (l + 1)) as f64 / (radius * radius);
            for m in -(l as i64)..=(l as i64) {
                modes.push(Mode::Harmonic { l, m });
                eigenvalues.push(lam);
            }
            l += 1;
        }
        Ok(AnalyticBasis {
            domain: AnalyticDomain::Sphere { center, radius },
            modes,
            eigenvalues,
        })
    }

    pub fn domain(&self) -> AnalyticDomain {
        self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Check that `w` lies on the domain.
    pub fn check_point(&self, w: Point3) -> Result<()> {
        match self.domain {
            AnalyticDomain::Rectangle { lx, ly } => {
                let tol = DOMAIN_TOL * lx.max(ly);
                if w[2].abs() > tol
                    || w[0] < -tol
                    || w[0] > lx + tol
                    || w[1] < -tol
                    || w[1] > ly + tol
                {
                    return Err(Error::Domain(format!(
                        "point {w:?} is outside the rectangle [0, {lx}] x [0, {ly}]"
                    )));
                }
            }
            AnalyticDomain::Sphere { center, radius } => {
                let r = geom::dist(w, center);
                if (r - radius).abs() > DOMAIN_TOL * radius {
                    return Err(Error::Domain(format!(
                        "point {w:?} is off the sphere of radius {radius} (distance {r})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value of mode `k` at `w`.
    pub fn eval(&self, k: usize, w: Point3) -> Result<f64> {
        self.check_point(w)?;
        match (self.domain, self.modes[k]) {
            (AnalyticDomain::Rectangle { lx, ly }, Mode::Fourier { k1, k2 }) => {
                Ok(fourier_unchecked(lx, ly, k1, k2, w[0], w[1]))
            }
            (AnalyticDomain::Sphere { center, radius }, Mode::Harmonic { l, m }) => {
                let table = HarmonicTable::new(l, geom::sub(w, center));
                Ok(table.real(l, m) / radius)
            }
            _ => unreachable!("mode kind always matches the domain"),
        }
    }

    /// Values of every mode at `w`, in mode order.
    pub fn eval_all(&self, w: Point3) -> Result<Vec<f64>> {
        self.check_point(w)?;
        Ok(self.eval_all_unchecked(w))
    }

    pub(crate) fn eval_all_unchecked(&self, w: Point3) -> Vec<f64> {
        match self.domain {
            AnalyticDomain::Rectangle { lx, ly } => self
                .modes
                .iter()
                .map(|mode| match *mode {
                    Mode::Fourier { k1, k2 } => fourier_unchecked(lx, ly, k1, k2, w[0], w[1]),
                    Mode::Harmonic { .. } => unreachable!(),
                })
                .collect(),
            AnalyticDomain::Sphere { center, radius } => {
                let lmax = match self.modes.last() {
                    Some(Mode::Harmonic { l, .. }) => *l,
                    _ => 0,
                };
                let table = HarmonicTable::new(lmax, geom::sub(w, center));
                self.modes
                    .iter()
                    .map(|mode| match *mode {
                        Mode::Harmonic { l, m } => table.real(l, m) / radius,
                        Mode::Fourier { .. } => unreachable!(),
                    })
                    .collect()
            }
        }
    }
}

fn fourier_unchecked(lx: f64, ly: f64, k1: usize, k2: usize, x: f64, y: f64) -> f64 {
    let mut h2 = lx * ly;
    if k1 > 0 {
        h2 *= 0.5;
    }
    if k2 > 0 {
        h2 *= 0.5;
    }
    (k1 as f64 * PI * x / lx).cos() * (k2 as f64 * PI * y / ly).cos() / h2.sqrt()
}

/// `L2`-normalized cosine mode `(k1, k2)` on `[0, lx] x [0, ly]`.
pub fn fourier_eval(lx: f64, ly: f64, mode: (usize, usize), w: [f64; 2]) -> Result<f64> {
    let tol = DOMAIN_TOL * lx.max(ly);
    if w[0] < -tol || w[0] > lx + tol || w[1] < -tol || w[1] > ly + tol {
        return Err(Error::Domain(format!(
            "point {w:?} is outside the rectangle [0, {lx}] x [0, {ly}]"
        )));
    }
    Ok(fourier_unchecked(lx, ly, mode.0, mode.1, w[0], w[1]))
}

/// Real spherical harmonic `(l, m)` on the sphere of the given radius,
/// scaled so its square integrates to one over that sphere.
pub fn spherical_harmonic_eval(center: Point3, radius: f64, mode: (usize, i64), w: Point3) -> Result<f64> {
    if mode.1.unsigned_abs() as usize > mode.0 {
        return Err(Error::Parameter(format!("|m| must not exceed l in {mode:?}")));
    }
    let r = geom::dist(w, center);
    if (r - radius).abs() > DOMAIN_TOL * radius {
        return Err(Error::Domain(format!(
            "point {w:?} is off the sphere of radius {radius} (distance {r})"
        )));
    }
    Ok(HarmonicTable::new(mode.0, geom::sub(w, center)).real(mode.0, mode.1) / radius)
}

/// Fully normalized associated Legendre values `Pbar_l^m(cos theta)` for
/// `0 <= m <= l <= lmax`, plus `cos(m phi)` and `sin(m phi)`.
struct HarmonicTable {
    lmax: usize,
    p: Vec<f64>,
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
}

impl HarmonicTable {
    fn new(lmax: usize, d: Point3) -> Self {
        let r = geom::norm(d);
        let (ct, st, phi) = if r > 0.0 {
            let ct = (d[2] / r).clamp(-1.0, 1.0);
            (ct, (1.0 - ct * ct).max(0.0).sqrt(), d[1].atan2(d[0]))
        } else {
            (1.0, 0.0, 0.0)
        };
        let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
        let mut p = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
        let mut pmm = (1.0 / (4.0 * PI)).sqrt();
        for m in 0..=lmax {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
            }
            p[idx(m, m)] = pmm;
            if m < lmax {
                p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * pmm;
            }
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[idx(l, m)] = a * (ct * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
            }
        }
        let cos_m = (0..=lmax).map(|m| (m as f64 * phi).cos()).collect();
        let sin_m = (0..=lmax).map(|m| (m as f64 * phi).sin()).collect();
        HarmonicTable { lmax, p, cos_m, sin_m }
    }

    fn real(&self, l: usize, m: i64) -> f64 {
        debug_assert!(l <= self.lmax);
        let am = m.unsigned_abs() as usize;
        let pl = self.p[l * (l + 1) / 2 + am];
        match m {
            0 => pl,
            m if m > 0 => std::f64::consts::SQRT_2 * pl * self.cos_m[am],
            _ => std::f64::consts::SQRT_2 * pl * self.sin_m[am],
        }
    }
}

/// Project density samples on a quadrature grid onto every mode:
/// `c_k = sum_q w_q f_k(p_q) density_q`.
pub fn analytic_coefficients(basis: &AnalyticBasis, grid: &QuadratureGrid, density: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Parameter("quadrature grid is empty".into()));
    }
    check_len(grid.len(), density.len())?;
    let mut c = vec![0.0; basis.len()];
    for ((p, w), d) in grid.points().iter().zip(grid.weights()).zip(density) {
        if *d == 0.0 {
            continue;
        }
        basis.check_point(*p)?;
        let f = basis.eval_all_unchecked(*p);
        for (ck, fk) in c.iter_mut().zip(&f) {
            *ck += w * d * fk;
        }
    }
    Ok(c)
}
