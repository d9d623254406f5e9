use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::geom::Point3;
use crate::mesh::TriangleMesh;

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Points with positive integration weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<Point3>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(points: Vec<Point3>, weights: Vec<f64>) -> Result<Self> {
        check_len(points.len(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Parameter("quadrature weights must be finite and >= 0".into()));
        }
        Ok(QuadratureGrid { points, weights })
    }

    /// Tensor Gauss–Legendre rule on `[0, lx] x [0, ly]` at `z = 0`.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        let (xn, xw) = gauss_legendre(nx);
        let (yn, yw) = gauss_legendre(ny);
        let mut points = Vec::with_capacity(nx * ny);
        let mut weights = Vec::with_capacity(nx * ny);
        for (x, wx) in xn.iter().zip(&xw) {
            for (y, wy) in yn.iter().zip(&yw) {
                points.push([0.5 * lx * (x + 1.0), 0.5 * ly * (y + 1.0), 0.0]);
                weights.push(0.25 * lx * ly * wx * wy);
            }
        }
        QuadratureGrid { points, weights }
    }

    /// Gauss–Legendre in `cos(theta)` times the uniform rule in `phi`.
    /// Exact for spherical polynomials of degree below `min(2 n_theta, n_phi)`.
    pub fn sphere(center: Point3, radius: f64, n_theta: usize, n_phi: usize) -> Self {
        let (tn, tw) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in tn.iter().zip(&tw) {
            let st = (1.0 - ct * ct).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                points.push([
                    center[0] + radius * st * phi.cos(),
                    center[1] + radius * st * phi.sin(),
                    center[2] + radius * ct,
                ]);
                weights.push(radius * radius * wt * dphi);
            }
        }
        QuadratureGrid { points, weights }
    }

    /// Mesh vertices weighted by their lumped areas.
    pub fn from_mesh(mesh: &TriangleMesh) -> Self {
        QuadratureGrid {
            points: mesh.vertices().to_vec(),
            weights: mesh.vertex_areas().into_vec(),
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_small_rules() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gl_exact_for_polynomials() {
        for n in [5usize, 17, 64, 256] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 2;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn grid_areas() {
        let g = QuadratureGrid::rectangle(2.0, 0.5, 8, 8);
        assert!((g.total_weight() - 1.0).abs() < 1e-14);
        let s = QuadratureGrid::sphere([1.0, 2.0, 3.0], 0.5, 16, 32);
        assert!((s.total_weight() - PI).abs() < 1e-13);
        let cos2: f64 = s
            .points()
            .iter()
            .zip(s.weights())
            .map(|(p, w)| w * ((p[2] - 3.0) / 0.5).powi(2))
            .sum();
        assert!((cos2 - PI / 3.0).abs() < 1e-13);
    }
}
