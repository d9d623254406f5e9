//! Laplace–Beltrami eigenbasis of a mesh.

mod cache;
mod eigensolver;

pub use cache::{cached_eigenbasis, load_basis, save_basis};
pub use eigensolver::{CLUSTER_GAP, SHIFT};

use crate::error::{check_len, Error, Result};
use crate::laplace::{MassMatrix, StiffnessMatrix};

/// Default number of basis functions.
pub const DEFAULT_BASIS_SIZE: usize = 100;
/// Default bound on `||S f - lambda M f|| / ||M f||` per eigenpair.
pub const DEFAULT_EIGEN_TOLERANCE: f64 = 1e-8;

/// `M`-orthonormal eigenfunctions sampled at the vertices, with ascending
/// eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// Column-major `m x K`: eigenvector `k` occupies `[k*m, (k+1)*m)`.
    vectors: Vec<f64>,
    mass: MassMatrix,
    requested: usize,
}

impl SpectralBasis {
    /// Assemble a basis from precomputed parts (for example a cache file).
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        vectors: Vec<f64>,
        mass: MassMatrix,
        requested: usize,
    ) -> Result<Self> {
        let m = mass.dim();
        check_len(eigenvalues.len() * m, vectors.len())?;
        if eigenvalues.is_empty() {
            return Err(Error::Parameter("basis must contain at least one mode".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("eigenvalues must be sorted ascending".into()));
        }
        Ok(SpectralBasis {
            eigenvalues,
            vectors,
            mass,
            requested,
        })
    }

    /// Number of modes K (after cluster extension).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// K as requested by the caller, before cluster extension.
    pub fn requested_len(&self) -> usize {
        self.requested
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        let m = self.vertex_count();
        &self.vectors[k * m..(k + 1) * m]
    }

    /// Raw column-major eigenvector storage.
    pub fn eigenvector_data(&self) -> &[f64] {
        &self.vectors
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    /// Coefficients `c_k = values^T M f_k`.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.vertex_count(), values.len())?;
        let weighted = self.mass.mul_vec(values);
        Ok((0..self.len())
            .map(|k| {
                self.eigenvector(k)
                    .iter()
                    .zip(&weighted)
                    .map(|(f, w)| f * w)
                    .sum()
            })
            .collect())
    }

    /// `sum_k c_k f_k` at every vertex.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), coefficients.len())?;
        let mut out = vec![0.0; self.vertex_count()];
        for (k, &c) in coefficients.iter().enumerate() {
            for (o, f) in out.iter_mut().zip(self.eigenvector(k)) {
                *o += c * f;
            }
        }
        Ok(out)
    }

    /// `max |F^T M F - I|` entrywise.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.len() {
            let ma = self.mass.mul_vec(self.eigenvector(a));
            for b in a..self.len() {
                let g: f64 = ma.iter().zip(self.eigenvector(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// `||S f_k - lambda_k M f_k|| / ||M f_k||` for every mode.
    pub fn residuals(&self, stiffness: &StiffnessMatrix) -> Result<Vec<f64>> {
        check_len(self.vertex_count(), stiffness.dim())?;
        let m = self.vertex_count();
        let view = faer::MatRef::from_column_major_slice(&self.vectors, m, self.len());
        Ok(eigensolver::relative_residuals(
            stiffness.matrix(),
            self.mass.diagonal(),
            &self.eigenvalues,
            view,
        ))
    }
}

/// Compute the `k` smallest eigenpairs of `S f = lambda M f`.
///
/// `k` grows past the request when the next eigenvalue belongs to the same
/// cluster as the last requested one. Each eigenvector is sign-normalized so
/// its largest-magnitude entry is positive.
pub fn compute_eigenbasis(
    stiffness: &StiffnessMatrix,
    mass: &MassMatrix,
    k: usize,
    tolerance: f64,
) -> Result<SpectralBasis> {
    check_len(stiffness.dim(), mass.dim())?;
    let pairs =
        eigensolver::smallest_eigenpairs(stiffness.matrix(), mass.diagonal(), k, tolerance)?;
    let m = mass.dim();
    let kk = pairs.values.len();
    let mut vectors = Vec::with_capacity(m * kk);
    for c in 0..kk {
        let col = pairs.vectors.col_as_slice(c);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, &v)| {
                if v.abs() > best.1 {
                    (i, v.abs())
                } else {
                    best
                }
            })
            .0;
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.extend(col.iter().map(|v| sign * v));
    }
    SpectralBasis::from_parts(pairs.values, vectors, mass.clone(), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{assemble_cotan_laplacian, assemble_mass_matrix};
    use crate::mesh::{icosphere, unit_square_grid, TriangleMesh};

    fn basis(mesh: &TriangleMesh, k: usize) -> SpectralBasis {
        compute_eigenbasis(
            &assemble_cotan_laplacian(mesh),
            &assemble_mass_matrix(mesh),
            k,
            DEFAULT_EIGEN_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn constant_mode() {
        let mesh = icosphere(2, 0.5);
        let b = basis(&mesh, 1);
        assert!(b.eigenvalues()[0].abs() < 1e-9);
        let expect = 1.0 / mesh.total_area().sqrt();
        assert!(b.eigenvector(0).iter().all(|v| (v - expect).abs() < 1e-9));
    }

    #[test]
    fn k_bounds() {
        let mesh = unit_square_grid(4);
        let s = assemble_cotan_laplacian(&mesh);
        let m = assemble_mass_matrix(&mesh);
        assert!(matches!(compute_eigenbasis(&s, &m, 16, 1e-8), Err(Error::Parameter(_))));
        assert!(matches!(compute_eigenbasis(&s, &m, 0, 1e-8), Err(Error::Parameter(_))));
    }

    #[test]
    fn signs_fixed_and_orthonormal() {
        let b = basis(&icosphere(3, 1.0), 16);
        assert!(b.orthonormality_error() < 1e-8);
        for k in 0..b.len() {
            let f = b.eigenvector(k);
            let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max >= -min);
        }
    }

    #[test]
    fn project_reconstruct_roundtrip() {
        let b = basis(&unit_square_grid(15), 10);
        let c: Vec<f64> = (0..b.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let back = b.project(&b.reconstruct(&c).unwrap()).unwrap();
        for (x, y) in c.iter().zip(&back) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(matches!(b.project(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(b.reconstruct(&[1.0]), Err(Error::Dimension { .. })));
    }
}
