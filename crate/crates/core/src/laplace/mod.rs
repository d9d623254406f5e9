//! Discrete Laplace–Beltrami operator: cotangent stiffness matrix and
//! lumped (diagonal) mass matrix.
//!
//! The pair defines the generalized eigenproblem `S f = lambda M f`. `S` is
//! symmetric positive semidefinite with constants in its kernel; boundary
//! edges receive a single cotangent, which yields natural (Neumann) boundary
//! conditions on open meshes.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{check_len, Error, Result};
use crate::geom;
use crate::mesh::TriangleMesh;

/// Magnitude cap for a single cotangent weight.
pub const MAX_COTANGENT: f64 = 1e8;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build an `n x n` matrix, summing duplicate entries in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterate over stored `(row, col, value)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Matrix Market coordinate format, lower triangle, `symmetric` qualifier.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let lower: Vec<_> = self.triplets().filter(|&(i, j, _)| j <= i).collect();
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, lower.len());
        for (i, j, v) in lower {
            let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Cotangent stiffness matrix (symmetric PSD, zero row sums).
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    matrix: CsrMatrix,
    clamped: usize,
}

impl StiffnessMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Number of cotangent weights that hit the magnitude cap.
    pub fn clamped_weights(&self) -> usize {
        self.clamped
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        self.matrix.write_matrix_market(path)
    }
}

impl std::ops::Deref for StiffnessMatrix {
    type Target = CsrMatrix;
    fn deref(&self) -> &CsrMatrix {
        &self.matrix
    }
}

/// Diagonal lumped mass matrix holding the vertex areas.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    diag: Vec<f64>,
}

impl MassMatrix {
    pub fn from_diagonal(diag: Vec<f64>) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Parameter(format!(
                "mass matrix entry {i} is not strictly positive"
            )));
        }
        Ok(MassMatrix { diag })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(m, v)| m * v).collect()
    }

    /// `a^T M b`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len(self.diag.len(), a.len())?;
        check_len(self.diag.len(), b.len())?;
        Ok(self
            .diag
            .iter()
            .zip(a.iter().zip(b))
            .map(|(m, (x, y))| m * x * y)
            .sum())
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let n = self.diag.len();
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{n} {n} {n}");
        for (i, d) in self.diag.iter().enumerate() {
            let _ = writeln!(out, "{} {} {:e}", i + 1, i + 1, d);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Assemble the cotangent Laplacian: the edge `(i, j)` gets
/// `-(cot alpha + cot beta) / 2` from its one or two opposite angles, and the
/// diagonal is the negated off-diagonal row sum.
pub fn assemble_cotan_laplacian(mesh: &TriangleMesh) -> StiffnessMatrix {
    let verts = mesh.vertices();
    let mut triplets = Vec::with_capacity(mesh.face_count() * 12);
    let mut clamped = 0usize;
    for f in mesh.faces() {
        for k in 0..3 {
            let (i, j, l) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let u = geom::sub(verts[j], verts[i]);
            let v = geom::sub(verts[l], verts[i]);
            let mut cot = geom::dot(u, v) / geom::norm(geom::cross(u, v));
            if !(cot.abs() <= MAX_COTANGENT) {
                clamped += 1;
                cot = if cot.is_nan() {
                    0.0
                } else {
                    cot.signum() * MAX_COTANGENT
                };
            }
            let w = 0.5 * cot;
            triplets.push((j, l, -w));
            triplets.push((l, j, -w));
            triplets.push((j, j, w));
            triplets.push((l, l, w));
        }
    }
    if clamped > 0 {
        warn!("{clamped} cotangent weights clamped at {MAX_COTANGENT:e}; consider re-meshing slivers");
    }
    StiffnessMatrix {
        matrix: CsrMatrix::from_triplets(mesh.vertex_count(), triplets),
        clamped,
    }
}

pub fn assemble_mass_matrix(mesh: &TriangleMesh) -> MassMatrix {
    MassMatrix {
        diag: mesh.vertex_areas().into_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, subdivide_midpoint, unit_square_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn right_triangle_weights() {
        // cot(90) = 0 opposite edge (1,2); cot(45) = 1, halved, elsewhere.
        let s = assemble_cotan_laplacian(&right_triangle());
        assert!((s.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((s.get(0, 2) + 0.5).abs() < 1e-15);
        assert!(s.get(1, 2).abs() < 1e-15);
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((s.get(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_triangle_mass() {
        let m = assemble_mass_matrix(&right_triangle());
        for d in m.diagonal() {
            assert!((d - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        for mesh in [unit_square_grid(12), icosphere(2, 0.7)] {
            let s = assemble_cotan_laplacian(&mesh);
            assert!(s.row_sums().iter().all(|r| r.abs() < 1e-9));
            assert!(s.asymmetry() < 1e-12);
        }
    }

    #[test]
    fn psd_on_random_vectors() {
        let s = assemble_cotan_laplacian(&icosphere(2, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n2: f64 = g.iter().map(|x| x * x).sum();
            assert!(s.quadratic_form(&g) >= -1e-9 * n2);
        }
    }

    #[test]
    fn dirichlet_energy_of_linear_field() {
        // For f(x) = a.x on a flat mesh, f^T S f = |a|^2 * area exactly.
        let mesh = unit_square_grid(17);
        let s = assemble_cotan_laplacian(&mesh);
        let a = [0.3, -1.7];
        let f: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|v| a[0] * v[0] + a[1] * v[1])
            .collect();
        let exact = a[0] * a[0] + a[1] * a[1];
        assert!((s.quadratic_form(&f) - exact).abs() < 1e-10);
    }

    #[test]
    fn dirichlet_energy_converges_under_refinement() {
        // f = cos(pi x) cos(pi y): energy pi^2 / 2 on the unit square.
        let base = unit_square_grid(3);
        let mut diffs = Vec::new();
        let mut prev: Option<f64> = None;
        for level in 1..=5 {
            let mesh = subdivide_midpoint(&base, level, None).unwrap();
            let s = assemble_cotan_laplacian(&mesh);
            let f: Vec<f64> = mesh
                .vertices()
                .iter()
                .map(|v| (std::f64::consts::PI * v[0]).cos() * (std::f64::consts::PI * v[1]).cos())
                .collect();
            let e = s.quadratic_form(&f);
            if let Some(p) = prev {
                diffs.push((e - p).abs());
            }
            prev = Some(e);
        }
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((prev.unwrap() - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn mass_trace_is_area() {
        let m = assemble_mass_matrix(&unit_square_grid(30));
        assert!((m.trace() - 1.0).abs() < 1e-9);
        let fine = assemble_mass_matrix(&icosphere(5, 0.5));
        assert!((fine.trace() - std::f64::consts::PI).abs() < 2e-3);
    }

    #[test]
    fn sliver_weights_are_clamped() {
        let mesh = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 1e-9, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = assemble_cotan_laplacian(&mesh);
        assert!(s.clamped_weights() >= 1);
        assert!(s.triplets().all(|(_, _, v)| v.abs() <= MAX_COTANGENT));
    }

    #[test]
    fn matrix_market_export() {
        let dir = tempfile::tempdir().unwrap();
        let s = assemble_cotan_laplacian(&right_triangle());
        let p = dir.path().join("s.mtx");
        s.write_matrix_market(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        assert_eq!(lines.next().unwrap(), "3 3 6");
    }
}
