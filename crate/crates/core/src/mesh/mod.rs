//! Triangle meshes: validation, per-vertex area elements, lumped quadrature,
//! refinement, and file I/O.

mod generate;
mod io;
mod subdivide;

use std::collections::BTreeMap;

use log::warn;
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::geom::{self, Point3};

pub use generate::{
    icosahedron, icosphere, rectangle_grid, torus, unit_square_grid, uv_sphere, wind_turbine,
    TurbineParams,
};
pub use io::{load_mesh, read_obj, read_ply, write_obj, write_ply, MeshFormat, PlyEncoding};
pub use subdivide::{subdivide_midpoint, SphereProjection};

/// Faces with area below this (square meters) are rejected.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A validated triangle mesh.
///
/// Immutable once constructed: every face index is in range, no face repeats a
/// vertex or has (near) zero area, and every vertex belongs to at least one
/// face. Optional named per-vertex scalar channels travel with the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    channels: BTreeMap<String, Vec<f64>>,
}

/// Barycentric (lumped) area element of each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexAreas(Vec<f64>);

impl VertexAreas {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for VertexAreas {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_channels(vertices, faces, BTreeMap::new())
    }

    /// Validate and build a mesh. Vertices not referenced by any face are
    /// dropped (with a warning) and the remaining vertices keep their order.
    pub fn with_channels(
        vertices: Vec<Point3>,
        faces: Vec<[usize; 3]>,
        channels: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let n = vertices.len();
        for (name, values) in &channels {
            if values.len() != n {
                return Err(Error::InvalidMesh(format!(
                    "channel `{name}` has {} values for {n} vertices",
                    values.len()
                )));
            }
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= n {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace {
                    face: fi,
                    reason: format!("repeated vertex index in {f:?}"),
                });
            }
            let area = geom::triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            if !(area > DEGENERATE_AREA) {
                return Err(Error::DegenerateFace {
                    face: fi,
                    reason: format!("area {area:e} is below {DEGENERATE_AREA:e}"),
                });
            }
        }

        let mut used = vec![false; n];
        for f in &faces {
            for &i in f {
                used[i] = true;
            }
        }
        let mesh = if used.iter().all(|&u| u) {
            TriangleMesh {
                vertices,
                faces,
                channels,
            }
        } else {
            let dropped = used.iter().filter(|&&u| !u).count();
            warn!("dropping {dropped} vertices not referenced by any face");
            let mut remap = vec![usize::MAX; n];
            let mut kept = Vec::with_capacity(n - dropped);
            for (i, v) in vertices.iter().enumerate() {
                if used[i] {
                    remap[i] = kept.len();
                    kept.push(*v);
                }
            }
            let faces = faces
                .iter()
                .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
                .collect();
            let channels = channels
                .into_iter()
                .map(|(k, vals)| {
                    let vals = vals
                        .into_iter()
                        .enumerate()
                        .filter(|(i, _)| used[*i])
                        .map(|(_, v)| v)
                        .collect();
                    (k, vals)
                })
                .collect();
            TriangleMesh {
                vertices: kept,
                faces,
                channels,
            }
        };

        let non_manifold = mesh
            .edge_face_counts()
            .values()
            .filter(|&&c| c > 2)
            .count();
        if non_manifold > 0 {
            warn!("mesh has {non_manifold} non-manifold edges (shared by more than two faces)");
        }
        Ok(mesh)
    }

    /// Returns a copy with an additional (or replaced) per-vertex channel.
    pub fn with_channel(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        check_len(self.vertices.len(), values.len())?;
        self.channels.insert(name.into(), values);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn channels(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn face_vertices(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        geom::triangle_area(a, b, c)
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Barycentric lumping: each face gives a third of its area to each corner.
    pub fn vertex_areas(&self) -> VertexAreas {
        let mut areas = vec![0.0; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let third = self.face_area(fi) / 3.0;
            for &i in f {
                areas[i] += third;
            }
        }
        VertexAreas(areas)
    }

    /// Lumped quadrature `sum_i area_i * values_i`.
    pub fn surface_integral(&self, values: &[f64]) -> Result<f64> {
        check_len(self.vertices.len(), values.len())?;
        let areas = self.vertex_areas();
        Ok(areas.0.iter().zip(values).map(|(a, v)| a * v).sum())
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn scale(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        geom::dist(lo, hi)
    }

    /// Number of faces incident to each undirected edge `(min, max)`.
    pub fn edge_face_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        self.edge_face_counts().values().all(|&c| c == 2)
    }

    /// Apply a point map to every vertex (e.g. a rigid motion or rescale)
    /// and re-validate.
    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        let vertices = self.vertices.iter().map(|&v| f(v)).collect();
        Self::with_channels(vertices, self.faces.clone(), self.channels.clone())
    }

    /// SHA-256 over vertex coordinates and face indices, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        h.update((self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v {
                h.update(c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_areas_are_thirds() {
        let m = right_triangle();
        let a = m.vertex_areas();
        for i in 0..3 {
            assert!((a[i] - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!((m.total_area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 7]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { face: 0, index: 7, .. }));
    }

    #[test]
    fn rejects_zero_area_and_repeated_index() {
        let err = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { face: 0, .. }));
        let err = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 1]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { face: 0, .. }));
    }

    #[test]
    fn unreferenced_vertices_are_dropped_in_order() {
        let m = TriangleMesh::new(
            vec![
                [9.0, 9.0, 9.0],
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![[1, 2, 3]],
        )
        .unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert_eq!(m.vertices()[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn surface_integral_checks_length() {
        let m = right_triangle();
        assert!(matches!(
            m.surface_integral(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
        assert!((m.surface_integral(&[2.0; 3]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_square_grid_integrals() {
        let m = unit_square_grid(41);
        let ones = vec![1.0; m.vertex_count()];
        assert!((m.surface_integral(&ones).unwrap() - 1.0).abs() < 1e-9);
        assert!((m.vertex_areas().total() - 1.0).abs() < 1e-9);
        let xs: Vec<f64> = m.vertices().iter().map(|v| v[0]).collect();
        assert!((m.surface_integral(&xs).unwrap() - 0.5).abs() < 2e-3);
    }

    #[test]
    fn closedness() {
        assert!(!right_triangle().is_closed());
        assert!(icosphere(1, 1.0).is_closed());
    }

    #[test]
    fn hash_changes_with_geometry() {
        let a = right_triangle();
        let b = a.map_vertices(|v| [v[0] * 2.0, v[1], v[2]]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), right_triangle().content_hash());
    }
}
