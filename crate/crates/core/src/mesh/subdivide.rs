use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::{self, Point3};

/// Sphere onto which subdivided vertices are pushed radially.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereProjection {
    pub center: Point3,
    pub radius: f64,
}

impl SphereProjection {
    fn apply(&self, p: Point3) -> Point3 {
        let d = geom::sub(p, self.center);
        match geom::normalized(d) {
            Some(u) => geom::add(self.center, geom::scale(u, self.radius)),
            None => p,
        }
    }
}

/// Split every face into four through its edge midpoints, `levels` times.
/// Channels are interpolated linearly to the new vertices. With a projection,
/// old and new vertices are moved radially onto the sphere.
pub fn subdivide_midpoint(
    mesh: &TriangleMesh,
    levels: usize,
    project_to_sphere: Option<SphereProjection>,
) -> Result<TriangleMesh> {
    if levels == 0 {
        return Err(Error::Parameter("subdivision levels must be >= 1".into()));
    }
    let mut vertices: Vec<Point3> = mesh.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    let mut channels: BTreeMap<String, Vec<f64>> = mesh.channels().clone();
    if let Some(proj) = project_to_sphere {
        for v in &mut vertices {
            *v = proj.apply(*v);
        }
    }
    for _ in 0..levels {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let mut p = geom::lerp(vertices[key.0], vertices[key.1], 0.5);
                    if let Some(proj) = project_to_sphere {
                        p = proj.apply(p);
                    }
                    vertices.push(p);
                    for vals in channels.values_mut() {
                        let v = 0.5 * (vals[key.0] + vals[key.1]);
                        vals.push(v);
                    }
                    vertices.len() - 1
                });
            }
            let [a, b, c] = *f;
            let [ab, bc, ca] = mids;
            next_faces.push([a, ab, ca]);
            next_faces.push([ab, b, bc]);
            next_faces.push([ca, bc, c]);
            next_faces.push([ab, bc, ca]);
        }
        faces = next_faces;
    }
    TriangleMesh::with_channels(vertices, faces, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosahedron, unit_square_grid};

    #[test]
    fn one_face_one_level() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = subdivide_midpoint(&m, 1, None).unwrap();
        assert_eq!(s.face_count(), 4);
        assert_eq!(s.vertex_count(), 6);
        assert!((s.total_area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(subdivide_midpoint(&unit_square_grid(3), 0, None).is_err());
    }

    #[test]
    fn flat_area_preserved_and_channels_interpolated() {
        let m = unit_square_grid(5);
        let xs = m.vertices().iter().map(|v| v[0]).collect();
        let m = m.with_channel("x", xs).unwrap();
        let s = subdivide_midpoint(&m, 2, None).unwrap();
        assert!((s.total_area() - 1.0).abs() < 1e-12);
        let ch = s.channel("x").unwrap();
        for (v, x) in s.vertices().iter().zip(ch) {
            assert!((v[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_projection_converges() {
        // Max radial deviation of face centroids bounds the Hausdorff gap.
        let proj = SphereProjection {
            center: [0.0; 3],
            radius: 1.0,
        };
        let base = icosahedron(1.0);
        let mut prev_gap = f64::INFINITY;
        let mut prev_area = base.total_area();
        for level in 1..=4 {
            let m = subdivide_midpoint(&base, level, Some(proj)).unwrap();
            let gap = (0..m.face_count())
                .map(|f| {
                    let [a, b, c] = m.face_vertices(f);
                    let centroid = geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0);
                    1.0 - geom::norm(centroid)
                })
                .fold(0.0, f64::max);
            assert!(gap < prev_gap);
            let area = m.total_area();
            assert!(area > prev_area && area < 4.0 * std::f64::consts::PI);
            prev_gap = gap;
            prev_area = area;
        }
        assert!(prev_gap < 5e-3);
    }
}
