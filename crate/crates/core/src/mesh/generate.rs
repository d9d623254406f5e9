//! Procedural meshes: flat grids, icospheres, UV spheres, tori and a
//! wind-turbine-like surface for large-scale inspection runs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{subdivide_midpoint, SphereProjection, TriangleMesh};
use crate::geom::{self, Point3};

/// Regular `n x n` vertex grid on the unit square in the `z = 0` plane.
pub fn unit_square_grid(n: usize) -> TriangleMesh {
    rectangle_grid(1.0, 1.0, n, n)
}

/// Regular grid on `[0, lx] x [0, ly]` with `nx x ny` vertices, all diagonals
/// in the same direction, counter-clockwise seen from `+z`.
pub fn rectangle_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> TriangleMesh {
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2 vertices per side");
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([
                lx * i as f64 / (nx - 1) as f64,
                ly * j as f64 / (ny - 1) as f64,
                0.0,
            ]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = a + 1;
            let c = a + nx + 1;
            let d = a + nx;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid is valid")
}

/// Regular icosahedron inscribed in the sphere of the given radius.
pub fn icosahedron(radius: f64) -> TriangleMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [Point3; 12] = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let vertices: Vec<Point3> = raw
        .iter()
        .map(|&v| geom::scale(v, radius / geom::norm(v)))
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    orient_outward_convex(&vertices, &mut faces, [0.0; 3]);
    TriangleMesh::new(vertices, faces).expect("icosahedron is valid")
}

/// Icosahedron refined `level` times by midpoint subdivision, with every
/// vertex projected onto the sphere. Level `n` has `10 * 4^n + 2` vertices.
pub fn icosphere(level: usize, radius: f64) -> TriangleMesh {
    let base = icosahedron(radius);
    if level == 0 {
        return base;
    }
    subdivide_midpoint(
        &base,
        level,
        Some(SphereProjection {
            center: [0.0; 3],
            radius,
        }),
    )
    .expect("icosphere subdivision is valid")
}

/// Latitude/longitude sphere with `rings` latitude bands and `segments`
/// longitudes; it has `2 + (rings - 1) * segments` vertices.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![[0.0, 0.0, radius]];
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push([
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ]);
        }
    }
    vertices.push([0.0, 0.0, -radius]);
    let south = vertices.len() - 1;
    let row = |i: usize, j: usize| 1 + (i - 1) * segments + (j % segments);
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, row(1, j), row(1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            faces.push([row(i, j), row(i + 1, j), row(i + 1, j + 1)]);
            faces.push([row(i, j), row(i + 1, j + 1), row(i, j + 1)]);
        }
    }
    for j in 0..segments {
        faces.push([row(rings - 1, j), south, row(rings - 1, j + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("uv sphere is valid")
}

/// Torus around the `z` axis with tube centre radius `major` and tube radius
/// `minor`, outward oriented.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriangleMesh {
    assert!(major > minor && minor > 0.0 && n_major >= 3 && n_minor >= 3);
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_minor as f64;
            let rho = major + minor * phi.cos();
            vertices.push([rho * theta.cos(), rho * theta.sin(), minor * phi.sin()]);
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("torus is valid")
}

/// Dimensions of the procedural wind turbine. The rotor turns about the `x`
/// axis, the tower stands on `z = 0` and one blade points straight up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbineParams {
    /// Nacelle length along the rotor axis (m).
    pub nacelle_length: f64,
    /// Circumradius of the hexagonal hub cross-section (m).
    pub hub_radius: f64,
    /// Height of the rotor axis above the ground (m).
    pub hub_height: f64,
    /// Distance from the rotor axis to the blade tips (m).
    pub blade_radius: f64,
    /// Width of the blade and tower roots along the rotor axis (m).
    pub root_chord: f64,
    /// Tip-to-root size ratio of the blades.
    pub blade_taper: f64,
    /// Ground-to-top size ratio of the tower.
    pub tower_taper: f64,
    /// Target edge length (m).
    pub spacing: f64,
}

impl Default for TurbineParams {
    /// Overall extent 25.6 m x 122.8 m x 203.1 m.
    fn default() -> Self {
        let blade_radius = 122.8 / (2.0 * 30f64.to_radians().cos());
        TurbineParams {
            nacelle_length: 25.6,
            hub_radius: 4.0,
            hub_height: 203.1 - blade_radius,
            blade_radius,
            root_chord: 4.0,
            blade_taper: 0.35,
            tower_taper: 1.0,
            spacing: 2.0,
        }
    }
}

/// Watertight, connected, outward-oriented turbine-like surface: a hexagonal
/// prism hub with three extruded tapered blades and an extruded tower.
pub fn wind_turbine(params: &TurbineParams) -> TriangleMesh {
    let mut b = PatchBuilder::default();
    let hx = 0.5 * params.nacelle_length;
    let rh = params.hub_radius;
    let apothem = rh * 30f64.to_radians().cos();
    let half_root = 0.5 * params.root_chord;
    assert!(half_root < hx, "root chord must be shorter than the nacelle");
    let segs = |len: f64| ((len / params.spacing).ceil() as usize).max(1);

    // Hexagon corner k sits at angle 60k degrees in the (y, z) plane.
    let hex = |k: usize| {
        let a = (60.0 * (k % 6) as f64).to_radians();
        [rh * a.cos(), rh * a.sin()]
    };
    let at = |x: f64, yz: [f64; 2]| [x, yz[0], yz[1]];
    let n_edge = segs(rh);
    let n_outer = segs(hx - half_root);
    let n_mid = segs(params.root_chord);

    // Side face k spans corners k..k+1 with outward normal at 30 + 60k deg.
    // Face 1 carries the upright blade, 3 and 5 the lower blades, 4 the tower.
    for k in 0..6 {
        let (a, bb) = (hex(k), hex(k + 1));
        let normal_angle = (30.0 + 60.0 * k as f64).to_radians();
        let normal = [0.0, normal_angle.cos(), normal_angle.sin()];
        let xs = [-hx, -half_root, half_root, hx];
        let counts = [n_outer, n_mid, n_outer];
        for s in 0..3 {
            if s == 1 && k != 0 && k != 2 {
                continue;
            }
            b.patch(
                [at(xs[s], bb), at(xs[s + 1], bb), at(xs[s], a), at(xs[s + 1], a)],
                counts[s],
                n_edge,
            );
        }
        let (length, taper) = match k {
            1 | 3 | 5 => (params.blade_radius - apothem, params.blade_taper),
            4 => (params.hub_height - apothem, params.tower_taper),
            _ => continue,
        };
        let base = [
            at(-half_root, bb),
            at(half_root, bb),
            at(half_root, a),
            at(-half_root, a),
        ];
        let center = geom::scale(
            base.iter().fold([0.0; 3], |acc, &p| geom::add(acc, p)),
            0.25,
        );
        let tip: Vec<Point3> = base
            .iter()
            .map(|&p| {
                let offset = geom::scale(geom::sub(p, center), taper);
                geom::add(geom::add(center, offset), geom::scale(normal, length))
            })
            .collect();
        let n_len = segs(length);
        let edge_counts = [n_mid, n_edge, n_mid, n_edge];
        for e in 0..4 {
            let (p, q) = (e, (e + 1) % 4);
            b.patch([base[p], base[q], tip[p], tip[q]], edge_counts[e], n_len);
        }
        b.patch([tip[0], tip[1], tip[3], tip[2]], n_mid, n_edge);
    }

    // End caps: fan from the axis to the subdivided hexagon boundary.
    for (x, sign) in [(hx, 1.0), (-hx, -1.0)] {
        let mut ring = Vec::new();
        for k in 0..6 {
            let (p, q) = (at(x, hex(k)), at(x, hex(k + 1)));
            for i in 0..n_edge {
                ring.push(edge_point(p, q, i, n_edge));
            }
        }
        let c = b.vertex([x, 0.0, 0.0]);
        let ids: Vec<usize> = ring.iter().map(|&p| b.vertex(p)).collect();
        for i in 0..ids.len() {
            let (u, v) = (ids[i], ids[(i + 1) % ids.len()]);
            if sign > 0.0 {
                b.faces.push([c, u, v]);
            } else {
                b.faces.push([c, v, u]);
            }
        }
    }
    // Built around the rotor axis; shift so the tower stands on z = 0.
    let vertices = b
        .vertices
        .iter()
        .map(|&[x, y, z]| [x, y, z + params.hub_height])
        .collect();
    TriangleMesh::new(vertices, b.faces).expect("turbine surface is valid")
}

/// Point `i / n` of the way along segment `a -> b`, computed from the
/// lexicographically smaller endpoint so both traversal directions agree
/// bit for bit.
fn edge_point(a: Point3, b: Point3, i: usize, n: usize) -> Point3 {
    if i == 0 {
        return a;
    }
    if i == n {
        return b;
    }
    if a < b {
        geom::lerp(a, b, i as f64 / n as f64)
    } else {
        geom::lerp(b, a, (n - i) as f64 / n as f64)
    }
}

#[derive(Default)]
struct PatchBuilder {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    lookup: HashMap<[u64; 3], usize>,
}

impl PatchBuilder {
    fn vertex(&mut self, p: Point3) -> usize {
        // Normalize -0.0 so welded keys match.
        let p = p.map(|c| if c == 0.0 { 0.0 } else { c });
        let key = p.map(f64::to_bits);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        self.vertices.push(p);
        self.lookup.insert(key, self.vertices.len() - 1);
        self.vertices.len() - 1
    }

    /// Bilinear patch with corners `[p00, p10, p01, p11]`, `nu x nv` cells,
    /// oriented along `(p10 - p00) x (p01 - p00)`.
    fn patch(&mut self, c: [Point3; 4], nu: usize, nv: usize) {
        let [p00, p10, p01, p11] = c;
        let mut ids = vec![0usize; (nu + 1) * (nv + 1)];
        for j in 0..=nv {
            for i in 0..=nu {
                let p = if j == 0 {
                    edge_point(p00, p10, i, nu)
                } else if j == nv {
                    edge_point(p01, p11, i, nu)
                } else if i == 0 {
                    edge_point(p00, p01, j, nv)
                } else if i == nu {
                    edge_point(p10, p11, j, nv)
                } else {
                    let lo = geom::lerp(p00, p10, i as f64 / nu as f64);
                    let hi = geom::lerp(p01, p11, i as f64 / nu as f64);
                    geom::lerp(lo, hi, j as f64 / nv as f64)
                };
                ids[j * (nu + 1) + i] = self.vertex(p);
            }
        }
        for j in 0..nv {
            for i in 0..nu {
                let a = ids[j * (nu + 1) + i];
                let b = ids[j * (nu + 1) + i + 1];
                let c = ids[(j + 1) * (nu + 1) + i + 1];
                let d = ids[(j + 1) * (nu + 1) + i];
                self.faces.push([a, b, c]);
                self.faces.push([a, c, d]);
            }
        }
    }
}

fn orient_outward_convex(vertices: &[Point3], faces: &mut [[usize; 3]], center: Point3) {
    for f in faces.iter_mut() {
        let [a, b, c] = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
        let n = geom::cross(geom::sub(b, a), geom::sub(c, a));
        let centroid = geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0);
        if geom::dot(n, geom::sub(centroid, center)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// Each directed edge appears once and its reverse once.
    fn consistently_oriented(m: &TriangleMesh) -> bool {
        let mut directed = BTreeMap::new();
        for f in m.faces() {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    fn signed_volume(m: &TriangleMesh) -> f64 {
        m.faces()
            .iter()
            .map(|f| {
                let [a, b, c] = [m.vertices()[f[0]], m.vertices()[f[1]], m.vertices()[f[2]]];
                geom::dot(a, geom::cross(b, c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn vertex_and_face_counts() {
        assert_eq!(icosahedron(1.0).face_count(), 20);
        assert_eq!(icosphere(2, 1.0).face_count(), 320);
        assert_eq!(icosphere(3, 1.0).vertex_count(), 642);
        assert_eq!(uv_sphere(0.5, 71, 70).vertex_count(), 4902);
        assert_eq!(unit_square_grid(100).vertex_count(), 10_000);
    }

    #[test]
    fn closed_surfaces_are_outward_and_consistent() {
        let torus = torus(0.3575, 0.1425, 48, 16);
        let turbine = wind_turbine(&TurbineParams::default());
        for m in [icosphere(2, 1.0), uv_sphere(0.5, 12, 16), torus, turbine] {
            assert!(m.is_closed());
            assert!(consistently_oriented(&m));
            assert!(signed_volume(&m) > 0.0);
        }
    }

    #[test]
    fn torus_volume_close_to_analytic() {
        let (big, small) = (0.3575, 0.1425);
        let m = torus(big, small, 128, 48);
        let exact = 2.0 * std::f64::consts::PI.powi(2) * big * small * small;
        assert!((signed_volume(&m) - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn turbine_extent() {
        let m = wind_turbine(&TurbineParams::default());
        let (lo, hi) = m.bounding_box();
        let ext = geom::sub(hi, lo);
        assert!((ext[0] - 25.6).abs() < 1e-9);
        assert!((ext[1] - 122.8).abs() < 3.0, "{ext:?}");
        assert!((ext[2] - 203.1).abs() < 3.0, "{ext:?}");
        assert!(lo[2].abs() < 1e-9);
        // connected: one zero-eigenvalue cluster is checked in the spectral
        // tests; here every vertex must reach vertex 0 through edges
        let mut adj = vec![Vec::new(); m.vertex_count()];
        for f in m.faces() {
            for k in 0..3 {
                adj[f[k]].push(f[(k + 1) % 3]);
                adj[f[(k + 1) % 3]].push(f[k]);
            }
        }
        let mut seen = vec![false; m.vertex_count()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
