//! Signed distance from ambient points to a triangle mesh.
//!
//! Closest points come from a bounding-volume hierarchy over the faces. The
//! sign is read off the angle-weighted pseudonormal of the closest feature
//! (face, edge or vertex), which is exact for closed, consistently oriented
//! meshes. Other meshes are answered with unsigned distances.

use std::collections::HashMap;

use log::warn;

use crate::geom::{self, Point3};
use crate::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;
/// Below this distance the gradient falls back to the feature pseudonormal.
pub const SURFACE_EPS: f64 = 1e-9;

/// Mesh element that holds the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(usize),
    /// Edge with sorted endpoint indices.
    Edge(usize, usize),
    Face(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceQuery {
    /// Positive outside, negative inside (signed mode); always >= 0 otherwise.
    pub distance: f64,
    pub closest: Point3,
    /// `d distance / d x`, a unit vector.
    pub gradient: Point3,
    pub feature: Feature,
    pub face: usize,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Point3,
    hi: Point3,
    /// Leaf: `start..start+count` into `order`. Inner: `count == 0`, children
    /// at `start` and `start + 1`.
    start: usize,
    count: usize,
}

/// BVH and pseudonormal tables for one mesh.
#[derive(Debug, Clone)]
pub struct DistanceIndex {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    nodes: Vec<Node>,
    order: Vec<usize>,
    face_normals: Vec<Point3>,
    vertex_normals: Vec<Point3>,
    edge_normals: HashMap<(usize, usize), Point3>,
    signed: bool,
    warning: Option<String>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn bbox_dist2(p: Point3, lo: Point3, hi: Point3) -> f64 {
    (0..3)
        .map(|a| {
            let d = (lo[a] - p[a]).max(0.0).max(p[a] - hi[a]);
            d * d
        })
        .sum()
}

/// Closest point on triangle `abc` to `p` with the feature it lies on,
/// following the Voronoi-region walk from Ericson's Real-Time Collision
/// Detection. The feature uses local corner indices.
fn closest_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> (Point3, LocalFeature) {
    use geom::{add, dot, scale, sub};
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, LocalFeature::Vertex(0));
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, LocalFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (add(a, scale(ab, v)), LocalFeature::Edge(0, 1));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, LocalFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (add(a, scale(ac, w)), LocalFeature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (add(b, scale(sub(c, b), w)), LocalFeature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (add(a, add(scale(ab, v), scale(ac, w))), LocalFeature::Face)
}

#[derive(Debug, Clone, Copy)]
enum LocalFeature {
    Vertex(usize),
    Edge(usize, usize),
    Face,
}

/// Exhaustive unsigned distance over all faces (reference implementation).
pub fn brute_force_distance(mesh: &TriangleMesh, p: Point3) -> f64 {
    (0..mesh.face_count())
        .map(|f| {
            let [a, b, c] = mesh.face_vertices(f);
            geom::dist(p, closest_on_triangle(p, a, b, c).0)
        })
        .fold(f64::INFINITY, f64::min)
}

impl DistanceIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let vertices = mesh.vertices().to_vec();
        let faces = mesh.faces().to_vec();
        let face_normals: Vec<Point3> = (0..faces.len())
            .map(|f| {
                let [a, b, c] = mesh.face_vertices(f);
                geom::normalized(geom::cross(geom::sub(b, a), geom::sub(c, a))).unwrap_or([0.0, 0.0, 1.0])
            })
            .collect();

        let mut vn = vec![[0.0; 3]; vertices.len()];
        let mut en: HashMap<(usize, usize), Point3> = HashMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, face) in faces.iter().enumerate() {
            let n = face_normals[f];
            for k in 0..3 {
                let (i, j, l) = (face[k], face[(k + 1) % 3], face[(k + 2) % 3]);
                let angle = geom::corner_angle(vertices[i], vertices[j], vertices[l]);
                vn[i] = geom::add(vn[i], geom::scale(n, angle));
                let e = en.entry(edge_key(i, j)).or_insert([0.0; 3]);
                *e = geom::add(*e, geom::scale(n, std::f64::consts::PI));
                *directed.entry((i, j)).or_insert(0) += 1;
            }
        }
        let vertex_normals = vn
            .into_iter()
            .map(|n| geom::normalized(n).unwrap_or([0.0, 0.0, 1.0]))
            .collect();
        let edge_normals = en
            .into_iter()
            .map(|(k, n)| (k, geom::normalized(n).unwrap_or([0.0, 0.0, 1.0])))
            .collect();

        let closed = mesh.is_closed();
        let oriented = directed.values().all(|&c| c == 1)
            && directed.keys().all(|&(i, j)| directed.contains_key(&(j, i)));
        let (signed, warning) = match (closed, oriented) {
            (true, true) => (true, None),
            (false, _) => (
                false,
                Some("mesh is not watertight; distances are unsigned".to_string()),
            ),
            (true, false) => (
                false,
                Some("mesh faces are not consistently oriented; distances are unsigned".to_string()),
            ),
        };
        if let Some(w) = &warning {
            warn!("{w}");
        }

        let centroids: Vec<Point3> = (0..faces.len())
            .map(|f| {
                let [a, b, c] = mesh.face_vertices(f);
                geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0)
            })
            .collect();
        let mut index = DistanceIndex {
            vertices,
            faces,
            nodes: Vec::new(),
            order: (0..centroids.len()).collect(),
            face_normals,
            vertex_normals,
            edge_normals,
            signed,
            warning,
        };
        index.nodes.push(Node {
            lo: [0.0; 3],
            hi: [0.0; 3],
            start: 0,
            count: 0,
        });
        index.build_node(0, 0, centroids.len(), &centroids);
        index
    }

    fn face_bounds(&self, range: &[usize]) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &f in range {
            for &v in &self.faces[f] {
                for a in 0..3 {
                    lo[a] = lo[a].min(self.vertices[v][a]);
                    hi[a] = hi[a].max(self.vertices[v][a]);
                }
            }
        }
        (lo, hi)
    }

    fn build_node(&mut self, node: usize, start: usize, end: usize, centroids: &[Point3]) {
        let (lo, hi) = self.face_bounds(&self.order[start..end]);
        self.nodes[node].lo = lo;
        self.nodes[node].hi = hi;
        if end - start <= LEAF_SIZE {
            self.nodes[node].start = start;
            self.nodes[node].count = end - start;
            return;
        }
        let mut clo = [f64::INFINITY; 3];
        let mut chi = [f64::NEG_INFINITY; 3];
        for &f in &self.order[start..end] {
            for a in 0..3 {
                clo[a] = clo[a].min(centroids[f][a]);
                chi[a] = chi[a].max(centroids[f][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (chi[a] - clo[a]).total_cmp(&(chi[b] - clo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            centroids[x][axis].total_cmp(&centroids[y][axis]).then(x.cmp(&y))
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                lo: [0.0; 3],
                hi: [0.0; 3],
                start: 0,
                count: 0,
            });
        }
        self.nodes[node].start = left;
        self.nodes[node].count = 0;
        self.build_node(left, start, mid, centroids);
        self.build_node(left + 1, mid, end, centroids);
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Reason for falling back to unsigned mode, if any.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Faces referenced by the leaves, in leaf order.
    pub fn leaf_faces(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.count > 0)
            .flat_map(|n| self.order[n.start..n.start + n.count].iter().copied())
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    fn pseudonormal(&self, feature: Feature) -> Point3 {
        match feature {
            Feature::Vertex(v) => self.vertex_normals[v],
            Feature::Edge(a, b) => self.edge_normals[&(a, b)],
            Feature::Face(f) => self.face_normals[f],
        }
    }

    fn closest(&self, p: Point3) -> (f64, Point3, Feature, usize) {
        let mut best = (f64::INFINITY, [0.0; 3], Feature::Face(0), 0usize);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if bbox_dist2(p, node.lo, node.hi) > best.0 {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    let [i, j, k] = self.faces[f];
                    let (q, local) = closest_on_triangle(p, self.vertices[i], self.vertices[j], self.vertices[k]);
                    let d2 = geom::dist2(p, q);
                    if d2 < best.0 || (d2 == best.0 && f < best.3) {
                        let ids = [i, j, k];
                        let feature = match local {
                            LocalFeature::Vertex(c) => Feature::Vertex(ids[c]),
                            LocalFeature::Edge(a, b) => {
                                let (x, y) = edge_key(ids[a], ids[b]);
                                Feature::Edge(x, y)
                            }
                            LocalFeature::Face => Feature::Face(f),
                        };
                        best = (d2, q, feature, f);
                    }
                }
            } else {
                // Visit the nearer child first.
                let (l, r) = (node.start, node.start + 1);
                let dl = bbox_dist2(p, self.nodes[l].lo, self.nodes[l].hi);
                let dr = bbox_dist2(p, self.nodes[r].lo, self.nodes[r].hi);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    pub fn query(&self, p: Point3) -> DistanceQuery {
        let (d2, closest, feature, face) = self.closest(p);
        let d = d2.sqrt();
        let diff = geom::sub(p, closest);
        let normal = self.pseudonormal(feature);
        let sign = if self.signed && geom::dot(diff, normal) < 0.0 {
            -1.0
        } else {
            1.0
        };
        let gradient = if d < SURFACE_EPS {
            normal
        } else {
            geom::scale(diff, sign / d)
        };
        DistanceQuery {
            distance: sign * d,
            closest,
            gradient,
            feature,
            face,
        }
    }

    pub fn signed_distance(&self, p: Point3) -> f64 {
        self.query(p).distance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, torus, unit_square_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, half: f64, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                ]
            })
            .collect()
    }

    #[test]
    fn single_triangle_is_unsigned_one_leaf() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let idx = DistanceIndex::build(&m);
        assert!(!idx.is_signed());
        assert!(idx.warning().is_some());
        assert_eq!(idx.leaf_count(), 1);
        let q = idx.query([0.2, 0.2, -0.5]);
        assert!((q.distance - 0.5).abs() < 1e-15);
        assert!((q.gradient[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn every_face_in_one_leaf() {
        let m = torus(1.0, 0.3, 24, 12);
        let idx = DistanceIndex::build(&m);
        let mut faces = idx.leaf_faces();
        faces.sort_unstable();
        assert_eq!(faces, (0..m.face_count()).collect::<Vec<_>>());
        assert!(idx.nodes.iter().all(|n| n.count <= LEAF_SIZE));
    }

    #[test]
    fn matches_brute_force() {
        for m in [icosphere(3, 1.0), torus(1.0, 0.3, 30, 16), unit_square_grid(15)] {
            let idx = DistanceIndex::build(&m);
            for p in random_points(300, 1.6, 7) {
                let bf = brute_force_distance(&m, p);
                assert!((idx.signed_distance(p).abs() - bf).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sphere_signs_and_vertex_query() {
        let m = icosphere(3, 1.0);
        let idx = DistanceIndex::build(&m);
        assert!(idx.is_signed());
        let out = idx.query([2.0, 0.0, 0.0]);
        assert!((out.distance - 1.0).abs() < 0.01);
        assert!((out.gradient[0] - 1.0).abs() < 1e-6);
        assert!((idx.signed_distance([0.0; 3]) + 1.0).abs() < 0.01);
        let v = m.vertices()[5];
        let q = idx.query(v);
        assert_eq!(q.distance, 0.0);
        assert_eq!(q.feature, Feature::Vertex(5));
        assert!((geom::norm(q.gradient) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_inside_is_negative() {
        let m = torus(1.0, 0.3, 40, 20);
        let idx = DistanceIndex::build(&m);
        assert!(idx.signed_distance([1.0, 0.0, 0.0]) < -0.28);
        assert!(idx.signed_distance([0.0, 0.0, 0.0]) > 0.6);
    }
}
