use ergomesh::ergodic::{
    coverage_field, ergodic_metric_value, spectral_weights, InformationMap, SensorModel, Trajectory, WeightScheme,
};
use ergomesh::laplace::{assemble_cotan_laplacian, assemble_mass_matrix};
use ergomesh::mesh::{icosphere, rectangle_grid, subdivide_midpoint, TriangleMesh};
use ergomesh::sdf::{brute_force_distance, DistanceIndex};
use ergomesh::spectral::{compute_eigenbasis, SpectralBasis};
use proptest::prelude::*;
use std::sync::OnceLock;

/// `n x n` vertex grid on the unit square with interior vertices moved by up
/// to 0.3 of the spacing.
fn jittered_grid(n: usize, jitter: &[(f64, f64)]) -> TriangleMesh {
    let h = 1.0 / (n - 1) as f64;
    let base = rectangle_grid(1.0, 1.0, n, n);
    base.map_vertices(|v| {
        let interior = v[0] > 1e-12 && v[0] < 1.0 - 1e-12 && v[1] > 1e-12 && v[1] < 1.0 - 1e-12;
        let i = (v[0] / h).round() as usize * (n + 1) + (v[1] / h).round() as usize;
        let (dx, dy) = jitter[i % jitter.len()];
        if interior {
            [v[0] + 0.3 * h * dx, v[1] + 0.3 * h * dy, 0.0]
        } else {
            v
        }
    })
    .unwrap()
}

fn sphere_fixture() -> &'static (TriangleMesh, SpectralBasis) {
    static CELL: OnceLock<(TriangleMesh, SpectralBasis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = icosphere(2, 1.0);
        let basis =
            compute_eigenbasis(&assemble_cotan_laplacian(&mesh), &assemble_mass_matrix(&mesh), 25, 1e-10).unwrap();
        (mesh, basis)
    })
}

fn sdf_fixture() -> &'static (TriangleMesh, DistanceIndex) {
    static CELL: OnceLock<(TriangleMesh, DistanceIndex)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = icosphere(2, 1.0);
        let index = DistanceIndex::build(&mesh);
        (mesh, index)
    })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-2.0..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_is_symmetric_with_zero_row_sums_and_psd(
        jitter in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..40),
        x in prop::collection::vec(-1.0..1.0f64, 49),
    ) {
        let mesh = jittered_grid(7, &jitter);
        let s = assemble_cotan_laplacian(&mesh);
        prop_assert!(s.matrix().asymmetry() <= 1e-12);
        for r in s.matrix().row_sums() {
            prop_assert!(r.abs() <= 1e-9);
        }
        prop_assert!(s.matrix().quadratic_form(&x) >= -1e-12);
        let m = assemble_mass_matrix(&mesh);
        prop_assert!(m.diagonal().iter().all(|&d| d > 0.0));
        prop_assert!((m.trace() - mesh.total_area()).abs() <= 1e-9 * mesh.total_area());
    }

    #[test]
    fn project_after_reconstruct_is_identity(c in prop::collection::vec(-3.0..3.0f64, 1..=25)) {
        let (_, basis) = sphere_fixture();
        let mut coeffs = c.clone();
        coeffs.resize(basis.len(), 0.0);
        let back = basis.project(&basis.reconstruct(&coeffs).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&coeffs) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn signed_distance_is_one_lipschitz(p in point(), q in point()) {
        let (_, index) = sdf_fixture();
        let dp = index.signed_distance(p);
        let dq = index.signed_distance(q);
        let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        prop_assert!((dp - dq).abs() <= dist + 1e-12);
    }

    #[test]
    fn bvh_matches_exhaustive_search(p in point()) {
        let (mesh, index) = sdf_fixture();
        let q = index.query(p);
        prop_assert!((q.distance.abs() - brute_force_distance(mesh, p)).abs() <= 1e-12);
        let g = q.gradient;
        prop_assert!(((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn coverage_is_a_density_and_metric_is_nonnegative(
        states in prop::collection::vec(prop::array::uniform3(-1.5..1.5f64), 2..12),
        sigma in 0.3..1.5f64,
    ) {
        let (mesh, basis) = sphere_fixture();
        let traj = Trajectory::from_states(states, 0.1).unwrap();
        let model = SensorModel::new(sigma).unwrap();
        let cov = coverage_field(&model, &traj, mesh).unwrap();
        prop_assert!(cov.mu.iter().all(|&m| m >= 0.0));
        let total = mesh.surface_integral(&cov.mu).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        let weights = spectral_weights(basis.eigenvalues(), WeightScheme::ExpDecay).unwrap();
        let map = InformationMap::uniform(mesh);
        prop_assert!(ergodic_metric_value(basis, &weights, &map, &cov).unwrap() >= 0.0);
    }

    #[test]
    fn flat_subdivision_preserves_area(
        jitter in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..20),
        levels in 1usize..3,
    ) {
        let mesh = jittered_grid(5, &jitter);
        let fine = subdivide_midpoint(&mesh, levels, None).unwrap();
        prop_assert_eq!(fine.face_count(), mesh.face_count() * 4usize.pow(levels as u32));
        prop_assert!((fine.total_area() - mesh.total_area()).abs() <= 1e-12);
    }

    #[test]
    fn forward_euler_controls_reproduce_states(
        states in prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), 2..20),
        dt in 0.01..2.0f64,
    ) {
        let traj = Trajectory::from_states(states, dt).unwrap();
        prop_assert!(traj.max_defect() <= 1e-12);
    }
}
