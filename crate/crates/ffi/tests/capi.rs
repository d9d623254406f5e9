use std::ffi::{CStr, CString};
use std::ptr;

use ergomesh_ffi::*;

fn last_error() -> String {
    let p = em_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tetrahedron() -> *mut EmMesh {
    let v = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let f: [u32; 12] = [0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3];
    let mut mesh = ptr::null_mut();
    let st = unsafe { em_mesh_from_arrays(v.as_ptr(), 4, f.as_ptr(), 4, &mut mesh) };
    assert_eq!(st, EmStatus::Ok);
    mesh
}

#[test]
fn mesh_from_arrays_reports_sizes_and_area() {
    let mesh = tetrahedron();
    unsafe {
        assert_eq!(em_mesh_vertex_count(mesh), 4);
        assert_eq!(em_mesh_face_count(mesh), 4);
        let mut area = 0.0;
        assert_eq!(em_mesh_total_area(mesh, &mut area), EmStatus::Ok);
        let expected = 1.5 + 3f64.sqrt() / 2.0;
        assert!((area - expected).abs() < 1e-14);
        em_mesh_free(mesh);
    }
    assert!(em_last_error_message().is_null());
}

#[test]
fn bad_face_index_is_an_invalid_argument() {
    let v = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let f: [u32; 3] = [0, 1, 7];
    let mut mesh = ptr::null_mut();
    let st = unsafe { em_mesh_from_arrays(v.as_ptr(), 3, f.as_ptr(), 1, &mut mesh) };
    assert_eq!(st, EmStatus::InvalidArgument);
    assert!(mesh.is_null());
    assert!(last_error().contains("vertex 7"), "{}", last_error());
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(em_mesh_load(ptr::null(), &mut mesh), EmStatus::NullPointer);
        assert!(last_error().contains("path"));
        assert_eq!(em_mesh_icosphere(1, 1.0, ptr::null_mut()), EmStatus::NullPointer);
        let mut area = 0.0;
        assert_eq!(em_mesh_total_area(ptr::null(), &mut area), EmStatus::NullPointer);
        assert_eq!(em_mesh_vertex_count(ptr::null()), 0);
        assert_eq!(em_basis_len(ptr::null()), 0);
        em_mesh_free(ptr::null_mut());
        em_basis_free(ptr::null_mut());
        em_distance_index_free(ptr::null_mut());
        em_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let path = CString::new("/nonexistent/dir/mesh.obj").unwrap();
    let mut mesh = ptr::null_mut();
    let st = unsafe { em_mesh_load(path.as_ptr(), &mut mesh) };
    assert_eq!(st, EmStatus::Io);
    assert!(last_error().contains("/nonexistent/dir/mesh.obj"));
    let unknown = CString::new("mesh.xyz").unwrap();
    assert_eq!(unsafe { em_mesh_load(unknown.as_ptr(), &mut mesh) }, EmStatus::InvalidArgument);
}

#[test]
fn loads_an_obj_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tri.obj");
    std::fs::write(&path, "v 0 0 0\nv 2 0 0\nv 0 2 0\nf 1 2 3\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(em_mesh_load(c.as_ptr(), &mut mesh), EmStatus::Ok);
        let mut area = 0.0;
        em_mesh_total_area(mesh, &mut area);
        assert!((area - 2.0).abs() < 1e-15);
        em_mesh_free(mesh);
    }
}

#[test]
fn sphere_spectrum_through_the_c_interface() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(em_mesh_icosphere(3, 1.0, &mut mesh), EmStatus::Ok);
        let mut basis = ptr::null_mut();
        assert_eq!(em_basis_compute(mesh, 4, 1e-10, &mut basis), EmStatus::Ok);
        let n = em_basis_len(basis);
        assert!(n >= 4);
        let mut small = [0.0; 1];
        assert_eq!(em_basis_eigenvalues(basis, small.as_mut_ptr(), 1), EmStatus::InvalidArgument);
        let mut vals = vec![0.0; n];
        assert_eq!(em_basis_eigenvalues(basis, vals.as_mut_ptr(), n), EmStatus::Ok);
        assert!(vals[0].abs() < 1e-8);
        for v in &vals[1..4] {
            // l = 1 eigenvalue of the unit sphere
            assert!((v - 2.0).abs() < 0.06, "{vals:?}");
        }

        let states: Vec<f64> = (0..20)
            .flat_map(|t| {
                let a = t as f64 * 0.3;
                [1.2 * a.cos(), 1.2 * a.sin(), 0.0]
            })
            .collect();
        let mut metric = -1.0;
        assert_eq!(em_ergodic_metric(mesh, basis, states.as_ptr(), 20, 0.3, &mut metric), EmStatus::Ok);
        assert!(metric > 0.0 && metric.is_finite());
        assert_eq!(
            em_ergodic_metric(mesh, basis, states.as_ptr(), 20, -1.0, &mut metric),
            EmStatus::InvalidArgument
        );
        em_basis_free(basis);
        em_mesh_free(mesh);
    }
}

#[test]
fn distance_queries_on_a_sphere() {
    unsafe {
        let mut mesh = ptr::null_mut();
        em_mesh_icosphere(4, 1.0, &mut mesh);
        let mut index = ptr::null_mut();
        assert_eq!(em_distance_index_build(mesh, &mut index), EmStatus::Ok);
        let mut d = 0.0;
        let mut g = [0.0; 3];
        assert_eq!(em_distance_query(index, [2.0, 0.0, 0.0].as_ptr(), &mut d, g.as_mut_ptr()), EmStatus::Ok);
        assert!((d - 1.0).abs() < 5e-3);
        assert!((g[0] - 1.0).abs() < 1e-2);
        assert_eq!(em_distance_query(index, [0.0; 3].as_ptr(), &mut d, ptr::null_mut()), EmStatus::Ok);
        assert!((d + 1.0).abs() < 5e-3);
        em_distance_index_free(index);
        em_mesh_free(mesh);
    }
}

#[test]
fn plan_run_returns_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "mesh": {"kind": "unit_square", "n": 12},
        "basis_size": 8,
        "sigma": 0.15,
        "horizon": 8,
        "dt": 0.1,
        "init": {"kind": "straight_line", "start": [0.1, 0.1, 0.0], "end": [0.9, 0.9, 0.0]},
        "solver": {"outer_iters": 3, "inner": {"max_iters": 50}},
        "output_dir": dir.path(),
    });
    let c = CString::new(config.to_string()).unwrap();
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(em_plan_run(c.as_ptr(), &mut report), EmStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        em_string_free(report);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], "plan");
        assert!(v["ergodic_metric"].as_f64().unwrap() <= v["initial_ergodic_metric"].as_f64().unwrap());
    }
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn plan_run_rejects_bad_configuration() {
    let mut report = ptr::null_mut();
    let bad = CString::new("{\"sigma\": -1}").unwrap();
    assert_eq!(unsafe { em_plan_run(bad.as_ptr(), &mut report) }, EmStatus::InvalidArgument);
    assert!(report.is_null());
    let garbage = CString::new("not json").unwrap();
    assert_eq!(unsafe { em_plan_run(garbage.as_ptr(), &mut report) }, EmStatus::InvalidArgument);
    let unknown = CString::new("{\"preset\": \"nope\"}").unwrap();
    assert_eq!(unsafe { em_plan_run(unknown.as_ptr(), &mut report) }, EmStatus::InvalidArgument);
}

#[test]
fn errors_are_per_thread() {
    let bad = CString::new("x.unknown").unwrap();
    let mut mesh = ptr::null_mut();
    unsafe { em_mesh_load(bad.as_ptr(), &mut mesh) };
    assert!(!em_last_error_message().is_null());
    std::thread::spawn(|| assert!(em_last_error_message().is_null())).join().unwrap();
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(em_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
