//! C interface to `ergomesh`.
//!
//! Every fallible function returns an [`EmStatus`]. On failure the message is
//! kept per thread and can be read with [`em_last_error_message`]. Objects
//! are handed out as opaque pointers and must be released with the matching
//! `*_free` function. Panics never cross the boundary; they are reported as
//! [`EmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ergomesh::cli::{resolve_config_value, run_plan, Overrides};
use ergomesh::ergodic::{
    coverage_field, ergodic_metric_value, spectral_weights, InformationMap, SensorModel, Trajectory, WeightScheme,
};
use ergomesh::laplace::{assemble_cotan_laplacian, assemble_mass_matrix};
use ergomesh::mesh::{icosphere, load_mesh, MeshFormat, TriangleMesh};
use ergomesh::sdf::DistanceIndex;
use ergomesh::spectral::{compute_eigenbasis, SpectralBasis};
use ergomesh::{Error, ErrorKind};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad parameters, configuration or mesh.
    InvalidArgument = 2,
    /// A numerical stage failed (eigensolver, degenerate coverage, ...).
    Numerical = 3,
    /// File access or parsing failed.
    Io = 4,
    /// An internal panic was caught.
    Panic = 5,
}

/// Triangle mesh handle.
pub struct EmMesh(TriangleMesh);

/// Laplace-Beltrami eigenbasis handle.
pub struct EmBasis(SpectralBasis);

/// Signed distance index handle.
pub struct EmDistanceIndex(DistanceIndex);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(EmStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let status = match err.kind() {
            ErrorKind::Config => EmStatus::InvalidArgument,
            ErrorKind::Numerical => EmStatus::Numerical,
            ErrorKind::Io => EmStatus::Io,
        };
        Failure(status, err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(EmStatus::InvalidArgument, message.into())
}

/// Run `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EmStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            EmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn em_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn em_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load an OBJ or PLY mesh; the format is taken from the file extension.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_load(path: *const c_char, out: *mut *mut EmMesh) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = Path::new(str_arg(path, "path")?);
        let format = MeshFormat::from_path(path)
            .ok_or_else(|| invalid(format!("cannot infer mesh format of {}", path.display())))?;
        *out = boxed(EmMesh(load_mesh(path, format)?));
        Ok(())
    })
}

/// Build a mesh from `n_vertices` xyz triples and `n_faces` index triples.
///
/// # Safety
/// `vertices` must hold `3 * n_vertices` doubles, `faces` `3 * n_faces`
/// indices, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_from_arrays(
    vertices: *const f64,
    n_vertices: usize,
    faces: *const u32,
    n_faces: usize,
    out: *mut *mut EmMesh,
) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let v = slice_arg(vertices, 3 * n_vertices, "vertices")?;
        let f = slice_arg(faces, 3 * n_faces, "faces")?;
        let verts = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let tris = f
            .chunks_exact(3)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
            .collect();
        *out = boxed(EmMesh(TriangleMesh::new(verts, tris)?));
        Ok(())
    })
}

/// Icosahedron refined `level` times and projected onto a sphere about the origin.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_icosphere(level: usize, radius: f64, out: *mut *mut EmMesh) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(radius > 0.0 && radius.is_finite()) || level > 8 {
            return Err(invalid("icosphere needs radius > 0 and level <= 8"));
        }
        *out = boxed(EmMesh(icosphere(level, radius)));
        Ok(())
    })
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_vertex_count(mesh: *const EmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// Face count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_face_count(mesh: *const EmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.face_count())
}

/// Total surface area.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_total_area(mesh: *const EmMesh, out: *mut f64) -> EmStatus {
    guard(|| {
        let mesh = ref_arg(mesh, "mesh")?;
        *out_arg(out, "out")? = mesh.0.total_area();
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_mesh_free(mesh: *mut EmMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Smallest `k` eigenpairs of the cotangent Laplacian with lumped mass. The
/// basis may hold more than `k` pairs when a degenerate cluster straddles `k`.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_basis_compute(
    mesh: *const EmMesh,
    k: usize,
    tolerance: f64,
    out: *mut *mut EmBasis,
) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mesh = &ref_arg(mesh, "mesh")?.0;
        let basis = compute_eigenbasis(&assemble_cotan_laplacian(mesh), &assemble_mass_matrix(mesh), k, tolerance)?;
        *out = boxed(EmBasis(basis));
        Ok(())
    })
}

/// Number of eigenpairs, or 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_basis_len(basis: *const EmBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.len())
}

/// Copy the eigenvalues into `out`, which must hold at least
/// `em_basis_len(basis)` doubles.
///
/// # Safety
/// `basis` must be a live handle and `out` must point to `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn em_basis_eigenvalues(basis: *const EmBasis, out: *mut f64, capacity: usize) -> EmStatus {
    guard(|| {
        let values = ref_arg(basis, "basis")?.0.eigenvalues();
        if capacity < values.len() {
            return Err(invalid(format!("buffer holds {capacity} values, {} needed", values.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_basis_free(basis: *mut EmBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Ergodic metric of a state sequence against the uniform map, with
/// `exp(-0.1 sqrt(lambda))` weights and an isotropic Gaussian sensor of width
/// `sigma`. `states` holds `n_states` xyz triples.
///
/// # Safety
/// `mesh` and `basis` must be live handles built from the same mesh,
/// `states` must hold `3 * n_states` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn em_ergodic_metric(
    mesh: *const EmMesh,
    basis: *const EmBasis,
    states: *const f64,
    n_states: usize,
    sigma: f64,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mesh = &ref_arg(mesh, "mesh")?.0;
        let basis = &ref_arg(basis, "basis")?.0;
        if n_states < 2 {
            return Err(invalid("at least two states are needed"));
        }
        let raw = slice_arg(states, 3 * n_states, "states")?;
        let traj = Trajectory::from_states(raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(), 1.0)?;
        let model = SensorModel::new(sigma)?;
        let weights = spectral_weights(basis.eigenvalues(), WeightScheme::ExpDecay)?;
        let map = InformationMap::uniform(mesh);
        let coverage = coverage_field(&model, &traj, mesh)?;
        *out = ergodic_metric_value(basis, &weights, &map, &coverage)?;
        Ok(())
    })
}

/// Build a signed distance index over the mesh. Open meshes give unsigned
/// distances.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_distance_index_build(mesh: *const EmMesh, out: *mut *mut EmDistanceIndex) -> EmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mesh = &ref_arg(mesh, "mesh")?.0;
        *out = boxed(EmDistanceIndex(DistanceIndex::build(mesh)));
        Ok(())
    })
}

/// Distance from `point` (three doubles) to the surface. When `gradient` is
/// not null it receives the unit gradient of the distance.
///
/// # Safety
/// `index` must be a live handle, `point` must hold three doubles,
/// `distance` must be valid and `gradient` null or room for three doubles.
#[no_mangle]
pub unsafe extern "C" fn em_distance_query(
    index: *const EmDistanceIndex,
    point: *const f64,
    distance: *mut f64,
    gradient: *mut f64,
) -> EmStatus {
    guard(|| {
        let index = &ref_arg(index, "index")?.0;
        let p = slice_arg(point, 3, "point")?;
        let distance = out_arg(distance, "distance")?;
        let q = index.query([p[0], p[1], p[2]]);
        *distance = q.distance;
        if !gradient.is_null() {
            std::slice::from_raw_parts_mut(gradient, 3).copy_from_slice(&q.gradient);
        }
        Ok(())
    })
}

/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_distance_index_free(index: *mut EmDistanceIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Run the full planner on a JSON configuration (the same document the
/// command-line tool reads, including an optional `preset` key). Outputs are
/// written to the configured directory and the run report is returned as a
/// JSON string to be released with [`em_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `report_json` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn em_plan_run(config_json: *const c_char, report_json: *mut *mut c_char) -> EmStatus {
    guard(|| {
        let out = out_arg(report_json, "report_json")?;
        let text = str_arg(config_json, "config_json")?;
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid(format!("configuration is not JSON: {e}")))?;
        let cfg = resolve_config_value(Some(doc), &Overrides::default())?;
        let report = run_plan(&cfg)?;
        let json = serde_json::to_string(&report).map_err(|e| invalid(e.to_string()))?;
        *out = CString::new(json).map_err(|e| invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
