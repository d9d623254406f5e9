#ifndef ERGOMESH_H
#define ERGOMESH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum EmStatus {
  EM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EM_STATUS_NULL_POINTER = 1,
  /**
   * Bad parameters, configuration or mesh.
   */
  EM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A numerical stage failed (eigensolver, degenerate coverage, ...).
   */
  EM_STATUS_NUMERICAL = 3,
  /**
   * File access or parsing failed.
   */
  EM_STATUS_IO = 4,
  /**
   * An internal panic was caught.
   */
  EM_STATUS_PANIC = 5,
} EmStatus;

/**
 * Laplace-Beltrami eigenbasis handle.
 */
typedef struct EmBasis EmBasis;

/**
 * Signed distance index handle.
 */
typedef struct EmDistanceIndex EmDistanceIndex;

/**
 * Triangle mesh handle.
 */
typedef struct EmMesh EmMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *em_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *em_version(void);

/**
 * Load an OBJ or PLY mesh; the format is taken from the file extension.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EmStatus em_mesh_load(const char *path, struct EmMesh **out);

/**
 * Build a mesh from `n_vertices` xyz triples and `n_faces` index triples.
 *
 * # Safety
 * `vertices` must hold `3 * n_vertices` doubles, `faces` `3 * n_faces`
 * indices, and `out` must be a valid pointer.
 */
enum EmStatus em_mesh_from_arrays(const double *vertices,
                                  size_t n_vertices,
                                  const uint32_t *faces,
                                  size_t n_faces,
                                  struct EmMesh **out);

/**
 * Icosahedron refined `level` times and projected onto a sphere about the origin.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EmStatus em_mesh_icosphere(size_t level, double radius, struct EmMesh **out);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t em_mesh_vertex_count(const struct EmMesh *mesh);

/**
 * Face count, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t em_mesh_face_count(const struct EmMesh *mesh);

/**
 * Total surface area.
 *
 * # Safety
 * `mesh` must be a live handle and `out` a valid pointer.
 */
enum EmStatus em_mesh_total_area(const struct EmMesh *mesh, double *out);

/**
 * # Safety
 * `mesh` must be null or a handle not yet freed.
 */
void em_mesh_free(struct EmMesh *mesh);

/**
 * Smallest `k` eigenpairs of the cotangent Laplacian with lumped mass. The
 * basis may hold more than `k` pairs when a degenerate cluster straddles `k`.
 *
 * # Safety
 * `mesh` must be a live handle and `out` a valid pointer.
 */
enum EmStatus em_basis_compute(const struct EmMesh *mesh,
                               size_t k,
                               double tolerance,
                               struct EmBasis **out);

/**
 * Number of eigenpairs, or 0 for a null handle.
 *
 * # Safety
 * `basis` must be null or a live handle.
 */
size_t em_basis_len(const struct EmBasis *basis);

/**
 * Copy the eigenvalues into `out`, which must hold at least
 * `em_basis_len(basis)` doubles.
 *
 * # Safety
 * `basis` must be a live handle and `out` must point to `capacity` doubles.
 */
enum EmStatus em_basis_eigenvalues(const struct EmBasis *basis, double *out, size_t capacity);

/**
 * # Safety
 * `basis` must be null or a handle not yet freed.
 */
void em_basis_free(struct EmBasis *basis);

/**
 * Ergodic metric of a state sequence against the uniform map, with
 * `exp(-0.1 sqrt(lambda))` weights and an isotropic Gaussian sensor of width
 * `sigma`. `states` holds `n_states` xyz triples.
 *
 * # Safety
 * `mesh` and `basis` must be live handles built from the same mesh,
 * `states` must hold `3 * n_states` doubles and `out` must be valid.
 */
enum EmStatus em_ergodic_metric(const struct EmMesh *mesh,
                                const struct EmBasis *basis,
                                const double *states,
                                size_t n_states,
                                double sigma,
                                double *out);

/**
 * Build a signed distance index over the mesh. Open meshes give unsigned
 * distances.
 *
 * # Safety
 * `mesh` must be a live handle and `out` a valid pointer.
 */
enum EmStatus em_distance_index_build(const struct EmMesh *mesh, struct EmDistanceIndex **out);

/**
 * Distance from `point` (three doubles) to the surface. When `gradient` is
 * not null it receives the unit gradient of the distance.
 *
 * # Safety
 * `index` must be a live handle, `point` must hold three doubles,
 * `distance` must be valid and `gradient` null or room for three doubles.
 */
enum EmStatus em_distance_query(const struct EmDistanceIndex *index,
                                const double *point,
                                double *distance,
                                double *gradient);

/**
 * # Safety
 * `index` must be null or a handle not yet freed.
 */
void em_distance_index_free(struct EmDistanceIndex *index);

/**
 * Run the full planner on a JSON configuration (the same document the
 * command-line tool reads, including an optional `preset` key). Outputs are
 * written to the configured directory and the run report is returned as a
 * JSON string to be released with [`em_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `report_json` a valid
 * pointer.
 */
enum EmStatus em_plan_run(const char *config_json, char **report_json);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void em_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERGOMESH_H */
