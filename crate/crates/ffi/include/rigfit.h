/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef RIGFIT_H
#define RIGFIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum RigfitStatus {
  RIGFIT_STATUS_OK = 0,
  // A required pointer argument was null.
  RIGFIT_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  RIGFIT_STATUS_INVALID_UTF8 = 2,
  // Malformed or inconsistent input (bad file, dimension mismatch,
  // out-of-range value).
  RIGFIT_STATUS_INVALID_INPUT = 3,
  RIGFIT_STATUS_IO = 4,
  // The computation broke down (non-finite values, degenerate geometry).
  RIGFIT_STATUS_NUMERICAL = 5,
  // A fit finished but at least one stage stopped on a failed evaluation.
  RIGFIT_STATUS_STAGE_FAILED = 6,
  // A Rust panic was caught at the boundary.
  RIGFIT_STATUS_INTERNAL = 7,
} RigfitStatus;

// Outcome of a fit.
typedef struct RigfitFit RigfitFit;

typedef struct RigfitMesh RigfitMesh;

// Observed normal map, landmarks and camera.
typedef struct RigfitTarget RigfitTarget;

// Rigged template plus the camera bundled with it, if any.
typedef struct RigfitTemplate RigfitTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *rigfit_last_error(void);

// Library version as a static NUL-terminated string.
const char *rigfit_version(void);

// Loads a template JSON and its bundled camera.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RigfitStatus rigfit_template_load(const char *path, struct RigfitTemplate **out);

// Builds the synthetic head template with a square camera of
// `image_size` pixels.
//
// # Safety
// `out` must be writable.
enum RigfitStatus rigfit_template_synthetic(size_t columns,
                                            size_t rows,
                                            uint32_t image_size,
                                            struct RigfitTemplate **out);

// # Safety
// `t` must be null or a handle from this library, not used afterwards.
void rigfit_template_free(struct RigfitTemplate *t);

// Vertex count, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
size_t rigfit_template_vertex_count(const struct RigfitTemplate *t);

// Controller count, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
size_t rigfit_template_controller_count(const struct RigfitTemplate *t);

// Poses the template at random controller values drawn from `range` of
// each controller's bounds and renders the observation through the
// template's camera. The posed mesh is written to `truth` when it is not
// null.
//
// # Safety
// `t` must be a live handle; `out` writable; `truth` null or writable.
enum RigfitStatus rigfit_synth(const struct RigfitTemplate *t,
                               uint64_t seed,
                               double range,
                               struct RigfitTarget **out,
                               struct RigfitMesh **truth);

// Reads an observation directory written by `rigfit_target_save` or the
// command-line `synth`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` writable.
enum RigfitStatus rigfit_target_load(const char *dir, struct RigfitTarget **out);

// # Safety
// `target` must be a live handle; `dir` a NUL-terminated string.
enum RigfitStatus rigfit_target_save(const struct RigfitTarget *target, const char *dir);

// # Safety
// `t` must be null or a handle from this library, not used afterwards.
void rigfit_target_free(struct RigfitTarget *t);

// Fits the template to `target` from the neutral pose. `plan_path` may be
// null for the default rig, joint and vertex plan. A fit whose stage
// failed still produces `out` and returns `StageFailed`.
//
// # Safety
// `t` and `target` must be live handles; `plan_path` null or a
// NUL-terminated string; `out` writable.
enum RigfitStatus rigfit_fit(const struct RigfitTemplate *t,
                             const struct RigfitTarget *target,
                             const char *plan_path,
                             struct RigfitFit **out);

// Writes the fitted mesh, state, loss trace and stage summary to `dir`.
//
// # Safety
// `f` must be a live handle; `dir` a NUL-terminated string.
enum RigfitStatus rigfit_fit_save(const struct RigfitFit *f, const char *dir);

// Copies the fitted mesh into a new mesh handle.
//
// # Safety
// `f` must be a live handle; `out` writable.
enum RigfitStatus rigfit_fit_mesh(const struct RigfitFit *f, struct RigfitMesh **out);

// Number of stages run, or 0 for a null handle.
//
// # Safety
// `f` must be null or a live handle.
size_t rigfit_fit_stage_count(const struct RigfitFit *f);

// Lowest total loss reached in stage `stage`, or NaN when out of range.
//
// # Safety
// `f` must be null or a live handle.
double rigfit_fit_stage_loss(const struct RigfitFit *f, size_t stage);

// # Safety
// `f` must be null or a handle from this library, not used afterwards.
void rigfit_fit_free(struct RigfitFit *f);

// # Safety
// `path` must be a NUL-terminated string; `out` writable.
enum RigfitStatus rigfit_mesh_load(const char *path, struct RigfitMesh **out);

// # Safety
// `m` must be a live handle; `path` a NUL-terminated string.
enum RigfitStatus rigfit_mesh_save(const struct RigfitMesh *m, const char *path);

// # Safety
// `m` must be null or a live handle.
size_t rigfit_mesh_vertex_count(const struct RigfitMesh *m);

// # Safety
// `m` must be null or a live handle.
size_t rigfit_mesh_face_count(const struct RigfitMesh *m);

// Copies vertex positions as packed `x y z` triples into `xyz`, which
// holds `len` doubles; `len` must be at least three times the vertex
// count.
//
// # Safety
// `m` must be a live handle; `xyz` must point to `len` writable doubles.
enum RigfitStatus rigfit_mesh_vertices(const struct RigfitMesh *m, double *xyz, size_t len);

// # Safety
// `m` must be null or a handle from this library, not used afterwards.
void rigfit_mesh_free(struct RigfitMesh *m);

// Symmetric RMSE and normal consistency from `n` surface samples per
// mesh.
//
// # Safety
// `a` and `b` must be live handles; `rmse` and `nc` writable.
enum RigfitStatus rigfit_eval(const struct RigfitMesh *a,
                              const struct RigfitMesh *b,
                              size_t n,
                              uint64_t seed,
                              double *rmse,
                              double *nc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIGFIT_H */
