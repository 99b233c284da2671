#ifndef GRAPHFIELD_H
#define GRAPHFIELD_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_INVALID_ARGUMENT = 1,
  GF_STATUS_NULL_POINTER = 2,
  GF_STATUS_SOLVER_FAILURE = 3,
  GF_STATUS_PANIC = 4,
  GF_STATUS_BUFFER_TOO_SMALL = 5,
} GfStatus;

typedef enum GfCovarianceMode {
  GF_COVARIANCE_MODE_EIGEN = 0,
  GF_COVARIANCE_MODE_SINC = 1,
} GfCovarianceMode;

typedef struct GfGraph GfGraph;

typedef struct GfMesh GfMesh;

typedef struct GfOperator GfOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the buffer size
 * that would hold the whole message.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t gf_last_error_message(char *buf, size_t len);

/**
 * Builtin graph: `interval`, `loop`, `tadpole`, `star4` or `triangle`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum GfStatus gf_graph_builtin(const char *name, struct GfGraph **out);

/**
 * Graph from `n` edges; edge `i` joins vertex ids `from[i]` and `to[i]`
 * and has id `i`.
 *
 * # Safety
 * The arrays must hold `n` elements and `out` must be writable.
 */
enum GfStatus gf_graph_from_edges(const uint64_t *from,
                                  const uint64_t *to,
                                  const double *lengths,
                                  size_t n,
                                  struct GfGraph **out);

/**
 * Graph from edge-list text, one `edge <id> <from> <to> <length>` per line.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum GfStatus gf_graph_parse(const char *text, struct GfGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from this library not yet freed.
 */
void gf_graph_free(struct GfGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle; outputs must be writable.
 */
enum GfStatus gf_graph_size(const struct GfGraph *graph, size_t *num_vertices, size_t *num_edges);

/**
 * Shortest-path distance between the point at arc length `t_x` on edge
 * index `edge_x` and the point `t_y` on `edge_y`.
 *
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
enum GfStatus gf_graph_distance(const struct GfGraph *graph,
                                size_t edge_x,
                                double t_x,
                                size_t edge_y,
                                double t_y,
                                double *out);

/**
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
enum GfStatus gf_mesh_new(const struct GfGraph *graph, double max_h, struct GfMesh **out);

/**
 * # Safety
 * `mesh` must be null or a handle from this library not yet freed.
 */
void gf_mesh_free(struct GfMesh *mesh);

/**
 * # Safety
 * `mesh` must be a live handle and `out` writable.
 */
enum GfStatus gf_mesh_num_dofs(const struct GfMesh *mesh, size_t *out);

/**
 * Mass and stiffness matrices for `kappa^2`, `H` given as polynomial
 * coefficients in arc length (1 to 4 each, lowest degree first, same on
 * every edge) and vertex coefficient `alpha`.
 *
 * # Safety
 * `mesh` must be a live handle, the coefficient arrays must hold the given
 * number of elements and `out` must be writable.
 */
enum GfStatus gf_operator_new(const struct GfMesh *mesh,
                              const double *kappa2,
                              size_t kappa2_len,
                              const double *big_h,
                              size_t big_h_len,
                              double alpha,
                              struct GfOperator **out);

/**
 * # Safety
 * `op` must be null or a handle from this library not yet freed.
 */
void gf_operator_free(struct GfOperator *op);

/**
 * Whether the coefficients satisfy a sufficient well-posedness condition.
 *
 * # Safety
 * `op` must be a live handle and `out` writable.
 */
enum GfStatus gf_operator_wellposed(const struct GfOperator *op, bool *out);

/**
 * The `count` smallest eigenvalues in ascending order.
 *
 * # Safety
 * `op` must be a live handle and `out` must hold `out_len` elements.
 */
enum GfStatus gf_operator_eigenvalues(const struct GfOperator *op,
                                      size_t count,
                                      double *out,
                                      size_t out_len);

/**
 * Number of sinc quadrature nodes for `0 < beta < 1` and step `k`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_sinc_node_count(double beta, double step, size_t *out);

/**
 * `-1 / (beta ln h)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_default_step(double beta, double max_h, double *out);

/**
 * Applies the approximate `L^{-gamma}`, `0 < gamma <= 2`, to the dual
 * vector `rhs`. `step <= 0` selects the default step.
 *
 * # Safety
 * `op` must be a live handle; `rhs` and `out` must hold `n` elements.
 */
enum GfStatus gf_fractional_solve(const struct GfOperator *op,
                                  double gamma,
                                  double step,
                                  const double *rhs,
                                  double *out,
                                  size_t n);

/**
 * Draws `count` field samples with noise draws `0..count` under `seed`.
 * Sample `s` occupies `out[s * dofs .. (s + 1) * dofs]`.
 *
 * # Safety
 * `op` must be a live handle and `out` must hold `out_len` elements.
 */
enum GfStatus gf_sample_field(const struct GfOperator *op,
                              double beta,
                              double step,
                              uint64_t seed,
                              size_t count,
                              double *out,
                              size_t out_len);

/**
 * Dense covariance matrix at the dofs, row major, `dofs * dofs` values.
 *
 * # Safety
 * `op` must be a live handle and `out` must hold `out_len` elements.
 */
enum GfStatus gf_covariance(const struct GfOperator *op,
                            double beta,
                            enum GfCovarianceMode mode,
                            double step,
                            double *out,
                            size_t out_len);

/**
 * Least squares fit of `ln err = c + r ln h`.
 *
 * # Safety
 * `h` and `err` must hold `n` elements; outputs must be writable.
 */
enum GfStatus gf_fit_rate(const double *h,
                          const double *err,
                          size_t n,
                          double *out_constant,
                          double *out_rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHFIELD_H */
