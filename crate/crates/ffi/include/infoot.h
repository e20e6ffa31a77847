#ifndef INFOOT_H
#define INFOOT_H

#include <stdbool.h>
#include <stddef.h>

// Result code of every call.
typedef enum InfootStatus {
  INFOOT_STATUS_OK = 0,
  INFOOT_STATUS_NULL_POINTER = 1,
  INFOOT_STATUS_INVALID_INPUT = 2,
  INFOOT_STATUS_DIMENSION_MISMATCH = 3,
  INFOOT_STATUS_NON_FINITE = 4,
  INFOOT_STATUS_DEGENERATE = 5,
  INFOOT_STATUS_BUFFER_TOO_SMALL = 6,
  INFOOT_STATUS_INTERNAL = 7,
} InfootStatus;

// A feasible transport plan with its solver diagnostics.
typedef struct InfootCoupling InfootCoupling;

// KDE model over a source and target point cloud, plus the target
// coordinates used by the projections.
typedef struct InfootModel InfootModel;

// Fused solver settings; start from [`infoot_solver_config_default`].
typedef struct InfootSolverConfig {
  double lambda;
  double epsilon;
  size_t outer_iters;
  double outer_tol;
  size_t inner_max_iter;
  double inner_tol;
} InfootSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *infoot_last_error(void);

// Library version as a static nul-terminated string.
const char *infoot_version(void);

// Defaults: λ = 100, ε = 1, 50 outer iterations, outer tolerance 1e-6.
struct InfootSolverConfig infoot_solver_config_default(void);

// Builds a KDE model from `n × dim` source and `m × dim` target points with
// relative bandwidth `bandwidth`.
//
// # Safety
// `source` and `target` must point to `n * dim` and `m * dim` readable
// doubles; `out` must be a writable pointer.
enum InfootStatus infoot_model_new(const double *source,
                                   size_t n,
                                   const double *target,
                                   size_t m,
                                   size_t dim,
                                   double bandwidth,
                                   struct InfootModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` is null or came from [`infoot_model_new`] and was not freed.
void infoot_model_free(struct InfootModel *model);

// Kernelized mutual information of an `n × m` plan under `model`.
//
// # Safety
// `model` must be live, `plan` must point to `n * m` readable doubles and
// `out` must be writable.
enum InfootStatus infoot_mutual_information(const struct InfootModel *model,
                                            const double *plan,
                                            double *out);

// Entropic OT on an `n × m` cost. Null `p` or `q` means uniform. Hitting
// `max_iter` still returns a plan, flagged as not converged.
//
// # Safety
// `cost` must point to `n * m` readable doubles, non-null `p` and `q` to
// `n` and `m` doubles; `out` must be writable.
enum InfootStatus infoot_sinkhorn(const double *cost,
                                  size_t n,
                                  size_t m,
                                  const double *p,
                                  const double *q,
                                  double epsilon,
                                  size_t max_iter,
                                  double tol,
                                  struct InfootCoupling **out);

// Fused InfoOT `min ⟨Γ, C⟩ − λ Î(Γ)` on the model's points with uniform
// marginals. Null `config` uses the defaults.
//
// # Safety
// `model` must be live, `cost` must point to `n * m` readable doubles,
// `config` is null or readable, and `out` must be writable.
enum InfootStatus infoot_solve_fused(const struct InfootModel *model,
                                     const double *cost,
                                     const struct InfootSolverConfig *config,
                                     struct InfootCoupling **out);

// Releases a coupling; null is ignored.
//
// # Safety
// `coupling` is null or came from this library and was not freed.
void infoot_coupling_free(struct InfootCoupling *coupling);

// Shape of the plan.
//
// # Safety
// `coupling` must be live; `rows` and `cols` must be writable.
enum InfootStatus infoot_coupling_shape(const struct InfootCoupling *coupling,
                                        size_t *rows,
                                        size_t *cols);

// Copies the plan, row-major, into `out`.
//
// # Safety
// `coupling` must be live and `out` must point to `capacity` writable
// doubles.
enum InfootStatus infoot_coupling_copy(const struct InfootCoupling *coupling,
                                       double *out,
                                       size_t capacity);

// Whether the solve met its stopping rule, and the iterations it took.
//
// # Safety
// `coupling` must be live; `converged` and `iterations` are null or
// writable.
enum InfootStatus infoot_coupling_status(const struct InfootCoupling *coupling,
                                         bool *converged,
                                         size_t *iterations);

// Barycentric projection of every source point: `n × dim` doubles.
//
// # Safety
// `model` and `coupling` must be live and `out` must point to `capacity`
// writable doubles.
enum InfootStatus infoot_project_barycentric(const struct InfootModel *model,
                                             const struct InfootCoupling *coupling,
                                             double *out,
                                             size_t capacity);

// Conditional projection of `count × dim` query points, or of every
// source point when `queries` is null. A nonpositive `bandwidth` reuses
// the model's.
//
// # Safety
// `model` and `coupling` must be live, non-null `queries` must point to
// `count * dim` readable doubles, and `out` must point to `capacity`
// writable doubles.
enum InfootStatus infoot_project_conditional(const struct InfootModel *model,
                                             const struct InfootCoupling *coupling,
                                             const double *queries,
                                             size_t count,
                                             double bandwidth,
                                             double *out,
                                             size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFOOT_H */
