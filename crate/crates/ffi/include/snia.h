#ifndef SNIA_H
#define SNIA_H

/* Generated by cbindgen from snia-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of a fallible call.
typedef enum SniaStatus {
  SNIA_STATUS_OK = 0,
  SNIA_STATUS_NULL_POINTER = 1,
  SNIA_STATUS_INVALID_ARGUMENT = 2,
  SNIA_STATUS_PARSE_ERROR = 3,
  SNIA_STATUS_VALIDATION_ERROR = 4,
  SNIA_STATUS_TRAINING_ERROR = 5,
  SNIA_STATUS_IO_ERROR = 6,
  SNIA_STATUS_INTERNAL_ERROR = 7,
} SniaStatus;

// Baseline attacker selector for `snia_baseline_attack`.
typedef enum SniaAttacker {
  SNIA_ATTACKER_RANDOM = 0,
  SNIA_ATTACKER_MOST_ATTR = 1,
  SNIA_ATTACKER_ONE_SHOT_GRAD = 2,
  SNIA_ATTACKER_GREEDY_GRAD = 3,
} SniaAttacker;

// Opaque graph handle.
typedef struct SniaGraph SniaGraph;

// Opaque trained-classifier handle.
typedef struct SniaVictim SniaVictim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null when the
// last call succeeded. The pointer is valid until the next failing call.
const char *snia_last_error_message(void);

// Load a prepared dataset directory (edges/features/labels/meta TSV) into
// a graph handle.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must point to writable
// storage for one pointer.
enum SniaStatus snia_graph_load(const char *dir, struct SniaGraph **out);

// Release a graph handle. Null is a no-op.
//
// # Safety
// `graph` must have come from [`snia_graph_load`] and not been freed.
void snia_graph_free(struct SniaGraph *graph);

// Node count, or 0 for a null handle.
//
// # Safety
// `graph` must be a live handle or null.
size_t snia_graph_num_nodes(const struct SniaGraph *graph);

// Feature-dimension count, or 0 for a null handle.
//
// # Safety
// `graph` must be a live handle or null.
size_t snia_graph_num_features(const struct SniaGraph *graph);

// Label count, or 0 for a null handle.
//
// # Safety
// `graph` must be a live handle or null.
size_t snia_graph_num_labels(const struct SniaGraph *graph);

// Undirected edge count, or 0 for a null handle.
//
// # Safety
// `graph` must be a live handle or null.
size_t snia_graph_num_edges(const struct SniaGraph *graph);

// Largest number of active features on any node (the default attack
// budget), or 0 for a null handle.
//
// # Safety
// `graph` must be a live handle or null.
size_t snia_graph_max_feature_budget(const struct SniaGraph *graph);

// Train a victim on the dataset in `dataset_dir` (its splits are read
// from `splits.tsv`). `arch` is one of gcn|sgc|surrogate|tagcn|gcnii.
//
// # Safety
// `graph` must be a live handle loaded from the same `dataset_dir`;
// `dataset_dir` and `arch` must be NUL-terminated strings; `out` must
// point to writable storage for one pointer.
enum SniaStatus snia_victim_train(const struct SniaGraph *graph,
                                  const char *dataset_dir,
                                  const char *arch,
                                  uint64_t seed,
                                  struct SniaVictim **out);

// Load a victim checkpoint trained on the given graph.
//
// # Safety
// `graph` must be a live handle; `path` must be a NUL-terminated string;
// `out` must point to writable storage for one pointer.
enum SniaStatus snia_victim_load(const struct SniaGraph *graph,
                                 const char *path,
                                 struct SniaVictim **out);

// Save a victim checkpoint.
//
// # Safety
// `victim` must be a live handle; `path` a NUL-terminated string.
enum SniaStatus snia_victim_save(const struct SniaVictim *victim, const char *path);

// Release a victim handle. Null is a no-op.
//
// # Safety
// `victim` must have come from a `snia_victim_*` constructor and not been
// freed.
void snia_victim_free(struct SniaVictim *victim);

// Argmax accuracy of the victim over the given node ids.
//
// # Safety
// `victim` and `graph` must be live handles; `ids` must point to
// `ids_len` readable node ids; `out` must be a writable f64 slot.
enum SniaStatus snia_victim_accuracy(const struct SniaVictim *victim,
                                     const struct SniaGraph *graph,
                                     const size_t *ids,
                                     size_t ids_len,
                                     double *out);

// Black-box query: probability that the victim assigns `label` to
// `target` after injecting one node wired to `target` carrying the given
// active features.
//
// # Safety
// Handles must be live; `features` must point to `features_len` readable
// indices (may be null when the length is 0); `out` must be writable.
enum SniaStatus snia_query_target_prob(const struct SniaVictim *victim,
                                       const struct SniaGraph *graph,
                                       size_t target,
                                       size_t label,
                                       const size_t *features,
                                       size_t features_len,
                                       double *out);

// Run one baseline attack for the goal (`target`, `label`) and report the
// selected features and whether the victim now predicts the targeted
// label.
//
// `grad_model` supplies gradients for the gradient-based attackers; pass
// the victim itself for the white-box setting or a surrogate for the
// black-box one (ignored by `Random`/`MostAttr`, may be null then).
// `out_features` must have room for `budget` indices; `out_len` receives
// the number written.
//
// # Safety
// Handles must be live; `out_features`, `out_len` and `out_success` must
// be writable with the stated capacities.
enum SniaStatus snia_baseline_attack(const struct SniaVictim *victim,
                                     const struct SniaVictim *grad_model,
                                     const struct SniaGraph *graph,
                                     enum SniaAttacker attacker,
                                     size_t target,
                                     size_t label,
                                     size_t budget,
                                     uint64_t seed,
                                     size_t *out_features,
                                     size_t *out_len,
                                     bool *out_success);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SNIA_H */
