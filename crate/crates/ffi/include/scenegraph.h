// SPDX-License-Identifier: Apache-2.0

#ifndef SCENEGRAPH_H
#define SCENEGRAPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_ARGUMENT = 1,
  SG_STATUS_INVALID_UTF8 = 2,
  SG_STATUS_IO = 3,
  SG_STATUS_PARSE = 4,
  SG_STATUS_VALIDATION = 5,
  SG_STATUS_NOT_FOUND = 6,
  SG_STATUS_CONFLICT = 7,
  SG_STATUS_READ_ONLY = 8,
  SG_STATUS_INTEGRITY = 9,
  SG_STATUS_UNDERFLOW = 10,
  SG_STATUS_PANIC = 11,
} SgStatus;

typedef enum SgExportFormat {
  SG_EXPORT_FORMAT_MERGED = 0,
  SG_EXPORT_FORMAT_PER_IMAGE = 1,
} SgExportFormat;

/**
 * Standalone prior database.
 */
typedef struct SgPrior SgPrior;

/**
 * Open project directory.
 */
typedef struct SgProject SgProject;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread; do not free.
 */
const char *sg_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sg_string_free(char *s);

/**
 * Opens the project at `root`, repairing it unless `read_only` is non-zero.
 * The repair report is written to `*out_report` as JSON when that pointer
 * is non-null.
 *
 * # Safety
 * `root` must be a NUL-terminated string; `out` must be writable.
 */
enum SgStatus sg_project_open(const char *root,
                              int32_t read_only,
                              struct SgProject **out,
                              char **out_report);

/**
 * Closes a project handle. Null is ignored.
 *
 * # Safety
 * `project` must come from [`sg_project_open`] and not have been closed.
 */
void sg_project_close(struct SgProject *project);

/**
 * Checks the project at `root` without modifying it. Returns
 * `SG_STATUS_INTEGRITY` when issues were found; the report is written to
 * `*out_report` either way.
 *
 * # Safety
 * `root` must be a NUL-terminated string; `out_report` must be writable.
 */
enum SgStatus sg_project_verify(const char *root, char **out_report);

/**
 * Ranks predicates for a pair. `request_json` is
 * `{"subject_ref", "object_ref", "k"?, "override_regions"?}`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_project_recommend(const struct SgProject *project,
                                   const char *image_id,
                                   const char *request_json,
                                   char **out_json);

/**
 * Stores a relationship. `request_json` is
 * `{"id"?, "subject_ref", "predicate", "object_ref"}`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_project_annotate(struct SgProject *project,
                                  const char *image_id,
                                  const char *request_json,
                                  char **out_json);

/**
 * Deletes a stored relationship and its prior contribution.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_project_delete_relationship(struct SgProject *project,
                                             const char *image_id,
                                             const char *relationship_id);

/**
 * Writes an export under the project's `export/` directory. `split_json`
 * may be null (every image is train) or an `{image_id: split}` object. The
 * export result, including the conversion report, goes to `*out_json`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_project_export(const struct SgProject *project,
                                enum SgExportFormat format,
                                const char *split_json,
                                char **out_json);

/**
 * Copies the project's prior database into a new standalone handle.
 *
 * # Safety
 * `project` must be valid; `out` must be writable.
 */
enum SgStatus sg_project_prior(const struct SgProject *project, struct SgPrior **out);

/**
 * Feature bits for a subject/object box pair. Boxes are `[x1, y1, x2, y2]`.
 * Bit order: contact, subject_left, subject_above, subject_smaller,
 * subject_larger, subject_inside, object_inside.
 *
 * # Safety
 * `subject` and `object` must point at four integers; `out_bits` must be
 * writable.
 */
enum SgStatus sg_extract_features(const uint32_t (*subject)[4],
                                  const uint32_t (*object)[4],
                                  uint8_t *out_bits);

/**
 * Empty prior database.
 */
struct SgPrior *sg_prior_new(void);

/**
 * Parses a prior database from its text form.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum SgStatus sg_prior_from_text(const char *text, struct SgPrior **out);

/**
 * Text form of the database.
 *
 * # Safety
 * `prior` must be valid; `out_text` must be writable.
 */
enum SgStatus sg_prior_to_text(const struct SgPrior *prior, char **out_text);

/**
 * Releases a prior handle. Null is ignored.
 *
 * # Safety
 * `prior` must come from this library and not have been freed.
 */
void sg_prior_free(struct SgPrior *prior);

/**
 * Records one accepted annotation.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_prior_update(struct SgPrior *prior,
                              const char *subject_category,
                              const char *object_category,
                              uint8_t features,
                              const char *predicate);

/**
 * Withdraws one annotation. Fails with `SG_STATUS_UNDERFLOW`, leaving the
 * database unchanged, if it was never recorded.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_prior_remove(struct SgPrior *prior,
                              const char *subject_category,
                              const char *object_category,
                              uint8_t features,
                              const char *predicate);

/**
 * Score of `predicate` for the pair, summed over features set in
 * `features`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SgStatus sg_prior_score(const struct SgPrior *prior,
                             const char *subject_category,
                             const char *object_category,
                             uint8_t features,
                             const char *predicate,
                             uint64_t *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENEGRAPH_H */
