#ifndef VGS_H
#define VGS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum VgsStatus {
  VGS_STATUS_OK = 0,
  VGS_STATUS_NULL_POINTER = 1,
  VGS_STATUS_INVALID_UTF8 = 2,
  VGS_STATUS_INVALID_JSON = 3,
  VGS_STATUS_INVALID_XPATH = 4,
  VGS_STATUS_NOT_FOUND = 5,
  VGS_STATUS_INVALID_ARGUMENT = 6,
  VGS_STATUS_INTERNAL = 7,
} VgsStatus;

// Parsed HTML document.
typedef struct VgsDocument VgsDocument;

// Attribute to XPath map loaded from wrapper JSON.
typedef struct VgsWrapper VgsWrapper;

// Precision, recall and F1 of one value-list comparison.
typedef struct VgsMetrics {
  double precision;
  double recall;
  double f1;
} VgsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library on the same thread.
const char *vgs_last_error_message(void);

// Library version as a static string.
const char *vgs_version(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void vgs_string_free(char *s);

// Parses `html` into a new document handle.
//
// # Safety
// `html` must be a NUL-terminated string and `out` a writable pointer.
enum VgsStatus vgs_document_parse(const char *html, struct VgsDocument **out);

// # Safety
// `doc` must be NULL or a handle from [`vgs_document_parse`] not yet freed.
void vgs_document_free(struct VgsDocument *doc);

// Evaluates an XPath and writes the string values as a JSON array.
//
// # Safety
// Pointers must be valid; see the module documentation for ownership.
enum VgsStatus vgs_document_evaluate(const struct VgsDocument *doc,
                                     const char *xpath,
                                     char **out_json);

// Writes the absolute positional XPath of the single node `xpath` selects.
//
// # Safety
// Pointers must be valid; see the module documentation for ownership.
enum VgsStatus vgs_document_absolute_xpath(const struct VgsDocument *doc,
                                           const char *xpath,
                                           char **out);

// Writes the HTML of the elements within `distance` tree edges of the
// node `anchor_xpath` selects.
//
// # Safety
// Pointers must be valid; see the module documentation for ownership.
enum VgsStatus vgs_document_local_segment(const struct VgsDocument *doc,
                                          const char *anchor_xpath,
                                          int64_t distance,
                                          char **out_html);

// Strips scripts, styles, comments and non-whitelisted attributes.
//
// # Safety
// Pointers must be valid; see the module documentation for ownership.
enum VgsStatus vgs_simplify_html(const char *html, char **out_html);

// Loads a wrapper from its JSON form. Every entry must compile.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum VgsStatus vgs_wrapper_from_json(const char *json, struct VgsWrapper **out);

// # Safety
// `wrapper` must be NULL or a handle from [`vgs_wrapper_from_json`] not yet freed.
void vgs_wrapper_free(struct VgsWrapper *wrapper);

// Number of attribute entries, or 0 for NULL.
//
// # Safety
// `wrapper` must be NULL or a live handle.
size_t vgs_wrapper_entry_count(const struct VgsWrapper *wrapper);

// Applies the wrapper to a document and writes `{attribute: [values]}` as
// JSON. `page_url` may be NULL; when given, link and image values are
// resolved against it.
//
// # Safety
// Pointers must be valid; see the module documentation for ownership.
enum VgsStatus vgs_wrapper_apply(const struct VgsWrapper *wrapper,
                                 const struct VgsDocument *doc,
                                 const char *page_url,
                                 char **out_json);

// Multiset precision, recall and F1 of two JSON string arrays.
//
// # Safety
// Pointers must be valid.
enum VgsStatus vgs_score_values(const char *predicted_json,
                                const char *gold_json,
                                struct VgsMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VGS_H */
