#ifndef VORTEX_H
#define VORTEX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VortexStatus {
  VORTEX_STATUS_OK = 0,
  VORTEX_STATUS_NULL_POINTER = 1,
  VORTEX_STATUS_INVALID_ARGUMENT = 2,
  VORTEX_STATUS_DATA_ERROR = 3,
  VORTEX_STATUS_NUMERIC_ERROR = 4,
  VORTEX_STATUS_PANIC = 5,
} VortexStatus;

typedef enum VortexEncoderKind {
  VORTEX_ENCODER_KIND_PLAIN = 0,
  VORTEX_ENCODER_KIND_VORTEX = 1,
  VORTEX_ENCODER_KIND_RANDOM = 2,
} VortexEncoderKind;

typedef enum VortexActivation {
  VORTEX_ACTIVATION_LINEAR = 0,
  VORTEX_ACTIVATION_SIGMOID = 1,
} VortexActivation;

// Encoder plus its camera readout settings.
typedef struct VortexEncoder VortexEncoder;

// Two-layer reconstruction network.
typedef struct VortexNet VortexNet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *vortex_last_error(void);

// Library version as a static NUL-terminated string.
const char *vortex_version(void);

// Creates an encoder with the default optical configuration.
// `charges` is read only for `VORTEX_ENCODER_KIND_VORTEX`, `seed` only for
// `VORTEX_ENCODER_KIND_RANDOM`. The readout starts noiseless.
//
// # Safety
// `charges` must point to `n_charges` doubles (or be NULL when unused);
// `out` must be a valid pointer to write the handle to.
enum VortexStatus vortex_encoder_new(enum VortexEncoderKind kind,
                                     const double *charges,
                                     uintptr_t n_charges,
                                     uint64_t seed,
                                     struct VortexEncoder **out);

// # Safety
// `enc` must be NULL or a handle from `vortex_encoder_new` not yet freed.
void vortex_encoder_free(struct VortexEncoder *enc);

// Length of one encoded sample (frames × 28 × 28), or 0 for NULL.
//
// # Safety
// `enc` must be NULL or a live encoder handle.
uintptr_t vortex_encoder_output_len(const struct VortexEncoder *enc);

// Sets camera noise. A non-finite `target_psnr_db` selects noiseless readout;
// otherwise the exposure of each frame is solved for that PSNR.
//
// # Safety
// `enc` must be a live encoder handle.
enum VortexStatus vortex_encoder_set_noise(struct VortexEncoder *enc,
                                           double target_psnr_db,
                                           double dark_var,
                                           uint64_t seed);

// Encodes one 28×28 row-major image with values in [0, 1]. `index` selects
// the noise stream. `out` receives `vortex_encoder_output_len` values.
//
// # Safety
// `image` must point to 784 doubles and `out` to `out_len` writable doubles.
enum VortexStatus vortex_encoder_encode(const struct VortexEncoder *enc,
                                        const double *image,
                                        uint64_t index,
                                        double *out,
                                        uintptr_t out_len);

// Creates a freshly initialized network.
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum VortexStatus vortex_net_new(uintptr_t input_dim,
                                 uintptr_t hidden,
                                 uintptr_t output_dim,
                                 enum VortexActivation act_hidden,
                                 enum VortexActivation act_out,
                                 uint64_t seed,
                                 struct VortexNet **out);

// Loads a VNET checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum VortexStatus vortex_net_load(const char *path, struct VortexNet **out);

// Writes a VNET checkpoint.
//
// # Safety
// `net` must be a live handle and `path` a NUL-terminated string.
enum VortexStatus vortex_net_save(const struct VortexNet *net, const char *path);

// # Safety
// `net` must be NULL or a handle not yet freed.
void vortex_net_free(struct VortexNet *net);

// # Safety
// `net` must be NULL or a live handle.
uintptr_t vortex_net_input_dim(const struct VortexNet *net);

// # Safety
// `net` must be NULL or a live handle.
uintptr_t vortex_net_output_dim(const struct VortexNet *net);

// Runs `rows` row-major input vectors through the network.
//
// # Safety
// `inputs` must hold `rows × input_dim` doubles and `out` must have room for
// `rows × output_dim`.
enum VortexStatus vortex_net_infer(const struct VortexNet *net,
                                   const double *inputs,
                                   uintptr_t rows,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VORTEX_H */
