#ifndef EMOFACE_H
#define EMOFACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum EmofaceStatus {
  EMOFACE_STATUS_OK = 0,
  EMOFACE_STATUS_NULL_POINTER = 1,
  EMOFACE_STATUS_INVALID_UTF8 = 2,
  EMOFACE_STATUS_IO = 3,
  EMOFACE_STATUS_INVALID_INPUT = 4,
  EMOFACE_STATUS_UNKNOWN_CATEGORY = 5,
  EMOFACE_STATUS_UNSUPPORTED_FORMAT = 6,
  EMOFACE_STATUS_INCOMPATIBLE_CHECKPOINT = 7,
  EMOFACE_STATUS_CORRUPT_FILE = 8,
  EMOFACE_STATUS_BUFFER_TOO_SMALL = 9,
  EMOFACE_STATUS_INTERNAL = 10,
  EMOFACE_STATUS_PANIC = 11,
} EmofaceStatus;

// One generated animation: `frames × params` expression parameters plus metadata.
typedef struct EmofaceAnimation EmofaceAnimation;

// A loaded checkpoint ready to animate audio.
typedef struct EmofaceAnimator EmofaceAnimator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated, truncated to fit).
// Returns the full message length in bytes excluding the terminator, or 0 if there is none.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t emoface_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *emoface_version(void);

// Load a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EmofaceStatus emoface_animator_load(const char *path, struct EmofaceAnimator **out);

// Release an animator. Null is ignored.
//
// # Safety
// `animator` must come from [`emoface_animator_load`] and not be used afterwards.
void emoface_animator_free(struct EmofaceAnimator *animator);

// Number of expression parameters per frame produced by this animator.
//
// # Safety
// `animator` must be a live handle or null (returns 0).
size_t emoface_animator_n_params(const struct EmofaceAnimator *animator);

// Animate WAV bytes under an emotion schedule.
//
// `schedule_json` may be null for no user emotion. It accepts a keyframe array or an object
// with `keyframes` and `interpolation`. `identity` may be null (template identity) or point to
// `identity_len` shape coefficients.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum EmofaceStatus emoface_animate_wav(const struct EmofaceAnimator *animator,
                                       const uint8_t *wav,
                                       size_t wav_len,
                                       const char *schedule_json,
                                       const double *identity,
                                       size_t identity_len,
                                       struct EmofaceAnimation **out);

// Release an animation. Null is ignored.
//
// # Safety
// `animation` must come from [`emoface_animate_wav`] and not be used afterwards.
void emoface_animation_free(struct EmofaceAnimation *animation);

// Number of frames, or 0 for null.
//
// # Safety
// `animation` must be a live handle or null.
size_t emoface_animation_frames(const struct EmofaceAnimation *animation);

// Nominal frame rate, or 0 for null.
//
// # Safety
// `animation` must be a live handle or null.
double emoface_animation_fps(const struct EmofaceAnimation *animation);

// Copy the row-major `frames × n_params` parameter matrix into `buf`.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum EmofaceStatus emoface_animation_params(const struct EmofaceAnimation *animation,
                                            double *buf,
                                            size_t len);

// Serialize the animation (frames, timing, provenance) as JSON. Free with [`emoface_string_free`].
//
// # Safety
// `out` must be writable.
enum EmofaceStatus emoface_animation_to_json(const struct EmofaceAnimation *animation, char **out);

// Write one OBJ per frame into `dir` (`frame_00000.obj`, ...), using the animator's face model.
//
// # Safety
// Handles must be live; `dir` must be a NUL-terminated string.
enum EmofaceStatus emoface_animation_write_obj(const struct EmofaceAnimator *animator,
                                               const struct EmofaceAnimation *animation,
                                               const char *dir);

// The neutral template mesh as OBJ text. Free with [`emoface_string_free`].
//
// # Safety
// `out` must be writable.
enum EmofaceStatus emoface_template_obj(const struct EmofaceAnimator *animator, char **out);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void emoface_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMOFACE_H */
