//! C ABI over the emoface animation pipeline.
//!
//! Every fallible call returns an [`EmofaceStatus`]. On failure the message is kept per thread
//! and can be read with [`emoface_last_error`]. Handles are opaque and must be released with
//! their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use emoface::app::{AnimationSequence, Animator};
use emoface::emotion::EmotionSchedule;
use emoface::face_model::write_obj;
use emoface::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmofaceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    UnknownCategory = 5,
    UnsupportedFormat = 6,
    IncompatibleCheckpoint = 7,
    CorruptFile = 8,
    BufferTooSmall = 9,
    Internal = 10,
    Panic = 11,
}

/// A loaded checkpoint ready to animate audio.
pub struct EmofaceAnimator {
    inner: Animator,
}

/// One generated animation: `frames × params` expression parameters plus metadata.
pub struct EmofaceAnimation {
    inner: AnimationSequence,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EmofaceStatus {
    match err {
        Error::Stage { source, .. } => status_of(source),
        Error::Io { .. } => EmofaceStatus::Io,
        Error::UnknownCategory { .. } => EmofaceStatus::UnknownCategory,
        Error::UnsupportedFormat(_) => EmofaceStatus::UnsupportedFormat,
        Error::Version(_) => EmofaceStatus::IncompatibleCheckpoint,
        Error::Corrupt { .. } | Error::Format { .. } => EmofaceStatus::CorruptFile,
        Error::InvalidInput(_) | Error::Dimension { .. } | Error::Domain(_) | Error::Json(_) | Error::Config(_) => {
            EmofaceStatus::InvalidInput
        }
        _ => EmofaceStatus::Internal,
    }
}

struct Failure(EmofaceStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `f`, record any error or panic, and map it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmofaceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EmofaceStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            EmofaceStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EmofaceStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EmofaceStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copy the last error message of this thread into `buf` (NUL-terminated, truncated to fit).
/// Returns the full message length in bytes excluding the terminator, or 0 if there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn emoface_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emoface_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emoface_animator_load(path: *const c_char, out: *mut *mut EmofaceAnimator) -> EmofaceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = Animator::load(Path::new(path))?;
        write_out(out, EmofaceAnimator { inner });
        Ok(())
    })
}

/// Release an animator. Null is ignored.
///
/// # Safety
/// `animator` must come from [`emoface_animator_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emoface_animator_free(animator: *mut EmofaceAnimator) {
    if !animator.is_null() {
        drop(Box::from_raw(animator));
    }
}

/// Number of expression parameters per frame produced by this animator.
///
/// # Safety
/// `animator` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn emoface_animator_n_params(animator: *const EmofaceAnimator) -> usize {
    animator.as_ref().map_or(0, |a| a.inner.bundle().face.n_params())
}

/// Animate WAV bytes under an emotion schedule.
///
/// `schedule_json` may be null for no user emotion. It accepts a keyframe array or an object
/// with `keyframes` and `interpolation`. `identity` may be null (template identity) or point to
/// `identity_len` shape coefficients.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emoface_animate_wav(
    animator: *const EmofaceAnimator,
    wav: *const u8,
    wav_len: usize,
    schedule_json: *const c_char,
    identity: *const f64,
    identity_len: usize,
    out: *mut *mut EmofaceAnimation,
) -> EmofaceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let animator = animator.as_ref().ok_or_else(|| null("animator"))?;
        if wav.is_null() {
            return Err(null("wav"));
        }
        let bytes = std::slice::from_raw_parts(wav, wav_len);
        let schedule = if schedule_json.is_null() {
            EmotionSchedule::default()
        } else {
            EmotionSchedule::from_json(str_arg(schedule_json, "schedule_json")?)?
        };
        let identity = (!identity.is_null()).then(|| std::slice::from_raw_parts(identity, identity_len));
        let inner = animator.inner.animate_wav(bytes, &schedule, identity)?;
        write_out(out, EmofaceAnimation { inner });
        Ok(())
    })
}

/// Release an animation. Null is ignored.
///
/// # Safety
/// `animation` must come from [`emoface_animate_wav`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_free(animation: *mut EmofaceAnimation) {
    if !animation.is_null() {
        drop(Box::from_raw(animation));
    }
}

/// Number of frames, or 0 for null.
///
/// # Safety
/// `animation` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_frames(animation: *const EmofaceAnimation) -> usize {
    animation.as_ref().map_or(0, |a| a.inner.len())
}

/// Nominal frame rate, or 0 for null.
///
/// # Safety
/// `animation` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_fps(animation: *const EmofaceAnimation) -> f64 {
    animation.as_ref().map_or(0.0, |a| a.inner.fps)
}

/// Copy the row-major `frames × n_params` parameter matrix into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_params(
    animation: *const EmofaceAnimation,
    buf: *mut f64,
    len: usize,
) -> EmofaceStatus {
    guard(|| {
        let a = animation.as_ref().ok_or_else(|| null("animation"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let flat: Vec<f64> = a.inner.frames.iter().flatten().copied().collect();
        if len < flat.len() {
            return Err(Failure(
                EmofaceStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", flat.len()),
            ));
        }
        ptr::copy_nonoverlapping(flat.as_ptr(), buf, flat.len());
        Ok(())
    })
}

/// Serialize the animation (frames, timing, provenance) as JSON. Free with [`emoface_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_to_json(
    animation: *const EmofaceAnimation,
    out: *mut *mut c_char,
) -> EmofaceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let a = animation.as_ref().ok_or_else(|| null("animation"))?;
        let json = CString::new(a.inner.to_json_bytes()?)
            .map_err(|e| Failure(EmofaceStatus::Internal, e.to_string()))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// Write one OBJ per frame into `dir` (`frame_00000.obj`, ...), using the animator's face model.
///
/// # Safety
/// Handles must be live; `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn emoface_animation_write_obj(
    animator: *const EmofaceAnimator,
    animation: *const EmofaceAnimation,
    dir: *const c_char,
) -> EmofaceStatus {
    guard(|| {
        let animator = animator.as_ref().ok_or_else(|| null("animator"))?;
        let a = animation.as_ref().ok_or_else(|| null("animation"))?;
        let dir = str_arg(dir, "dir")?;
        a.inner.dump_obj(&animator.inner.bundle().face, Path::new(dir))?;
        Ok(())
    })
}

/// The neutral template mesh as OBJ text. Free with [`emoface_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emoface_template_obj(animator: *const EmofaceAnimator, out: *mut *mut c_char) -> EmofaceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let face = &animator.as_ref().ok_or_else(|| null("animator"))?.inner.bundle().face;
        let text = write_obj(face.template().view(), face.faces());
        *out = CString::new(text)
            .map_err(|e| Failure(EmofaceStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emoface_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
