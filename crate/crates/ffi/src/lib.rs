//! C ABI over the stresswatch core.
//!
//! Every fallible call returns an [`SwStatus`]; on anything other than
//! `SW_STATUS_OK` the message is available from [`sw_last_error`] on the same
//! thread until the next failing call. Handles are opaque and must be released
//! with their matching `_free`. Strings and byte buffers handed out by this
//! library are released with [`sw_string_free`] and [`sw_bytes_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use stresswatch::corpus::Post;
use stresswatch::eval;
use stresswatch::models::{load_model, ModelArtifact};
use stresswatch::mqlog::{Topic, TopicConfig};
use stresswatch::textprep::{preprocess, StopwordList};
use stresswatch::Error;

/// Result codes. Zero is success; the values are part of the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    CorruptArtifact = 4,
    VersionMismatch = 5,
    DimensionMismatch = 6,
    InvalidArgument = 7,
    OffsetOutOfRange = 8,
    Oversize = 9,
    CorruptSegment = 10,
    InvalidName = 11,
    Panic = 12,
    Other = 13,
}

/// Loaded model artifact.
pub struct SwModel {
    inner: ModelArtifact,
    model_id: CString,
}

/// Open log topic.
pub struct SwTopic {
    inner: Topic,
}

/// Binary classification metrics, all in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwMetrics {
    pub accuracy: f64,
    pub f1_stress: f64,
    pub f1_nonstress: f64,
    pub f1_macro: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the message; replace them.
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> SwStatus {
    match err {
        Error::Io(_) => SwStatus::Io,
        Error::CorruptArtifact(_) | Error::Json(_) => SwStatus::CorruptArtifact,
        Error::VersionMismatch { .. } => SwStatus::VersionMismatch,
        Error::DimensionMismatch { .. } => SwStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::NonFinite { .. } => SwStatus::InvalidArgument,
        Error::OffsetOutOfRange { .. } => SwStatus::OffsetOutOfRange,
        Error::Oversize { .. } => SwStatus::Oversize,
        Error::CorruptSegment { .. } => SwStatus::CorruptSegment,
        Error::InvalidName(_) => SwStatus::InvalidName,
        _ => SwStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard<F>(f: F) -> SwStatus
where
    F: FnOnce() -> Result<(), (SwStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_last_error(format!("panic: {msg}"));
            SwStatus::Panic
        }
    }
}

fn core(err: Error) -> (SwStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SwStatus, String) {
    (SwStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SwStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SwStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failing call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf`/`len` must be NULL/0 or a buffer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_bytes_free(buf: *mut u8, len: usize) {
    if !buf.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf, len)));
    }
}

/// Loads a model artifact from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_model_load(path: *const c_char, out: *mut *mut SwModel) -> SwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = load_model(PathBuf::from(path)).map_err(core)?;
        let model_id = CString::new(inner.model_id.clone()).unwrap_or_default();
        *out = Box::into_raw(Box::new(SwModel { inner, model_id }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`sw_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_model_free(model: *mut SwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Borrowed model id; valid while the handle lives. NULL for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_model_id(model: *const SwModel) -> *const c_char {
    model.as_ref().map_or(ptr::null(), |m| m.model_id.as_ptr())
}

/// Length of the feature vector the classifier expects; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_model_output_dim(model: *const SwModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.pipeline.output_dim)
}

unsafe fn write_prediction(
    p: stresswatch::models::Prediction,
    out_label: *mut u8,
    out_score: *mut f64,
) -> Result<(), (SwStatus, String)> {
    *out_arg(out_label, "out_label")? = p.label;
    if let Some(s) = out_score.as_mut() {
        *s = p.score;
    }
    Ok(())
}

/// Classifies a post body. `domain` may be NULL (treated as unknown).
/// `out_score` may be NULL.
///
/// # Safety
/// `model` must be a live handle; strings NUL-terminated; `out_label` writable.
#[no_mangle]
pub unsafe extern "C" fn sw_model_predict_text(
    model: *const SwModel,
    domain: *const c_char,
    text: *const c_char,
    out_label: *mut u8,
    out_score: *mut f64,
) -> SwStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let text = str_arg(text, "text")?;
        let domain = if domain.is_null() {
            ""
        } else {
            str_arg(domain, "domain")?
        };
        let post = Post::new("ffi", domain, text);
        let p = m.inner.predict_post(&post).map_err(core)?;
        write_prediction(p, out_label, out_score)
    })
}

/// Classifies a post given as one JSON object (the replay line format).
///
/// # Safety
/// As for [`sw_model_predict_text`].
#[no_mangle]
pub unsafe extern "C" fn sw_model_predict_json(
    model: *const SwModel,
    post_json: *const c_char,
    out_label: *mut u8,
    out_score: *mut f64,
) -> SwStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let post = Post::from_json(str_arg(post_json, "post_json")?).map_err(core)?;
        let p = m.inner.predict_post(&post).map_err(core)?;
        write_prediction(p, out_label, out_score)
    })
}

/// Classifies an already scaled feature vector of `len` values.
///
/// # Safety
/// `features` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_model_predict_features(
    model: *const SwModel,
    features: *const f64,
    len: usize,
    out_label: *mut u8,
    out_score: *mut f64,
) -> SwStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if features.is_null() && len > 0 {
            return Err(null("features"));
        }
        let x: &[f64] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(features, len)
        };
        let p = m.inner.params.predict(x).map_err(core)?;
        write_prediction(p, out_label, out_score)
    })
}

/// Cleans, tokenizes and removes built-in stopwords; returns space-joined
/// tokens in `*out` (free with [`sw_string_free`]).
///
/// # Safety
/// `text` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sw_preprocess(text: *const c_char, out: *mut *mut c_char) -> SwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let doc = preprocess(text, &StopwordList::builtin());
        *out = into_c_string(doc.iter().collect::<Vec<_>>().join(" "));
        Ok(())
    })
}

/// Opens (creating if needed) topic `name` under `root` with default settings.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_open(root: *const c_char, name: *const c_char, out: *mut *mut SwTopic) -> SwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let root = str_arg(root, "root")?;
        let name = str_arg(name, "name")?;
        let topic = Topic::open(root, name, TopicConfig::default()).map_err(core)?;
        *out = Box::into_raw(Box::new(SwTopic { inner: topic }));
        Ok(())
    })
}

/// Flushes and closes the topic.
///
/// # Safety
/// `topic` must be NULL or a handle from [`sw_topic_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_free(topic: *mut SwTopic) {
    if !topic.is_null() {
        drop(Box::from_raw(topic));
    }
}

/// Next offset to be assigned; 0 for a NULL handle.
///
/// # Safety
/// `topic` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_next_offset(topic: *const SwTopic) -> u64 {
    topic.as_ref().map_or(0, |t| t.inner.next_offset())
}

/// Appends `len` bytes and flushes; the assigned offset goes to `out_offset`
/// when it is not NULL.
///
/// # Safety
/// `payload` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_append(
    topic: *const SwTopic,
    payload: *const u8,
    len: usize,
    out_offset: *mut u64,
) -> SwStatus {
    guard(|| {
        let t = topic.as_ref().ok_or_else(|| null("topic"))?;
        if payload.is_null() && len > 0 {
            return Err(null("payload"));
        }
        let bytes: &[u8] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(payload, len)
        };
        let off = t.inner.append(bytes).map_err(core)?;
        t.inner.flush().map_err(core)?;
        if let Some(o) = out_offset.as_mut() {
            *o = off;
        }
        Ok(())
    })
}

/// Reads the payload at `offset` into a new buffer (free with [`sw_bytes_free`]).
///
/// # Safety
/// `out_buf` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_read(
    topic: *const SwTopic,
    offset: u64,
    out_buf: *mut *mut u8,
    out_len: *mut usize,
) -> SwStatus {
    guard(|| {
        let out_buf = out_arg(out_buf, "out_buf")?;
        let out_len = out_arg(out_len, "out_len")?;
        *out_buf = ptr::null_mut();
        *out_len = 0;
        let t = topic.as_ref().ok_or_else(|| null("topic"))?;
        let next = t.inner.next_offset();
        let rec = t
            .inner
            .read(offset, 1)
            .map_err(core)?
            .into_iter()
            .next()
            .ok_or_else(|| core(Error::OffsetOutOfRange { offset, next }))?;
        let boxed = rec.payload.into_boxed_slice();
        *out_len = boxed.len();
        *out_buf = Box::into_raw(boxed).cast::<u8>();
        Ok(())
    })
}

/// Records `offset` as the next offset `group` will consume.
///
/// # Safety
/// `group` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_commit(topic: *const SwTopic, group: *const c_char, offset: u64) -> SwStatus {
    guard(|| {
        let t = topic.as_ref().ok_or_else(|| null("topic"))?;
        t.inner.commit(str_arg(group, "group")?, offset).map_err(core)
    })
}

/// Committed offset for `group`, 0 if it never committed.
///
/// # Safety
/// `group` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sw_topic_committed(topic: *const SwTopic, group: *const c_char, out: *mut u64) -> SwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = topic.as_ref().ok_or_else(|| null("topic"))?;
        *out = t.inner.committed(str_arg(group, "group")?).map_err(core)?;
        Ok(())
    })
}

/// Metrics for `n` predictions against `n` 0/1 labels, stress being label 1.
///
/// # Safety
/// `preds` and `truth` must each point to `n` readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sw_metrics(preds: *const u8, truth: *const u8, n: usize, out: *mut SwMetrics) -> SwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if preds.is_null() || truth.is_null() {
            return Err(null(if preds.is_null() { "preds" } else { "truth" }));
        }
        let p = std::slice::from_raw_parts(preds, n);
        let t = std::slice::from_raw_parts(truth, n);
        let m = eval::metrics(&eval::confusion(p, t).map_err(core)?);
        *out = SwMetrics {
            accuracy: m.accuracy,
            f1_stress: m.f1_pos,
            f1_nonstress: m.f1_neg,
            f1_macro: m.f1_macro,
        };
        Ok(())
    })
}
