//! C ABI over `semsyngtn`.
//!
//! Every object crosses the boundary as an opaque pointer owned by the
//! caller and released with the matching `*_free`. Functions return an
//! [`SsgStatus`]; on failure the message is kept per thread and can be read
//! with [`ssg_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use semsyngtn::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, Corpus, SynthParams};
use semsyngtn::encoder::PrecomputedVectors;
use semsyngtn::harness::{evaluate, train, Dataset};
use semsyngtn::model::Model;
use semsyngtn::numeric::Checkpoint;
use semsyngtn::{Error, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Config = 4,
    Corpus = 5,
    Numeric = 6,
    Train = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Training configuration.
pub struct SsgConfig(TrainConfig);

/// Loaded or generated corpus.
pub struct SsgCorpus(Corpus);

/// Trained model.
pub struct SsgModel(Model);

/// Per-sentence word vectors for models built without a static table.
pub struct SsgVectors(PrecomputedVectors);

/// Precision, recall and F1 in percent, plus the instance count.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SsgScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub instances: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SsgStatus {
    match err {
        Error::Io(_) => SsgStatus::Io,
        Error::Config(_) | Error::ConfigFile(_) => SsgStatus::Config,
        Error::Corpus(_) | Error::Tree(_) | Error::Embedding(_) => SsgStatus::Corpus,
        Error::Numeric(_) | Error::Structure(_) => SsgStatus::Numeric,
        Error::Train(_) => SsgStatus::Train,
    }
}

struct Fail(SsgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: SsgStatus, msg: &str) -> Result<T, Fail> {
    Err(Fail(status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SsgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            SsgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(SsgStatus::NullPointer, &format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SsgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(SsgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(SsgStatus::NullPointer, format!("{what} is null")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ssg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_config_new(out: *mut *mut SsgConfig) -> SsgStatus {
    guard(|| {
        *out_ptr(out, "out")? = boxed(SsgConfig(TrainConfig::default()));
        Ok(())
    })
}

/// Reads a flat `key = value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_config_load(path: *const c_char, out: *mut *mut SsgConfig) -> SsgStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        let cfg = TrainConfig::load(path).map_err(Error::from)?;
        *out = boxed(SsgConfig(cfg));
        Ok(())
    })
}

/// Sets one key, using the same syntax as the config file.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ssg_config_set(cfg: *mut SsgConfig, key: *const c_char, value: *const c_char) -> SsgStatus {
    guard(|| {
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let cfg = out_ptr(cfg, "cfg")?;
        cfg.0.set(key, value).map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_config_free(cfg: *mut SsgConfig) {
    free(cfg)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_load(path: *const c_char, out: *mut *mut SsgCorpus) -> SsgStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        let corpus = load_corpus(path).map_err(Error::from)?;
        *out = boxed(SsgCorpus(corpus));
        Ok(())
    })
}

/// Synthetic corpus with default generator settings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_generate(seed: u64, n_sentences: usize, out: *mut *mut SsgCorpus) -> SsgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let corpus = generate_synthetic_corpus(seed, n_sentences, &SynthParams::default()).map_err(Error::from)?;
        *out = boxed(SsgCorpus(corpus));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_save(corpus: *const SsgCorpus, path: *const c_char) -> SsgStatus {
    guard(|| {
        let corpus = obj(corpus, "corpus")?;
        let path = str_arg(path, "path")?;
        save_corpus(&corpus.0, path).map_err(Error::from)?;
        Ok(())
    })
}

/// Number of sentences, or 0 for null.
///
/// # Safety
/// `corpus` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_len(corpus: *const SsgCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Number of (candidate, trigger) instances, or 0 for null.
///
/// # Safety
/// `corpus` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_instance_count(corpus: *const SsgCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.instances().len())
}

/// # Safety
/// `corpus` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_corpus_free(corpus: *mut SsgCorpus) {
    free(corpus)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_vectors_load(path: *const c_char, out: *mut *mut SsgVectors) -> SsgStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        let v = PrecomputedVectors::load(path).map_err(Error::from)?;
        *out = boxed(SsgVectors(v));
        Ok(())
    })
}

/// # Safety
/// `vectors` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_vectors_free(vectors: *mut SsgVectors) {
    free(vectors)
}

/// Trains with the corpus and embedding paths named in `cfg` and returns the
/// best-dev model.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_train(cfg: *const SsgConfig, out: *mut *mut SsgModel) -> SsgStatus {
    guard(|| {
        let cfg = obj(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        cfg.0.validate().map_err(Error::from)?;
        let data = Dataset::from_config(&cfg.0)?;
        let outcome = train(&cfg.0, &data)?;
        *out = boxed(SsgModel(outcome.model));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_load(path: *const c_char, out: *mut *mut SsgModel) -> SsgStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_ptr(out, "out")?;
        let ckpt = Checkpoint::load(&path).map_err(Error::from)?;
        *out = boxed(SsgModel(Model::from_checkpoint(ckpt)?));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_save(model: *const SsgModel, path: *const c_char) -> SsgStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let path = str_arg(path, "path")?;
        model.0.to_checkpoint().save(path).map_err(Error::from)?;
        Ok(())
    })
}

/// Number of role labels including `None`, or 0 for null.
///
/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_role_count(model: *const SsgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.roles.len())
}

/// Copies the NUL-terminated name of role `index` into `buf`. `len`
/// receives the required size including the terminator, so a first call
/// with `cap = 0` can size the buffer.
///
/// # Safety
/// `model` must come from this library, `buf` must hold `cap` bytes (or be
/// null when `cap` is 0), and `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_role_name(
    model: *const SsgModel,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> SsgStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let len = out_ptr(len, "len")?;
        if index >= model.0.roles.len() {
            return fail(SsgStatus::OutOfRange, &format!("role index {index} out of range"));
        }
        let name = model.0.roles.name(index).as_bytes();
        *len = name.len() + 1;
        if cap < name.len() + 1 {
            return fail(SsgStatus::BufferTooSmall, "buffer too small for role name");
        }
        if buf.is_null() {
            return fail(SsgStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Predicted role index for instance `index` of `corpus` (instances are
/// numbered sentence by sentence, event by event, entity by entity).
///
/// # Safety
/// `model` and `corpus` must come from this library, `vectors` must come from
/// this library or be null, and `role` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_predict(
    model: *const SsgModel,
    corpus: *const SsgCorpus,
    vectors: *const SsgVectors,
    index: usize,
    role: *mut usize,
) -> SsgStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let corpus = obj(corpus, "corpus")?;
        let role = out_ptr(role, "role")?;
        let pre = vectors.as_ref().map(|v| &v.0);
        let instances = corpus.0.instances();
        let inst = instances
            .get(index)
            .ok_or_else(|| Fail(SsgStatus::OutOfRange, format!("instance {index} out of range")))?;
        *role = model.0.predict(inst, pre)?;
        Ok(())
    })
}

/// Micro P/R/F1 over the non-`None` roles of `corpus`.
///
/// # Safety
/// `model` and `corpus` must come from this library, `vectors` must come from
/// this library or be null, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_evaluate(
    model: *const SsgModel,
    corpus: *const SsgCorpus,
    vectors: *const SsgVectors,
    out: *mut SsgScores,
) -> SsgStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let corpus = obj(corpus, "corpus")?;
        let out = out_ptr(out, "out")?;
        let report = evaluate(&model.0, &corpus.0, vectors.as_ref().map(|v| &v.0))?;
        *out = SsgScores {
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            instances: report.instances,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ssg_model_free(model: *mut SsgModel) {
    free(model)
}
