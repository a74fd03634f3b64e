//! C interface to the morphtag tagger.
//!
//! Every fallible function returns an [`MtStatus`]; on failure a message is
//! available from [`mt_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned
//! through out-pointers are owned by the caller and released with
//! [`mt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use morphtag::checkpoint;
use morphtag::corpus::{parse_conllu, read_conllu, write_conllu, Corpus};
use morphtag::model::{gradcheck_kind, Model, ModelKind};
use morphtag::morph::{attach_analyses, LexiconAnalyzer};
use morphtag::pipeline::{evaluate, tag_corpus};
use morphtag::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtStatus {
    Ok = 0,
    NullArgument = 1,
    Usage = 2,
    Data = 3,
    Numeric = 4,
    Io = 5,
    Checkpoint = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

/// A trained tagger.
pub struct MtModel(Model);

/// A tokenized corpus with gold or predicted labels.
pub struct MtCorpus(Corpus);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MtStatus {
    match e {
        Error::Usage(_) => MtStatus::Usage,
        Error::Io(_) => MtStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => MtStatus::Checkpoint,
        _ if e.exit_code() == 3 => MtStatus::Numeric,
        _ => MtStatus::Data,
    }
}

struct Fail(MtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MtStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MtStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_model_load(path: *const c_char, out: *mut *mut MtModel) -> MtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = checkpoint::load(path)?;
        put(out, Box::into_raw(Box::new(MtModel(model))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from `mt_model_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mt_model_free(model: *mut MtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the model kind name (e.g. `mc+emb-cat`) to `out`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_model_kind(model: *const MtModel, out: *mut *mut c_char) -> MtStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        put(out, owned_string(m.0.kind.to_string()), "out")
    })
}

/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_parse(text: *const c_char, out: *mut *mut MtCorpus) -> MtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = parse_conllu(text)?;
        put(out, Box::into_raw(Box::new(MtCorpus(c))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_read(path: *const c_char, out: *mut *mut MtCorpus) -> MtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = read_conllu(path)?;
        put(out, Box::into_raw(Box::new(MtCorpus(c))), "out")
    })
}

/// # Safety
/// `corpus` must be null or a live corpus handle.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_free(corpus: *mut MtCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_token_count(corpus: *const MtCorpus, out: *mut usize) -> MtStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        put(out, c.0.token_count(), "out")
    })
}

/// Serializes the corpus as CoNLL-U.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_to_conllu(corpus: *const MtCorpus, out: *mut *mut c_char) -> MtStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        put(out, owned_string(write_conllu(&c.0)), "out")
    })
}

/// Replaces every token's candidates with lexicon analyses.
///
/// # Safety
/// `corpus` must be a live handle; `lexicon_path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mt_corpus_attach_lexicon(corpus: *mut MtCorpus, lexicon_path: *const c_char) -> MtStatus {
    guard(|| {
        let path = str_arg(lexicon_path, "lexicon_path")?;
        let c = corpus.as_mut().ok_or_else(|| null("corpus"))?;
        let lex = LexiconAnalyzer::load(path, true)?;
        c.0 = attach_analyses(&c.0, &lex);
        Ok(())
    })
}

/// Predicts labels for `input` into a new corpus handle.
///
/// # Safety
/// `model` and `input` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_model_tag(model: *const MtModel, input: *const MtCorpus, out: *mut *mut MtCorpus) -> MtStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let c = ref_arg(input, "input")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tagged = tag_corpus(&m.0, &c.0)?;
        put(out, Box::into_raw(Box::new(MtCorpus(tagged))), "out")
    })
}

/// Full-tag accuracy and macro-averaged per-category F1, in percent.
///
/// # Safety
/// `gold` and `pred` must be live handles; both out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn mt_evaluate(
    gold: *const MtCorpus,
    pred: *const MtCorpus,
    out_accuracy: *mut f64,
    out_macro_f1: *mut f64,
) -> MtStatus {
    guard(|| {
        let g = ref_arg(gold, "gold")?;
        let p = ref_arg(pred, "pred")?;
        if out_accuracy.is_null() || out_macro_f1.is_null() {
            return Err(null("output"));
        }
        let r = evaluate(&g.0, &p.0)?;
        put(out_accuracy, r.full_tag_accuracy, "out_accuracy")?;
        put(out_macro_f1, r.macro_average, "out_macro_f1")
    })
}

/// Maximum relative gradient error of a tiny random model of `kind`.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mt_gradcheck(kind: *const c_char, eps: f64, seed: u64, out: *mut f64) -> MtStatus {
    guard(|| {
        let kind: ModelKind = str_arg(kind, "kind")?.parse()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = gradcheck_kind(kind, eps, seed)?;
        put(out, r.max_rel_error, "out")
    })
}
