//! C interface to the vrag engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns a [`VragStatus`];
//! on failure [`vrag_last_error_message`] describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vrag::corpus::Corpus;
use vrag::retrieval::{build_index, read_index, retrieve_topk, write_index, IndexConfig, VideoIndex};
use vrag::vector::Vector;
use vrag::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VragStatus {
    Ok = 0,
    /// Bad argument or configuration.
    Invalid = 1,
    /// An external service failed or could not be reached.
    Transport = 2,
    /// A file on disk is malformed.
    Corrupt = 3,
    /// A required pointer was null or a string was not UTF-8.
    NullPointer = 4,
    /// The caller's buffer is too small; the required length is reported.
    BufferTooSmall = 5,
    Panic = 6,
}

/// A loaded corpus manifest.
pub struct VragCorpus {
    inner: Corpus,
}

/// A built or loaded video index.
pub struct VragIndex {
    inner: VideoIndex,
    ids: Vec<CString>,
}

impl VragIndex {
    fn new(inner: VideoIndex) -> Self {
        let ids = inner
            .entries
            .iter()
            .map(|e| CString::new(e.video_id.as_str()).unwrap_or_default())
            .collect();
        VragIndex { inner, ids }
    }
}

/// One retrieval hit: a position usable with [`vrag_index_video_id`] and
/// its cosine score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VragHit {
    pub position: usize,
    pub score: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> VragStatus {
    match err.exit_code() {
        2 => VragStatus::Transport,
        3 => VragStatus::Corrupt,
        _ => VragStatus::Invalid,
    }
}

struct Fail(VragStatus);

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        set_error(err.to_string());
        Fail(status_of(&err))
    }
}

fn null(what: &str) -> Fail {
    set_error(format!("{what} is null"));
    Fail(VragStatus::NullPointer)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VragStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VragStatus::Ok,
        Ok(Err(Fail(status))) => status,
        Err(_) => {
            set_error("internal panic");
            VragStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        Fail(VragStatus::NullPointer)
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vrag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null if the last
/// call succeeded. Valid until the next vrag call on the same thread.
#[no_mangle]
pub extern "C" fn vrag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Opens a corpus manifest.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn vrag_corpus_open(manifest_path: *const c_char, out: *mut *mut VragCorpus) -> VragStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(manifest_path, "manifest_path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let corpus = Corpus::open(&path)?;
        *out = Box::into_raw(Box::new(VragCorpus { inner: corpus }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`vrag_corpus_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vrag_corpus_len(corpus: *const VragCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.manifest.videos.len())
}

/// # Safety
/// `corpus` must come from [`vrag_corpus_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn vrag_corpus_dim(corpus: *const VragCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.dim())
}

/// # Safety
/// `corpus` must come from [`vrag_corpus_open`] or be null, and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrag_corpus_free(corpus: *mut VragCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Builds an index with uniform frame selection.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_build(
    corpus: *const VragCorpus,
    alpha: f64,
    frames_per_video: usize,
    require_text: bool,
    seed: u64,
    out: *mut *mut VragIndex,
) -> VragStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = IndexConfig {
            alpha,
            frames_per_video,
            require_text,
            seed,
            ..IndexConfig::default()
        };
        let index = build_index(&corpus.inner, &cfg)?;
        *out = Box::into_raw(Box::new(VragIndex::new(index)));
        Ok(())
    })
}

/// Loads an index file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_read(path: *const c_char, out: *mut *mut VragIndex) -> VragStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let index = read_index(&path)?;
        *out = Box::into_raw(Box::new(VragIndex::new(index)));
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_write(index: *const VragIndex, path: *const c_char) -> VragStatus {
    guard(|| {
        let index = handle(index, "index")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        write_index(&index.inner, &path)?;
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_len(index: *const VragIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// # Safety
/// `index` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_dim(index: *const VragIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dim)
}

/// Video id at `position`, or null when out of range. Owned by the index.
///
/// # Safety
/// `index` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_video_id(index: *const VragIndex, position: usize) -> *const c_char {
    index
        .as_ref()
        .and_then(|i| i.ids.get(position))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Writes the top `k` hits for `query` into `hits`, best first, and their
/// number into `n_hits`. If they do not fit in `capacity`, returns
/// `BufferTooSmall` with the needed length in `n_hits`.
///
/// # Safety
/// `query` must point to `dim` doubles, `hits` to `capacity` writable
/// [`VragHit`]s, and `n_hits` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_retrieve(
    index: *const VragIndex,
    query: *const f64,
    dim: usize,
    k: usize,
    hits: *mut VragHit,
    capacity: usize,
    n_hits: *mut usize,
) -> VragStatus {
    guard(|| {
        let index = handle(index, "index")?;
        if query.is_null() {
            return Err(null("query"));
        }
        if n_hits.is_null() {
            return Err(null("n_hits"));
        }
        let q = Vector::new(std::slice::from_raw_parts(query, dim).to_vec())?;
        let result = retrieve_topk(&index.inner, &q, k)?;
        *n_hits = result.ranked.len();
        if result.ranked.len() > capacity {
            set_error(format!("need room for {} hits, have {capacity}", result.ranked.len()));
            return Err(Fail(VragStatus::BufferTooSmall));
        }
        if hits.is_null() && !result.ranked.is_empty() {
            return Err(null("hits"));
        }
        for (slot, r) in result.ranked.iter().enumerate() {
            let position = index.inner.entries.iter().position(|e| e.video_id == r.video_id).unwrap_or(usize::MAX);
            *hits.add(slot) = VragHit {
                position,
                score: r.score,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle or null, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrag_index_free(index: *mut VragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

unsafe fn metric(
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut f64,
    f: fn(&str, &str) -> f64,
) -> VragStatus {
    guard(|| {
        let r = str_arg(reference, "reference")?;
        let h = str_arg(hypothesis, "hypothesis")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f(r, h);
        Ok(())
    })
}

/// ROUGE-L F-measure in [0, 1].
///
/// # Safety
/// Both strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vrag_rouge_l(reference: *const c_char, hypothesis: *const c_char, out: *mut f64) -> VragStatus {
    metric(reference, hypothesis, out, vrag::metrics::rouge_l)
}

/// Smoothed sentence BLEU-4 in [0, 1].
///
/// # Safety
/// Both strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vrag_bleu_4(reference: *const c_char, hypothesis: *const c_char, out: *mut f64) -> VragStatus {
    metric(reference, hypothesis, out, vrag::metrics::bleu_4)
}
