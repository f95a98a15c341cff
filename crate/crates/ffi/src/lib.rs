//! C ABI for dppal.
//!
//! Every fallible function returns a [`DppalStatus`]; on failure the message
//! is available from [`dppal_last_error`] until the next call on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Score tables use the row-major layout `scores[h * n + (m - 1)]`
//! for heads `h` in `0..=n` and dependents `m` in `1..=n`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dppal::alsim::{self, ExperimentReport, RunConfig};
use dppal::diversity::ibad_ibmd;
use dppal::dpp::{greedy_map, SelectionKernel};
use dppal::parser::{decode_cle_with, ArcScoreTable, RootMode};
use dppal::structured::ArcWeights;
use dppal::treebank::{read_conllu, Corpus};
use dppal::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DppalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numeric = 4,
    Config = 5,
    Io = 6,
    State = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> DppalStatus {
    match err {
        Error::Parse { .. } | Error::Validation { .. } | Error::Json(_) | Error::Csv(_) => DppalStatus::Parse,
        Error::Argument(_) => DppalStatus::InvalidArgument,
        Error::State(_) => DppalStatus::State,
        Error::Numeric(_) => DppalStatus::Numeric,
        Error::Config(_) => DppalStatus::Config,
        Error::Io(_) => DppalStatus::Io,
    }
}

struct Failure(DppalStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: DppalStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DppalStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DppalStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DppalStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(DppalStatus::NullPointer, "null input buffer");
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(DppalStatus::NullPointer, "null output buffer");
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(DppalStatus::NullPointer, "null output pointer"), Ok)
}

unsafe fn c_str(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return fail(DppalStatus::NullPointer, "null string");
    }
    CStr::from_ptr(p).to_str().map(str::to_string).map_err(|_| Failure(DppalStatus::InvalidArgument, "string is not UTF-8".into()))
}

fn root_mode(single_root: bool) -> RootMode {
    if single_root {
        RootMode::Single
    } else {
        RootMode::Multi
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next dppal call on the same thread.
#[no_mangle]
pub extern "C" fn dppal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dppal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Arc marginals and log-partition of the distribution over trees whose
/// arc weights are the column-softmax probabilities of `log_scores`.
/// `log_scores` and `out_marginals` hold `(n + 1) * n` entries.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dppal_arc_marginals(
    n: usize,
    log_scores: *const f64,
    single_root: bool,
    out_marginals: *mut f64,
    out_log_z: *mut f64,
) -> DppalStatus {
    guard(|| {
        let scores = slice(log_scores, (n + 1) * n)?.to_vec();
        let out = slice_mut(out_marginals, (n + 1) * n)?;
        let log_z = out_ref(out_log_z)?;
        let table = ArcScoreTable::from_log_scores(n, scores)?;
        let weights = ArcWeights::from_table(&table);
        let mode = root_mode(single_root);
        let mar = weights.marginals(mode)?;
        *log_z = weights.log_partition(mode)?;
        for h in 0..=n {
            for m in 1..=n {
                out[h * n + m - 1] = if h == m { 0.0 } else { mar.get(h, m) };
            }
        }
        Ok(())
    })
}

/// Maximum spanning arborescence of `log_scores`; writes `n` heads.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dppal_decode_cle(n: usize, log_scores: *const f64, single_root: bool, out_heads: *mut usize) -> DppalStatus {
    guard(|| {
        let table = ArcScoreTable::from_log_scores(n, slice(log_scores, (n + 1) * n)?.to_vec())?;
        let heads = decode_cle_with(&table, root_mode(single_root));
        slice_mut(out_heads, n)?.copy_from_slice(&heads);
        Ok(())
    })
}

/// Intra-batch average and minimal cosine distance of `count` row-major
/// feature vectors of length `dim`.
///
/// # Safety
/// `features` must hold `count * dim` values.
#[no_mangle]
pub unsafe extern "C" fn dppal_ibad_ibmd(
    count: usize,
    dim: usize,
    features: *const f64,
    out_ibad: *mut f64,
    out_ibmd: *mut f64,
) -> DppalStatus {
    guard(|| {
        if dim == 0 {
            return fail(DppalStatus::InvalidArgument, "dim must be positive");
        }
        let data = slice(features, count * dim)?;
        let rows: Vec<&[f64]> = data.chunks(dim).collect();
        let (a, b) = ibad_ibmd(&rows)?;
        *out_ref(out_ibad)? = a;
        *out_ref(out_ibmd)? = b;
        Ok(())
    })
}

/// Quality-diversity selection kernel.
pub struct DppalKernel(SelectionKernel);

/// Build a kernel from `count` qualities, row-major features of length
/// `dim` (normalized internally) and item sizes.
///
/// # Safety
/// Buffers must be valid for the stated lengths; `out` receives a handle
/// owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn dppal_kernel_new(
    count: usize,
    dim: usize,
    quality: *const f64,
    features: *const f64,
    sizes: *const usize,
    out: *mut *mut DppalKernel,
) -> DppalStatus {
    guard(|| {
        let out = out_ref(out)?;
        if dim == 0 {
            return fail(DppalStatus::InvalidArgument, "dim must be positive");
        }
        let q = slice(quality, count)?.to_vec();
        let phi = slice(features, count * dim)?.chunks(dim).map(<[f64]>::to_vec).collect();
        let s = slice(sizes, count)?.to_vec();
        *out = Box::into_raw(Box::new(DppalKernel(SelectionKernel::new(q, phi, s)?)));
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from [`dppal_kernel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dppal_kernel_free(kernel: *mut DppalKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// `ln det` of the kernel restricted to `subset`.
///
/// # Safety
/// `kernel` must be a live handle and `subset` hold `len` indices.
#[no_mangle]
pub unsafe extern "C" fn dppal_kernel_log_det(kernel: *const DppalKernel, subset: *const usize, len: usize, out: *mut f64) -> DppalStatus {
    guard(|| {
        let k = kernel.as_ref().map_or_else(|| fail(DppalStatus::NullPointer, "null kernel"), Ok)?;
        *out_ref(out)? = k.0.subset_log_det(slice(subset, len)?)?;
        Ok(())
    })
}

/// Greedy MAP under `budget`. Writes up to `capacity` item indices in
/// selection order; `out_len` receives the full selection length and
/// `out_fallback` whether the quality fallback was used. Returns
/// `BufferTooSmall` when `capacity` is short.
///
/// # Safety
/// `kernel` must be a live handle and `out_items` hold `capacity` slots.
#[no_mangle]
pub unsafe extern "C" fn dppal_greedy_map(
    kernel: *const DppalKernel,
    budget: usize,
    out_items: *mut usize,
    capacity: usize,
    out_len: *mut usize,
    out_fallback: *mut bool,
) -> DppalStatus {
    guard(|| {
        let k = kernel.as_ref().map_or_else(|| fail(DppalStatus::NullPointer, "null kernel"), Ok)?;
        let sel = greedy_map(&k.0, budget);
        let items = sel.items();
        *out_ref(out_len)? = items.len();
        if !out_fallback.is_null() {
            *out_fallback = sel.used_fallback();
        }
        if items.len() > capacity {
            return fail(DppalStatus::BufferTooSmall, &format!("selection has {} items, buffer holds {capacity}", items.len()));
        }
        slice_mut(out_items, items.len())?.copy_from_slice(&items);
        Ok(())
    })
}

/// A CoNLL-U corpus.
pub struct DppalCorpus(Corpus);

/// # Safety
/// `path` must be a NUL-terminated string; `out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn dppal_corpus_read(path: *const c_char, out: *mut *mut DppalCorpus) -> DppalStatus {
    guard(|| {
        let out = out_ref(out)?;
        let corpus = read_conllu(c_str(path)?)?;
        *out = Box::into_raw(Box::new(DppalCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dppal_corpus_sentences(corpus: *const DppalCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dppal_corpus_tokens(corpus: *const DppalCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.token_count())
}

/// # Safety
/// `corpus` must come from [`dppal_corpus_read`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dppal_corpus_free(corpus: *mut DppalCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Results of a finished experiment.
pub struct DppalReport(ExperimentReport);

/// Run an experiment. `config_path` names a TOML or JSON run config (NULL
/// for the toy profile); `repeats` of 0 uses the configured count.
///
/// # Safety
/// `config_path` must be NULL or NUL-terminated; `out` receives an owned
/// handle.
#[no_mangle]
pub unsafe extern "C" fn dppal_run_experiment(config_path: *const c_char, repeats: usize, out: *mut *mut DppalReport) -> DppalStatus {
    guard(|| {
        let out = out_ref(out)?;
        let config = if config_path.is_null() {
            RunConfig::toy()
        } else {
            RunConfig::load_over(&PathBuf::from(c_str(config_path)?), &RunConfig::toy())?
        };
        let n = if repeats == 0 { config.repeats } else { repeats };
        let report = alsim::run_experiment(&config, n)?;
        *out = Box::into_raw(Box::new(DppalReport(report)));
        Ok(())
    })
}

/// Number of rows in the learning curve (round 0 included).
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dppal_report_rounds(report: *const DppalReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.curve().len())
}

/// Mean and sample std of LAS and UAS at `round`.
///
/// # Safety
/// `report` must be a live handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn dppal_report_scores(
    report: *const DppalReport,
    round: usize,
    mean_las: *mut f64,
    std_las: *mut f64,
    mean_uas: *mut f64,
    std_uas: *mut f64,
) -> DppalStatus {
    guard(|| {
        let r = report.as_ref().map_or_else(|| fail(DppalStatus::NullPointer, "null report"), Ok)?;
        let curve = r.0.curve();
        let Some(row) = curve.iter().find(|c| c.round == round) else {
            return fail(DppalStatus::InvalidArgument, &format!("no round {round}"));
        };
        for (p, v) in [(mean_las, row.mean_las), (std_las, row.std_las), (mean_uas, row.mean_uas), (std_uas, row.std_uas)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Write curves.csv, diversity.csv, selections.jsonl and friends to `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dppal_report_write(report: *const DppalReport, dir: *const c_char) -> DppalStatus {
    guard(|| {
        let r = report.as_ref().map_or_else(|| fail(DppalStatus::NullPointer, "null report"), Ok)?;
        alsim::output::write_report(&r.0, &PathBuf::from(c_str(dir)?))?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`dppal_run_experiment`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dppal_report_free(report: *mut DppalReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
