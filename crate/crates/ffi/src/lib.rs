//! C ABI over the faceval library.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_build` functions and released with the matching `*_free`. Every
//! fallible call returns a [`FacevalStatus`]; on failure the message is
//! available from [`faceval_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and released
//! with [`faceval_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use faceval::baselines;
use faceval::metaeval;
use faceval::scoring::{self, ScoreOptions, ScoreRequest, WireResult};
use faceval::{Corpus, Error, FactualityReport, ProbeConfig, ProbeCorpus, Scorer, ScorerError, Split, TransformKind};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacevalStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Integrity = 5,
    Domain = 6,
    Version = 7,
    Tagging = 8,
    ScorerUnavailable = 9,
    ScorerProtocol = 10,
    Provider = 11,
    MissingScore = 12,
    UndefinedCorrelation = 13,
    Panic = 99,
}

impl From<&Error> for FacevalStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => FacevalStatus::Io,
            Error::Parse { .. } | Error::ParseAt { .. } | Error::UnknownLabels(_) => FacevalStatus::Parse,
            Error::Integrity(_) => FacevalStatus::Integrity,
            Error::Domain(_) => FacevalStatus::Domain,
            Error::Version { .. } => FacevalStatus::Version,
            Error::Tagging(_) => FacevalStatus::Tagging,
            Error::Scorer(ScorerError::Unavailable(_)) => FacevalStatus::ScorerUnavailable,
            Error::Scorer(ScorerError::Protocol(_)) => FacevalStatus::ScorerProtocol,
            Error::Provider(_) => FacevalStatus::Provider,
            Error::MissingScore { .. } => FacevalStatus::MissingScore,
            Error::UndefinedCorrelation(_) => FacevalStatus::UndefinedCorrelation,
        }
    }
}

/// A loaded dialogue corpus.
pub struct FacevalCorpus {
    inner: Corpus,
}

/// A probe corpus (positive and negative summaries per dialogue).
pub struct FacevalProbes {
    inner: ProbeCorpus,
}

/// Factuality scores of one model on a probe corpus.
pub struct FacevalReport {
    inner: FactualityReport,
}

/// Scores one summary. Sets `*logprobs` to `*len` token log-probabilities
/// that stay valid until the callback is invoked again or the scoring call
/// returns, and returns 0. A non-zero return marks the pair as failed.
/// Invocations never overlap, but may come from a thread other than the
/// caller's.
pub type FacevalScoreFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        pair_id: *const c_char,
        dialogue: *const c_char,
        summary: *const c_char,
        logprobs: *mut *const f64,
        len: *mut usize,
    ) -> c_int,
>;

struct Failure {
    status: FacevalStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            status: FacevalStatus::from(&e),
            message: e.to_string(),
        }
    }
}

fn failure(status: FacevalStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> FacevalStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            FacevalStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            FacevalStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(failure(FacevalStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| failure(FacevalStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| failure(FacevalStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(failure(FacevalStatus::NullArgument, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(failure(FacevalStatus::NullArgument, format!("`{name}` is null")));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs removed").into_raw()
}

fn kind_arg(code: &str) -> Result<TransformKind, Failure> {
    Ok(code.parse::<TransformKind>()?)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn faceval_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn faceval_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn faceval_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSON-lines corpus. `split` is "train", "val" or "test".
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_corpus_load(
    path: *const c_char,
    split: *const c_char,
    out: *mut *mut FacevalCorpus,
) -> FacevalStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let split: Split = str_arg(split, "split")?.parse()?;
        let corpus = faceval::load_corpus(Path::new(path), split)?;
        put(out, Box::into_raw(Box::new(FacevalCorpus { inner: corpus })), "out")
    })
}

/// Number of dialogues; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn faceval_corpus_len(corpus: *const FacevalCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `corpus` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn faceval_corpus_free(corpus: *mut FacevalCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Builds probes with the default configuration, keeping at most
/// `cap_per_kind` negatives per kind per dialogue.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_build(
    corpus: *const FacevalCorpus,
    seed: u64,
    cap_per_kind: usize,
    out: *mut *mut FacevalProbes,
) -> FacevalStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let config = ProbeConfig {
            cap_per_kind,
            ..ProbeConfig::default()
        };
        let probes = faceval::build_probe_corpus(&corpus.inner, &config, seed)?;
        put(out, Box::into_raw(Box::new(FacevalProbes { inner: probes })), "out")
    })
}

/// Reads a probe file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_load(path: *const c_char, out: *mut *mut FacevalProbes) -> FacevalStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let probes = ProbeCorpus::load(Path::new(path))?;
        put(out, Box::into_raw(Box::new(FacevalProbes { inner: probes })), "out")
    })
}

/// Writes a probe file.
///
/// # Safety
/// `probes` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_save(probes: *const FacevalProbes, path: *const c_char) -> FacevalStatus {
    guard(|| {
        let probes = ref_arg(probes, "probes")?;
        let path = str_arg(path, "path")?;
        Ok(probes.inner.save(Path::new(path))?)
    })
}

/// The probe file text; free with [`faceval_string_free`].
///
/// # Safety
/// `probes` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_to_json(probes: *const FacevalProbes, out: *mut *mut c_char) -> FacevalStatus {
    guard(|| {
        let probes = ref_arg(probes, "probes")?;
        put(out, into_c_string(probes.inner.to_json()), "out")
    })
}

/// Number of probe sets (one per dialogue); 0 for a null handle.
///
/// # Safety
/// `probes` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_len(probes: *const FacevalProbes) -> usize {
    probes.as_ref().map_or(0, |p| p.inner.probe_sets.len())
}

/// Negatives of one kind ("SS", "ES", "PS", "DS", "NS", "NG"), or of all
/// kinds when `kind` is null.
///
/// # Safety
/// `probes` must be a live handle; `kind` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_negative_count(
    probes: *const FacevalProbes,
    kind: *const c_char,
    out: *mut usize,
) -> FacevalStatus {
    guard(|| {
        let probes = ref_arg(probes, "probes")?;
        let n = if kind.is_null() {
            probes.inner.total_negatives()
        } else {
            let kind = kind_arg(str_arg(kind, "kind")?)?;
            probes.inner.counts.get(&kind).copied().unwrap_or(0)
        };
        put(out, n, "out")
    })
}

/// # Safety
/// `probes` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn faceval_probes_free(probes: *mut FacevalProbes) {
    if !probes.is_null() {
        drop(Box::from_raw(probes));
    }
}

struct CallbackScorer {
    callback: unsafe extern "C" fn(
        *mut c_void,
        *const c_char,
        *const c_char,
        *const c_char,
        *mut *const f64,
        *mut usize,
    ) -> c_int,
    user_data: *mut c_void,
}

// Scoring runs with one batch in flight, so the callback is never entered
// concurrently.
unsafe impl Sync for CallbackScorer {}

impl CallbackScorer {
    fn score_one(&self, req: &ScoreRequest) -> WireResult {
        let (Ok(id), Ok(dialogue), Ok(summary)) = (
            CString::new(req.id.as_str()),
            CString::new(req.dialogue.as_str()),
            CString::new(req.summary.as_str()),
        ) else {
            return WireResult::failed(req.id.clone(), "text contains a NUL byte");
        };
        let mut ptr: *const f64 = std::ptr::null();
        let mut len = 0usize;
        let rc = unsafe {
            (self.callback)(
                self.user_data,
                id.as_ptr(),
                dialogue.as_ptr(),
                summary.as_ptr(),
                &mut ptr,
                &mut len,
            )
        };
        if rc != 0 {
            return WireResult::failed(req.id.clone(), format!("callback returned {rc}"));
        }
        if ptr.is_null() || len == 0 {
            return WireResult::failed(req.id.clone(), "callback returned no log-probabilities");
        }
        let logprobs = unsafe { std::slice::from_raw_parts(ptr, len) }.to_vec();
        WireResult::Scored {
            id: req.id.clone(),
            tokens: (0..len).map(|i| format!("<{i}>")).collect(),
            logprobs,
        }
    }
}

impl Scorer for CallbackScorer {
    fn score_batch(&self, batch: &[ScoreRequest]) -> Result<Vec<WireResult>, ScorerError> {
        Ok(batch.iter().map(|r| self.score_one(r)).collect())
    }
}

fn score_with(probes: &ProbeCorpus, scorer: &dyn Scorer, alpha: f64) -> Result<FacevalReport, Failure> {
    let options = ScoreOptions {
        alpha,
        max_in_flight: 1,
        ..ScoreOptions::default()
    };
    let scored = scoring::score_probe_corpus(probes, scorer, &options)?;
    Ok(FacevalReport {
        inner: scoring::factuality_score(&scored)?,
    })
}

/// Scores every probe summary through `callback` and aggregates the
/// factuality score with length penalty `alpha`.
///
/// # Safety
/// `probes` must be a live handle, `callback` must follow the
/// [`FacevalScoreFn`] contract, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_score_probes(
    probes: *const FacevalProbes,
    callback: FacevalScoreFn,
    user_data: *mut c_void,
    alpha: f64,
    out: *mut *mut FacevalReport,
) -> FacevalStatus {
    guard(|| {
        let probes = ref_arg(probes, "probes")?;
        let callback = callback.ok_or_else(|| failure(FacevalStatus::NullArgument, "`callback` is null"))?;
        let scorer = CallbackScorer { callback, user_data };
        let report = score_with(&probes.inner, &scorer, alpha)?;
        put(out, Box::into_raw(Box::new(report)), "out")
    })
}

/// Scores with a built-in model-free scorer: "oracle", "anti-oracle",
/// "noisy:P:SEED", "uniform:SEED" or "lexical".
///
/// # Safety
/// `probes` must be a live handle; `spec` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_score_probes_mock(
    probes: *const FacevalProbes,
    spec: *const c_char,
    alpha: f64,
    out: *mut *mut FacevalReport,
) -> FacevalStatus {
    guard(|| {
        let probes = ref_arg(probes, "probes")?;
        let mock: faceval::MockScorer = str_arg(spec, "spec")?
            .parse()
            .map_err(|e: String| failure(FacevalStatus::Domain, e))?;
        let report = score_with(&probes.inner, &mock, alpha)?;
        put(out, Box::into_raw(Box::new(report)), "out")
    })
}

/// Overall factuality score in [0, 1].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_report_fs(report: *const FacevalReport, out: *mut f64) -> FacevalStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        put(out, report.inner.fs_overall, "out")
    })
}

/// Factuality score restricted to one negative kind. Fails with
/// `Domain` when no scored dialogue has negatives of that kind.
///
/// # Safety
/// `report` must be a live handle; `kind` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_report_fs_kind(
    report: *const FacevalReport,
    kind: *const c_char,
    out: *mut f64,
) -> FacevalStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        let kind = kind_arg(str_arg(kind, "kind")?)?;
        let v = report
            .inner
            .fs_per_kind
            .get(&kind)
            .copied()
            .ok_or_else(|| failure(FacevalStatus::Domain, format!("no {kind} negatives were scored")))?;
        put(out, v, "out")
    })
}

/// Dialogues that entered the score; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn faceval_report_dialogues_used(report: *const FacevalReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.dialogues_used)
}

/// The full report as JSON; free with [`faceval_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_report_to_json(report: *const FacevalReport, out: *mut *mut c_char) -> FacevalStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        let text = serde_json::to_string(&report.inner).expect("reports serialize");
        put(out, into_c_string(text), "out")
    })
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn faceval_report_free(report: *mut FacevalReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Sum of `len` log-probabilities divided by `len^alpha`.
///
/// # Safety
/// `logprobs` must point to `len` readable values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_generation_score(
    logprobs: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> FacevalStatus {
    guard(|| {
        let lps = slice_arg(logprobs, len, "logprobs")?;
        put(out, scoring::length_normalized(lps, alpha)?.value, "out")
    })
}

/// Spearman rank correlation of two vectors of length `len` (>= 3).
///
/// # Safety
/// `x` and `y` must point to `len` readable values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_spearman(x: *const f64, y: *const f64, len: usize, out: *mut f64) -> FacevalStatus {
    guard(|| {
        let x = slice_arg(x, len, "x")?;
        let y = slice_arg(y, len, "y")?;
        put(out, metaeval::spearman(x, y)?, "out")
    })
}

/// ROUGE-n F-measure for n = 1 or 2.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_rouge_n(
    candidate: *const c_char,
    reference: *const c_char,
    n: usize,
    out: *mut f64,
) -> FacevalStatus {
    guard(|| {
        if !(1..=2).contains(&n) {
            return Err(failure(FacevalStatus::Domain, format!("ROUGE-{n} is not supported")));
        }
        let c = str_arg(candidate, "candidate")?;
        let r = str_arg(reference, "reference")?;
        put(out, baselines::rouge_n(c, r, n), "out")
    })
}

/// ROUGE-L F-measure.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_rouge_l(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> FacevalStatus {
    guard(|| {
        let c = str_arg(candidate, "candidate")?;
        let r = str_arg(reference, "reference")?;
        put(out, baselines::rouge_l(c, r), "out")
    })
}

/// Sentence BLEU-4 against `n_references` references.
///
/// # Safety
/// `references` must point to `n_references` NUL-terminated strings;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn faceval_bleu4(
    candidate: *const c_char,
    references: *const *const c_char,
    n_references: usize,
    out: *mut f64,
) -> FacevalStatus {
    guard(|| {
        let c = str_arg(candidate, "candidate")?;
        if n_references == 0 || references.is_null() {
            return Err(failure(FacevalStatus::NullArgument, "no references"));
        }
        let refs = std::slice::from_raw_parts(references, n_references)
            .iter()
            .map(|&r| str_arg(r, "reference"))
            .collect::<Result<Vec<&str>, Failure>>()?;
        put(out, baselines::bleu4(c, &refs), "out")
    })
}
