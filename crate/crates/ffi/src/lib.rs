//! C ABI over the `setseg` library.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `*_load`/`*_new` function and released by the matching `*_free`. Every
//! fallible function returns a [`SetsegStatus`]; on failure a description is
//! available from [`setseg_last_error`] on the same thread until the next
//! call into the library.
//!
//! The header `include/setseg.h` is generated by the build script.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use setseg::corpus::{read_classes, FeatureMatrix, VideoRecord};
use setseg::decoder::{decode, decode_given_set, DecodeConfig, DecodeResult, FrameScores, LengthScorer, NoLengthModel};
use setseg::framenet::{load_scorer, FrameScorer};
use setseg::grammar::{load_grammar, GrammarAutomaton};
use setseg::lengths::{load_length_model, LengthKind, LengthModel};
use setseg::{ClassTable, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Infeasible = 6,
    Numeric = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetsegLengthKind {
    Poisson = 0,
    Gaussian = 1,
    Box = 2,
    Triangle = 3,
}

impl From<SetsegLengthKind> for LengthKind {
    fn from(k: SetsegLengthKind) -> Self {
        match k {
            SetsegLengthKind::Poisson => LengthKind::Poisson,
            SetsegLengthKind::Gaussian => LengthKind::Gaussian,
            SetsegLengthKind::Box => LengthKind::Box,
            SetsegLengthKind::Triangle => LengthKind::Triangle,
        }
    }
}

/// Class table read from a `classes.txt` file.
pub struct SetsegClasses(ClassTable);

/// Label automaton.
pub struct SetsegGrammar(GrammarAutomaton);

/// Per-class segment length distributions.
pub struct SetsegLengths(LengthModel);

/// Trained frame model with its class prior.
pub struct SetsegScorer(FrameScorer);

/// Result of a decode call.
pub struct SetsegSegmentation(DecodeResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SetsegStatus {
    match e {
        Error::Io { .. } => SetsegStatus::Io,
        Error::Parse { .. } => SetsegStatus::Parse,
        Error::Validation(_) | Error::Config(_) | Error::Guard(_) => SetsegStatus::Validation,
        Error::Infeasible(_) => SetsegStatus::Infeasible,
        Error::Numeric(_) | Error::NotConverged { .. } | Error::Diverged { .. } => SetsegStatus::Numeric,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, recording any error or panic for [`setseg_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SetsegStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SetsegStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            SetsegStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            SetsegStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SetsegStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn c_path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn setseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn setseg_classes_load(path: *const c_char, out: *mut *mut SetsegClasses) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        *slot = boxed(SetsegClasses(read_classes(&c_path(path)?)?));
        Ok(())
    })
}

/// Number of classes, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn setseg_classes_count(classes: *const SetsegClasses) -> usize {
    classes.as_ref().map_or(0, |c| c.0.len())
}

/// Id of `name`, or -1 if unknown or on NULL arguments.
#[no_mangle]
pub unsafe extern "C" fn setseg_classes_id(classes: *const SetsegClasses, name: *const c_char) -> i64 {
    let (Some(c), false) = (classes.as_ref(), name.is_null()) else { return -1 };
    CStr::from_ptr(name)
        .to_str()
        .ok()
        .and_then(|n| c.0.id(n))
        .map_or(-1, |id| id as i64)
}

#[no_mangle]
pub unsafe extern "C" fn setseg_classes_free(classes: *mut SetsegClasses) {
    release(classes)
}

#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_load(
    path: *const c_char,
    classes: *const SetsegClasses,
    out: *mut *mut SetsegGrammar,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let classes = obj(classes, "classes")?;
        *slot = boxed(SetsegGrammar(load_grammar(&c_path(path)?, &classes.0)?));
        Ok(())
    })
}

/// Grammar accepting exactly the given sequences. `offsets` has `count + 1`
/// entries delimiting each sequence inside `labels`.
#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_from_sequences(
    labels: *const u32,
    offsets: *const usize,
    count: usize,
    out: *mut *mut SetsegGrammar,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let offsets = slice(offsets, count + 1, "offsets")?;
        let total = *offsets.last().unwrap_or(&0);
        let labels = slice(labels, total, "labels")?;
        let mut seqs = Vec::with_capacity(count);
        for w in offsets.windows(2) {
            if w[0] >= w[1] || w[1] > total {
                return Err(Fail::Arg("offsets must be strictly increasing and within labels".into()));
            }
            seqs.push(labels[w[0]..w[1]].iter().map(|&c| c as usize).collect::<Vec<_>>());
        }
        if seqs.is_empty() {
            return Err(Fail::Arg("grammar needs at least one sequence".into()));
        }
        *slot = boxed(SetsegGrammar(GrammarAutomaton::prefix_tree(seqs)));
        Ok(())
    })
}

/// Grammar accepting every non-empty sequence over `labels`.
#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_free_loop(
    labels: *const u32,
    count: usize,
    out: *mut *mut SetsegGrammar,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let labels = slice(labels, count, "labels")?;
        if labels.is_empty() {
            return Err(Fail::Arg("free grammar needs at least one label".into()));
        }
        *slot = boxed(SetsegGrammar(GrammarAutomaton::free_loop(labels.iter().map(|&c| c as usize))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_num_states(grammar: *const SetsegGrammar) -> usize {
    grammar.as_ref().map_or(0, |g| g.0.num_states())
}

#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_accepts(
    grammar: *const SetsegGrammar,
    labels: *const u32,
    len: usize,
    out_accepted: *mut bool,
) -> SetsegStatus {
    guard(|| {
        let g = obj(grammar, "grammar")?;
        let seq: Vec<usize> = slice(labels, len, "labels")?.iter().map(|&c| c as usize).collect();
        *out_mut(out_accepted, "out_accepted")? = g.0.accepts(&seq);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_grammar_free(grammar: *mut SetsegGrammar) {
    release(grammar)
}

#[no_mangle]
pub unsafe extern "C" fn setseg_lengths_load(
    path: *const c_char,
    classes: *const SetsegClasses,
    out: *mut *mut SetsegLengths,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let classes = obj(classes, "classes")?;
        *slot = boxed(SetsegLengths(load_length_model(&c_path(path)?, &classes.0)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_lengths_new(
    kind: SetsegLengthKind,
    lambda: *const f64,
    sigma: *const f64,
    num_classes: usize,
    out: *mut *mut SetsegLengths,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let lambda = slice(lambda, num_classes, "lambda")?.to_vec();
        let sigma = slice(sigma, num_classes, "sigma")?.to_vec();
        *slot = boxed(SetsegLengths(LengthModel::new(kind.into(), lambda, sigma)?));
        Ok(())
    })
}

/// `ln p(len | class)`; `-inf` outside the support.
#[no_mangle]
pub unsafe extern "C" fn setseg_lengths_log_pmf(
    lengths: *const SetsegLengths,
    class: usize,
    len: usize,
    out_value: *mut f64,
) -> SetsegStatus {
    guard(|| {
        let m = obj(lengths, "lengths")?;
        if class >= m.0.num_classes() {
            return Err(Fail::Arg(format!("class {class} out of range")));
        }
        *out_mut(out_value, "out_value")? = m.0.log_pmf(class, len);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_lengths_free(lengths: *mut SetsegLengths) {
    release(lengths)
}

#[no_mangle]
pub unsafe extern "C" fn setseg_scorer_load(path: *const c_char, out: *mut *mut SetsegScorer) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        *slot = boxed(SetsegScorer(load_scorer(&c_path(path)?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_scorer_num_classes(scorer: *const SetsegScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.net.num_classes())
}

#[no_mangle]
pub unsafe extern "C" fn setseg_scorer_dim(scorer: *const SetsegScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.net.dim())
}

/// Writes the `frames x classes` row-major log-score matrix for row-major
/// `frames x dim` features into `out_scores`, which must hold
/// `frames * setseg_scorer_num_classes(scorer)` values.
#[no_mangle]
pub unsafe extern "C" fn setseg_scorer_frame_scores(
    scorer: *const SetsegScorer,
    features: *const f32,
    frames: usize,
    dim: usize,
    out_scores: *mut f64,
    out_len: usize,
) -> SetsegStatus {
    guard(|| {
        let s = obj(scorer, "scorer")?;
        let c = s.0.net.num_classes();
        if out_len != frames * c {
            return Err(Fail::Arg(format!("output buffer holds {out_len} values, need {}", frames * c)));
        }
        let data = slice(features, frames * dim, "features")?.to_vec();
        let video = VideoRecord {
            id: "ffi".into(),
            features: FeatureMatrix::new(frames, dim, data)?,
            action_set: BTreeSet::new(),
            gt_labels: None,
        };
        let scores = s.0.frame_log_scores(&video)?;
        if out_scores.is_null() {
            return Err(Fail::Null("out_scores"));
        }
        let dst = std::slice::from_raw_parts_mut(out_scores, out_len);
        for t in 0..frames {
            for k in 0..c {
                dst[t * c + k] = scores.score(t, k);
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_scorer_free(scorer: *mut SetsegScorer) {
    release(scorer)
}

/// Decoder options. `max_len == 0` picks the length model's default limit,
/// or the whole video without a length model. `beam == 0` decodes exactly.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SetsegDecodeOptions {
    pub stride: usize,
    pub max_len: usize,
    pub beam: usize,
}

/// Decodes a row-major `frames x classes` log-score matrix. `lengths` may be
/// NULL to decode without a length model. With `allowed` non-NULL the
/// search is restricted to those classes, falling back to all sequences
/// over them when the grammar has none.
#[no_mangle]
pub unsafe extern "C" fn setseg_decode(
    scores: *const f64,
    frames: usize,
    classes: usize,
    grammar: *const SetsegGrammar,
    lengths: *const SetsegLengths,
    options: SetsegDecodeOptions,
    allowed: *const u32,
    allowed_len: usize,
    out: *mut *mut SetsegSegmentation,
) -> SetsegStatus {
    guard(|| {
        let slot = out_mut(out, "out")?;
        let g = obj(grammar, "grammar")?;
        let scores = FrameScores::new(frames, classes, slice(scores, frames * classes, "scores")?.to_vec())?;
        if options.stride == 0 {
            return Err(Fail::Arg("stride must be at least 1".into()));
        }
        let lm = lengths.as_ref();
        let limit = match (options.max_len, lm) {
            (0, Some(m)) => m.0.suggested_limit(),
            (0, None) => frames,
            (l, _) => l,
        };
        let mut cfg = DecodeConfig::with_limit(frames, options.stride, limit);
        cfg.beam = (options.beam > 0).then_some(options.beam);
        let scorer: &dyn LengthScorer = match lm {
            Some(m) => &m.0,
            None => &NoLengthModel,
        };
        let result = if allowed.is_null() {
            decode(&scores, &g.0, scorer, &cfg)?
        } else {
            let set: BTreeSet<usize> = slice(allowed, allowed_len, "allowed")?.iter().map(|&c| c as usize).collect();
            decode_given_set(&scores, &g.0, scorer, &cfg, &set)?
        };
        *slot = boxed(SetsegSegmentation(result));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_segmentation_len(seg: *const SetsegSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.0.segmentation.len())
}

#[no_mangle]
pub unsafe extern "C" fn setseg_segmentation_log_score(seg: *const SetsegSegmentation) -> f64 {
    seg.as_ref().map_or(f64::NAN, |s| s.0.log_score)
}

/// Class and length of segment `index`.
#[no_mangle]
pub unsafe extern "C" fn setseg_segmentation_get(
    seg: *const SetsegSegmentation,
    index: usize,
    out_class: *mut u32,
    out_len: *mut usize,
) -> SetsegStatus {
    guard(|| {
        let s = obj(seg, "segmentation")?;
        let &(c, l) = s
            .0
            .segmentation
            .segments
            .get(index)
            .ok_or_else(|| Fail::Arg(format!("segment {index} out of range")))?;
        *out_mut(out_class, "out_class")? = c as u32;
        *out_mut(out_len, "out_len")? = l;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn setseg_segmentation_free(seg: *mut SetsegSegmentation) {
    release(seg)
}
