//! C ABI for the fixflow pipeline validator, caption metrics, answer
//! aggregation, cost estimates and event-log replay.
//!
//! Every fallible call returns a [`FixflowStatus`]; on failure the message
//! is available from [`fixflow_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with [`fixflow_string_free`]. Handles are released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fixflow::analysis::{estimate_cost, CostPlan};
use fixflow::crowd::{likert_aggregate, majority_vote};
use fixflow::metrics::{bleu, cider, rouge_l_corpus};
use fixflow::pipeline::PipelineDefinition;
use fixflow::service::{replay_text, ReplayState};
use fixflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    EmptyInput = 4,
    Parse = 5,
    InvalidPipeline = 6,
    CorruptRecord = 7,
    NotFound = 8,
    Io = 9,
    Panic = 10,
}

/// A parsed pipeline file.
pub struct FixflowPipeline {
    def: PipelineDefinition,
    problems: Vec<String>,
}

/// State rebuilt from an event log.
pub struct FixflowReplay {
    state: ReplayState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(FixflowStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::EmptyInput(_) | Error::EmptyCandidateSet | Error::NoJudgments => FixflowStatus::EmptyInput,
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => FixflowStatus::Parse,
            Error::InvalidGraph(_) | Error::Cycle(_) | Error::InvalidFix(_) | Error::InvalidWorkflow(_) => {
                FixflowStatus::InvalidPipeline
            }
            Error::CorruptRecord { .. } => FixflowStatus::CorruptRecord,
            Error::Io { .. } => FixflowStatus::Io,
            _ => FixflowStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FixflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FixflowStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside fixflow".into());
            FixflowStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(FixflowStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(FixflowStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(FixflowStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(FixflowStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn json_error(what: &str) -> impl Fn(serde_json::Error) -> Fail + '_ {
    move |e| Fail(FixflowStatus::Parse, format!("`{what}`: {e}"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next fixflow call on the same thread.
#[no_mangle]
pub extern "C" fn fixflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn fixflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a fixflow out-parameter and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fixflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a pipeline file. A definition with problems still yields a handle;
/// see [`fixflow_pipeline_problem_count`].
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixflow_pipeline_from_toml(toml: *const c_char, out_handle: *mut *mut FixflowPipeline) -> FixflowStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let def = PipelineDefinition::from_toml(text(toml, "toml")?)?;
        let problems = def.check();
        *slot = Box::into_raw(Box::new(FixflowPipeline { def, problems }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn fixflow_pipeline_problem_count(handle: *const FixflowPipeline, out_count: *mut usize) -> FixflowStatus {
    guard(|| {
        let p = handle
            .as_ref()
            .ok_or_else(|| Fail(FixflowStatus::NullPointer, "`handle` is null".into()))?;
        *out(out_count, "out_count")? = p.problems.len();
        Ok(())
    })
}

/// Problems as a JSON array of strings; `[]` when the pipeline is valid.
///
/// # Safety
/// `handle` must be a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn fixflow_pipeline_problems_json(handle: *const FixflowPipeline, out_json: *mut *mut c_char) -> FixflowStatus {
    guard(|| {
        let p = handle
            .as_ref()
            .ok_or_else(|| Fail(FixflowStatus::NullPointer, "`handle` is null".into()))?;
        let s = serde_json::to_string(&p.problems).map_err(Error::from)?;
        *out(out_json, "out_json")? = owned(s);
        Ok(())
    })
}

/// Component ids in execution order, as a JSON array.
///
/// # Safety
/// `handle` must be a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn fixflow_pipeline_order_json(handle: *const FixflowPipeline, out_json: *mut *mut c_char) -> FixflowStatus {
    guard(|| {
        let p = handle
            .as_ref()
            .ok_or_else(|| Fail(FixflowStatus::NullPointer, "`handle` is null".into()))?;
        let order = p.def.graph.topological_order()?;
        *out(out_json, "out_json")? = owned(serde_json::to_string(&order).map_err(Error::from)?);
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a pipeline handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fixflow_pipeline_free(handle: *mut FixflowPipeline) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixflowMetric {
    Bleu1 = 0,
    Bleu4 = 1,
    RougeL = 2,
    Cider = 3,
}

/// Corpus score of `candidates` (JSON array of strings) against
/// `references` (JSON array of string arrays, one per candidate).
///
/// # Safety
/// Both strings must be NUL-terminated; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixflow_metric(
    metric: FixflowMetric,
    candidates_json: *const c_char,
    references_json: *const c_char,
    out_score: *mut f64,
) -> FixflowStatus {
    guard(|| {
        let candidates: Vec<String> =
            serde_json::from_str(text(candidates_json, "candidates_json")?).map_err(json_error("candidates_json"))?;
        let references: Vec<Vec<String>> =
            serde_json::from_str(text(references_json, "references_json")?).map_err(json_error("references_json"))?;
        let score = match metric {
            FixflowMetric::Bleu1 => bleu(&candidates, &references, 1)?,
            FixflowMetric::Bleu4 => bleu(&candidates, &references, 4)?,
            FixflowMetric::RougeL => rouge_l_corpus(&candidates, &references)?,
            FixflowMetric::Cider => cider(&candidates, &references)?,
        };
        *out(out_score, "out_score")? = score;
        Ok(())
    })
}

/// Strict majority over binary votes. `out_decision` is 1 or 0, or -1
/// without a strict majority.
///
/// # Safety
/// `votes` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn fixflow_majority_vote(
    votes: *const bool,
    len: usize,
    out_decision: *mut i32,
    out_agreement: *mut f64,
) -> FixflowStatus {
    guard(|| {
        let m = majority_vote(slice(votes, len, "votes")?)?;
        *out(out_decision, "out_decision")? = m.decision.map_or(-1, i32::from);
        *out(out_agreement, "out_agreement")? = m.agreement;
        Ok(())
    })
}

/// Mean of 1-5 ratings and whether a strict majority is 4 or 5.
///
/// # Safety
/// `ratings` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn fixflow_likert_aggregate(
    ratings: *const u8,
    len: usize,
    out_mean: *mut f64,
    out_satisfactory: *mut bool,
) -> FixflowStatus {
    guard(|| {
        let s = likert_aggregate(slice(ratings, len, "ratings")?)?;
        *out(out_mean, "out_mean")? = s.mean;
        *out(out_satisfactory, "out_satisfactory")? = s.satisfactory;
        Ok(())
    })
}

/// Totals a cost plan given as TOML. Writes the grand total in cents and,
/// when `out_json` is non-null, the filled plan as JSON.
///
/// # Safety
/// `plan_toml` must be NUL-terminated; `out_total_cents` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixflow_cost_estimate(
    plan_toml: *const c_char,
    out_total_cents: *mut i64,
    out_json: *mut *mut c_char,
) -> FixflowStatus {
    guard(|| {
        let plan = CostPlan::from_toml(text(plan_toml, "plan_toml")?)?;
        let filled = estimate_cost(&plan.rows)?;
        *out(out_total_cents, "out_total_cents")? = filled.total.cents();
        if let Some(slot) = out_json.as_mut() {
            *slot = owned(serde_json::to_string(&filled).map_err(Error::from)?);
        }
        Ok(())
    })
}

/// Rebuilds state from JSON-lines log text and checks every logged report
/// hash.
///
/// # Safety
/// `jsonl` must be NUL-terminated; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixflow_replay(jsonl: *const c_char, out_handle: *mut *mut FixflowReplay) -> FixflowStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let state = replay_text(text(jsonl, "jsonl")?)?;
        *slot = Box::into_raw(Box::new(FixflowReplay { state }));
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixflowReplayCounts {
    pub runs: usize,
    pub evaluation_tasks: usize,
    pub quality_records: usize,
    pub reports: usize,
}

/// # Safety
/// `handle` must be a live replay handle.
#[no_mangle]
pub unsafe extern "C" fn fixflow_replay_counts(handle: *const FixflowReplay, out_counts: *mut FixflowReplayCounts) -> FixflowStatus {
    guard(|| {
        let r = handle
            .as_ref()
            .ok_or_else(|| Fail(FixflowStatus::NullPointer, "`handle` is null".into()))?;
        *out(out_counts, "out_counts")? = FixflowReplayCounts {
            runs: r.state.data.runs.len(),
            evaluation_tasks: r.state.evaluations.len(),
            quality_records: r.state.data.records.values().map(|m| m.len()).sum(),
            reports: r.state.reports.len(),
        };
        Ok(())
    })
}

/// Plain-text body of a logged report.
///
/// # Safety
/// `handle` must be a live replay handle and `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fixflow_replay_report_text(
    handle: *const FixflowReplay,
    name: *const c_char,
    out_text: *mut *mut c_char,
) -> FixflowStatus {
    guard(|| {
        let r = handle
            .as_ref()
            .ok_or_else(|| Fail(FixflowStatus::NullPointer, "`handle` is null".into()))?;
        let name = text(name, "name")?;
        let report = r
            .state
            .report(name)
            .ok_or_else(|| Fail(FixflowStatus::NotFound, format!("no report `{name}` in the log")))?;
        *out(out_text, "out_text")? = owned(report.text.clone());
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a replay handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fixflow_replay_free(handle: *mut FixflowReplay) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
