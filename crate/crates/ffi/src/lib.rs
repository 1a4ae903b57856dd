// SPDX-License-Identifier: Apache-2.0

//! C ABI over `scenegraph-core`.
//!
//! Every function returns an [`SgStatus`]. On failure the thread's last error
//! message is set and can be read with [`sg_last_error_message`]. Strings
//! handed out through `char **` parameters are owned by the caller and must
//! be released with [`sg_string_free`]. Structured requests and responses are
//! UTF-8 JSON using the same shapes as the HTTP API.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scenegraph_core::formats::{FormatError, SplitAssignment};
use scenegraph_core::model::BBox;
use scenegraph_core::recommender::{extract_features, FeatureVector, PairKey, PriorDatabase, ScoreDomain};
use scenegraph_core::service::{AnnotateRequest, ExportFormat, OpenMode, Project, RecommendRequest, ServiceError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    NotFound = 6,
    Conflict = 7,
    ReadOnly = 8,
    Integrity = 9,
    Underflow = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgExportFormat {
    Merged = 0,
    PerImage = 1,
}

/// Open project directory.
pub struct SgProject {
    inner: Project,
}

/// Standalone prior database.
pub struct SgPrior {
    inner: PriorDatabase,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SgStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(code: &str) -> SgStatus {
    match code {
        "UnknownImage" | "UnknownEntity" | "DanglingEndpoint" | "UnknownMember" => SgStatus::NotFound,
        "DuplicateId" | "DuplicateTriple" | "MemberAlreadyClustered" => SgStatus::Conflict,
        "ReadOnly" => SgStatus::ReadOnly,
        "ParseError" | "SchemaError" | "BadRequest" => SgStatus::Parse,
        "MissingConfig" | "StorageFailure" => SgStatus::Io,
        "CorruptAnnotation" | "CorruptLog" | "PriorDbMismatch" => SgStatus::Integrity,
        "UnderflowWouldOccur" => SgStatus::Underflow,
        _ => SgStatus::Validation,
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        Failure(status_of(e.code()), format!("{}: {e}", e.code()))
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure(status_of(e.code()), format!("{}: {e}", e.code()))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SgStatus::Parse, format!("ParseError: {e}"))
    }
}

/// Runs `f`, converting errors and panics into a status and last error.
fn guard(f: impl FnOnce() -> FfiResult) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside scenegraph".into());
            SgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(SgStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SgStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(SgStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Failure(SgStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    mut_arg(p, name)
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

fn bbox(b: &[u32; 4]) -> FfiResult<BBox> {
    let b = BBox::new(b[0], b[1], b[2], b[3]);
    if b.is_well_formed() {
        Ok(b)
    } else {
        Err(Failure(SgStatus::Validation, "InvalidBBox: need x1 < x2 and y1 < y2".into()))
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn sg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens the project at `root`, repairing it unless `read_only` is non-zero.
/// The repair report is written to `*out_report` as JSON when that pointer
/// is non-null.
///
/// # Safety
/// `root` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_project_open(
    root: *const c_char,
    read_only: i32,
    out: *mut *mut SgProject,
    out_report: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let root = str_arg(root, "root")?;
        let out = out_arg(out, "out")?;
        let mode = if read_only != 0 { OpenMode::ReadOnly } else { OpenMode::Repair };
        let (inner, report) = Project::open(root, mode)?;
        if let Some(r) = out_report.as_mut() {
            *r = to_c_string(serde_json::to_string(&report)?);
        }
        *out = Box::into_raw(Box::new(SgProject { inner }));
        Ok(())
    })
}

/// Closes a project handle. Null is ignored.
///
/// # Safety
/// `project` must come from [`sg_project_open`] and not have been closed.
#[no_mangle]
pub unsafe extern "C" fn sg_project_close(project: *mut SgProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}

/// Checks the project at `root` without modifying it. Returns
/// `SG_STATUS_INTEGRITY` when issues were found; the report is written to
/// `*out_report` either way.
///
/// # Safety
/// `root` must be a NUL-terminated string; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_project_verify(root: *const c_char, out_report: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let root = str_arg(root, "root")?;
        let out = out_arg(out_report, "out_report")?;
        let report = Project::verify(root)?;
        *out = to_c_string(serde_json::to_string(&report)?);
        if report.is_clean() {
            Ok(())
        } else {
            Err(Failure(SgStatus::Integrity, format!("{} issue(s) found", report.issues.len())))
        }
    })
}

/// Ranks predicates for a pair. `request_json` is
/// `{"subject_ref", "object_ref", "k"?, "override_regions"?}`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_project_recommend(
    project: *const SgProject,
    image_id: *const c_char,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let p = ref_arg(project, "project")?;
        let image_id = str_arg(image_id, "image_id")?;
        let req: RecommendRequest = serde_json::from_str(str_arg(request_json, "request_json")?)?;
        let out = out_arg(out_json, "out_json")?;
        let resp = p.inner.recommend(image_id, &req)?;
        *out = to_c_string(serde_json::to_string(&resp)?);
        Ok(())
    })
}

/// Stores a relationship. `request_json` is
/// `{"id"?, "subject_ref", "predicate", "object_ref"}`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_project_annotate(
    project: *mut SgProject,
    image_id: *const c_char,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let p = mut_arg(project, "project")?;
        let image_id = str_arg(image_id, "image_id")?;
        let req: AnnotateRequest = serde_json::from_str(str_arg(request_json, "request_json")?)?;
        let out = out_arg(out_json, "out_json")?;
        let resp = p.inner.annotate(image_id, req)?;
        *out = to_c_string(serde_json::to_string(&resp)?);
        Ok(())
    })
}

/// Deletes a stored relationship and its prior contribution.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_project_delete_relationship(
    project: *mut SgProject,
    image_id: *const c_char,
    relationship_id: *const c_char,
) -> SgStatus {
    guard(|| {
        let p = mut_arg(project, "project")?;
        let image_id = str_arg(image_id, "image_id")?;
        let id = str_arg(relationship_id, "relationship_id")?;
        p.inner.delete_relationship(image_id, id)?;
        Ok(())
    })
}

/// Writes an export under the project's `export/` directory. `split_json`
/// may be null (every image is train) or an `{image_id: split}` object. The
/// export result, including the conversion report, goes to `*out_json`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_project_export(
    project: *const SgProject,
    format: SgExportFormat,
    split_json: *const c_char,
    out_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let p = ref_arg(project, "project")?;
        let out = out_arg(out_json, "out_json")?;
        let split: SplitAssignment = if split_json.is_null() {
            SplitAssignment::new()
        } else {
            serde_json::from_str(str_arg(split_json, "split_json")?)?
        };
        let format = match format {
            SgExportFormat::Merged => ExportFormat::Merged,
            SgExportFormat::PerImage => ExportFormat::PerImage,
        };
        let result = p.inner.export(format, &split)?;
        *out = to_c_string(serde_json::to_string(&result)?);
        Ok(())
    })
}

/// Copies the project's prior database into a new standalone handle.
///
/// # Safety
/// `project` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_project_prior(project: *const SgProject, out: *mut *mut SgPrior) -> SgStatus {
    guard(|| {
        let p = ref_arg(project, "project")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SgPrior { inner: p.inner.prior().clone() }));
        Ok(())
    })
}

/// Feature bits for a subject/object box pair. Boxes are `[x1, y1, x2, y2]`.
/// Bit order: contact, subject_left, subject_above, subject_smaller,
/// subject_larger, subject_inside, object_inside.
///
/// # Safety
/// `subject` and `object` must point at four integers; `out_bits` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sg_extract_features(
    subject: *const [u32; 4],
    object: *const [u32; 4],
    out_bits: *mut u8,
) -> SgStatus {
    guard(|| {
        let s = bbox(ref_arg(subject, "subject")?)?;
        let o = bbox(ref_arg(object, "object")?)?;
        *out_arg(out_bits, "out_bits")? = extract_features(&s, &o).bits();
        Ok(())
    })
}

/// Empty prior database.
#[no_mangle]
pub extern "C" fn sg_prior_new() -> *mut SgPrior {
    Box::into_raw(Box::new(SgPrior { inner: PriorDatabase::new() }))
}

/// Parses a prior database from its text form.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_from_text(text: *const c_char, out: *mut *mut SgPrior) -> SgStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let inner =
            PriorDatabase::from_text(text).map_err(|e| Failure(SgStatus::Parse, format!("PriorDbMismatch: {e}")))?;
        *out = Box::into_raw(Box::new(SgPrior { inner }));
        Ok(())
    })
}

/// Text form of the database.
///
/// # Safety
/// `prior` must be valid; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_to_text(prior: *const SgPrior, out_text: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let db = ref_arg(prior, "prior")?;
        *out_arg(out_text, "out_text")? = to_c_string(db.inner.to_text());
        Ok(())
    })
}

/// Releases a prior handle. Null is ignored.
///
/// # Safety
/// `prior` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_free(prior: *mut SgPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Records one accepted annotation.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_update(
    prior: *mut SgPrior,
    subject_category: *const c_char,
    object_category: *const c_char,
    features: u8,
    predicate: *const c_char,
) -> SgStatus {
    guard(|| {
        let db = mut_arg(prior, "prior")?;
        let pair =
            PairKey::new(str_arg(subject_category, "subject_category")?, str_arg(object_category, "object_category")?);
        db.inner.update(&pair, FeatureVector::from_bits(features), str_arg(predicate, "predicate")?);
        Ok(())
    })
}

/// Withdraws one annotation. Fails with `SG_STATUS_UNDERFLOW`, leaving the
/// database unchanged, if it was never recorded.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_remove(
    prior: *mut SgPrior,
    subject_category: *const c_char,
    object_category: *const c_char,
    features: u8,
    predicate: *const c_char,
) -> SgStatus {
    guard(|| {
        let db = mut_arg(prior, "prior")?;
        let pair =
            PairKey::new(str_arg(subject_category, "subject_category")?, str_arg(object_category, "object_category")?);
        db.inner
            .remove(&pair, FeatureVector::from_bits(features), str_arg(predicate, "predicate")?)
            .map_err(|e| Failure(SgStatus::Underflow, format!("UnderflowWouldOccur: {e}")))
    })
}

/// Score of `predicate` for the pair, summed over features set in
/// `features`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sg_prior_score(
    prior: *const SgPrior,
    subject_category: *const c_char,
    object_category: *const c_char,
    features: u8,
    predicate: *const c_char,
    out_score: *mut u64,
) -> SgStatus {
    guard(|| {
        let db = ref_arg(prior, "prior")?;
        let pair =
            PairKey::new(str_arg(subject_category, "subject_category")?, str_arg(object_category, "object_category")?);
        let predicate = str_arg(predicate, "predicate")?;
        let out = out_arg(out_score, "out_score")?;
        *out = db.inner.score(&pair, FeatureVector::from_bits(features), predicate, ScoreDomain::Present);
        Ok(())
    })
}
