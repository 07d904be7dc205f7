//! C ABI over `vgs_core`.
//!
//! Every fallible function returns a [`VgsStatus`]. On failure the message is
//! available from [`vgs_last_error_message`] on the same thread. Strings
//! returned through `out` parameters are owned by the caller and must be
//! released with [`vgs_string_free`]; handles with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vgs_core::dom::Document;
use vgs_core::evaluation::{cell_metrics, extract_document};
use vgs_core::html_tools::{absolute_xpath, local_segment, resolve_unique, simplify};
use vgs_core::wrapper::Wrapper;
use vgs_core::xpath::evaluate_strings;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidXpath = 4,
    NotFound = 5,
    InvalidArgument = 6,
    Internal = 7,
}

/// Precision, recall and F1 of one value-list comparison.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgsMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Parsed HTML document.
pub struct VgsDocument(Document);

/// Attribute to XPath map loaded from wrapper JSON.
pub struct VgsWrapper(Wrapper);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VgsStatus, String);

type Outcome<T> = Result<T, Failure>;

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome<()>) -> VgsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VgsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VgsStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(Failure(VgsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(VgsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| Failure(VgsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return Err(Failure(VgsStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Outcome<()> {
    let c = CString::new(s).map_err(|_| Failure(VgsStatus::Internal, "result contains NUL".into()))?;
    if out.is_null() {
        return Err(Failure(VgsStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(c.into_raw());
    Ok(())
}

fn xpath_failure(e: impl std::fmt::Display) -> Failure {
    Failure(VgsStatus::InvalidXpath, e.to_string())
}

fn lookup_failure(e: vgs_core::html_tools::HtmlToolsError) -> Failure {
    use vgs_core::html_tools::HtmlToolsError::*;
    let status = match &e {
        AnchorNotFound(_) => VgsStatus::NotFound,
        NegativeDistance(_) => VgsStatus::InvalidArgument,
        _ => VgsStatus::InvalidXpath,
    };
    Failure(status, e.to_string())
}

fn json_list(s: &str, what: &str) -> Outcome<Vec<String>> {
    serde_json::from_str(s).map_err(|e| Failure(VgsStatus::InvalidJson, format!("{what}: {e}")))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vgs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn vgs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn vgs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `html` into a new document handle.
///
/// # Safety
/// `html` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vgs_document_parse(html: *const c_char, out: *mut *mut VgsDocument) -> VgsStatus {
    guard(|| {
        let html = text(html, "html")?;
        write_out(out, Box::into_raw(Box::new(VgsDocument(Document::parse(html)))))
    })
}

/// # Safety
/// `doc` must be NULL or a handle from [`vgs_document_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vgs_document_free(doc: *mut VgsDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Evaluates an XPath and writes the string values as a JSON array.
///
/// # Safety
/// Pointers must be valid; see the module documentation for ownership.
#[no_mangle]
pub unsafe extern "C" fn vgs_document_evaluate(doc: *const VgsDocument, xpath: *const c_char, out_json: *mut *mut c_char) -> VgsStatus {
    guard(|| {
        let doc = handle(doc, "document")?;
        let values = evaluate_strings(&doc.0, text(xpath, "xpath")?).map_err(xpath_failure)?;
        write_string(out_json, serde_json::to_string(&values).expect("strings serialize"))
    })
}

/// Writes the absolute positional XPath of the single node `xpath` selects.
///
/// # Safety
/// Pointers must be valid; see the module documentation for ownership.
#[no_mangle]
pub unsafe extern "C" fn vgs_document_absolute_xpath(doc: *const VgsDocument, xpath: *const c_char, out: *mut *mut c_char) -> VgsStatus {
    guard(|| {
        let doc = handle(doc, "document")?;
        let node = resolve_unique(&doc.0, text(xpath, "xpath")?).map_err(lookup_failure)?;
        write_string(out, absolute_xpath(&doc.0, node).map_err(lookup_failure)?)
    })
}

/// Writes the HTML of the elements within `distance` tree edges of the
/// node `anchor_xpath` selects.
///
/// # Safety
/// Pointers must be valid; see the module documentation for ownership.
#[no_mangle]
pub unsafe extern "C" fn vgs_document_local_segment(
    doc: *const VgsDocument,
    anchor_xpath: *const c_char,
    distance: i64,
    out_html: *mut *mut c_char,
) -> VgsStatus {
    guard(|| {
        let doc = handle(doc, "document")?;
        let anchor = resolve_unique(&doc.0, text(anchor_xpath, "anchor_xpath")?).map_err(lookup_failure)?;
        let segment = local_segment(&doc.0, anchor, distance).map_err(lookup_failure)?;
        write_string(out_html, segment.content)
    })
}

/// Strips scripts, styles, comments and non-whitelisted attributes.
///
/// # Safety
/// Pointers must be valid; see the module documentation for ownership.
#[no_mangle]
pub unsafe extern "C" fn vgs_simplify_html(html: *const c_char, out_html: *mut *mut c_char) -> VgsStatus {
    guard(|| write_string(out_html, simplify(text(html, "html")?).content))
}

/// Loads a wrapper from its JSON form. Every entry must compile.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vgs_wrapper_from_json(json: *const c_char, out: *mut *mut VgsWrapper) -> VgsStatus {
    guard(|| {
        let wrapper: Wrapper = serde_json::from_str(text(json, "json")?).map_err(|e| Failure(VgsStatus::InvalidJson, e.to_string()))?;
        wrapper.validate().map_err(xpath_failure)?;
        write_out(out, Box::into_raw(Box::new(VgsWrapper(wrapper))))
    })
}

/// # Safety
/// `wrapper` must be NULL or a handle from [`vgs_wrapper_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vgs_wrapper_free(wrapper: *mut VgsWrapper) {
    if !wrapper.is_null() {
        drop(Box::from_raw(wrapper));
    }
}

/// Number of attribute entries, or 0 for NULL.
///
/// # Safety
/// `wrapper` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vgs_wrapper_entry_count(wrapper: *const VgsWrapper) -> usize {
    wrapper.as_ref().map_or(0, |w| w.0.entries.len())
}

/// Applies the wrapper to a document and writes `{attribute: [values]}` as
/// JSON. `page_url` may be NULL; when given, link and image values are
/// resolved against it.
///
/// # Safety
/// Pointers must be valid; see the module documentation for ownership.
#[no_mangle]
pub unsafe extern "C" fn vgs_wrapper_apply(
    wrapper: *const VgsWrapper,
    doc: *const VgsDocument,
    page_url: *const c_char,
    out_json: *mut *mut c_char,
) -> VgsStatus {
    guard(|| {
        let wrapper = handle(wrapper, "wrapper")?;
        let doc = handle(doc, "document")?;
        let base = if page_url.is_null() {
            None
        } else {
            let raw = text(page_url, "page_url")?;
            Some(url::Url::parse(raw).map_err(|e| Failure(VgsStatus::InvalidArgument, format!("page_url: {e}")))?)
        };
        let values = extract_document(&wrapper.0, &doc.0, base.as_ref());
        write_string(out_json, serde_json::to_string(&values).expect("values serialize"))
    })
}

/// Multiset precision, recall and F1 of two JSON string arrays.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vgs_score_values(predicted_json: *const c_char, gold_json: *const c_char, out: *mut VgsMetrics) -> VgsStatus {
    guard(|| {
        let pred = json_list(text(predicted_json, "predicted_json")?, "predicted_json")?;
        let gold = json_list(text(gold_json, "gold_json")?, "gold_json")?;
        let m = cell_metrics(&pred, &gold);
        write_out(out, VgsMetrics { precision: m.precision, recall: m.recall, f1: m.f1 })
    })
}
