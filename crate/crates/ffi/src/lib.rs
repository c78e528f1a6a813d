//! C ABI over the dpgate gateway.
//!
//! Every function returns a [`DpgStatus`]. Results come back as
//! NUL-terminated UTF-8 JSON through an out pointer and must be released with
//! [`dpg_string_free`]. When a call fails, [`dpg_last_error_message`] describes
//! the failure until the next call on the same thread.
//!
//! Gateway functions authenticate the caller by API key, as the HTTP API does.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde_json::json;

use dpgate::audit::{verify_file, ChainStatus};
use dpgate::catalog::User;
use dpgate::gateway::{Decision, GatewayError};
use dpgate::governance::{classify_purpose, PurposeCategory};
use dpgate::sqlguard::{parse_sql, render_sql};
use dpgate::Gateway;

/// Result code of every `dpg_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpgStatus {
    Ok = 0,
    /// A required pointer was null or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// Unknown API key.
    Unauthorized = 2,
    Forbidden = 3,
    NotFound = 4,
    /// Duplicate active request, inactive product or a request already decided.
    Conflict = 5,
    /// No active access grant for the product.
    AccessDenied = 6,
    InvalidPurpose = 7,
    ParseError = 8,
    /// The query breaks the data contract (unknown column, forbidden construct, ...).
    ContractViolation = 9,
    /// Registry, dataset or audit log could not be read or written.
    Io = 10,
    Internal = 11,
}

/// An open gateway. Opaque to C callers.
pub struct DpgGateway {
    inner: Gateway,
}

struct Failure(DpgStatus, String);

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::NotFound { .. } => DpgStatus::NotFound,
            GatewayError::Conflict { .. } | GatewayError::ProductInactive(_) | GatewayError::InvalidState { .. } => {
                DpgStatus::Conflict
            }
            GatewayError::Forbidden(_) => DpgStatus::Forbidden,
            GatewayError::AccessDenied { .. } => DpgStatus::AccessDenied,
            GatewayError::InvalidPurpose(_) => DpgStatus::InvalidPurpose,
            GatewayError::BadRequest(_) => DpgStatus::InvalidArgument,
            GatewayError::Parse(_) => DpgStatus::ParseError,
            GatewayError::Violation(_) => DpgStatus::ContractViolation,
            GatewayError::Audit(_) => DpgStatus::Io,
            GatewayError::Exec(_) => DpgStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: Option<String>) {
    let message = message.map(|m| CString::new(m.replace('\0', " ")).expect("NULs removed"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

/// Runs `body`, converting failures and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DpgStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| Err(Failure(DpgStatus::Internal, "panic inside dpgate".into())));
    match outcome {
        Ok(()) => {
            set_last_error(None);
            DpgStatus::Ok
        }
        Err(Failure(status, message)) => {
            set_last_error(Some(message));
            status
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(DpgStatus::InvalidArgument, message.into())
}

/// # Safety
/// `ptr` is null or points to a NUL-terminated string.
unsafe fn required<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    unsafe { optional(ptr, name) }?.ok_or_else(|| invalid(format!("{name} is null")))
}

/// # Safety
/// `ptr` is null or points to a NUL-terminated string.
unsafe fn optional<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        return Ok(None);
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map(Some)
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn write_out(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("out is null"));
    }
    let owned = CString::new(text).map_err(|_| Failure(DpgStatus::Internal, "result contains NUL".into()))?;
    unsafe { *out = owned.into_raw() };
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map_err(|e| Failure(DpgStatus::Internal, e.to_string()))
}

/// # Safety
/// `gateway` is null or came from [`dpg_gateway_open`]; `api_key` as for [`required`].
unsafe fn caller<'a>(gateway: *const DpgGateway, api_key: *const c_char) -> Result<(&'a Gateway, &'a User), Failure> {
    let gateway = &unsafe { gateway.as_ref() }
        .ok_or_else(|| invalid("gateway is null"))?
        .inner;
    let key = unsafe { required(api_key, "api_key") }?;
    let user = gateway
        .authenticate(key)
        .ok_or_else(|| Failure(DpgStatus::Unauthorized, "unknown API key".into()))?;
    Ok((gateway, user))
}

/// Opens the registry at `registry_dir`. `audit_file` may be null for an
/// in-memory audit log. On success `*out` owns a gateway to release with
/// [`dpg_gateway_free`].
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dpg_gateway_open(
    registry_dir: *const c_char,
    audit_file: *const c_char,
    out: *mut *mut DpgGateway,
) -> DpgStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let dir = unsafe { required(registry_dir, "registry_dir") }?;
        let audit = unsafe { optional(audit_file, "audit_file") }?;
        let inner =
            Gateway::open(Path::new(dir), audit.map(Path::new)).map_err(|e| Failure(DpgStatus::Io, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(DpgGateway { inner })) };
        Ok(())
    })
}

/// Releases a gateway. Null is ignored.
///
/// # Safety
/// `gateway` came from [`dpg_gateway_open`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpg_gateway_free(gateway: *mut DpgGateway) {
    if !gateway.is_null() {
        drop(unsafe { Box::from_raw(gateway) });
    }
}

/// Searches active products. A null or blank `query` lists all of them.
///
/// # Safety
/// See [`dpg_gateway_open`].
#[no_mangle]
pub unsafe extern "C" fn dpg_search(
    gateway: *const DpgGateway,
    api_key: *const c_char,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> DpgStatus {
    guard(|| {
        let (gateway, _) = unsafe { caller(gateway, api_key) }?;
        let query = unsafe { optional(query, "query") }?;
        let found = gateway
            .search(query, None)
            .map_err(|e| Failure(DpgStatus::InvalidArgument, e.to_string()))?;
        unsafe { write_out(out_json, to_json(&found)?) }
    })
}

/// Product detail with the caller's access status.
///
/// # Safety
/// See [`dpg_gateway_open`].
#[no_mangle]
pub unsafe extern "C" fn dpg_product_get(
    gateway: *const DpgGateway,
    api_key: *const c_char,
    product_id: *const c_char,
    out_json: *mut *mut c_char,
) -> DpgStatus {
    guard(|| {
        let (gateway, user) = unsafe { caller(gateway, api_key) }?;
        let product_id = unsafe { required(product_id, "product_id") }?;
        let detail = gateway.product_detail(user, product_id)?;
        unsafe { write_out(out_json, to_json(&detail)?) }
    })
}

/// Files an access request. `category` may be null to classify `purpose`
/// from its text.
///
/// # Safety
/// See [`dpg_gateway_open`].
#[no_mangle]
pub unsafe extern "C" fn dpg_request_access(
    gateway: *const DpgGateway,
    api_key: *const c_char,
    product_id: *const c_char,
    purpose: *const c_char,
    category: *const c_char,
    out_json: *mut *mut c_char,
) -> DpgStatus {
    guard(|| {
        let (gateway, user) = unsafe { caller(gateway, api_key) }?;
        let product_id = unsafe { required(product_id, "product_id") }?;
        let purpose = unsafe { required(purpose, "purpose") }?;
        let category = unsafe { optional(category, "category") }?
            .map(PurposeCategory::parse)
            .transpose()
            .map_err(|e| Failure(DpgStatus::InvalidPurpose, e.to_string()))?;
        let request = gateway.create_access_request(user, product_id, purpose, category)?;
        unsafe { write_out(out_json, to_json(&request)?) }
    })
}

/// Approves (`approve` true) or rejects a pending request as a member of the
/// owning team. `note` may be null.
///
/// # Safety
/// See [`dpg_gateway_open`].
#[no_mangle]
pub unsafe extern "C" fn dpg_decide(
    gateway: *const DpgGateway,
    api_key: *const c_char,
    request_id: *const c_char,
    approve: bool,
    note: *const c_char,
    out_json: *mut *mut c_char,
) -> DpgStatus {
    guard(|| {
        let (gateway, user) = unsafe { caller(gateway, api_key) }?;
        let request_id = unsafe { required(request_id, "request_id") }?;
        let note = unsafe { optional(note, "note") }?;
        let decision = if approve { Decision::Approve } else { Decision::Reject };
        let request = gateway.decide_request(user, request_id, decision, note)?;
        unsafe { write_out(out_json, to_json(&request)?) }
    })
}

/// Runs a governed query. A governance rejection is not an error: the call
/// returns `Ok` with `"status":"rejected"` and the reasons. `purpose` may be
/// null to use the purpose of the grant.
///
/// # Safety
/// See [`dpg_gateway_open`].
#[no_mangle]
pub unsafe extern "C" fn dpg_query(
    gateway: *const DpgGateway,
    api_key: *const c_char,
    product_id: *const c_char,
    sql: *const c_char,
    purpose: *const c_char,
    out_json: *mut *mut c_char,
) -> DpgStatus {
    guard(|| {
        let (gateway, user) = unsafe { caller(gateway, api_key) }?;
        let product_id = unsafe { required(product_id, "product_id") }?;
        let sql = unsafe { required(sql, "sql") }?;
        let purpose = unsafe { optional(purpose, "purpose") }?;
        let outcome = gateway.run_query(user, product_id, sql, purpose)?;
        unsafe { write_out(out_json, to_json(&outcome)?) }
    })
}

/// Parses SQL and returns `{"sql": <canonical text>, "ast": <tree>}`.
///
/// # Safety
/// `sql` is null or NUL-terminated; `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dpg_sql_parse(sql: *const c_char, out_json: *mut *mut c_char) -> DpgStatus {
    guard(|| {
        let sql = unsafe { required(sql, "sql") }?;
        let ast = parse_sql(sql).map_err(|e| Failure(DpgStatus::ParseError, e.to_string()))?;
        let body = json!({ "sql": render_sql(&ast), "ast": ast });
        unsafe { write_out(out_json, body.to_string()) }
    })
}

/// Writes the purpose category for free text, e.g. `analytics`.
///
/// # Safety
/// `text` is null or NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dpg_purpose_classify(text: *const c_char, out: *mut *mut c_char) -> DpgStatus {
    guard(|| {
        let text = unsafe { required(text, "text") }?;
        let category = classify_purpose(text).map_err(|e| Failure(DpgStatus::InvalidPurpose, e.to_string()))?;
        unsafe { write_out(out, category.as_str().to_string()) }
    })
}

/// Checks the hash chain of an audit file. Writes
/// `{"status":"ok","records":N}` or `{"status":"broken","first_bad_seq":N}`;
/// both are `Ok`. Unreadable files give `Io`.
///
/// # Safety
/// `path` is null or NUL-terminated; `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dpg_audit_verify(path: *const c_char, out_json: *mut *mut c_char) -> DpgStatus {
    guard(|| {
        let path = unsafe { required(path, "path") }?;
        let body = match verify_file(Path::new(path)).map_err(|e| Failure(DpgStatus::Io, e.to_string()))? {
            ChainStatus::Ok { records } => json!({ "status": "ok", "records": records }),
            ChainStatus::Broken { first_bad_seq } => json!({ "status": "broken", "first_bad_seq": first_bad_seq }),
        };
        unsafe { write_out(out_json, body.to_string()) }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` came from a `dpg_*` out pointer and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message for the last failed call on this thread, or null after a
/// successful one. Owned by the library; valid until the next `dpg_*` call.
#[no_mangle]
pub extern "C" fn dpg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}
