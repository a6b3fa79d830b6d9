//! C ABI for the cfgconf pipeline.
//!
//! Callers pass a CFGConf JSON spec as a NUL-terminated UTF-8 string and
//! get back an opaque result handle holding the rendered artifact plus any
//! diagnostics. Every handle must be released with `cfgconf_result_free`.
//! Status codes mirror the CLI's exit codes.

use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::ptr;

use cfgconf::pipeline::{self, PipelineError};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfgconfStatus {
    Ok = 0,
    /// The spec failed validation; inspect the diagnostics.
    ValidationError = 1,
    /// A referenced file could not be read.
    IoError = 2,
    /// The drawn graph is above the layout size guard.
    TooLarge = 3,
    /// A required pointer argument was null or not valid UTF-8.
    InvalidArgument = 4,
}

/// Opaque result: rendered output (when successful) plus diagnostics.
pub struct CfgconfResult {
    output: Option<CString>,
    diagnostics: Vec<CString>,
}

fn to_cstring(s: String) -> CString {
    CString::new(s.replace('\0', "\u{FFFD}")).expect("NUL bytes were replaced")
}

fn finish(
    out: *mut *mut CfgconfResult,
    output: Option<String>,
    diagnostics: Vec<String>,
    status: CfgconfStatus,
) -> CfgconfStatus {
    let boxed = Box::new(CfgconfResult {
        output: output.map(to_cstring),
        diagnostics: diagnostics.into_iter().map(to_cstring).collect(),
    });
    // SAFETY: caller promises `out` is a valid location for a pointer.
    unsafe { *out = Box::into_raw(boxed) };
    status
}

fn error_status(e: &PipelineError) -> CfgconfStatus {
    match e {
        PipelineError::Validation(_) => CfgconfStatus::ValidationError,
        PipelineError::Io { .. } => CfgconfStatus::IoError,
        PipelineError::TooLarge(_) => CfgconfStatus::TooLarge,
    }
}

fn diagnostics_of(e: &PipelineError) -> Vec<String> {
    e.diagnostics().iter().map(|d| d.to_string()).collect()
}

/// # Safety
/// `spec_json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer slot.
unsafe fn run_spec(
    spec_json: *const c_char,
    out: *mut *mut CfgconfResult,
    emit: impl FnOnce(&mut pipeline::Prepared) -> Result<String, PipelineError>,
) -> CfgconfStatus {
    if spec_json.is_null() || out.is_null() {
        return CfgconfStatus::InvalidArgument;
    }
    *out = ptr::null_mut();
    let text = match CStr::from_ptr(spec_json).to_str() {
        Ok(t) => t,
        Err(_) => return CfgconfStatus::InvalidArgument,
    };
    let loader = |path: &str| fs::read_to_string(path);
    match pipeline::prepare(text, &loader) {
        Ok(mut prepared) => match emit(&mut prepared) {
            Ok(artifact) => {
                let diags = prepared.diagnostics.iter().map(|d| d.to_string()).collect();
                finish(out, Some(artifact), diags, CfgconfStatus::Ok)
            }
            Err(e) => finish(out, None, diagnostics_of(&e), error_status(&e)),
        },
        Err(e) => finish(out, None, diagnostics_of(&e), error_status(&e)),
    }
}

/// Render a CFGConf JSON spec to SVG.
///
/// On return, `*out` holds a result handle (even on failure, so the
/// diagnostics can be read). Free it with `cfgconf_result_free`.
///
/// # Safety
/// `spec_json` must point to a NUL-terminated UTF-8 string and `out` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn cfgconf_render_svg(
    spec_json: *const c_char,
    out: *mut *mut CfgconfResult,
) -> CfgconfStatus {
    run_spec(spec_json, out, pipeline::render)
}

/// Emit the drawn graph as dot text; `annotated` adds the layout hints
/// (back-edge ports, constraint=false, invisible header-to-latch edges).
///
/// # Safety
/// Same contract as [`cfgconf_render_svg`].
#[no_mangle]
pub unsafe extern "C" fn cfgconf_emit_dot(
    spec_json: *const c_char,
    annotated: bool,
    out: *mut *mut CfgconfResult,
) -> CfgconfStatus {
    run_spec(spec_json, out, |p| Ok(pipeline::emit_dot(p, annotated)))
}

/// The rendered artifact, or null when the run failed. Owned by the result
/// handle; do not free separately.
///
/// # Safety
/// `result` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn cfgconf_result_output(result: *const CfgconfResult) -> *const c_char {
    match result.as_ref().and_then(|r| r.output.as_ref()) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Number of diagnostic messages attached to the result.
///
/// # Safety
/// `result` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn cfgconf_result_diagnostic_count(result: *const CfgconfResult) -> usize {
    result.as_ref().map_or(0, |r| r.diagnostics.len())
}

/// The `index`-th diagnostic as a formatted line, or null when out of
/// range. Owned by the result handle.
///
/// # Safety
/// `result` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn cfgconf_result_diagnostic(
    result: *const CfgconfResult,
    index: usize,
) -> *const c_char {
    match result.as_ref().and_then(|r| r.diagnostics.get(index)) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Release a result handle. Null is a no-op.
///
/// # Safety
/// `result` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn cfgconf_result_free(result: *mut CfgconfResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn call_render(spec: &str) -> (CfgconfStatus, *mut CfgconfResult) {
        let c = CString::new(spec).unwrap();
        let mut out: *mut CfgconfResult = ptr::null_mut();
        let status = unsafe { cfgconf_render_svg(c.as_ptr(), &mut out) };
        (status, out)
    }

    #[test]
    fn renders_hello_world() {
        let (status, out) = call_render(
            r#"{"data":{"nodes":[{"id":"a"},{"id":"b"}],"edges":[{"source":"a","target":"b"}]}}"#,
        );
        assert_eq!(status, CfgconfStatus::Ok);
        let svg = unsafe { CStr::from_ptr(cfgconf_result_output(out)) }
            .to_str()
            .unwrap();
        assert!(svg.starts_with("<svg"));
        unsafe { cfgconf_result_free(out) };
    }

    #[test]
    fn validation_error_carries_diagnostics() {
        let (status, out) = call_render(r#"{"filtering":{"isHopFilterOn":true}}"#);
        assert_eq!(status, CfgconfStatus::ValidationError);
        unsafe {
            assert!(cfgconf_result_output(out).is_null());
            let n = cfgconf_result_diagnostic_count(out);
            assert!(n >= 1);
            let msg = CStr::from_ptr(cfgconf_result_diagnostic(out, 0)).to_str().unwrap();
            assert!(msg.contains("error"), "{msg}");
            assert!(cfgconf_result_diagnostic(out, n).is_null());
            cfgconf_result_free(out);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut out: *mut CfgconfResult = ptr::null_mut();
        assert_eq!(
            unsafe { cfgconf_render_svg(ptr::null(), &mut out) },
            CfgconfStatus::InvalidArgument
        );
        let c = CString::new("{}").unwrap();
        assert_eq!(
            unsafe { cfgconf_render_svg(c.as_ptr(), ptr::null_mut()) },
            CfgconfStatus::InvalidArgument
        );
    }

    #[test]
    fn emit_dot_works_through_ffi() {
        let c = CString::new(
            r#"{"data":{"nodes":[{"id":"a"},{"id":"b"}],"edges":[{"source":"a","target":"b"}]}}"#,
        )
        .unwrap();
        let mut out: *mut CfgconfResult = ptr::null_mut();
        let status = unsafe { cfgconf_emit_dot(c.as_ptr(), false, &mut out) };
        assert_eq!(status, CfgconfStatus::Ok);
        let dot = unsafe { CStr::from_ptr(cfgconf_result_output(out)) }.to_str().unwrap();
        assert!(dot.starts_with("digraph"));
        unsafe { cfgconf_result_free(out) };
    }

    #[test]
    fn header_is_generated() {
        let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cfgconf.h");
        let text = std::fs::read_to_string(header).unwrap();
        assert!(text.contains("cfgconf_render_svg"));
        assert!(text.contains("CfgconfStatus"));
    }
}
