//! C interface to the scenario runner.
//!
//! Conventions: opaque handles own their memory and are released through
//! the matching `_free` function; every fallible call returns an
//! [`AdkgSimStatus`] and leaves a human-readable message retrievable via
//! [`adkg_sim_last_error`]; structured results cross the boundary as JSON
//! strings released with [`adkg_sim_string_free`].

use adkg_sim::scenario::{Scenario, ScenarioConfig};
use serde::Serialize;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Outcome of a boundary call. Anything other than `Ok` leaves a message
/// in the thread's last-error slot.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AdkgSimStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Internal = 4,
}

/// A validated experiment description, ready to run seeds.
pub struct AdkgSimScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes stripped");
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn adkg_sim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static version string of the simulator library.
#[no_mangle]
pub extern "C" fn adkg_sim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Reference configuration in TOML with every default spelled out. Free
/// with `adkg_sim_string_free`.
#[no_mangle]
pub extern "C" fn adkg_sim_reference_config() -> *mut c_char {
    CString::new(ScenarioConfig::reference().to_toml())
        .expect("config text has no nul bytes")
        .into_raw()
}

/// Parses and validates a TOML scenario description. On success stores a
/// handle in `out`; free it with `adkg_sim_scenario_free`.
///
/// # Safety
/// `toml` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adkg_sim_scenario_new(
    toml: *const c_char,
    out: *mut *mut AdkgSimScenario,
) -> AdkgSimStatus {
    if toml.is_null() || out.is_null() {
        set_error("null argument");
        return AdkgSimStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let text = match CStr::from_ptr(toml).to_str() {
        Ok(text) => text,
        Err(e) => {
            set_error(&format!("configuration is not UTF-8: {e}"));
            return AdkgSimStatus::InvalidUtf8;
        }
    };
    let scenario = ScenarioConfig::from_toml(text).and_then(|cfg| cfg.resolve());
    match scenario {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(AdkgSimScenario { inner }));
            AdkgSimStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            AdkgSimStatus::InvalidConfig
        }
    }
}

/// Releases a scenario handle. Null is a no-op.
///
/// # Safety
/// `scenario` must be null or a pointer from `adkg_sim_scenario_new` that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn adkg_sim_scenario_free(scenario: *mut AdkgSimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    metrics: &'a adkg_sim::simnet::RunMetrics,
    events: &'a [adkg_sim::simnet::EventRec],
    check: &'a adkg_sim::checks::RunCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [adkg_sim::simnet::TraceRec]>,
}

/// Runs one seed and stores the result as a JSON document
/// `{metrics, events, check[, trace]}` in `out_json`. Free the string with
/// `adkg_sim_string_free`. Property violations do not fail the call; they
/// are listed under `check.violations`.
///
/// # Safety
/// `scenario` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adkg_sim_scenario_run_json(
    scenario: *const AdkgSimScenario,
    seed: u64,
    trace: bool,
    out_json: *mut *mut c_char,
) -> AdkgSimStatus {
    if scenario.is_null() || out_json.is_null() {
        set_error("null argument");
        return AdkgSimStatus::NullArgument;
    }
    *out_json = ptr::null_mut();
    let inner = &(*scenario).inner;
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let (log, check) = inner.run(seed, trace);
        let report = RunReport {
            metrics: &log.metrics,
            events: &log.events,
            check: &check,
            trace: trace.then_some(log.trace.as_slice()),
        };
        serde_json::to_string(&report).expect("report serializes")
    }));
    match outcome {
        Ok(json) => {
            *out_json = CString::new(json)
                .expect("JSON has no nul bytes")
                .into_raw();
            AdkgSimStatus::Ok
        }
        Err(_) => {
            set_error("internal panic while running the scenario");
            AdkgSimStatus::Internal
        }
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or an unfreed string pointer from this library.
#[no_mangle]
pub unsafe extern "C" fn adkg_sim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new_scenario(toml: &str) -> (AdkgSimStatus, *mut AdkgSimScenario) {
        let text = CString::new(toml).unwrap();
        let mut handle: *mut AdkgSimScenario = ptr::null_mut();
        let status = unsafe { adkg_sim_scenario_new(text.as_ptr(), &mut handle) };
        (status, handle)
    }

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(adkg_sim_last_error())
                .to_string_lossy()
                .into_owned()
        }
    }

    #[test]
    fn reference_config_builds_a_scenario() {
        let text = adkg_sim_reference_config();
        let toml = unsafe { CStr::from_ptr(text).to_str().unwrap().to_owned() };
        unsafe { adkg_sim_string_free(text) };
        let (status, handle) = new_scenario(&toml);
        assert_eq!(status, AdkgSimStatus::Ok);
        unsafe { adkg_sim_scenario_free(handle) };
    }

    #[test]
    fn run_reports_json_and_replays_identically() {
        let (status, handle) = new_scenario("protocol = \"pe\"\nn = 4\n");
        assert_eq!(status, AdkgSimStatus::Ok);
        let mut first: *mut c_char = ptr::null_mut();
        let mut second: *mut c_char = ptr::null_mut();
        unsafe {
            assert_eq!(
                adkg_sim_scenario_run_json(handle, 11, true, &mut first),
                AdkgSimStatus::Ok
            );
            assert_eq!(
                adkg_sim_scenario_run_json(handle, 11, true, &mut second),
                AdkgSimStatus::Ok
            );
            let a = CStr::from_ptr(first).to_str().unwrap().to_owned();
            let b = CStr::from_ptr(second).to_str().unwrap().to_owned();
            adkg_sim_string_free(first);
            adkg_sim_string_free(second);
            adkg_sim_scenario_free(handle);
            assert_eq!(a, b, "replay must be byte-identical");
            let report: serde_json::Value = serde_json::from_str(&a).unwrap();
            assert_eq!(report["metrics"]["seed"], 11);
            assert_eq!(report["check"]["violations"].as_array().unwrap().len(), 0);
            assert!(!report["trace"].as_array().unwrap().is_empty());
        }
    }

    #[test]
    fn errors_carry_codes_and_messages() {
        let (status, handle) = new_scenario("protocol = \"nwh\"\nn = 6\nf = 2\n");
        assert_eq!(status, AdkgSimStatus::InvalidConfig);
        assert!(handle.is_null());
        assert!(last_error().contains("faults"));

        let (status, _) = new_scenario("not toml [");
        assert_eq!(status, AdkgSimStatus::InvalidConfig);
        assert!(last_error().contains("TOML"));

        let mut handle: *mut AdkgSimScenario = ptr::null_mut();
        let status = unsafe { adkg_sim_scenario_new(ptr::null(), &mut handle) };
        assert_eq!(status, AdkgSimStatus::NullArgument);

        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { adkg_sim_scenario_run_json(ptr::null(), 0, false, &mut out) };
        assert_eq!(status, AdkgSimStatus::NullArgument);

        unsafe {
            adkg_sim_scenario_free(ptr::null_mut());
            adkg_sim_string_free(ptr::null_mut());
        }
    }
}
