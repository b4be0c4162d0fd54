//! C interface to the pnis simulator.
//!
//! Conventions: every entry point returns a [`PnisStatus`]; results travel
//! through out-pointers. Scenario handles are opaque and owned by the caller
//! until passed to [`pnis_scenario_free`]. On any non-`OK` status a
//! human-readable message is retrievable with [`pnis_last_error`]. No call
//! unwinds across the boundary; internal panics surface as
//! `PNIS_STATUS_RUNTIME_FAILURE`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use pnis::config::ScenarioConfig;
use pnis::harness::eval::{
    eval_ber_sweep, load_models, r_max_bps, goodput_bps, NeuralModels, Receiver,
};
use pnis::harness::selftest::run_selftest;
use pnis::harness::sense::run_sense;
use pnis::harness::HarnessError;

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnisStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Arguments or configuration were rejected before any work ran.
    InvalidInput = 2,
    /// The operation started but failed (I/O, divergence, internal panic).
    RuntimeFailure = 3,
    /// A caller-provided buffer is too small for the result.
    BufferTooSmall = 4,
}

/// Opaque scenario handle wrapping a validated configuration.
pub struct PnisScenario {
    cfg: ScenarioConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: PnisStatus, msg: impl Into<String>) -> PnisStatus {
    set_error(msg);
    status
}

fn harness_status(e: &HarnessError) -> PnisStatus {
    use HarnessError::*;
    match e {
        Config(_) | Domain(_) | Format(_) | DigestMismatch { .. } => PnisStatus::InvalidInput,
        _ => PnisStatus::RuntimeFailure,
    }
}

/// Runs `body` with panics converted to `RuntimeFailure`.
fn guarded(body: impl FnOnce() -> PnisStatus) -> PnisStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => fail(PnisStatus::RuntimeFailure, "internal panic"),
    }
}

/// `str` view of a required C string argument.
///
/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, PnisStatus> {
    if ptr.is_null() {
        return Err(fail(PnisStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(PnisStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

/// Copies `s` plus a NUL terminator into `buf`.
unsafe fn write_str(buf: *mut c_char, cap: usize, s: &str) -> PnisStatus {
    if buf.is_null() {
        return fail(PnisStatus::NullArgument, "output buffer is null");
    }
    if cap < s.len() + 1 {
        return fail(
            PnisStatus::BufferTooSmall,
            format!("need {} bytes, caller provided {cap}", s.len() + 1),
        );
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    PnisStatus::Ok
}

unsafe fn scenario_ref<'a>(p: *const PnisScenario) -> Result<&'a ScenarioConfig, PnisStatus> {
    if p.is_null() {
        return Err(fail(PnisStatus::NullArgument, "scenario handle is null"));
    }
    Ok(&(*p).cfg)
}

fn boxed(cfg: ScenarioConfig, out: *mut *mut PnisScenario) -> PnisStatus {
    let handle = Box::new(PnisScenario { cfg });
    unsafe { *out = Box::into_raw(handle) };
    PnisStatus::Ok
}

/// Library version as a static NUL-terminated string. Never null.
#[no_mangle]
pub extern "C" fn pnis_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the most recent error message for this thread into `buf`
/// (truncating if needed) and returns the full message length in bytes,
/// excluding the NUL terminator. A zero return means no error is recorded.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn pnis_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads and validates a scenario configuration from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the handle until `pnis_scenario_free`.
#[no_mangle]
pub unsafe extern "C" fn pnis_scenario_load(
    path: *const c_char,
    out: *mut *mut PnisScenario,
) -> PnisStatus {
    guarded(|| {
        if out.is_null() {
            return fail(PnisStatus::NullArgument, "out is null");
        }
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match ScenarioConfig::from_path(Path::new(path)) {
            Ok(cfg) => boxed(cfg, out),
            Err(e) => fail(PnisStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Builds one of the named built-in scenarios: "desk", "desk-sense",
/// or "table1".
///
/// # Safety
/// `name` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the handle until `pnis_scenario_free`.
#[no_mangle]
pub unsafe extern "C" fn pnis_scenario_builtin(
    name: *const c_char,
    out: *mut *mut PnisScenario,
) -> PnisStatus {
    guarded(|| {
        if out.is_null() {
            return fail(PnisStatus::NullArgument, "out is null");
        }
        let name = match required_str(name, "name") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let cfg = match name {
            "desk" => ScenarioConfig::desk(),
            "desk-sense" => ScenarioConfig::desk_sense(),
            "table1" => ScenarioConfig::table1(),
            other => {
                return fail(
                    PnisStatus::InvalidInput,
                    format!("unknown builtin scenario \"{other}\""),
                )
            }
        };
        boxed(cfg, out)
    })
}

/// Releases a scenario handle. Null is accepted and ignored.
///
/// # Safety
/// `p` must be null or a pointer previously returned by a scenario
/// constructor and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnis_scenario_free(p: *mut PnisScenario) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes the scenario's configuration digest (64 hex characters) into
/// `buf` as a NUL-terminated string. `cap` must be at least 65.
///
/// # Safety
/// `p` must be a live scenario handle; `buf` must point to `cap` writable
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn pnis_scenario_digest(
    p: *const PnisScenario,
    buf: *mut c_char,
    cap: usize,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        write_str(buf, cap, &cfg.digest())
    })
}

/// Simulates one BER point for `receiver` ("zf-far", "sic-near",
/// "t3former-far", "t3former-near") at downlink noise figure `nf_db` over
/// `frames` frames. Neural receivers need `models_dir` pointing at a
/// directory with their checkpoints; classic receivers ignore it (null is
/// fine). Any of the result pointers may be null to skip that output.
///
/// # Safety
/// `p` must be a live scenario handle; `receiver` must be a valid
/// NUL-terminated string; `models_dir` must be null or a valid
/// NUL-terminated string; non-null result pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnis_ber_point(
    p: *const PnisScenario,
    receiver: *const c_char,
    nf_db: f64,
    frames: usize,
    seed: u64,
    models_dir: *const c_char,
    out_ber: *mut f64,
    out_bits: *mut u64,
    out_errors: *mut u64,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        let name = match required_str(receiver, "receiver") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let r = match Receiver::parse(name) {
            Ok(r) => r,
            Err(e) => return fail(PnisStatus::InvalidInput, e.to_string()),
        };
        if frames == 0 {
            return fail(PnisStatus::InvalidInput, "frames must be positive");
        }
        let models = if r.pilot_free() {
            let dir = match required_str(models_dir, "models_dir") {
                Ok(s) => s,
                Err(st) => return st,
            };
            load_models(Path::new(dir), cfg)
        } else {
            NeuralModels::default()
        };
        if r.pilot_free() && models.for_user(r.user()).is_none() {
            return fail(
                PnisStatus::InvalidInput,
                format!("no usable checkpoint for {name} in models_dir"),
            );
        }
        let rows = match eval_ber_sweep(cfg, &[r], &[nf_db], frames, seed, &models) {
            Ok(rows) => rows,
            Err(e) => return fail(harness_status(&e), e.to_string()),
        };
        let Some(row) = rows.first() else {
            return fail(PnisStatus::RuntimeFailure, "sweep produced no rows");
        };
        if !out_ber.is_null() {
            *out_ber = row.ber;
        }
        if !out_bits.is_null() {
            *out_bits = row.bits;
        }
        if !out_errors.is_null() {
            *out_errors = row.errors;
        }
        PnisStatus::Ok
    })
}

/// Peak data rate in bit/s for the scenario's frame layout, with
/// (`pilot_free == false`) or without pilot overhead.
///
/// # Safety
/// `p` must be a live scenario handle; `out_bps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnis_r_max(
    p: *const PnisScenario,
    pilot_free: bool,
    out_bps: *mut f64,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        if out_bps.is_null() {
            return fail(PnisStatus::NullArgument, "out_bps is null");
        }
        *out_bps = r_max_bps(cfg, pilot_free);
        PnisStatus::Ok
    })
}

/// Goodput in bit/s at bit error rate `ber` (must lie in [0, 1]).
///
/// # Safety
/// `p` must be a live scenario handle; `out_bps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnis_goodput(
    p: *const PnisScenario,
    pilot_free: bool,
    ber: f64,
    out_bps: *mut f64,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        if out_bps.is_null() {
            return fail(PnisStatus::NullArgument, "out_bps is null");
        }
        match goodput_bps(ber, cfg, pilot_free) {
            Ok(v) => {
                *out_bps = v;
                PnisStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Runs the radar chain on one data-modulated frame and writes map
/// artifacts into `out_dir`. `out_targets` receives the number of
/// configured targets, `out_matched` how many of them were recovered with
/// range, angle, and Doppler each within one grid cell and the correct
/// Doppler sign. Either out-pointer may be null.
///
/// # Safety
/// `p` must be a live scenario handle; `out_dir` must be a valid
/// NUL-terminated string; non-null result pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnis_sense(
    p: *const PnisScenario,
    seed: u64,
    out_dir: *const c_char,
    out_targets: *mut usize,
    out_matched: *mut usize,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        let dir = match required_str(out_dir, "out_dir") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match run_sense(cfg, seed, &PathBuf::from(dir)) {
            Ok(art) => {
                let rep = &art.report;
                if !out_targets.is_null() {
                    *out_targets = rep.targets.len();
                }
                if !out_matched.is_null() {
                    *out_matched = rep
                        .matches
                        .iter()
                        .filter(|m| {
                            m.range_bin_err.abs() <= 1
                                && m.angle_step_err.abs() <= 1
                                && m.doppler_bin_err.abs() <= 1
                                && m.doppler_sign_ok
                        })
                        .count();
                }
                PnisStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Runs the invariant suite against the scenario using `scratch_dir` for
/// temporary files. `out_failed` (nullable) receives the number of failed
/// checks; the status is `OK` even when checks fail, so callers can
/// distinguish "suite ran, found problems" from "suite could not run".
///
/// # Safety
/// `p` must be a live scenario handle; `scratch_dir` must be a valid
/// NUL-terminated string; `out_failed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pnis_selftest(
    p: *const PnisScenario,
    seed: u64,
    scratch_dir: *const c_char,
    out_failed: *mut usize,
) -> PnisStatus {
    guarded(|| {
        let cfg = match scenario_ref(p) {
            Ok(c) => c,
            Err(st) => return st,
        };
        let dir = match required_str(scratch_dir, "scratch_dir") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match run_selftest(cfg, seed, &PathBuf::from(dir)) {
            Ok(results) => {
                let failed = results.iter().filter(|r| !r.ok).count();
                if failed > 0 {
                    let names: Vec<&str> = results
                        .iter()
                        .filter(|r| !r.ok)
                        .map(|r| r.name)
                        .collect();
                    set_error(format!("failed checks: {}", names.join(", ")));
                }
                if !out_failed.is_null() {
                    *out_failed = failed;
                }
                PnisStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}
