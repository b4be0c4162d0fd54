use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::ptr;

use pnis_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pnis_ffi_{}_{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn builtin(name: &str) -> *mut PnisScenario {
    let name = cs(name);
    let mut handle: *mut PnisScenario = ptr::null_mut();
    let st = unsafe { pnis_scenario_builtin(name.as_ptr(), &mut handle) };
    assert_eq!(st, PnisStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn digest_of(handle: *const PnisScenario) -> String {
    let mut buf = [0 as c_char; 65];
    let st = unsafe { pnis_scenario_digest(handle, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(st, PnisStatus::Ok);
    let bytes: Vec<u8> = buf.iter().take_while(|&&b| b != 0).map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { pnis_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(buf.len() - 1)].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn version_is_a_static_string() {
    let p = pnis_version();
    assert!(!p.is_null());
    let v = unsafe { std::ffi::CStr::from_ptr(p) }.to_str().unwrap();
    assert!(!v.is_empty());
}

#[test]
fn builtin_and_file_scenarios_agree() {
    let fromcode = builtin("desk");
    let d1 = digest_of(fromcode);
    assert_eq!(d1.len(), 64);
    assert!(d1.bytes().all(|b| b.is_ascii_hexdigit()));
    assert_eq!(d1, pnis::ScenarioConfig::desk().digest());

    let path = cs(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs/desk.json")
            .to_str()
            .unwrap(),
    );
    let mut fromfile: *mut PnisScenario = ptr::null_mut();
    let st = unsafe { pnis_scenario_load(path.as_ptr(), &mut fromfile) };
    assert_eq!(st, PnisStatus::Ok);
    assert_eq!(digest_of(fromfile), d1);

    unsafe {
        pnis_scenario_free(fromcode);
        pnis_scenario_free(fromfile);
        pnis_scenario_free(ptr::null_mut()); // accepted no-op
    }
}

#[test]
fn invalid_arguments_are_reported() {
    let name = cs("desk");
    let st = unsafe { pnis_scenario_builtin(name.as_ptr(), ptr::null_mut()) };
    assert_eq!(st, PnisStatus::NullArgument);

    let bogus = cs("garage");
    let mut h: *mut PnisScenario = ptr::null_mut();
    let st = unsafe { pnis_scenario_builtin(bogus.as_ptr(), &mut h) };
    assert_eq!(st, PnisStatus::InvalidInput);
    assert!(last_error().contains("garage"));

    let path = cs("/nonexistent/config.json");
    let st = unsafe { pnis_scenario_load(path.as_ptr(), &mut h) };
    assert_eq!(st, PnisStatus::InvalidInput);

    let desk = builtin("desk");
    let mut small = [0 as c_char; 10];
    let st = unsafe { pnis_scenario_digest(desk, small.as_mut_ptr(), small.len()) };
    assert_eq!(st, PnisStatus::BufferTooSmall);

    // Neural receiver without a checkpoint directory.
    let rx = cs("t3former-near");
    let mut ber = 0.0;
    let st = unsafe {
        pnis_ber_point(desk, rx.as_ptr(), 0.0, 1, 1, ptr::null(), &mut ber, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, PnisStatus::NullArgument);
    let empty = scratch("nomodels");
    let empty_c = cs(empty.to_str().unwrap());
    let st = unsafe {
        pnis_ber_point(desk, rx.as_ptr(), 0.0, 1, 1, empty_c.as_ptr(), &mut ber, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, PnisStatus::InvalidInput);
    assert!(last_error().contains("checkpoint"));

    let zf = cs("zf-far");
    let st = unsafe {
        pnis_ber_point(desk, zf.as_ptr(), 0.0, 0, 1, ptr::null(), &mut ber, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, PnisStatus::InvalidInput);

    unsafe { pnis_scenario_free(desk) };
    std::fs::remove_dir_all(empty).ok();
}

#[test]
fn classic_ber_point_runs() {
    let desk = builtin("desk");
    let rx = cs("zf-far");
    let (mut ber, mut bits, mut errors) = (f64::NAN, 0u64, u64::MAX);
    let st = unsafe {
        pnis_ber_point(desk, rx.as_ptr(), 0.0, 5, 7, ptr::null(), &mut ber, &mut bits, &mut errors)
    };
    assert_eq!(st, PnisStatus::Ok);
    // Classic frame: 6 data blocks x 4 streams x 2 bits, 5 frames.
    assert_eq!(bits, 240);
    assert!(errors <= bits);
    assert!((ber - errors as f64 / bits as f64).abs() < 1e-15);
    unsafe { pnis_scenario_free(desk) };
}

#[test]
fn rate_and_goodput_match_frame_layout() {
    let desk = builtin("desk");
    let (mut with_pilots, mut without) = (0.0, 0.0);
    unsafe {
        assert_eq!(pnis_r_max(desk, false, &mut with_pilots), PnisStatus::Ok);
        assert_eq!(pnis_r_max(desk, true, &mut without), PnisStatus::Ok);
    }
    assert!(with_pilots > 0.0);
    assert_eq!(without / with_pilots, 4.0 / 3.0);

    let mut g = 0.0;
    let st = unsafe { pnis_goodput(desk, true, 0.25, &mut g) };
    assert_eq!(st, PnisStatus::Ok);
    assert!((g - 0.75 * without).abs() < 1e-6);

    let st = unsafe { pnis_goodput(desk, true, 1.5, &mut g) };
    assert_eq!(st, PnisStatus::InvalidInput);
    unsafe { pnis_scenario_free(desk) };
}

#[test]
fn sense_recovers_configured_targets() {
    let sc = builtin("desk-sense");
    let dir = scratch("sense");
    let dir_c = cs(dir.to_str().unwrap());
    let (mut targets, mut matched) = (0usize, 0usize);
    let st = unsafe { pnis_sense(sc, 11, dir_c.as_ptr(), &mut targets, &mut matched) };
    assert_eq!(st, PnisStatus::Ok);
    assert_eq!(targets, 2);
    assert_eq!(matched, 2);
    assert!(std::fs::read_dir(&dir).unwrap().count() > 0);
    unsafe { pnis_scenario_free(sc) };
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn selftest_passes_on_desk() {
    let desk = builtin("desk");
    let dir = scratch("selftest");
    let dir_c = cs(dir.to_str().unwrap());
    let mut failed = usize::MAX;
    let st = unsafe { pnis_selftest(desk, 3, dir_c.as_ptr(), &mut failed) };
    assert_eq!(st, PnisStatus::Ok);
    assert_eq!(failed, 0);
    unsafe { pnis_scenario_free(desk) };
    std::fs::remove_dir_all(dir).ok();
}
