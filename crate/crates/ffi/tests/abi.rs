// SPDX-License-Identifier: Apache-2.0

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use icnsim_ffi::*;

const MINIMAL: &str = r#"{
  "nodes": [
    {"name": "tm", "kind": "tm"},
    {"name": "s1", "kind": "switch"},
    {"name": "h1", "kind": "host"}
  ],
  "links": [{"a": "tm", "b": "s1"}, {"a": "s1", "b": "h1"}]
}"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let status = unsafe { icnsim_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(status, IcnsimStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn spec(json: &str) -> Result<*mut IcnsimSpec, IcnsimStatus> {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    match unsafe { icnsim_spec_from_json(text.as_ptr(), &mut out) } {
        IcnsimStatus::Ok => Ok(out),
        s => Err(s),
    }
}

fn read_csv(world: *const IcnsimWorld) -> String {
    let mut needed = 0;
    let status = unsafe { icnsim_world_report_csv(world, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, IcnsimStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed + 1];
    let status = unsafe { icnsim_world_report_csv(world, buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(status, IcnsimStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

#[test]
fn run_minimal_topology() {
    let s = spec(MINIMAL).unwrap();
    let mut w = ptr::null_mut();
    unsafe {
        assert_eq!(icnsim_world_new(s, &mut w), IcnsimStatus::Ok);
        assert_eq!(icnsim_world_run(w), IcnsimStatus::Ok);
        assert!(icnsim_world_now_us(w) > 0);
        let (mut start, mut end) = (0u64, 0u64);
        let label = CString::new("host:h1").unwrap();
        assert_eq!(icnsim_world_span(w, label.as_ptr(), &mut start, &mut end), IcnsimStatus::Ok);
        assert!(end > start);
        let missing = CString::new("host:nope").unwrap();
        assert_eq!(icnsim_world_span(w, missing.as_ptr(), &mut start, &mut end), IcnsimStatus::NotFound);
    }
    let csv = read_csv(w);
    assert!(csv.starts_with("label,start_us,end_us,duration_us\nswitch:s1,"));
    unsafe {
        icnsim_world_free(w);
        icnsim_spec_free(s);
    }
}

#[test]
fn invalid_topology_reports_the_field() {
    let bad = MINIMAL.replace(r#""kind": "switch""#, r#""kind": "tm""#);
    assert_eq!(spec(&bad), Err(IcnsimStatus::InvalidSpec));
    assert!(last_error().contains("nodes"), "{}", last_error());
    assert_eq!(spec("{"), Err(IcnsimStatus::InvalidSpec));
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(icnsim_spec_from_json(ptr::null(), &mut out), IcnsimStatus::NullPointer);
        assert_eq!(icnsim_world_new(ptr::null(), ptr::null_mut()), IcnsimStatus::NullPointer);
        assert_eq!(icnsim_world_run(ptr::null_mut()), IcnsimStatus::NullPointer);
        assert_eq!(icnsim_world_now_us(ptr::null()), 0);
        icnsim_world_free(ptr::null_mut());
        icnsim_spec_free(ptr::null_mut());
    }
}

#[test]
fn generated_spec_round_trips_through_json() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(icnsim_spec_generate(5, 7, 2, 9, &mut s), IcnsimStatus::Ok);
        let mut needed = 0;
        icnsim_spec_to_json(s, ptr::null_mut(), 0, &mut needed);
        let mut buf = vec![0 as c_char; needed + 1];
        assert_eq!(icnsim_spec_to_json(s, buf.as_mut_ptr(), buf.len(), &mut needed), IcnsimStatus::Ok);
        let json = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        let again = spec(json).unwrap();
        icnsim_spec_free(again);
        icnsim_spec_free(s);
        assert_eq!(icnsim_spec_generate(5, 11, 0, 1, &mut s), IcnsimStatus::InvalidArgument);
    }
}

#[test]
fn codec_helpers() {
    let mut buf = [0u8; 16];
    let mut n = 0;
    let mut ty = 0u8;
    unsafe {
        assert_eq!(icnsim_encode_discovery_request(0x0102030405060708, buf.as_mut_ptr(), 4, &mut n), IcnsimStatus::BufferTooSmall);
        assert_eq!(n, 12);
        assert_eq!(icnsim_encode_discovery_request(0x0102030405060708, buf.as_mut_ptr(), buf.len(), &mut n), IcnsimStatus::Ok);
        assert_eq!(&buf[..n], &[0x01, 0x01, 0x00, 0x08, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(icnsim_frame_check(buf.as_ptr(), n, 256, &mut ty), IcnsimStatus::Ok);
        assert_eq!(ty, 0x01);
        assert_eq!(icnsim_frame_check(buf.as_ptr(), n - 1, 256, &mut ty), IcnsimStatus::Decode);
    }
    let fid = [0b1110_0000u8, 0x01];
    let mut hit = false;
    unsafe {
        assert_eq!(icnsim_fid_matches(fid.as_ptr(), [0b0110_0000u8, 0x01].as_ptr(), 2, &mut hit), IcnsimStatus::Ok);
        assert!(hit);
        assert_eq!(icnsim_fid_matches(fid.as_ptr(), [0b0001_0000u8, 0].as_ptr(), 2, &mut hit), IcnsimStatus::Ok);
        assert!(!hit);
    }
}

#[test]
fn status_strings_are_static() {
    let s = unsafe { CStr::from_ptr(icnsim_status_str(IcnsimStatus::BufferTooSmall)) };
    assert_eq!(s.to_str().unwrap(), "buffer too small");
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/icnsim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["icnsim_spec_from_json", "icnsim_world_run", "icnsim_frame_check", "ICNSIM_STATUS_BUFFER_TOO_SMALL"] {
        assert!(text.contains(f), "{f} missing from the header");
    }
    let Ok(out) = Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler found; skipping the compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
