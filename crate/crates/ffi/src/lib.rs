// SPDX-License-Identifier: Apache-2.0

//! C ABI over `icnsim`.
//!
//! Topologies and simulations are opaque handles created by `*_new`-style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`IcnsimStatus`]; on failure a description is kept per thread
//! and can be copied out with [`icnsim_last_error`].
//!
//! Variable-length results are copied into caller buffers. Those calls
//! always report the full length through `needed`, so a caller can retry
//! with a larger buffer after [`IcnsimStatus::BufferTooSmall`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use icnsim::cli::gen::generate;
use icnsim::cli::spec::TopologySpec;
use icnsim::fabric::control::Frame;
use icnsim::fid::{fid_matches, BitVector, Fid, LinkId};
use icnsim::protocol::wire::Message;
use icnsim::simnet::world::World;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcnsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidSpec = 3,
    Simulation = 4,
    Decode = 5,
    BufferTooSmall = 6,
    NotFound = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Parsed and validated topology.
pub struct IcnsimSpec {
    spec: TopologySpec,
}

/// A simulated deployment built from an [`IcnsimSpec`].
pub struct IcnsimWorld {
    world: World,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: IcnsimStatus, what: impl ToString) -> IcnsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = what.to_string());
    status
}

fn guard(f: impl FnOnce() -> IcnsimStatus) -> IcnsimStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(IcnsimStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, IcnsimStatus> {
    if s.is_null() {
        return Err(fail(IcnsimStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(IcnsimStatus::InvalidUtf8, e))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize) -> Result<&'a [u8], IcnsimStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(IcnsimStatus::NullPointer, "null buffer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `data` into `buf`, recording its length in `needed`.
unsafe fn copy_out(data: &[u8], buf: *mut u8, cap: usize, needed: *mut usize) -> IcnsimStatus {
    if !needed.is_null() {
        *needed = data.len();
    }
    if data.len() > cap {
        return fail(IcnsimStatus::BufferTooSmall, format!("{} bytes needed", data.len()));
    }
    if !data.is_empty() {
        if buf.is_null() {
            return fail(IcnsimStatus::NullPointer, "null output buffer");
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    }
    IcnsimStatus::Ok
}

/// Like `copy_out` for text, adding a NUL terminator. `needed` excludes it.
unsafe fn copy_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> IcnsimStatus {
    if !needed.is_null() {
        *needed = s.len();
    }
    if buf.is_null() || s.len() + 1 > cap {
        return fail(IcnsimStatus::BufferTooSmall, format!("{} bytes needed", s.len() + 1));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    IcnsimStatus::Ok
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn icnsim_status_str(status: IcnsimStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IcnsimStatus::Ok => c"ok",
        IcnsimStatus::NullPointer => c"null pointer",
        IcnsimStatus::InvalidUtf8 => c"invalid UTF-8",
        IcnsimStatus::InvalidSpec => c"invalid topology",
        IcnsimStatus::Simulation => c"simulation failed",
        IcnsimStatus::Decode => c"undecodable frame",
        IcnsimStatus::BufferTooSmall => c"buffer too small",
        IcnsimStatus::NotFound => c"not found",
        IcnsimStatus::InvalidArgument => c"invalid argument",
        IcnsimStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message.
///
/// # Safety
/// `buf` must be valid for `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn icnsim_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> IcnsimStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_str(&msg, buf, cap, needed)
}

/// Parses a topology from NUL-terminated JSON.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn icnsim_spec_from_json(json: *const c_char, out: *mut *mut IcnsimSpec) -> IcnsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(IcnsimStatus::NullPointer, "null out pointer");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match TopologySpec::from_json(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(IcnsimSpec { spec }));
                IcnsimStatus::Ok
            }
            Err(e) => fail(IcnsimStatus::InvalidSpec, e),
        }
    })
}

/// Generates a random connected topology.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn icnsim_spec_generate(
    switches: usize,
    links: usize,
    hosts: usize,
    seed: u64,
    out: *mut *mut IcnsimSpec,
) -> IcnsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(IcnsimStatus::NullPointer, "null out pointer");
        }
        match generate(switches, links, hosts, seed) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(IcnsimSpec { spec }));
                IcnsimStatus::Ok
            }
            Err(e) => fail(IcnsimStatus::InvalidArgument, e),
        }
    })
}

/// Serializes a topology as JSON.
///
/// # Safety
/// `spec` must come from this library; `buf` must be valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn icnsim_spec_to_json(
    spec: *const IcnsimSpec,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> IcnsimStatus {
    guard(|| match spec.as_ref() {
        Some(s) => copy_str(&s.spec.to_json(), buf, cap, needed),
        None => fail(IcnsimStatus::NullPointer, "null spec"),
    })
}

/// # Safety
/// `spec` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn icnsim_spec_free(spec: *mut IcnsimSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Builds a simulation. `spec` stays owned by the caller.
///
/// # Safety
/// `spec` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_new(spec: *const IcnsimSpec, out: *mut *mut IcnsimWorld) -> IcnsimStatus {
    guard(|| {
        let Some(spec) = spec.as_ref() else {
            return fail(IcnsimStatus::NullPointer, "null spec");
        };
        if out.is_null() {
            return fail(IcnsimStatus::NullPointer, "null out pointer");
        }
        match World::new(&spec.spec) {
            Ok(world) => {
                *out = Box::into_raw(Box::new(IcnsimWorld { world }));
                IcnsimStatus::Ok
            }
            Err(e) => fail(IcnsimStatus::InvalidSpec, e),
        }
    })
}

/// Runs until no events remain and checks that every node bootstrapped.
///
/// # Safety
/// `world` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_run(world: *mut IcnsimWorld) -> IcnsimStatus {
    guard(|| {
        let Some(w) = world.as_mut() else {
            return fail(IcnsimStatus::NullPointer, "null world");
        };
        match w.world.run().and_then(|()| w.world.check_complete()) {
            Ok(()) => IcnsimStatus::Ok,
            Err(e) => fail(IcnsimStatus::Simulation, e),
        }
    })
}

/// Current simulated time in microseconds; 0 for a null handle.
///
/// # Safety
/// `world` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_now_us(world: *const IcnsimWorld) -> u64 {
    world.as_ref().map_or(0, |w| w.world.now())
}

/// Start and end of the span named `label`, e.g. `"host:h1"`.
///
/// # Safety
/// `world` must come from this library, `label` be a C string and the
/// outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_span(
    world: *const IcnsimWorld,
    label: *const c_char,
    start_us: *mut u64,
    end_us: *mut u64,
) -> IcnsimStatus {
    guard(|| {
        let Some(w) = world.as_ref() else {
            return fail(IcnsimStatus::NullPointer, "null world");
        };
        if start_us.is_null() || end_us.is_null() {
            return fail(IcnsimStatus::NullPointer, "null output");
        }
        let label = match str_arg(label) {
            Ok(l) => l,
            Err(s) => return s,
        };
        match w.world.report().span(label) {
            Some(s) => {
                *start_us = s.start_us;
                *end_us = s.end_us;
                IcnsimStatus::Ok
            }
            None => fail(IcnsimStatus::NotFound, format!("no span {label}")),
        }
    })
}

/// The span report as CSV text.
///
/// # Safety
/// `world` must come from this library; `buf` must be valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_report_csv(
    world: *const IcnsimWorld,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> IcnsimStatus {
    guard(|| match world.as_ref() {
        Some(w) => copy_str(&w.world.report().to_csv(), buf, cap, needed),
        None => fail(IcnsimStatus::NullPointer, "null world"),
    })
}

/// # Safety
/// `world` must come from this library and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn icnsim_world_free(world: *mut IcnsimWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Checks that `frame` decodes for filter width `m` and reports its type
/// byte (0x01 to 0x07 for protocol messages, 0x10 to 0x12 for control).
///
/// # Safety
/// `frame` must be valid for `len` bytes and `type_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn icnsim_frame_check(frame: *const u8, len: usize, m: usize, type_out: *mut u8) -> IcnsimStatus {
    guard(|| {
        if type_out.is_null() {
            return fail(IcnsimStatus::NullPointer, "null output");
        }
        let bytes = match bytes_arg(frame, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        match Frame::decode(bytes, m) {
            Ok(Frame::Protocol(msg)) => {
                *type_out = msg.type_code();
                IcnsimStatus::Ok
            }
            Ok(Frame::Control(c)) => {
                *type_out = c.type_code();
                IcnsimStatus::Ok
            }
            Err(e) => fail(IcnsimStatus::Decode, e),
        }
    })
}

/// Encodes a DiscoveryRequest carrying `nonce`.
///
/// # Safety
/// `buf` must be valid for `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn icnsim_encode_discovery_request(
    nonce: u64,
    buf: *mut u8,
    cap: usize,
    needed: *mut usize,
) -> IcnsimStatus {
    // The request has no filter-width dependent field.
    let bytes = Message::DiscoveryRequest { nonce }.encode(8);
    copy_out(&bytes, buf, cap, needed)
}

/// Sets `*result` to whether every bit of `lid` is set in `fid`. Both are
/// `len` bytes, MSB first.
///
/// # Safety
/// `fid` and `lid` must be valid for `len` bytes and `result` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn icnsim_fid_matches(fid: *const u8, lid: *const u8, len: usize, result: *mut bool) -> IcnsimStatus {
    guard(|| {
        if result.is_null() {
            return fail(IcnsimStatus::NullPointer, "null output");
        }
        if len == 0 {
            return fail(IcnsimStatus::InvalidArgument, "zero-length filter");
        }
        let (f, l) = match (bytes_arg(fid, len), bytes_arg(lid, len)) {
            (Ok(f), Ok(l)) => (f, l),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let fid = Fid::from_bits(BitVector::from_bytes(f));
        let lid = LinkId::from_bits(BitVector::from_bytes(l));
        match fid_matches(&fid, &lid) {
            Ok(m) => {
                *result = m;
                IcnsimStatus::Ok
            }
            Err(e) => fail(IcnsimStatus::InvalidArgument, e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_str_terminates_and_reports_length() {
        let mut buf = [1 as c_char; 4];
        let mut needed = 0;
        assert_eq!(unsafe { copy_str("abc", buf.as_mut_ptr(), 4, &mut needed) }, IcnsimStatus::Ok);
        assert_eq!(needed, 3);
        assert_eq!(buf[3], 0);
        assert_eq!(unsafe { copy_str("abcd", buf.as_mut_ptr(), 4, &mut needed) }, IcnsimStatus::BufferTooSmall);
        assert_eq!(needed, 4);
    }

    #[test]
    fn panics_become_a_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, IcnsimStatus::Panic);
    }
}
