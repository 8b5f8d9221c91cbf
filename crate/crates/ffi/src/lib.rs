//! C ABI over the `corridors` library.
//!
//! Every fallible call returns a [`DwStatus`]. On failure the message is kept
//! per thread and can be read with [`dw_last_error`]. Objects cross the
//! boundary as opaque handles, each with its own `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use corridors::arrows::ArrowField;
use corridors::cli::{self, CliError};
use corridors::config::RunConfig;
use corridors::flow::{integrate, Trajectory, VectorField};
use corridors::Vec2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad config, parameters, or a field that has not been built.
    InvalidInput = 3,
    /// Numerical or i/o failure inside the library.
    Internal = 4,
    /// The caller's buffer is too short; the required length is reported.
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DwVec2 {
    pub x: f64,
    pub y: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DwSite {
    pub i: i64,
    pub j: i64,
}

/// Plane field (Ψ, or Φ with the warp enabled) plus the config it came from.
pub struct DwField {
    cfg: RunConfig,
    arrows: ArrowField,
    plane: Box<dyn VectorField>,
}

pub struct DwTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: DwStatus, msg: impl Into<String>) -> DwStatus {
    set_error(msg);
    status
}

impl From<CliError> for DwStatus {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::User(_) => DwStatus::InvalidInput,
            CliError::Internal(_) => DwStatus::Internal,
        };
        fail(status, e.to_string())
    }
}

impl From<corridors::Error> for DwStatus {
    fn from(e: corridors::Error) -> Self {
        CliError::from(e).into()
    }
}

/// Runs `f`, mapping a panic to [`DwStatus::Panic`].
fn guarded(f: impl FnOnce() -> Result<(), DwStatus>) -> DwStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DwStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DwStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DwStatus> {
    if p.is_null() {
        return Err(fail(DwStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DwStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, DwStatus> {
    p.as_ref()
        .ok_or_else(|| fail(DwStatus::NullPointer, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), DwStatus> {
    if p.is_null() {
        Err(fail(DwStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn parse_config(text: &str) -> Result<RunConfig, DwStatus> {
    let cfg = RunConfig::from_toml(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next `dw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the cached tile grid for `config_toml` under its output directory.
/// An existing matching field is reused unless `force` is set.
#[no_mangle]
pub unsafe extern "C" fn dw_build_field(config_toml: *const c_char, force: bool) -> DwStatus {
    guarded(|| {
        let cfg = parse_config(str_arg(config_toml, "config_toml")?)?;
        cli::build_field(&cfg, force)?;
        Ok(())
    })
}

/// Opens the plane field described by `config_toml`. Unless `grid.exact` is
/// set, the field must already be built with [`dw_build_field`].
#[no_mangle]
pub unsafe extern "C" fn dw_field_open(config_toml: *const c_char, out: *mut *mut DwField) -> DwStatus {
    guarded(|| {
        out_arg(out, "out")?;
        let cfg = parse_config(str_arg(config_toml, "config_toml")?)?;
        let arrows = cli::arrow_field(&cfg)?;
        let tile = cli::load_tile(&cfg)?;
        let plane = cli::plane_field(&cfg, tile)?;
        *out = Box::into_raw(Box::new(DwField { cfg, arrows, plane }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dw_field_free(field: *mut DwField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

#[no_mangle]
pub unsafe extern "C" fn dw_field_eval(field: *const DwField, x: f64, y: f64, out: *mut DwVec2) -> DwStatus {
    guarded(|| {
        let f = ref_arg(field, "field")?;
        out_arg(out, "out")?;
        let v = f.plane.eval(Vec2::new(x, y))?;
        *out = DwVec2 { x: v.x, y: v.y };
        Ok(())
    })
}

/// Arrow at site (i, j): 0 for right, 1 for up.
#[no_mangle]
pub unsafe extern "C" fn dw_field_arrow(field: *const DwField, i: i64, j: i64, out: *mut u8) -> DwStatus {
    guarded(|| {
        let f = ref_arg(field, "field")?;
        out_arg(out, "out")?;
        *out = match f.arrows.arrow_at(i, j) {
            corridors::arrows::Arrow::Right => 0,
            corridors::arrows::Arrow::Up => 1,
        };
        Ok(())
    })
}

/// Follows the arrows for `steps` steps from (i, j) and writes the
/// `steps + 1` visited sites into `sites`. `len` receives the number of sites;
/// when `cap` is too small nothing is written and the status says so.
#[no_mangle]
pub unsafe extern "C" fn dw_walk(
    field: *const DwField,
    i: i64,
    j: i64,
    steps: usize,
    sites: *mut DwSite,
    cap: usize,
    len: *mut usize,
) -> DwStatus {
    guarded(|| {
        let f = ref_arg(field, "field")?;
        out_arg(len, "len")?;
        let need = steps
            .checked_add(1)
            .ok_or_else(|| fail(DwStatus::InvalidInput, "steps overflows"))?;
        *len = need;
        if cap < need {
            return Err(fail(
                DwStatus::BufferTooSmall,
                format!("walk needs {need} sites, buffer holds {cap}"),
            ));
        }
        out_arg(sites, "sites")?;
        let walk = f.arrows.walk((i, j), steps);
        let dst = std::slice::from_raw_parts_mut(sites, need);
        for (d, &(a, b)) in dst.iter_mut().zip(&walk.positions) {
            *d = DwSite { i: a, j: b };
        }
        Ok(())
    })
}

/// Integrates the field from (x, y) with the integrator settings of the
/// config the field was opened with.
#[no_mangle]
pub unsafe extern "C" fn dw_integrate(field: *const DwField, x: f64, y: f64, out: *mut *mut DwTrajectory) -> DwStatus {
    guarded(|| {
        let f = ref_arg(field, "field")?;
        out_arg(out, "out")?;
        let inner = integrate(&*f.plane, Vec2::new(x, y), &f.cfg.integrator)?;
        *out = Box::into_raw(Box::new(DwTrajectory { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dw_trajectory_free(traj: *mut DwTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of stored samples, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dw_trajectory_len(traj: *const DwTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.times.len())
}

/// Number of lattice-line crossings, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dw_trajectory_event_count(traj: *const DwTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.events.len())
}

/// Copies the samples into `times` and `points`, each holding `cap` entries.
/// Either buffer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn dw_trajectory_copy(
    traj: *const DwTrajectory,
    times: *mut f64,
    points: *mut DwVec2,
    cap: usize,
) -> DwStatus {
    guarded(|| {
        let t = &ref_arg(traj, "traj")?.inner;
        let n = t.times.len();
        if cap < n {
            return Err(fail(
                DwStatus::BufferTooSmall,
                format!("trajectory has {n} samples, buffer holds {cap}"),
            ));
        }
        if !times.is_null() {
            std::slice::from_raw_parts_mut(times, n).copy_from_slice(&t.times);
        }
        if !points.is_null() {
            let dst = std::slice::from_raw_parts_mut(points, n);
            for (d, p) in dst.iter_mut().zip(&t.points) {
                *d = DwVec2 { x: p.x, y: p.y };
            }
        }
        Ok(())
    })
}

/// Cells entered at each crossing, in order.
#[no_mangle]
pub unsafe extern "C" fn dw_trajectory_copy_cells(
    traj: *const DwTrajectory,
    cells: *mut DwSite,
    cap: usize,
) -> DwStatus {
    guarded(|| {
        let t = &ref_arg(traj, "traj")?.inner;
        let n = t.events.len();
        if cap < n {
            return Err(fail(
                DwStatus::BufferTooSmall,
                format!("trajectory has {n} crossings, buffer holds {cap}"),
            ));
        }
        if n > 0 {
            out_arg(cells, "cells")?;
            let dst = std::slice::from_raw_parts_mut(cells, n);
            for (d, e) in dst.iter_mut().zip(&t.events) {
                *d = DwSite {
                    i: e.cell.0,
                    j: e.cell.1,
                };
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_statuses() {
        assert_eq!(DwStatus::from(CliError::User("u".into())), DwStatus::InvalidInput);
        assert_eq!(DwStatus::from(CliError::Internal("i".into())), DwStatus::Internal);
        let e = corridors::Error::NonFinite {
            time: 1.0,
            last: Vec2::ZERO,
        };
        assert_eq!(DwStatus::from(e), DwStatus::Internal);
    }

    #[test]
    fn panics_are_caught_and_reported() {
        let st = guarded(|| panic!("boom"));
        assert_eq!(st, DwStatus::Panic);
        let msg = unsafe { CStr::from_ptr(dw_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
    }

    #[test]
    fn interior_nul_is_dropped_from_messages() {
        set_error("a\0b");
        let msg = unsafe { CStr::from_ptr(dw_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "ab");
    }
}
