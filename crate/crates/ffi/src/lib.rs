//! C interface to the adnet library.
//!
//! Every function returns an `AdnetStatus`. On failure the message is kept
//! per thread and can be copied out with `adnet_last_error`. Grids are
//! passed as one byte per cell (0 or 1) in linear-index order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adnet::eval::{confusion, metrics};
use adnet::grid::{GridSpec, GridVector, ObjectCategory};
use adnet::ingest::{GpsFeature, Sample, GPS_LEN};
use adnet::nn::{Checkpoint, Network};
use adnet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Config = 6,
    Numeric = 7,
    Validation = 8,
    Panic = 9,
}

/// Opaque trained model. Create with `adnet_network_load`, release with
/// `adnet_network_free`.
pub struct AdnetNetwork {
    net: Network,
    spec: GridSpec,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdnetMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nonzero when precision and recall are both zero and f1 is reported as 0.
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn status_of(e: &Error) -> AdnetStatus {
    match e {
        Error::Io { .. } => AdnetStatus::Io,
        Error::Format(_) | Error::Parse { .. } => AdnetStatus::Format,
        Error::Shape(_) | Error::Bounds { .. } => AdnetStatus::Shape,
        Error::Numeric(_) => AdnetStatus::Numeric,
        Error::Validation { .. } | Error::Ordering { .. } => AdnetStatus::Validation,
        Error::Argument(_) => AdnetStatus::InvalidArgument,
        _ => AdnetStatus::Config,
    }
}

fn fail(status: AdnetStatus, message: String) -> AdnetStatus {
    LAST_ERROR.with(|m| *m.borrow_mut() = message);
    status
}

fn guard(f: impl FnOnce() -> Result<(), AdnetStatus>) -> AdnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|m| m.borrow_mut().clear());
            AdnetStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(AdnetStatus::Panic, "internal panic".into()),
    }
}

fn lift<T>(r: adnet::Result<T>) -> Result<T, AdnetStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), AdnetStatus> {
    if p.is_null() {
        Err(fail(AdnetStatus::NullPointer, format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

/// Grid shape for a model: the stored one when the checkpoint records it,
/// else a single column of `len / categories` rows.
fn spec_for(ck: &Checkpoint, grid_len: usize) -> adnet::Result<GridSpec> {
    if ck.header.contains_key("grid.rows") {
        return GridSpec::new(
            ck.parse("grid.rows")?,
            ck.parse("grid.cols")?,
            ck.parse("grid.frame_width_px")?,
            ck.parse("grid.frame_height_px")?,
        );
    }
    flat_spec(grid_len)
}

fn flat_spec(len: usize) -> adnet::Result<GridSpec> {
    if len == 0 || !len.is_multiple_of(ObjectCategory::COUNT) {
        return Err(Error::shape(format!(
            "grid length {len} is not a positive multiple of {}",
            ObjectCategory::COUNT
        )));
    }
    GridSpec::new(len / ObjectCategory::COUNT, 1, 1, 1)
}

unsafe fn grid_from_raw(spec: GridSpec, bits: *const u8, len: usize) -> Result<GridVector, AdnetStatus> {
    non_null(bits, "grid")?;
    if len != spec.len() {
        return Err(fail(
            AdnetStatus::Shape,
            format!("grid has {len} cells, model expects {}", spec.len()),
        ));
    }
    let bits = std::slice::from_raw_parts(bits, len).to_vec();
    lift(GridVector::from_bits(spec, bits))
}

unsafe fn gps_from_raw(gps: *const f64) -> GpsFeature {
    if gps.is_null() {
        GpsFeature::default()
    } else {
        let mut values = [0.0; GPS_LEN];
        values.copy_from_slice(std::slice::from_raw_parts(gps, GPS_LEN));
        GpsFeature { values }
    }
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn adnet_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|m| {
        let m = m.borrow();
        if !buf.is_null() && len > 0 {
            let n = m.len().min(len - 1);
            std::ptr::copy_nonoverlapping(m.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        m.len()
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn adnet_network_load(path: *const c_char, out: *mut *mut AdnetNetwork) -> AdnetStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(AdnetStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ck = lift(Checkpoint::load(Path::new(path)))?;
        let net = lift(Network::from_checkpoint(&ck))?;
        let spec = lift(spec_for(&ck, net.config().grid_len))?;
        if spec.len() != net.config().grid_len {
            return Err(fail(
                AdnetStatus::Shape,
                "checkpoint grid shape disagrees with its model".into(),
            ));
        }
        *out = Box::into_raw(Box::new(AdnetNetwork { net, spec }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `net` must come from `adnet_network_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adnet_network_free(net: *mut AdnetNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adnet_network_grid_len(net: *const AdnetNetwork, out: *mut usize) -> AdnetStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        *out = (*net).spec.len();
        Ok(())
    })
}

/// Whether the model consumes the GPS feature.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adnet_network_uses_gps(net: *const AdnetNetwork, out: *mut bool) -> AdnetStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        *out = (*net).net.config().use_gps;
        Ok(())
    })
}

/// Writes per-cell reconstruction probabilities into `out` (`len` values).
/// `gps` is null or three normalized values (lat, lon, alt); null means zeros.
///
/// # Safety
/// `grid` and `out` must hold `len` elements; `gps` must be null or hold 3.
#[no_mangle]
pub unsafe extern "C" fn adnet_network_reconstruct(
    net: *const AdnetNetwork,
    grid: *const u8,
    len: usize,
    gps: *const f64,
    out: *mut f64,
) -> AdnetStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(out, "out")?;
        let h = &*net;
        let g = grid_from_raw(h.spec, grid, len)?;
        let probs = lift(adnet::detect::reconstruct(&h.net, &g, &gps_from_raw(gps)))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&probs);
        Ok(())
    })
}

/// Runs detection on one scene. `m_grid` and `flags` receive `len` bytes:
/// the binarized reconstruction and the anomalous-cell mask. `flags` and
/// `scene_anomalous` may be null.
///
/// # Safety
/// Non-null buffers must hold `len` elements; `gps` must be null or hold 3.
#[no_mangle]
pub unsafe extern "C" fn adnet_detect(
    net: *const AdnetNetwork,
    grid: *const u8,
    len: usize,
    gps: *const f64,
    threshold: f64,
    m_grid: *mut u8,
    flags: *mut u8,
    scene_anomalous: *mut bool,
) -> AdnetStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(m_grid, "m_grid")?;
        let h = &*net;
        let sample = Sample {
            grid: grid_from_raw(h.spec, grid, len)?,
            gps: gps_from_raw(gps),
            source_frame: String::new(),
        };
        let report = lift(adnet::detect::detect(&h.net, &sample, threshold))?;
        std::slice::from_raw_parts_mut(m_grid, len).copy_from_slice(report.m_grid.bits());
        if !flags.is_null() {
            let flags = std::slice::from_raw_parts_mut(flags, len);
            flags.fill(0);
            for c in &report.anomalous_cells {
                flags[lift(h.spec.linear_index(c))?] = 1;
            }
        }
        if !scene_anomalous.is_null() {
            *scene_anomalous = report.scene_anomalous;
        }
        Ok(())
    })
}

/// Confusion counts and precision, recall and F1 of `model_out` against
/// `ground`. `len` must be a positive multiple of 8.
///
/// # Safety
/// `ground` and `model_out` must hold `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adnet_metrics(
    ground: *const u8,
    model_out: *const u8,
    len: usize,
    out: *mut AdnetMetrics,
) -> AdnetStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = lift(flat_spec(len))?;
        let g = grid_from_raw(spec, ground, len)?;
        let m = grid_from_raw(spec, model_out, len)?;
        let c = lift(confusion(&g, &m))?;
        let row = metrics(&c);
        *out = AdnetMetrics {
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            precision: row.precision,
            recall: row.recall,
            f1: row.f1,
            degenerate: row.degenerate,
        };
        Ok(())
    })
}
