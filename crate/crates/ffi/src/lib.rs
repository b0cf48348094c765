//! C ABI over the `tomatoscan` engine.
//!
//! Objects cross the boundary as opaque handles freed by their `*_free`
//! function. Every fallible call returns a [`TsStatus`]; on failure the
//! message is kept per thread and readable through [`ts_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tomatoscan::edgeops;
use tomatoscan::formats::{CalibrationSample, ImageBuffer};
use tomatoscan::fusion::{self, CalibrationModel};
use tomatoscan::geometry::{self, PolygonMask, RasterGrid};
use tomatoscan::metrics::{self, Trait};
use tomatoscan::phenotype::{self, PixelPhenotype};
use tomatoscan::pipeline::{self, StatsInput};
use tomatoscan::pose::{self, KeypointPair};
use tomatoscan::{Error, Point};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidPolygon = 3,
    DimensionMismatch = 4,
    MissingDepth = 5,
    PoseUnavailable = 6,
    Io = 7,
    Parse = 8,
    Panic = 99,
}

impl From<&Error> for TsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidPolygon(_) => TsStatus::InvalidPolygon,
            Error::DimensionMismatch(_) => TsStatus::DimensionMismatch,
            Error::MissingDepth { .. } => TsStatus::MissingDepth,
            Error::PoseUnavailable | Error::DegeneratePose => TsStatus::PoseUnavailable,
            Error::Io { .. } => TsStatus::Io,
            Error::MalformedHeader(_)
            | Error::TruncatedData { .. }
            | Error::UnsupportedMaxval(_)
            | Error::Schema(_)
            | Error::Row { .. } => TsStatus::Parse,
            _ => TsStatus::InvalidInput,
        }
    }
}

/// Polygon contour in pixel coordinates.
pub struct TsPolygon(PolygonMask);

/// Fitted depth-to-scale model.
pub struct TsCalibration(CalibrationModel);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TsPixelPhenotype {
    pub width_px: f64,
    pub height_px: f64,
    pub area_px2: f64,
    pub volume_px3: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TsMetricPhenotype {
    pub width_cm: f64,
    pub height_cm: f64,
    pub area_cm2: f64,
    pub volume_cm3: f64,
    pub scale_px_per_cm: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TsPose {
    pub dx: f64,
    pub dy: f64,
    /// Radians in [0, pi].
    pub theta: f64,
    /// Radians in (-pi, pi], positive when the carpopodium leans right.
    pub theta_signed: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TsBoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), TsStatus>) -> TsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            TsStatus::Panic
        }
    }
}

fn fail(e: Error) -> TsStatus {
    let s = TsStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> TsStatus {
    set_error(format!("{what} is null"));
    TsStatus::NullPointer
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], TsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, TsStatus> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn polygon_ref<'a>(ptr: *const TsPolygon, what: &str) -> Result<&'a PolygonMask, TsStatus> {
    ptr.as_ref().map(|p| &p.0).ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a polygon from `n` interleaved `x, y` pairs (`xy` holds `2 * n` values).
///
/// # Safety
/// `xy` must point to `2 * n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_polygon_new(xy: *const f64, n: usize, out: *mut *mut TsPolygon) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let coords = slice_in(xy, n * 2, "xy")?;
        let pts = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        let poly = PolygonMask::new(pts).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsPolygon(poly)));
        Ok(())
    })
}

/// # Safety
/// `poly` must come from [`ts_polygon_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_polygon_free(poly: *mut TsPolygon) {
    if !poly.is_null() {
        drop(Box::from_raw(poly));
    }
}

/// Absolute shoelace area in px^2.
///
/// # Safety
/// `poly` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_polygon_area(poly: *const TsPolygon, out: *mut f64) -> TsStatus {
    guard(|| {
        let p = polygon_ref(poly, "poly")?;
        *out_ref(out, "out")? = geometry::polygon_area(p);
        Ok(())
    })
}

/// Pixel-space width, height, area and revolution volume.
///
/// # Safety
/// `poly` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_polygon_measure(poly: *const TsPolygon, out: *mut TsPixelPhenotype) -> TsStatus {
    guard(|| {
        let p = polygon_ref(poly, "poly")?;
        let out = out_ref(out, "out")?;
        let m = phenotype::measure(p).map_err(fail)?;
        *out = TsPixelPhenotype {
            width_px: m.width_px,
            height_px: m.height_px,
            area_px2: m.area_px2,
            volume_px3: m.volume_px3,
        };
        Ok(())
    })
}

/// Least-squares fit of `k` from `n` (depth cm, pixels per cm) samples.
///
/// # Safety
/// `depth_cm` and `pixels_per_cm` must each hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_calibration_fit(
    depth_cm: *const f64,
    pixels_per_cm: *const f64,
    n: usize,
    out: *mut *mut TsCalibration,
) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let d = slice_in(depth_cm, n, "depth_cm")?;
        let p = slice_in(pixels_per_cm, n, "pixels_per_cm")?;
        let samples: Vec<CalibrationSample> = d
            .iter()
            .zip(p)
            .map(|(&depth, &pixels_per_cm)| CalibrationSample { depth, pixels_per_cm })
            .collect();
        let model = fusion::fit_calibration(&samples).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsCalibration(model)));
        Ok(())
    })
}

/// Wraps a known coefficient.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_calibration_from_k(k: f64, out: *mut *mut TsCalibration) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let model = CalibrationModel::from_k(k).map_err(fail)?;
        *out = Box::into_raw(Box::new(TsCalibration(model)));
        Ok(())
    })
}

/// # Safety
/// `cal` must be a live handle; returns NaN when null.
#[no_mangle]
pub unsafe extern "C" fn ts_calibration_k(cal: *const TsCalibration) -> f64 {
    cal.as_ref().map_or(f64::NAN, |c| c.0.k)
}

/// # Safety
/// `cal` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_calibration_free(cal: *mut TsCalibration) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Converts pixel traits to metric traits at `depth_cm`.
///
/// # Safety
/// All pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_fuse(
    px: *const TsPixelPhenotype,
    cal: *const TsCalibration,
    depth_cm: f64,
    out: *mut TsMetricPhenotype,
) -> TsStatus {
    guard(|| {
        let px = px.as_ref().ok_or_else(|| null("px"))?;
        let cal = cal.as_ref().ok_or_else(|| null("cal"))?;
        let out = out_ref(out, "out")?;
        let pixel = PixelPhenotype::new(px.width_px, px.height_px, px.area_px2, px.volume_px3);
        let m = fusion::fuse(&pixel, &cal.0, depth_cm).map_err(fail)?;
        *out = TsMetricPhenotype {
            width_cm: m.width_cm,
            height_cm: m.height_cm,
            area_cm2: m.area_cm2,
            volume_cm3: m.volume_cm3,
            scale_px_per_cm: m.scale_px_per_cm,
        };
        Ok(())
    })
}

/// Pose vector and angles from body and carpopodium keypoints.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_pose_compute(
    body_x: f64,
    body_y: f64,
    carp_x: f64,
    carp_y: f64,
    out: *mut TsPose,
) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let kp = KeypointPair::new(Point::new(body_x, body_y), Some(Point::new(carp_x, carp_y)));
        let p = pose::compute_pose(&kp).map_err(fail)?;
        *out = TsPose {
            dx: p.pose.0,
            dy: p.pose.1,
            theta: p.theta,
            theta_signed: p.theta_signed,
        };
        Ok(())
    })
}

/// Mean edge error in percent over `n_pairs` (prediction, ground truth) handles.
///
/// # Safety
/// `preds` and `gts` must each hold `n_pairs` live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_mean_edge_error(
    preds: *const *const TsPolygon,
    gts: *const *const TsPolygon,
    n_pairs: usize,
    samples: usize,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let preds = slice_in(preds, n_pairs, "preds")?;
        let gts = slice_in(gts, n_pairs, "gts")?;
        let mut pairs = Vec::with_capacity(n_pairs);
        for (&p, &g) in preds.iter().zip(gts) {
            pairs.push((polygon_ref(p, "pred")?.clone(), polygon_ref(g, "gt")?.clone()));
        }
        *out = metrics::mean_edge_error(&pairs, samples).map_err(fail)?.mee;
        Ok(())
    })
}

/// Signed relative error in percent.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_relative_error(truth: f64, predicted: f64, out: *mut f64) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = metrics::relative_error(truth, predicted).map_err(fail)?;
        Ok(())
    })
}

/// Mean absolute Sobel-magnitude difference of two row-major masks.
///
/// # Safety
/// `pred` and `gt` must each hold `width * height` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_edge_loss(
    pred: *const f64,
    gt: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let n = width * height;
        let a = RasterGrid::from_vec(width, height, slice_in(pred, n, "pred")?.to_vec()).map_err(fail)?;
        let b = RasterGrid::from_vec(width, height, slice_in(gt, n, "gt")?.to_vec()).map_err(fail)?;
        *out = edgeops::edge_loss(&a, &b).map_err(fail)?;
        Ok(())
    })
}

/// Contrast then acutance enhancement of an interleaved 8-bit image.
/// `output` receives `width * height * channels` bytes.
///
/// # Safety
/// `input` and `output` must each hold `width * height * channels` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_edge_boost(
    input: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    contrast: f64,
    acutance: f64,
    output: *mut u8,
) -> TsStatus {
    guard(|| {
        let n = width * height * channels;
        let data = slice_in(input, n, "input")?.to_vec();
        if output.is_null() && n > 0 {
            return Err(null("output"));
        }
        let img = ImageBuffer::new(width, height, channels, data).map_err(fail)?;
        let boosted = edgeops::edge_boost(&img, contrast, acutance).map_err(fail)?;
        if n > 0 {
            slice::from_raw_parts_mut(output, n).copy_from_slice(&boosted.data);
        }
        Ok(())
    })
}

/// Box statistics of the bundled test-set errors for one trait
/// (0 width, 1 height, 2 area, 3 volume). `recomputed` selects errors
/// derived from the truth/prediction columns instead of the tabulated ones.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_bundled_stats(trait_index: u32, recomputed: bool, out: *mut TsBoxStats) -> TsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = *Trait::ALL.get(trait_index as usize).ok_or_else(|| {
            set_error(format!("trait index {trait_index} out of range 0..4"));
            TsStatus::InvalidInput
        })?;
        let report = pipeline::cmd_stats(StatsInput::Bundled).map_err(fail)?;
        let s = report.get(t);
        let b = if recomputed { &s.recomputed } else { &s.printed };
        *out = TsBoxStats {
            median: b.median,
            q1: b.q1,
            q3: b.q3,
            min: b.min,
            max: b.max,
            n: b.n,
        };
        Ok(())
    })
}
