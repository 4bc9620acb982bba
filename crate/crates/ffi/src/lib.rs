//! C ABI for the `evnf` library.
//!
//! Conventions:
//! - Every function returns an [`EvnfStatus`]; results go through out-pointers.
//! - Objects are opaque handles created by `evnf_*_new` / producer functions
//!   and released with the matching `evnf_*_free`. Freeing NULL is a no-op.
//! - On failure, `evnf_last_error_message` returns a description of the most
//!   recent error on the calling thread.
//! - Variable-length results are copied into caller buffers. When the buffer
//!   is NULL or too small the call returns `EVNF_STATUS_BUFFER_TOO_SMALL` and writes
//!   the required length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use evnf::events::{PolarityFilter, TimeSurface};
use evnf::geometry::{CalibratedPoint, DiffHomography, Intrinsics, NormalFlowObs, Velocity};
use evnf::homography::analyse_linear_homography;
use evnf::io::{read_flow_file, records_to_observations};
use evnf::normal_flow::{extract_normal_flows, ExtractionConfig};
use evnf::solvers::{ransac_estimate, FitReport, ModelKind, RansacConfig};
use evnf::{Error, ErrorClass};
use nalgebra::Vector2;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvnfStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Invalid arguments, malformed files or unreadable paths.
    InvalidInput = 2,
    /// Degenerate or insufficient data for the requested estimate.
    Degenerate = 3,
    /// Numerical failure inside a solver.
    Numerical = 4,
    /// The output buffer is NULL or too small; the required length was written.
    BufferTooSmall = 5,
    /// An internal panic was caught at the boundary.
    Internal = 6,
}

/// Problem families understood by [`evnf_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvnfModelKind {
    /// Per-observation full flow; needs the camera velocity.
    OpticalFlow = 0,
    /// Per-observation depth; needs the camera velocity.
    Depth = 1,
    AngularVelocity = 2,
    /// Camera velocity; needs per-observation depths.
    SixDof = 3,
    DiffHomography = 4,
}

impl EvnfModelKind {
    fn from_raw(v: i32) -> Result<Self, Error> {
        Ok(match v {
            0 => Self::OpticalFlow,
            1 => Self::Depth,
            2 => Self::AngularVelocity,
            3 => Self::SixDof,
            4 => Self::DiffHomography,
            _ => return Err(Error::InvalidInput(format!("unknown model kind {v}"))),
        })
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl EvnfIntrinsics {
    fn to_core(self) -> Result<Intrinsics, Error> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

/// One normal-flow observation in calibrated coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfObservation {
    pub x: f64,
    pub y: f64,
    pub nx: f64,
    pub ny: f64,
    pub t: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfRansacConfig {
    /// Inlier threshold on the normal-flow residual, calibrated units^2/s^2.
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the shared pool.
    pub threads: usize,
}

impl From<EvnfRansacConfig> for RansacConfig {
    fn from(c: EvnfRansacConfig) -> Self {
        RansacConfig {
            threshold: c.threshold,
            max_iterations: c.max_iterations,
            confidence: c.confidence,
            seed: c.seed,
            threads: c.threads,
        }
    }
}

/// Polarity filter: 0 both, 1 positive only, -1 negative only.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfExtractionConfig {
    pub spatial_window: u32,
    pub temporal_window: f64,
    pub plane_ransac_thresh: f64,
    pub plane_iterations: usize,
    pub min_support: usize,
    pub max_flow: f64,
    pub min_gradient: f64,
    pub seed: u64,
    pub threads: usize,
    pub polarity: i32,
}

impl EvnfExtractionConfig {
    fn to_core(self) -> Result<ExtractionConfig, Error> {
        let polarity = match self.polarity {
            0 => PolarityFilter::Both,
            1 => PolarityFilter::Positive,
            -1 => PolarityFilter::Negative,
            p => return Err(Error::InvalidInput(format!("polarity filter must be -1, 0 or 1, got {p}"))),
        };
        Ok(ExtractionConfig {
            spatial_window: self.spatial_window,
            temporal_window: self.temporal_window,
            plane_ransac_thresh: self.plane_ransac_thresh,
            plane_iterations: self.plane_iterations,
            min_support: self.min_support,
            max_flow: self.max_flow,
            min_gradient: self.min_gradient,
            seed: self.seed,
            threads: self.threads,
            polarity,
        })
    }
}

/// One candidate motion/structure explanation of a differential homography.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfPlanarCandidate {
    pub omega: [f64; 3],
    pub nu_over_d: [f64; 3],
    pub normal: [f64; 3],
}

/// Degeneracy of a homography decomposition.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvnfHomographyDegeneracy {
    None = 0,
    /// No plane-induced part; only `omega` is meaningful.
    PureRotation = 1,
    /// Plane normal parallel to the translation; candidates are not returned.
    RankOne = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvnfHomographyResult {
    /// Removed multiple of the identity.
    pub epsilon: f64,
    /// Row-major true differential homography.
    pub h_d: [f64; 9],
    pub degeneracy: EvnfHomographyDegeneracy,
    /// Valid when `degeneracy` is `None`.
    pub candidates: [EvnfPlanarCandidate; 2],
    /// Valid when `degeneracy` is `PureRotation`.
    pub omega: [f64; 3],
}

/// Opaque set of normal-flow observations, optionally with depths.
pub struct EvnfObservations {
    obs: Vec<NormalFlowObs>,
    depths: Option<Vec<f64>>,
}

/// Opaque time surface.
pub struct EvnfTimeSurface(TimeSurface);

/// Opaque solver result.
pub struct EvnfFit(FitReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EvnfStatus {
    match e.class() {
        ErrorClass::Input => EvnfStatus::InvalidInput,
        ErrorClass::Degenerate => EvnfStatus::Degenerate,
        ErrorClass::Numerical => EvnfStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
    Buffer,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvnfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvnfStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("argument `{name}` is NULL"));
            EvnfStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Buffer)) => {
            set_last_error("output buffer is too small".into());
            EvnfStatus::BufferTooSmall
        }
        Err(_) => {
            set_last_error("internal error".into());
            EvnfStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn non_null_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `src` into a caller buffer of capacity `cap`, always reporting the length.
unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Failure> {
    *non_null_mut(len, "len")? = src.len();
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() || cap < src.len() {
        return Err(Failure::Buffer);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn into_handle<T>(value: T, out: *mut *mut T) -> Result<(), Failure> {
    // SAFETY: checked non-null; the caller owns the returned handle.
    unsafe { *non_null_mut(out, "out")? = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evnf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evnf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn evnf_ransac_config_default() -> EvnfRansacConfig {
    let d = RansacConfig::default();
    EvnfRansacConfig {
        threshold: d.threshold,
        max_iterations: d.max_iterations,
        confidence: d.confidence,
        seed: d.seed,
        threads: d.threads,
    }
}

#[no_mangle]
pub extern "C" fn evnf_extraction_config_default() -> EvnfExtractionConfig {
    let d = ExtractionConfig::default();
    EvnfExtractionConfig {
        spatial_window: d.spatial_window,
        temporal_window: d.temporal_window,
        plane_ransac_thresh: d.plane_ransac_thresh,
        plane_iterations: d.plane_iterations,
        min_support: d.min_support,
        max_flow: d.max_flow,
        min_gradient: d.min_gradient,
        seed: d.seed,
        threads: d.threads,
        polarity: 0,
    }
}

/// Builds an observation set from `count` calibrated observations.
///
/// # Safety
/// `items` must point to `count` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_new(
    items: *const EvnfObservation,
    count: usize,
    out: *mut *mut EvnfObservations,
) -> EvnfStatus {
    guard(|| {
        let items = slice(items, count, "items")?;
        let obs = items
            .iter()
            .map(|o| NormalFlowObs::new(CalibratedPoint::new(o.x, o.y)?, Vector2::new(o.nx, o.ny), o.t))
            .collect::<Result<Vec<_>, Error>>()?;
        into_handle(EvnfObservations { obs, depths: None }, out)
    })
}

/// Reads a normal-flow CSV file. A `depth` column, if present, is attached.
///
/// # Safety
/// `path` must be a NUL-terminated string; `intrinsics` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_read_csv(
    path: *const c_char,
    intrinsics: *const EvnfIntrinsics,
    out: *mut *mut EvnfObservations,
) -> EvnfStatus {
    guard(|| {
        let path = non_null(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidInput("path is not valid UTF-8".into()))?;
        let k = non_null(intrinsics, "intrinsics")?.to_core()?;
        let records = read_flow_file(Path::new(path))?;
        let (obs, depths) = records_to_observations(&records, &k)?;
        into_handle(EvnfObservations { obs, depths }, out)
    })
}

/// Attaches one depth per observation (needed by the six-DoF model).
///
/// # Safety
/// `handle` must be a live handle and `depths` must point to `count` values.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_set_depths(
    handle: *mut EvnfObservations,
    depths: *const f64,
    count: usize,
) -> EvnfStatus {
    guard(|| {
        let h = non_null_mut(handle, "handle")?;
        let depths = slice(depths, count, "depths")?;
        if depths.len() != h.obs.len() {
            return Err(Error::InvalidInput(format!("{} depths for {} observations", depths.len(), h.obs.len())).into());
        }
        h.depths = Some(depths.to_vec());
        Ok(())
    })
}

/// # Safety
/// `handle` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_len(handle: *const EvnfObservations, len: *mut usize) -> EvnfStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        *non_null_mut(len, "len")? = h.obs.len();
        Ok(())
    })
}

/// Copies the observations into `buf` (capacity `cap`).
///
/// # Safety
/// `handle` must be live; `buf` must have room for `cap` values; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_copy(
    handle: *const EvnfObservations,
    buf: *mut EvnfObservation,
    cap: usize,
    len: *mut usize,
) -> EvnfStatus {
    guard(|| {
        let h = non_null(handle, "handle")?;
        let items: Vec<EvnfObservation> = h
            .obs
            .iter()
            .map(|o| EvnfObservation {
                x: o.x.x,
                y: o.x.y,
                nx: o.n.x,
                ny: o.n.y,
                t: o.t,
            })
            .collect();
        copy_out(&items, buf, cap, len)
    })
}

/// # Safety
/// `handle` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evnf_observations_free(handle: *mut EvnfObservations) {
    free_handle(handle);
}

/// Creates an empty time surface of `width` x `height` pixels holding events
/// in `(t_ref - window, t_ref]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_time_surface_new(
    width: u32,
    height: u32,
    t_ref: f64,
    window: f64,
    out: *mut *mut EvnfTimeSurface,
) -> EvnfStatus {
    guard(|| {
        if width == 0 || height == 0 || !(window > 0.0) || !t_ref.is_finite() {
            return Err(Error::InvalidInput("time surface needs a positive size and window and a finite t_ref".into()).into());
        }
        into_handle(EvnfTimeSurface(TimeSurface::new(width, height, t_ref, window)), out)
    })
}

/// Records the latest timestamp `t` and polarity (+1/-1) at pixel `(x, y)`.
///
/// # Safety
/// `handle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn evnf_time_surface_set(
    handle: *mut EvnfTimeSurface,
    x: u32,
    y: u32,
    t: f64,
    polarity: i8,
) -> EvnfStatus {
    guard(|| {
        let ts = &mut non_null_mut(handle, "handle")?.0;
        if x >= ts.width() || y >= ts.height() {
            return Err(Error::OutOfBounds { x: x as f64, y: y as f64 }.into());
        }
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {t} is not finite")).into());
        }
        ts.set(x, y, t, polarity);
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evnf_time_surface_free(handle: *mut EvnfTimeSurface) {
    free_handle(handle);
}

/// Extracts normal flows from a time surface. `config` may be NULL for defaults.
///
/// # Safety
/// Pointers must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn evnf_extract(
    surface: *const EvnfTimeSurface,
    intrinsics: *const EvnfIntrinsics,
    config: *const EvnfExtractionConfig,
    out: *mut *mut EvnfObservations,
) -> EvnfStatus {
    guard(|| {
        let ts = &non_null(surface, "surface")?.0;
        let k = non_null(intrinsics, "intrinsics")?.to_core()?;
        let cfg = match config.as_ref() {
            Some(c) => c.to_core()?,
            None => ExtractionConfig::default(),
        };
        let (samples, _) = extract_normal_flows(ts, &k, &cfg)?;
        let obs = samples.iter().map(|s| s.obs).collect();
        into_handle(EvnfObservations { obs, depths: None }, out)
    })
}

/// Robust estimate of a model. `kind` is one of the `EvnfModelKind` values.
/// `velocity` (6 values, `nu` then `omega`) is required by the optical-flow
/// and depth models and ignored otherwise; `config` may be NULL for defaults.
///
/// # Safety
/// Pointers must be valid; `velocity` must point to 6 values when required.
#[no_mangle]
pub unsafe extern "C" fn evnf_solve(
    observations: *const EvnfObservations,
    kind: i32,
    velocity: *const f64,
    config: *const EvnfRansacConfig,
    out: *mut *mut EvnfFit,
) -> EvnfStatus {
    guard(|| {
        let h = non_null(observations, "observations")?;
        let velocity = || -> Result<Velocity, Failure> { Ok(Velocity::from_slice(slice(velocity, 6, "velocity")?)) };
        let kind = match EvnfModelKind::from_raw(kind)? {
            EvnfModelKind::OpticalFlow => ModelKind::OpticalFlow { velocity: velocity()? },
            EvnfModelKind::Depth => ModelKind::Depth { velocity: velocity()? },
            EvnfModelKind::AngularVelocity => ModelKind::AngularVelocity,
            EvnfModelKind::SixDof => ModelKind::SixDof {
                depths: h
                    .depths
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("missing depth: six-dof needs one depth per observation".into()))?,
            },
            EvnfModelKind::DiffHomography => ModelKind::DiffHomographyLinear,
        };
        let cfg = config.as_ref().map_or_else(RansacConfig::default, |c| (*c).into());
        let report = ransac_estimate(&h.obs, &kind, &cfg)?;
        into_handle(EvnfFit(report), out)
    })
}

/// Copies the estimated parameters. Global models give their parameter
/// vector; per-observation models give values concatenated over the inliers.
///
/// # Safety
/// `fit` must be live; `buf` must have room for `cap` values; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_fit_theta(fit: *const EvnfFit, buf: *mut f64, cap: usize, len: *mut usize) -> EvnfStatus {
    guard(|| copy_out(&non_null(fit, "fit")?.0.theta, buf, cap, len))
}

/// Copies the indices of the observations used by the estimate.
///
/// # Safety
/// `fit` must be live; `buf` must have room for `cap` values; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_fit_inliers(fit: *const EvnfFit, buf: *mut usize, cap: usize, len: *mut usize) -> EvnfStatus {
    guard(|| copy_out(&non_null(fit, "fit")?.0.inliers, buf, cap, len))
}

/// RMS normal-flow residual over the inliers.
///
/// # Safety
/// `fit` must be live and `rms` writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_fit_rms(fit: *const EvnfFit, rms: *mut f64) -> EvnfStatus {
    guard(|| {
        *non_null_mut(rms, "rms")? = non_null(fit, "fit")?.0.rms;
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evnf_fit_free(fit: *mut EvnfFit) {
    free_handle(fit);
}

/// Removes the identity ambiguity from a linear differential-homography
/// estimate (row-major, 9 values) and decomposes the result.
///
/// # Safety
/// `h_linear` must point to 9 values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evnf_homography_analyse(h_linear: *const f64, out: *mut EvnfHomographyResult) -> EvnfStatus {
    guard(|| {
        let h = slice(h_linear, 9, "h_linear")?;
        let out = non_null_mut(out, "out")?;
        let report = analyse_linear_homography(&DiffHomography::from_vec(h))?;
        let zero = EvnfPlanarCandidate {
            omega: [0.0; 3],
            nu_over_d: [0.0; 3],
            normal: [0.0; 3],
        };
        let mut result = EvnfHomographyResult {
            epsilon: report.epsilon,
            h_d: std::array::from_fn(|i| report.h_d[i / 3][i % 3]),
            degeneracy: EvnfHomographyDegeneracy::None,
            candidates: [zero; 2],
            omega: [0.0; 3],
        };
        if let Some(c) = report.candidates {
            result.candidates = c.map(|c| EvnfPlanarCandidate {
                omega: c.omega.into(),
                nu_over_d: c.nu_over_d.into(),
                normal: c.normal.into(),
            });
        }
        match report.degeneracy.as_deref() {
            Some("pure_rotation") => {
                result.degeneracy = EvnfHomographyDegeneracy::PureRotation;
                result.omega = report.omega.map_or([0.0; 3], Into::into);
            }
            Some(_) => result.degeneracy = EvnfHomographyDegeneracy::RankOne,
            None => {}
        }
        *out = result;
        Ok(())
    })
}
