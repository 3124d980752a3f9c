//! C interface to rr-core.
//!
//! Every function returns an [`RrStatus`]; outputs go through caller-owned
//! pointers. Solver handles are opaque and must be released with
//! [`rr_solver_free`]. Coordinates are normalized image units (centered,
//! scaled by `1 / (width + height)`). Frames are six doubles: the y-point, the
//! origin and the x-point.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rr_core::constraints::Configuration;
use rr_core::geometry::{
    distort_point, rectified_scale, rectify_point, undistort_point, AffineFrame, DivisionModel, Point2H,
    RectifyModel,
};
use rr_core::ransac::{estimate_with, FrameSet, RansacConfig};
use rr_core::solvers::{solve_minimal, MinimalSample, TemplateBank};
use rr_core::Error;

pub const RR_CONFIG_222: u32 = 0;
pub const RR_CONFIG_32: u32 = 1;
pub const RR_CONFIG_4: u32 = 2;
pub const RR_CONFIG_22: u32 = 3;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    BufferTooSmall = 3,
    NoRealRoot = 4,
    DegenerateAlpha = 5,
    CollinearFrame = 6,
    AllZeroCoordinates = 7,
    WrongSampleSize = 8,
    DegenerateSample = 9,
    RankDeficientTemplate = 10,
    InsufficientData = 11,
    NoValidModel = 12,
    MissingTemplate = 13,
    Io = 14,
    Format = 15,
    UnsupportedVersion = 16,
    Internal = 17,
}

impl From<&Error> for RrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NoRealRoot => RrStatus::NoRealRoot,
            Error::DegenerateAlpha(_) => RrStatus::DegenerateAlpha,
            Error::CollinearFrame(_) => RrStatus::CollinearFrame,
            Error::AllZeroCoordinates => RrStatus::AllZeroCoordinates,
            Error::WrongSampleSize { .. } => RrStatus::WrongSampleSize,
            Error::DegenerateSample(_) => RrStatus::DegenerateSample,
            Error::RankDeficientTemplate => RrStatus::RankDeficientTemplate,
            Error::InsufficientData(_) => RrStatus::InsufficientData,
            Error::NoValidModel => RrStatus::NoValidModel,
            Error::MissingTemplate(_) => RrStatus::MissingTemplate,
            Error::Io(_) => RrStatus::Io,
            Error::Format(_) => RrStatus::Format,
            Error::UnsupportedVersion { .. } => RrStatus::UnsupportedVersion,
            Error::InvalidInput(_) | Error::ShapeMismatch(_) => RrStatus::InvalidInput,
            Error::InfeasibleBasis(_) | Error::RetryExhausted(_) => RrStatus::Internal,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RrModel {
    pub lambda: f64,
    pub l1: f64,
    pub l2: f64,
}

impl From<RectifyModel> for RrModel {
    fn from(m: RectifyModel) -> Self {
        Self { lambda: m.lambda(), l1: m.line.l1, l2: m.line.l2 }
    }
}

impl From<RrModel> for RectifyModel {
    fn from(m: RrModel) -> Self {
        RectifyModel::new(m.lambda, m.l1, m.l2)
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RrFrame {
    pub pts: [f64; 6],
}

impl From<RrFrame> for AffineFrame {
    fn from(f: RrFrame) -> Self {
        let p = f.pts;
        AffineFrame::new([[p[0], p[1]], [p[2], p[3]], [p[4], p[5]]])
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RrCandidate {
    pub model: RrModel,
    pub residual: f64,
    /// Nonzero when the distortion lies in the feasible range.
    pub feasible: i32,
}

/// Opaque handle owning a set of solver templates.
pub struct RrSolver {
    bank: TemplateBank,
}

fn config_of(c: u32) -> Option<Configuration> {
    match c {
        RR_CONFIG_222 => Some(Configuration::C222),
        RR_CONFIG_32 => Some(Configuration::C32),
        RR_CONFIG_4 => Some(Configuration::C4),
        RR_CONFIG_22 => Some(Configuration::C22Fixed),
        _ => None,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RrStatus>) -> RrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => RrStatus::Internal,
    }
}

fn core<T>(r: rr_core::Result<T>) -> Result<T, RrStatus> {
    r.map_err(|e| RrStatus::from(&e))
}

unsafe fn slice<'a, T>(ptr: *const T, n: usize) -> Result<&'a [T], RrStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(RrStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

unsafe fn write<T>(ptr: *mut T, v: T) -> Result<(), RrStatus> {
    if ptr.is_null() {
        return Err(RrStatus::NullPointer);
    }
    ptr.write(v);
    Ok(())
}

/// Static description of a status code; never null.
#[no_mangle]
pub extern "C" fn rr_status_message(status: RrStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        RrStatus::Ok => b"ok\0",
        RrStatus::NullPointer => b"null pointer argument\0",
        RrStatus::InvalidInput => b"invalid input\0",
        RrStatus::BufferTooSmall => b"output buffer too small\0",
        RrStatus::NoRealRoot => b"point outside the invertible domain of the division model\0",
        RrStatus::DegenerateAlpha => b"point maps to infinity under rectification\0",
        RrStatus::CollinearFrame => b"frame points are collinear\0",
        RrStatus::AllZeroCoordinates => b"all frame coordinates are zero\0",
        RrStatus::WrongSampleSize => b"wrong number of frames for the configuration\0",
        RrStatus::DegenerateSample => b"degenerate sample\0",
        RrStatus::RankDeficientTemplate => b"elimination template is rank deficient for this input\0",
        RrStatus::InsufficientData => b"insufficient data\0",
        RrStatus::NoValidModel => b"no valid model found\0",
        RrStatus::MissingTemplate => b"no template for the configuration\0",
        RrStatus::Io => b"i/o error\0",
        RrStatus::Format => b"malformed file\0",
        RrStatus::UnsupportedVersion => b"unsupported file version\0",
        RrStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// Creates a solver with the built-in templates.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rr_solver_new(out: *mut *mut RrSolver) -> RrStatus {
    guard(|| {
        let bank = core(TemplateBank::builtin())?;
        write(out, Box::into_raw(Box::new(RrSolver { bank })))
    })
}

/// Creates a solver from a template directory, falling back to the built-in
/// templates for missing configurations.
///
/// # Safety
/// `dir` must be a NUL-terminated UTF-8 path; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rr_solver_from_dir(dir: *const c_char, out: *mut *mut RrSolver) -> RrStatus {
    guard(|| {
        if dir.is_null() {
            return Err(RrStatus::NullPointer);
        }
        let path = CStr::from_ptr(dir).to_str().map_err(|_| RrStatus::InvalidInput)?;
        let builtin = core(TemplateBank::builtin())?;
        let bank = core(TemplateBank::from_dir(Path::new(path)))?.or(&builtin);
        write(out, Box::into_raw(Box::new(RrSolver { bank })))
    })
}

/// Releases a handle from [`rr_solver_new`] or [`rr_solver_from_dir`]; null is ignored.
///
/// # Safety
/// `solver` must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rr_solver_free(solver: *mut RrSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solves one minimal sample. Frames are in group order for the
/// configuration. `fixed_lambda` is read only by `RR_CONFIG_22`. When more
/// candidates exist than `capacity`, the best ones are written and
/// `RR_STATUS_BUFFER_TOO_SMALL` is returned with the full count in `n_out`.
///
/// # Safety
/// `frames` must point to `n_frames` frames, `out` to `capacity` candidates.
#[no_mangle]
pub unsafe extern "C" fn rr_solve(
    solver: *const RrSolver,
    config: u32,
    frames: *const RrFrame,
    n_frames: usize,
    fixed_lambda: f64,
    out: *mut RrCandidate,
    capacity: usize,
    n_out: *mut usize,
) -> RrStatus {
    guard(|| {
        let solver = solver.as_ref().ok_or(RrStatus::NullPointer)?;
        let config = config_of(config).ok_or(RrStatus::InvalidInput)?;
        let frames: Vec<AffineFrame> = slice(frames, n_frames)?.iter().map(|&f| f.into()).collect();
        let sample = core(MinimalSample::from_flat(config, &frames))?;
        let sol = core(solve_minimal(&solver.bank, &sample, Some(fixed_lambda)))?;
        write(n_out, sol.candidates.len())?;
        if sol.candidates.is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(RrStatus::NullPointer);
        }
        for (k, c) in sol.candidates.iter().take(capacity).enumerate() {
            out.add(k).write(RrCandidate { model: c.model.into(), residual: c.residual, feasible: c.feasible as i32 });
        }
        if sol.candidates.len() > capacity {
            return Err(RrStatus::BufferTooSmall);
        }
        Ok(())
    })
}

/// Robust estimation over frames with cluster ids `0..n_clusters`.
///
/// # Safety
/// `frames` and `clusters` must point to `n` elements; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_ransac(
    solver: *const RrSolver,
    config: u32,
    frames: *const RrFrame,
    clusters: *const usize,
    n: usize,
    iterations: usize,
    seed: u64,
    tau_s: f64,
    fixed_lambda: f64,
    out: *mut RrModel,
    score: *mut f64,
) -> RrStatus {
    guard(|| {
        let solver = solver.as_ref().ok_or(RrStatus::NullPointer)?;
        let config = config_of(config).ok_or(RrStatus::InvalidInput)?;
        let frames: Vec<AffineFrame> = slice(frames, n)?.iter().map(|&f| f.into()).collect();
        let fs = core(FrameSet::new(frames, slice(clusters, n)?.to_vec()))?;
        let cfg = RansacConfig {
            config,
            iterations,
            seed,
            tau_s,
            fixed_lambda: (!config.estimates_distortion()).then_some(fixed_lambda),
            ..RansacConfig::default()
        };
        let est = core(estimate_with(&solver.bank, &fs, &cfg))?;
        write(out, est.model.into())?;
        if !score.is_null() {
            score.write(est.score);
        }
        Ok(())
    })
}

/// Division-model undistortion; `out` receives homogeneous `(x, y, w)`.
///
/// # Safety
/// `point` must hold 2 doubles and `out` 3.
#[no_mangle]
pub unsafe extern "C" fn rr_undistort(lambda: f64, point: *const f64, out: *mut f64) -> RrStatus {
    guard(|| {
        let p = slice(point, 2)?;
        let u = undistort_point(Point2H::from_xy(p[0], p[1]), &DivisionModel::new(lambda));
        write(out, u.x)?;
        out.add(1).write(u.y);
        out.add(2).write(u.w);
        Ok(())
    })
}

/// Inverse of [`rr_undistort`] for an inhomogeneous undistorted point.
///
/// # Safety
/// `point` must hold 2 doubles and `out` 2.
#[no_mangle]
pub unsafe extern "C" fn rr_distort(lambda: f64, point: *const f64, out: *mut f64) -> RrStatus {
    guard(|| {
        let p = slice(point, 2)?;
        let d = core(distort_point(Point2H::from_xy(p[0], p[1]), &DivisionModel::new(lambda)))?;
        write(out, d.x / d.w)?;
        out.add(1).write(d.y / d.w);
        Ok(())
    })
}

/// Undistorts and rectifies a distorted point to inhomogeneous coordinates.
///
/// # Safety
/// `model` must be valid, `point` must hold 2 doubles and `out` 2.
#[no_mangle]
pub unsafe extern "C" fn rr_rectify_point(model: *const RrModel, point: *const f64, out: *mut f64) -> RrStatus {
    guard(|| {
        let m: RectifyModel = (*model.as_ref().ok_or(RrStatus::NullPointer)?).into();
        let p = slice(point, 2)?;
        let r = rectify_point(Point2H::from_xy(p[0], p[1]), &m);
        if r.w.abs() < rr_core::geometry::TOL_ALPHA {
            return Err(RrStatus::DegenerateAlpha);
        }
        write(out, r.x / r.w)?;
        out.add(1).write(r.y / r.w);
        Ok(())
    })
}

/// Signed area scale of a frame after rectification.
///
/// # Safety
/// `model`, `frame` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rr_rectified_scale(model: *const RrModel, frame: *const RrFrame, out: *mut f64) -> RrStatus {
    guard(|| {
        let m: RectifyModel = (*model.as_ref().ok_or(RrStatus::NullPointer)?).into();
        let f: AffineFrame = (*frame.as_ref().ok_or(RrStatus::NullPointer)?).into();
        write(out, core(rectified_scale(&f, &m))?)
    })
}
