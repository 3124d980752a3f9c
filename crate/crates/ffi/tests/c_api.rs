use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use rr_core::constraints::Configuration;
use rr_core::geometry::AffineFrame;
use rr_core::synth::{gen_scene, scene_rng, scene_sample, SceneParams, SyntheticScene};
use rr_ffi::*;

struct Solver(*mut RrSolver);

impl Solver {
    fn new() -> Self {
        let mut h = ptr::null_mut();
        assert_eq!(unsafe { rr_solver_new(&mut h) }, RrStatus::Ok);
        assert!(!h.is_null());
        Self(h)
    }
}

impl Drop for Solver {
    fn drop(&mut self) {
        unsafe { rr_solver_free(self.0) }
    }
}

fn ffi_frame(f: &AffineFrame) -> RrFrame {
    let p = f.pts;
    RrFrame { pts: [p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1]] }
}

fn scene(seed: u64, lambda: f64) -> SyntheticScene {
    let params = SceneParams { lambda: Some(lambda), ..SceneParams::default() };
    gen_scene(&mut scene_rng(seed, 0), &params).unwrap()
}

fn sample(s: &SyntheticScene, c: Configuration) -> Vec<RrFrame> {
    scene_sample(s, c).unwrap().frames().iter().map(ffi_frame).collect()
}

#[test]
fn solve_recovers_truth_through_the_c_api() {
    let solver = Solver::new();
    let s = scene(1, -4.0);
    let frames = sample(&s, Configuration::C222);
    let mut out = [RrCandidate::default(); 64];
    let mut n = 0;
    let st = unsafe {
        rr_solve(solver.0, RR_CONFIG_222, frames.as_ptr(), frames.len(), 0.0, out.as_mut_ptr(), out.len(), &mut n)
    };
    assert_eq!(st, RrStatus::Ok);
    assert!((1..=54).contains(&n));
    let t = s.gt_model;
    assert!(out[..n].iter().any(|c| {
        (c.model.lambda - t.lambda()).abs() < 1e-6 * t.lambda().abs()
            && (c.model.l1 - t.line.l1).abs() < 1e-6 * (1.0 + t.line.l1.abs())
            && c.feasible != 0
    }));
}

#[test]
fn small_buffers_report_the_full_count() {
    let solver = Solver::new();
    let s = scene(2, -4.0);
    let frames = sample(&s, Configuration::C4);
    let mut all = [RrCandidate::default(); 64];
    let mut n = 0;
    let st = unsafe {
        rr_solve(solver.0, RR_CONFIG_4, frames.as_ptr(), frames.len(), 0.0, all.as_mut_ptr(), all.len(), &mut n)
    };
    assert_eq!(st, RrStatus::Ok);
    assert!(n >= 2, "need at least two candidates, got {n}");

    let mut one = [RrCandidate::default(); 1];
    let mut m = 0;
    let st = unsafe { rr_solve(solver.0, RR_CONFIG_4, frames.as_ptr(), frames.len(), 0.0, one.as_mut_ptr(), 1, &mut m) };
    assert_eq!(st, RrStatus::BufferTooSmall);
    assert_eq!(m, n);
    assert_eq!(one[0], all[0]);
}

#[test]
fn errors_map_to_status_codes() {
    let solver = Solver::new();
    let s = scene(3, -2.0);
    let frames = sample(&s, Configuration::C4);
    let mut out = [RrCandidate::default(); 8];
    let mut n = 0;
    unsafe {
        let three = rr_solve(solver.0, RR_CONFIG_4, frames.as_ptr(), 3, 0.0, out.as_mut_ptr(), 8, &mut n);
        assert_eq!(three, RrStatus::WrongSampleSize);
        let bad = rr_solve(solver.0, 99, frames.as_ptr(), 4, 0.0, out.as_mut_ptr(), 8, &mut n);
        assert_eq!(bad, RrStatus::InvalidInput);
        let same = [frames[0]; 4];
        let dup = rr_solve(solver.0, RR_CONFIG_4, same.as_ptr(), 4, 0.0, out.as_mut_ptr(), 8, &mut n);
        assert_ne!(dup, RrStatus::Ok);

        let mut with_collinear = frames.clone();
        with_collinear[1] = RrFrame { pts: [0.0, 0.0, 0.1, 0.1, 0.2, 0.2] };
        let st = rr_solve(solver.0, RR_CONFIG_4, with_collinear.as_ptr(), 4, 0.0, out.as_mut_ptr(), 8, &mut n);
        assert_eq!(st, RrStatus::DegenerateSample);

        let on_horizon = RrFrame { pts: [0.1, 0.1, 0.1, 0.0, 0.2, 0.0] };
        let m = RrModel { lambda: 0.0, l1: -10.0, l2: 0.0 };
        let mut v = 0.0;
        assert_eq!(rr_rectified_scale(&m, &on_horizon, &mut v), RrStatus::DegenerateAlpha);

        let mut h = ptr::null_mut();
        let dir = c"/nonexistent/templates";
        assert_ne!(rr_solver_from_dir(dir.as_ptr(), &mut h), RrStatus::Ok);
        assert!(h.is_null());
    }
}

#[test]
fn null_pointers_are_rejected() {
    let solver = Solver::new();
    let s = scene(4, -4.0);
    let frames = sample(&s, Configuration::C4);
    let mut out = [RrCandidate::default(); 8];
    let mut n = 0;
    let p = [0.1, 0.1];
    let mut o = [0.0; 3];
    let m = RrModel::default();
    unsafe {
        assert_eq!(rr_solver_new(ptr::null_mut()), RrStatus::NullPointer);
        assert_eq!(rr_solver_from_dir(ptr::null(), &mut ptr::null_mut()), RrStatus::NullPointer);
        let calls = [
            rr_solve(ptr::null(), RR_CONFIG_4, frames.as_ptr(), 4, 0.0, out.as_mut_ptr(), 8, &mut n),
            rr_solve(solver.0, RR_CONFIG_4, ptr::null(), 4, 0.0, out.as_mut_ptr(), 8, &mut n),
            rr_solve(solver.0, RR_CONFIG_4, frames.as_ptr(), 4, 0.0, ptr::null_mut(), 8, &mut n),
            rr_solve(solver.0, RR_CONFIG_4, frames.as_ptr(), 4, 0.0, out.as_mut_ptr(), 8, ptr::null_mut()),
            rr_undistort(-1.0, ptr::null(), o.as_mut_ptr()),
            rr_undistort(-1.0, p.as_ptr(), ptr::null_mut()),
            rr_distort(-1.0, ptr::null(), o.as_mut_ptr()),
            rr_rectify_point(ptr::null(), p.as_ptr(), o.as_mut_ptr()),
            rr_rectified_scale(&m, ptr::null(), o.as_mut_ptr()),
            rr_ransac(ptr::null(), 0, ptr::null(), ptr::null(), 0, 1, 0, 0.1, 0.0, ptr::null_mut(), ptr::null_mut()),
        ];
        for (k, st) in calls.iter().enumerate() {
            assert_eq!(*st, RrStatus::NullPointer, "call {k}");
        }
        rr_solver_free(ptr::null_mut());
    }
}

#[test]
fn point_maps_round_trip() {
    let p = [0.12, -0.2];
    let (mut u, mut back) = ([0.0; 3], [0.0; 2]);
    unsafe {
        assert_eq!(rr_undistort(-3.0, p.as_ptr(), u.as_mut_ptr()), RrStatus::Ok);
        let expect_w = 1.0 - 3.0 * (p[0] * p[0] + p[1] * p[1]);
        assert_eq!(u, [p[0], p[1], expect_w]);
        let inh = [u[0] / u[2], u[1] / u[2]];
        assert_eq!(rr_distort(-3.0, inh.as_ptr(), back.as_mut_ptr()), RrStatus::Ok);
    }
    assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);

    let m = RrModel { lambda: 0.0, l1: 0.0, l2: 0.0 };
    let mut r = [0.0; 2];
    assert_eq!(unsafe { rr_rectify_point(&m, p.as_ptr(), r.as_mut_ptr()) }, RrStatus::Ok);
    assert_eq!(r, p);
}

#[test]
fn scales_agree_under_the_true_model() {
    let s = scene(5, -5.0);
    let m = RrModel { lambda: s.gt_model.lambda(), l1: s.gt_model.line.l1, l2: s.gt_model.line.l2 };
    for members in s.cluster_members() {
        let mut first = 0.0;
        unsafe { rr_rectified_scale(&m, &ffi_frame(&s.frames[members[0]]), &mut first) };
        for &i in &members[1..] {
            let mut v = 0.0;
            assert_eq!(unsafe { rr_rectified_scale(&m, &ffi_frame(&s.frames[i]), &mut v) }, RrStatus::Ok);
            assert!((v - first).abs() <= 1e-9 * first.abs());
        }
    }
}

#[test]
fn ransac_runs_through_the_c_api() {
    let solver = Solver::new();
    let s = scene(6, -4.0);
    let frames: Vec<RrFrame> = s.frames.iter().map(ffi_frame).collect();
    let clusters = s.clusters.clone();
    let (mut m, mut score) = (RrModel::default(), 0.0);
    let st = unsafe {
        rr_ransac(
            solver.0,
            RR_CONFIG_32,
            frames.as_ptr(),
            clusters.as_ptr(),
            frames.len(),
            20,
            1,
            0.01,
            0.0,
            &mut m,
            &mut score,
        )
    };
    assert_eq!(st, RrStatus::Ok);
    assert!((m.lambda + 4.0).abs() < 1e-6, "{m:?}");
    assert!(score > 0.0);
}

#[test]
fn every_status_has_a_message() {
    for code in 0..=17i32 {
        let st: RrStatus = unsafe { std::mem::transmute::<i32, RrStatus>(code) };
        let msg = unsafe { CStr::from_ptr(rr_status_message(st)) };
        assert!(!msg.to_bytes().is_empty());
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        "#include \"rr.h\"\n\
         int main(void) {\n\
           RrSolver *s = NULL;\n\
           RrFrame f = {{0, 0, 0, 0, 0, 0}};\n\
           RrCandidate c[4];\n\
           size_t n = 0;\n\
           (void)f; (void)c; (void)n; (void)s;\n\
           return RR_STATUS_OK + RR_CONFIG_222;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let Ok(out) = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
