//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! `RR_ACCEPTANCE_SCALE` (default 1) scales every scene count for quick runs.

mod common;

use std::time::Instant;

use common::{rel, scene_with};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rr_core::constraints::Configuration;
use rr_core::geometry::{distort_point, rectified_scale, rectify_point, undistort_point, DivisionModel, Point2H};
use rr_core::ransac::{lo_gradient, lo_objective, FrameSet};
use rr_core::solvers::{prepare_system, solve_minimal_with, TemplateBank};
use rr_core::synth::{
    add_noise, run_study_with, scene_sample, warp_error, warp_error_map, Motion, StudyKind, StudyParams, StudyResult,
};

const DISTORTION: [Configuration; 3] = Configuration::DISTORTION;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let line = format!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn scenes(n: usize) -> usize {
    let scale: f64 = std::env::var("RR_ACCEPTANCE_SCALE").ok().and_then(|v| v.parse().ok()).unwrap_or(1.0);
    ((n as f64 * scale).round() as usize).max(1)
}

fn study(bank: &TemplateBank, kind: StudyKind, f: impl FnOnce(&mut StudyParams)) -> StudyResult {
    let mut p = StudyParams::for_kind(kind);
    p.scenes = scenes(p.scenes);
    f(&mut p);
    let t0 = Instant::now();
    let r = run_study_with(bank, kind, &p).unwrap();
    println!("  ({kind}: {} scenes in {:.1} s)", p.scenes, t0.elapsed().as_secs_f64());
    r
}

fn stability(report: &mut Report, bank: &TemplateBank) {
    let default = TemplateBank::generated(&DISTORTION).unwrap();
    let sel = study(bank, StudyKind::Stability, |_| {});
    let def = study(&default, StudyKind::Stability, |_| {});
    let mut pass = true;
    let mut detail = vec![];
    for c in DISTORTION {
        let a = sel.group(c, 0.0).unwrap().log10_rel_lambda_err.median;
        let b = def.group(c, 0.0).unwrap().log10_rel_lambda_err.median;
        pass &= a <= -6.0 && a < b;
        detail.push(format!("{c} median log10 err {a:.2} (standard basis {b:.2})"));
    }
    report.record(1, "stability", pass, detail.join(", "));
}

fn proposal(report: &mut Report, bank: &TemplateBank) {
    let r = study(bank, StudyKind::Proposal, |_| {});
    let mut pass = true;
    let mut detail = vec![];
    for c in DISTORTION {
        let g = r.group(c, 1.0).unwrap();
        pass &= g.frac_good_warp >= 0.40;
        detail.push(format!("{c} {:.1}% below 5 px", 100.0 * g.frac_good_warp));
    }
    report.record(2, "proposal quality", pass, detail.join(", "));
}

fn sensitivity(bank: &TemplateBank, motion: Motion) -> StudyResult {
    study(bank, StudyKind::Sensitivity, |p| {
        p.sigmas = vec![2.0];
        p.motion = motion;
    })
}

fn sensitivity_pass(report: &mut Report, r: &StudyResult) {
    let mut pass = true;
    let mut detail = vec![];
    for c in DISTORTION {
        let g = r.group(c, 2.0).unwrap();
        pass &= g.frac_good_warp >= 0.65 && g.rel_lambda_err.median < 0.1;
        detail.push(format!(
            "{c} {:.1}% below 5 px, median rel err {:.3}",
            100.0 * g.frac_good_warp,
            g.rel_lambda_err.median
        ));
    }
    report.record(3, "sensitivity", pass, detail.join(", "));
}

fn rigid_parity(report: &mut Report, ct: &StudyResult, rigid: &StudyResult) {
    let mut pass = true;
    let mut detail = vec![];
    for c in DISTORTION {
        let (a, b) = (ct.group(c, 2.0).unwrap(), rigid.group(c, 2.0).unwrap());
        let diff = 100.0 * (a.frac_good_warp - b.frac_good_warp).abs();
        pass &= diff <= 10.0;
        detail.push(format!("{c} ct {:.1}% rigid {:.1}%", 100.0 * a.frac_good_warp, 100.0 * b.frac_good_warp));
    }
    report.record(5, "rigid parity", pass, detail.join(", "));
}

fn solutions(report: &mut Report, bank: &TemplateBank) -> StudyResult {
    let r = study(bank, StudyKind::Solutions, |p| p.solvers = Configuration::ALL.to_vec());
    let mut pass = true;
    let mut detail = vec![];
    for c in Configuration::ALL {
        let g = r.group(c, 0.0).unwrap();
        let max_real = g.real_hist.len() - 1;
        pass &= max_real <= c.expected_solutions();
        let mut d = format!("{c} max {max_real}/{}", c.expected_solutions());
        if c.estimates_distortion() {
            let single = g.feasible_hist.get(1).copied().unwrap_or(0) as f64 / g.n as f64;
            pass &= single >= 0.90;
            d += &format!(" single feasible {:.1}%", 100.0 * single);
        }
        detail.push(d);
    }
    report.record(4, "solution counts", pass, detail.join(", "));
    r
}

fn properties(report: &mut Report, bank: &TemplateBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 6];

    for _ in 0..10_000 {
        let (x, y, lambda) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-8.0..0.5));
        let d = DivisionModel::new(lambda);
        let u = undistort_point(Point2H::from_xy(x, y), &d);
        if u.w < 0.05 {
            continue;
        }
        let b = distort_point(u, &d).unwrap().xy();
        worst[0] = worst[0].max((b[0] - x).abs().max((b[1] - y).abs()));
    }

    for seed in 0..200 {
        let motion = if seed % 2 == 0 { Motion::ConjugateTranslation } else { Motion::Rigid };
        let s = scene_with(10_000 + seed, motion, None);
        for m in s.cluster_members() {
            let s0 = rectified_scale(&s.frames[m[0]], &s.gt_model).unwrap();
            for &i in &m[1..] {
                worst[1] = worst[1].max(rel(rectified_scale(&s.frames[i], &s.gt_model).unwrap(), s0));
            }
        }
        worst[2] = worst[2].max(warp_error(&s.gt_model, &s).rms);

        let mut m = s.gt_model;
        m.line.l1 += 0.02;
        let a = [1.3, 0.2, 0.1, -0.4, 0.9, -0.3];
        let base = warp_error(&m, &s).rms;
        let moved = warp_error_map(&s, |p| {
            let r = rectify_point(p, &m);
            let (x, y) = (r.x / r.w, r.y / r.w);
            Some([a[0] * x + a[1] * y + a[2], a[3] * x + a[4] * y + a[5]])
        })
        .rms;
        worst[3] = worst[3].max((moved - base).abs() / (1.0 + base));

        for c in Configuration::ALL {
            let sys = prepare_system(&scene_sample(&s, c).unwrap(), Some(s.gt_model.lambda())).unwrap();
            let t = s.gt_model;
            worst[4] = worst[4].max(sys.relative_residual(&sys.scale([t.lambda(), t.line.l1, t.line.l2])));
        }

        let mut nrng = ChaCha8Rng::seed_from_u64(seed);
        let fs = FrameSet::from_scene(&s, Some(add_noise(&s.frames, 1.0, &s.image, &mut nrng).unwrap())).unwrap();
        let all: Vec<usize> = (0..fs.frames.len()).collect();
        let t = s.gt_model;
        let x = [t.lambda(), t.line.l1, t.line.l2];
        let g = lo_gradient(&t, &fs, &all).unwrap();
        for v in 0..3 {
            let h = 1e-6 * (1.0 + x[v].abs());
            let at = |d: f64| {
                let mut y = x;
                y[v] += d;
                lo_objective(&rr_core::geometry::RectifyModel::new(y[0], y[1], y[2]), &fs, &all).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            worst[5] = worst[5].max((g[v] - fd).abs() / g[v].abs().max(fd.abs()).max(1e-3));
        }
    }

    let n = scenes(1000);
    let mut hits = 0;
    for seed in 0..n as u64 {
        let s = scene_with(20_000 + seed, Motion::ConjugateTranslation, Some(0.0));
        let sample = scene_sample(&s, Configuration::C22Fixed).unwrap();
        let l = s.gt_model.line;
        if let Ok(sol) = solve_minimal_with(bank, &sample, Some(0.0), &Default::default()) {
            hits += sol
                .candidates
                .iter()
                .any(|c| (c.model.line.l1 - l.l1).hypot(c.model.line.l2 - l.l2) <= 1e-6 * l.norm())
                as usize;
        }
    }
    let frac = hits as f64 / n as f64;

    let limits = [1e-10, 1e-9, 1e-8, 1e-9, 1e-9, 1e-5];
    let names = ["round trip", "equal scale", "truth warp", "affine invariance", "residual at truth", "gradient"];
    let mut pass = frac >= 0.95;
    let mut detail: Vec<String> = vec![];
    for k in 0..6 {
        pass &= worst[k] <= limits[k];
        detail.push(format!("{} {:.1e}/{:.0e}", names[k], worst[k], limits[k]));
    }
    detail.push(format!("pinhole line recovery {:.1}%", 100.0 * frac));
    report.record(6, "properties", pass, detail.join(", "));
}

fn runtime(report: &mut Report, r: &StudyResult) {
    let mut pass = true;
    let mut detail = vec![];
    for c in Configuration::ALL {
        let mut t: Vec<f64> = r.records.iter().filter(|x| x.solver == c).map(|x| x.runtime_ms).collect();
        t.sort_by(f64::total_cmp);
        let p99 = t[((t.len() - 1) as f64 * 0.99) as usize];
        pass &= p99 < 50.0;
        detail.push(format!(
            "{c} median {:.2} ms p99 {:.2} ms max {:.2} ms",
            t[t.len() / 2],
            p99,
            t.last().unwrap()
        ));
    }
    report.record(7, "runtime", pass, detail.join(", "));
}

#[test]
fn acceptance() {
    let bank = TemplateBank::builtin().unwrap();
    let mut report = Report { lines: vec![] };
    stability(&mut report, &bank);
    proposal(&mut report, &bank);
    let ct = sensitivity(&bank, Motion::ConjugateTranslation);
    sensitivity_pass(&mut report, &ct);
    let sol = solutions(&mut report, &bank);
    let rigid = sensitivity(&bank, Motion::Rigid);
    rigid_parity(&mut report, &ct, &rigid);
    properties(&mut report, &bank);
    runtime(&mut report, &sol);

    println!("\nsummary");
    for (_, line) in &report.lines {
        println!("{line}");
    }
    let failed: Vec<&String> = report.lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
}
