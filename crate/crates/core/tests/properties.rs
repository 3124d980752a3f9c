mod common;

use common::{rel, scene_with};
use proptest::prelude::*;
use rr_core::constraints::{assemble_raw, condition_frames, equation_pairs, pair_constraint, Configuration};
use rr_core::geometry::{
    distort_point, orient_frame, rectified_scale, undistort_point, AffineFrame, DivisionModel, Normalization,
    Point2H, RectifyModel,
};
use rr_core::solvers::prepare_system;
use rr_core::synth::{plane_grid, scene_sample, warp_error, warp_error_map, Motion};

fn motion() -> impl Strategy<Value = Motion> {
    prop_oneof![Just(Motion::ConjugateTranslation), Just(Motion::Rigid)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distort_undistort_round_trip(x in -0.5f64..0.5, y in -0.5f64..0.5, lambda in -8.0f64..0.5) {
        let d = DivisionModel::new(lambda);
        let u = undistort_point(Point2H::from_xy(x, y), &d);
        // beyond w = 0 the image point lies past the fold of the model
        prop_assume!(u.w >= 0.05);
        let back = distort_point(u, &d).unwrap().xy();
        prop_assert!((back[0] - x).abs() <= 1e-10 && (back[1] - y).abs() <= 1e-10);
    }

    #[test]
    fn undistort_distort_round_trip(x in -2.0f64..2.0, y in -2.0f64..2.0, lambda in -8.0f64..0.5) {
        let d = DivisionModel::new(lambda);
        let Ok(p) = distort_point(Point2H::from_xy(x, y), &d) else { return Ok(()) };
        let back = undistort_point(p, &d).xy();
        let scale = 1.0 + x.abs().max(y.abs());
        prop_assert!((back[0] - x).abs() <= 1e-10 * scale && (back[1] - y).abs() <= 1e-10 * scale);
    }

    #[test]
    fn pixel_normalized_conversion_inverts(x in 0.0f64..4000.0, y in 0.0f64..3000.0, w in 100.0f64..4000.0, h in 100.0f64..3000.0) {
        let n = Normalization::new(w, h);
        let p = n.to_pixels(n.to_normalized([x, y]));
        prop_assert!((p[0] - x).abs() <= 1e-12 * (1.0 + x) && (p[1] - y).abs() <= 1e-12 * (1.0 + y));
    }

    #[test]
    fn repeats_have_equal_scale_at_truth(seed in 0u64..10_000, m in motion()) {
        let s = scene_with(seed, m, None);
        for members in s.cluster_members() {
            let scales: Vec<f64> = members.iter().map(|&i| rectified_scale(&s.frames[i], &s.gt_model).unwrap()).collect();
            for v in &scales {
                prop_assert!(rel(*v, scales[0]) < 1e-9, "{scales:?}");
            }
        }
    }

    #[test]
    fn assembled_systems_vanish_at_truth(seed in 0u64..10_000, c in 0usize..4) {
        let config = Configuration::ALL[c];
        let s = scene_with(seed, Motion::ConjugateTranslation, None);
        let sample = scene_sample(&s, config).unwrap();
        let m = s.gt_model;
        let sys = prepare_system(&sample, Some(m.lambda())).unwrap();
        let z = sys.scale([m.lambda(), m.line.l1, m.line.l2]);
        prop_assert!(sys.relative_residual(&z) <= 1e-9);
        prop_assert_eq!(sys.equations.len(), equation_pairs(config).len());
    }

    #[test]
    fn warp_error_of_truth_is_zero(seed in 0u64..10_000, m in motion()) {
        let s = scene_with(seed, m, None);
        let r = warp_error(&s.gt_model, &s);
        prop_assert!(r.rms <= 1e-8, "{}", r.rms);
        prop_assert!(r.rms >= 0.0);
    }

    #[test]
    fn warp_error_absorbs_affine_precomposition(
        seed in 0u64..10_000,
        a in prop::array::uniform6(-1.0f64..1.0),
        dl in -0.05f64..0.05,
    ) {
        let s = scene_with(seed, Motion::ConjugateTranslation, None);
        let a = [1.0 + 0.5 * a[0], 0.5 * a[1], a[2], 0.5 * a[3], 1.0 + 0.5 * a[4], a[5]];
        prop_assume!((a[0] * a[4] - a[1] * a[3]).abs() > 0.2);
        let mut m = s.gt_model;
        m.line.l1 += dl;
        let base = warp_error(&m, &s).rms;
        let moved = warp_error_map(&s, |p| {
            let r = rr_core::geometry::rectify_point(p, &m);
            let (x, y) = (r.x / r.w, r.y / r.w);
            Some([a[0] * x + a[1] * y + a[2], a[3] * x + a[4] * y + a[5]])
        }).rms;
        prop_assert!((moved - base).abs() <= 1e-9 * (1.0 + base), "{base} vs {moved}");
    }

    #[test]
    fn scale_residual_depends_only_on_ratios(seed in 0u64..10_000, k in 0.1f64..10.0) {
        // scaling every point by k scales every rectified scale by the same factor on
        // the undistorted pinhole model with the line rescaled by 1/k
        let s = scene_with(seed, Motion::ConjugateTranslation, Some(0.0));
        let m = s.gt_model;
        let mk = RectifyModel::new(0.0, m.line.l1 / k, m.line.l2 / k);
        let fr: Vec<AffineFrame> = s.frames.iter().map(|f| f.map(|p| [p[0] * k, p[1] * k])).collect();
        let r0 = rectified_scale(&s.frames[0], &m).unwrap() / rectified_scale(&s.frames[1], &m).unwrap();
        let r1 = rectified_scale(&fr[0], &mk).unwrap() / rectified_scale(&fr[1], &mk).unwrap();
        prop_assert!(rel(r1, r0) < 1e-9);
    }

    #[test]
    fn orientation_is_positive_and_idempotent(pts in prop::array::uniform6(-1.0f64..1.0)) {
        let f = AffineFrame::new([[pts[0], pts[1]], [pts[2], pts[3]], [pts[4], pts[5]]]);
        prop_assume!(f.det().abs() > 1e-6);
        let o = orient_frame(&f).unwrap();
        prop_assert!(o.det() > 0.0);
        prop_assert_eq!(orient_frame(&o).unwrap(), o);
    }

    #[test]
    fn conditioning_preserves_constraints(seed in 0u64..10_000) {
        let s = scene_with(seed, Motion::ConjugateTranslation, None);
        let frames: Vec<AffineFrame> = s.frames[..4].iter().map(|f| orient_frame(f).unwrap()).collect();
        let (c, sc) = condition_frames(&frames).unwrap();
        let raw = assemble_raw(Configuration::C4, &frames, None).unwrap();
        let cond = rr_core::constraints::assemble(Configuration::C4, &c, sc, None).unwrap();
        let m = s.gt_model;
        let z = [m.lambda(), m.line.l1, m.line.l2];
        prop_assert!(raw.relative_residual(&z) < 1e-9);
        prop_assert!(cond.relative_residual(&cond.scale(z)) < 1e-9);
        let _ = pair_constraint(&frames[0], &frames[1]).unwrap();
    }

    #[test]
    fn grid_spans_the_frames(seed in 0u64..10_000) {
        let s = scene_with(seed, Motion::ConjugateTranslation, None);
        let g = plane_grid(&s);
        prop_assert_eq!(g.len(), 100);
        let [x0, x1, y0, y1] = s.extent;
        prop_assert!(g.iter().all(|p| p[0] >= x0 - 1e-12 && p[0] <= x1 + 1e-12 && p[1] >= y0 - 1e-12 && p[1] <= y1 + 1e-12));
    }
}
