mod common;

use common::{rel, scene, scene_with};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rr_core::constraints::Configuration;
use rr_core::geometry::{AffineFrame, RectifyModel};
use rr_core::ransac::{
    consensus, draw_sample, estimate, local_optimize, lo_gradient, lo_objective, FrameSet, RansacConfig, Scoring,
};
use rr_core::solvers::{solve_minimal_with, TemplateBank};
use rr_core::synth::{add_noise, warp_error, Motion};
use rr_core::Error;

/// Frames tagged by index through their first coordinate.
fn tagged(sizes: &[usize]) -> FrameSet {
    let mut frames = vec![];
    let mut clusters = vec![];
    for (c, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            let t = frames.len() as f64 * 0.01;
            frames.push(AffineFrame::new([[t, 0.0], [t + 0.1, 0.0], [t, 0.1]]));
            clusters.push(c);
        }
    }
    FrameSet::new(frames, clusters).unwrap()
}

fn index_of(f: &AffineFrame) -> usize {
    (f.pts[0][0] / 0.01).round() as usize
}

#[test]
fn clusters_are_drawn_proportionally_to_size() {
    let sizes = [6, 3, 2];
    let fs = tagged(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        let s = draw_sample(&fs, Configuration::C222, &mut rng).unwrap();
        let first = index_of(&s.groups[0][0]);
        counts[fs.clusters[first]] += 1;
        for g in &s.groups {
            let c0 = fs.clusters[index_of(&g[0])];
            assert!(g.iter().all(|f| fs.clusters[index_of(f)] == c0));
        }
        let mut idx: Vec<usize> = s.frames().iter().map(index_of).collect();
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 6);
    }
    let total: usize = sizes.iter().sum();
    for (k, &n) in sizes.iter().enumerate() {
        let p = n as f64 / total as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let diff = (counts[k] as f64 - draws as f64 * p).abs();
        assert!(diff <= 3.0 * sd, "cluster {k}: {} vs {}", counts[k], draws as f64 * p);
    }
}

#[test]
fn only_large_enough_clusters_are_drawn() {
    let fs = tagged(&[10, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let s = draw_sample(&fs, Configuration::C4, &mut rng).unwrap();
        assert!(s.frames().iter().all(|f| fs.clusters[index_of(f)] == 0));
    }
}

#[test]
fn too_few_frames_is_insufficient_data() {
    let fs = tagged(&[3, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = draw_sample(&fs, Configuration::C4, &mut rng);
    assert!(matches!(r, Err(Error::InsufficientData(_))));
}

#[test]
fn frame_sets_are_validated() {
    let f = AffineFrame::new([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]);
    assert!(FrameSet::new(vec![f, f], vec![0]).is_err());
    assert!(FrameSet::new(vec![f, f], vec![0, 2]).is_err());
}

fn noisy(seed: u64, sigma: f64) -> (FrameSet, RectifyModel) {
    let s = scene(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let frames = add_noise(&s.frames, sigma, &s.image, &mut rng).unwrap();
    let m = s.gt_model;
    (FrameSet::from_scene(&s, Some(frames)).unwrap(), m)
}

#[test]
fn wrong_distortion_scores_lower() {
    let mut lower_cost = 0;
    for seed in 0..100 {
        let s = scene_with(seed, Motion::ConjugateTranslation, Some(-4.0));
        let fs = FrameSet::from_scene(&s, None).unwrap();
        let mut wrong = s.gt_model;
        wrong.distortion.lambda = 0.5;
        assert!(consensus(&fs, &wrong, 0.1).score < consensus(&fs, &s.gt_model, 0.1).score, "seed {seed}");

        let (fs, m) = noisy(seed, 1.0);
        let mut shifted = m;
        shifted.distortion.lambda = 0.5;
        let all: Vec<usize> = (0..fs.frames.len()).collect();
        lower_cost += (lo_objective(&m, &fs, &all).unwrap() < lo_objective(&shifted, &fs, &all).unwrap()) as usize;
    }
    assert!(lower_cost >= 95, "{lower_cost}/100");
}

#[test]
fn empty_frame_set_has_zero_consensus() {
    let fs = FrameSet::new(vec![], vec![]).unwrap();
    let c = consensus(&fs, &RectifyModel::identity(), 0.1);
    assert_eq!(c.score, 0.0);
    assert!(c.inliers.is_empty());
}

#[test]
fn single_cluster_of_four_is_drawn_whole() {
    let fs = tagged(&[4]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = draw_sample(&fs, Configuration::C4, &mut rng).unwrap();
    let mut idx: Vec<usize> = s.frames().iter().map(index_of).collect();
    idx.sort();
    assert_eq!(idx, vec![0, 1, 2, 3]);
}

#[test]
fn local_optimization_is_stationary_at_truth() {
    let s = scene(12);
    let fs = FrameSet::from_scene(&s, None).unwrap();
    let all: Vec<usize> = (0..fs.frames.len()).collect();
    let r = local_optimize(&s.gt_model, &fs, &all, true);
    let (a, b) = (r.model, s.gt_model);
    assert!((a.lambda() - b.lambda()).abs() <= 1e-10 * (1.0 + b.lambda().abs()));
    assert!((a.line.l1 - b.line.l1).abs() <= 1e-10 && (a.line.l2 - b.line.l2).abs() <= 1e-10);
}

#[test]
fn consensus_of_truth_is_perfect_without_noise() {
    let s = scene(11);
    let fs = FrameSet::from_scene(&s, None).unwrap();
    let c = consensus(&fs, &s.gt_model, 1e-6);
    assert_eq!(c.inliers.len(), fs.frames.len());
    assert!((c.score - fs.n_clusters() as f64).abs() < 1e-12);
}

#[test]
fn local_optimization_converges_from_nearby_start() {
    let mut ok = 0;
    for seed in 0..20 {
        let s = scene_with(seed, Motion::ConjugateTranslation, Some(-4.0));
        let fs = FrameSet::from_scene(&s, None).unwrap();
        let all: Vec<usize> = (0..fs.frames.len()).collect();
        let mut start = s.gt_model;
        start.distortion.lambda += 0.1;
        let r = local_optimize(&start, &fs, &all, true);
        assert!(r.final_cost <= r.initial_cost);
        ok += (rel(r.model.lambda(), -4.0) < 1e-6) as usize;
    }
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..10 {
        let (fs, m) = noisy(seed, 1.0);
        let all: Vec<usize> = (0..fs.frames.len()).collect();
        let g = lo_gradient(&m, &fs, &all).unwrap();
        let base = [m.lambda(), m.line.l1, m.line.l2];
        for v in 0..3 {
            let h = 1e-6 * (1.0 + base[v].abs());
            let at = |d: f64| {
                let mut x = base;
                x[v] += d;
                lo_objective(&RectifyModel::new(x[0], x[1], x[2]), &fs, &all).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let scale = g[v].abs().max(fd.abs()).max(1e-3);
            assert!((g[v] - fd).abs() <= 1e-5 * scale, "seed {seed} var {v}: {} vs {fd}", g[v]);
        }
    }
}

#[test]
fn noiseless_estimate_has_no_warp_error() {
    let s = scene(21);
    let fs = FrameSet::from_scene(&s, None).unwrap();
    let cfg = RansacConfig { scoring: Scoring::WarpError, ..RansacConfig::default() };
    let est = estimate(&fs, &cfg).unwrap();
    assert!(est.warp_rms.unwrap() < 1e-6, "{:?}", est.warp_rms);
}

#[test]
fn estimation_is_deterministic() {
    let (fs, _) = noisy(22, 1.0);
    for iterations in [1, 10] {
        let cfg = RansacConfig { iterations, seed: 77, ..RansacConfig::default() };
        assert_eq!(format!("{:?}", estimate(&fs, &cfg)), format!("{:?}", estimate(&fs, &cfg)));
    }
}

#[test]
fn best_score_trace_is_monotone() {
    let (fs, _) = noisy(23, 2.0);
    let cfg = RansacConfig { iterations: 30, config: Configuration::C4, ..RansacConfig::default() };
    let est = estimate(&fs, &cfg).unwrap();
    assert_eq!(est.trace.len(), 30);
    assert!(est.trace.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*est.trace.last().unwrap(), est.score);
}

#[test]
fn warp_scoring_keeps_the_best_proposal() {
    let s = scene(24);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let frames = add_noise(&s.frames, 1.0, &s.image, &mut rng).unwrap();
    let fs = FrameSet::from_scene(&s, Some(frames)).unwrap();
    let cfg = RansacConfig { iterations: 15, seed: 9, scoring: Scoring::WarpError, ..RansacConfig::default() };
    let est = estimate(&fs, &cfg).unwrap();
    let bank = TemplateBank::builtin().unwrap();
    let mut best = f64::INFINITY;
    for it in 0..cfg.iterations {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(it as u64);
        let sample = draw_sample(&fs, cfg.config, &mut r).unwrap();
        if let Ok(sol) = solve_minimal_with(&bank, &sample, None, &cfg.solve) {
            for c in sol.feasible() {
                best = best.min(warp_error(&c.model, &s).rms);
            }
        }
    }
    assert_eq!(est.warp_rms.unwrap(), best);
    assert!(warp_error(&s.gt_model, &s).rms <= best);
}

#[test]
fn invalid_configurations_are_rejected() {
    let (fs, _) = noisy(25, 0.0);
    let bad = [
        RansacConfig { iterations: 0, ..RansacConfig::default() },
        RansacConfig { tau_s: 0.0, ..RansacConfig::default() },
        RansacConfig { config: Configuration::C22Fixed, ..RansacConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(estimate(&fs, &cfg), Err(Error::InvalidInput(_))));
    }
    let plain = FrameSet::new(fs.frames.clone(), fs.clusters.clone()).unwrap();
    let cfg = RansacConfig { scoring: Scoring::WarpError, ..RansacConfig::default() };
    assert!(matches!(estimate(&plain, &cfg), Err(Error::InvalidInput(_))));
}

#[test]
fn fixed_distortion_solver_estimates_the_line() {
    let s = scene_with(26, Motion::ConjugateTranslation, Some(-2.0));
    let fs = FrameSet::from_scene(&s, None).unwrap();
    let cfg = RansacConfig {
        config: Configuration::C22Fixed,
        fixed_lambda: Some(-2.0),
        scoring: Scoring::WarpError,
        ..RansacConfig::default()
    };
    let est = estimate(&fs, &cfg).unwrap();
    assert_eq!(est.model.lambda(), -2.0);
    assert!(est.warp_rms.unwrap() < 1e-6);
}
