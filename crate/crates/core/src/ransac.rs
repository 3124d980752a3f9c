//! Cluster-aware sampling, scale-consistency consensus and local refinement.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::Configuration;
use crate::error::{Error, Result};
use crate::geometry::{AffineFrame, RectifyModel, TOL_ALPHA};
use crate::polysolve::SolveOptions;
use crate::solvers::{solve_minimal_with, MinimalSample, TemplateBank};
use crate::synth::{warp_error, SyntheticScene};

/// Frames with their appearance-cluster ids.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<AffineFrame>,
    /// Cluster id per frame; ids are `0..n_clusters` with none missing.
    pub clusters: Vec<usize>,
    /// Ground truth, required by warp-error scoring.
    pub scene: Option<Box<SyntheticScene>>,
}

impl FrameSet {
    pub fn new(frames: Vec<AffineFrame>, clusters: Vec<usize>) -> Result<Self> {
        if frames.len() != clusters.len() {
            return Err(Error::InvalidInput(format!(
                "{} frames but {} cluster ids",
                frames.len(),
                clusters.len()
            )));
        }
        let n = clusters.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n];
        for &c in &clusters {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("cluster ids must be contiguous from 0".into()));
        }
        Ok(Self { frames, clusters, scene: None })
    }

    /// The scene's frames, or a noisy copy of them, with the scene attached.
    pub fn from_scene(scene: &SyntheticScene, frames: Option<Vec<AffineFrame>>) -> Result<Self> {
        let mut fs = Self::new(frames.unwrap_or_else(|| scene.frames.clone()), scene.clusters.clone())?;
        if fs.frames.len() != scene.frames.len() {
            return Err(Error::InvalidInput("frame count differs from the scene".into()));
        }
        fs.scene = Some(Box::new(scene.clone()));
        Ok(fs)
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.clusters.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// How hypotheses are ranked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Scale-consistency consensus; score in `[0, n_clusters]`.
    #[default]
    Consensus,
    /// Negated warp error against the attached ground truth.
    WarpError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacConfig {
    pub config: Configuration,
    pub iterations: usize,
    /// Relative scale difference under which two frames agree.
    pub tau_s: f64,
    pub local_optimization: bool,
    pub seed: u64,
    pub scoring: Scoring,
    /// Known distortion for [`Configuration::C22Fixed`].
    pub fixed_lambda: Option<f64>,
    pub solve: SolveOptions,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            config: Configuration::C222,
            iterations: 25,
            tau_s: 0.1,
            local_optimization: false,
            seed: 0,
            scoring: Scoring::Consensus,
            fixed_lambda: None,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    /// Frames in at least one consistent pair, ascending.
    pub inliers: Vec<usize>,
    pub score: f64,
    /// Frames whose scale could not be evaluated.
    pub n_degenerate: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub model: RectifyModel,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub model: RectifyModel,
    pub inliers: Vec<usize>,
    /// Higher is better: the consensus score, or the negated warp error.
    pub score: f64,
    /// Iteration that produced the retained hypothesis.
    pub iteration: usize,
    pub warp_rms: Option<f64>,
    pub refinement: Option<Refinement>,
    /// Best score after each iteration.
    pub trace: Vec<f64>,
    /// Iterations whose sample was degenerate or produced no feasible model.
    pub n_failed: usize,
}

/// Draws a minimal sample: each group picks a cluster with probability
/// proportional to its size among clusters with enough unused frames, then
/// frames without replacement.
pub fn draw_sample<R: Rng + ?Sized>(fs: &FrameSet, config: Configuration, rng: &mut R) -> Result<MinimalSample> {
    let members = fs.cluster_members();
    let mut used = vec![false; fs.frames.len()];
    let mut groups = Vec::with_capacity(config.group_sizes().len());
    for &need in config.group_sizes() {
        let free: Vec<Vec<usize>> = members
            .iter()
            .map(|m| m.iter().copied().filter(|&i| !used[i]).collect())
            .collect();
        let weights: Vec<usize> = members
            .iter()
            .zip(&free)
            .map(|(m, f)| if f.len() >= need { m.len() } else { 0 })
            .collect();
        let total: usize = weights.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "no cluster has {need} unused frames for configuration {config}"
            )));
        }
        let mut pick = rng.random_range(0..total);
        let cluster = weights
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .expect("pick is below the total weight");
        let mut pool = free[cluster].clone();
        let mut group = Vec::with_capacity(need);
        for _ in 0..need {
            let i = pool.swap_remove(rng.random_range(0..pool.len()));
            used[i] = true;
            group.push(fs.frames[i]);
        }
        groups.push(group);
    }
    MinimalSample::new(config, groups)
}

/// Log-magnitude of the rectified scale and its gradient in `(lambda, l1, l2)`.
fn log_scale(f: &AffineFrame, m: &RectifyModel) -> Option<(f64, [f64; 3])> {
    let p = f.pts;
    let rsq = p.map(|q| q[0] * q[0] + q[1] * q[1]);
    let a: [f64; 3] =
        std::array::from_fn(|k| m.line.l1 * p[k][0] + m.line.l2 * p[k][1] + 1.0 + m.lambda() * rsq[k]);
    if a.iter().any(|v| v.abs() < TOL_ALPHA) {
        return None;
    }
    let minor = |i: usize, j: usize| p[i][0] * p[j][1] - p[j][0] * p[i][1];
    let w = [minor(1, 2), -minor(0, 2), minor(0, 1)];
    let num: f64 = (0..3).map(|k| w[k] * a[k]).sum();
    if !(num.abs() > 0.0) {
        return None;
    }
    let grad_alpha = |k: usize| [rsq[k], p[k][0], p[k][1]];
    let mut g = [0.0; 3];
    for k in 0..3 {
        let da = grad_alpha(k);
        for v in 0..3 {
            g[v] += da[v] * (w[k] / num - 1.0 / a[k]);
        }
    }
    let value = num.abs().ln() - a.iter().map(|v| v.abs().ln()).sum::<f64>();
    Some((value, g))
}

fn inlier_pairs(fs: &FrameSet, inliers: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, &i) in inliers.iter().enumerate() {
        for &j in &inliers[a + 1..] {
            if fs.clusters[i] == fs.clusters[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn residuals(fs: &FrameSet, pairs: &[(usize, usize)], m: &RectifyModel) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut r = DVector::zeros(pairs.len());
    let mut jac = DMatrix::zeros(pairs.len(), 3);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (si, gi) = log_scale(&fs.frames[i], m)?;
        let (sj, gj) = log_scale(&fs.frames[j], m)?;
        r[k] = si - sj;
        for v in 0..3 {
            jac[(k, v)] = gi[v] - gj[v];
        }
    }
    Some((r, jac))
}

/// Sum over same-cluster inlier pairs of squared log-scale differences.
pub fn lo_objective(model: &RectifyModel, fs: &FrameSet, inliers: &[usize]) -> Option<f64> {
    residuals(fs, &inlier_pairs(fs, inliers), model).map(|(r, _)| r.norm_squared())
}

/// Analytic gradient of [`lo_objective`] in `(lambda, l1, l2)`.
pub fn lo_gradient(model: &RectifyModel, fs: &FrameSet, inliers: &[usize]) -> Option<[f64; 3]> {
    let (r, jac) = residuals(fs, &inlier_pairs(fs, inliers), model)?;
    let g = jac.transpose() * r * 2.0;
    Some([g[0], g[1], g[2]])
}

fn with_params(m: &RectifyModel, x: &[f64; 3]) -> RectifyModel {
    RectifyModel::new(x[0], x[1], x[2]).with_center(m.distortion.center)
}

/// Levenberg-Marquardt on [`lo_objective`]; only steps that lower the
/// objective are taken. With `free_lambda` unset the distortion is held fixed.
pub fn local_optimize(model: &RectifyModel, fs: &FrameSet, inliers: &[usize], free_lambda: bool) -> Refinement {
    let pairs = inlier_pairs(fs, inliers);
    let unchanged = |cost: f64| Refinement { model: *model, initial_cost: cost, final_cost: cost, iterations: 0 };
    let Some((mut r, mut jac)) = residuals(fs, &pairs, model) else {
        return unchanged(f64::INFINITY);
    };
    let initial_cost = r.norm_squared();
    if pairs.is_empty() {
        return unchanged(initial_cost);
    }
    let vars: &[usize] = if free_lambda { &[0, 1, 2] } else { &[1, 2] };
    let mut x = [model.lambda(), model.line.l1, model.line.l2];
    let mut cost = initial_cost;
    let mut mu = 1e-3;
    let mut iterations = 0;
    for _ in 0..50 {
        if cost == 0.0 {
            break;
        }
        let j = jac.select_columns(vars);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = jtj.clone();
            for k in 0..vars.len() {
                damped[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else { break };
            let mut cand = x;
            for (k, &v) in vars.iter().enumerate() {
                cand[v] += step[k];
            }
            let m = with_params(model, &cand);
            match residuals(fs, &pairs, &m) {
                Some((rc, jc)) if rc.norm_squared() < cost => {
                    let gain = cost - rc.norm_squared();
                    x = cand;
                    cost = rc.norm_squared();
                    r = rc;
                    jac = jc;
                    mu = (mu * 0.3).max(1e-12);
                    accepted = gain > 1e-15 * cost;
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }
    Refinement { model: with_params(model, &x), initial_cost, final_cost: cost, iterations }
}

/// Pairwise scale consistency within clusters.
pub fn consensus(fs: &FrameSet, model: &RectifyModel, tau_s: f64) -> Consensus {
    let mut out = Consensus::default();
    let mut inlier = vec![false; fs.frames.len()];
    for members in fs.cluster_members() {
        let scales: Vec<Option<f64>> = members
            .iter()
            .map(|&i| crate::geometry::rectified_scale(&fs.frames[i], model).ok())
            .collect();
        out.n_degenerate += scales.iter().filter(|s| s.is_none()).count();
        let n = members.len();
        if n < 2 {
            continue;
        }
        let mut consistent = 0usize;
        for a in 0..n {
            for b in a + 1..n {
                let (Some(sa), Some(sb)) = (scales[a], scales[b]) else { continue };
                let denom = sa.abs().max(sb.abs());
                if denom > 0.0 && (sa - sb).abs() / denom < tau_s {
                    consistent += 1;
                    inlier[members[a]] = true;
                    inlier[members[b]] = true;
                }
            }
        }
        out.score += consistent as f64 / (n * (n - 1) / 2) as f64;
    }
    out.inliers = (0..fs.frames.len()).filter(|&i| inlier[i]).collect();
    out
}

/// Robust estimation with the process-wide template bank.
pub fn estimate(fs: &FrameSet, cfg: &RansacConfig) -> Result<Estimate> {
    estimate_with(TemplateBank::shared(), fs, cfg)
}

pub fn estimate_with(bank: &TemplateBank, fs: &FrameSet, cfg: &RansacConfig) -> Result<Estimate> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    if !(cfg.tau_s > 0.0) {
        return Err(Error::InvalidInput("tau_s must be positive".into()));
    }
    if !cfg.config.estimates_distortion() && cfg.fixed_lambda.is_none() {
        return Err(Error::InvalidInput("the fixed-distortion solver needs lambda".into()));
    }
    let scene = match cfg.scoring {
        Scoring::WarpError => Some(
            fs.scene
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("warp-error scoring needs ground truth".into()))?,
        ),
        Scoring::Consensus => None,
    };

    let mut best: Option<(f64, RectifyModel, usize)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut n_failed = 0;
    for it in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(it as u64);
        let sample = draw_sample(fs, cfg.config, &mut rng)?;
        let mut any = false;
        if let Ok(sol) = solve_minimal_with(bank, &sample, cfg.fixed_lambda, &cfg.solve) {
            for c in sol.feasible() {
                any = true;
                let score = match scene {
                    Some(s) => -warp_error(&c.model, s).rms,
                    None => consensus(fs, &c.model, cfg.tau_s).score,
                };
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, c.model, it));
                }
            }
        }
        if !any {
            n_failed += 1;
        }
        trace.push(best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0));
    }
    let Some((mut score, mut model, iteration)) = best else {
        return Err(Error::NoValidModel);
    };

    let mut cons = consensus(fs, &model, cfg.tau_s);
    let mut refinement = None;
    if cfg.local_optimization && cons.inliers.len() >= cfg.config.frame_count() {
        let r = local_optimize(&model, fs, &cons.inliers, cfg.config.estimates_distortion());
        if r.final_cost < r.initial_cost {
            model = r.model;
            cons = consensus(fs, &model, cfg.tau_s);
            score = match scene {
                Some(s) => -warp_error(&model, s).rms,
                None => cons.score,
            };
        }
        refinement = Some(r);
    }
    let warp_rms = scene.map(|s| warp_error(&model, s).rms);
    Ok(Estimate { model, inliers: cons.inliers, score, iteration, warp_rms, refinement, trace, n_failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_scene, SceneParams};

    fn scene(seed: u64) -> SyntheticScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gen_scene(&mut rng, &SceneParams::default()).unwrap()
    }

    #[test]
    fn single_cluster_of_four() {
        let s = scene(1);
        let fs = FrameSet::new(s.frames[..4].to_vec(), vec![0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = draw_sample(&fs, Configuration::C4, &mut rng).unwrap();
        let mut got = sample.frames();
        let mut want = fs.frames.clone();
        let key = |f: &AffineFrame| (f.pts[1][0] * 1e9) as i64;
        got.sort_by_key(key);
        want.sort_by_key(key);
        assert_eq!(got, want);
    }

    #[test]
    fn insufficient_clusters() {
        let s = scene(2);
        let fs = FrameSet::new(s.frames[..3].to_vec(), vec![0, 0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(draw_sample(&fs, Configuration::C4, &mut rng), Err(Error::InsufficientData(_))));
        assert!(matches!(draw_sample(&fs, Configuration::C222, &mut rng), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn non_contiguous_ids_rejected() {
        let s = scene(3);
        assert!(FrameSet::new(s.frames[..2].to_vec(), vec![0, 2]).is_err());
        assert!(FrameSet::new(s.frames[..2].to_vec(), vec![0]).is_err());
    }

    #[test]
    fn truth_is_fully_consistent() {
        let s = scene(4);
        let fs = FrameSet::from_scene(&s, None).unwrap();
        let c = consensus(&fs, &s.gt_model, 0.1);
        assert!((c.score - s.n_clusters() as f64).abs() < 1e-12);
        assert_eq!(c.inliers.len(), s.frames.len());
        let empty = FrameSet::new(vec![], vec![]).unwrap();
        assert_eq!(consensus(&empty, &s.gt_model, 0.1).score, 0.0);
    }

    #[test]
    fn truth_is_stationary() {
        let s = scene(5);
        let fs = FrameSet::from_scene(&s, None).unwrap();
        let all: Vec<usize> = (0..fs.frames.len()).collect();
        let r = local_optimize(&s.gt_model, &fs, &all, true);
        assert!(r.initial_cost < 1e-20);
        assert!((r.model.lambda() - s.gt_model.lambda()).abs() < 1e-10);
        assert!((r.model.line.l1 - s.gt_model.line.l1).abs() < 1e-10);
    }
}
