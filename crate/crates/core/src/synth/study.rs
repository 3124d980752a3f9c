use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{add_noise, gen_scene, Motion, SceneParams, SyntheticScene};
use super::warp::warp_error;
use crate::constraints::Configuration;
use crate::error::{Error, Result};
use crate::geometry::RectifyModel;
use crate::polysolve::{SolveOptions, TestInstance};
use crate::ransac::{draw_sample, estimate_with, FrameSet, RansacConfig, Scoring};
use crate::solvers::{prepare_system, solve_minimal_with, MinimalSample, TemplateBank};

/// Independent generator for scene `index` of a run seeded with `seed`.
pub fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The first frames of consecutive clusters, shaped for `config`.
pub fn scene_sample(scene: &SyntheticScene, config: Configuration) -> Result<MinimalSample> {
    let members = scene.cluster_members();
    let mut groups = Vec::new();
    for (g, &n) in config.group_sizes().iter().enumerate() {
        let m = members
            .get(g)
            .filter(|m| m.len() >= n)
            .ok_or_else(|| Error::InsufficientData(format!("scene lacks a cluster of {n} frames")))?;
        groups.push(m[..n].iter().map(|&i| scene.frames[i]).collect());
    }
    MinimalSample::new(config, groups)
}

/// Noiseless systems from random scenes with their conditioned ground truth.
/// Scenes whose sample is degenerate are skipped.
pub fn test_instances(config: Configuration, n: usize, seed: u64) -> Result<Vec<TestInstance>> {
    let params = SceneParams::default();
    let mut out = Vec::with_capacity(n);
    let mut index = 0u64;
    while out.len() < n {
        let mut rng = scene_rng(seed, index);
        index += 1;
        let scene = gen_scene(&mut rng, &params)?;
        let sample = scene_sample(&scene, config)?;
        let m = scene.gt_model;
        let Ok(system) = prepare_system(&sample, Some(m.lambda())) else { continue };
        let truth = system.scale([m.lambda(), m.line.l1, m.line.l2]);
        out.push(TestInstance { system, truth });
        if index > 10 * n as u64 + 100 {
            return Err(Error::InsufficientData("too many degenerate scenes".into()));
        }
    }
    Ok(out)
}

/// The four benchmark studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Noiseless raw solver accuracy, no polishing.
    Stability,
    /// Best feasible candidate of one noisy minimal sample.
    Proposal,
    /// Robust estimation with warp-error scoring.
    Sensitivity,
    /// Real and feasible solution counts on noiseless data.
    Solutions,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Stability => "stability",
            StudyKind::Proposal => "proposal",
            StudyKind::Sensitivity => "sensitivity",
            StudyKind::Solutions => "solutions",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stability" => Ok(StudyKind::Stability),
            "proposal" => Ok(StudyKind::Proposal),
            "sensitivity" => Ok(StudyKind::Sensitivity),
            "solutions" => Ok(StudyKind::Solutions),
            _ => Err(Error::InvalidInput(format!("unknown study '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyParams {
    pub scenes: usize,
    /// Noise levels in pixels; noiseless studies use only the first.
    pub sigmas: Vec<f64>,
    pub solvers: Vec<Configuration>,
    pub motion: Motion,
    /// Fixed ground-truth distortion; drawn per scene when absent.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub iterations: usize,
    pub scene: SceneParams,
}

impl StudyParams {
    /// Defaults of the benchmark protocol for one study.
    pub fn for_kind(kind: StudyKind) -> Self {
        let (sigmas, lambda, scenes) = match kind {
            StudyKind::Stability => (vec![0.0], None, 1000),
            StudyKind::Proposal => (vec![1.0], Some(-4.0), 1000),
            StudyKind::Sensitivity => (vec![0.1, 0.5, 1.0, 2.0, 5.0], Some(-4.0), 1000),
            StudyKind::Solutions => (vec![0.0], Some(-4.0), 5000),
        };
        Self {
            scenes,
            sigmas,
            solvers: vec![Configuration::C222, Configuration::C32, Configuration::C4],
            motion: Motion::ConjugateTranslation,
            lambda,
            seed: 0,
            iterations: 25,
            scene: SceneParams::default(),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub scene_id: usize,
    pub solver: Configuration,
    pub sigma: f64,
    /// Infinite when no model was found; NaN when not measured.
    pub warp_rms_px: f64,
    /// Relative distortion error; for the fixed-distortion solver the
    /// relative vanishing-line error.
    pub rel_lambda_err: f64,
    pub n_real: usize,
    pub n_feasible: usize,
    pub runtime_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Self { q1: f64::NAN, median: f64::NAN, q3: f64::NAN };
        }
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            let t = pos - lo as f64;
            if lo == hi || t == 0.0 {
                v[lo]
            } else {
                v[lo] + t * (v[hi] - v[lo])
            }
        };
        Self { q1: at(0.25), median: at(0.5), q3: at(0.75) }
    }
}

/// Statistics of one (solver, sigma) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub solver: Configuration,
    pub sigma: f64,
    pub n: usize,
    pub warp_rms_px: Quartiles,
    pub log10_rel_lambda_err: Quartiles,
    pub rel_lambda_err: Quartiles,
    /// Fraction of scenes with warp error below [`GOOD_WARP_PX`].
    pub frac_good_warp: f64,
    /// `hist[k]` scenes had `k` real solutions.
    pub real_hist: Vec<usize>,
    pub feasible_hist: Vec<usize>,
    pub runtime_ms: Quartiles,
    pub max_runtime_ms: f64,
}

/// Warp error under which a model counts as good.
pub const GOOD_WARP_PX: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub records: Vec<StudyRecord>,
    pub summary: Vec<GroupSummary>,
}

pub const CSV_HEADER: &str = "scene_id,solver,sigma,warp_rms_px,rel_lambda_err,n_real,n_feasible,runtime_ms";

impl StudyResult {
    /// Records as CSV; with `timing` unset the runtime column is written as 0
    /// so output is reproducible byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let rt = if timing { r.runtime_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scene_id,
                r.solver.solver_name(),
                r.sigma,
                r.warp_rms_px,
                r.rel_lambda_err,
                r.n_real,
                r.n_feasible,
                rt
            ));
        }
        out
    }

    pub fn group(&self, solver: Configuration, sigma: f64) -> Option<&GroupSummary> {
        self.summary.iter().find(|g| g.solver == solver && g.sigma == sigma)
    }
}

fn summarize(records: &[StudyRecord], solvers: &[Configuration], sigmas: &[f64]) -> Vec<GroupSummary> {
    let mut out = Vec::new();
    for &solver in solvers {
        for &sigma in sigmas {
            let rs: Vec<&StudyRecord> = records.iter().filter(|r| r.solver == solver && r.sigma == sigma).collect();
            if rs.is_empty() {
                continue;
            }
            let hist = |f: fn(&StudyRecord) -> usize| {
                let mut h = vec![0usize; rs.iter().map(|r| f(r)).max().unwrap_or(0) + 1];
                for r in &rs {
                    h[f(r)] += 1;
                }
                h
            };
            let n = rs.len();
            out.push(GroupSummary {
                solver,
                sigma,
                n,
                warp_rms_px: Quartiles::of(rs.iter().map(|r| r.warp_rms_px)),
                log10_rel_lambda_err: Quartiles::of(rs.iter().map(|r| r.rel_lambda_err.max(1e-17).log10())),
                rel_lambda_err: Quartiles::of(rs.iter().map(|r| r.rel_lambda_err)),
                frac_good_warp: rs.iter().filter(|r| r.warp_rms_px < GOOD_WARP_PX).count() as f64 / n as f64,
                real_hist: hist(|r| r.n_real),
                feasible_hist: hist(|r| r.n_feasible),
                runtime_ms: Quartiles::of(rs.iter().map(|r| r.runtime_ms)),
                max_runtime_ms: rs.iter().map(|r| r.runtime_ms).fold(0.0, f64::max),
            });
        }
    }
    out
}

fn rel_error(est: &RectifyModel, truth: &RectifyModel, config: Configuration) -> f64 {
    if config.estimates_distortion() {
        (est.lambda() - truth.lambda()).abs() / truth.lambda().abs()
    } else {
        let d = (est.line.l1 - truth.line.l1).hypot(est.line.l2 - truth.line.l2);
        d / truth.line.norm()
    }
}

fn empty_record(scene_id: usize, solver: Configuration, sigma: f64) -> StudyRecord {
    StudyRecord {
        scene_id,
        solver,
        sigma,
        warp_rms_px: f64::NAN,
        rel_lambda_err: f64::INFINITY,
        n_real: 0,
        n_feasible: 0,
        runtime_ms: 0.0,
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one study with the process-wide template bank.
pub fn run_study(kind: StudyKind, params: &StudyParams) -> Result<StudyResult> {
    run_study_with(TemplateBank::shared(), kind, params)
}

pub fn run_study_with(bank: &TemplateBank, kind: StudyKind, params: &StudyParams) -> Result<StudyResult> {
    if params.sigmas.is_empty() || params.solvers.is_empty() {
        return Err(Error::InvalidInput("study needs at least one sigma and one solver".into()));
    }
    let sigmas: Vec<f64> = match kind {
        StudyKind::Stability | StudyKind::Solutions => vec![0.0],
        _ => params.sigmas.clone(),
    };
    let scene_params = SceneParams { motion: params.motion, lambda: params.lambda, ..params.scene.clone() };
    let mut records = Vec::with_capacity(params.scenes * sigmas.len() * params.solvers.len());
    for id in 0..params.scenes {
        let mut rng = scene_rng(params.seed, id as u64);
        let scene = gen_scene(&mut rng, &scene_params)?;
        let truth = scene.gt_model;
        for &sigma in &sigmas {
            let mut noise_rng = rng.clone();
            let frames = add_noise(&scene.frames, sigma, &scene.image, &mut noise_rng)?;
            let fs = FrameSet::from_scene(&scene, Some(frames))?;
            for &solver in &params.solvers {
                let fixed = Some(truth.lambda());
                let mut rec = empty_record(id, solver, sigma);
                match kind {
                    StudyKind::Stability => {
                        let opts = SolveOptions { polish: false, tol_res: f64::INFINITY, ..SolveOptions::default() };
                        let sample = scene_sample(&scene, solver)?;
                        let t0 = Instant::now();
                        let sol = solve_minimal_with(bank, &sample, fixed, &opts);
                        rec.runtime_ms = ms(t0);
                        if let Ok(sol) = sol {
                            rec.n_real = sol.candidates.len() + sol.n_line_degenerate;
                            rec.n_feasible = sol.feasible().count();
                            rec.rel_lambda_err = sol
                                .candidates
                                .iter()
                                .map(|c| rel_error(&c.model, &truth, solver))
                                .fold(f64::INFINITY, f64::min);
                        }
                    }
                    StudyKind::Solutions => {
                        let sample = scene_sample(&scene, solver)?;
                        let t0 = Instant::now();
                        let sol = solve_minimal_with(bank, &sample, fixed, &SolveOptions::default());
                        rec.runtime_ms = ms(t0);
                        if let Ok(sol) = sol {
                            rec.n_real = sol.candidates.len() + sol.n_line_degenerate;
                            rec.n_feasible = sol.feasible().count();
                            rec.rel_lambda_err = sol
                                .feasible()
                                .map(|c| rel_error(&c.model, &truth, solver))
                                .fold(f64::INFINITY, f64::min);
                        }
                    }
                    StudyKind::Proposal => {
                        let mut sample_rng = noise_rng.clone();
                        let sample = draw_sample(&fs, solver, &mut sample_rng)?;
                        let t0 = Instant::now();
                        let sol = solve_minimal_with(bank, &sample, fixed, &SolveOptions::default());
                        rec.runtime_ms = ms(t0);
                        rec.warp_rms_px = f64::INFINITY;
                        if let Ok(sol) = sol {
                            rec.n_real = sol.candidates.len() + sol.n_line_degenerate;
                            rec.n_feasible = sol.feasible().count();
                            for c in sol.feasible() {
                                let w = warp_error(&c.model, &scene).rms;
                                if w < rec.warp_rms_px || rec.rel_lambda_err.is_infinite() {
                                    rec.warp_rms_px = rec.warp_rms_px.min(w);
                                    rec.rel_lambda_err = rel_error(&c.model, &truth, solver);
                                }
                            }
                        }
                    }
                    StudyKind::Sensitivity => {
                        let cfg = RansacConfig {
                            config: solver,
                            iterations: params.iterations,
                            seed: params.seed.wrapping_add(id as u64),
                            scoring: Scoring::WarpError,
                            fixed_lambda: fixed,
                            ..RansacConfig::default()
                        };
                        let t0 = Instant::now();
                        let est = estimate_with(bank, &fs, &cfg);
                        rec.runtime_ms = ms(t0);
                        rec.warp_rms_px = f64::INFINITY;
                        if let Ok(est) = est {
                            rec.warp_rms_px = est.warp_rms.unwrap_or(f64::INFINITY);
                            rec.rel_lambda_err = rel_error(&est.model, &truth, solver);
                            rec.n_feasible = 1;
                            rec.n_real = 1;
                        }
                    }
                }
                records.push(rec);
            }
        }
    }
    let summary = summarize(&records, &params.solvers, &sigmas);
    Ok(StudyResult { kind, records, summary })
}
