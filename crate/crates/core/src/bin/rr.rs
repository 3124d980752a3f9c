use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rr_core::constraints::Configuration;
use rr_core::geometry::{rectify_point, Normalization, RectifyModel, TOL_ALPHA};
use rr_core::io::{model_from_pixels, FrameFile, ModelParams, PointRecord, ResultFile};
use rr_core::polysolve::{sample_and_select, SelectionReport, SystemShape};
use rr_core::ransac::{estimate_with, RansacConfig, Scoring};
use rr_core::solvers::{solve_minimal_with, MinimalSample, TemplateBank};
use rr_core::synth::{add_noise, gen_scene, run_study_with, test_instances, Motion, SceneParams, StudyKind, StudyParams};
use rr_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rr", version, about = "Radially-distorted rectification from repeated planar frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select elimination templates by basis sampling and write them to a directory.
    GenTemplates(GenTemplatesArgs),
    /// Generate a synthetic scene and write it as a frame file.
    GenScene(GenSceneArgs),
    /// Solve one minimal sample taken from the start of a frame file.
    Solve(SolveArgs),
    /// Robust estimation over all frames of a frame file.
    Ransac(RansacArgs),
    /// Run a benchmark study and write per-scene CSV records.
    Bench(BenchArgs),
    /// Undistort and rectify every frame point with a given model.
    RectifyPoints(RectifyArgs),
}

#[derive(Args)]
struct TemplateDir {
    /// Directory of template files; built-in templates fill any gaps.
    #[arg(long, env = "RR_TEMPLATE_DIR")]
    templates: Option<PathBuf>,
}

impl TemplateDir {
    fn bank(&self) -> Result<TemplateBank> {
        let builtin = TemplateBank::builtin()?;
        match &self.templates {
            Some(dir) => {
                if !dir.is_dir() {
                    return Err(Error::InvalidInput(format!("template directory {} not found", dir.display())));
                }
                Ok(TemplateBank::from_dir(dir)?.or(&builtin))
            }
            None => Ok(builtin),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigArg {
    #[value(name = "222")]
    C222,
    #[value(name = "32")]
    C32,
    #[value(name = "4")]
    C4,
    #[value(name = "22")]
    C22,
}

impl From<ConfigArg> for Configuration {
    fn from(c: ConfigArg) -> Self {
        match c {
            ConfigArg::C222 => Configuration::C222,
            ConfigArg::C32 => Configuration::C32,
            ConfigArg::C4 => Configuration::C4,
            ConfigArg::C22 => Configuration::C22Fixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MotionArg {
    Ct,
    Rigid,
}

impl From<MotionArg> for Motion {
    fn from(m: MotionArg) -> Self {
        match m {
            MotionArg::Ct => Motion::ConjugateTranslation,
            MotionArg::Rigid => Motion::Rigid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Stability,
    Proposal,
    Sensitivity,
    Solutions,
}

impl From<StudyArg> for StudyKind {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::Stability => StudyKind::Stability,
            StudyArg::Proposal => StudyKind::Proposal,
            StudyArg::Sensitivity => StudyKind::Sensitivity,
            StudyArg::Solutions => StudyKind::Solutions,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    Consensus,
    Warp,
}

#[derive(Args)]
struct GenTemplatesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    candidates: usize,
    #[arg(long, default_value_t = 1000)]
    tests: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict to these configurations (repeatable).
    #[arg(long = "config", value_enum)]
    configs: Vec<ConfigArg>,
}

#[derive(Args)]
struct GenSceneArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ct")]
    motion: MotionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth distortion in normalized units; random when omitted.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Pixel noise added to the written frames.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 4)]
    frames_per_cluster: usize,
    /// Force a camera looking straight at the plane.
    #[arg(long)]
    fronto_parallel: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, value_enum, default_value = "222")]
    config: ConfigArg,
    /// Known distortion (normalized) for configuration 22; defaults to the file's ground truth.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[command(flatten)]
    templates: TemplateDir,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RansacArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, value_enum, default_value = "222")]
    config: ConfigArg,
    #[arg(long, default_value_t = 25)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative scale-consistency threshold.
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// Refine the best model on its inliers.
    #[arg(long)]
    lo: bool,
    /// Warp scoring needs a frame file exported with its scene.
    #[arg(long, value_enum, default_value = "consensus")]
    scoring: ScoringArg,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[command(flatten)]
    templates: TemplateDir,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    study: StudyArg,
    /// Scene count; the study's protocol default when omitted.
    #[arg(long)]
    scenes: Option<usize>,
    /// Comma-separated noise levels in pixels.
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, value_enum, default_value = "ct")]
    motion: MotionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solvers to run (repeatable); 222, 32 and 4 by default.
    #[arg(long = "config", value_enum)]
    configs: Vec<ConfigArg>,
    #[arg(long, default_value_t = 25)]
    iterations: usize,
    /// Ground-truth distortion in normalized units; the study default when omitted.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Write 0 in the runtime column for byte-reproducible output.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    templates: TemplateDir,
    /// CSV destination; a JSON summary is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RectifyArgs {
    #[arg(long)]
    frames: PathBuf,
    /// Model as `lambda,l1,l2`.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    model: Option<Vec<f64>>,
    /// The model is given in centered pixel units.
    #[arg(long)]
    pixels: bool,
    /// Use the ground truth stored in the frame file.
    #[arg(long, conflicts_with = "model")]
    ground_truth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn fixed_lambda(config: Configuration, given: Option<f64>, file: &FrameFile) -> Result<Option<f64>> {
    if config.estimates_distortion() {
        return Ok(None);
    }
    given
        .or_else(|| file.ground_truth.as_ref().map(|g| g.model.normalized.lambda))
        .map(Some)
        .ok_or_else(|| Error::InvalidInput("configuration 22 needs --lambda".into()))
}

fn gen_templates(a: GenTemplatesArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let configs: Vec<Configuration> = if a.configs.is_empty() {
        Configuration::ALL.to_vec()
    } else {
        a.configs.iter().map(|&c| c.into()).collect()
    };
    let mut reports: Vec<SelectionReport> = Vec::new();
    for config in configs {
        let tests = test_instances(config, a.tests, a.seed ^ 0x7e57)?;
        let (template, report) = sample_and_select(&SystemShape::for_config(config), a.candidates, &tests, a.seed)?;
        let path = TemplateBank::file_name(&a.out, config);
        template.save(&path)?;
        let sel = report.selected.map(|i| &report.candidates[i]);
        eprintln!(
            "{}: default median residual {:.3e}, selected {:.3e} ({} x {}) -> {}",
            config.solver_name(),
            report.default.median_residual,
            sel.map_or(f64::NAN, |c| c.median_residual),
            template.rows.len(),
            template.monomials.len(),
            path.display()
        );
        reports.push(report);
    }
    emit(&reports, Some(&a.out.join("selection_report.json")))
}

fn gen_scene_cmd(a: GenSceneArgs) -> Result<()> {
    let params = SceneParams {
        motion: a.motion.into(),
        lambda: a.lambda,
        n_clusters: a.clusters,
        frames_per_cluster: a.frames_per_cluster,
        fronto_parallel: a.fronto_parallel,
        ..SceneParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let scene = gen_scene(&mut rng, &params)?;
    let frames = add_noise(&scene.frames, a.sigma, &scene.image, &mut rng)?;
    FrameFile::from_scene(&scene, Some(&frames)).save(&a.out)
}

fn solve_cmd(a: SolveArgs) -> Result<()> {
    let file = FrameFile::load(&a.frames)?;
    let config: Configuration = a.config.into();
    let frames = file.normalized_frames();
    if frames.len() < config.frame_count() {
        return Err(Error::WrongSampleSize { expected: config.frame_count(), got: frames.len() });
    }
    let sample = MinimalSample::from_flat(config, &frames[..config.frame_count()])?;
    let bank = a.templates.bank()?;
    let fixed = fixed_lambda(config, a.lambda, &file)?;
    let sol = solve_minimal_with(&bank, &sample, fixed, &Default::default())?;
    let mut result = ResultFile::new("solve", file.normalization()).with_solution(config, &sol);
    result.candidates.retain(|c| c.feasible);
    emit(&result, a.out.as_deref())
}

fn ransac_cmd(a: RansacArgs) -> Result<()> {
    let file = FrameFile::load(&a.frames)?;
    let config: Configuration = a.config.into();
    let fs = file.frame_set()?;
    let cfg = RansacConfig {
        config,
        iterations: a.iterations,
        tau_s: a.tau,
        local_optimization: a.lo,
        seed: a.seed,
        scoring: match a.scoring {
            ScoringArg::Consensus => Scoring::Consensus,
            ScoringArg::Warp => Scoring::WarpError,
        },
        fixed_lambda: fixed_lambda(config, a.lambda, &file)?,
        ..RansacConfig::default()
    };
    let est = estimate_with(&a.templates.bank()?, &fs, &cfg)?;
    emit(&ResultFile::new("ransac", file.normalization()).with_estimate(config, &est), a.out.as_deref())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let kind: StudyKind = a.study.into();
    let mut params = StudyParams::for_kind(kind);
    if let Some(n) = a.scenes {
        params.scenes = n;
    }
    if !a.sigma.is_empty() {
        params.sigmas = a.sigma.clone();
    }
    if !a.configs.is_empty() {
        params.solvers = a.configs.iter().map(|&c| c.into()).collect();
    }
    if a.lambda.is_some() {
        params.lambda = a.lambda;
    }
    params.motion = a.motion.into();
    params.seed = a.seed;
    params.iterations = a.iterations;
    let result = run_study_with(&a.templates.bank()?, kind, &params)?;
    std::fs::write(&a.out, result.to_csv(!a.no_timing))?;
    emit(&result.summary, Some(&a.out.with_extension("summary.json")))
}

fn rectify_cmd(a: RectifyArgs) -> Result<()> {
    let file = FrameFile::load(&a.frames)?;
    let n: Normalization = file.normalization();
    let model: RectifyModel = if a.ground_truth {
        file.ground_truth
            .as_ref()
            .map(|g| g.model.model())
            .ok_or_else(|| Error::InvalidInput("frame file has no ground truth".into()))?
    } else {
        let v = a.model.clone().unwrap_or_else(|| vec![0.0, 0.0, 0.0]);
        if v.len() != 3 {
            return Err(Error::InvalidInput(format!("--model takes lambda,l1,l2, got {} values", v.len())));
        }
        let p = ModelParams { lambda: v[0], l1: v[1], l2: v[2] };
        if a.pixels {
            model_from_pixels(p, &n)
        } else {
            RectifyModel::new(p.lambda, p.l1, p.l2)
        }
    };
    let mut result = ResultFile::new("rectify-points", n);
    for (fi, (rec, f)) in file.frames.iter().zip(file.normalized_frames()).enumerate() {
        for k in 0..3 {
            let r = rectify_point(f.point(k), &model);
            let ok = r.w.abs() >= TOL_ALPHA && r.x.is_finite() && r.y.is_finite();
            result.points.push(PointRecord {
                frame: fi,
                point: k,
                input_px: rec.points[k],
                rectified: ok.then(|| [r.x / r.w, r.y / r.w]),
                flag: (!ok).then(|| Error::DegenerateAlpha(r.w.abs()).code().to_string()),
            });
        }
    }
    emit(&result, a.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTemplates(a) => gen_templates(a),
        Command::GenScene(a) => gen_scene_cmd(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Ransac(a) => ransac_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::RectifyPoints(a) => rectify_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = ErrorReport { error: e.code(), exit_code: code, message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(code as u8)
        }
    }
}
