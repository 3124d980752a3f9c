//! Minimal solvers for rectification with and without distortion estimation.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::constraints::{assemble, condition_frames, Configuration, ConstraintSystem};
use crate::error::{Error, Result};
use crate::geometry::{orient_frame, AffineFrame, RectifyModel, TOL_COLLINEAR};
use crate::polysolve::{generate_template, solve_with, BasisChoice, SolveOptions, SolverTemplate, SystemShape};

/// Radii spread below which a sample is treated as concentric.
pub const TOL_RADIUS: f64 = 1e-3;
/// Vanishing-line norms above this are read as a line through the origin.
pub const LINE_NORM_LIMIT: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyFlag {
    /// The imaged vanishing line passes (numerically) through the distortion center.
    VanishingLineThroughOrigin,
    /// All sample points lie on one circle about the distortion center.
    Concentric,
    /// A frame's points are collinear.
    Collinear,
}

/// Frames grouped by repeat identity, in normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalSample {
    pub config: Configuration,
    pub groups: Vec<Vec<AffineFrame>>,
}

impl MinimalSample {
    pub fn new(config: Configuration, groups: Vec<Vec<AffineFrame>>) -> Result<Self> {
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        if sizes != config.group_sizes() {
            let got = sizes.iter().sum();
            if got != config.frame_count() {
                return Err(Error::WrongSampleSize { expected: config.frame_count(), got });
            }
            return Err(Error::InvalidInput(format!(
                "group sizes {sizes:?} do not match {:?}",
                config.group_sizes()
            )));
        }
        Ok(Self { config, groups })
    }

    /// Splits a flat frame list by the configuration's group sizes.
    pub fn from_flat(config: Configuration, frames: &[AffineFrame]) -> Result<Self> {
        if frames.len() != config.frame_count() {
            return Err(Error::WrongSampleSize { expected: config.frame_count(), got: frames.len() });
        }
        let mut groups = Vec::new();
        let mut at = 0;
        for &n in config.group_sizes() {
            groups.push(frames[at..at + n].to_vec());
            at += n;
        }
        Ok(Self { config, groups })
    }

    pub fn frames(&self) -> Vec<AffineFrame> {
        self.groups.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCandidate {
    pub model: RectifyModel,
    pub residual: f64,
    pub feasible: bool,
}

/// Everything one solver call produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinimalSolution {
    /// Real candidates sorted by residual.
    pub candidates: Vec<ModelCandidate>,
    pub n_complex: usize,
    /// Candidates dropped because their vanishing line left the chart.
    pub n_line_degenerate: usize,
}

impl MinimalSolution {
    pub fn feasible(&self) -> impl Iterator<Item = &ModelCandidate> {
        self.candidates.iter().filter(|c| c.feasible)
    }
}

/// Pre-solve degeneracy flags of a sample.
pub fn check_degeneracy(sample: &MinimalSample) -> Vec<DegeneracyFlag> {
    let mut flags = Vec::new();
    let frames = sample.frames();
    if frames.iter().any(|f| !(f.det().abs() >= TOL_COLLINEAR)) {
        flags.push(DegeneracyFlag::Collinear);
    }
    let radii: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.pts.iter().map(|p| p[0].hypot(p[1])))
        .collect();
    if !radii.is_empty() {
        let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < TOL_RADIUS {
            flags.push(DegeneracyFlag::Concentric);
        }
    }
    flags
}

/// One elimination template per configuration.
#[derive(Clone, Debug, Default)]
pub struct TemplateBank {
    templates: [Option<Arc<SolverTemplate>>; 4],
}

fn slot(config: Configuration) -> usize {
    match config {
        Configuration::C222 => 0,
        Configuration::C32 => 1,
        Configuration::C4 => 2,
        Configuration::C22Fixed => 3,
    }
}

const BUILTIN: [&str; 4] = [
    include_str!("../templates/H222_l_lambda.json"),
    include_str!("../templates/H32_l_lambda.json"),
    include_str!("../templates/H4_l_lambda.json"),
    include_str!("../templates/H22_l.json"),
];

impl TemplateBank {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Templates shipped with the library.
    pub fn builtin() -> Result<Self> {
        let mut bank = Self::empty();
        for text in BUILTIN {
            bank.insert(SolverTemplate::from_json(text)?);
        }
        Ok(bank)
    }

    /// Standard-monomial templates generated on the spot; slower to build and
    /// numerically weaker than selected templates.
    pub fn generated(configs: &[Configuration]) -> Result<Self> {
        let mut bank = Self::empty();
        for &c in configs {
            bank.insert(generate_template(&SystemShape::for_config(c), BasisChoice::GRevLex)?);
        }
        Ok(bank)
    }

    /// Loads `<solver name>.json` for every configuration present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("template directory {} not found", dir.display()),
            )));
        }
        let mut bank = Self::empty();
        for c in Configuration::ALL {
            let p = Self::file_name(dir, c);
            if p.exists() {
                bank.insert(SolverTemplate::load(&p)?);
            }
        }
        Ok(bank)
    }

    pub fn file_name(dir: &Path, config: Configuration) -> std::path::PathBuf {
        dir.join(format!("{}.json", config.solver_name()))
    }

    pub fn insert(&mut self, t: SolverTemplate) {
        let i = slot(t.config);
        self.templates[i] = Some(Arc::new(t));
    }

    pub fn get(&self, config: Configuration) -> Result<&SolverTemplate> {
        self.templates[slot(config)]
            .as_deref()
            .ok_or_else(|| Error::MissingTemplate(config.to_string()))
    }

    /// Fills missing configurations from `other`.
    pub fn or(mut self, other: &TemplateBank) -> Self {
        for (mine, theirs) in self.templates.iter_mut().zip(&other.templates) {
            if mine.is_none() {
                mine.clone_from(theirs);
            }
        }
        self
    }

    /// Process-wide bank: `RR_TEMPLATE_DIR` when set, topped up with the built-in templates.
    pub fn shared() -> &'static TemplateBank {
        static BANK: OnceLock<TemplateBank> = OnceLock::new();
        BANK.get_or_init(|| {
            let builtin = TemplateBank::builtin().expect("built-in templates are valid");
            match std::env::var_os("RR_TEMPLATE_DIR") {
                Some(dir) => TemplateBank::from_dir(Path::new(&dir))
                    .map(|b| b.or(&builtin))
                    .unwrap_or(builtin),
                None => builtin,
            }
        })
    }
}

pub fn solve_minimal(
    bank: &TemplateBank,
    sample: &MinimalSample,
    fixed_lambda: Option<f64>,
) -> Result<MinimalSolution> {
    solve_minimal_with(bank, sample, fixed_lambda, &SolveOptions::default())
}

/// Checks, orients and conditions a sample and assembles its equations.
/// `fixed_lambda` is ignored by configurations that estimate distortion.
pub fn prepare_system(sample: &MinimalSample, fixed_lambda: Option<f64>) -> Result<ConstraintSystem> {
    let config = sample.config;
    let frames = sample.frames();
    if frames.len() != config.frame_count() {
        return Err(Error::WrongSampleSize { expected: config.frame_count(), got: frames.len() });
    }
    let flags = check_degeneracy(sample);
    if !flags.is_empty() {
        return Err(Error::DegenerateSample(flags));
    }
    let oriented = frames.iter().map(orient_frame).collect::<Result<Vec<_>>>()?;
    let (conditioned, scales) = condition_frames(&oriented)?;
    let fixed = if config.estimates_distortion() { None } else { fixed_lambda };
    assemble(config, &conditioned, scales, fixed)
}

/// Orients, conditions, assembles and solves one minimal sample; returns
/// candidates in normalized units.
pub fn solve_minimal_with(
    bank: &TemplateBank,
    sample: &MinimalSample,
    fixed_lambda: Option<f64>,
    opts: &SolveOptions,
) -> Result<MinimalSolution> {
    let template = bank.get(sample.config)?;
    let system = prepare_system(sample, fixed_lambda)?;
    let set = solve_with(template, &system, opts)?;

    let mut out = MinimalSolution { n_complex: set.n_complex, ..Default::default() };
    for s in &set.solutions {
        let z = system.unscale(s.values);
        let model = RectifyModel::new(z[0], z[1], z[2]);
        if !model.is_finite() {
            continue;
        }
        if model.line.norm() > LINE_NORM_LIMIT {
            out.n_line_degenerate += 1;
            continue;
        }
        out.candidates.push(ModelCandidate {
            model,
            residual: s.residual,
            feasible: model.distortion.is_feasible(),
        });
    }
    if out.candidates.is_empty() && out.n_line_degenerate > 0 {
        return Err(Error::DegenerateSample(vec![DegeneracyFlag::VanishingLineThroughOrigin]));
    }
    Ok(out)
}
