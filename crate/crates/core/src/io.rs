//! Versioned JSON documents exchanged by the command-line tool.
//!
//! Frame files carry points in pixels; the header states the normalization
//! used by every estimate (`scale = 1 / (width + height)`, origin at the image
//! center). Floating-point values are written in shortest round-trip form, so
//! reading a file back reproduces every value bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::constraints::Configuration;
use crate::error::{Error, Result};
use crate::geometry::{AffineFrame, Normalization, RectifyModel, VanishingLine};
use crate::ransac::{Estimate, FrameSet};
use crate::solvers::MinimalSolution;
use crate::synth::{Motion, SyntheticScene};

pub const FRAME_FILE_FORMAT: &str = "rr-frames";
pub const RESULT_FILE_FORMAT: &str = "rr-result";
pub const FILE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

/// Explicit statement of the normalized-coordinate convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationHeader {
    /// Multiplier from centered pixels to normalized units.
    pub scale: f64,
    /// Pixel position of the normalized origin and distortion center.
    pub center: [f64; 2],
    pub convention: String,
}

impl NormalizationHeader {
    pub fn for_image(n: &Normalization) -> Self {
        Self {
            scale: n.scale(),
            center: n.center(),
            convention: "x_norm = (x_px - center) / (width + height)".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub l1: f64,
    pub l2: f64,
}

/// A model in normalized units and in centered pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub normalized: ModelParams,
    pub pixels: ModelParams,
}

impl ModelRecord {
    pub fn new(m: &RectifyModel, n: &Normalization) -> Self {
        let lp = n.line_to_pixels(m.line);
        Self {
            normalized: ModelParams { lambda: m.lambda(), l1: m.line.l1, l2: m.line.l2 },
            pixels: ModelParams { lambda: n.lambda_to_pixels(m.lambda()), l1: lp.l1, l2: lp.l2 },
        }
    }

    pub fn model(&self) -> RectifyModel {
        RectifyModel::new(self.normalized.lambda, self.normalized.l1, self.normalized.l2)
    }
}

/// Model parameters given in pixel units, as accepted on the command line.
pub fn model_from_pixels(p: ModelParams, n: &Normalization) -> RectifyModel {
    let l = n.line_from_pixels(VanishingLine::new(p.l1, p.l2));
    RectifyModel::new(n.lambda_from_pixels(p.lambda), l.l1, l.l2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// y-point, origin, x-point in pixels.
    pub points: [[f64; 2]; 3],
    pub cluster: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: ModelRecord,
    /// Plane-to-image projection in pixels, row major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<[[f64; 4]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<Motion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub format: String,
    pub version: u32,
    pub image: ImageSize,
    pub normalization: NormalizationHeader,
    pub frames: Vec<FrameRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// The full synthetic scene, when the file was exported by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SyntheticScene>,
}

fn check_header(format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(Error::InvalidInput(format!("expected a '{expected}' document, found '{format}'")));
    }
    if version != FILE_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: FILE_VERSION });
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

impl FrameFile {
    pub fn new(image: Normalization, frames: Vec<FrameRecord>) -> Self {
        Self {
            format: FRAME_FILE_FORMAT.into(),
            version: FILE_VERSION,
            image: ImageSize { width: image.width, height: image.height },
            normalization: NormalizationHeader::for_image(&image),
            frames,
            ground_truth: None,
            scene: None,
        }
    }

    /// Exports a scene; `frames` replaces the noiseless frames when given.
    pub fn from_scene(scene: &SyntheticScene, frames: Option<&[AffineFrame]>) -> Self {
        let n = scene.image;
        let src = frames.unwrap_or(&scene.frames);
        let records = src
            .iter()
            .zip(&scene.clusters)
            .map(|(f, &cluster)| FrameRecord { points: f.pts.map(|p| n.to_pixels(p)), cluster })
            .collect();
        let mut file = Self::new(n, records);
        file.ground_truth = Some(GroundTruth {
            model: ModelRecord::new(&scene.gt_model, &n),
            camera: Some(scene.camera.projection()),
            motion: Some(scene.motion),
        });
        file.scene = Some(scene.clone());
        file
    }

    pub fn normalization(&self) -> Normalization {
        Normalization::new(self.image.width, self.image.height)
    }

    pub fn validate(&self) -> Result<()> {
        check_header(&self.format, FRAME_FILE_FORMAT, self.version)?;
        if !(self.image.width > 0.0 && self.image.height > 0.0) {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        let n = self.normalization();
        let expected = NormalizationHeader::for_image(&n);
        if self.normalization.center != expected.center
            || (self.normalization.scale - expected.scale).abs() > 1e-15 * expected.scale
        {
            return Err(Error::InvalidInput("normalization header does not match the image size".into()));
        }
        if self.frames.iter().any(|f| f.points.iter().flatten().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("frame points must be finite".into()));
        }
        FrameSet::new(vec![AffineFrame::new([[0.0; 2]; 3]); self.frames.len()], self.clusters())?;
        Ok(())
    }

    pub fn clusters(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.cluster).collect()
    }

    /// Frames in normalized coordinates, in file order.
    pub fn normalized_frames(&self) -> Vec<AffineFrame> {
        let n = self.normalization();
        self.frames.iter().map(|f| AffineFrame::new(f.points.map(|p| n.to_normalized(p)))).collect()
    }

    pub fn frame_set(&self) -> Result<FrameSet> {
        let mut fs = FrameSet::new(self.normalized_frames(), self.clusters())?;
        fs.scene = self.scene.clone().map(Box::new);
        Ok(fs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_json(path)?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub model: ModelRecord,
    pub feasible: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub model: ModelRecord,
    pub feasible: bool,
    pub score: f64,
    pub inliers: Vec<usize>,
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warp_rms_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub frame: usize,
    pub point: usize,
    pub input_px: [f64; 2],
    /// Rectified inhomogeneous coordinates in normalized units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectified: Option<[f64; 2]>,
    /// Error code when the point maps to infinity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub image: ImageSize,
    pub normalization: NormalizationHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Configuration>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointRecord>,
}

impl ResultFile {
    pub fn new(command: &str, image: Normalization) -> Self {
        Self {
            format: RESULT_FILE_FORMAT.into(),
            version: FILE_VERSION,
            command: command.into(),
            image: ImageSize { width: image.width, height: image.height },
            normalization: NormalizationHeader::for_image(&image),
            config: None,
            candidates: Vec::new(),
            estimate: None,
            points: Vec::new(),
        }
    }

    pub fn with_solution(mut self, config: Configuration, sol: &MinimalSolution) -> Self {
        let n = Normalization::new(self.image.width, self.image.height);
        self.config = Some(config);
        self.candidates = sol
            .candidates
            .iter()
            .map(|c| CandidateRecord { model: ModelRecord::new(&c.model, &n), feasible: c.feasible, residual: c.residual })
            .collect();
        self
    }

    pub fn with_estimate(mut self, config: Configuration, est: &Estimate) -> Self {
        let n = Normalization::new(self.image.width, self.image.height);
        self.config = Some(config);
        self.estimate = Some(EstimateRecord {
            model: ModelRecord::new(&est.model, &n),
            feasible: est.model.distortion.is_feasible(),
            score: est.score,
            inliers: est.inliers.clone(),
            iteration: est.iteration,
            warp_rms_px: est.warp_rms,
        });
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        check_header(&f.format, RESULT_FILE_FORMAT, f.version)?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_json(path)?;
        check_header(&f.format, RESULT_FILE_FORMAT, f.version)?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_scene, SceneParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = gen_scene(&mut rng, &SceneParams::default()).unwrap();
        let f = FrameFile::from_scene(&s, None);
        let back = FrameFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
        for (a, b) in back.normalized_frames().iter().zip(&s.frames) {
            for k in 0..3 {
                for c in 0..2 {
                    assert!((a.pts[k][c] - b.pts[k][c]).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_version_and_gaps() {
        let mut f = FrameFile::new(Normalization::new(640.0, 480.0), vec![]);
        f.version = 9;
        assert!(matches!(FrameFile::from_json(&f.to_json().unwrap()), Err(Error::UnsupportedVersion { .. })));
        f.version = FILE_VERSION;
        f.frames = vec![FrameRecord { points: [[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]], cluster: 1 }];
        assert!(FrameFile::from_json(&f.to_json().unwrap()).is_err());
    }

    #[test]
    fn pixel_model_round_trip() {
        let n = Normalization::new(1000.0, 1000.0);
        let m = RectifyModel::new(-4.0, 0.3, -0.7);
        let back = model_from_pixels(ModelRecord::new(&m, &n).pixels, &n);
        assert!((back.lambda() - m.lambda()).abs() <= 1e-15 * 4.0);
        assert!((back.line.l1 - 0.3).abs() <= 1e-15 && (back.line.l2 + 0.7).abs() <= 1e-15);
    }
}
