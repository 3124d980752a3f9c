use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    distort_point, AffineFrame, DivisionModel, Normalization, Point2H, RectifyModel, VanishingLine,
    LAMBDA_FEASIBLE,
};

/// How repeated frames are related on the scene plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    ConjugateTranslation,
    Rigid,
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Motion::ConjugateTranslation => "ct",
            Motion::Rigid => "rigid",
        })
    }
}

impl FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ct" | "translation" | "conjugate_translation" => Ok(Motion::ConjugateTranslation),
            "rigid" => Ok(Motion::Rigid),
            _ => Err(Error::InvalidInput(format!("unknown motion '{s}' (expected ct or rigid)"))),
        }
    }
}

/// Pinhole camera in pixel units viewing the plane `Z = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal_px: f64,
    pub principal_point: [f64; 2],
    /// World-to-camera rotation, row major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Camera {
    pub fn intrinsics(&self) -> Matrix3<f64> {
        let [cx, cy] = self.principal_point;
        Matrix3::new(self.focal_px, 0.0, cx, 0.0, self.focal_px, cy, 0.0, 0.0, 1.0)
    }

    /// The 3x4 projection matrix, row major.
    pub fn projection(&self) -> [[f64; 4]; 3] {
        let k = self.intrinsics();
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let kr = k * r;
        let kt = k * Vector3::from(self.translation);
        std::array::from_fn(|i| [kr[(i, 0)], kr[(i, 1)], kr[(i, 2)], kt[i]])
    }

    /// Homography from plane coordinates `(X, Y, 1)` to pixels.
    pub fn plane_homography(&self) -> Matrix3<f64> {
        let p = self.projection();
        Matrix3::from_fn(|i, j| p[i][[0, 1, 3][j]])
    }
}

/// Knobs of the scene generator. Defaults follow the benchmark setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: f64,
    pub height: f64,
    pub motion: Motion,
    /// Ground-truth distortion; drawn from the feasible range when absent.
    pub lambda: Option<f64>,
    pub n_clusters: usize,
    pub frames_per_cluster: usize,
    /// Focal length range as multiples of the image width.
    pub focal_range: (f64, f64),
    /// Largest angle between the optical axis and the plane normal, degrees.
    pub max_tilt_deg: f64,
    /// Frame edge length range in plane units; the plane patch is `[-1, 1]^2`.
    pub frame_size: (f64, f64),
    /// Undistorted pixels per plane unit at the view target, as a fraction of the image width.
    pub coverage: (f64, f64),
    /// Smallest fraction of frame points that must land inside the image.
    pub min_visible: f64,
    pub max_attempts: usize,
    /// Camera looks straight down at the plane center with no roll.
    pub fronto_parallel: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 1000.0,
            height: 1000.0,
            motion: Motion::ConjugateTranslation,
            lambda: None,
            n_clusters: 5,
            frames_per_cluster: 4,
            focal_range: (0.5, 2.5),
            max_tilt_deg: 65.0,
            frame_size: (0.15, 0.3),
            coverage: (0.3, 0.45),
            min_visible: 0.9,
            max_attempts: 100,
            fronto_parallel: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub image: Normalization,
    pub camera: Camera,
    pub motion: Motion,
    /// Ground truth in normalized coordinates.
    pub gt_model: RectifyModel,
    /// Distorted frames in normalized coordinates.
    pub frames: Vec<AffineFrame>,
    pub clusters: Vec<usize>,
    /// The same frames in plane coordinates.
    pub plane_frames: Vec<AffineFrame>,
    /// `[xmin, xmax, ymin, ymax]` of the frames on the plane.
    pub extent: [f64; 4],
}

impl SyntheticScene {
    /// Plane-to-normalized-image homography (undistorted).
    pub fn plane_to_image(&self) -> Matrix3<f64> {
        normalizer(&self.image) * self.camera.plane_homography()
    }

    /// Images a plane point through the camera and the ground-truth distortion.
    pub fn image_point(&self, xy: [f64; 2]) -> Result<[f64; 2]> {
        image_through(&self.plane_to_image(), &self.gt_model.distortion, xy)
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.iter().max().map_or(0, |m| m + 1)
    }

    /// Frames of each cluster, by index into `frames`.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.clusters.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Pixel-to-normalized affine map.
pub(crate) fn normalizer(n: &Normalization) -> Matrix3<f64> {
    let s = n.scale();
    let [cx, cy] = n.center();
    Matrix3::new(s, 0.0, -cx * s, 0.0, s, -cy * s, 0.0, 0.0, 1.0)
}

pub(crate) fn image_through(h: &Matrix3<f64>, d: &DivisionModel, xy: [f64; 2]) -> Result<[f64; 2]> {
    let v = h * Vector3::new(xy[0], xy[1], 1.0);
    if !(v.z.abs() > 0.0) {
        return Err(Error::NoRealRoot);
    }
    Ok(distort_point(Point2H::new(v.x, v.y, v.z), d)?.xy())
}

fn look_at<R: Rng>(rng: &mut R, params: &SceneParams, focal: f64) -> Camera {
    let (tilt, azimuth, roll, target) = if params.fronto_parallel {
        (0.0, 0.0, 0.0, Vector3::zeros())
    } else {
        let t = rng.random_range(0.0..params.max_tilt_deg.to_radians());
        let tgt = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 0.0);
        (
            t,
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(-0.5..0.5),
            tgt,
        )
    };
    // Pixels per plane unit at the target; the patch [-1, 1]^2 spans most of the view.
    let density = if params.fronto_parallel { 0.4 * params.width } else { rng.random_range(params.coverage.0..params.coverage.1) * params.width };
    let dist = focal / density;
    let dir = Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());
    let center = target + dir * dist;
    let z = (target - center).normalize();
    let up0 = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let x0 = up0.cross(&z).normalize();
    let y0 = z.cross(&x0);
    let (s, c) = f64::sin_cos(roll);
    let x = x0 * c + y0 * s;
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let t = -(r * center);
    Camera {
        focal_px: focal,
        principal_point: [params.width / 2.0, params.height / 2.0],
        rotation: std::array::from_fn(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
        translation: [t.x, t.y, t.z],
    }
}

fn random_frame<R: Rng>(rng: &mut R, params: &SceneParams) -> [[f64; 2]; 3] {
    let size = rng.random_range(params.frame_size.0..params.frame_size.1);
    let a0 = rng.random_range(0.0..std::f64::consts::TAU);
    let a1 = a0 + rng.random_range(std::f64::consts::FRAC_PI_4..3.0 * std::f64::consts::FRAC_PI_4);
    let ratio = rng.random_range(0.7..1.4);
    // (y-point, origin, x-point) with the origin at zero
    [[size * ratio * a1.cos(), size * ratio * a1.sin()], [0.0, 0.0], [size * a0.cos(), size * a0.sin()]]
}

fn place(shape: &[[f64; 2]; 3], angle: f64, at: [f64; 2]) -> AffineFrame {
    let (s, c) = angle.sin_cos();
    AffineFrame::new(shape.map(|p| [c * p[0] - s * p[1] + at[0], s * p[0] + c * p[1] + at[1]]))
}

fn plane_frames<R: Rng>(rng: &mut R, params: &SceneParams) -> (Vec<AffineFrame>, Vec<usize>) {
    let mut frames = Vec::new();
    let mut clusters = Vec::new();
    let margin = params.frame_size.1 * 1.4;
    for c in 0..params.n_clusters {
        let shape = random_frame(rng, params);
        let base_angle = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 0..params.frames_per_cluster {
            let at = [rng.random_range(-1.0 + margin..1.0 - margin), rng.random_range(-1.0 + margin..1.0 - margin)];
            let angle = match params.motion {
                Motion::ConjugateTranslation => base_angle,
                Motion::Rigid => rng.random_range(0.0..std::f64::consts::TAU),
            };
            frames.push(place(&shape, angle, at));
            clusters.push(c);
        }
    }
    (frames, clusters)
}

fn vanishing_line(plane_to_image: &Matrix3<f64>) -> Option<VanishingLine> {
    let inv_t = plane_to_image.try_inverse()?.transpose();
    let l = inv_t * Vector3::z();
    if !(l.z.abs() > 1e-9 * l.norm()) {
        return None;
    }
    Some(VanishingLine::new(l.x / l.z, l.y / l.z))
}

/// Draws a random camera, a plane of repeated frames and a distortion, and
/// images the frames.
pub fn gen_scene<R: Rng>(rng: &mut R, params: &SceneParams) -> Result<SyntheticScene> {
    if params.n_clusters == 0 || params.frames_per_cluster == 0 {
        return Err(Error::InvalidInput("scene needs at least one frame".into()));
    }
    let image = Normalization::new(params.width, params.height);
    let lambda = match params.lambda {
        Some(l) => l,
        None => rng.random_range(LAMBDA_FEASIBLE.0..LAMBDA_FEASIBLE.1),
    };
    let distortion = DivisionModel::new(lambda);
    for _ in 0..params.max_attempts {
        let focal = params.width * rng.random_range(params.focal_range.0..params.focal_range.1);
        let camera = look_at(rng, params, focal);
        let h = normalizer(&image) * camera.plane_homography();
        let Some(line) = vanishing_line(&h) else { continue };
        let (plane, clusters) = plane_frames(rng, params);

        let mut frames = Vec::with_capacity(plane.len());
        let mut visible = 0usize;
        let mut ok = true;
        'frames: for f in &plane {
            let mut pts = [[0.0; 2]; 3];
            for (k, p) in f.pts.iter().enumerate() {
                let depth = {
                    let v = h * Vector3::new(p[0], p[1], 1.0);
                    v.z
                };
                let Ok(q) = image_through(&h, &distortion, *p) else {
                    ok = false;
                    break 'frames;
                };
                if !(depth > 0.0) {
                    ok = false;
                    break 'frames;
                }
                let px = image.to_pixels(q);
                if px[0] >= 0.0 && px[0] <= params.width && px[1] >= 0.0 && px[1] <= params.height {
                    visible += 1;
                }
                pts[k] = q;
            }
            frames.push(AffineFrame::new(pts));
        }
        if !ok || (visible as f64) < params.min_visible * (3 * plane.len()) as f64 {
            continue;
        }
        let extent = plane.iter().flat_map(|f| f.pts).fold(
            [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY],
            |e, p| [e[0].min(p[0]), e[1].max(p[0]), e[2].min(p[1]), e[3].max(p[1])],
        );
        return Ok(SyntheticScene {
            image,
            camera,
            motion: params.motion,
            gt_model: RectifyModel { line, distortion },
            frames,
            clusters,
            plane_frames: plane,
            extent,
        });
    }
    Err(Error::RetryExhausted(params.max_attempts))
}

/// Adds i.i.d. Gaussian noise of `sigma_px` pixels to every frame point.
pub fn add_noise<R: Rng>(frames: &[AffineFrame], sigma_px: f64, image: &Normalization, rng: &mut R) -> Result<Vec<AffineFrame>> {
    if !(sigma_px >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level must be non-negative, got {sigma_px}")));
    }
    if sigma_px == 0.0 {
        return Ok(frames.to_vec());
    }
    let normal = Normal::new(0.0, sigma_px * image.scale()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let mut pts = f.pts;
        for p in &mut pts {
            p[0] += normal.sample(rng);
            p[1] += normal.sample(rng);
        }
        out.push(AffineFrame::new(pts));
    }
    Ok(out)
}
