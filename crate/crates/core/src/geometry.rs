//! Homogeneous point geometry for the division model and affine rectification.
//!
//! All coordinates are normalized image units: pixels scaled by
//! `1 / (width + height)` with the distortion center at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible magnitude of a homogeneous coordinate after rectification.
pub const TOL_ALPHA: f64 = 1e-12;
/// Smallest admissible magnitude of a frame's point-matrix determinant.
pub const TOL_COLLINEAR: f64 = 1e-12;

/// Admissible range of the division parameter in normalized units.
pub const LAMBDA_FEASIBLE: (f64, f64) = (-8.0, 0.5);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2H {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl Point2H {
    pub const fn new(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w }
    }

    pub const fn from_xy(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    /// Inhomogeneous coordinates. `w` must be nonzero.
    pub fn xy(&self) -> [f64; 2] {
        [self.x / self.w, self.y / self.w]
    }

    pub fn normalized(&self) -> Self {
        let [x, y] = self.xy();
        Self::from_xy(x, y)
    }
}

/// Point parameterization of an affine-covariant region: the y-point, the
/// origin and the x-point, in that order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFrame {
    pub pts: [[f64; 2]; 3],
}

impl AffineFrame {
    pub const fn new(pts: [[f64; 2]; 3]) -> Self {
        Self { pts }
    }

    pub fn point(&self, k: usize) -> Point2H {
        Point2H::from_xy(self.pts[k][0], self.pts[k][1])
    }

    /// Determinant of the 3x3 matrix whose columns are the homogeneous points.
    pub fn det(&self) -> f64 {
        let [a, b, c] = self.pts;
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    pub fn reversed(&self) -> Self {
        Self::new([self.pts[2], self.pts[1], self.pts[0]])
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self::new([f(self.pts[0]), f(self.pts[1]), f(self.pts[2])])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisionModel {
    pub lambda: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl DivisionModel {
    pub const fn new(lambda: f64) -> Self {
        Self { lambda, center: [0.0, 0.0] }
    }

    pub fn is_feasible(&self) -> bool {
        self.lambda.is_finite()
            && self.lambda >= LAMBDA_FEASIBLE.0
            && self.lambda <= LAMBDA_FEASIBLE.1
    }
}

impl Default for DivisionModel {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Vanishing line `(l1, l2, 1)` in the `l3 = 1` chart.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VanishingLine {
    pub l1: f64,
    pub l2: f64,
}

impl VanishingLine {
    pub const fn new(l1: f64, l2: f64) -> Self {
        Self { l1, l2 }
    }

    /// Chart coordinates of a homogeneous line. Fails for lines through the origin.
    pub fn from_homogeneous(l: [f64; 3]) -> Result<Self> {
        let scale = l[0].abs().max(l[1].abs()).max(l[2].abs());
        if !(scale > 0.0) || l[2].abs() <= 1e-14 * scale {
            return Err(Error::InvalidInput(
                "vanishing line passes through the origin".into(),
            ));
        }
        Ok(Self::new(l[0] / l[2], l[1] / l[2]))
    }

    pub fn homogeneous(&self) -> [f64; 3] {
        [self.l1, self.l2, 1.0]
    }

    pub fn norm(&self) -> f64 {
        self.l1.hypot(self.l2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RectifyModel {
    pub line: VanishingLine,
    pub distortion: DivisionModel,
}

impl RectifyModel {
    pub const fn new(lambda: f64, l1: f64, l2: f64) -> Self {
        Self {
            line: VanishingLine::new(l1, l2),
            distortion: DivisionModel::new(lambda),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.distortion.center = center;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.distortion.lambda
    }

    /// The rectifying homography `[1 0 0; 0 1 0; l1 l2 1]`, row-major.
    pub fn homography(&self) -> [[f64; 3]; 3] {
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [self.line.l1, self.line.l2, 1.0],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.line.l1.is_finite() && self.line.l2.is_finite() && self.distortion.lambda.is_finite()
    }
}

/// Division-model undistortion `(x, y, 1 + lambda (x^2 + y^2))` of a centered point.
pub fn undistort_point(p: Point2H, d: &DivisionModel) -> Point2H {
    let [x, y] = p.xy();
    let (x, y) = (x - d.center[0], y - d.center[1]);
    Point2H::new(x, y, 1.0 + d.lambda * (x * x + y * y))
}

/// Inverse of [`undistort_point`]. Picks the root continuous at `lambda = 0`.
pub fn distort_point(u: Point2H, d: &DivisionModel) -> Result<Point2H> {
    if u.w == 0.0 {
        return Err(Error::NoRealRoot);
    }
    let [ux, uy] = u.xy();
    let ru2 = ux * ux + uy * uy;
    let disc = 1.0 - 4.0 * d.lambda * ru2;
    if !(disc >= 0.0) {
        return Err(Error::NoRealRoot);
    }
    // r_d / r_u = 2 / (1 + sqrt(disc)), no cancellation for either sign of lambda.
    let ratio = 2.0 / (1.0 + disc.sqrt());
    Ok(Point2H::from_xy(
        ux * ratio + d.center[0],
        uy * ratio + d.center[1],
    ))
}

/// Joint undistortion and affine rectification of a distorted point.
pub fn rectify_point(p: Point2H, m: &RectifyModel) -> Point2H {
    let u = undistort_point(p, &m.distortion);
    Point2H::new(u.x, u.y, m.line.l1 * u.x + m.line.l2 * u.y + u.w)
}

pub fn alpha(p: Point2H, m: &RectifyModel) -> f64 {
    rectify_point(p, m).w
}

/// Signed area scale of a frame after undistortion and rectification.
pub fn rectified_scale(f: &AffineFrame, m: &RectifyModel) -> Result<f64> {
    let r = [
        rectify_point(f.point(0), m),
        rectify_point(f.point(1), m),
        rectify_point(f.point(2), m),
    ];
    for p in &r {
        if p.w.abs() < TOL_ALPHA {
            return Err(Error::DegenerateAlpha(p.w.abs()));
        }
    }
    let minor = |a: usize, b: usize| r[a].x * r[b].y - r[b].x * r[a].y;
    let num = r[0].w * minor(1, 2) - r[1].w * minor(0, 2) + r[2].w * minor(0, 1);
    Ok(num / (r[0].w * r[1].w * r[2].w))
}

/// Reorders left-handed frames so the point-matrix determinant is positive.
pub fn orient_frame(f: &AffineFrame) -> Result<AffineFrame> {
    let det = f.det();
    if !(det.abs() >= TOL_COLLINEAR) {
        return Err(Error::CollinearFrame(det.abs()));
    }
    Ok(if det < 0.0 { f.reversed() } else { *f })
}

/// Pixel coordinates to centered normalized coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub width: f64,
    pub height: f64,
}

impl Normalization {
    pub const fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.width + self.height)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.width / 2.0, self.height / 2.0]
    }

    pub fn to_normalized(&self, px: [f64; 2]) -> [f64; 2] {
        let c = self.center();
        let k = self.width + self.height;
        [(px[0] - c[0]) / k, (px[1] - c[1]) / k]
    }

    pub fn to_pixels(&self, n: [f64; 2]) -> [f64; 2] {
        let c = self.center();
        let k = self.width + self.height;
        [n[0] * k + c[0], n[1] * k + c[1]]
    }

    /// Division parameter expressed in centered pixel units (`lambda / (w + h)^2`).
    pub fn lambda_to_pixels(&self, lambda: f64) -> f64 {
        let k = self.width + self.height;
        lambda / (k * k)
    }

    pub fn lambda_from_pixels(&self, lambda_px: f64) -> f64 {
        let k = self.width + self.height;
        lambda_px * (k * k)
    }

    /// Vanishing line in centered pixel units (`l / (w + h)`).
    pub fn line_to_pixels(&self, l: VanishingLine) -> VanishingLine {
        let k = self.width + self.height;
        VanishingLine::new(l.l1 / k, l.l2 / k)
    }

    pub fn line_from_pixels(&self, l: VanishingLine) -> VanishingLine {
        let k = self.width + self.height;
        VanishingLine::new(l.l1 * k, l.l2 * k)
    }
}
