//! Equal-scale constraint systems in `(lambda, l1, l2)`.
//!
//! For two repeated frames `i` and `j` the rectified scales agree, and after
//! clearing denominators each pair gives one polynomial of degree 4:
//!
//! `A_j * N_i - A_i * N_j = 0`, with `A = a_1 a_2 a_3` the product of the
//! homogeneous coordinates after rectification and `N = sum_k (-1)^k M_k a_k`
//! the signed minor expansion of the rectified point matrix. `N` depends on
//! `lambda` only, since the `l1`, `l2` parts of the third row cancel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineFrame, TOL_COLLINEAR};
use crate::poly::{Coeff, Poly, NVARS, VAR_L1, VAR_L2, VAR_LAMBDA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Configuration {
    /// Three corresponded pairs.
    C222,
    /// One corresponded triple and one pair.
    C32,
    /// One corresponded quadruple.
    C4,
    /// Two pairs with known distortion.
    C22Fixed,
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [Self::C222, Self::C32, Self::C4, Self::C22Fixed];
    pub const DISTORTION: [Configuration; 3] = [Self::C222, Self::C32, Self::C4];

    pub fn group_sizes(&self) -> &'static [usize] {
        match self {
            Self::C222 => &[2, 2, 2],
            Self::C32 => &[3, 2],
            Self::C4 => &[4],
            Self::C22Fixed => &[2, 2],
        }
    }

    pub fn frame_count(&self) -> usize {
        self.group_sizes().iter().sum()
    }

    pub fn equation_count(&self) -> usize {
        self.group_sizes().iter().map(|n| n * (n - 1) / 2).sum()
    }

    pub fn expected_solutions(&self) -> usize {
        match self {
            Self::C222 => 54,
            Self::C32 => 45,
            Self::C4 => 36,
            Self::C22Fixed => 9,
        }
    }

    pub fn estimates_distortion(&self) -> bool {
        !matches!(self, Self::C22Fixed)
    }

    /// Active unknowns, as indices into `(lambda, l1, l2)`.
    pub fn variables(&self) -> &'static [usize] {
        if self.estimates_distortion() {
            &[VAR_LAMBDA, VAR_L1, VAR_L2]
        } else {
            &[VAR_L1, VAR_L2]
        }
    }

    pub fn max_degree(&self) -> u32 {
        if self.estimates_distortion() {
            4
        } else {
            3
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::C222 => "222",
            Self::C32 => "32",
            Self::C4 => "4",
            Self::C22Fixed => "22",
        }
    }

    pub fn solver_name(&self) -> &'static str {
        match self {
            Self::C222 => "H222_l_lambda",
            Self::C32 => "H32_l_lambda",
            Self::C4 => "H4_l_lambda",
            Self::C22Fixed => "H22_l",
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Configuration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "222" => Ok(Self::C222),
            "32" => Ok(Self::C32),
            "4" => Ok(Self::C4),
            "22" => Ok(Self::C22Fixed),
            _ => Err(Error::InvalidInput(format!("unknown configuration '{s}'"))),
        }
    }
}

/// Rescaling applied before assembly: `x' = x / coord_scale`, `r^2' = r^2 / rsq_scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub coord_scale: f64,
    pub rsq_scale: f64,
}

impl ScaleRecord {
    pub const IDENTITY: ScaleRecord = ScaleRecord { coord_scale: 1.0, rsq_scale: 1.0 };

    /// Factor turning `x'^2 + y'^2` of conditioned points into conditioned `r^2'`.
    pub fn rsq_factor(&self) -> f64 {
        self.coord_scale * self.coord_scale / self.rsq_scale
    }

    /// Conditioned unknowns back to normalized-image units.
    pub fn unscale(&self, z: [f64; NVARS]) -> [f64; NVARS] {
        [z[0] / self.rsq_scale, z[1] / self.coord_scale, z[2] / self.coord_scale]
    }

    pub fn scale(&self, z: [f64; NVARS]) -> [f64; NVARS] {
        [z[0] * self.rsq_scale, z[1] * self.coord_scale, z[2] * self.coord_scale]
    }
}

/// Divides coordinates by the mean point norm and records the mean squared radius.
pub fn condition_frames(frames: &[AffineFrame]) -> Result<(Vec<AffineFrame>, ScaleRecord)> {
    let n = 3 * frames.len();
    if n == 0 {
        return Err(Error::InvalidInput("no frames to condition".into()));
    }
    let pts = frames.iter().flat_map(|f| f.pts.iter());
    let (sum_norm, sum_rsq) = pts.fold((0.0, 0.0), |(a, b), p| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        (a + r2.sqrt(), b + r2)
    });
    let coord_scale = sum_norm / n as f64;
    let rsq_scale = sum_rsq / n as f64;
    if !(coord_scale > 0.0) || !(rsq_scale > 0.0) {
        return Err(Error::AllZeroCoordinates);
    }
    let scaled = frames
        .iter()
        .map(|f| f.map(|p| [p[0] / coord_scale, p[1] / coord_scale]))
        .collect();
    Ok((scaled, ScaleRecord { coord_scale, rsq_scale }))
}

/// Per-point data of one frame over an arbitrary coefficient field.
#[derive(Clone, Copy, Debug)]
pub struct FramePoints<F: Coeff> {
    pub x: [F; 3],
    pub y: [F; 3],
    pub rsq: [F; 3],
}

impl FramePoints<f64> {
    pub fn from_frame(f: &AffineFrame, rsq_factor: f64) -> Self {
        let x = [f.pts[0][0], f.pts[1][0], f.pts[2][0]];
        let y = [f.pts[0][1], f.pts[1][1], f.pts[2][1]];
        let rsq = [0, 1, 2].map(|k| (x[k] * x[k] + y[k] * y[k]) * rsq_factor);
        Self { x, y, rsq }
    }
}

impl<F: Coeff> FramePoints<F> {
    /// 2x2 minors of the x,y rows, with column `k` removed.
    fn minors(&self) -> [F; 3] {
        let m = |a: usize, b: usize| self.x[a] * self.y[b] - self.x[b] * self.y[a];
        [m(1, 2), m(0, 2), m(0, 1)]
    }

    fn alphas(&self, fixed_lambda: Option<F>) -> [Poly<F>; 3] {
        [0, 1, 2].map(|k| {
            let a = Poly::affine(F::one(), [self.rsq[k], self.x[k], self.y[k]]);
            match fixed_lambda {
                Some(l) => a.substitute(VAR_LAMBDA, l),
                None => a,
            }
        })
    }

    /// `sum_k (-1)^k M_k a_k`. The line terms cancel, leaving `c0 + c1 lambda`.
    fn signed_minor_sum(&self, fixed_lambda: Option<F>) -> Poly<F> {
        let minors = self.minors();
        let mut c0 = F::zero();
        let mut c1 = F::zero();
        for k in 0..3 {
            // k is zero-based here, so (-1)^(k+1)
            let m = if k % 2 == 0 { -minors[k] } else { minors[k] };
            c0 = c0 + m;
            c1 = c1 + m * self.rsq[k];
        }
        match fixed_lambda {
            Some(l) => Poly::constant(c0 + c1 * l),
            None => Poly::affine(c0, [c1, F::zero(), F::zero()]),
        }
    }
}

/// Equal-scale equation for frames `i` and `j` over any field.
pub fn pair_constraint_generic<F: Coeff>(
    fi: &FramePoints<F>,
    fj: &FramePoints<F>,
    fixed_lambda: Option<F>,
) -> Poly<F> {
    let prod = |f: &FramePoints<F>| {
        let [a, b, c] = f.alphas(fixed_lambda);
        &(&a * &b) * &c
    };
    let lhs = &prod(fj) * &fi.signed_minor_sum(fixed_lambda);
    let rhs = &prod(fi) * &fj.signed_minor_sum(fixed_lambda);
    &lhs - &rhs
}

/// Equal-scale equation for two frames in unconditioned coordinates.
pub fn pair_constraint(fi: &AffineFrame, fj: &AffineFrame) -> Result<Poly<f64>> {
    for f in [fi, fj] {
        if !(f.det().abs() >= TOL_COLLINEAR) {
            return Err(Error::CollinearFrame(f.det().abs()));
        }
    }
    Ok(pair_constraint_generic(
        &FramePoints::from_frame(fi, 1.0),
        &FramePoints::from_frame(fj, 1.0),
        None,
    ))
}

/// Index pairs, per group, of all equations emitted for a configuration.
pub fn equation_pairs(config: Configuration) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut offset = 0;
    for &n in config.group_sizes() {
        for a in 0..n {
            for b in a + 1..n {
                pairs.push((offset + a, offset + b));
            }
        }
        offset += n;
    }
    pairs
}

/// Builds every within-group equation from per-frame data over any field.
pub fn assemble_generic<F: Coeff>(
    config: Configuration,
    points: &[FramePoints<F>],
    fixed_lambda: Option<F>,
) -> Vec<Poly<F>> {
    equation_pairs(config)
        .into_iter()
        .map(|(a, b)| pair_constraint_generic(&points[a], &points[b], fixed_lambda))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub config: Configuration,
    pub equations: Vec<Poly<f64>>,
    pub scales: ScaleRecord,
    /// Known distortion in normalized units, for [`Configuration::C22Fixed`].
    pub fixed_lambda: Option<f64>,
}

impl ConstraintSystem {
    /// Relative residual `max_e |f_e(z)| / sum |terms of f_e(z)|` at conditioned unknowns.
    pub fn relative_residual(&self, z: &[f64; NVARS]) -> f64 {
        self.equations
            .iter()
            .map(|p| {
                let scale = p.eval_abs(z);
                if scale > 0.0 {
                    p.eval(z).abs() / scale
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Conditioned unknowns to a full `(lambda, l1, l2)` in normalized units.
    pub fn unscale(&self, z: [f64; NVARS]) -> [f64; NVARS] {
        let mut out = self.scales.unscale(z);
        if let Some(l) = self.fixed_lambda {
            out[VAR_LAMBDA] = l;
        }
        out
    }

    pub fn scale(&self, z: [f64; NVARS]) -> [f64; NVARS] {
        let mut out = self.scales.scale(z);
        if self.fixed_lambda.is_some() {
            out[VAR_LAMBDA] = 0.0;
        }
        out
    }
}

/// Assembles the system for frames that are already oriented and conditioned.
/// `fixed_lambda` is in normalized (unconditioned) units.
pub fn assemble(
    config: Configuration,
    frames: &[AffineFrame],
    scales: ScaleRecord,
    fixed_lambda: Option<f64>,
) -> Result<ConstraintSystem> {
    if frames.len() != config.frame_count() {
        return Err(Error::WrongSampleSize {
            expected: config.frame_count(),
            got: frames.len(),
        });
    }
    for f in frames {
        if !(f.det().abs() >= TOL_COLLINEAR) {
            return Err(Error::CollinearFrame(f.det().abs()));
        }
    }
    let fixed = match (config, fixed_lambda) {
        (Configuration::C22Fixed, Some(l)) => Some(l),
        (Configuration::C22Fixed, None) => {
            return Err(Error::InvalidInput("the fixed-distortion solver needs lambda".into()))
        }
        _ => None,
    };
    let rsq_factor = scales.rsq_factor();
    let points: Vec<_> = frames.iter().map(|f| FramePoints::from_frame(f, rsq_factor)).collect();
    let equations = assemble_generic(config, &points, fixed.map(|l| l * scales.rsq_scale));
    Ok(ConstraintSystem { config, equations, scales, fixed_lambda: fixed })
}

/// Convenience: unconditioned assembly.
pub fn assemble_raw(
    config: Configuration,
    frames: &[AffineFrame],
    fixed_lambda: Option<f64>,
) -> Result<ConstraintSystem> {
    assemble(config, frames, ScaleRecord::IDENTITY, fixed_lambda)
}
