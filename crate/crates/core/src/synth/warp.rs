use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scene::{image_through, SyntheticScene};
use crate::geometry::{rectify_point, Point2H, RectifyModel};

/// Plane point, its observed image point and its hypothesized rectification.
type ObservedPoint = ([f64; 2], [f64; 2], [f64; 2]);

pub const GRID_SIZE: usize = 10;
const MAX_REFINE_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpErrorReport {
    /// Root mean square round-trip error in pixels; infinite when no grid
    /// point survives.
    pub rms: f64,
    /// Affine map from the hypothesized rectified plane to scene-plane
    /// coordinates, `[a11, a12, a13, a21, a22, a23]`.
    pub affine: [f64; 6],
    /// Per grid point error in pixels; `None` for excluded points.
    pub residuals: Vec<Option<f64>>,
    /// Grid points dropped because a mapping had no real solution.
    pub n_excluded: usize,
}

impl WarpErrorReport {
    fn failed(n: usize) -> Self {
        Self { rms: f64::INFINITY, affine: [0.0; 6], residuals: vec![None; n], n_excluded: n }
    }
}

/// A `GRID_SIZE x GRID_SIZE` lattice spanning the frames on the scene plane.
pub fn plane_grid(scene: &SyntheticScene) -> Vec<[f64; 2]> {
    let [x0, x1, y0, y1] = scene.extent;
    let step = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (GRID_SIZE - 1) as f64;
    (0..GRID_SIZE)
        .flat_map(|i| (0..GRID_SIZE).map(move |j| [step(x0, x1, j), step(y0, y1, i)]))
        .collect()
}

/// Round-trip warp error of a hypothesized rectification, minimized over the
/// affine ambiguity.
pub fn warp_error(model: &RectifyModel, scene: &SyntheticScene) -> WarpErrorReport {
    warp_error_map(scene, |p| {
        let r = rectify_point(p, model);
        (r.w.abs() > 0.0).then(|| [r.x / r.w, r.y / r.w])
    })
}

/// Warp error for an arbitrary rectifying map from distorted normalized image
/// points to the hypothesized rectified plane.
pub fn warp_error_map(
    scene: &SyntheticScene,
    rectify: impl Fn(Point2H) -> Option<[f64; 2]>,
) -> WarpErrorReport {
    let grid = plane_grid(scene);
    let h = scene.plane_to_image();
    let dist = scene.gt_model.distortion;
    let to_px = scene.image.width + scene.image.height;

    // observed image points and their hypothesized rectification
    let mut obs: Vec<Option<ObservedPoint>> = Vec::with_capacity(grid.len());
    for &g in &grid {
        let item = image_through(&h, &dist, g).ok().and_then(|x| {
            let y = rectify(Point2H::from_xy(x[0], x[1]))?;
            (y[0].is_finite() && y[1].is_finite()).then_some((g, x, y))
        });
        obs.push(item);
    }
    let used: Vec<usize> = (0..obs.len()).filter(|&i| obs[i].is_some()).collect();
    if used.len() < 3 {
        return WarpErrorReport::failed(grid.len());
    }

    // linear fit: plane ~ A [y; 1]
    let mut design = DMatrix::zeros(used.len(), 3);
    let mut bx = DVector::zeros(used.len());
    let mut by = DVector::zeros(used.len());
    for (r, &i) in used.iter().enumerate() {
        let (g, _, y) = obs[i].unwrap();
        design[(r, 0)] = y[0];
        design[(r, 1)] = y[1];
        design[(r, 2)] = 1.0;
        bx[r] = g[0];
        by[r] = g[1];
    }
    let svd = design.svd(true, true);
    let (Ok(ax), Ok(ay)) = (svd.solve(&bx, 1e-15), svd.solve(&by, 1e-15)) else {
        return WarpErrorReport::failed(grid.len());
    };
    let mut a = [ax[0], ax[1], ax[2], ay[0], ay[1], ay[2]];

    let residuals = |a: &[f64; 6]| -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * used.len());
        for &i in &used {
            let (_, x, y) = obs[i].unwrap();
            let p = [a[0] * y[0] + a[1] * y[1] + a[2], a[3] * y[0] + a[4] * y[1] + a[5]];
            let back = image_through(&h, &dist, p).ok()?;
            out.push((back[0] - x[0]) * to_px);
            out.push((back[1] - x[1]) * to_px);
        }
        Some(out)
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let (mut a_best, mut r_best) = match residuals(&a) {
        Some(r) => (a, r),
        None => return WarpErrorReport::failed(grid.len()),
    };
    let mut c_best = cost(&r_best);
    let mut mu = 1e-3;
    for _ in 0..MAX_REFINE_STEPS {
        if c_best == 0.0 {
            break;
        }
        let n = r_best.len();
        let mut jac = DMatrix::zeros(n, 6);
        let mut jac_ok = true;
        for k in 0..6 {
            let hstep = 1e-7 * (1.0 + a_best[k].abs());
            let mut ap = a_best;
            let mut am = a_best;
            ap[k] += hstep;
            am[k] -= hstep;
            match (residuals(&ap), residuals(&am)) {
                (Some(rp), Some(rm)) => {
                    for r in 0..n {
                        jac[(r, k)] = (rp[r] - rm[r]) / (2.0 * hstep);
                    }
                }
                _ => jac_ok = false,
            }
        }
        if !jac_ok {
            break;
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_vec(r_best.clone());
        let mut improved = false;
        for _ in 0..6 {
            let mut damped = jtj.clone();
            for k in 0..6 {
                damped[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else { break };
            let mut cand = a_best;
            for k in 0..6 {
                cand[k] += step[k];
            }
            if let Some(rc) = residuals(&cand) {
                let cc = cost(&rc);
                if cc < c_best {
                    let gain = c_best - cc;
                    a_best = cand;
                    r_best = rc;
                    c_best = cc;
                    mu = (mu * 0.3).max(1e-12);
                    improved = gain > 1e-20 * (1.0 + c_best);
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    a = a_best;

    let mut per_point = vec![None; grid.len()];
    for (k, &i) in used.iter().enumerate() {
        per_point[i] = Some(r_best[2 * k].hypot(r_best[2 * k + 1]));
    }
    let rms = (c_best / used.len() as f64).sqrt();
    WarpErrorReport { rms, affine: a, residuals: per_point, n_excluded: grid.len() - used.len() }
}
