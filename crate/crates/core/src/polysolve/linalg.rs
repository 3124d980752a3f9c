//! Dense kernels for the online solver: blocked Householder elimination of a
//! filled template and real eigenpairs of the action matrix.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Row-major dense matrix.
pub(crate) struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for r in 0..self.rows {
            self.data.swap(r * self.cols + a, r * self.cols + b);
        }
    }

    /// Column-pivoted Householder triangularization of columns `c0..c1`
    /// over rows `r0..`, applied to all columns from `c0` on. Runs `steps`
    /// steps and returns the pivot magnitudes together with the column
    /// permutation of `c0..c1` (physical position to original offset).
    fn pivoted_qr(&mut self, r0: usize, c0: usize, c1: usize, steps: usize) -> (Vec<f64>, Vec<usize>) {
        let mut perm: Vec<usize> = (0..c1 - c0).collect();
        let mut norms: Vec<f64> = (c0..c1)
            .map(|c| (r0..self.rows).map(|r| self.at(r, c).powi(2)).sum())
            .collect();
        let mut pivots = Vec::with_capacity(steps);
        let mut v = vec![0.0; self.rows];
        let mut w = vec![0.0; self.cols];
        for s in 0..steps {
            let row = r0 + s;
            let col = c0 + s;
            if row >= self.rows {
                pivots.push(0.0);
                continue;
            }
            // refresh norms now and then to limit downdating drift
            if s % 16 == 0 {
                for (k, c) in (col..c1).enumerate() {
                    norms[s + k] = (row..self.rows).map(|r| self.at(r, c).powi(2)).sum();
                }
            }
            let (best, _) = norms[s..]
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (k, &nv)| if nv > acc.1 { (k, nv) } else { acc });
            let pc = col + best;
            self.swap_cols(col, pc);
            norms.swap(s, s + best);
            perm.swap(s, s + best);

            let xnorm: f64 = (row..self.rows).map(|r| self.at(r, col).powi(2)).sum::<f64>().sqrt();
            pivots.push(xnorm);
            if xnorm == 0.0 {
                continue;
            }
            let x0 = self.at(row, col);
            let alpha = if x0 > 0.0 { -xnorm } else { xnorm };
            for r in row..self.rows {
                v[r] = self.at(r, col);
            }
            v[row] -= alpha;
            let vnorm2: f64 = (row..self.rows).map(|r| v[r] * v[r]).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            let beta = 2.0 / vnorm2;
            let cols = self.cols;
            w[col + 1..cols].iter_mut().for_each(|x| *x = 0.0);
            for r in row..self.rows {
                let vr = v[r];
                if vr == 0.0 {
                    continue;
                }
                let base = r * cols;
                for c in col + 1..cols {
                    w[c] += vr * self.data[base + c];
                }
            }
            for r in row..self.rows {
                let f = beta * v[r];
                if f == 0.0 {
                    continue;
                }
                let base = r * cols;
                for c in col + 1..cols {
                    self.data[base + c] -= f * w[c];
                }
            }
            self.set(row, col, alpha);
            for r in row + 1..self.rows {
                self.set(r, col, 0.0);
            }
            for (k, c) in (col + 1..c1).enumerate() {
                let top = self.at(row, c);
                norms[s + 1 + k] = (norms[s + 1 + k] - top * top).max(0.0);
            }
        }
        (pivots, perm)
    }
}

/// Eliminates the excessive block and expresses each reducible monomial in the
/// basis: returns `T` (`n_reducible x n_basis`, row-major) with `r = T b`.
pub(crate) fn reduce_template(
    mut a: Dense,
    n_excess: usize,
    excess_rank: usize,
    n_reducible: usize,
    rank_tol: f64,
) -> Result<Dense> {
    let n_basis = a.cols - n_excess - n_reducible;
    if a.rows < excess_rank + n_reducible {
        return Err(Error::RankDeficientTemplate);
    }
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::RankDeficientTemplate);
    }
    let (ep, _) = a.pivoted_qr(0, 0, n_excess, excess_rank);
    let e_first = ep.first().copied().unwrap_or(scale);
    if ep.iter().any(|&p| !(p > rank_tol * e_first)) {
        return Err(Error::RankDeficientTemplate);
    }
    let c0 = n_excess;
    let (rp, perm) = a.pivoted_qr(excess_rank, c0, c0 + n_reducible, n_reducible);
    let r_first = rp.first().copied().unwrap_or(0.0);
    if !(r_first > 0.0) || rp.iter().any(|&p| !(p > rank_tol * r_first.max(e_first))) {
        return Err(Error::RankDeficientTemplate);
    }

    // Back substitution on the upper-triangular reducible block.
    let r0 = excess_rank;
    let mut x = Dense::zeros(n_reducible, n_basis);
    for i in (0..n_reducible).rev() {
        let d = a.at(r0 + i, c0 + i);
        for b in 0..n_basis {
            let mut s = a.at(r0 + i, c0 + n_reducible + b);
            for j in i + 1..n_reducible {
                s -= a.at(r0 + i, c0 + j) * x.at(j, b);
            }
            x.set(i, b, s / d);
        }
    }
    let mut t = Dense::zeros(n_reducible, n_basis);
    for (i, &orig) in perm.iter().enumerate() {
        for b in 0..n_basis {
            t.set(orig, b, -x.at(i, b));
        }
    }
    Ok(t)
}

/// Diagonal similarity `D^-1 M D` equalizing row and column norms.
fn balance(m: &mut DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut d = DVector::from_element(n, 1.0);
    const RADIX: f64 = 2.0;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, r2) = (c, r);
            while c2 < r2 / RADIX {
                c2 *= RADIX;
                f *= RADIX;
                if f > 1e150 {
                    break;
                }
            }
            let mut c3 = c2;
            let mut r3 = r;
            while c3 >= r3 * RADIX {
                c3 /= RADIX;
                r3 *= RADIX;
                f /= RADIX;
                if f < 1e-150 {
                    break;
                }
            }
            if (c3 + r3 / f) < 0.95 * s * f.max(1.0 / f) && f != 1.0 {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    d
}

pub(crate) struct Eigen {
    pub real: Vec<(f64, DVector<f64>)>,
    pub n_complex: usize,
}

/// Real eigenvalues (within `tol_imag (1 + |re|)`) and right eigenvectors.
pub(crate) fn real_eigenpairs(mat: &DMatrix<f64>, tol_imag: f64) -> Result<Eigen> {
    let n = mat.nrows();
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficientTemplate);
    }
    let mut bal = mat.clone();
    let d = balance(&mut bal);
    let schur = Schur::try_new(bal.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or(Error::RankDeficientTemplate)?;
    let values = schur.complex_eigenvalues();
    let mut real = Vec::new();
    let mut n_complex = 0;
    let mnorm = bal.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut seen: Vec<f64> = Vec::new();
    for z in values.iter() {
        if z.im.abs() > tol_imag * (1.0 + z.re.abs()) {
            n_complex += 1;
            continue;
        }
        // conjugate pairs that pass the tolerance collapse to one real value
        if z.im != 0.0 && seen.iter().any(|s| (s - z.re).abs() <= 1e-14 * (1.0 + z.re.abs())) {
            continue;
        }
        seen.push(z.re);
        let mu = z.re;
        if let Some(v) = inverse_iteration(&bal, mu, mnorm) {
            // undo balancing: eigenvector of M is D v
            let v = v.component_mul(&d);
            real.push((mu, v));
        }
    }
    Ok(Eigen { real, n_complex })
}

fn inverse_iteration(m: &DMatrix<f64>, mu: f64, mnorm: f64) -> Option<DVector<f64>> {
    let n = m.nrows();
    let shift = mu + 1e-12 * (mnorm + mu.abs());
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    for _ in 0..3 {
        let w = lu.solve(&v)?;
        let nrm = w.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return None;
        }
        v = w / nrm;
    }
    Some(v)
}
