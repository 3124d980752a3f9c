use nalgebra::{DMatrix, DVector};

use super::linalg::{real_eigenpairs, reduce_template, Dense};
use super::{ActionSource, SolverTemplate};
use crate::constraints::ConstraintSystem;
use crate::error::{Error, Result};
use crate::poly::{Poly, NVARS};

/// Numerical settings of the online solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Eigenvalues with `|im| > tol_imag (1 + |re|)` are treated as complex.
    pub tol_imag: f64,
    /// Solutions with a relative equation residual at or above this are dropped.
    pub tol_res: f64,
    /// Refine each real candidate with damped Gauss-Newton steps.
    pub polish: bool,
    pub max_newton: usize,
    /// Step shrink factor applied when a step increases the residual.
    pub damping: f64,
    /// Relative pivot threshold of the elimination; pivots at or below
    /// `rank_tol` times the leading pivot are rank deficient.
    pub rank_tol: f64,
    /// Relative distance under which two solutions are merged.
    pub dedup_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_imag: 1e-6,
            tol_res: 1e-6,
            polish: true,
            max_newton: 5,
            damping: 0.5,
            rank_tol: 0.0,
            dedup_tol: 1e-8,
        }
    }
}

/// One real solution in the conditioned units of its system.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// `(lambda, l1, l2)`; unknowns absent from the system are zero.
    pub values: [f64; NVARS],
    /// Relative equation residual.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolutionSet {
    pub solutions: Vec<Solution>,
    /// Eigenvalues discarded as complex.
    pub n_complex: usize,
    /// Size of the action matrix.
    pub n_eigen: usize,
}

pub fn solve(template: &SolverTemplate, system: &ConstraintSystem) -> Result<SolutionSet> {
    solve_with(template, system, &SolveOptions::default())
}

pub fn solve_with(
    template: &SolverTemplate,
    system: &ConstraintSystem,
    opts: &SolveOptions,
) -> Result<SolutionSet> {
    if system.config != template.config {
        return Err(Error::ShapeMismatch(format!(
            "template for {} applied to a {} system",
            template.config, system.config
        )));
    }
    if system.equations.len() != template.supports.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} equations, template expects {}",
            system.equations.len(),
            template.supports.len()
        )));
    }
    let normalized = normalize(&system.equations)?;
    let coeffs = support_coefficients(template, &normalized)?;
    let (nrows, ncols) = template.dims();
    let mut a = Dense::zeros(nrows, ncols);
    for (r, (row, cols)) in template.rows.iter().zip(template.fill()).enumerate() {
        for (&c, &v) in cols.iter().zip(&coeffs[row.equation]) {
            a.set(r, c as usize, v);
        }
    }
    let t = reduce_template(a, template.n_excess, template.excess_rank, template.n_reducible, opts.rank_tol)?;

    let nb = template.n_basis();
    let mut action = DMatrix::<f64>::zeros(nb, nb);
    for (i, src) in template.action.iter().enumerate() {
        match *src {
            ActionSource::Basis(j) => action[(i, j)] = 1.0,
            ActionSource::Reducible(k) => {
                for j in 0..nb {
                    action[(i, j)] = t.at(k, j);
                }
            }
        }
    }
    let eig = real_eigenpairs(&action, opts.tol_imag)?;

    let nr = template.n_reducible;
    let mut stacked = vec![0.0; nr + nb];
    let mut out: Vec<Solution> = Vec::new();
    for (mu, v) in &eig.real {
        for k in 0..nr {
            stacked[k] = (0..nb).map(|j| t.at(k, j) * v[j]).sum();
        }
        for j in 0..nb {
            stacked[nr + j] = v[j];
        }
        let mut z = [0.0; NVARS];
        z[template.action_var] = *mu;
        for ro in &template.readout {
            if ro.var == template.action_var {
                continue;
            }
            let best = ro
                .pairs
                .iter()
                .max_by(|a, b| stacked[a.0].abs().total_cmp(&stacked[b.0].abs()));
            if let Some(&(i, j)) = best {
                z[ro.var] = stacked[j] / stacked[i];
            }
        }
        if !z.iter().all(|x| x.is_finite()) {
            continue;
        }
        if opts.polish {
            z = polish(&normalized, z, &template.variables, opts);
        }
        let residual = system.relative_residual(&z);
        if !(residual < opts.tol_res) {
            continue;
        }
        insert_dedup(&mut out, Solution { values: z, residual }, opts.dedup_tol);
    }
    out.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    Ok(SolutionSet { solutions: out, n_complex: eig.n_complex, n_eigen: nb })
}

fn normalize(eqs: &[Poly<f64>]) -> Result<Vec<Poly<f64>>> {
    eqs.iter()
        .map(|p| {
            let n = p.coeff_norm();
            if !n.is_finite() {
                Err(Error::InvalidInput("non-finite equation coefficients".into()))
            } else if n == 0.0 {
                Err(Error::RankDeficientTemplate)
            } else {
                Ok(p.scale(1.0 / n))
            }
        })
        .collect()
}

fn support_coefficients(template: &SolverTemplate, eqs: &[Poly<f64>]) -> Result<Vec<Vec<f64>>> {
    eqs.iter()
        .zip(&template.supports)
        .map(|(p, support)| {
            let extra = p
                .terms
                .iter()
                .any(|(m, c)| *c != 0.0 && !support.contains(m));
            if extra {
                return Err(Error::ShapeMismatch("equation term outside template support".into()));
            }
            Ok(support.iter().map(|m| p.coeff(m)).collect())
        })
        .collect()
}

fn residual_vector(eqs: &[Poly<f64>], z: &[f64; NVARS]) -> DVector<f64> {
    DVector::from_iterator(eqs.len(), eqs.iter().map(|p| p.eval(z)))
}

/// Damped Gauss-Newton on the normalized equations.
fn polish(eqs: &[Poly<f64>], mut z: [f64; NVARS], vars: &[usize], opts: &SolveOptions) -> [f64; NVARS] {
    let mut f = residual_vector(eqs, &z);
    let mut fnorm = f.norm();
    for _ in 0..opts.max_newton {
        if fnorm == 0.0 {
            break;
        }
        let jac = DMatrix::from_fn(eqs.len(), vars.len(), |e, k| eqs[e].gradient(&z)[vars[k]]);
        let Ok(step) = jac.svd(true, true).solve(&(-&f), 1e-14) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let mut cand = z;
            for (k, &v) in vars.iter().enumerate() {
                cand[v] += t * step[k];
            }
            let fc = residual_vector(eqs, &cand);
            let nc = fc.norm();
            if nc < fnorm {
                z = cand;
                f = fc;
                fnorm = nc;
                improved = true;
                break;
            }
            t *= opts.damping;
        }
        if !improved {
            break;
        }
    }
    z
}

fn insert_dedup(out: &mut Vec<Solution>, s: Solution, tol: f64) {
    let scale = 1.0 + s.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let close = out.iter().position(|o| {
        let d: f64 = o.values.iter().zip(&s.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        d <= tol * scale
    });
    match close {
        Some(i) if s.residual < out[i].residual => out[i] = s,
        Some(_) => {}
        None => out.push(s),
    }
}
