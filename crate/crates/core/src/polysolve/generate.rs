use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::TEMPLATE_FORMAT_VERSION;
use super::solve::{solve_with, SolveOptions};
use super::{ActionSource, BasisChoice, Readout, SolverTemplate, TemplateRow};
use crate::constraints::{assemble_generic, Configuration, ConstraintSystem, FramePoints};
use crate::error::{Error, Result};
use crate::poly::{grevlex, Coeff, Monomial, Poly, Zp, NVARS, VAR_L1, VAR_LAMBDA};

/// Instance-independent description of one configuration's equations.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemShape {
    pub config: Configuration,
    pub variables: Vec<usize>,
    pub action_var: usize,
    pub supports: Vec<Vec<Monomial>>,
    pub n_solutions: usize,
}

impl SystemShape {
    pub fn for_config(config: Configuration) -> Self {
        let variables = config.variables().to_vec();
        let action_var = if config.estimates_distortion() { VAR_LAMBDA } else { VAR_L1 };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut supports: Vec<HashSet<Monomial>> = vec![HashSet::new(); config.equation_count()];
        for _ in 0..2 {
            for (s, p) in supports.iter_mut().zip(random_instance(config, &mut rng)) {
                s.extend(p.terms.keys().copied());
            }
        }
        let supports = supports
            .into_iter()
            .map(|s| {
                let mut v: Vec<Monomial> = s.into_iter().collect();
                v.sort_by(|a, b| grevlex(b, a));
                v
            })
            .collect();
        Self {
            config,
            variables,
            action_var,
            supports,
            n_solutions: config.expected_solutions(),
        }
    }

    fn degree(&self, e: usize) -> u32 {
        self.supports[e].iter().map(Monomial::degree).max().unwrap_or(0)
    }
}

/// Random frame data over the prime field; the same algebraic family as real data,
/// with `r^2 = k (x^2 + y^2)` for a shared random `k`.
fn random_instance(config: Configuration, rng: &mut ChaCha8Rng) -> Vec<Poly<Zp>> {
    let mut draw = || Zp::new(rng.random_range(1..Zp::P as u64));
    let k = draw();
    let points: Vec<FramePoints<Zp>> = (0..config.frame_count())
        .map(|_| {
            let x = [draw(), draw(), draw()];
            let y = [draw(), draw(), draw()];
            let rsq = [0, 1, 2].map(|i| k * (x[i] * x[i] + y[i] * y[i]));
            FramePoints { x, y, rsq }
        })
        .collect();
    let fixed = (!config.estimates_distortion()).then(&mut draw);
    assemble_generic(config, &points, fixed)
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    /// Largest working degree tried before giving up.
    pub max_degree: u32,
    /// Seed of the random prime-field instances.
    pub instance_seed: u64,
    /// Smallest working degree tried; `None` starts just above the equation degree.
    pub min_degree: Option<u32>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { max_degree: 12, instance_seed: 0x1234_5678, min_degree: None }
    }
}

/// Row echelon form over the prime field; returns the pivot flag of each column.
fn pivot_columns(matrix: &mut [Vec<Zp>], ncols: usize) -> Vec<bool> {
    let m = matrix.len();
    let mut pivots = vec![false; ncols];
    let mut rank = 0;
    for c in 0..ncols {
        let Some(r) = (rank..m).find(|&r| !matrix[r][c].is_zero()) else {
            continue;
        };
        matrix.swap(r, rank);
        let inv = matrix[rank][c].inv();
        let pivot: Vec<Zp> = matrix[rank][c..].iter().map(|&v| v * inv).collect();
        matrix[rank][c..].copy_from_slice(&pivot);
        for row in matrix.iter_mut().skip(rank + 1) {
            let f = row[c];
            if f.is_zero() {
                continue;
            }
            for (dst, &p) in row[c..].iter_mut().zip(&pivot) {
                if p.0 != 0 {
                    *dst = *dst - f * p;
                }
            }
        }
        pivots[c] = true;
        rank += 1;
        if rank == m {
            break;
        }
    }
    pivots
}

fn dense_matrix(
    rows: &[TemplateRow],
    eqs: &[Poly<Zp>],
    column: &HashMap<Monomial, usize>,
    ncols: usize,
) -> Vec<Vec<Zp>> {
    rows.iter()
        .map(|r| {
            let mut v = vec![Zp(0); ncols];
            for (m, c) in &eqs[r.equation].terms {
                v[column[&m.mul(&r.multiplier)]] = *c;
            }
            v
        })
        .collect()
}

/// Orders monomials for elimination: earlier columns are eliminated first and
/// the trailing non-pivots become basis candidates. The constant is always last.
fn elimination_order(monos: &[Monomial], choice: BasisChoice, vars: &[usize]) -> Vec<Monomial> {
    let mut v: Vec<Monomial> = monos.iter().copied().filter(|m| *m != Monomial::ONE).collect();
    match choice {
        BasisChoice::GRevLex => v.sort_by(|a, b| grevlex(b, a)),
        BasisChoice::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = [0.0; NVARS];
            for &k in vars {
                w[k] = rng.random_range(0.3..1.7);
            }
            let jitter: f64 = rng.random_range(0.0..0.8);
            let mut keyed: Vec<(f64, Monomial)> = v
                .iter()
                .map(|m| {
                    let key: f64 = (0..NVARS).map(|k| w[k] * m.0[k] as f64).sum();
                    (key + jitter * rng.random::<f64>(), *m)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| grevlex(&b.1, &a.1)));
            v = keyed.into_iter().map(|(_, m)| m).collect();
        }
    }
    if monos.contains(&Monomial::ONE) {
        v.push(Monomial::ONE);
    }
    v
}

struct Expansion {
    rows: Vec<TemplateRow>,
    monomials: Vec<Monomial>,
}

fn expand(shape: &SystemShape, degree: u32) -> Option<Expansion> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for e in 0..shape.supports.len() {
        let de = shape.degree(e);
        if de > degree {
            return None;
        }
        for mult in Monomial::all_up_to(&shape.variables, degree - de) {
            rows.push(TemplateRow { equation: e, multiplier: mult });
            for m in &shape.supports[e] {
                seen.insert(m.mul(&mult));
            }
        }
    }
    let mut monomials: Vec<Monomial> = seen.into_iter().collect();
    monomials.sort_by(|a, b| grevlex(b, a));
    Some(Expansion { rows, monomials })
}

/// Builds an elimination template for `shape`, searching working degrees
/// upward until the chosen basis is feasible.
pub fn generate_template(shape: &SystemShape, choice: BasisChoice) -> Result<SolverTemplate> {
    generate_template_with(shape, choice, &GenerateOptions::default())
}

pub fn generate_template_with(
    shape: &SystemShape,
    choice: BasisChoice,
    opts: &GenerateOptions,
) -> Result<SolverTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.instance_seed);
    let instances = [
        random_instance(shape.config, &mut rng),
        random_instance(shape.config, &mut rng),
    ];
    let min_degree = opts
        .min_degree
        .unwrap_or_else(|| (0..shape.supports.len()).map(|e| shape.degree(e)).max().unwrap_or(1) + 1);
    let mut last_reason = String::from("no degree tried");
    for degree in min_degree..=opts.max_degree {
        match try_degree(shape, choice, degree, &instances) {
            Ok(t) => return Ok(t),
            Err(reason) => last_reason = format!("degree {degree}: {reason}"),
        }
    }
    Err(Error::InfeasibleBasis(last_reason))
}

fn try_degree(
    shape: &SystemShape,
    choice: BasisChoice,
    degree: u32,
    instances: &[Vec<Poly<Zp>>],
) -> std::result::Result<SolverTemplate, String> {
    let n = shape.n_solutions;
    let xa = Monomial::var(shape.action_var);
    let Expansion { rows, monomials } = expand(shape, degree).ok_or("degree below equations")?;
    let all: HashSet<Monomial> = monomials.iter().copied().collect();

    // Permissible monomials: those whose action-variable multiple is in the template.
    let (permissible, rest): (Vec<Monomial>, Vec<Monomial>) =
        monomials.iter().partition(|m| all.contains(&m.mul(&xa)));
    let mut order: Vec<Monomial> = rest;
    order.sort_by(|a, b| grevlex(b, a));
    let n_rest = order.len();
    order.extend(elimination_order(&permissible, choice, &shape.variables));

    let column: HashMap<Monomial, usize> = order.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut mat = dense_matrix(&rows, &instances[0], &column, order.len());
    let pivots = pivot_columns(&mut mat, order.len());
    let candidates: Vec<Monomial> =
        (n_rest..order.len()).filter(|&c| !pivots[c]).map(|c| order[c]).collect();
    if candidates.len() < n {
        return Err(format!("{} basis candidates, need {n}", candidates.len()));
    }
    let basis: Vec<Monomial> = candidates[candidates.len() - n..].to_vec();
    if !basis.contains(&Monomial::ONE) {
        return Err("basis does not contain 1".into());
    }
    let basis_set: HashSet<Monomial> = basis.iter().copied().collect();
    let mut reducible: Vec<Monomial> = Vec::new();
    for b in &basis {
        let r = b.mul(&xa);
        if !basis_set.contains(&r) && !reducible.contains(&r) {
            reducible.push(r);
        }
    }
    reducible.sort_by(|a, b| grevlex(b, a));
    let red_set: HashSet<Monomial> = reducible.iter().copied().collect();
    let mut excess: Vec<Monomial> = monomials
        .iter()
        .copied()
        .filter(|m| !basis_set.contains(m) && !red_set.contains(m))
        .collect();
    excess.sort_by(|a, b| grevlex(b, a));

    let mut cols: Vec<Monomial> = excess.clone();
    cols.extend(&reducible);
    cols.extend(&basis);
    let column: HashMap<Monomial, usize> = cols.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let ne = excess.len();
    let nr = reducible.len();

    // Feasibility: every reducible column is a pivot once the excessive block is eliminated.
    let mut excess_rank = None;
    for inst in instances {
        let mut mat = dense_matrix(&rows, inst, &column, cols.len());
        let piv = pivot_columns(&mut mat, cols.len());
        let er = piv[..ne].iter().filter(|&&p| p).count();
        if !piv[ne..ne + nr].iter().all(|&p| p) {
            return Err("reducible monomials cannot be eliminated".into());
        }
        match excess_rank {
            None => excess_rank = Some(er),
            Some(prev) if prev != er => return Err("excess rank differs between instances".into()),
            _ => {}
        }
    }

    let action = basis
        .iter()
        .map(|b| {
            let r = b.mul(&xa);
            match basis.iter().position(|m| *m == r) {
                Some(j) => ActionSource::Basis(j),
                None => ActionSource::Reducible(reducible.iter().position(|m| *m == r).unwrap()),
            }
        })
        .collect();

    let stacked: Vec<Monomial> = cols[ne..].to_vec();
    let mut readout = Vec::new();
    for &k in &shape.variables {
        let xk = Monomial::var(k);
        let mut pairs: Vec<(usize, usize)> = stacked
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                let t = m.mul(&xk);
                stacked.iter().position(|s| *s == t).map(|j| (i, j))
            })
            .collect();
        pairs.sort_by_key(|&(i, _)| stacked[i].degree());
        pairs.truncate(8);
        if pairs.is_empty() && k != shape.action_var {
            return Err(format!("no readout for variable {k}"));
        }
        readout.push(Readout { var: k, pairs });
    }

    let mut t = SolverTemplate {
        version: TEMPLATE_FORMAT_VERSION,
        config: shape.config,
        basis_choice: choice,
        variables: shape.variables.clone(),
        action_var: shape.action_var,
        degree,
        supports: shape.supports.clone(),
        rows,
        monomials: cols,
        n_excess: ne,
        n_reducible: nr,
        excess_rank: excess_rank.unwrap_or(0),
        action,
        readout,
        fill: Vec::new(),
    };
    t.rebuild_fill().map_err(|e| e.to_string())?;
    Ok(t)
}

/// A synthetic system with known ground truth, in the system's own units.
#[derive(Clone, Debug)]
pub struct TestInstance {
    pub system: ConstraintSystem,
    pub truth: [f64; NVARS],
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct CandidateReport {
    pub basis_choice: Option<BasisChoice>,
    pub feasible: bool,
    pub degree: u32,
    pub rows: usize,
    pub cols: usize,
    pub median_residual: f64,
    pub median_log10_rel_error: f64,
}

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct SelectionReport {
    pub config: Option<Configuration>,
    pub default: CandidateReport,
    pub candidates: Vec<CandidateReport>,
    pub selected: Option<usize>,
}

/// Median over instances of the equation residual and the log10 relative
/// error of the solution nearest the truth, without polishing.
pub fn evaluate(template: &SolverTemplate, tests: &[TestInstance]) -> (f64, f64) {
    let opts = SolveOptions { polish: false, tol_res: f64::INFINITY, ..SolveOptions::default() };
    let mut res = Vec::with_capacity(tests.len());
    let mut err = Vec::with_capacity(tests.len());
    for t in tests {
        let nearest = solve_with(template, &t.system, &opts).ok().and_then(|s| {
            s.solutions
                .iter()
                .map(|sol| (relative_error(&sol.values, &t.truth, &template.variables), sol.residual))
                .min_by(|a, b| a.0.total_cmp(&b.0))
        });
        match nearest {
            Some((e, r)) => {
                res.push(r);
                err.push(e.max(1e-17).log10());
            }
            None => {
                res.push(1.0);
                err.push(1.0);
            }
        }
    }
    (median(&mut res), median(&mut err))
}

pub(crate) fn relative_error(z: &[f64; NVARS], truth: &[f64; NVARS], vars: &[usize]) -> f64 {
    let num: f64 = vars.iter().map(|&k| (z[k] - truth[k]).powi(2)).sum::<f64>().sqrt();
    let den: f64 = vars.iter().map(|&k| truth[k].powi(2)).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn report(choice: BasisChoice, t: Option<&SolverTemplate>, tests: &[TestInstance]) -> CandidateReport {
    match t {
        Some(t) => {
            let (median_residual, median_log10_rel_error) = evaluate(t, tests);
            CandidateReport {
                basis_choice: Some(choice),
                feasible: true,
                degree: t.degree,
                rows: t.rows.len(),
                cols: t.monomials.len(),
                median_residual,
                median_log10_rel_error,
            }
        }
        None => CandidateReport {
            basis_choice: Some(choice),
            feasible: false,
            median_residual: f64::INFINITY,
            median_log10_rel_error: f64::INFINITY,
            ..CandidateReport::default()
        },
    }
}

/// Generates `n_candidates` sampled-basis templates and keeps the one with the
/// smallest median equation residual on `tests`.
pub fn sample_and_select(
    shape: &SystemShape,
    n_candidates: usize,
    tests: &[TestInstance],
    seed: u64,
) -> Result<(SolverTemplate, SelectionReport)> {
    if n_candidates == 0 {
        return Err(Error::InvalidInput("need at least one candidate".into()));
    }
    let default = generate_template(shape, BasisChoice::GRevLex).ok();
    let mut rep = SelectionReport {
        config: Some(shape.config),
        default: report(BasisChoice::GRevLex, default.as_ref(), tests),
        ..SelectionReport::default()
    };
    let mut best: Option<(f64, SolverTemplate)> = None;
    for i in 0..n_candidates {
        let choice = BasisChoice::Sampled { seed: seed.wrapping_add(i as u64) };
        let t = generate_template(shape, choice).ok();
        let r = report(choice, t.as_ref(), tests);
        if let Some(t) = t {
            if best.as_ref().is_none_or(|(score, _)| r.median_residual < *score) {
                rep.selected = Some(i);
                best = Some((r.median_residual, t));
            }
        }
        rep.candidates.push(r);
    }
    match best {
        Some((_, t)) => Ok((t, rep)),
        None => Err(Error::InfeasibleBasis(format!(
            "none of {n_candidates} sampled bases is feasible for configuration {}",
            shape.config
        ))),
    }
}
