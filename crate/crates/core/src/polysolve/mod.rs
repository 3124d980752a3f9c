//! Action-matrix solving of small polynomial systems.
//!
//! Offline, [`generate_template`] expands the equations of one configuration
//! by monomial multiples over a prime field, chooses a quotient-ring basis and
//! records which template columns must be eliminated. Online, [`solve`] fills
//! the same template with double-precision coefficients, eliminates, builds
//! the action matrix of the chosen variable and reads solutions from its
//! eigenvectors.

mod generate;
mod io;
mod linalg;
mod solve;

use serde::{Deserialize, Serialize};

use crate::constraints::Configuration;
use crate::poly::Monomial;

pub use generate::{
    evaluate, generate_template, generate_template_with, sample_and_select, CandidateReport,
    GenerateOptions, SelectionReport, SystemShape, TestInstance,
};
pub use io::TEMPLATE_FORMAT_VERSION;
pub use solve::{solve, solve_with, Solution, SolutionSet, SolveOptions};

/// How the quotient basis of a template was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisChoice {
    /// Standard monomials of graded reverse lexicographic order.
    GRevLex,
    /// Randomly weighted elimination order, reproducible from the seed.
    Sampled { seed: u64 },
}

/// Where `action_var * basis[i]` lives in the template columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    /// Another basis monomial, by basis index.
    Basis(usize),
    /// A reducible monomial, by reducible index.
    Reducible(usize),
}

/// One template row: equation `equation` multiplied by `multiplier`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRow {
    pub equation: usize,
    pub multiplier: Monomial,
}

/// Pairs `(m, x_k m)` of template columns, both reducible or basis, from which
/// variable `x_k` is the ratio of eigenvector entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Readout {
    pub var: usize,
    /// Indices into the stacked `[reducible, basis]` vector.
    pub pairs: Vec<(usize, usize)>,
}

/// Elimination template for one configuration.
///
/// Columns are ordered `[excessive | reducible | basis]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTemplate {
    pub version: u32,
    pub config: Configuration,
    pub basis_choice: BasisChoice,
    pub variables: Vec<usize>,
    pub action_var: usize,
    /// Working degree the equations were expanded to.
    pub degree: u32,
    /// Monomial support of each input equation, in coefficient order.
    pub supports: Vec<Vec<Monomial>>,
    pub rows: Vec<TemplateRow>,
    pub monomials: Vec<Monomial>,
    pub n_excess: usize,
    pub n_reducible: usize,
    /// Rank of the excessive block for generic data.
    pub excess_rank: usize,
    pub action: Vec<ActionSource>,
    pub readout: Vec<Readout>,
    #[serde(skip)]
    fill: Vec<Vec<u32>>,
}

impl SolverTemplate {
    pub fn n_basis(&self) -> usize {
        self.monomials.len() - self.n_excess - self.n_reducible
    }

    pub fn n_solutions(&self) -> usize {
        self.n_basis()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows.len(), self.monomials.len())
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.monomials[self.n_excess + self.n_reducible..]
    }

    pub fn reducible(&self) -> &[Monomial] {
        &self.monomials[self.n_excess..self.n_excess + self.n_reducible]
    }

    /// Column of each support term, per row. Derived from `rows` and `supports`.
    pub(crate) fn fill(&self) -> &[Vec<u32>] {
        &self.fill
    }

    pub(crate) fn rebuild_fill(&mut self) -> crate::error::Result<()> {
        use std::collections::HashMap;
        let index: HashMap<Monomial, u32> =
            self.monomials.iter().enumerate().map(|(i, m)| (*m, i as u32)).collect();
        let mut fill = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let support = self.supports.get(row.equation).ok_or_else(|| {
                crate::error::Error::ShapeMismatch(format!("row refers to equation {}", row.equation))
            })?;
            let cols = support
                .iter()
                .map(|m| {
                    index.get(&m.mul(&row.multiplier)).copied().ok_or_else(|| {
                        crate::error::Error::ShapeMismatch("row monomial outside template".into())
                    })
                })
                .collect::<crate::error::Result<Vec<u32>>>()?;
            fill.push(cols);
        }
        self.fill = fill;
        Ok(())
    }
}
