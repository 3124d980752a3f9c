use std::fs;
use std::path::Path;

use super::SolverTemplate;
use crate::error::{Error, Result};

pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

impl SolverTemplate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut t: SolverTemplate = serde_json::from_str(text)?;
        if t.version != TEMPLATE_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: t.version, expected: TEMPLATE_FORMAT_VERSION });
        }
        t.validate()?;
        t.rebuild_fill()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ShapeMismatch(m.to_string()));
        let ncols = self.monomials.len();
        if self.n_excess + self.n_reducible > ncols {
            return bad("block sizes exceed column count");
        }
        if self.excess_rank > self.n_excess || self.excess_rank + self.n_reducible > self.rows.len() {
            return bad("inconsistent excess rank");
        }
        let nb = self.n_basis();
        if nb != self.config.expected_solutions() {
            return bad("basis size differs from the configuration's solution count");
        }
        if self.action.len() != nb {
            return bad("action map length differs from basis size");
        }
        for a in &self.action {
            let ok = match *a {
                super::ActionSource::Basis(j) => j < nb,
                super::ActionSource::Reducible(k) => k < self.n_reducible,
            };
            if !ok {
                return bad("action index out of range");
            }
        }
        let stacked = self.n_reducible + nb;
        if self.readout.iter().flat_map(|r| &r.pairs).any(|&(i, j)| i >= stacked || j >= stacked) {
            return bad("readout index out of range");
        }
        Ok(())
    }
}
