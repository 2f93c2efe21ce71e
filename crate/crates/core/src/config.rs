//! Run configuration, read from TOML with dotted sections:
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [field]
//! kind = "catalogue"
//! name = "log_example"
//! params = [0.25]
//!
//! [criterion]
//! window_radius = 100.0
//! radii = { min = 1.0, max = 1e12, points = 64, log_spaced = true }
//!
//! [oracle]
//! x_max = 1e6
//!
//! [coupling]
//! mu = 0.9
//! t_max = 50.0
//! x0 = [5.0]
//! y0 = [-5.0]
//! ```
//!
//! Every section except `field` is optional; `seed` is mandatory.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::coefficients::FieldSpec;
use crate::coupling::CouplingConfig;
use crate::criterion::CriterionConfig;
use crate::error::{Error, Result};
use crate::harmonic::{DEFAULT_TOL, DEFAULT_X_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub field: FieldSpec,
    #[serde(default)]
    pub criterion: CriterionConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub x_max: f64,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            x_max: DEFAULT_X_MAX,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSection {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    #[serde(flatten)]
    pub config: CouplingConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    /// Range checks that do not need the field evaluated.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let c = &self.criterion;
        if !(c.window_radius > 0.0) {
            return bad("criterion.window_radius must be positive");
        }
        c.radii.values()?;
        if c.radii.points < 10 {
            return bad("criterion.radii.points must be at least 10");
        }
        if c.n_pairs == 0 || c.ellipticity_samples == 0 || c.modulus_grid < 3 {
            return bad("criterion sample counts must be positive (modulus_grid >= 3)");
        }
        if !(c.tail_fraction > 0.0 && c.tail_fraction <= 1.0) {
            return bad("criterion.tail_fraction must lie in (0, 1]");
        }
        if c.mu_grid == 0 {
            return bad("criterion.mu_grid must be at least 1");
        }
        if !(c.s_min > 0.0) || !(c.escape_r_factor > 1.0) {
            return bad("criterion.s_min must be positive and escape_r_factor above 1");
        }
        if let Some(o) = &self.oracle {
            if !(o.x_max > crate::harmonic::GRID_START) || !(o.tol > 0.0) {
                return bad("oracle.x_max must exceed 1e-3 and oracle.tol must be positive");
            }
        }
        if let Some(s) = &self.coupling {
            let d = self.field.dim();
            if s.x0.len() != d || s.y0.len() != d {
                return bad("coupling.x0 and coupling.y0 must have the field dimension");
            }
            if s.x0 == s.y0 {
                return bad("coupling.x0 and coupling.y0 must differ");
            }
        }
        Ok(())
    }

    pub fn criterion_config(&self) -> CriterionConfig {
        CriterionConfig {
            seed: self.seed,
            ..self.criterion.clone()
        }
    }

    pub fn coupling_config(&self) -> Option<CouplingConfig> {
        self.coupling.as_ref().map(|s| CouplingConfig {
            seed: self.seed,
            ..s.config.clone()
        })
    }
}
