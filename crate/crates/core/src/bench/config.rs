//! Experiment configuration, read from a flat TOML file.
//!
//! ```toml
//! model = "homo"            # homo | hetero | gamma
//! design = "fixed-n"        # fixed-n | fixed-batch
//! n_values = [12000]
//! batch_values = [30, 100, 500]
//! replications = 20
//! estimators = ["nwe-f", "nwe-a", "rws-hf", "rws-hk"]
//! seed = 20240601
//! grid_points = 401
//! trim = 0.05
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelKind;
use crate::simgen::ModelFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// One `n`, several batch sizes.
    #[serde(rename = "fixed-n")]
    FixedNVaryBatch,
    /// One batch size, several `n`.
    #[serde(rename = "fixed-batch")]
    FixedBatchVaryN,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::FixedNVaryBatch => "fixed-n",
            Design::FixedBatchVaryN => "fixed-batch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "nwe-f")]
    NweF,
    #[serde(rename = "nwe-a")]
    NweA,
    #[serde(rename = "rws-hf")]
    RwsHf,
    #[serde(rename = "rws-hk")]
    RwsHk,
    #[serde(rename = "nml-f")]
    NmlF,
    #[serde(rename = "nml-a")]
    NmlA,
    #[serde(rename = "csp-f")]
    CspF,
    #[serde(rename = "csp-a")]
    CspA,
    #[serde(rename = "rws-knf")]
    RwsKnf,
    #[serde(rename = "rws-kn1")]
    RwsKn1,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 10] = [
        Self::NweF,
        Self::NweA,
        Self::RwsHf,
        Self::RwsHk,
        Self::NmlF,
        Self::NmlA,
        Self::CspF,
        Self::CspA,
        Self::RwsKnf,
        Self::RwsKn1,
    ];

    /// Identifier used in config files, flags and results.
    pub fn name(self) -> &'static str {
        match self {
            Self::NweF => "nwe-f",
            Self::NweA => "nwe-a",
            Self::RwsHf => "rws-hf",
            Self::RwsHk => "rws-hk",
            Self::NmlF => "nml-f",
            Self::NmlA => "nml-a",
            Self::CspF => "csp-f",
            Self::CspA => "csp-a",
            Self::RwsKnf => "rws-knf",
            Self::RwsKn1 => "rws-kn1",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Whether the estimator makes sense for `model`.
    pub fn supports(self, model: ModelFamily) -> bool {
        use ModelFamily::*;
        match self {
            Self::NweF | Self::NweA => matches!(model, Homoscedastic | Heteroscedastic),
            Self::NmlF | Self::NmlA => model == GammaLaw,
            Self::CspF | Self::CspA | Self::RwsKnf | Self::RwsKn1 => model == Homoscedastic,
            Self::RwsHf | Self::RwsHk => true,
        }
    }

    /// Needs the bandwidth constant cross-validated on the pooled data.
    pub(crate) fn needs_full_cv(self) -> bool {
        matches!(self, Self::NweF | Self::NweA | Self::RwsHf | Self::NmlF | Self::NmlA)
    }

    pub(crate) fn needs_full_knots(self) -> bool {
        matches!(self, Self::CspF | Self::CspA | Self::RwsKnf)
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s).ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

fn default_replications() -> usize {
    20
}

fn default_grid_points() -> usize {
    401
}

fn default_trim() -> f64 {
    0.05
}

fn default_cv_max_eval_points() -> usize {
    1000
}

fn default_knot_candidates() -> Vec<usize> {
    (2..=20).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelFamily,
    pub design: Design,
    pub n_values: Vec<usize>,
    pub batch_values: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub estimators: Vec<EstimatorId>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_trim")]
    pub trim: f64,
    #[serde(default)]
    pub kernel: KernelKind,
    /// Fill the `wall_ms` column. Off by default so results files are
    /// byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    /// Bandwidth constants tried by cross-validation; defaults to 16
    /// geometric values over `[0.1, 5]`.
    #[serde(default)]
    pub cv_candidates: Option<Vec<f64>>,
    /// Held-out points scored by full-data cross-validation (0 = all).
    #[serde(default = "default_cv_max_eval_points")]
    pub cv_max_eval_points: usize,
    #[serde(default = "default_knot_candidates")]
    pub knot_candidates: Vec<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// `(n, batch_size)` pairs in run order.
    pub fn design_points(&self) -> Vec<(usize, usize)> {
        self.n_values.iter().flat_map(|&n| self.batch_values.iter().map(move |&b| (n, b))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("`{key}`: {why}")));
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators", "must name at least one estimator".into());
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return bad("estimators", format!("`{}` is listed twice", w[0]));
        }
        for (key, values) in [("n_values", &self.n_values), ("batch_values", &self.batch_values)] {
            if values.is_empty() {
                return bad(key, "must not be empty".into());
            }
            if values.contains(&0) {
                return bad(key, "values must be positive".into());
            }
        }
        match self.design {
            Design::FixedNVaryBatch if self.n_values.len() != 1 => {
                return bad("n_values", "design `fixed-n` takes exactly one value".into())
            }
            Design::FixedBatchVaryN if self.batch_values.len() != 1 => {
                return bad("batch_values", "design `fixed-batch` takes exactly one value".into())
            }
            _ => {}
        }
        if let Some(e) = self.estimators.iter().find(|e| !e.supports(self.model)) {
            return bad("estimators", format!("`{e}` cannot be used with model `{}`", self.model));
        }
        if self.grid_points < 3 {
            return bad("grid_points", "must be at least 3".into());
        }
        if !(self.trim >= 0.0 && self.trim < 0.5) {
            return bad("trim", "must lie in [0, 0.5)".into());
        }
        if let Some(c) = &self.cv_candidates {
            if c.is_empty() || c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return bad("cv_candidates", "must be a non-empty list of positive numbers".into());
            }
        }
        if self.knot_candidates.is_empty() || self.knot_candidates.contains(&0) {
            return bad("knot_candidates", "must be a non-empty list of positive counts".into());
        }
        Ok(())
    }
}
