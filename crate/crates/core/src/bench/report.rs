//! Aggregated experiment results and their CSV / text renderings.

use std::fmt::Write as _;
use std::path::Path;

use crate::bench::config::{Design, EstimatorId};
use crate::error::Result;
use crate::simgen::ModelFamily;

/// Header of the results CSV.
pub const RESULTS_HEADER: &str = "model,design,n,batch_size,estimator,component,replications,mise,coverage,wall_ms";

/// One `(design point, estimator, component)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MiseRow {
    pub model: ModelFamily,
    pub design: Design,
    pub n: usize,
    pub batch_size: usize,
    pub estimator: EstimatorId,
    pub component: &'static str,
    pub replications: usize,
    /// Mean of the per-replication ISEs.
    pub mise: f64,
    /// Mean coverage fraction.
    pub coverage: f64,
    /// Mean wall time per replication; zero unless timing was requested.
    pub wall_ms: f64,
    /// Per-replication ISEs in replication order.
    pub ises: Vec<f64>,
    /// Newton failures summed over replications.
    pub newton_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiseReport {
    pub rows: Vec<MiseRow>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl MiseReport {
    pub fn find(&self, n: usize, batch_size: usize, estimator: EstimatorId, component: &str) -> Option<&MiseRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.batch_size == batch_size && r.estimator == estimator && r.component == component)
    }

    /// `(n, mise)` for one estimator and component, in design order.
    pub fn series(&self, estimator: EstimatorId, component: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator && r.component == component)
            .map(|r| (r.n as f64, r.mise))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.rows.len() + 1));
        out.push_str(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model.name(),
                r.design.name(),
                r.n,
                r.batch_size,
                r.estimator.name(),
                r.component,
                r.replications,
                num(r.mise),
                num(r.coverage),
                num(r.wall_ms),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Human-readable table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let single = self.rows.first().is_some_and(|r| r.replications == 1);
        let label = if single { "ISE (1 replication)" } else { "MISE" };
        let _ = writeln!(
            out,
            "{:<7} {:>8} {:>6} {:<8} {:<9} {:>12} {:>9} {:>5}",
            "model", "n", "batch", "est", "component", label, "coverage", "reps"
        );
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<7} {:>8} {:>6} {:<8} {:<9} {:>12.4e} {:>9.4} {:>5}",
                r.model.name(),
                r.n,
                r.batch_size,
                r.estimator.name(),
                r.component,
                r.mise,
                r.coverage,
                r.replications
            );
            if r.newton_failures > 0 {
                let _ = write!(out, "  ({} Newton failures)", r.newton_failures);
            }
            out.push('\n');
        }
        out
    }
}
