//! Monte-Carlo experiment runner.
//!
//! Replications are independent jobs keyed by `(seed, replication)`. They
//! run on a thread pool of the requested size, and their results are
//! collected in job order and averaged sequentially, so the report does not
//! depend on the number of threads. The same replication keys are used at
//! every design point: streams for different batch sizes are partitions of
//! the same data, and smaller `n` are prefixes of larger ones.

use std::time::Instant;

use rayon::prelude::*;

use crate::baseline::{nml_batch_average, nml_full, nw_batch_average, nw_full, spline_batch_average, spline_full};
use crate::batch::{Batch, PooledDataset};
use crate::bench::config::{EstimatorId, ExperimentConfig};
use crate::bench::report::{MiseReport, MiseRow};
use crate::bench::mise;
use crate::error::{Error, Result};
use crate::estfun::BuiltinFamily;
use crate::grid::{EvaluationGrid, GridEstimate};
use crate::kernel::{default_cv_grid, select_cv_constant, select_cv_constant_with, BandwidthRule, CvOptions, KernelSpec};
use crate::newton::NewtonOptions;
use crate::renew::RenewableState;
use crate::simgen::{generate_stream, ModelFamily, StreamPlan};
use crate::spline::{select_knot_count, SplineBasis, SplineState};

/// Relative tolerance for the per-replication RWS_hf / NWE_f ISE identity.
const SHARED_BANDWIDTH_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for replications (at least 1).
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// One estimator's result in one replication.
#[derive(Debug, Clone)]
struct Cell {
    ise: Vec<f64>,
    coverage: Vec<f64>,
    wall_ms: f64,
    failures: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MiseReport> {
    cfg.validate()?;
    let reps = cfg.replications;
    let jobs: Vec<(usize, u64)> =
        cfg.n_values.iter().flat_map(|&n| (0..reps as u64).map(move |r| (n, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    // results[job][batch size][estimator]
    let results: Vec<Vec<Vec<Cell>>> =
        pool.install(|| jobs.par_iter().map(|&(n, r)| run_replication(cfg, n, r)).collect::<Result<_>>())?;

    let mut rows = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let chunk = &results[ni * reps..(ni + 1) * reps];
        for (bi, &b) in cfg.batch_values.iter().enumerate() {
            for (e, &estimator) in cfg.estimators.iter().enumerate() {
                let cells: Vec<&Cell> = chunk.iter().map(|job| &job[bi][e]).collect();
                let mean = |f: &dyn Fn(&Cell) -> f64| cells.iter().map(|c| f(c)).sum::<f64>() / reps as f64;
                for (c, &component) in cfg.model.component_names().iter().enumerate() {
                    let ises: Vec<f64> = cells.iter().map(|cell| cell.ise[c]).collect();
                    rows.push(MiseRow {
                        model: cfg.model,
                        design: cfg.design,
                        n,
                        batch_size: b,
                        estimator,
                        component,
                        replications: reps,
                        mise: ises.iter().sum::<f64>() / reps as f64,
                        coverage: mean(&|cell| cell.coverage[c]),
                        wall_ms: mean(&|cell| cell.wall_ms),
                        ises,
                        newton_failures: cells.iter().map(|cell| cell.failures).sum(),
                    });
                }
            }
        }
    }
    Ok(MiseReport { rows })
}

/// Everything one replication shares between estimators.
struct Replication<'a> {
    cfg: &'a ExperimentConfig,
    model: ModelFamily,
    n: usize,
    batches: Vec<Batch<f64>>,
    pooled: Option<&'a PooledDataset<f64>>,
    kernel: KernelSpec,
    grid: &'a EvaluationGrid<f64>,
    newton: NewtonOptions<f64>,
    c_full: Option<f64>,
    c_first: Option<f64>,
    basis_full: Option<SplineBasis<f64>>,
    basis_first: Option<SplineBasis<f64>>,
}

/// One replication at every batch size. The pooled data and its
/// cross-validated bandwidth constant do not depend on the batch size and
/// are computed once.
fn run_replication(cfg: &ExperimentConfig, n: usize, rep: u64) -> Result<Vec<Vec<Cell>>> {
    let model = cfg.model;
    let has = |pred: fn(EstimatorId) -> bool| cfg.estimators.iter().any(|&e| pred(e));
    let kernel = KernelSpec::new(cfg.kernel);
    let (lo, hi) = model.support();
    let grid = EvaluationGrid::uniform(lo, hi, cfg.grid_points, cfg.trim)?;
    let candidates = cfg.cv_candidates.clone().unwrap_or_else(default_cv_grid);

    let needs_pooled = has(|e| {
        e.needs_full_cv() || e.needs_full_knots() || matches!(e, EstimatorId::NweF | EstimatorId::NmlF | EstimatorId::CspF)
    });
    let pooled = if needs_pooled {
        let whole = generate_stream::<f64>(model, &StreamPlan::new(n, n, cfg.seed, rep)?)?;
        Some(PooledDataset::from_batches(&whole)?)
    } else {
        None
    };
    let pooled_batch = pooled.as_ref().map(PooledDataset::as_batch).transpose()?;
    let c_full = if has(EstimatorId::needs_full_cv) {
        let cv = CvOptions { max_eval_points: (cfg.cv_max_eval_points > 0).then_some(cfg.cv_max_eval_points) };
        Some(select_cv_constant_with(pooled_batch.as_ref().expect("pooled"), &kernel, &candidates, &cv)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.batch_values.len());
    for &batch_size in &cfg.batch_values {
        let batches = generate_stream::<f64>(model, &StreamPlan::new(n, batch_size, cfg.seed, rep)?)?;
        let c_first = if has(|e| e == EstimatorId::RwsHk) {
            Some(select_cv_constant(&batches[0], &kernel, &candidates)?)
        } else {
            None
        };
        let range = batches[0].x_range();
        let basis_full = if has(EstimatorId::needs_full_knots) {
            let data = pooled_batch.as_ref().expect("pooled");
            Some(SplineBasis::equidistant(select_knot_count(data, range, &cfg.knot_candidates)?, range)?)
        } else {
            None
        };
        let basis_first = if has(|e| e == EstimatorId::RwsKn1) {
            Some(SplineBasis::equidistant(select_knot_count(&batches[0], range, &cfg.knot_candidates)?, range)?)
        } else {
            None
        };
        let rep_state = Replication {
            cfg,
            model,
            n,
            batches,
            pooled: pooled.as_ref(),
            kernel,
            grid: &grid,
            newton: NewtonOptions::default(),
            c_full,
            c_first,
            basis_full,
            basis_first,
        };
        out.push(rep_state.run_all(batch_size, rep)?);
    }
    Ok(out)
}

impl Replication<'_> {
    fn run_all(&self, batch_size: usize, rep: u64) -> Result<Vec<Cell>> {
        let (model, n) = (self.model, self.n);
        let mut cells = Vec::with_capacity(self.cfg.estimators.len());
        for &e in &self.cfg.estimators {
            let start = Instant::now();
            let (estimate, failures) = self.estimate(e)?;
            let wall_ms = if self.cfg.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let mut ise = Vec::with_capacity(model.dim());
            let mut coverage = Vec::with_capacity(model.dim());
            for c in 0..model.dim() {
                let r = mise(&estimate, |x: f64| model.truth(x), self.grid, c).map_err(|err| match err {
                    Error::EmptyEstimate => Error::InsufficientData(format!(
                        "{e} produced no defined interior grid point (n = {n}, batch size = {batch_size}, replication {rep})"
                    )),
                    other => other,
                })?;
                ise.push(r.value);
                coverage.push(r.coverage);
            }
            cells.push(Cell { ise, coverage, wall_ms, failures });
        }
        self.check_shared_bandwidth_identity(&cells, rep)?;
        Ok(cells)
    }

    fn pooled(&self) -> &PooledDataset<f64> {
        self.pooled.expect("pooled data prepared")
    }

    fn h_full(&self) -> Result<f64> {
        BandwidthRule::online(self.c_full.expect("full-data constant prepared"))?.bandwidth(self.n as u64)
    }

    /// `c_f · |i_j|^(−1/5)` for every batch.
    fn per_batch_h(&self) -> Result<Vec<f64>> {
        let rule = BandwidthRule::online(self.c_full.expect("full-data constant prepared"))?;
        self.batches.iter().map(|b| rule.bandwidth(b.len() as u64)).collect()
    }

    fn family(&self) -> BuiltinFamily {
        self.model.estimating_function()
    }

    fn stream(&self, rule: BandwidthRule<f64>) -> Result<(GridEstimate<f64>, usize)> {
        let f = self.family();
        let mut state = RenewableState::new((*self.grid).clone(), f.dimension())?;
        let mut failures = 0;
        for b in &self.batches {
            let h = state.bandwidth_for(&rule, b)?;
            if f == BuiltinFamily::MeanRegression {
                state.update_closed_form(b, h, &self.kernel)?;
            } else {
                failures += state.update_newton(b, h, &self.kernel, &f, &self.newton)?.failures.len();
            }
        }
        Ok((state.to_estimate(), failures))
    }

    fn spline_stream(&self, basis: &SplineBasis<f64>) -> Result<GridEstimate<f64>> {
        let mut state = SplineState::new(basis.clone());
        for b in &self.batches {
            state.update(b)?;
        }
        Ok(state.solve(0.0)?.predict_grid(self.grid))
    }

    fn estimate(&self, e: EstimatorId) -> Result<(GridEstimate<f64>, usize)> {
        let f = self.family();
        let mean_only = f == BuiltinFamily::MeanRegression;
        let count = |reports: Vec<crate::renew::NewtonReport>| reports.iter().map(|r| r.failures.len()).sum();
        Ok(match e {
            EstimatorId::NweF if mean_only => (nw_full(self.pooled(), self.h_full()?, &self.kernel, self.grid)?, 0),
            EstimatorId::NweA if mean_only => {
                (nw_batch_average(&self.batches, &self.per_batch_h()?, &self.kernel, self.grid)?.estimate, 0)
            }
            // Kernel-weighted local moments: N-W for the mean, weighted
            // squared residuals for the variance.
            EstimatorId::NweF | EstimatorId::NmlF => {
                let (est, report) = nml_full(self.pooled(), self.h_full()?, &self.kernel, &f, self.grid, &self.newton)?;
                (est, report.failures.len())
            }
            EstimatorId::NweA | EstimatorId::NmlA => {
                let (avg, reports) =
                    nml_batch_average(&self.batches, &self.per_batch_h()?, &self.kernel, &f, self.grid, &self.newton)?;
                (avg.estimate, count(reports))
            }
            EstimatorId::RwsHf => self.stream(BandwidthRule::fixed(self.h_full()?)?)?,
            EstimatorId::RwsHk => self.stream(BandwidthRule::online(self.c_first.expect("first-batch constant prepared"))?)?,
            EstimatorId::CspF => {
                let basis = self.basis_full.as_ref().expect("knots prepared");
                (spline_full(self.pooled(), basis)?.predict_grid(self.grid), 0)
            }
            EstimatorId::CspA => {
                let basis = self.basis_full.as_ref().expect("knots prepared");
                (spline_batch_average(&self.batches, basis, self.grid)?.estimate, 0)
            }
            EstimatorId::RwsKnf => (self.spline_stream(self.basis_full.as_ref().expect("knots prepared"))?, 0),
            EstimatorId::RwsKn1 => (self.spline_stream(self.basis_first.as_ref().expect("knots prepared"))?, 0),
        })
    }

    /// With mean regression and a shared bandwidth the renewable estimate is
    /// algebraically the full-data N-W estimate; their ISEs must agree.
    fn check_shared_bandwidth_identity(&self, cells: &[Cell], rep: u64) -> Result<()> {
        if self.model != ModelFamily::Homoscedastic {
            return Ok(());
        }
        let pos = |id| self.cfg.estimators.iter().position(|&e| e == id);
        let (Some(f), Some(hf)) = (pos(EstimatorId::NweF), pos(EstimatorId::RwsHf)) else { return Ok(()) };
        let (a, b) = (cells[f].ise[0], cells[hf].ise[0]);
        if (a - b).abs() > SHARED_BANDWIDTH_TOLERANCE * a.abs().max(b.abs()) {
            return Err(Error::Invariant(format!(
                "replication {rep}: RWS_hf ISE {b:e} differs from NWE_f ISE {a:e} (n = {}, batch size = {})",
                self.n,
                self.batches[0].len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn small_homoscedastic_run_is_thread_independent() {
        let c = cfg(r#"
model = "homo"
design = "fixed-n"
n_values = [600]
batch_values = [50, 200]
replications = 3
estimators = ["nwe-f", "nwe-a", "rws-hf", "rws-hk", "csp-f", "csp-a", "rws-knf", "rws-kn1"]
seed = 9
grid_points = 101
knot_candidates = [2, 4, 6]
"#);
        let one = run_experiment(&c, &RunOptions { threads: 1 }).unwrap();
        let three = run_experiment(&c, &RunOptions { threads: 3 }).unwrap();
        assert_eq!(one.to_csv(), three.to_csv());
        assert_eq!(one.rows.len(), 2 * 8);
        for r in &one.rows {
            assert!(r.mise.is_finite() && r.mise >= 0.0, "{r:?}");
            assert!(r.coverage > 0.0 && r.coverage <= 1.0);
        }
        // Same data at every batch size, so full-data estimators agree.
        let f = |b| one.find(600, b, EstimatorId::NweF, "mean").unwrap().mise;
        assert_eq!(f(50), f(200));
        let spline = |e| one.find(600, 50, e, "mean").unwrap().ises.clone();
        for (a, b) in spline(EstimatorId::CspF).iter().zip(spline(EstimatorId::RwsKnf)) {
            assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn other_models_run() {
        let hetero = cfg(r#"
model = "hetero"
design = "fixed-batch"
n_values = [400]
batch_values = [100]
replications = 1
estimators = ["nwe-f", "nwe-a", "rws-hf", "rws-hk"]
grid_points = 51
"#);
        let r = run_experiment(&hetero, &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 8);
        assert!(r.rows.iter().any(|row| row.component == "variance"));

        let gamma = cfg(r#"
model = "gamma"
design = "fixed-batch"
n_values = [400]
batch_values = [100]
replications = 1
estimators = ["nml-f", "nml-a", "rws-hf", "rws-hk"]
grid_points = 51
"#);
        let r = run_experiment(&gamma, &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.iter().all(|row| row.mise.is_finite()));
    }
}
