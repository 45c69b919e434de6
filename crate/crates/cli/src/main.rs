//! `rws`: simulate streams, fit renewable estimators batch by batch, run
//! Monte-Carlo experiments and inspect saved states.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rws_core::bench::config::Design;
use rws_core::bench::rate_check;
use rws_core::kernel::{default_cv_grid, select_cv_constant};
use rws_core::spline::select_knot_count;
use rws_core::store::{read_batch_csv, write_batch_csv, KernelSettings, SNAPSHOT_VERSION};
use rws_core::{
    generate_stream, load_state, run_experiment, save_state, BandwidthRule, Batch, BuiltinFamily,
    EstimatorId, EvaluationGrid, ExperimentConfig, GridEstimate, KernelKind, KernelSpec, ModelFamily, RenewableState,
    RunOptions, SnapshotState, SplineBasis, SplineState, StateSnapshot, StreamPlan,
};

#[derive(Parser)]
#[command(name = "rws", version, about = "Renewable weighted-sum estimators for streaming data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated stream as numbered batch CSV files.
    Simulate(SimulateArgs),
    /// Feed batch files to a streaming estimator and write its estimates.
    FitStream(FitArgs),
    /// Run a Monte-Carlo experiment and report MISE per estimator.
    RunExperiment(ExperimentArgs),
    /// Fit the slope of log MISE against log n from a results file.
    RateCheck(RateArgs),
    /// Print the metadata of a saved state.
    InspectState(InspectArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelFamily,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication index; different replications give independent streams.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Batch CSV files or directories of them; ingested in file name order.
    inputs: Vec<PathBuf>,
    /// rws-hf, rws-hk, rws-knf or rws-kn1.
    #[arg(long, value_parser = parse_estimator)]
    estimator: EstimatorId,
    /// mean, mean-variance or gamma-shape (kernel estimators only).
    #[arg(long, value_parser = parse_estfun)]
    estfun: Option<BuiltinFamily>,
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<KernelKind>,
    /// Fixed bandwidth for rws-hf.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Schedule constant for rws-hk; cross-validated on the first batch if omitted.
    #[arg(long)]
    constant: Option<f64>,
    /// Interior knot count for rws-knf.
    #[arg(long)]
    knots: Option<usize>,
    /// Lower end of the evaluation range (default: smallest x of the first batch).
    #[arg(long, allow_hyphen_values = true)]
    grid_min: Option<f64>,
    /// Upper end of the evaluation range (default: largest x of the first batch).
    #[arg(long, allow_hyphen_values = true)]
    grid_max: Option<f64>,
    #[arg(long, alias = "grid-points")]
    eval_points: Option<usize>,
    /// Resume from this saved state.
    #[arg(long)]
    state_in: Option<PathBuf>,
    /// Save the final state here.
    #[arg(long)]
    state_out: Option<PathBuf>,
    /// Estimates CSV (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML). Without it the experiment is built from flags.
    #[arg(conflicts_with_all = ["model", "estimator", "n", "batch_size", "seed", "replications", "grid_points", "trim", "kernel"])]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelFamily>,
    #[arg(long, value_parser = parse_estimator, value_delimiter = ',')]
    estimator: Vec<EstimatorId>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    batch_size: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value_t = 401)]
    grid_points: usize,
    #[arg(long, default_value_t = 0.05)]
    trim: f64,
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<KernelKind>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "RWS_THREADS", default_value_t = 1)]
    threads: usize,
    /// Fill the wall_ms column (makes output run-dependent).
    #[arg(long)]
    timing: bool,
    /// Results CSV. Without it the CSV goes to standard output and the
    /// summary to standard error.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    /// Results CSV written by run-experiment.
    results: PathBuf,
    #[arg(long, value_parser = parse_estimator)]
    estimator: EstimatorId,
    #[arg(long, default_value = "mean")]
    component: String,
    /// Only use rows with this batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    state: PathBuf,
}

/// Command failure, split by exit code.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<rws_core::Error> for Failure {
    fn from(e: rws_core::Error) -> Self {
        match e {
            rws_core::Error::Config(m) => Failure::Usage(format!("configuration error: {m}")),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<rws_core::Error>() {
            Ok(core) => core.into(),
            Err(e) => Failure::Runtime(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_model(s: &str) -> Result<ModelFamily, String> {
    ModelFamily::from_name(s).ok_or_else(|| "expected homo, hetero or gamma".into())
}

fn parse_estimator(s: &str) -> Result<EstimatorId, String> {
    EstimatorId::from_name(s).ok_or_else(|| {
        let names: Vec<_> = EstimatorId::ALL.iter().map(|e| e.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_estfun(s: &str) -> Result<BuiltinFamily, String> {
    BuiltinFamily::from_name(s).ok_or_else(|| "expected mean, mean-variance or gamma-shape".into())
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    KernelKind::from_name(s).ok_or_else(|| "expected gaussian or epanechnikov".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitStream(a) => fit_stream(a),
        Command::RunExperiment(a) => experiment(a),
        Command::RateCheck(a) => rate(a),
        Command::InspectState(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn simulate(a: SimulateArgs) -> CmdResult {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if a.batch_size == 0 {
        return Err(usage("--batch-size must be at least 1"));
    }
    let plan = StreamPlan::new(a.n, a.batch_size, a.seed, a.replication)?;
    let batches: Vec<Batch<f64>> = generate_stream(a.model, &plan)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for b in &batches {
        let path = a.out.join(format!("batch_{:04}.csv", b.index()));
        write_batch_csv(b, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}\t{}", path.display(), b.len());
    }
    Ok(())
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for entry in std::fs::read_dir(p).with_context(|| format!("listing {}", p.display()))? {
                let path = entry?.path();
                if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
                    files.push(path);
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()).then_with(|| a.cmp(b)));
    Ok(files)
}

fn mismatch<T: PartialEq + std::fmt::Debug>(flag: &str, given: Option<T>, stored: T) -> CmdResult {
    match given {
        Some(g) if g != stored => {
            Err(usage(format!("{flag} {g:?} does not match the saved state ({stored:?})")))
        }
        _ => Ok(()),
    }
}

fn fit_stream(a: FitArgs) -> CmdResult {
    let kernel_estimator = match a.estimator {
        EstimatorId::RwsHf | EstimatorId::RwsHk => true,
        EstimatorId::RwsKnf | EstimatorId::RwsKn1 => false,
        other => return Err(usage(format!("`{other}` is not a streaming estimator (use rws-hf, rws-hk, rws-knf or rws-kn1)"))),
    };
    if a.bandwidth.is_some() && a.estimator != EstimatorId::RwsHf {
        return Err(usage("--bandwidth only applies to rws-hf"));
    }
    if a.constant.is_some() && a.estimator != EstimatorId::RwsHk {
        return Err(usage("--constant only applies to rws-hk"));
    }
    if a.knots.is_some() && a.estimator != EstimatorId::RwsKnf {
        return Err(usage("--knots only applies to rws-knf"));
    }
    if !kernel_estimator && a.estfun.is_some_and(|f| f != BuiltinFamily::MeanRegression) {
        return Err(usage("spline estimators only fit the mean"));
    }
    if !kernel_estimator && a.kernel.is_some() {
        return Err(usage("--kernel does not apply to spline estimators"));
    }
    if a.eval_points.is_some_and(|p| p < 2) {
        return Err(usage("--eval-points must be at least 2"));
    }
    let files = collect_inputs(&a.inputs)?;
    if files.is_empty() && a.state_in.is_none() {
        return Err(usage("no batch files given"));
    }

    let resumed = match &a.state_in {
        Some(p) => {
            let snap = load_state(p).with_context(|| format!("loading {}", p.display()))?;
            if snap.estimator != a.estimator.name() {
                return Err(usage(format!(
                    "saved state belongs to `{}`, not `{}`",
                    snap.estimator, a.estimator
                )));
            }
            Some(snap)
        }
        None => None,
    };

    // Every file is parsed before fitting so a bad file fails without output.
    let mut batches = Vec::with_capacity(files.len());
    for f in &files {
        batches.push(read_batch_csv(f)?);
    }

    let snapshot = if kernel_estimator {
        fit_kernel(&a, resumed, &batches)?
    } else {
        fit_spline(&a, resumed, &batches)?
    };

    let text = estimates_csv(&snapshot, a.eval_points)?;
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.state_out {
        save_state(&snapshot, p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn first_range(a: &FitArgs, batches: &[Batch<f64>]) -> Result<(f64, f64), Failure> {
    let data = batches.first().map(|b| b.x_range());
    let lo = a.grid_min.or(data.map(|r| r.0));
    let hi = a.grid_max.or(data.map(|r| r.1));
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo < hi => Ok((lo, hi)),
        (Some(lo), Some(hi)) => Err(usage(format!("empty evaluation range [{lo}, {hi}]"))),
        _ => Err(usage("no data to infer the evaluation range from")),
    }
}

fn fit_kernel(a: &FitArgs, resumed: Option<StateSnapshot>, batches: &[Batch<f64>]) -> Result<StateSnapshot, Failure> {
    let (mut state, settings) = match resumed {
        Some(StateSnapshot { state: SnapshotState::Kernel(state), settings: Some(settings), .. }) => {
            mismatch("--estfun", a.estfun, settings.estimating_function)?;
            mismatch("--kernel", a.kernel, settings.kernel)?;
            let stored_h = match settings.bandwidth {
                BandwidthRule::Fixed { h } => h,
                BandwidthRule::Online { schedule } => schedule.constant(),
            };
            mismatch("--bandwidth", a.bandwidth, stored_h)?;
            mismatch("--constant", a.constant, stored_h)?;
            mismatch("--grid-min", a.grid_min, state.grid().support().0)?;
            mismatch("--grid-max", a.grid_max, state.grid().support().1)?;
            mismatch("--eval-points", a.eval_points, state.grid().len())?;
            (state, settings)
        }
        Some(_) => return Err(usage("saved state is not a kernel state")),
        None => {
            let family = a.estfun.unwrap_or(BuiltinFamily::MeanRegression);
            let kind = a.kernel.unwrap_or_default();
            let bandwidth = match a.estimator {
                EstimatorId::RwsHf => {
                    let h = a.bandwidth.ok_or_else(|| usage("rws-hf needs --bandwidth"))?;
                    BandwidthRule::fixed(h).map_err(|e| usage(e.to_string()))?
                }
                _ => {
                    let c = match a.constant {
                        Some(c) => c,
                        None => select_cv_constant(&batches[0], &KernelSpec::new(kind), &default_cv_grid())?,
                    };
                    BandwidthRule::online(c).map_err(|e| usage(e.to_string()))?
                }
            };
            let (lo, hi) = first_range(a, batches)?;
            let grid = EvaluationGrid::uniform(lo, hi, a.eval_points.unwrap_or(401), 0.0)?;
            let state = RenewableState::new(grid, family.dimension())?;
            (state, KernelSettings { estimating_function: family, kernel: kind, bandwidth })
        }
    };

    let kernel = KernelSpec::new(settings.kernel);
    let family = settings.estimating_function;
    for b in batches {
        let h = state.bandwidth_for(&settings.bandwidth, b)?;
        if family == BuiltinFamily::MeanRegression {
            state.update_closed_form(b, h, &kernel)?;
        } else {
            let report = state.update_newton(b, h, &kernel, &family, &Default::default())?;
            if !report.failures.is_empty() {
                eprintln!(
                    "warning: batch {}: Newton failed at {} grid points (reset to undefined)",
                    state.batch_count(),
                    report.failures.len()
                );
            }
        }
    }
    Ok(StateSnapshot {
        estimator: a.estimator.name().to_string(),
        settings: Some(settings),
        state: SnapshotState::Kernel(state),
    })
}

fn fit_spline(a: &FitArgs, resumed: Option<StateSnapshot>, batches: &[Batch<f64>]) -> Result<StateSnapshot, Failure> {
    let mut state = match resumed {
        Some(StateSnapshot { state: SnapshotState::Spline(state), .. }) => {
            mismatch("--knots", a.knots, state.basis().knots().len())?;
            mismatch("--grid-min", a.grid_min, state.basis().support().0)?;
            mismatch("--grid-max", a.grid_max, state.basis().support().1)?;
            state
        }
        Some(_) => return Err(usage("saved state is not a spline state")),
        None => {
            let range = first_range(a, batches)?;
            let count = match a.knots {
                Some(k) => k,
                None if a.estimator == EstimatorId::RwsKnf => return Err(usage("rws-knf needs --knots")),
                None => select_knot_count(&batches[0], range, &(2..=20).collect::<Vec<_>>())?,
            };
            SplineState::new(SplineBasis::equidistant(count, range)?)
        }
    };
    for b in batches {
        state.update(b)?;
    }
    Ok(StateSnapshot { estimator: a.estimator.name().to_string(), settings: None, state: SnapshotState::Spline(state) })
}

fn estimates_csv(snapshot: &StateSnapshot, eval_points: Option<usize>) -> Result<String, Failure> {
    let (grid, est): (EvaluationGrid<f64>, GridEstimate<f64>) = match &snapshot.state {
        SnapshotState::Kernel(s) => (s.grid().clone(), s.to_estimate()),
        SnapshotState::Spline(s) => {
            let (lo, hi) = s.basis().support();
            let grid = EvaluationGrid::uniform(lo, hi, eval_points.unwrap_or(401), 0.0)?;
            let fit = s.solve(0.0)?;
            let est = fit.predict_grid(&grid);
            (grid, est)
        }
    };
    let mut out = String::from("x,estimate");
    for c in 2..=est.dim() {
        let _ = write!(out, ",estimate{c}");
    }
    out.push('\n');
    for (i, x) in grid.points().iter().enumerate() {
        let _ = write!(out, "{x:.16e}");
        match est.get(i) {
            Some(v) => v.iter().for_each(|v| {
                let _ = write!(out, ",{v:.16e}");
            }),
            None => (0..est.dim()).for_each(|_| out.push_str(",NaN")),
        }
        out.push('\n');
    }
    Ok(out)
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    if a.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => {
            let model = a.model.ok_or_else(|| usage("give a config file or --model"))?;
            if a.estimator.is_empty() || a.n.is_empty() || a.batch_size.is_empty() {
                return Err(usage("--estimator, --n and --batch-size are required without a config file"));
            }
            let design = if a.n.len() > 1 { Design::FixedBatchVaryN } else { Design::FixedNVaryBatch };
            let mut text = String::new();
            let _ = writeln!(text, "model = \"{model}\"\ndesign = \"{}\"", design.name());
            let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
            let _ = writeln!(text, "n_values = [{}]\nbatch_values = [{}]", list(&a.n), list(&a.batch_size));
            let names: Vec<_> = a.estimator.iter().map(|e| format!("\"{e}\"")).collect();
            let _ = writeln!(text, "estimators = [{}]", names.join(", "));
            let _ = writeln!(text, "seed = {}\ngrid_points = {}\ntrim = {:?}", a.seed.unwrap_or(0), a.grid_points, a.trim);
            if let Some(r) = a.replications {
                let _ = writeln!(text, "replications = {r}");
            }
            if let Some(k) = a.kernel {
                let _ = writeln!(text, "kernel = \"{}\"", k.name());
            }
            ExperimentConfig::from_toml_str(&text)?
        }
    };
    cfg.record_timing |= a.timing;
    let report = run_experiment(&cfg, &RunOptions { threads: a.threads })?;
    match &a.out {
        Some(p) => {
            report.write_csv(p).with_context(|| format!("writing {}", p.display()))?;
            print!("{}", report.summary());
        }
        None => {
            print!("{}", report.to_csv());
            eprint!("{}", report.summary());
        }
    }
    Ok(())
}

fn read_results(path: &Path, a: &RateArgs) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("no `{name}` column"));
    let (n_col, b_col, e_col, c_col, m_col) = (col("n")?, col("batch_size")?, col("estimator")?, col("component")?, col("mise")?);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if &record[e_col] != a.estimator.name() || record[c_col] != a.component {
            continue;
        }
        let batch: usize = record[b_col].parse().with_context(|| format!("line {line}: bad batch_size"))?;
        if a.batch_size.is_some_and(|b| b != batch) {
            continue;
        }
        let n: f64 = record[n_col].parse().with_context(|| format!("line {line}: bad n"))?;
        let mise: f64 = record[m_col].parse().with_context(|| format!("line {line}: bad mise"))?;
        points.push((n, mise));
    }
    Ok(points)
}

fn rate(a: RateArgs) -> CmdResult {
    let points = read_results(&a.results, &a).with_context(|| format!("reading {}", a.results.display()))?;
    if points.is_empty() {
        return Err(usage(format!("no rows for estimator `{}`, component `{}`", a.estimator, a.component)));
    }
    let slope = rate_check(&points)?;
    for (n, m) in &points {
        println!("n = {n:>10}  mise = {m:.6e}");
    }
    println!("slope = {slope:.4}");
    Ok(())
}

fn inspect(a: InspectArgs) -> CmdResult {
    let snap = load_state(&a.state).with_context(|| format!("loading {}", a.state.display()))?;
    println!("format version   {SNAPSHOT_VERSION}");
    println!("estimator        {}", snap.estimator);
    match &snap.state {
        SnapshotState::Kernel(s) => {
            println!("kind             kernel");
            if let Some(st) = &snap.settings {
                println!("estimating fn    {}", st.estimating_function.name());
                println!("kernel           {}", st.kernel.name());
                match st.bandwidth {
                    BandwidthRule::Fixed { h } => println!("bandwidth        fixed h = {h}"),
                    BandwidthRule::Online { schedule } => {
                        println!("bandwidth        online c = {} (h = c N^-1/5)", schedule.constant())
                    }
                }
            }
            println!("batches          {}", s.batch_count());
            println!("observations     {}", s.cumulative_n());
            let (lo, hi) = s.grid().support();
            println!("grid             {} points on [{lo}, {hi}]", s.grid().len());
            println!("defined points   {}", s.defined_mask().iter().filter(|&&d| d).count());
            println!("dimension        {}", s.dim());
        }
        SnapshotState::Spline(s) => {
            println!("kind             spline");
            println!("batches          {}", s.batch_count());
            println!("observations     {}", s.cumulative_n());
            let (lo, hi) = s.basis().support();
            println!("support          [{lo}, {hi}]");
            println!("interior knots   {}", s.basis().knots().len());
            println!("basis dimension  {}", s.basis().dim());
        }
    }
    Ok(())
}
