//! `advol`: calibrate critical values, simulate scenarios, and fit, forecast
//! and evaluate adaptive volatility models on CSV data.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or data error
//! (including calibration failures).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use adaptive_vol::adaptive::{rolling_fit, StepOutcome, StopReason};
use adaptive_vol::calibration::{conservative_schedule, McConfig, ReplicateSet, SearchConfig};
use adaptive_vol::evaluate::{
    ape, compare_methods, tune_r_rho, ForecastConfig, Method, Proxy, DEFAULT_BASELINE_WINDOW, DEFAULT_WINDOW,
};
use adaptive_vol::grid::IntervalGrid;
use adaptive_vol::io::DataSet;
use adaptive_vol::mle::OptimizerConfig;
use adaptive_vol::schedule::CriticalValueSchedule;
use adaptive_vol::seed::sub_seed;
use adaptive_vol::simulate::{PaperScenario, Scenario};
use adaptive_vol::volmodel::{Family, InitRule, ModelSpec, ParamVector};
use adaptive_vol::Error;

#[derive(Parser)]
#[command(
    name = "advol",
    version,
    about = "Adaptive pointwise estimation of volatility models"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo calibration of a critical-value schedule.
    Calibrate(CalibrateArgs),
    /// Simulate change-point scenarios to CSV (columns t,y,sigma2_true,regime).
    Simulate(SimulateArgs),
    /// Adaptive fit at each endpoint (columns t,k_hat,interval_start,interval_len,omega,alpha,beta,stopped,sup_stats).
    Fit(FitArgs),
    /// Variance forecasts (columns t,horizon,sigma2_forecast).
    Forecast(ForecastArgs),
    /// Compare methods by trailing absolute prediction error
    /// (columns t,method,ape_w,ratio_baseline, then a `#` summary block).
    Evaluate(EvaluateArgs),
    /// Choose (r, rho) among calibrated schedules (columns r,rho,objective,selected).
    Tune(TuneArgs),
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 10)]
    m0: usize,
    #[arg(long, default_value_t = 1.25)]
    a: f64,
    #[arg(long = "mK", default_value_t = 570)]
    m_k: usize,
}

impl GridArgs {
    fn grid(&self) -> anyhow::Result<IntervalGrid> {
        Ok(IntervalGrid::spanning(self.m0, self.a, self.m_k)?)
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    family: Family,
    /// ω,α,β of the simulated model; repeat to calibrate on a parameter grid.
    #[arg(long = "theta0", required = true)]
    theta0: Vec<ParamVector>,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Monte Carlo replicates (default 1000, or 400 for garch11).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Output schedule. With several --theta0 values the individual schedules
    /// go to `<stem>.<i>.<ext>` and the pointwise maximum to this path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "unconditional")]
    init: InitRule,
}

#[derive(Args)]
struct SimulateArgs {
    /// low-garch, high-garch or file:<path>
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with columns t,y[,sigma2_true].
    #[arg(long)]
    data: PathBuf,
    /// from:to[:step], inclusive, zero-based (default: every endpoint with enough history).
    #[arg(long)]
    endpoints: Option<String>,
    #[arg(long, default_value = "unconditional")]
    init: InitRule,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: Family,
    #[arg(long)]
    schedule: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    family: Family,
    /// Adaptive schedule; without it a rolling parametric fit is used.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Estimation window of the rolling fit.
    #[arg(long = "estimation-window", default_value_t = DEFAULT_BASELINE_WINDOW)]
    estimation_window: usize,
    /// 1, 1-10 or 1,2,5
    #[arg(long, default_value = "1")]
    horizon: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Adaptive schedule; adds method `adaptive-<family>`. Repeatable.
    #[arg(long)]
    schedule: Vec<PathBuf>,
    /// Rolling parametric family; adds method `parametric-<family>`. Repeatable.
    #[arg(long)]
    parametric: Vec<Family>,
    #[arg(long = "estimation-window", default_value_t = DEFAULT_BASELINE_WINDOW)]
    estimation_window: usize,
    #[arg(long, default_value = "1")]
    horizon: String,
    /// true-sigma2 or squared-returns
    #[arg(long, default_value = "squared-returns")]
    proxy: Proxy,
    /// Trailing averaging window for ape_w.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Method the ratios are taken against.
    #[arg(long, default_value = "parametric-garch11")]
    baseline: String,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Candidate schedules of one family, each recording r and rho.
    #[arg(long, required = true)]
    schedule: Vec<PathBuf>,
    #[arg(long, default_value = "1")]
    horizon: String,
    #[arg(long, default_value = "squared-returns")]
    proxy: Proxy,
    /// Exponent of the loss |target − forecast|^power.
    #[arg(long, default_value_t = 1.0)]
    power: f64,
}

/// An error that maps to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_) | Error::Numeric { .. } | Error::NoFeasibleCandidates { .. }) => 1,
        Some(_) => 2,
        None => 1,
    }
}

/// The invoking command line without `--jobs`, which never affects output.
fn command_header() -> String {
    let mut parts = vec!["advol".to_owned()];
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--jobs" {
            args.next();
            continue;
        }
        if a.starts_with("--jobs=") {
            continue;
        }
        parts.push(a);
    }
    format!("command: {}", parts.join(" "))
}

fn parse_endpoints(spec: Option<&str>, n: usize, min_history: usize) -> anyhow::Result<Vec<usize>> {
    let Some(spec) = spec else {
        if n < min_history {
            return Err(usage(format!(
                "series has {n} observations, at least {min_history} needed"
            )));
        }
        return Ok((min_history - 1..n).collect());
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(usage(format!("--endpoints expects from:to[:step], got `{spec}`")));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("bad number `{s}` in --endpoints")))
    };
    let from = num(parts[0])?;
    let to = num(parts[1])?;
    let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
    if step == 0 || from > to {
        return Err(usage(format!("--endpoints `{spec}` is empty")));
    }
    if to >= n {
        return Err(usage(format!(
            "--endpoints `{spec}` exceeds the series (last index {})",
            n - 1
        )));
    }
    Ok((from..=to).step_by(step).collect())
}

fn parse_horizons(spec: &str) -> anyhow::Result<Vec<usize>> {
    let bad = || usage(format!("--horizon expects 1, 1-10 or 1,2,5, got `{spec}`"));
    let mut out = Vec::new();
    for part in spec.split(',') {
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.trim().parse().map_err(|_| bad())?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() || out[0] == 0 {
        return Err(bad());
    }
    Ok(out)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn load_data(path: &Path) -> anyhow::Result<DataSet> {
    DataSet::load(path).map_err(|e| match e {
        Error::Io(io) => anyhow::Error::new(Error::Io(io)).context(format!("cannot read {}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn load_schedule(path: &Path) -> anyhow::Result<CriticalValueSchedule> {
    CriticalValueSchedule::load(path).map_err(|e| match e {
        Error::Io(io) => anyhow::Error::new(Error::Io(io)).context(format!("cannot read {}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn write_schedule(path: &Path, cv: &CriticalValueSchedule, header: &str) -> anyhow::Result<()> {
    let text = format!("# {header}\n{}", cv.to_text());
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn indexed_path(path: &Path, i: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{i}"),
    };
    path.with_file_name(name)
}

fn cmd_calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let reps = args.reps.unwrap_or_else(|| McConfig::default_reps(args.family));
    if reps == 0 {
        return Err(usage("--reps must be positive"));
    }
    let spec = ModelSpec::new(args.family);
    let grid = args.grid.grid().map_err(|e| usage(e.to_string()))?;
    let header = command_header();
    let mut mc = McConfig::new(reps, args.seed);
    mc.init = args.init;
    let mut schedules = Vec::new();
    for (i, theta0) in args.theta0.iter().enumerate() {
        let theta0 = ParamVector::new(
            theta0.omega,
            if spec.alpha_active() { theta0.alpha } else { 0.0 },
            if spec.beta_active() { theta0.beta } else { 0.0 },
        );
        if theta0 != args.theta0[i] {
            return Err(usage(format!(
                "--theta0 {} has components inactive for {}",
                args.theta0[i], args.family
            )));
        }
        // Each parameter point gets its own stream.
        mc.seed = if args.theta0.len() == 1 {
            args.seed
        } else {
            sub_seed(args.seed, i as u64)
        };
        let set = ReplicateSet::simulate(&spec, &theta0, &grid, &mc)?;
        let cv = set.calibrate(args.r, args.rho, &SearchConfig::default())?;
        eprintln!(
            "theta0 {theta0}: C={:.4} D={:.4} z({})={:.3} z({})={:.3}",
            cv.c.unwrap_or(f64::NAN),
            cv.d.unwrap_or(f64::NAN),
            grid.m0(),
            cv.z(0),
            grid.max_length(),
            cv.z(grid.steps())
        );
        schedules.push(cv);
    }
    if schedules.len() == 1 {
        write_schedule(&args.out, &schedules[0], &header)?;
    } else {
        for (i, cv) in schedules.iter().enumerate() {
            write_schedule(&indexed_path(&args.out, i + 1), cv, &header)?;
        }
        let composite = conservative_schedule(&schedules)?;
        write_schedule(&args.out, &composite, &header)?;
    }
    Ok(())
}

fn scenario_from_arg(arg: &str) -> anyhow::Result<Scenario> {
    if let Some(path) = arg.strip_prefix("file:") {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read scenario {path}"))?;
        return Scenario::from_text(&text).map_err(|e| usage(format!("{path}: {e}")));
    }
    let kind: PaperScenario = arg.parse().map_err(|e: Error| usage(e.to_string()))?;
    Ok(Scenario::paper(kind))
}

fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    if args.reps == 0 {
        return Err(usage("--reps must be positive"));
    }
    let scenario = scenario_from_arg(&args.scenario)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let header = command_header();
    let width = args.reps.to_string().len().max(3);
    for i in 0..args.reps {
        let seed = sub_seed(args.seed, i as u64);
        let sim = scenario.generate(seed)?;
        let data = DataSet {
            returns: sim.returns,
            sigma2: Some(sim.sigma2.into_vec()),
            regime: Some(sim.regime),
        };
        let comments = vec![
            header.clone(),
            format!("replicate {} seed {seed}", i + 1),
            format!("scenario hash {:016x}", scenario.hash()),
            scenario.to_string(),
        ];
        let path = args.out_dir.join(format!("rep_{:0width$}.csv", i + 1));
        let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        data.write(io::BufWriter::new(file), &comments)?;
    }
    Ok(())
}

fn check_family(cv: &CriticalValueSchedule, family: Family) -> anyhow::Result<()> {
    if cv.family != family {
        return Err(usage(format!("schedule is for {}, --family is {family}", cv.family)));
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let data = load_data(&args.data.data)?;
    let cv = load_schedule(&args.schedule)?;
    check_family(&cv, args.family)?;
    let spec = ModelSpec::new(args.family);
    let n = data.returns.len();
    let endpoints = parse_endpoints(args.data.endpoints.as_deref(), n, cv.grid.m0())?;
    let fits = rolling_fit(
        &spec,
        &data.returns,
        &endpoints,
        &cv.grid,
        &cv,
        args.data.init,
        &OptimizerConfig::default(),
    );

    let mut out = output(args.data.out.as_deref())?;
    writeln!(out, "# {}", command_header())?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record([
        "t",
        "k_hat",
        "interval_start",
        "interval_len",
        "omega",
        "alpha",
        "beta",
        "stopped",
        "sup_stats",
    ])?;
    let mut failures = 0;
    for (n, fit) in endpoints.iter().zip(fits) {
        match fit {
            Ok(f) => {
                let stopped = match f.stopped_reason {
                    StopReason::BreakDetected => "break",
                    StopReason::GridExhausted => "grid",
                    StopReason::HistoryExhausted => "history",
                };
                let sups: Vec<String> = f
                    .trace
                    .iter()
                    .map(|s| match (&s.outcome, s.sup_stat) {
                        (StepOutcome::Failed(_), _) => "fail".to_owned(),
                        (_, Some(v)) => format!("{v:.6}"),
                        (_, None) => "NA".to_owned(),
                    })
                    .collect();
                w.write_record([
                    data.label(*n),
                    f.selected_k.to_string(),
                    data.label(f.interval.start),
                    f.interval.len().to_string(),
                    f.theta_hat.omega.to_string(),
                    f.theta_hat.alpha.to_string(),
                    f.theta_hat.beta.to_string(),
                    stopped.to_owned(),
                    sups.join(";"),
                ])?;
            }
            Err(e) => {
                failures += 1;
                eprintln!("endpoint {}: {e}", data.label(*n));
            }
        }
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    if failures > 0 {
        bail!("{failures} endpoints failed");
    }
    Ok(())
}

fn forecast_method(family: Family, schedule: Option<&Path>, window: usize) -> anyhow::Result<Method> {
    let spec = ModelSpec::new(family);
    Ok(match schedule {
        Some(path) => {
            let cv = load_schedule(path)?;
            check_family(&cv, family)?;
            Method::Adaptive {
                name: format!("adaptive-{family}"),
                spec,
                grid: cv.grid.clone(),
                schedule: cv,
            }
        }
        None => Method::Rolling {
            name: format!("parametric-{family}"),
            spec,
            window,
        },
    })
}

fn min_history(method: &Method) -> usize {
    match method {
        Method::Adaptive { grid, .. } => grid.m0(),
        Method::Rolling { spec, .. } => spec.family.min_observations(),
    }
}

fn cmd_forecast(args: &ForecastArgs) -> anyhow::Result<()> {
    let data = load_data(&args.data.data)?;
    let horizons = parse_horizons(&args.horizon)?;
    let method = forecast_method(args.family, args.schedule.as_deref(), args.estimation_window)?;
    let endpoints = parse_endpoints(args.data.endpoints.as_deref(), data.returns.len(), min_history(&method))?;
    let f = method.forecast(
        &data.returns,
        &endpoints,
        &horizons,
        args.data.init,
        &OptimizerConfig::default(),
    )?;
    let mut out = output(args.data.out.as_deref())?;
    writeln!(out, "# {}", command_header())?;
    writeln!(out, "# method={}", method.name())?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["t", "horizon", "sigma2_forecast"])?;
    for (n, values) in f.endpoints.iter().zip(&f.values) {
        for (h, v) in horizons.iter().zip(values) {
            w.write_record([data.label(*n), h.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let data = load_data(&args.data.data)?;
    let horizons = parse_horizons(&args.horizon)?;
    let cfg = ForecastConfig::new(horizons, args.proxy, args.window).map_err(|e| usage(e.to_string()))?;
    let target = cfg
        .proxy
        .target(&data.returns, data.sigma2.as_deref())
        .map_err(|e| usage(e.to_string()))?;

    let mut methods = Vec::new();
    for path in &args.schedule {
        let cv = load_schedule(path)?;
        let family = cv.family;
        methods.push(forecast_method(family, Some(path), args.estimation_window)?);
    }
    for &family in &args.parametric {
        methods.push(forecast_method(family, None, args.estimation_window)?);
    }
    if methods.is_empty() {
        return Err(usage("give at least one --schedule or --parametric method"));
    }
    let mut names: Vec<&str> = methods.iter().map(Method::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(usage("method names must be unique"));
    }
    if !methods.iter().any(|m| m.name() == args.baseline) {
        return Err(usage(format!(
            "--baseline {} is not among the methods {names:?}",
            args.baseline
        )));
    }
    let needed = methods.iter().map(min_history).max().unwrap_or(1);
    let endpoints = parse_endpoints(args.data.endpoints.as_deref(), data.returns.len(), needed)?;

    let opt = OptimizerConfig::default();
    let mut series = Vec::new();
    for m in &methods {
        let f = m.forecast(&data.returns, &endpoints, &cfg.horizons, args.data.init, &opt)?;
        series.push((m.name().to_owned(), ape(&f, &target, &cfg.horizons)?));
    }
    let report = compare_methods(&series, &args.baseline, cfg.proxy, cfg.window)?;
    let mut out = output(args.data.out.as_deref())?;
    writeln!(out, "# {}", command_header())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_tune(args: &TuneArgs) -> anyhow::Result<()> {
    let data = load_data(&args.data.data)?;
    let horizons = parse_horizons(&args.horizon)?;
    let target = args
        .proxy
        .target(&data.returns, data.sigma2.as_deref())
        .map_err(|e| usage(e.to_string()))?;
    let schedules = args
        .schedule
        .iter()
        .map(|p| load_schedule(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let family = schedules[0].family;
    let grid = schedules[0].grid.clone();
    if schedules.iter().any(|s| s.family != family || s.grid != grid) {
        return Err(usage("all schedules must share family and grid"));
    }
    let endpoints = parse_endpoints(args.data.endpoints.as_deref(), data.returns.len(), grid.m0())?;
    let spec = ModelSpec::new(family);
    let res = tune_r_rho(
        &spec,
        &data.returns,
        &target,
        &grid,
        &schedules,
        args.power,
        &horizons,
        &endpoints,
        args.data.init,
        &OptimizerConfig::default(),
    )?;
    let mut out = output(args.data.out.as_deref())?;
    writeln!(out, "# {}", command_header())?;
    writeln!(out, "# target={} power={}", args.proxy, args.power)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["r", "rho", "objective", "selected"])?;
    for (r, rho, obj) in &res.objectives {
        let sel = *r == res.r && *rho == res.rho;
        w.write_record([r.to_string(), rho.to_string(), obj.to_string(), sel.to_string()])?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Tune(a) => cmd_tune(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::Calibration { binding, .. }) = e.downcast_ref::<Error>() {
                eprintln!("binding steps: {binding:?}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
