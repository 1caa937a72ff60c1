//! File-in/file-out command line for the monitoring pipeline: scenario
//! simulation, growth-rate analysis, segmented trend fits, and the graded
//! alarm, each writing diff-friendly CSV/JSON artifacts plus SVG plots.
//!
//! Outputs are pure functions of the inputs (and `--seed` where noted), so
//! repeated runs are byte-identical. Files carry ISO-8601 dates; day offsets
//! appear only on plot axes, whose titles name the anchor date.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Duration, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use epitrend_core::alarm::{self, AlarmConfig, AlarmLevel, SlopeModel};
use epitrend_core::pde::{simulate, DensityState, ModelParams, MuProfile, ObservableKernel};
use epitrend_core::scenario::ScenarioConfig;
use epitrend_core::segfit::{
    concave_envelope_init, fit_line_l1, fit_minlines_local, fit_segmented_dp, ols_line,
    pad_lines, LossKind,
};
use epitrend_core::series::{self, LogSeries, ObservationSeries};
use epitrend_core::special::student_quantile;
use epitrend_core::spectral::{hilbert_distance, perron_eigenvalue, profile_shift_bound};
use epitrend_core::svg::{fit_plot, monitor_plot, PlotMeta};
use epitrend_core::Error as CoreError;

const BUILD_ID: &str = env!("BUILD_DESCRIBE");

/// Slack on profile-distance bound checks in the growth report.
const BOUND_SLACK: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "epitrend",
    version,
    about = "Epidemic trend monitoring from daily event counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario; writes trajectory.csv and observables.csv.
    Simulate(SimulateArgs),
    /// Solve the per-phase growth rates of a scenario; writes growth.json
    /// and eigenvectors.csv.
    Eig(EigArgs),
    /// Fit a segmented linear trend to the log counts; writes fit.json and
    /// fit.svg.
    Fit(FitArgs),
    /// Grade the alarm level for an early and a confirming series; writes
    /// monitor.json and monitor.svg.
    Monitor(MonitorArgs),
    /// Run the built-in numerical self-checks; writes validation.json.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EigArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Count series CSV with a `date,count` header.
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Maximal number of linear pieces.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    nu: u32,
    /// Residual loss.
    #[arg(long, value_enum, default_value_t = LossArg::L1)]
    loss: LossArg,
    /// Fit family: exact segment partition or concave min-of-lines.
    #[arg(long, value_enum, default_value_t = FlavorArg::Dp)]
    flavor: FlavorArg,
}

#[derive(Args)]
struct MonitorArgs {
    /// Early indicator series CSV.
    #[arg(long)]
    input: PathBuf,
    /// Later confirming series CSV.
    #[arg(long)]
    input_disp: PathBuf,
    /// Alarm config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Evaluation date (ISO-8601).
    #[arg(long)]
    as_of: NaiveDate,
    /// Noise model for the slope fits.
    #[arg(long, value_enum, default_value_t = ModelArg::Ols)]
    model: ModelArg,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the stochastic suites.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L1,
    L2,
}

impl From<LossArg> for LossKind {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::L1 => LossKind::L1,
            LossArg::L2 => LossKind::L2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Dp,
    Minlines,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ols,
    L1,
}

impl From<ModelArg> for SlopeModel {
    fn from(a: ModelArg) -> Self {
        match a {
            ModelArg::Ols => SlopeModel::GaussOls,
            ModelArg::L1 => SlopeModel::LaplaceL1,
        }
    }
}

/// Runtime failure classes; usage errors exit 1 straight from the argument
/// parser, data problems exit 2, numerical breakdowns exit 3.
enum Failure {
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BracketFailure { .. } | CoreError::NoConvergence { .. } => {
                Failure::Numeric(e.to_string())
            }
            other => Failure::Data(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("usage error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Eig(args) => cmd_eig(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Monitor(args) => cmd_monitor(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string())
}

/// Anchor date of a count CSV: the date on its first data row.
fn first_csv_date(text: &str, path: &Path) -> CliResult<NaiveDate> {
    let row = text
        .lines()
        .nth(1)
        .ok_or_else(|| Failure::Data(format!("{}: no data rows", path.display())))?;
    let field = row.split(',').next().unwrap_or("").trim();
    field
        .parse()
        .map_err(|_| Failure::Data(format!("{}: bad date '{field}'", path.display())))
}

fn load_series(path: &Path, epoch: Option<NaiveDate>) -> CliResult<ObservationSeries> {
    let text = read_text(path)?;
    let epoch = match epoch {
        Some(d) => d,
        None => first_csv_date(&text, path)?,
    };
    Ok(ObservationSeries::parse_csv(&text, &file_stem(path), epoch)?)
}

fn iso(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

/// Doubling time for file reports; only growing trends have one, so
/// flat or shrinking rates serialize as `null`.
fn doubling_or_null(rate: f64) -> Option<f64> {
    (rate > 0.0).then(|| std::f64::consts::LN_2 / rate)
}

/// Renders a (possibly fractional) day offset as an ISO date, with a time
/// part only when the offset falls inside a day.
fn render_day(epoch: NaiveDate, day: f64) -> String {
    let whole = day.floor();
    let mut date = epoch + Duration::days(whole as i64);
    let mut secs = ((day - whole) * 86_400.0).round() as i64;
    if secs >= 86_400 {
        date += Duration::days(1);
        secs = 0;
    }
    if secs == 0 {
        iso(date)
    } else {
        let t = date.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(secs);
        t.format("%Y-%m-%dT%H:%M:%S").to_string()
    }
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = ScenarioConfig::from_json(&read_text(&args.config)?)?;
    let (params, mut state, kernels) = cfg.build()?;
    for k in &kernels {
        if k.name.contains(',') || k.name.contains('\n') {
            return Err(Failure::Data(format!(
                "kernel name '{}' cannot be a CSV column",
                k.name
            )));
        }
    }
    let records = simulate(&params, &mut state, cfg.days, &kernels, cfg.nonlinear)?;

    let mut trajectory = String::from(
        "date,susceptible,latent,infectious,removed,total,contamination_rate,contamination_flux\n",
    );
    for r in &records {
        trajectory.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            iso(cfg.start_date + Duration::days(r.day)),
            r.s,
            r.e_mass,
            r.i_mass,
            r.r,
            r.total,
            r.mu,
            r.contamination_flux
        ));
    }

    let mut observables = String::from("date");
    for k in &kernels {
        observables.push(',');
        observables.push_str(&k.name);
    }
    observables.push('\n');
    for r in &records {
        observables.push_str(&iso(cfg.start_date + Duration::days(r.day)));
        for v in &r.observables {
            observables.push_str(&format!(",{v}"));
        }
        observables.push('\n');
    }

    write_artifact(&args.out, "trajectory.csv", &trajectory)?;
    write_artifact(&args.out, "observables.csv", &observables)
}

#[derive(Serialize)]
struct PhaseReport {
    phase: usize,
    contamination_rate: f64,
    growth_rate_per_day: f64,
    doubling_days: Option<f64>,
    transform_value: f64,
}

#[derive(Serialize)]
struct HopReport {
    from_phase: usize,
    to_phase: usize,
    profile_distance: f64,
    rate_gap_bound: f64,
    within_bound: bool,
}

#[derive(Serialize)]
struct GrowthReport {
    scenario: String,
    phases: Vec<PhaseReport>,
    hops: Vec<HopReport>,
    /// Total projective movement across phases; half of it bounds the gap
    /// between the log observable and its piecewise-linear shadow.
    path_budget: f64,
}

fn cmd_eig(args: &EigArgs) -> CliResult<()> {
    let cfg = ScenarioConfig::from_json(&read_text(&args.config)?)?;
    let (params, _, _) = cfg.build()?;
    let rates: Vec<f64> = match &params.mu {
        MuProfile::Constant(v) => vec![*v],
        MuProfile::PiecewiseConstant { values, .. } => values.clone(),
    };

    let mut phases = Vec::with_capacity(rates.len());
    let mut solutions = Vec::with_capacity(rates.len());
    for (k, &mu) in rates.iter().enumerate() {
        let sol = perron_eigenvalue(&params, mu)?;
        phases.push(PhaseReport {
            phase: k,
            contamination_rate: mu,
            growth_rate_per_day: sol.lambda,
            doubling_days: doubling_or_null(sol.lambda),
            transform_value: sol.g_value,
        });
        solutions.push(sol);
    }

    let mut hops = Vec::new();
    let mut path_budget = 0.0;
    for k in 1..solutions.len() {
        let d = hilbert_distance(&solutions[k - 1].stacked(), &solutions[k].stacked())?;
        let bound = profile_shift_bound(&params, solutions[k - 1].lambda, solutions[k].lambda);
        path_budget += d;
        hops.push(HopReport {
            from_phase: k - 1,
            to_phase: k,
            profile_distance: d,
            rate_gap_bound: bound,
            within_bound: d <= bound + BOUND_SLACK,
        });
    }

    let mut vectors = String::from("phase,stage,age,value\n");
    for (k, sol) in solutions.iter().enumerate() {
        for (j, v) in sol.e_profile.iter().enumerate() {
            vectors.push_str(&format!("{k},latent,{},{v}\n", j as f64 * params.h));
        }
        for (j, v) in sol.i_profile.iter().enumerate() {
            vectors.push_str(&format!("{k},infectious,{},{v}\n", j as f64 * params.h));
        }
    }

    let report = GrowthReport {
        scenario: cfg.name.clone(),
        phases,
        hops,
        path_budget,
    };
    write_artifact(&args.out, "growth.json", &to_pretty_json(&report))?;
    write_artifact(&args.out, "eigenvectors.csv", &vectors)
}

#[derive(Serialize)]
struct FilePiece {
    slope_per_day: f64,
    intercept_log_at_epoch: f64,
    doubling_days: Option<f64>,
}

#[derive(Serialize)]
struct FileFit {
    series: String,
    flavor: &'static str,
    loss: &'static str,
    pieces: Vec<FilePiece>,
    breakpoints: Vec<String>,
    loss_value: f64,
    dropped_dates: Vec<String>,
}

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let series = load_series(&args.input, None)?;
    let (logs, dropped) = series::log_transform(&series)?;
    let loss: LossKind = args.loss.into();
    let nu = args.nu as usize;
    let fit = match args.flavor {
        FlavorArg::Dp => fit_segmented_dp(&logs, nu, loss)?,
        FlavorArg::Minlines => {
            let dp = fit_segmented_dp(&logs, nu, loss)?;
            let lines: Vec<(f64, f64)> =
                dp.segments.iter().map(|s| (s.slope, s.intercept)).collect();
            let init = pad_lines(&concave_envelope_init(&lines)?, nu);
            fit_minlines_local(&logs, &init, loss)?
        }
    };

    let epoch = series.epoch();
    let report = FileFit {
        series: series.label().to_string(),
        flavor: match args.flavor {
            FlavorArg::Dp => "dp_segments",
            FlavorArg::Minlines => "min_of_lines",
        },
        loss: match loss {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        },
        pieces: fit
            .segments
            .iter()
            .map(|s| FilePiece {
                slope_per_day: s.slope,
                intercept_log_at_epoch: s.intercept,
                doubling_days: doubling_or_null(s.slope),
            })
            .collect(),
        breakpoints: fit.breakpoints.iter().map(|&b| render_day(epoch, b)).collect(),
        loss_value: fit.loss,
        dropped_dates: dropped.iter().map(|&d| iso(series.date_of(d))).collect(),
    };

    let pts: Vec<(f64, f64)> = logs.points.iter().map(|&(d, z)| (d as f64, z)).collect();
    let meta = PlotMeta {
        title: format!(
            "{} segmented log-linear fit (days since {})",
            series.label(),
            iso(epoch)
        ),
        config_hash: Some(sha256_hex(read_text(&args.input)?.as_bytes())),
        build_id: BUILD_ID.to_string(),
    };
    let svg = fit_plot(&pts, &fit, &meta);

    write_artifact(&args.out, "fit.json", &to_pretty_json(&report))?;
    write_artifact(&args.out, "fit.svg", &svg)
}

#[derive(Serialize)]
struct FileSeriesReport {
    label: String,
    slope_per_day: f64,
    growth_probability: f64,
    doubling_days: Option<f64>,
    warn_needle_slope: f64,
    alarm_needle_slope: f64,
    dropped_dates: Vec<String>,
}

#[derive(Serialize)]
struct FileMonitorReport {
    as_of: String,
    window: (String, String),
    model: &'static str,
    level: AlarmLevel,
    doubling_alarm: bool,
    advanced: FileSeriesReport,
    displaced: FileSeriesReport,
    combined_slope_per_day: Option<f64>,
    combined_variance: Option<f64>,
    /// One-sided doubling-time intervals; `null` endpoints are unbounded.
    doubling_time_intervals: Option<((f64, f64), (f64, f64))>,
}

fn cmd_monitor(args: &MonitorArgs) -> CliResult<()> {
    let adv = load_series(&args.input, None)?;
    let disp = load_series(&args.input_disp, Some(adv.epoch()))?;
    let cfg = match &args.config {
        None => AlarmConfig::default(),
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?,
    };
    let model: SlopeModel = args.model.into();
    let as_of = adv.day_of(args.as_of);
    let report = alarm::monitor(&adv, &disp, as_of, &cfg, model)?;

    let epoch = adv.epoch();
    let file_series = |a: &alarm::SeriesAssessment| FileSeriesReport {
        label: a.label.clone(),
        slope_per_day: a.estimate.beta_hat,
        growth_probability: a.p_plus,
        doubling_days: doubling_or_null(a.estimate.beta_hat),
        warn_needle_slope: a.needle_warn_slope,
        alarm_needle_slope: a.needle_alarm_slope,
        dropped_dates: a.dropped_days.iter().map(|&d| iso(epoch + Duration::days(d))).collect(),
    };
    let file_report = FileMonitorReport {
        as_of: iso(args.as_of),
        window: (
            iso(epoch + Duration::days(report.window.0)),
            iso(epoch + Duration::days(report.window.1)),
        ),
        model: match model {
            SlopeModel::GaussOls => "ols",
            _ => "l1",
        },
        level: report.level,
        doubling_alarm: report.doubling_alarm,
        advanced: file_series(&report.adv),
        displaced: file_series(&report.disp),
        combined_slope_per_day: report.combined.as_ref().map(|c| c.beta_hat),
        combined_variance: report.combined.as_ref().map(|c| c.v),
        doubling_time_intervals: report.delta.map(|d| (d.i1, d.i2)),
    };

    // band around the fitted early-series line inside the window, widening
    // into the forecast trapezoid past the evaluation day
    let est = &report.adv.estimate;
    let t_last = as_of as f64;
    let anchor = est.alpha_hat + est.beta_hat * t_last;
    let mut envelope = Vec::new();
    if model == SlopeModel::GaussOls {
        for t in report.window.0..=as_of {
            let iv = alarm::confidence_intervals(est, cfg.epsilon, Some(t as f64))?;
            let (lo, hi) = iv.forecast.expect("forecast day was given");
            envelope.push((t as f64, lo, hi));
        }
    }
    let trapezoid = alarm::trapezoid_domain(est, anchor, t_last, 14, cfg.epsilon)?;
    let skip_joint = usize::from(!envelope.is_empty());
    envelope.extend(trapezoid.into_iter().skip(skip_joint));
    let rays = vec![
        ("adv warn".to_string(), report.adv.needle_warn_slope),
        ("adv alarm".to_string(), report.adv.needle_alarm_slope),
        ("disp warn".to_string(), report.disp.needle_warn_slope),
        ("disp alarm".to_string(), report.disp.needle_alarm_slope),
        (
            format!("doubling in {} d", cfg.doubling_threshold_days),
            std::f64::consts::LN_2 / cfg.doubling_threshold_days,
        ),
    ];
    // early series last so the needle fan anchors on its newest point
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for s in [&disp, &adv] {
        let (logs, _) = series::log_transform(s)?;
        pts.extend(
            logs.points
                .iter()
                .filter(|&&(d, _)| d <= as_of)
                .map(|&(d, z)| (d as f64, z)),
        );
    }
    let config_hash = match &args.config {
        Some(path) => sha256_hex(read_text(path)?.as_bytes()),
        None => sha256_hex(read_text(&args.input)?.as_bytes()),
    };
    let meta = PlotMeta {
        title: format!(
            "{} monitor {} level={:?} (days since {})",
            adv.label(),
            iso(args.as_of),
            report.level,
            iso(epoch)
        ),
        config_hash: Some(config_hash),
        build_id: BUILD_ID.to_string(),
    };
    let svg = monitor_plot(&pts, &envelope, &rays, &meta);

    write_artifact(&args.out, "monitor.json", &to_pretty_json(&file_report))?;
    write_artifact(&args.out, "monitor.svg", &svg)
}

#[derive(Serialize)]
struct SuiteReport {
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct ValidationReport {
    build: &'static str,
    seed: u64,
    suites: Vec<SuiteReport>,
    pass: bool,
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let suites = vec![
        suite_growth_rate_identity(),
        suite_pooling_example(),
        suite_quantile_anchors(),
        suite_interval_coverage(args.seed),
        suite_partition_optimality(args.seed),
        suite_mass_conservation(),
    ];
    let pass = suites.iter().all(|s| s.pass);
    let report = ValidationReport {
        build: BUILD_ID,
        seed: args.seed,
        suites,
        pass,
    };
    write_artifact(&args.out, "validation.json", &to_pretty_json(&report))?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .suites
            .iter()
            .filter(|s| !s.pass)
            .map(|s| s.name)
            .collect();
        Err(Failure::Numeric(format!(
            "self-checks failed: {}",
            failed.join(", ")
        )))
    }
}

fn delay_model() -> ModelParams {
    ModelParams::constant_rates(
        1e6, 3.0, 7.0, 0.05, 0.05, 0.0, 0.0, 1.0, MuProfile::Constant(1.0),
    )
    .expect("reference model is valid")
}

fn suite_growth_rate_identity() -> SuiteReport {
    // pure-delay model: the transform has the closed form
    // exp(-3 l) (1 - exp(-7 l)) / l, so the root is checkable by bisection
    let closed = |l: f64| {
        if l == 0.0 {
            7.0
        } else {
            (-3.0 * l).exp() * -(-7.0 * l).exp_m1() / l
        }
    };
    let params = delay_model();
    let critical = perron_eigenvalue(&params, 1.0 / 7.0).map(|s| s.lambda);
    let solved = perron_eigenvalue(&params, 2.0 / 7.0).map(|s| s.lambda);
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (2.0 / 7.0) * closed(mid) - 1.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    match (critical, solved) {
        (Ok(c), Ok(s)) => SuiteReport {
            name: "growth_rate_identity",
            pass: c.abs() <= 1e-8 && (s - oracle).abs() <= 1e-8,
            detail: format!("critical={c:.2e} gap={:.2e}", (s - oracle).abs()),
        },
        _ => SuiteReport {
            name: "growth_rate_identity",
            pass: false,
            detail: "solver failed".to_string(),
        },
    }
}

fn suite_pooling_example() -> SuiteReport {
    let e = |beta: f64, v: f64| alarm::SlopeEstimate {
        model: SlopeModel::GaussOls,
        beta_hat: beta,
        alpha_hat: 0.0,
        scale: v.sqrt(),
        v,
        n: 10,
        df: 8,
        x_bar: 4.5,
        sxx: 1.0,
    };
    match alarm::combine(&[e(0.1, 1.0), e(0.3, 3.0)]) {
        Ok(c) => SuiteReport {
            name: "pooling_example",
            pass: (c.beta_hat - 0.15).abs() <= 1e-15 && (c.v - 0.75).abs() <= 1e-15,
            detail: format!("beta={} v={}", c.beta_hat, c.v),
        },
        Err(e) => SuiteReport {
            name: "pooling_example",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn suite_quantile_anchors() -> SuiteReport {
    let q975 = student_quantile(0.975, 5).unwrap_or(f64::NAN);
    let q95 = student_quantile(0.95, 5).unwrap_or(f64::NAN);
    SuiteReport {
        name: "quantile_anchors",
        pass: (q975 - 2.571).abs() <= 5e-4 && (q95 - 2.015).abs() <= 5e-4,
        detail: format!("q975={q975:.4} q95={q95:.4}"),
    }
}

fn suite_interval_coverage(seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (alpha, beta, sigma) = (3.0, 0.08, 0.4);
    let reps = 2000;
    let mut covered = 0u32;
    for _ in 0..reps {
        let points: Vec<(i64, f64)> = (0..10)
            .map(|d| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let noise = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                (d, alpha + beta * d as f64 + sigma * noise)
            })
            .collect();
        let logs = LogSeries {
            label: "replicate".into(),
            epoch: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            points,
        };
        let ok = alarm::ols_fit(&logs)
            .and_then(|est| alarm::confidence_intervals(&est, 0.05, None))
            .map(|iv| iv.beta.0 <= beta && beta <= iv.beta.1)
            .unwrap_or(false);
        if ok {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    SuiteReport {
        name: "interval_coverage",
        pass: (0.92..=0.98).contains(&rate),
        detail: format!("coverage={rate:.4} reps={reps}"),
    }
}

fn suite_partition_optimality(seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let n: usize = rng.gen_range(6..=12);
        let points: Vec<(i64, f64)> = (0..n as i64)
            .map(|d| (d, 0.15 * d as f64 + rng.gen_range(-0.8..0.8)))
            .collect();
        let pts: Vec<(f64, f64)> = points.iter().map(|&(d, z)| (d as f64, z)).collect();
        let logs = LogSeries {
            label: "random".into(),
            epoch: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            points,
        };
        for kind in [LossKind::L1, LossKind::L2] {
            let dp = match fit_segmented_dp(&logs, 3, kind) {
                Ok(f) => f.loss,
                Err(_) => {
                    return SuiteReport {
                        name: "partition_optimality",
                        pass: false,
                        detail: "fit failed".to_string(),
                    }
                }
            };
            let seg = |i: usize, s: usize| match kind {
                LossKind::L2 => ols_line(&pts[i..s]).map(|t| t.2).unwrap_or(f64::NAN),
                LossKind::L1 => fit_line_l1(&pts[i..s]).map(|t| t.2).unwrap_or(f64::NAN),
            };
            let mut reference = seg(0, n);
            for c1 in 2..=n - 2 {
                reference = reference.min(seg(0, c1) + seg(c1, n));
                for c2 in (c1 + 2)..=n.saturating_sub(2) {
                    reference = reference.min(seg(0, c1) + (seg(c1, c2) + seg(c2, n)));
                }
            }
            worst = worst.max((dp - reference).abs());
        }
    }
    SuiteReport {
        name: "partition_optimality",
        pass: worst == 0.0,
        detail: format!("max_gap={worst:.2e}"),
    }
}

fn suite_mass_conservation() -> SuiteReport {
    let params = ModelParams::constant_rates(
        5e4, 3.0, 8.0, 0.05, 0.05, 0.2, 0.15, 1.0, MuProfile::Constant(0.5),
    )
    .expect("reference model is valid");
    let mut state = DensityState::seeded(&params, 100.0, 100.0).expect("seed fits");
    let kernels: Vec<ObservableKernel> = Vec::new();
    match simulate(&params, &mut state, 60, &kernels, true) {
        Ok(records) => {
            let n0 = records[0].total;
            let drift = records
                .iter()
                .map(|r| ((r.total - n0) / n0).abs())
                .fold(0.0, f64::max);
            let cap = 5.0 * (params.h + params.dt);
            SuiteReport {
                name: "mass_conservation",
                pass: drift <= cap,
                detail: format!("drift={drift:.2e} cap={cap:.2e}"),
            }
        }
        Err(e) => SuiteReport {
            name: "mass_conservation",
            pass: false,
            detail: e.to_string(),
        },
    }
}
