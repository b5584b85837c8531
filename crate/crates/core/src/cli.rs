//! Command-line front end.
//!
//! Every subcommand accepts the same flag set; flags override values from
//! an optional `key = value` configuration file, and the merged result is
//! echoed into the `# meta` header of every CSV written.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::csvio::{Cell, CsvDoc};
use crate::dynamics::{
    classical_driven_deriv, classical_fast_component, quantum_driven_deriv, ClassicalState, CouplingMode,
    DotSquareReading, QuantumState,
};
use crate::experiments::{
    boundary_curve, classify_orbit, compare_full_vs_averaged, driven_initial_state, linear_grid, slow_period,
    slow_trajectory, BisectOptions, CompareInitial, ExperimentError, ExperimentSettings, OrbitClass,
    DEFAULT_BISECT_TOL, DEFAULT_HORIZON, DEFAULT_WIDTH_ACCEL,
};
use crate::integrator::{energy_slow, integrate, EventKind, IntegratorConfig, Method, Trajectory};
use crate::model::{effective_coefficients, potential_bare, potential_slow, EffectiveParams, ModelParams};

pub const JOBS_ENV: &str = "VOLCANO_JOBS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::StepFailure { .. } | ExperimentError::TooFewCycles { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "volcano",
    version,
    about = "Driven double well, its averaged volcano potential, and Gaussian moment dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the slow (or bare) potential on a grid: columns x,V.
    Potential(Flags),
    /// Integrate one trajectory: columns t,x,v,W,Wdot,Wddot,energy.
    Simulate(Flags),
    /// Escape boundary over a grid of initial widths: columns W0,x_max,flag.
    Sweep(Flags),
    /// Driven versus averaged dynamics, sampled once per drive period.
    Compare(Flags),
    /// Print BOUNDED, ESCAPED or CLOSURE_BREAKDOWN for one release.
    Classify(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Potential(_) => "potential",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Compare(_) => "compare",
            Command::Classify(_) => "classify",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Potential(f)
            | Command::Simulate(f)
            | Command::Sweep(f)
            | Command::Compare(f)
            | Command::Classify(f) => f,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    omega2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Drive ratio ε²ω²/Ω²; excludes --epsilon/--omega-drive.
    #[arg(long, allow_negative_numbers = true)]
    ratio: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long = "omega-drive", allow_negative_numbers = true)]
    omega_drive: Option<f64>,
    /// uncoupled | partial | full | skewed
    #[arg(long)]
    mode: Option<String>,
    /// derivative-of-square | square-of-derivative
    #[arg(long)]
    reading: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    v0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    w0: Option<f64>,
    #[arg(long = "w0-rate", allow_negative_numbers = true)]
    w0_rate: Option<f64>,
    #[arg(long = "w0-accel", allow_negative_numbers = true)]
    w0_accel: Option<f64>,
    /// Skewness coefficient for --mode skewed.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
    #[arg(long = "abs-tol")]
    abs_tol: Option<f64>,
    /// Fixed RK4 step; selects RK4 instead of the adaptive method.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "escape-threshold")]
    escape_threshold: Option<f64>,
    #[arg(long = "bisect-tol")]
    bisect_tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    xmin: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    xmax: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Sample the undriven double well instead of the slow potential.
    #[arg(long)]
    bare: bool,
    #[arg(long = "w0-min")]
    w0_min: Option<f64>,
    #[arg(long = "w0-max")]
    w0_max: Option<f64>,
    #[arg(long = "w0-steps")]
    w0_steps: Option<usize>,
    /// Worker threads for sweep (default: all cores, or $VOLCANO_JOBS).
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep every n-th accepted step in simulate output.
    #[arg(long)]
    stride: Option<usize>,
    /// Simulate the driven system instead of the averaged one.
    #[arg(long)]
    driven: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "omega2",
    "lambda",
    "ratio",
    "epsilon",
    "omega-drive",
    "mode",
    "reading",
    "x0",
    "v0",
    "w0",
    "w0-rate",
    "w0-accel",
    "gamma",
    "horizon",
    "rel-tol",
    "abs-tol",
    "step",
    "escape-threshold",
    "bisect-tol",
    "xmin",
    "xmax",
    "samples",
    "bare",
    "w0-min",
    "w0-max",
    "w0-steps",
    "jobs",
    "stride",
    "driven",
];

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($key:literal => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { out.push(($key, v.to_string())); })*
            };
        }
        push!(
            "omega2" => omega2, "lambda" => lambda, "ratio" => ratio, "epsilon" => epsilon,
            "omega-drive" => omega_drive, "mode" => mode, "reading" => reading, "x0" => x0, "v0" => v0,
            "w0" => w0, "w0-rate" => w0_rate, "w0-accel" => w0_accel, "gamma" => gamma,
            "horizon" => horizon, "rel-tol" => rel_tol, "abs-tol" => abs_tol, "step" => step,
            "escape-threshold" => escape_threshold, "bisect-tol" => bisect_tol, "xmin" => xmin,
            "xmax" => xmax, "samples" => samples, "w0-min" => w0_min, "w0-max" => w0_max,
            "w0-steps" => w0_steps, "jobs" => jobs, "stride" => stride,
        );
        if self.bare {
            out.push(("bare", "true".into()));
        }
        if self.driven {
            out.push(("driven", "true".into()));
        }
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key {key:?}", n + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Effective configuration after merging the file with the flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.values
            .get(key)
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(usage(format!("--{key}: {s:?} is not a finite decimal"))),
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn require(&self, key: &str) -> Result<f64, CliError> {
        self.f64(key)?
            .ok_or_else(|| usage(format!("--{key} is required for {}", self.command)))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.values
            .get(key)
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| usage(format!("--{key}: {s:?} is not a non-negative integer")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.values.get(key).map(String::as_str) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(s) => Err(usage(format!("{key}: expected true or false, got {s:?}"))),
        }
    }

    fn has_drive(&self) -> bool {
        self.values.contains_key("epsilon") || self.values.contains_key("omega-drive")
    }

    fn model(&self) -> Result<ModelParams, CliError> {
        let omega_sq = self.f64_or("omega2", 1.0)?;
        let lambda = self.require("lambda")?;
        let ratio = self.f64("ratio")?;
        let built = match (ratio, self.f64("epsilon")?, self.f64("omega-drive")?) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(usage("give either --ratio or --epsilon with --omega-drive, not both"))
            }
            (Some(r), None, None) => ModelParams::from_ratio(omega_sq, lambda, r),
            (None, Some(e), Some(o)) => ModelParams::new(omega_sq, lambda, e, o),
            (None, None, None) if self.command == "potential" && self.flag("bare")? => {
                ModelParams::from_ratio(omega_sq, lambda, 0.0)
            }
            _ => return Err(usage("supply --ratio, or both --epsilon and --omega-drive")),
        };
        built.map_err(|e| usage(e.to_string()))
    }

    fn mode(&self, default: Option<&str>) -> Result<CouplingMode, CliError> {
        let name = match self.values.get("mode").map(String::as_str).or(default) {
            Some(n) => n,
            None => return Err(usage(format!("--mode is required for {}", self.command))),
        };
        match name {
            "uncoupled" => Ok(CouplingMode::Uncoupled),
            "partial" => Ok(CouplingMode::Partial),
            "full" => Ok(CouplingMode::Full),
            "skewed" | "skewed-partial" => Ok(CouplingMode::SkewedPartial {
                gamma: self.require("gamma")?,
            }),
            other => Err(usage(format!(
                "unknown mode {other:?} (uncoupled, partial, full, skewed)"
            ))),
        }
    }

    fn reading(&self) -> Result<DotSquareReading, CliError> {
        match self.values.get("reading").map(String::as_str) {
            None | Some("derivative-of-square") => Ok(DotSquareReading::DerivativeOfSquare),
            Some("square-of-derivative") => Ok(DotSquareReading::SquareOfDerivative),
            Some(s) => Err(usage(format!(
                "unknown reading {s:?} (derivative-of-square, square-of-derivative)"
            ))),
        }
    }

    fn method(&self, default: Method) -> Result<Method, CliError> {
        if let Some(step) = self.f64("step")? {
            return Ok(Method::Rk4 { step });
        }
        let (rel, abs) = (self.f64("rel-tol")?, self.f64("abs-tol")?);
        match (default, rel, abs) {
            (Method::Rk45 { rel_tol, abs_tol }, r, a) => Ok(Method::Rk45 {
                rel_tol: r.unwrap_or(rel_tol),
                abs_tol: a.unwrap_or(abs_tol),
            }),
            (rk4, None, None) => Ok(rk4),
            (_, r, a) => {
                let Method::Rk45 { rel_tol, abs_tol } = Method::adaptive_default() else {
                    unreachable!()
                };
                Ok(Method::Rk45 {
                    rel_tol: r.unwrap_or(rel_tol),
                    abs_tol: a.unwrap_or(abs_tol),
                })
            }
        }
    }

    fn settings(&self) -> Result<ExperimentSettings, CliError> {
        Ok(ExperimentSettings {
            horizon: self.f64_or("horizon", DEFAULT_HORIZON)?,
            escape_threshold: self.f64("escape-threshold")?,
            width_rate0: self.f64_or("w0-rate", 0.0)?,
            width_accel0: self.f64_or("w0-accel", DEFAULT_WIDTH_ACCEL)?,
            method: self.method(Method::adaptive_default())?,
            reading: self.reading()?,
            ..Default::default()
        })
    }

    fn jobs(&self) -> Result<Option<usize>, CliError> {
        if let Some(j) = self.usize("jobs")? {
            return Ok(Some(j));
        }
        match std::env::var(JOBS_ENV) {
            Ok(s) => s
                .trim()
                .parse::<usize>()
                .map(Some)
                .map_err(|_| usage(format!("{JOBS_ENV}: {s:?} is not a non-negative integer"))),
            Err(_) => Ok(None),
        }
    }

    fn doc<S: AsRef<str>>(&self, header: &[S]) -> CsvDoc {
        let mut doc = CsvDoc::new(header);
        doc.meta("version", env!("CARGO_PKG_VERSION"))
            .meta("command", &self.command);
        for (k, v) in &self.values {
            doc.meta(format!("config.{k}"), v);
        }
        doc
    }
}

fn describe_method(m: &Method) -> String {
    match m {
        Method::Rk4 { step } => format!("rk4 step={step}"),
        Method::Rk45 { rel_tol, abs_tol } => format!("rk45 rel_tol={rel_tol} abs_tol={abs_tol}"),
    }
}

fn annotate_model(doc: &mut CsvDoc, eff: &EffectiveParams) {
    doc.meta("alpha", eff.alpha).meta("beta", eff.beta);
    if let Some(tp) = eff.turning_point {
        doc.meta("turning_point", tp);
    }
    if let Some(b) = eff.barrier_height {
        doc.meta("barrier_height", b);
    }
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| usage(format!("cannot write output: {e}")))
        }
    }
}

fn cmd_potential(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.model()?;
    let eff = effective_coefficients(&params);
    let (xmin, xmax) = (cfg.f64_or("xmin", -2.0)?, cfg.f64_or("xmax", 2.0)?);
    let samples = cfg.usize("samples")?.unwrap_or(401);
    if samples < 2 || xmax <= xmin {
        return Err(usage("need --samples ≥ 2 and --xmax > --xmin"));
    }
    let bare = cfg.flag("bare")?;
    let mut doc = cfg.doc(&["x", "V"]);
    annotate_model(&mut doc, &eff);
    doc.meta("potential", if bare { "bare" } else { "slow" });
    for x in linear_grid(xmin, xmax, samples) {
        let v = if bare {
            potential_bare(x, &params)
        } else {
            potential_slow(x, &eff)
        };
        doc.push_row(vec![x.into(), v.into()]);
    }
    emit(cfg, &doc.render())
}

fn event_lines<const N: usize>(doc: &mut CsvDoc, traj: &Trajectory<N>) {
    for e in &traj.events {
        doc.push_trailer(format!(
            "event {} t={:.16e} x={:.16e}",
            e.kind.label(),
            e.time,
            e.state[0]
        ));
    }
}

fn terminal_failure<const N: usize>(traj: &Trajectory<N>) -> Option<CliError> {
    traj.terminal_event().and_then(|e| match e.kind {
        EventKind::EscapeCrossing => None,
        EventKind::WidthNonPositive => Some(CliError::Numerical(format!("closure breakdown at t={}", e.time))),
        EventKind::StepFailure => Some(CliError::Numerical(format!("step failure at t={}", e.time))),
    })
}

const SIMULATE_HEADER: [&str; 7] = ["t", "x", "v", "W", "Wdot", "Wddot", "energy"];

fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.model()?;
    let eff = effective_coefficients(&params);
    let mode = cfg.mode(None)?;
    let x0 = cfg.require("x0")?;
    let v0 = cfg.f64_or("v0", 0.0)?;
    let w0 = cfg.f64_or("w0", 0.1)?;
    let stride = cfg.usize("stride")?.unwrap_or(1).max(1);
    let mut settings = cfg.settings()?;
    let mut doc = cfg.doc(&SIMULATE_HEADER);
    annotate_model(&mut doc, &eff);

    let failure = if cfg.flag("driven")? {
        if cfg.values.contains_key("ratio") || cfg.has_drive() {
            doc.meta("epsilon", params.epsilon())
                .meta("omega_drive", params.big_omega());
        }
        settings.method = cfg.method(Method::driven_default(params.drive_period()))?;
        let mut config = IntegratorConfig::new(settings.method, settings.horizon).with_stride(stride);
        if let Ok(th) = settings.escape_threshold(&eff) {
            config = config.with_escape_threshold(th);
            doc.meta("escape_threshold", th);
        }
        // Initial values are slow-variable values lifted by their fast parts at t = 0.
        doc.meta("integrator", describe_method(&settings.method))
            .meta("system", "driven")
            .meta("initial", "slow values plus fast components at t=0");
        let energy = |t: f64, x: f64, v: f64| {
            0.5 * v * v + (1.0 + params.epsilon() * (params.big_omega() * t).cos()) * potential_bare(x, &params)
        };
        match mode {
            CouplingMode::Uncoupled => {
                let x_lift = x0 + classical_fast_component(x0, 0.0, &params);
                let traj = integrate(
                    [x_lift, v0],
                    |t, y| classical_driven_deriv(ClassicalState::from_array(*y), t, &params).to_array(),
                    &config,
                )
                .map_err(|e| usage(e.to_string()))?;
                for (t, s) in traj.times.iter().zip(&traj.states) {
                    let cells = [*t, s[0], s[1], f64::NAN, f64::NAN, f64::NAN, energy(*t, s[0], s[1])];
                    doc.push_row(cells.into_iter().map(Cell::from).collect());
                }
                event_lines(&mut doc, &traj);
                terminal_failure(&traj)
            }
            CouplingMode::Full => {
                let slow0 = QuantumState::new(x0, v0, w0, settings.width_rate0, settings.width_accel0);
                let traj = integrate(
                    driven_initial_state(slow0, &params).to_array(),
                    |t, y| quantum_driven_deriv(QuantumState::from_array(*y), t, &params).to_array(),
                    &config.with_width_watch(true),
                )
                .map_err(|e| usage(e.to_string()))?;
                for (t, s) in traj.times.iter().zip(&traj.states) {
                    let mut cells: Vec<Cell> = std::iter::once(*t).chain(s.iter().copied()).map(Cell::from).collect();
                    cells.push(energy(*t, s[0], s[1]).into());
                    doc.push_row(cells);
                }
                event_lines(&mut doc, &traj);
                terminal_failure(&traj)
            }
            _ => {
                return Err(usage(
                    "--driven supports --mode uncoupled (classical) or full (quantum)",
                ))
            }
        }
    } else {
        let s0 = QuantumState::new(x0, v0, w0, settings.width_rate0, settings.width_accel0);
        let traj = match slow_trajectory(s0, mode, &eff, &settings, stride) {
            Err(ExperimentError::NoEscapeThreshold) => {
                // Outside the volcano regime there is no natural threshold; run to the horizon.
                settings.escape_threshold = Some(f64::MAX);
                slow_trajectory(s0, mode, &eff, &settings, stride)?
            }
            other => other?,
        };
        for (k, v) in &traj.meta {
            doc.meta(k.clone(), v);
        }
        doc.meta("integrator", describe_method(&settings.method))
            .meta("system", "averaged");
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let mut cells: Vec<Cell> = std::iter::once(*t).chain(s.iter().copied()).map(Cell::from).collect();
            cells.push(energy_slow(ClassicalState::new(s[0], s[1]), &eff).into());
            doc.push_row(cells);
        }
        event_lines(&mut doc, &traj);
        terminal_failure(&traj)
    };
    emit(cfg, &doc.render())?;
    failure.map_or(Ok(()), Err)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.model()?;
    let eff = effective_coefficients(&params);
    let mode = cfg.mode(None)?;
    let settings = cfg.settings()?;
    let bisect = BisectOptions::with_tol(cfg.f64_or("bisect-tol", DEFAULT_BISECT_TOL)?);
    let (lo, hi) = (cfg.f64_or("w0-min", 0.01)?, cfg.f64_or("w0-max", 0.5)?);
    let steps = cfg.usize("w0-steps")?.unwrap_or(25);
    let grid = linear_grid(lo, hi, steps);
    let jobs = cfg.jobs()?;
    let sweep = boundary_curve(&grid, mode, &eff, &settings, &bisect, jobs)?;

    let mut doc = cfg.doc(&["W0", "x_max", "flag"]);
    annotate_model(&mut doc, &eff);
    doc.meta("integrator", describe_method(&settings.method))
        .meta("horizon", sweep.horizon)
        .meta("bisect_tol", sweep.bisect_tol)
        .meta("mode", mode.name())
        .meta("escape_threshold", settings.escape_threshold(&eff)?);
    let mut failures = Vec::new();
    for p in &sweep.points {
        doc.push_row(vec![p.w0.into(), p.x_max.into(), p.flag.label().into()]);
        if let crate::experiments::BoundaryFlag::Failed(msg) = &p.flag {
            doc.push_trailer(format!("failed W0={:.16e}: {msg}", p.w0));
            failures.push(p.w0);
        }
    }
    emit(cfg, &doc.render())?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{} sweep point(s) failed", failures.len())))
    }
}

fn cmd_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.model()?;
    let eff = effective_coefficients(&params);
    let mode = cfg.mode(Some("uncoupled"))?;
    let x0 = cfg.require("x0")?;
    let v0 = cfg.f64_or("v0", 0.0)?;
    let ic = match mode {
        CouplingMode::Uncoupled => CompareInitial::Classical(ClassicalState::new(x0, v0)),
        CouplingMode::Full => CompareInitial::Quantum(QuantumState::new(
            x0,
            v0,
            cfg.f64_or("w0", 0.1)?,
            cfg.f64_or("w0-rate", 0.0)?,
            cfg.f64_or("w0-accel", DEFAULT_WIDTH_ACCEL)?,
        )),
        _ => return Err(usage("compare supports --mode uncoupled (classical) or full (quantum)")),
    };
    let horizon = match cfg.f64("horizon")? {
        Some(h) => h,
        None => 3.0 * slow_period(x0, &eff)?,
    };
    let report = compare_full_vs_averaged(&params, ic, horizon)?;
    let mut doc = cfg.doc(&["t", "slow", "strobe", "fast_corrected", "abs_err"]);
    annotate_model(&mut doc, &eff);
    doc.meta("epsilon", params.epsilon())
        .meta("omega_drive", params.big_omega())
        .meta("smallness", report.smallness)
        .meta("horizon", horizon)
        .meta("drive_periods", report.drive_periods)
        .meta(
            "integrator",
            describe_method(&Method::driven_default(params.drive_period())),
        );
    for r in &report.rows {
        doc.push_row(
            [r.t, r.slow, r.strobe, r.fast_corrected, r.abs_err]
                .into_iter()
                .map(Cell::from)
                .collect(),
        );
    }
    doc.push_trailer(format!(
        "summary rms_abs_err={:.16e} max_abs_err={:.16e} raw_rms={:.16e}",
        report.rms_abs_err, report.max_abs_err, report.raw_rms
    ));
    emit(cfg, &doc.render())
}

fn cmd_classify(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.model()?;
    let eff = effective_coefficients(&params);
    let mode = cfg.mode(None)?;
    let settings = cfg.settings()?;
    let x0 = cfg.require("x0")?;
    let w0 = cfg.f64_or("w0", 0.1)?;
    let class = classify_orbit(x0, w0, mode, &eff, &settings)?;
    let line = match class {
        OrbitClass::Bounded => "BOUNDED".to_string(),
        OrbitClass::Escaped { t_escape } => format!("ESCAPED t={t_escape}"),
        OrbitClass::ClosureBreakdown { t } => format!("CLOSURE_BREAKDOWN t={t}"),
    };
    emit(cfg, &format!("{line}\n"))?;
    match class {
        OrbitClass::ClosureBreakdown { t } => Err(CliError::Numerical(format!("closure breakdown at t={t}"))),
        _ => Ok(()),
    }
}

/// Parses `argv` (including the program name) and merges the config file.
pub fn parse_args(args: &[String]) -> Result<RunConfig, clap::Error> {
    let cli = Cli::try_parse_from(args)?;
    let flags = cli.command.flags();
    let mut cfg = RunConfig {
        command: cli.command.name().to_string(),
        output: flags.output.clone(),
        ..Default::default()
    };
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            clap::Error::raw(
                clap::error::ErrorKind::Io,
                format!("cannot read {}: {e}\n", path.display()),
            )
        })?;
        cfg.values = parse_config(&text)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{e}\n")))?;
    }
    for (k, v) in flags.pairs() {
        cfg.values.insert(k.to_string(), v);
    }
    Ok(cfg)
}

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command.as_str() {
        "potential" => cmd_potential(cfg),
        "simulate" => cmd_simulate(cfg),
        "sweep" => cmd_sweep(cfg),
        "compare" => cmd_compare(cfg),
        "classify" => cmd_classify(cfg),
        other => Err(usage(format!("unknown command {other:?}"))),
    }
}

/// Entry point: returns the process exit status.
pub fn run(args: &[String]) -> i32 {
    let cfg = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("volcano {}: {e}", cfg.command);
            e.exit_code()
        }
    }
}
