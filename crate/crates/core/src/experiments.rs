//! Numerical experiments on the averaged and driven systems: orbit
//! classification, escape boundaries and their sweeps over initial width,
//! oscillation periods, and the driven-versus-averaged comparison.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    classical_driven_deriv, classical_fast_component, classical_slow_deriv, quantum_driven_deriv,
    quantum_fast_amplitudes, quantum_fast_components, quantum_slow_deriv_with, ClassicalState, CouplingMode,
    DotSquareReading, QuantumState,
};
use crate::integrator::{integrate, EventKind, IntegratorConfig, IntegratorError, Method, Trajectory};
use crate::model::{
    effective_coefficients, potential_slow, regime_report, EffectiveParams, ModelError, ModelParams, RegimeReport,
};

pub const DEFAULT_HORIZON: f64 = 500.0;
pub const DEFAULT_ESCAPE_MULTIPLE: f64 = 3.0;
pub const DEFAULT_BISECT_TOL: f64 = 1e-3;
pub const DEFAULT_WIDTH_ACCEL: f64 = 0.01;
/// Returned by the period quadrature when the release sits on the barrier.
pub const PERIOD_SENTINEL: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no escape threshold: parameters are outside the volcano regime and none was supplied")]
    NoEscapeThreshold,
    #[error("integration step failure at t = {t}")]
    StepFailure { t: f64 },
    #[error("bracket [{low}, {high}] does not straddle the escape boundary (both ends {class})")]
    BracketInvalid { low: f64, high: f64, class: &'static str },
    #[error("only {cycles} full cycles found, need at least 2")]
    TooFewCycles { cycles: usize },
    #[error("release x0 = {x0} is not inside the well (turning point {turning_point:?})")]
    OutsideWell { x0: f64, turning_point: Option<f64> },
    #[error("averaging regime violated: εω²/Ω² = {}, Ω/ω = {}", .0.smallness, .0.frequency_ratio)]
    RegimeInvalid(RegimeReport),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Knobs shared by every slow-system experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSettings {
    pub horizon: f64,
    /// Escape threshold in units of the turning point.
    pub escape_multiple: f64,
    /// Absolute escape threshold; overrides `escape_multiple` when set.
    pub escape_threshold: Option<f64>,
    pub width_rate0: f64,
    pub width_accel0: f64,
    pub method: Method,
    pub reading: DotSquareReading,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            escape_multiple: DEFAULT_ESCAPE_MULTIPLE,
            escape_threshold: None,
            width_rate0: 0.0,
            width_accel0: DEFAULT_WIDTH_ACCEL,
            method: Method::adaptive_default(),
            reading: DotSquareReading::default(),
        }
    }
}

impl ExperimentSettings {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn escape_threshold(&self, eff: &EffectiveParams) -> Result<f64, ExperimentError> {
        match (self.escape_threshold, eff.turning_point) {
            (Some(th), _) => Ok(th),
            (None, Some(tp)) => Ok(self.escape_multiple * tp),
            (None, None) => Err(ExperimentError::NoEscapeThreshold),
        }
    }

    /// Initial state for a release at rest.
    pub fn initial_state(&self, x0: f64, w0: f64) -> QuantumState {
        QuantumState::new(x0, 0.0, w0, self.width_rate0, self.width_accel0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrbitClass {
    Bounded,
    Escaped { t_escape: f64 },
    ClosureBreakdown { t: f64 },
}

impl OrbitClass {
    pub fn is_bounded(&self) -> bool {
        matches!(self, OrbitClass::Bounded)
    }

    pub fn label(&self) -> &'static str {
        match self {
            OrbitClass::Bounded => "BOUNDED",
            OrbitClass::Escaped { .. } => "ESCAPED",
            OrbitClass::ClosureBreakdown { .. } => "CLOSURE_BREAKDOWN",
        }
    }
}

/// Integrates the averaged quantum system in `mode` from `state0`.
///
/// The width watch is active only for modes whose mean equation sees the
/// width; in `Uncoupled` mode the width is a spectator.
pub fn slow_trajectory(
    state0: QuantumState,
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
    stride: usize,
) -> Result<Trajectory<5>, ExperimentError> {
    let threshold = settings.escape_threshold(eff)?;
    let config = IntegratorConfig::new(settings.method, settings.horizon)
        .with_stride(stride)
        .with_escape_threshold(threshold)
        .with_width_watch(mode.width_feeds_mean());
    let reading = settings.reading;
    let deriv =
        |_t: f64, y: &[f64; 5]| quantum_slow_deriv_with(QuantumState::from_array(*y), eff, mode, reading).to_array();
    let mut traj = integrate(state0.to_array(), deriv, &config)?;
    traj.meta.insert("mode".into(), mode.name().into());
    if let CouplingMode::SkewedPartial { gamma } = mode {
        traj.meta.insert("gamma".into(), gamma.to_string());
    }
    traj.meta.insert("escape_threshold".into(), threshold.to_string());
    Ok(traj)
}

fn classify_trajectory<const N: usize>(traj: &Trajectory<N>) -> Result<OrbitClass, ExperimentError> {
    match traj.terminal_event() {
        None => Ok(OrbitClass::Bounded),
        Some(e) => match e.kind {
            EventKind::EscapeCrossing => Ok(OrbitClass::Escaped { t_escape: e.time }),
            EventKind::WidthNonPositive => Ok(OrbitClass::ClosureBreakdown { t: e.time }),
            EventKind::StepFailure => Err(ExperimentError::StepFailure { t: e.time }),
        },
    }
}

pub fn classify_state(
    state0: QuantumState,
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
) -> Result<OrbitClass, ExperimentError> {
    // Only the final sample matters here.
    let traj = slow_trajectory(state0, mode, eff, settings, usize::MAX)?;
    classify_trajectory(&traj)
}

/// Classifies a release at rest from `x0` with initial width `w0`.
pub fn classify_orbit(
    x0: f64,
    w0: f64,
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
) -> Result<OrbitClass, ExperimentError> {
    if !x0.is_finite() || !w0.is_finite() {
        return Err(ExperimentError::InvalidInput("non-finite initial condition".into()));
    }
    classify_state(settings.initial_state(x0, w0), mode, eff, settings)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectOptions {
    pub tol: f64,
    /// Defaults to `[tol, 1.5 · turning_point]`.
    pub bracket: Option<(f64, f64)>,
}

impl Default for BisectOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_BISECT_TOL,
            bracket: None,
        }
    }
}

impl BisectOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, bracket: None }
    }

    fn resolve(&self, eff: &EffectiveParams, settings: &ExperimentSettings) -> Result<(f64, f64), ExperimentError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ExperimentError::InvalidInput(
                "bisection tolerance must be positive".into(),
            ));
        }
        let (lo, hi) = match (self.bracket, eff.turning_point) {
            (Some(b), _) => b,
            (None, Some(tp)) => (self.tol, 1.5 * tp),
            (None, None) => (self.tol, settings.escape_threshold(eff)? / DEFAULT_ESCAPE_MULTIPLE),
        };
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(ExperimentError::InvalidInput(format!("bad bracket [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

/// Largest release point (zero momentum) that stays bounded for initial
/// width `w0`, by bisection in `x0` until the bracket is narrower than
/// `bisect.tol`. Anything other than `Bounded` counts as not bounded.
pub fn escape_boundary(
    w0: f64,
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
    bisect: &BisectOptions,
) -> Result<f64, ExperimentError> {
    let (mut lo, mut hi) = bisect.resolve(eff, settings)?;
    let bounded = |x0: f64| classify_orbit(x0, w0, mode, eff, settings).map(|c| c.is_bounded());
    let (lo_ok, hi_ok) = (bounded(lo)?, bounded(hi)?);
    if lo_ok == hi_ok {
        return Err(ExperimentError::BracketInvalid {
            low: lo,
            high: hi,
            class: if lo_ok { "bounded" } else { "escaping" },
        });
    }
    // Orient so that `lo` is bounded.
    let flipped = !lo_ok;
    if flipped {
        std::mem::swap(&mut lo, &mut hi);
    }
    while (hi - lo).abs() >= bisect.tol {
        let mid = 0.5 * (lo + hi);
        if bounded(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryFlag {
    Resolved,
    /// Even the smallest release escapes: the width is past critical.
    AllEscape,
    /// Even the largest release in the bracket stays bounded.
    NoneEscape,
    Failed(String),
}

impl BoundaryFlag {
    pub fn label(&self) -> &'static str {
        match self {
            BoundaryFlag::Resolved => "ok",
            BoundaryFlag::AllEscape => "all_escape",
            BoundaryFlag::NoneEscape => "none_escape",
            BoundaryFlag::Failed(_) => "failed",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(BoundaryFlag::Resolved),
            "all_escape" => Some(BoundaryFlag::AllEscape),
            "none_escape" => Some(BoundaryFlag::NoneEscape),
            "failed" => Some(BoundaryFlag::Failed(String::new())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub w0: f64,
    pub x_max: f64,
    pub flag: BoundaryFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub lambda: f64,
    pub ratio: f64,
    pub mode: CouplingMode,
    pub bisect_tol: f64,
    pub horizon: f64,
    pub points: Vec<BoundaryPoint>,
}

fn boundary_point(
    w0: f64,
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
    bisect: &BisectOptions,
) -> BoundaryPoint {
    let (x_max, flag) = match escape_boundary(w0, mode, eff, settings, bisect) {
        Ok(x) => (x, BoundaryFlag::Resolved),
        Err(ExperimentError::BracketInvalid { class: "escaping", .. }) => (0.0, BoundaryFlag::AllEscape),
        Err(ExperimentError::BracketInvalid { high, .. }) => (high, BoundaryFlag::NoneEscape),
        Err(e) => (0.0, BoundaryFlag::Failed(e.to_string())),
    };
    BoundaryPoint { w0, x_max, flag }
}

/// Escape boundary at every initial width of `grid`, evaluated in parallel
/// on `jobs` threads (all available cores when `None`). Output order follows
/// the grid regardless of scheduling.
pub fn boundary_curve(
    grid: &[f64],
    mode: CouplingMode,
    eff: &EffectiveParams,
    settings: &ExperimentSettings,
    bisect: &BisectOptions,
    jobs: Option<usize>,
) -> Result<SweepResult, ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::InvalidInput("empty width grid".into()));
    }
    if grid.iter().any(|w| !w.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::InvalidInput(
            "width grid must be finite and strictly increasing".into(),
        ));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::InvalidInput(format!("thread pool: {e}")))?;
    let points = pool.install(|| {
        grid.par_iter()
            .map(|&w0| boundary_point(w0, mode, eff, settings, bisect))
            .collect()
    });
    Ok(SweepResult {
        lambda: eff.lambda,
        ratio: eff.ratio,
        mode,
        bisect_tol: bisect.tol,
        horizon: settings.horizon,
        points,
    })
}

/// Evenly spaced grid including both endpoints.
pub fn linear_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min],
        n => (0..n)
            .map(|i| min + (max - min) * (i as f64 / (n - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    /// `(max − min) / mean` over the individual spacings.
    pub relative_spread: f64,
    pub cycles: usize,
}

// Root of the cubic Hermite interpolant of (x, ẋ) on one sample interval.
fn hermite_root(t0: f64, x0: f64, v0: f64, t1: f64, x1: f64, v1: f64) -> f64 {
    let h = t1 - t0;
    let p = |s: f64| {
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let neg_at_lo = p(0.0) < 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (p(mid) < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t0 + h * 0.5 * (lo + hi)
}

fn spacing_stats(seqs: &[Vec<f64>]) -> Result<PeriodEstimate, ExperimentError> {
    let spacings: Vec<f64> = seqs.iter().flat_map(|s| s.windows(2).map(|w| w[1] - w[0])).collect();
    let cycles = seqs.iter().map(|s| s.len().saturating_sub(1)).max().unwrap_or(0);
    if cycles < 2 {
        return Err(ExperimentError::TooFewCycles { cycles });
    }
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let max = spacings.iter().cloned().fold(f64::MIN, f64::max);
    let min = spacings.iter().cloned().fold(f64::MAX, f64::min);
    Ok(PeriodEstimate {
        period: mean,
        relative_spread: (max - min) / mean,
        cycles,
    })
}

/// Oscillation period of component 0 of a trajectory whose component 1 is
/// its time derivative.
///
/// Uses same-direction crossings of zero when the orbit crosses the origin,
/// otherwise successive maxima.
pub fn oscillation_period<const N: usize>(traj: &Trajectory<N>) -> Result<PeriodEstimate, ExperimentError> {
    if N < 2 {
        return Err(ExperimentError::InvalidInput(
            "need position and velocity components".into(),
        ));
    }
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (w, t) in traj.states.windows(2).zip(traj.times.windows(2)) {
        let (a, b) = (&w[0], &w[1]);
        if a[0] < 0.0 && b[0] >= 0.0 {
            up.push(hermite_root(t[0], a[0], a[1], t[1], b[0], b[1]));
        } else if a[0] > 0.0 && b[0] <= 0.0 {
            down.push(hermite_root(t[0], a[0], a[1], t[1], b[0], b[1]));
        }
    }
    if !up.is_empty() || !down.is_empty() {
        return spacing_stats(&[up, down]);
    }
    // No zero crossings: time maxima by the sign change of the velocity.
    let mut maxima = Vec::new();
    for (w, t) in traj.states.windows(2).zip(traj.times.windows(2)) {
        let (v0, v1) = (w[0][1], w[1][1]);
        if v0 > 0.0 && v1 <= 0.0 {
            maxima.push(t[0] + (t[1] - t[0]) * v0 / (v0 - v1));
        }
    }
    spacing_stats(&[maxima])
}

// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Period of the averaged classical orbit released at rest from `x0`, by
/// energy-conservation quadrature `T = 4∫₀^{x0} dx / √(2(V_s(x0) − V_s(x)))`
/// evaluated after the substitution `x = x0 sin θ`, which removes the
/// endpoint singularity.
pub fn period_quadrature_oracle(x0: f64, eff: &EffectiveParams) -> Result<f64, ExperimentError> {
    let inside = match eff.turning_point {
        Some(tp) => x0 > 0.0 && x0 < tp,
        None => eff.alpha > 0.0 && eff.beta <= 0.0 && x0 > 0.0,
    };
    if !inside || !x0.is_finite() {
        return Err(ExperimentError::OutsideWell {
            x0,
            turning_point: eff.turning_point,
        });
    }
    let (alpha, beta) = (eff.alpha, eff.beta);
    let k = 0.5 * beta * x0 * x0;
    if alpha - 2.0 * k <= 0.0 {
        return Ok(PERIOD_SENTINEL);
    }
    // V_s(x0) − V_s(x) = x0² cos²θ · (α/2 − (β/4) x0² (1 + sin²θ)).
    let integrand = |theta: f64| {
        let s = theta.sin();
        1.0 / (alpha - k * (1.0 + s * s)).sqrt()
    };
    let t = 4.0 * adaptive_simpson(&integrand, 0.0, std::f64::consts::FRAC_PI_2, 1e-8 / 4.0);
    Ok(if t.is_finite() && t < PERIOD_SENTINEL {
        t
    } else {
        PERIOD_SENTINEL
    })
}

/// Rough slow time scale at release point `x0`: the quadrature period inside
/// the well, else the small-oscillation period.
pub fn slow_period(x0: f64, eff: &EffectiveParams) -> Result<f64, ExperimentError> {
    if eff.alpha <= 0.0 {
        return Err(ExperimentError::InvalidInput("no slow oscillation: α ≤ 0".into()));
    }
    match period_quadrature_oracle(x0.abs(), eff) {
        Ok(t) if t < PERIOD_SENTINEL => Ok(t),
        _ => Ok(std::f64::consts::TAU / eff.alpha.sqrt()),
    }
}

/// Matched initial condition for the slow (averaged) system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompareInitial {
    Classical(ClassicalState),
    Quantum(QuantumState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    /// Slow (averaged) position or mean position.
    pub slow: f64,
    /// Driven position sampled once per drive period.
    pub strobe: f64,
    /// `strobe` minus the analytic fast component at that instant.
    pub fast_corrected: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub rms_abs_err: f64,
    pub max_abs_err: f64,
    /// RMS of `strobe − slow` without the fast correction.
    pub raw_rms: f64,
    pub smallness: f64,
    pub drive_periods: usize,
}

/// Driven state at phase zero matching a slow quantum state.
///
/// Positions get their fast displacements and the width rate the derivative
/// of its sine-phase part. Velocity statistics carry no fast part at phase
/// zero, so the momentum variance is held fixed and `Ẅ` is rebuilt from
/// `Ẅ = 2⟨Δp²⟩ + 2W⟨∂F⟩` with the driven force instead of the averaged one.
pub fn driven_initial_state(slow: QuantumState, params: &ModelParams) -> QuantumState {
    let eff = effective_coefficients(params);
    let amps = quantum_fast_amplitudes(slow, params, DotSquareReading::default());
    let x = slow.mean_x + amps.mean_cos;
    let w = slow.width + amps.width_cos;
    let k = 1.0 + params.epsilon();
    let grad_driven = params.omega_sq() * k - 3.0 * (params.lambda() * k) * (x * x + w);
    let grad_slow = -eff.alpha + 3.0 * eff.beta * (slow.mean_x * slow.mean_x + slow.width);
    QuantumState::new(
        x,
        slow.mean_v,
        w,
        slow.width_rate + params.big_omega() * amps.width_sin,
        slow.width_accel + 2.0 * (w * grad_driven - slow.width * grad_slow),
    )
}

fn run_pair<const N: usize, D, S>(
    driven0: [f64; N],
    slow0: [f64; N],
    driven: D,
    slow: S,
    params: &ModelParams,
    horizon: f64,
) -> Result<(Trajectory<N>, Trajectory<N>, usize), ExperimentError>
where
    D: Fn(f64, &[f64; N]) -> [f64; N],
    S: Fn(f64, &[f64; N]) -> [f64; N],
{
    const STEPS_PER_PERIOD: usize = 50;
    let period = params.drive_period();
    let periods = ((horizon / period) - 1e-9).ceil().max(1.0) as usize;
    let config =
        IntegratorConfig::new(Method::driven_default(period), periods as f64 * period).with_stride(STEPS_PER_PERIOD);
    let a = integrate(driven0, driven, &config)?;
    let b = integrate(slow0, slow, &config)?;
    for t in [&a, &b] {
        if let Some(e) = t.terminal_event() {
            return Err(ExperimentError::StepFailure { t: e.time });
        }
    }
    if a.times.len() != periods + 1 || b.times.len() != periods + 1 {
        return Err(ExperimentError::InvalidInput("stroboscopic sampling misaligned".into()));
    }
    Ok((a, b, periods))
}

/// Integrates the driven system and its averaged counterpart from matched
/// initial conditions and compares them once per drive period.
///
/// Both systems are stepped with the same fixed RK4 grid (50 steps per drive
/// period), so at zero drive the two runs coincide exactly. The quantum
/// pair is compared against the fully coupled averaged system.
pub fn compare_full_vs_averaged(
    params: &ModelParams,
    ic: CompareInitial,
    horizon: f64,
) -> Result<ComparisonReport, ExperimentError> {
    let report = regime_report(params);
    if report.warning {
        return Err(ExperimentError::RegimeInvalid(report));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ExperimentError::InvalidInput("horizon must be positive".into()));
    }
    let eff = effective_coefficients(params);

    // (t, driven mean, slow mean, fast component of the mean at t)
    let samples: Vec<(f64, f64, f64, f64)>;
    let periods;
    match ic {
        CompareInitial::Classical(s) => {
            let d0 = ClassicalState::new(s.x + classical_fast_component(s.x, 0.0, params), s.v);
            let (a, b, n) = run_pair(
                d0.to_array(),
                s.to_array(),
                |t, y| classical_driven_deriv(ClassicalState::from_array(*y), t, params).to_array(),
                |_t, y| classical_slow_deriv(ClassicalState::from_array(*y), &eff).to_array(),
                params,
                horizon,
            )?;
            periods = n;
            samples = a
                .times
                .iter()
                .zip(a.states.iter().zip(&b.states))
                .map(|(&t, (da, sb))| (t, da[0], sb[0], classical_fast_component(sb[0], t, params)))
                .collect();
        }
        CompareInitial::Quantum(s) => {
            let d0 = driven_initial_state(s, params);
            let (a, b, n) = run_pair(
                d0.to_array(),
                s.to_array(),
                |t, y| quantum_driven_deriv(QuantumState::from_array(*y), t, params).to_array(),
                |_t, y| {
                    quantum_slow_deriv_with(
                        QuantumState::from_array(*y),
                        &eff,
                        CouplingMode::Full,
                        DotSquareReading::default(),
                    )
                    .to_array()
                },
                params,
                horizon,
            )?;
            periods = n;
            samples = a
                .times
                .iter()
                .zip(a.states.iter().zip(&b.states))
                .map(|(&t, (da, sb))| {
                    (
                        t,
                        da[0],
                        sb[0],
                        quantum_fast_components(QuantumState::from_array(*sb), t, params).0,
                    )
                })
                .collect();
        }
    }

    let rows: Vec<ComparisonRow> = samples
        .into_iter()
        .map(|(t, strobe, slow, fast)| {
            let fast_corrected = strobe - fast;
            ComparisonRow {
                t,
                slow,
                strobe,
                fast_corrected,
                abs_err: (fast_corrected - slow).abs(),
            }
        })
        .collect();
    let n = rows.len() as f64;
    let rms_abs_err = (rows.iter().map(|r| r.abs_err * r.abs_err).sum::<f64>() / n).sqrt();
    let max_abs_err = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
    let raw_rms = (rows.iter().map(|r| (r.strobe - r.slow).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ComparisonReport {
        rows,
        rms_abs_err,
        max_abs_err,
        raw_rms,
        smallness: report.smallness,
        drive_periods: periods,
    })
}

/// Slow potential at the release point relative to the barrier; negative
/// inside the classically allowed region.
pub fn energy_margin(x0: f64, eff: &EffectiveParams) -> Option<f64> {
    eff.barrier_height.map(|b| potential_slow(x0, eff) - b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eff(lambda: f64, ratio: f64) -> EffectiveParams {
        EffectiveParams::from_ratio(1.0, lambda, ratio).unwrap()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = linear_grid(0.01, 0.5, 25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[24], 0.5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(linear_grid(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn uncoupled_release_inside_and_outside() {
        let e = eff(0.1, 3.0);
        let s = ExperimentSettings::default();
        assert_eq!(
            classify_orbit(0.99, 0.0, CouplingMode::Uncoupled, &e, &s).unwrap(),
            OrbitClass::Bounded
        );
        assert!(matches!(
            classify_orbit(1.01, 0.0, CouplingMode::Uncoupled, &e, &s).unwrap(),
            OrbitClass::Escaped { .. }
        ));
    }

    #[test]
    fn non_volcano_needs_explicit_threshold() {
        let e = eff(0.1, 1.0);
        let s = ExperimentSettings::default();
        assert_eq!(
            classify_orbit(0.5, 0.1, CouplingMode::Partial, &e, &s),
            Err(ExperimentError::NoEscapeThreshold)
        );
        let s = ExperimentSettings {
            escape_threshold: Some(10.0),
            horizon: 50.0,
            ..Default::default()
        };
        // At r = 1 the averaged potential is a hump at the origin: everything leaves.
        assert!(matches!(
            classify_orbit(0.5, 0.1, CouplingMode::Partial, &e, &s).unwrap(),
            OrbitClass::Escaped { .. }
        ));
    }

    #[test]
    fn closure_breakdown_is_reported() {
        // A negative initial width is flagged at once.
        let e = eff(0.1, 3.0);
        let s = ExperimentSettings::default();
        assert_eq!(
            classify_orbit(0.5, -0.1, CouplingMode::Partial, &e, &s).unwrap(),
            OrbitClass::ClosureBreakdown { t: 0.0 }
        );
        // Uncoupled mode ignores the width entirely.
        assert_eq!(
            classify_orbit(0.5, -0.1, CouplingMode::Uncoupled, &e, &s).unwrap(),
            OrbitClass::Bounded
        );
    }

    #[test]
    fn bracket_invalid_when_everything_escapes() {
        let e = eff(0.1, 3.0);
        let s = ExperimentSettings::default();
        let r = escape_boundary(5.0, CouplingMode::Partial, &e, &s, &BisectOptions::default());
        assert!(
            matches!(r, Err(ExperimentError::BracketInvalid { class: "escaping", .. })),
            "{r:?}"
        );
        let p = boundary_point(5.0, CouplingMode::Partial, &e, &s, &BisectOptions::default());
        assert_eq!(p.x_max, 0.0);
        assert_eq!(p.flag, BoundaryFlag::AllEscape);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let e = eff(0.1, 3.0);
        let s = ExperimentSettings::default();
        let b = BisectOptions::default();
        assert!(boundary_curve(&[], CouplingMode::Partial, &e, &s, &b, Some(1)).is_err());
        assert!(boundary_curve(&[0.2, 0.1], CouplingMode::Partial, &e, &s, &b, Some(1)).is_err());
    }

    #[test]
    fn quadrature_limits() {
        let e = eff(0.1, 3.0);
        let small = period_quadrature_oracle(1e-6, &e).unwrap();
        assert!((small - std::f64::consts::TAU / 0.5f64.sqrt()).abs() < 1e-8);
        assert!(period_quadrature_oracle(1.0, &e).is_err());
        assert!(period_quadrature_oracle(0.0, &e).is_err());
        // Periods grow without bound toward the barrier.
        let mut last = 0.0;
        for x0 in [0.5, 0.9, 0.99, 0.9999, 1.0 - 1e-10] {
            let t = period_quadrature_oracle(x0, &e).unwrap();
            assert!(t > last);
            last = t;
        }
        assert!(last > 50.0);
    }

    #[test]
    fn quadrature_matches_complete_elliptic_integral() {
        // With x = x0 sin θ the period is 4K(m)/√A, A = α − βx0²/2,
        // m = (βx0²/2)/A, and K(m) = π / (2·AGM(1, √(1 − m))).
        let e = eff(0.1, 3.0);
        for x0 in [0.2f64, 0.5, 0.8, 0.95] {
            let k = 0.5 * e.beta * x0 * x0;
            let a = e.alpha - k;
            let m = k / a;
            let (mut p, mut q) = (1.0f64, (1.0 - m).sqrt());
            for _ in 0..40 {
                (p, q) = (0.5 * (p + q), (p * q).sqrt());
            }
            let closed = 4.0 * std::f64::consts::PI / (2.0 * p) / a.sqrt();
            let quad = period_quadrature_oracle(x0, &e).unwrap();
            assert!((quad - closed).abs() < 1e-8, "x0={x0}: {quad} vs {closed}");
        }
    }

    #[test]
    fn driven_initial_state_is_identity_without_drive() {
        let p = ModelParams::new(1.0, 0.1, 0.0, 10.0).unwrap();
        let s = QuantumState::new(0.5, 0.1, 0.1, 0.02, 0.01);
        assert_eq!(driven_initial_state(s, &p), s);
    }

    #[test]
    fn comparison_requires_valid_regime() {
        let p = ModelParams::new(1.0, 0.1, 1.0, 1.0 / 3f64.sqrt()).unwrap();
        let r = compare_full_vs_averaged(&p, CompareInitial::Classical(ClassicalState::new(0.5, 0.0)), 10.0);
        assert!(matches!(r, Err(ExperimentError::RegimeInvalid(_))));
    }
}
