//! Fixed-step RK4 and adaptive Dormand–Prince 5(4) time stepping with
//! trajectory recording and event localization.
//!
//! Events are watched on fixed state components: the escape test on
//! component 0 (position or mean position) and the width test on
//! component 2. Crossings are localized by bisection on the cubic Hermite
//! interpolant of the bracketing step.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dynamics::ClassicalState;
use crate::model::EffectiveParams;

/// Time tolerance for event localization.
pub const EVENT_TIME_TOL: f64 = 1e-6;
/// Adaptive steps shorter than this fraction of `t_end` count as a failure.
pub const MIN_STEP_FRACTION: f64 = 1e-12;

const POSITION: usize = 0;
const WIDTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state is not finite")]
    NonFiniteInitialState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { step: f64 },
    Rk45 { rel_tol: f64, abs_tol: f64 },
}

impl Method {
    pub fn adaptive_default() -> Self {
        Method::Rk45 {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
        }
    }

    /// Fixed RK4 resolving each drive period with 50 steps.
    pub fn driven_default(drive_period: f64) -> Self {
        Method::Rk4 {
            step: drive_period / 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    /// Keep every `sample_stride`-th accepted step (the endpoints are always kept).
    pub sample_stride: usize,
    /// Terminate when `|y[0]|` reaches this value.
    pub escape_threshold: Option<f64>,
    /// Terminate when `y[2] <= 0`.
    pub watch_width: bool,
}

impl IntegratorConfig {
    pub fn new(method: Method, t_end: f64) -> Self {
        Self {
            method,
            t_end,
            sample_stride: 1,
            escape_threshold: None,
            watch_width: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn with_escape_threshold(mut self, threshold: f64) -> Self {
        self.escape_threshold = Some(threshold);
        self
    }

    pub fn with_width_watch(mut self, watch: bool) -> Self {
        self.watch_width = watch;
        self
    }

    fn validate(&self, dim: usize) -> Result<(), IntegratorError> {
        let bad = |m: &str| Err(IntegratorError::InvalidConfig(m.to_string()));
        match self.method {
            Method::Rk4 { step } if !(step > 0.0 && step.is_finite()) => return bad("RK4 step must be positive"),
            Method::Rk45 { rel_tol, abs_tol }
                if !(rel_tol > 0.0 && abs_tol > 0.0 && rel_tol.is_finite() && abs_tol.is_finite()) =>
            {
                return bad("tolerances must be positive")
            }
            _ => {}
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1");
        }
        if let Some(th) = self.escape_threshold {
            if !(th > 0.0 && th.is_finite()) {
                return bad("escape threshold must be positive");
            }
        }
        if self.watch_width && dim <= WIDTH {
            return bad("width watch needs a state with a width component");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    EscapeCrossing,
    WidthNonPositive,
    StepFailure,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::EscapeCrossing => "escape",
            EventKind::WidthNonPositive => "width_non_positive",
            EventKind::StepFailure => "step_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<const N: usize> {
    pub kind: EventKind,
    pub time: f64,
    pub state: [f64; N],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub events: Vec<Event<N>>,
    pub meta: BTreeMap<String, String>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last_state(&self) -> [f64; N] {
        *self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial time")
    }

    /// The event that ended the integration early, if any.
    pub fn terminal_event(&self) -> Option<&Event<N>> {
        self.events.last()
    }

    pub fn component(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(move |s| s[index])
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * k[i])
}

fn all_finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, k1));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(y, h, &k3));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DpStep<const N: usize> {
    y: [f64; N],
    f_end: [f64; N],
    err: f64,
}

fn dp_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64, rel: f64, abs: f64) -> DpStep<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let yi: [f64; N] = std::array::from_fn(|i| y[i] + h * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>());
        k[s] = f(t + DP_C[s] * h, &yi);
    }
    // The last stage is evaluated at the fifth-order solution (FSAL).
    let y_new: [f64; N] = std::array::from_fn(|i| y[i] + h * (0..6).map(|j| DP_A[6][j] * k[j][i]).sum::<f64>());
    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (0..7).map(|j| DP_E[j] * k[j][i]).sum::<f64>();
        let scale = abs + rel * y[i].abs().max(y_new[i].abs());
        acc += (e / scale).powi(2);
    }
    DpStep {
        y: y_new,
        f_end: k[6],
        err: (acc / N as f64).sqrt(),
    }
}

fn initial_step<const N: usize, F>(f: &F, y: &[f64; N], f0: &[f64; N], t_end: f64, rel: f64, abs: f64) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let norm = |v: &[f64; N]| -> f64 {
        let s: f64 = (0..N).map(|i| (v[i] / (abs + rel * y[i].abs())).powi(2)).sum();
        (s / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, f0);
    let f1 = f(h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(t_end)
}

fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    h: f64,
    y1: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    std::array::from_fn(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
}

struct Watcher {
    escape: Option<f64>,
    width: bool,
}

impl Watcher {
    fn triggered<const N: usize>(&self, y: &[f64; N]) -> Option<EventKind> {
        [EventKind::WidthNonPositive, EventKind::EscapeCrossing]
            .into_iter()
            .find(|&k| self.fires(k, y))
    }

    fn fires<const N: usize>(&self, kind: EventKind, y: &[f64; N]) -> bool {
        match kind {
            EventKind::WidthNonPositive => self.width && y[WIDTH] <= 0.0,
            EventKind::EscapeCrossing => self.escape.is_some_and(|th| y[POSITION].abs() >= th),
            EventKind::StepFailure => false,
        }
    }
}

/// Localizes the earliest event inside the step `[t0, t0 + h]` whose end
/// state `y1` triggered it.
#[allow(clippy::too_many_arguments)]
fn localize<const N: usize>(
    watcher: &Watcher,
    kind_at_end: EventKind,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    h: f64,
    y1: &[f64; N],
    f1: &[f64; N],
) -> Event<N> {
    let mut best: Option<(f64, EventKind)> = None;
    for kind in [EventKind::WidthNonPositive, EventKind::EscapeCrossing] {
        if kind != kind_at_end && !watcher.fires(kind, y1) {
            continue;
        }
        let (mut lo, mut hi) = (t0, t0 + h);
        while hi - lo > EVENT_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            if watcher.fires(kind, &hermite(t0, y0, f0, h, y1, f1, mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if best.is_none_or(|(t, _)| hi < t) {
            best = Some((hi, kind));
        }
    }
    let (time, kind) = best.unwrap_or((t0 + h, kind_at_end));
    let state = if time >= t0 + h {
        *y1
    } else {
        hermite(t0, y0, f0, h, y1, f1, time)
    };
    Event { kind, time, state }
}

struct Recorder<const N: usize> {
    traj: Trajectory<N>,
    stride: usize,
    accepted: usize,
}

impl<const N: usize> Recorder<N> {
    fn push_step(&mut self, t: f64, y: [f64; N]) {
        self.accepted += 1;
        if self.accepted.is_multiple_of(self.stride) {
            self.traj.times.push(t);
            self.traj.states.push(y);
        }
    }

    fn finish(mut self, t: f64, y: [f64; N], event: Option<Event<N>>) -> Trajectory<N> {
        if self.traj.times.last().is_none_or(|&last| t > last) {
            self.traj.times.push(t);
            self.traj.states.push(y);
        }
        if let Some(e) = event {
            self.traj.events.push(e);
        }
        self.traj
    }
}

/// Integrates `dy/dt = deriv(t, y)` from `t = 0` with the configured method.
///
/// Escape and width events terminate the run; the trajectory then ends at
/// the localized event time and state. Non-finite states and adaptive step
/// underflow terminate with a `StepFailure` event at the last good state.
pub fn integrate<const N: usize, F>(
    state0: [f64; N],
    deriv: F,
    config: &IntegratorConfig,
) -> Result<Trajectory<N>, IntegratorError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    config.validate(N)?;
    if !all_finite(&state0) {
        return Err(IntegratorError::NonFiniteInitialState);
    }
    let watcher = Watcher {
        escape: config.escape_threshold,
        width: config.watch_width,
    };
    let mut rec = Recorder {
        traj: Trajectory {
            times: vec![0.0],
            states: vec![state0],
            events: Vec::new(),
            meta: BTreeMap::new(),
        },
        stride: config.sample_stride,
        accepted: 0,
    };
    if let Some(kind) = watcher.triggered(&state0) {
        let event = Event {
            kind,
            time: 0.0,
            state: state0,
        };
        return Ok(rec.finish(0.0, state0, Some(event)));
    }

    let t_end = config.t_end;
    let mut t = 0.0;
    let mut y = state0;
    let mut fy = deriv(t, &y);
    let failure = |t: f64, y: [f64; N]| Event {
        kind: EventKind::StepFailure,
        time: t,
        state: y,
    };

    match config.method {
        Method::Rk4 { step } => {
            let n_steps = ((t_end / step) - 1e-9).ceil().max(1.0) as u64;
            for k in 0..n_steps {
                let t_next = if k + 1 == n_steps { t_end } else { (k + 1) as f64 * step };
                let h = t_next - t;
                if h <= 0.0 {
                    continue;
                }
                let y_next = rk4_step(&deriv, t, &y, &fy, h);
                if !all_finite(&y_next) {
                    return Ok(rec.finish(t, y, Some(failure(t, y))));
                }
                let f_next = deriv(t_next, &y_next);
                if let Some(kind) = watcher.triggered(&y_next) {
                    let e = localize(&watcher, kind, t, &y, &fy, h, &y_next, &f_next);
                    return Ok(rec.finish(e.time, e.state, Some(e)));
                }
                t = t_next;
                y = y_next;
                fy = f_next;
                if k + 1 < n_steps {
                    rec.push_step(t, y);
                }
            }
            Ok(rec.finish(t, y, None))
        }
        Method::Rk45 { rel_tol, abs_tol } => {
            let h_min = MIN_STEP_FRACTION * t_end;
            let mut h = initial_step(&deriv, &y, &fy, t_end, rel_tol, abs_tol);
            let mut err_prev: f64 = 1e-4;
            loop {
                if t_end - t <= h_min {
                    return Ok(rec.finish(t, y, None));
                }
                let last = t + h >= t_end;
                let h_try = if last { t_end - t } else { h };
                let step = dp_step(&deriv, t, &y, &fy, h_try, rel_tol, abs_tol);
                let finite = all_finite(&step.y) && step.err.is_finite();
                if finite && step.err <= 1.0 {
                    let t_next = if last { t_end } else { t + h_try };
                    if let Some(kind) = watcher.triggered(&step.y) {
                        let e = localize(&watcher, kind, t, &y, &fy, h_try, &step.y, &step.f_end);
                        return Ok(rec.finish(e.time, e.state, Some(e)));
                    }
                    // PI controller (Hairer's beta = 0.04).
                    let err = step.err.max(1e-10);
                    let factor = (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.04)).clamp(0.2, 10.0);
                    err_prev = err;
                    t = t_next;
                    y = step.y;
                    fy = step.f_end;
                    if last {
                        return Ok(rec.finish(t, y, None));
                    }
                    rec.push_step(t, y);
                    h = h_try * factor;
                } else {
                    let factor = if finite {
                        (0.9 * step.err.powf(-1.0 / 5.0)).clamp(0.1, 1.0)
                    } else {
                        0.25
                    };
                    h = h_try * factor;
                    if h < h_min {
                        return Ok(rec.finish(t, y, Some(failure(t, y))));
                    }
                }
            }
        }
    }
}

/// Energy of the averaged classical flow, `v²/2 + αx²/2 − βx⁴/4`.
pub fn energy_slow(state: ClassicalState, eff: &EffectiveParams) -> f64 {
    let x2 = state.x * state.x;
    0.5 * state.v * state.v + eff.alpha * x2 / 2.0 - eff.beta * x2 * x2 / 4.0
}
