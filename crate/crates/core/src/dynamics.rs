//! Right-hand sides of the driven and averaged equations of motion, classical
//! and Gaussian-closure quantum, plus the analytic fast components.
//!
//! All functions here are total: they evaluate for any finite input,
//! including unphysical widths. Policing `W > 0` is left to the integrator.

use thiserror::Error;

use crate::model::{EffectiveParams, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("negative width W = {0}")]
    NegativeWidth(f64),
}

/// Classical phase-space point, also used for its own time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassicalState {
    pub x: f64,
    pub v: f64,
}

impl ClassicalState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.v]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self { x: a[0], v: a[1] }
    }
}

/// Mean position, variance and their derivatives. `⟨p⟩` is `mean_v` (m = 1).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantumState {
    pub mean_x: f64,
    pub mean_v: f64,
    pub width: f64,
    pub width_rate: f64,
    pub width_accel: f64,
}

impl QuantumState {
    pub fn new(mean_x: f64, mean_v: f64, width: f64, width_rate: f64, width_accel: f64) -> Self {
        Self {
            mean_x,
            mean_v,
            width,
            width_rate,
            width_accel,
        }
    }

    /// Release at rest with the default width history `Ẇ = 0`, `Ẅ = 0.01`.
    pub fn released(mean_x: f64, width: f64) -> Self {
        Self::new(mean_x, 0.0, width, 0.0, 0.01)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.mean_x, self.mean_v, self.width, self.width_rate, self.width_accel]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Which couplings between mean and width the averaged system keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingMode {
    /// Mean ignores the width; recovers the classical averaged equation.
    Uncoupled,
    /// Width feeds the mean, but the width equation drops every mean-dependent term.
    Partial,
    /// Both averaged equations as derived.
    Full,
    /// Partial width dynamics with the static skewness `S = γ⟨x⟩` in the mean equation.
    SkewedPartial { gamma: f64 },
}

impl CouplingMode {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingMode::Uncoupled => "uncoupled",
            CouplingMode::Partial => "partial",
            CouplingMode::Full => "full",
            CouplingMode::SkewedPartial { .. } => "skewed",
        }
    }

    /// Whether the width enters the mean equation (and so must stay positive).
    pub fn width_feeds_mean(&self) -> bool {
        !matches!(self, CouplingMode::Uncoupled)
    }
}

/// How the dotted squares in the averaged width equation are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DotSquareReading {
    /// `d(W²)/dt = 2WẆ` and `d(⟨x⟩²)/dt = 2⟨x⟩⟨ẋ⟩`; reduces to the driven
    /// width equation at zero drive.
    #[default]
    DerivativeOfSquare,
    /// `(Ẇ)²` and `(⟨ẋ⟩)²`, kept for sensitivity studies.
    SquareOfDerivative,
}

impl DotSquareReading {
    fn width_sq_rate(self, w: f64, w_rate: f64) -> f64 {
        match self {
            DotSquareReading::DerivativeOfSquare => 2.0 * w * w_rate,
            DotSquareReading::SquareOfDerivative => w_rate * w_rate,
        }
    }

    fn mean_sq_rate(self, x: f64, v: f64) -> f64 {
        match self {
            DotSquareReading::DerivativeOfSquare => 2.0 * x * v,
            DotSquareReading::SquareOfDerivative => v * v,
        }
    }
}

pub fn classical_driven_deriv(state: ClassicalState, t: f64, params: &ModelParams) -> ClassicalState {
    let k = 1.0 + params.epsilon() * (params.big_omega() * t).cos();
    let x = state.x;
    let x3 = x * x * x;
    let omega_f = params.omega_sq() * k;
    let lambda_f = params.lambda() * k;
    ClassicalState::new(state.v, omega_f * x - lambda_f * x3)
}

pub fn classical_slow_deriv(state: ClassicalState, eff: &EffectiveParams) -> ClassicalState {
    let x = state.x;
    let x3 = x * x * x;
    ClassicalState::new(state.v, -eff.alpha * x + eff.beta * x3)
}

/// Fast displacement `x_f = -(ε/Ω²)(ω²x_s - λx_s³) cos Ωt`.
pub fn classical_fast_component(x_s: f64, t: f64, params: &ModelParams) -> f64 {
    classical_fast_amplitude(x_s, params) * (params.big_omega() * t).cos()
}

/// Coefficient of `cos Ωt` in the classical fast displacement.
pub fn classical_fast_amplitude(x_s: f64, params: &ModelParams) -> f64 {
    let om2 = params.big_omega() * params.big_omega();
    let force = params.omega_sq() * x_s - params.lambda() * x_s * x_s * x_s;
    -(params.epsilon() / om2) * force
}

// Coefficients of the four Ẇ-type terms of the width equation:
// W''' = c4·Ẇ − c9·d(W²) − c12·⟨x⟩²Ẇ − c6·W·d(⟨x⟩²).
struct WidthCoefficients {
    c4: f64,
    c9: f64,
    c12: f64,
    c6: f64,
}

fn mean_accel(x: f64, w: f64, linear: f64, cubic: f64) -> f64 {
    let x3 = x * x * x;
    linear * x - cubic * x3 - 3.0 * cubic * w * x
}

/// Closed driven system: mean and width equations with `f = ε cos Ωt`.
pub fn quantum_driven_deriv(state: QuantumState, t: f64, params: &ModelParams) -> QuantumState {
    let phase = params.big_omega() * t;
    let f = params.epsilon() * phase.cos();
    let f_rate = -params.epsilon() * params.big_omega() * phase.sin();
    let k = 1.0 + f;
    let (om2, lam) = (params.omega_sq(), params.lambda());
    let QuantumState {
        mean_x: x,
        mean_v: v,
        width: w,
        width_rate: wd,
        ..
    } = state;

    let accel = mean_accel(x, w, om2 * k, lam * k);

    let c = WidthCoefficients {
        c4: 4.0 * om2 * k,
        c9: 9.0 * lam * k,
        c12: 12.0 * lam * k,
        c6: 6.0 * lam * k,
    };
    let x2 = x * x;
    let jerk = c.c4 * wd + 2.0 * om2 * f_rate * w
        - c.c9 * (2.0 * w * wd)
        - c.c12 * x2 * wd
        - 6.0 * lam * f_rate * (w * w + w * x2)
        - c.c6 * w * (2.0 * x * v);

    QuantumState::new(v, accel, wd, state.width_accel, jerk)
}

pub fn quantum_slow_deriv(state: QuantumState, eff: &EffectiveParams, mode: CouplingMode) -> QuantumState {
    quantum_slow_deriv_with(state, eff, mode, DotSquareReading::default())
}

/// Averaged system under a chosen reading of the dotted squares.
pub fn quantum_slow_deriv_with(
    state: QuantumState,
    eff: &EffectiveParams,
    mode: CouplingMode,
    reading: DotSquareReading,
) -> QuantumState {
    let QuantumState {
        mean_x: x,
        mean_v: v,
        width: w,
        width_rate: wd,
        ..
    } = state;
    let r = eff.ratio;
    let (om2, lam) = (eff.omega_sq, eff.lambda);
    // -α = ω²(1 - r/2) and -β = λ(1 - 2r).
    let linear = -eff.alpha;
    let cubic = -eff.beta;

    let accel = match mode {
        CouplingMode::Uncoupled => linear * x - cubic * (x * x * x),
        CouplingMode::Partial | CouplingMode::Full => mean_accel(x, w, linear, cubic),
        CouplingMode::SkewedPartial { gamma } => linear * x - cubic * (x * x * x) - cubic * (3.0 * x * w + gamma * x),
    };

    let c = WidthCoefficients {
        c4: 4.0 * om2 * (1.0 - 2.0 * r),
        c9: 9.0 * lam * (1.0 - 5.0 * r),
        c12: 12.0 * lam * (1.0 - 9.0 * r),
        c6: 6.0 * lam * (1.0 - 5.0 * r),
    };
    let jerk = match mode {
        CouplingMode::Full => {
            c.c4 * wd
                - c.c9 * reading.width_sq_rate(w, wd)
                - c.c12 * (x * x) * wd
                - c.c6 * w * reading.mean_sq_rate(x, v)
        }
        _ => c.c4 * wd - c.c9 * reading.width_sq_rate(w, wd),
    };

    QuantumState::new(v, accel, wd, state.width_accel, jerk)
}

/// Phase amplitudes of the quantum fast components:
/// `⟨x⟩_f = mean_cos·cos Ωt`, `W_f = width_cos·cos Ωt + width_sin·sin Ωt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastAmplitudes {
    pub mean_cos: f64,
    pub width_cos: f64,
    pub width_sin: f64,
}

impl FastAmplitudes {
    /// `(⟨x⟩_f, W_f)` at drive phase `Ωt`.
    pub fn at_phase(&self, phase: f64) -> (f64, f64) {
        let (s, c) = phase.sin_cos();
        (self.mean_cos * c, self.width_cos * c + self.width_sin * s)
    }
}

pub fn quantum_fast_amplitudes(state: QuantumState, params: &ModelParams, reading: DotSquareReading) -> FastAmplitudes {
    let QuantumState {
        mean_x: x,
        mean_v: v,
        width: w,
        width_rate: wd,
        ..
    } = state;
    let (om2, lam, eps, big) = (params.omega_sq(), params.lambda(), params.epsilon(), params.big_omega());
    let big2 = big * big;
    let x2 = x * x;

    let mean_force = om2 * x - lam * (x2 * x + 3.0 * x * w);
    let width_cos_bracket = om2 * w - 3.0 * lam * (w * x2 + w * w);
    let width_sin_bracket = 2.0 * om2 * wd
        - 3.0 * lam * (1.5 * reading.width_sq_rate(w, wd) + w * reading.mean_sq_rate(x, v) + 2.0 * wd * x2);

    FastAmplitudes {
        mean_cos: -(eps / big2) * mean_force,
        width_cos: -(2.0 * eps / big2) * width_cos_bracket,
        width_sin: -(2.0 * eps / (big2 * big)) * width_sin_bracket,
    }
}

/// Fast displacements `(⟨x⟩_f, W_f)` of the mean and the width at time `t`,
/// evaluated from the slow state.
pub fn quantum_fast_components(state: QuantumState, t: f64, params: &ModelParams) -> (f64, f64) {
    quantum_fast_amplitudes(state, params, DotSquareReading::default()).at_phase(params.big_omega() * t)
}

/// Raw moments implied by the Gaussian closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedMoments {
    /// `⟨x³⟩`.
    pub third: f64,
    /// `⟨x⁴⟩ − ⟨x³⟩⟨x⟩`.
    pub fourth_less_third_mean: f64,
    /// Fourth central moment, closed as `K = 3W²`.
    pub kurtosis: f64,
}

/// Reconstructs `⟨x³⟩` and `⟨x⁴⟩ − ⟨x³⟩⟨x⟩` from mean, variance and the
/// third central moment `skew`, with the fourth central moment closed at `3W²`.
pub fn moment_reconstruct(mean_x: f64, width: f64, skew: f64) -> Result<ClosedMoments, DynamicsError> {
    if width.is_nan() || width < 0.0 {
        return Err(DynamicsError::NegativeWidth(width));
    }
    let m = mean_x;
    let kurtosis = 3.0 * width * width;
    Ok(ClosedMoments {
        third: m * m * m + 3.0 * width * m + skew,
        fourth_less_third_mean: kurtosis + 3.0 * width * m * m + 3.0 * skew * m,
        kurtosis,
    })
}
