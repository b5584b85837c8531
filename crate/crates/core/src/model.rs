//! Physical parameters of the driven double well and the coefficients of the
//! averaged (slow) volcano potential.

use thiserror::Error;

/// Averaging-validity threshold used by the reference `(ε, Ω)` mapping.
pub const REFERENCE_SMALLNESS: f64 = 0.03;
/// `εω²/Ω²` above this raises a regime warning.
pub const SMALLNESS_WARNING: f64 = 0.05;
/// `Ω/ω` below this raises a regime warning.
pub const FREQUENCY_RATIO_WARNING: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("parameter `{name}` = {value} violates {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

fn check(name: &'static str, value: f64, ok: bool, constraint: &'static str) -> Result<f64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NotFinite { name, value });
    }
    if !ok {
        return Err(ModelError::OutOfRange {
            name,
            value,
            constraint,
        });
    }
    Ok(value)
}

/// Parameters of `V(x) = -mω²x²/2 + λmx⁴/4` modulated by `1 + ε cos Ωt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    omega_sq: f64,
    lambda: f64,
    epsilon: f64,
    big_omega: f64,
    mass: f64,
    // The drive ratio as supplied, so it survives the (ε, Ω) round trip exactly.
    exact_ratio: Option<f64>,
}

impl ModelParams {
    pub fn new(omega_sq: f64, lambda: f64, epsilon: f64, big_omega: f64) -> Result<Self, ModelError> {
        check("omega_sq", omega_sq, omega_sq > 0.0, "omega_sq > 0")?;
        check("lambda", lambda, lambda >= 0.0, "lambda >= 0")?;
        check("epsilon", epsilon, epsilon >= 0.0, "epsilon >= 0")?;
        check("big_omega", big_omega, big_omega > 0.0, "big_omega > 0")?;
        let params = Self {
            omega_sq,
            lambda,
            epsilon,
            big_omega,
            mass: 1.0,
            exact_ratio: None,
        };
        check("ratio", params.ratio(), true, "finite drive ratio")?;
        Ok(params)
    }

    /// Builds concrete drive parameters from the drive ratio `r = ε²ω²/Ω²`
    /// using the reference mapping `ε = r / 0.03`, `Ω = ω ε / √r`, which puts
    /// `εω²/Ω²` at 0.03. For `r = 0` the drive is off and `Ω` is set to `10ω`.
    pub fn from_ratio(omega_sq: f64, lambda: f64, ratio: f64) -> Result<Self, ModelError> {
        check("omega_sq", omega_sq, omega_sq > 0.0, "omega_sq > 0")?;
        check("ratio", ratio, ratio >= 0.0, "ratio >= 0")?;
        let omega = omega_sq.sqrt();
        let params = if ratio == 0.0 {
            Self::new(omega_sq, lambda, 0.0, FREQUENCY_RATIO_WARNING * omega)?
        } else {
            let epsilon = ratio / REFERENCE_SMALLNESS;
            Self::new(omega_sq, lambda, epsilon, omega * epsilon / ratio.sqrt())?
        };
        Ok(Self {
            exact_ratio: Some(ratio),
            ..params
        })
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self, ModelError> {
        self.mass = check("mass", mass, mass > 0.0, "mass > 0")?;
        Ok(self)
    }

    /// Same parameters with a different drive; used by convergence studies.
    pub fn with_drive(self, epsilon: f64, big_omega: f64) -> Result<Self, ModelError> {
        Self::new(self.omega_sq, self.lambda, epsilon, big_omega)?.with_mass(self.mass)
    }

    pub fn omega_sq(&self) -> f64 {
        self.omega_sq
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn big_omega(&self) -> f64 {
        self.big_omega
    }

    /// Stored for completeness; it cancels from every equation of motion.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Drive ratio `r = ε²ω²/Ω²`.
    pub fn ratio(&self) -> f64 {
        if let Some(r) = self.exact_ratio {
            return r;
        }
        let q = self.epsilon / self.big_omega;
        q * q * self.omega_sq
    }

    /// Averaging-validity figure `εω²/Ω²`.
    pub fn smallness(&self) -> f64 {
        self.epsilon * self.omega_sq / (self.big_omega * self.big_omega)
    }

    pub fn drive_period(&self) -> f64 {
        std::f64::consts::TAU / self.big_omega
    }
}

/// Coefficients of the slow potential `V_s(x) = αx²/2 - βx⁴/4`.
///
/// `ω²` and `λ` are carried along because the quantum slow equations need
/// them in addition to `α`, `β` and `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub alpha: f64,
    pub beta: f64,
    pub ratio: f64,
    pub omega_sq: f64,
    pub lambda: f64,
    /// `√(α/β)`, present only in the volcano regime (`α > 0`, `β > 0`).
    pub turning_point: Option<f64>,
    /// `α²/(4β)`, present only in the volcano regime.
    pub barrier_height: Option<f64>,
}

impl EffectiveParams {
    /// Slow coefficients from `ω²`, `λ` and the drive ratio alone.
    pub fn from_ratio(omega_sq: f64, lambda: f64, ratio: f64) -> Result<Self, ModelError> {
        check("omega_sq", omega_sq, omega_sq > 0.0, "omega_sq > 0")?;
        check("lambda", lambda, lambda >= 0.0, "lambda >= 0")?;
        check("ratio", ratio, ratio >= 0.0, "ratio >= 0")?;
        Ok(Self::build(omega_sq, lambda, ratio))
    }

    fn build(omega_sq: f64, lambda: f64, ratio: f64) -> Self {
        let alpha = omega_sq * (ratio / 2.0 - 1.0);
        let beta = lambda * (2.0 * ratio - 1.0);
        let volcano = alpha > 0.0 && beta > 0.0;
        Self {
            alpha,
            beta,
            ratio,
            omega_sq,
            lambda,
            turning_point: volcano.then(|| (alpha / beta).sqrt()),
            barrier_height: volcano.then(|| alpha * alpha / (4.0 * beta)),
        }
    }

    pub fn is_volcano(&self) -> bool {
        self.turning_point.is_some()
    }
}

pub fn effective_coefficients(params: &ModelParams) -> EffectiveParams {
    EffectiveParams::build(params.omega_sq, params.lambda, params.ratio())
}

/// Bare double-well potential per unit mass.
pub fn potential_bare(x: f64, params: &ModelParams) -> f64 {
    let x2 = x * x;
    -params.omega_sq * x2 / 2.0 + params.lambda * x2 * x2 / 4.0
}

/// Slow (volcano) potential per unit mass.
pub fn potential_slow(x: f64, eff: &EffectiveParams) -> f64 {
    let x2 = x * x;
    eff.alpha * x2 / 2.0 - eff.beta * x2 * x2 / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub ratio: f64,
    /// `r/2 > 1`.
    pub volcano: bool,
    /// `εω²/Ω²`; must be small for the averaged equations to hold.
    pub smallness: f64,
    /// `Ω/ω`.
    pub frequency_ratio: f64,
    pub warning: bool,
}

pub fn regime_report(params: &ModelParams) -> RegimeReport {
    let smallness = params.smallness();
    let frequency_ratio = params.big_omega / params.omega_sq.sqrt();
    let ratio = params.ratio();
    RegimeReport {
        ratio,
        volcano: ratio / 2.0 > 1.0,
        smallness,
        frequency_ratio,
        warning: smallness > SMALLNESS_WARNING || frequency_ratio < FREQUENCY_RATIO_WARNING,
    }
}
