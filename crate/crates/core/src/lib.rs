//! Classical and quantum-moment dynamics of a periodically driven double well.
//!
//! A fast drive `1 + ε cos Ωt` applied to `V(x) = -ω²x²/2 + λx⁴/4` turns the
//! averaged potential into a volcano `αx²/2 - βx⁴/4` once `r = ε²ω²/Ω² > 2`.
//! The quantum treatment follows the mean position and the variance of a
//! wave packet under a Gaussian closure; the width coupling lets packets
//! escape from inside the classical turning points.
//!
//! Modules, bottom up:
//! - [`model`]: parameters, slow coefficients, potentials, regime checks.
//! - [`dynamics`]: right-hand sides of every equation of motion.
//! - [`integrator`]: RK4 / RK45 stepping with escape and width events.
//! - [`experiments`]: orbit classification, escape boundaries, periods,
//!   and the driven-versus-averaged comparison.
//! - [`csvio`] and [`cli`]: the command-line front end and its file formats.

pub mod cli;
pub mod csvio;
pub mod dynamics;
pub mod experiments;
pub mod integrator;
pub mod model;

pub use dynamics::{ClassicalState, CouplingMode, DotSquareReading, QuantumState};
pub use integrator::{integrate, IntegratorConfig, Method, Trajectory};
pub use model::{effective_coefficients, EffectiveParams, ModelParams};
