//! Simulation of the p-order Gaussian cloud model and of the scalar
//! stochastic recurrence `X_t = A_t |X_{t−1}| + B_t` it embeds into, with
//! diagnostics for the existence and uniqueness of a stationary law.
//!
//! Modules:
//!
//! * [`special_fn`]: `E[log|ε|] = −(γ + ln 2)/2` in closed form and by quadrature.
//! * [`noise`]: seedable, splittable standard-normal streams.
//! * [`cloud`]: cloud model parameters and drop generators.
//! * [`sre`]: linear and abs-form recurrence engines, the backward series,
//!   partial solutions and the dominating sequence.
//! * [`diagnostics`]: Lyapunov and log⁺ estimates, coupling, KS stationarity.
//! * [`stats`]: KS and moment helpers.

pub mod cloud;
pub mod diagnostics;
pub mod noise;
pub mod special_fn;
pub mod sre;
pub mod stats;

pub use cloud::{CloudParams, Definition, DropBatch};
pub use noise::{GaussianSource, NoiseStream, ScriptedNoise};
pub use sre::{ACoeff, BCoeff, CloudExtension, CoeffProcess, Form, Trajectory};

/// Crate version, embedded in serialized run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
