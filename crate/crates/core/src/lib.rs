//! Pulse-level emulation of a two-qubit analog Rydberg register together with
//! a differentiable-quantum-circuit solver and extremal-learning stage for a
//! first-order ODE.
//!
//! The pipeline: build square-pulse sequences whose feature-map duration
//! encodes `x` and whose ansatz phase is `theta`, read out the total
//! magnetization (exactly or with shot noise), differentiate with respect to
//! `x` through shifted evaluations, score a physics-informed loss on a
//! `theta` grid, then locate the minimum of the trained model in `x`.

pub mod calibration;
pub mod circuit;
pub mod error;
pub mod gpsr;
pub mod pipeline;
pub mod points;
pub mod problem;
pub mod qel;
pub mod quantum;
pub mod rydberg;
pub mod sampling;
pub mod smoothing;
pub mod trainer;

pub use error::{Error, Result};
