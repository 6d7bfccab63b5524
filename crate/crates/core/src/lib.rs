//! Exact simulation of the zero-temperature quantum-friction jump process.
//!
//! A tracer particle with momentum `K_t` emits sound waves into a Bose
//! condensate. Each emission moves the momentum uniformly onto the energy
//! shell `a·k + (1 − a)|k|·S²` at a rate proportional to `|k|`, and the
//! position follows `dX/dt = K/m`. The crate provides:
//!
//! * [`kernel`]: dispersion laws, the jump kernel as an exact sphere sampler
//!   and the scattering rate;
//! * [`constants`]: closed-form limit constants with independent quadrature
//!   oracles, the log-moment generating function and its Legendre transform;
//! * [`simulate`]: the skeleton chain, exact piecewise-linear trajectories and
//!   schedule-independent seeded ensembles;
//! * [`meanfield`]: the fluctuation-free ODE solution used as a contrast;
//! * [`analysis`]: statistical checks of the limit theorems.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod constants;
pub mod error;
pub mod kernel;
pub mod meanfield;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod sum;
pub mod vec3;

pub use constants::{Constants, RateFunction};
pub use error::{Error, Result};
pub use kernel::PhysParams;
pub use meanfield::MeanFieldState;
pub use rng::RandomStream;
pub use simulate::{EnsembleSummary, SkeletonPath, Trajectory};
pub use vec3::Vec3;
