//! Dispersion laws, the energy-shell jump kernel and the scattering rate.
//!
//! Energy conservation `ε(k) = ε(k') + ω(k − k')` places the post-jump
//! momentum on the sphere `a·k + (1 − a)|k|·S²` with `a = m/(m + M)`, and the
//! normalized kernel is the uniform law on that sphere. Sampling is therefore
//! exact: draw `U` uniform on `S²` and map it affinely.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::vec3::Vec3;

/// Tracer/atom masses and the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Tracer mass `m`.
    pub tracer_mass: f64,
    /// Atom mass `M`.
    pub atom_mass: f64,
    /// Coupling weight, fixed to 1.
    pub coupling: f64,
    /// Mass ratio `m/(m + M)`.
    pub a: f64,
    /// `4π M² m/(m + M)²`, so that `Σ(k) = rate_coeff·|k|`.
    pub rate_coeff: f64,
    /// Friction coefficient `4π M³ m/(m + M)³` in `E(dK | K) = −η|K|K dt`.
    pub eta: f64,
}

impl PhysParams {
    pub fn new(tracer_mass: f64, atom_mass: f64) -> Result<Self> {
        Self::with_coupling(tracer_mass, atom_mass, 1.0)
    }

    /// Only `coupling == 1` is admitted; the unit system is fixed by it.
    pub fn with_coupling(tracer_mass: f64, atom_mass: f64, coupling: f64) -> Result<Self> {
        if !(tracer_mass > 0.0 && tracer_mass.is_finite()) {
            return Err(Error::Domain(format!(
                "tracer mass m must be positive and finite, got {tracer_mass}"
            )));
        }
        if !(atom_mass > 0.0 && atom_mass.is_finite()) {
            return Err(Error::Domain(format!(
                "atom mass M must be positive and finite, got {atom_mass}"
            )));
        }
        if coupling != 1.0 {
            return Err(Error::Domain(format!(
                "coupling weight w is fixed to 1 by the unit convention, got {coupling}"
            )));
        }
        let total = tracer_mass + atom_mass;
        let a = tracer_mass / total;
        let rate_coeff = 4.0 * PI * atom_mass * atom_mass * tracer_mass / (total * total);
        let eta = rate_coeff * atom_mass / total;
        Ok(PhysParams {
            tracer_mass,
            atom_mass,
            coupling,
            a,
            rate_coeff,
            eta,
        })
    }

    /// `(m + M)²/(4π m² M²) = 1/(m·rate_coeff)`: the position increment per
    /// unit exponential clock along the current direction.
    pub fn increment_prefactor(&self) -> f64 {
        1.0 / (self.tracer_mass * self.rate_coeff)
    }
}

/// Tracer kinetic energy `|k|²/(2m)`.
pub fn epsilon(p: &PhysParams, k: Vec3) -> f64 {
    k.norm_sq() / (2.0 * p.tracer_mass)
}

/// Atom kinetic energy `|q|²/(2M)`.
pub fn omega(p: &PhysParams, q: Vec3) -> f64 {
    q.norm_sq() / (2.0 * p.atom_mass)
}

/// `ε(k) − ε(k') − ω(k − k')`; zero exactly on the energy shell.
pub fn energy_residual(p: &PhysParams, k: Vec3, k2: Vec3) -> f64 {
    epsilon(p, k) - epsilon(p, k2) - omega(p, k - k2)
}

/// Total jump rate `Σ(k) = rate_coeff·|k|`.
pub fn scattering_rate(p: &PhysParams, k: Vec3) -> f64 {
    p.rate_coeff * k.norm()
}

/// Deterministic part of a jump: `a·k + (1 − a)|k|·u` for a unit vector `u`.
pub fn jump_from_direction(p: &PhysParams, k: Vec3, u: Vec3) -> Vec3 {
    p.a * k + ((1.0 - p.a) * k.norm()) * u
}

/// Draws a post-jump momentum from the normalized kernel.
pub fn sample_jump(p: &PhysParams, k: Vec3, rng: &mut RandomStream) -> Result<Vec3> {
    if !k.is_finite() {
        return Err(Error::Domain(format!("momentum must be finite, got {k:?}")));
    }
    if k.norm() == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    Ok(jump_from_direction(p, k, rng.unit_vector()))
}

/// One step of the direction chain in polar form.
///
/// Returns `(|a·y + (1 − a)·u|, new unit direction)`; the first factor is the
/// momentum contraction `R_{j+1}/R_j`. `None` when the shell passes through
/// the origin and `u = −y` exactly (`a = 1/2`), which is absorbing.
pub fn contract_direction(a: f64, y: Vec3, u: Vec3) -> Option<(f64, Vec3)> {
    let v = a * y + (1.0 - a) * u;
    let r = v.norm();
    (r > 0.0).then(|| (r, v / r))
}
