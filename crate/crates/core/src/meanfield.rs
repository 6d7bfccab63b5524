//! The fluctuation-free approximation `dK/dt = −η|K|K`, `dX/dt = K/m`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldState {
    pub x0: Vec3,
    pub k0: Vec3,
    pub eta: f64,
    pub tracer_mass: f64,
}

impl MeanFieldState {
    pub fn new(p: &PhysParams, x0: Vec3, k0: Vec3) -> Result<Self> {
        if !x0.is_finite() || !k0.is_finite() {
            return Err(Error::Domain("initial state must be finite".into()));
        }
        if k0.norm() == 0.0 {
            return Err(Error::ZeroMomentum);
        }
        Ok(MeanFieldState {
            x0,
            k0,
            eta: p.eta,
            tracer_mass: p.tracer_mass,
        })
    }

    fn unit(&self) -> Vec3 {
        self.k0 / self.k0.norm()
    }

    /// `|K_t| = (ηt + 1/|k0|)^{−1}`.
    pub fn speed(&self, t: f64) -> f64 {
        1.0 / (self.eta * t + 1.0 / self.k0.norm())
    }

    /// `K_t = (ηt + 1/|k0|)^{−1}·k0/|k0|`.
    pub fn momentum(&self, t: f64) -> Vec3 {
        if t == 0.0 {
            return self.k0;
        }
        self.speed(t) * self.unit()
    }

    /// `|X_t − x0| = ln(1 + η|k0|t)/(mη)`.
    pub fn distance(&self, t: f64) -> f64 {
        (self.eta * self.k0.norm() * t).ln_1p() / (self.tracer_mass * self.eta)
    }

    /// `X_t = x0 + k0/(mη|k0|)·ln(1 + η|k0|t)`.
    pub fn position(&self, t: f64) -> Vec3 {
        self.x0 + self.distance(t) * self.unit()
    }

    /// Norm of the central-difference `dK/dt` minus `−η|K_t|K_t`.
    ///
    /// At `t < h` the stencil is shifted forward to stay in `t ≥ 0`.
    pub fn residual_ode(&self, t: f64, h: f64) -> f64 {
        let c = t.max(h);
        let derivative = (self.momentum(c + h) - self.momentum(c - h)) / (2.0 * h);
        let k = self.momentum(c);
        (derivative + (self.eta * k.norm()) * k).norm()
    }
}

/// `count_per_decade` log-spaced points per decade from `10^lo` to `10^hi`,
/// both included.
pub fn log_grid(lo: i32, hi: i32, count_per_decade: usize) -> Vec<f64> {
    let steps = (hi - lo) as usize * count_per_decade;
    (0..=steps)
        .map(|i| 10f64.powf(lo as f64 + i as f64 / count_per_decade as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn state(k0: Vec3) -> MeanFieldState {
        MeanFieldState::new(
            &PhysParams::new(1.0, 1.0).unwrap(),
            Vec3::new(1.0, -1.0, 2.0),
            k0,
        )
        .unwrap()
    }

    #[test]
    fn initial_values() {
        let st = state(Vec3::new(0.0, 3.0, 4.0));
        assert_eq!(st.momentum(0.0), st.k0);
        assert_eq!(st.position(0.0), st.x0);
    }

    #[test]
    fn half_speed_time() {
        let st = state(Vec3::E1);
        assert!((st.eta - PI / 2.0).abs() < 1e-15);
        assert!((st.momentum(2.0 / PI).norm() - 0.5).abs() < 1e-15);
        let t = 1e9;
        assert!((st.speed(t) * st.eta * t - 1.0).abs() < 1e-8);
    }

    #[test]
    fn direction_is_constant() {
        let st = state(Vec3::new(1.0, 2.0, -2.0));
        for t in [0.1, 10.0, 1e5] {
            let y = st.momentum(t) / st.momentum(t).norm();
            assert!((y - st.k0 / 3.0).norm() < 1e-15);
            assert!(st.momentum(t).norm() > st.momentum(t * 2.0).norm());
        }
    }

    #[test]
    fn initial_velocity_is_k0_over_m() {
        let st = MeanFieldState::new(
            &PhysParams::new(2.0, 0.5).unwrap(),
            Vec3::ZERO,
            Vec3::new(0.3, 0.0, 0.4),
        )
        .unwrap();
        let h = 1e-8;
        let v = (st.position(h) - st.position(0.0)) / h;
        let expected = st.k0 / 2.0;
        assert!((v - expected).norm() <= 1e-6 * expected.norm());
    }

    #[test]
    fn logarithmic_divergence() {
        let st = state(Vec3::E1);
        let t = 1e6;
        let gap = (st.position(t) - st.x0).norm() - (2.0 / PI) * (PI * t / 2.0).ln();
        assert!(gap.abs() <= 1e-5, "{gap}");
    }

    #[test]
    fn ode_residuals() {
        let st = state(Vec3::E1);
        assert!(st.residual_ode(1.0, 1e-4) <= 1e-6);
        assert!(st.residual_ode(0.0, 1e-4) <= 1e-6);
        let ratio = st.residual_ode(1.0, 1e-2) / st.residual_ode(1.0, 5e-3);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(-1, 6, 8);
        assert_eq!(g.len(), 57);
        assert!((g[0] - 0.1).abs() < 1e-16);
        assert!((g[56] - 1e6).abs() < 1e-6);
    }

    #[test]
    fn zero_momentum_rejected() {
        let p = PhysParams::new(1.0, 1.0).unwrap();
        assert!(MeanFieldState::new(&p, Vec3::ZERO, Vec3::ZERO).is_err());
    }
}
