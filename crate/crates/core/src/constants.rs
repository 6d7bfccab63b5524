//! Limit constants of the momentum chain.
//!
//! Every constant is a uniform average over the unit sphere of a function of
//! `|a·y + (1 − a)·z|`. By azimuthal symmetry these reduce to one-dimensional
//! integrals over `t = y·z ∈ [−1, 1]` with density `1/2`, using
//! `|a·y + (1 − a)·z|² = a² + (1 − a)² + 2a(1 − a)t`. The closed forms are
//! primary; the `*_by_quadrature` functions evaluate the reduced integrals
//! numerically and serve as independent oracles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::quadrature;

/// Below this, `|1 − 2a|` (resp. `(ξ + 2)·ln|1 − 2a|`) is treated as zero in
/// the removable singularities.
const SINGULAR_CUTOFF: f64 = 1e-8;
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub a: f64,
    /// Directional persistence `E(Y_{n+1}·Y_n)`.
    pub b: f64,
    /// `E log|a·y + (1 − a)·U|`, the mean log contraction per jump.
    pub log_theta: f64,
    pub theta: f64,
    /// Variance rate of the limiting Brownian motion of `X(θ^{−ns})/√n`.
    pub sigma2: f64,
}

impl Constants {
    /// Covariance rate `2/(3(1 − b))` of `n^{−1/2} Σ λ_j Y_j`.
    pub fn skeleton_variance(&self) -> f64 {
        2.0 / (3.0 * (1.0 - self.b))
    }
}

fn check_ratio(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mass ratio a must lie in (0, 1), got {a}"
        )))
    }
}

/// Closed form of `b`.
pub fn b_closed(a: f64) -> Result<f64> {
    check_ratio(a)?;
    let c = (1.0 - 2.0 * a).abs();
    Ok(0.5 * (c * (2.0 * a * a + a - 1.0) - 3.0 * a + 1.0) / (3.0 * (a - 1.0) * a * a))
}

/// Closed form of `log θ`; the `(1 − 2a)² log|1 − 2a|` term is continued by
/// its limit `0` at `a = 1/2`.
pub fn log_theta_closed(a: f64) -> Result<f64> {
    check_ratio(a)?;
    let d = 1.0 - 2.0 * a;
    let singular = if d.abs() < SINGULAR_CUTOFF {
        0.0
    } else {
        d * d * d.abs().ln() / (2.0 * (a - 1.0) * a)
    };
    Ok(0.5 * (singular - 1.0))
}

pub fn closed_form_constants(p: &PhysParams) -> Result<Constants> {
    let (m, big_m) = (p.tracer_mass, p.atom_mass);
    if !(m > 0.0 && big_m > 0.0) {
        return Err(Error::Domain(format!(
            "masses must be positive, got m = {m}, M = {big_m}"
        )));
    }
    let a = p.a;
    let b = b_closed(a)?;
    let log_theta = log_theta_closed(a)?;
    let sigma2 = 2.0 / (3.0 * (1.0 - b)) * (m + big_m).powi(4)
        / (16.0 * PI * PI * m.powi(4) * big_m.powi(4));
    Ok(Constants {
        a,
        b,
        log_theta,
        theta: log_theta.exp(),
        sigma2,
    })
}

/// `|a·y + (1 − a)·z|²` at `t = −1 + 2w²`, written without cancellation.
fn shell_radius_sq(a: f64, w: f64) -> f64 {
    let d = 1.0 - 2.0 * a;
    d * d + 4.0 * a * (1.0 - a) * w * w
}

/// `(1/2)∫_{−1}^{1} g(t) dt` after the substitution `t = −1 + 2w²`, which
/// removes the endpoint singularity at `t = −1` when `a = 1/2`.
fn sphere_average<F: Fn(f64) -> f64>(g: F) -> Result<f64> {
    quadrature::integrate(|w| 2.0 * w * g(w), 0.0, 1.0, QUAD_TOL)
}

/// `b` as the `y`-component of the mean unit direction after one jump.
pub fn b_by_quadrature(a: f64) -> Result<f64> {
    check_ratio(a)?;
    sphere_average(|w| {
        let along = (2.0 * a - 1.0) + 2.0 * (1.0 - a) * w * w;
        along / shell_radius_sq(a, w).sqrt()
    })
}

/// `log θ` as the sphere average of `log|a·y + (1 − a)·z|`.
pub fn logtheta_by_quadrature(a: f64) -> Result<f64> {
    check_ratio(a)?;
    sphere_average(|w| 0.5 * shell_radius_sq(a, w).ln())
}

/// `E((Y_{n+1}·Y_n)²)`, the parallel second moment of the new direction.
///
/// With `d = 2a − 1` and `s = |a·y + (1 − a)·z|²`, `Y·y = (s + d)/(2a√s)`
/// and the average reduces to `∫_{d²}^{1} (s + d)²/s ds / (16 a³(1 − a))`.
pub fn parallel_second_moment(a: f64) -> Result<f64> {
    check_ratio(a)?;
    let d = 2.0 * a - 1.0;
    let d2 = d * d;
    let log_term = if d.abs() < SINGULAR_CUTOFF {
        0.0
    } else {
        d2 * d2.ln()
    };
    let integral = 0.5 * (1.0 - d2 * d2) + 2.0 * d * (1.0 - d2) - log_term;
    Ok(integral / (16.0 * a.powi(3) * (1.0 - a)))
}

pub fn parallel_second_moment_by_quadrature(a: f64) -> Result<f64> {
    check_ratio(a)?;
    sphere_average(|w| {
        let along = (2.0 * a - 1.0) + 2.0 * (1.0 - a) * w * w;
        along * along / shell_radius_sq(a, w)
    })
}

/// `Λ(ξ) = log E|a·y + (1 − a)·U|^ξ` by closed form.
pub fn lambda_mgf(a: f64, xi: f64) -> Result<f64> {
    RateFunction::new(a)?.lambda(xi)
}

/// `Λ(ξ)` by quadrature of the reduced integral (oracle for [`lambda_mgf`]).
pub fn lambda_by_quadrature(a: f64, xi: f64) -> Result<f64> {
    let rf = RateFunction::new(a)?;
    rf.check_xi(xi)?;
    let mean = sphere_average(|w| shell_radius_sq(a, w).powf(0.5 * xi))?;
    Ok(mean.ln())
}

/// Legendre transform `I(x) = sup_ξ (xξ − Λ(ξ))`.
pub fn rate_function(a: f64, x: f64) -> Result<f64> {
    RateFunction::new(a)?.rate(x)
}

/// Log-moment generating function of the per-jump log contraction
/// `D = log|a·y + (1 − a)·U|`, and its Legendre transform.
///
/// `D ∈ [log|1 − 2a|, 0]`, so `Λ` is finite on all of ℝ when `a ≠ 1/2`. At
/// `a = 1/2` the supported domain is `ξ > −1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    a: f64,
    /// `|1 − 2a|`.
    c: f64,
    /// `ln|1 − 2a|` (`−∞` at `a = 1/2`).
    log_c: f64,
    /// `2a(1 − a)`.
    two_a_b: f64,
}

impl RateFunction {
    pub fn new(a: f64) -> Result<Self> {
        check_ratio(a)?;
        let c = (1.0 - 2.0 * a).abs();
        Ok(RateFunction {
            a,
            c,
            log_c: c.ln(),
            two_a_b: 2.0 * a * (1.0 - a),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    fn is_half(&self) -> bool {
        self.c == 0.0
    }

    /// Infimum of the supported domain of `Λ` (exclusive).
    pub fn xi_min(&self) -> f64 {
        if self.is_half() {
            -1.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn check_xi(&self, xi: f64) -> Result<()> {
        if xi.is_nan() || xi <= self.xi_min() || xi == f64::INFINITY {
            return Err(Error::OutOfRange {
                what: "xi",
                value: xi,
                range: format!("({}, inf)", self.xi_min()),
            });
        }
        Ok(())
    }

    pub fn lambda(&self, xi: f64) -> Result<f64> {
        self.check_xi(xi)?;
        if xi == 0.0 {
            return Ok(0.0);
        }
        let s = xi + 2.0;
        if self.is_half() {
            return Ok(-(self.two_a_b * s).ln());
        }
        let u = s * self.log_c;
        // log((1 − c^s)/s)
        let log_ratio = if u.abs() < SINGULAR_CUTOFF {
            (-self.log_c * (1.0 + u / 2.0 + u * u / 6.0)).ln()
        } else if u < 0.0 {
            (-u.exp_m1()).ln() - s.ln()
        } else {
            u + (-(-u).exp_m1()).ln() - (-s).ln()
        };
        Ok(log_ratio - self.two_a_b.ln())
    }

    pub fn lambda_prime(&self, xi: f64) -> Result<f64> {
        self.check_xi(xi)?;
        let s = xi + 2.0;
        if self.is_half() {
            return Ok(-1.0 / s);
        }
        let l = self.log_c;
        let u = s * l;
        Ok(if u.abs() < 1e-3 {
            // (u/(1 − e^{−u}) − 1)/s = l/2 + s l²/12 − s³ l⁴/720 + …
            l / 2.0 + s * l * l / 12.0 - s.powi(3) * l.powi(4) / 720.0
        } else if u < 0.0 {
            l * u.exp() / u.exp_m1() - 1.0 / s
        } else {
            l / (-(-u).exp_m1()) - 1.0 / s
        })
    }

    /// Closure of the range of `Λ'` on the supported domain.
    pub fn slope_range(&self) -> (f64, f64) {
        if self.is_half() {
            (-1.0, 0.0)
        } else {
            (self.log_c, 0.0)
        }
    }

    /// `I(x)`. Outside the closure of the slope range this is `+∞` and is
    /// reported as [`Error::RateOutOfRange`]; at an endpoint reached only as
    /// `ξ → ±∞` the value `+∞` is returned.
    pub fn rate(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.slope_range();
        if !(x >= lo && x <= hi) {
            return Err(Error::RateOutOfRange { x, lo, hi });
        }
        if x == hi {
            return Ok(f64::INFINITY);
        }
        if x == lo {
            return if self.is_half() {
                let xi = self.xi_min();
                Ok((x * xi - self.lambda_at_boundary()).max(0.0))
            } else {
                Ok(f64::INFINITY)
            };
        }
        match self.maximizer(x)? {
            Some(xi) => Ok((x * xi - self.lambda(xi)?).max(0.0)),
            None => Ok(f64::INFINITY),
        }
    }

    /// `I(x)` with `+∞` in place of the out-of-range error.
    pub fn rate_or_infinity(&self, x: f64) -> f64 {
        self.rate(x).unwrap_or(f64::INFINITY)
    }

    /// `Λ` continued to the excluded boundary `ξ = −1` at `a = 1/2`.
    fn lambda_at_boundary(&self) -> f64 {
        -(self.two_a_b * (self.xi_min() + 2.0)).ln()
    }

    /// Solves `Λ'(ξ) = x` by bisection on the increasing `Λ'`. `None` when
    /// the root escapes any representable bracket.
    pub fn maximizer(&self, x: f64) -> Result<Option<f64>> {
        const BRACKET_CAP: f64 = 1e18;
        let mut lo;
        let mut hi;
        if x >= self.lambda_prime(0.0)? {
            lo = 0.0;
            hi = 1.0;
            while self.lambda_prime(hi)? < x {
                lo = hi;
                hi *= 2.0;
                if hi > BRACKET_CAP {
                    return Ok(None);
                }
            }
        } else {
            hi = 0.0;
            if self.is_half() {
                lo = self.xi_min();
            } else {
                lo = -1.0;
                while self.lambda_prime(lo)? > x {
                    hi = lo;
                    lo *= 2.0;
                    if lo < -BRACKET_CAP {
                        return Ok(None);
                    }
                }
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * mid.abs().max(1.0) {
                break;
            }
            // mid > xi_min always, so this never fails
            if self.lambda_prime(mid)? < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let xi = 0.5 * (lo + hi);
        Ok(Some(if xi <= self.xi_min() {
            // boundary bracket at a = 1/2
            hi
        } else {
            xi
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

    #[test]
    fn equal_mass_constants() {
        let p = PhysParams::new(1.0, 1.0).unwrap();
        let c = closed_form_constants(&p).unwrap();
        assert_eq!(c.log_theta, -0.5);
        assert!((c.theta - (-0.5f64).exp()).abs() < 1e-16);
        assert!((c.b - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.sigma2 - 2.0 / (PI * PI)).abs() < 1e-15);
        assert!((c.skeleton_variance() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_agree_with_quadrature_on_grid() {
        for a in GRID {
            let db = b_by_quadrature(a).unwrap() - b_closed(a).unwrap();
            let dl = logtheta_by_quadrature(a).unwrap() - log_theta_closed(a).unwrap();
            assert!(db.abs() <= 1e-8, "a = {a}: Δb = {db}");
            assert!(dl.abs() <= 1e-8, "a = {a}: Δlogθ = {dl}");
        }
    }

    #[test]
    fn quadrature_hits_exact_half_point_values() {
        assert!((b_by_quadrature(0.5).unwrap() - 2.0 / 3.0).abs() < 1e-10);
        assert!((logtheta_by_quadrature(0.5).unwrap() + 0.5).abs() < 1e-10);
    }

    #[test]
    fn light_tracer_barely_contracts() {
        let l = log_theta_closed(1e-6).unwrap();
        assert!(l < 0.0 && l > -1e-5, "{l}");
    }

    #[test]
    fn constants_stay_in_range_and_continuous_at_half() {
        let mut a = 0.01;
        while a < 0.995 {
            let b = b_closed(a).unwrap();
            let l = log_theta_closed(a).unwrap();
            assert!(b > 0.0 && b < 1.0, "a = {a}, b = {b}");
            assert!(l < 0.0 && l.exp() < 1.0);
            a += 0.01;
        }
        let near = log_theta_closed(0.5 + 1e-7).unwrap();
        assert!((near + 0.5).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(b_closed(0.0).is_err());
        assert!(logtheta_by_quadrature(1.0).is_err());
        assert!(lambda_mgf(0.5, -1.0).is_err());
        assert!(lambda_mgf(0.5, -1.5).is_err());
        assert!(lambda_mgf(0.3, -5.0).is_ok());
        let p = PhysParams {
            tracer_mass: 0.0,
            ..PhysParams::new(1.0, 1.0).unwrap()
        };
        assert!(closed_form_constants(&p).is_err());
    }

    #[test]
    fn parallel_second_moment_matches_quadrature() {
        assert!((parallel_second_moment(0.5).unwrap() - 0.5).abs() < 1e-15);
        for a in GRID {
            let d = parallel_second_moment(a).unwrap()
                - parallel_second_moment_by_quadrature(a).unwrap();
            assert!(d.abs() < 1e-10, "a = {a}: {d}");
        }
    }

    #[test]
    fn lambda_examples() {
        for a in GRID {
            assert_eq!(lambda_mgf(a, 0.0).unwrap(), 0.0);
        }
        assert!((lambda_mgf(0.5, 2.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lambda_matches_quadrature() {
        for a in GRID {
            for xi in [-0.9, -0.5, 0.3, 1.0, 2.5, 6.0] {
                let d = lambda_mgf(a, xi).unwrap() - lambda_by_quadrature(a, xi).unwrap();
                assert!(d.abs() <= 1e-10, "a = {a}, xi = {xi}: {d}");
            }
        }
        // away from the half point, including through the ξ = −2 singularity
        for a in [0.2, 0.35, 0.8] {
            for xi in [-6.0, -3.0, -2.0 - 1e-9, -2.0, -2.0 + 1e-9, -1.5] {
                let d = lambda_mgf(a, xi).unwrap() - lambda_by_quadrature(a, xi).unwrap();
                assert!(d.abs() <= 1e-10, "a = {a}, xi = {xi}: {d}");
            }
        }
    }

    #[test]
    fn lambda_prime_matches_finite_differences() {
        let h = 1e-5;
        for a in [0.2, 0.5, 0.7] {
            let rf = RateFunction::new(a).unwrap();
            for xi in [-0.8, -0.2, 0.0, 0.4, 3.0, 20.0] {
                let fd = (rf.lambda(xi + h).unwrap() - rf.lambda(xi - h).unwrap()) / (2.0 * h);
                let an = rf.lambda_prime(xi).unwrap();
                assert!((fd - an).abs() < 1e-8, "a = {a}, xi = {xi}: {fd} vs {an}");
            }
        }
        // the series branch around ξ = −2
        let rf = RateFunction::new(0.3).unwrap();
        for xi in [-2.0 - 1e-4, -2.0, -2.0 + 1e-4, -1.99] {
            let fd = (rf.lambda(xi + h).unwrap() - rf.lambda(xi - h).unwrap()) / (2.0 * h);
            assert!((fd - rf.lambda_prime(xi).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn lambda_prime_at_zero_is_log_theta() {
        for a in GRID {
            let rf = RateFunction::new(a).unwrap();
            let d = rf.lambda_prime(0.0).unwrap() - log_theta_closed(a).unwrap();
            assert!(d.abs() < 1e-12, "a = {a}: {d}");
        }
    }

    #[test]
    fn lambda_is_convex() {
        for a in GRID {
            let rf = RateFunction::new(a).unwrap();
            let h = 0.05;
            let xs: Vec<f64> = (0..200).map(|i| -0.95 + h * i as f64).collect();
            for w in xs.windows(3) {
                let d2 = rf.lambda(w[0]).unwrap() - 2.0 * rf.lambda(w[1]).unwrap()
                    + rf.lambda(w[2]).unwrap();
                assert!(d2 >= -1e-9, "a = {a} at {}: {d2}", w[1]);
            }
        }
    }

    /// Grid-search Legendre transform, independent of the bisection.
    fn legendre_grid(a: f64, x: f64) -> f64 {
        let rf = RateFunction::new(a).unwrap();
        let lo = if rf.is_half() { -1.0 + 1e-9 } else { -60.0 };
        let n = 400_000;
        (0..=n)
            .map(|i| lo + (60.0 - lo) * i as f64 / n as f64)
            .map(|xi| x * xi - rf.lambda(xi).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn rate_function_half_point_examples() {
        let rf = RateFunction::new(0.5).unwrap();
        // analytic: I(x) = −2x − 1 − log(−2x) on (−1, 0)
        let analytic = |x: f64| -2.0 * x - 1.0 - (-2.0 * x).ln();
        assert!((rf.rate(-1.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-8);
        assert!(rf.rate(-0.5).unwrap() < 1e-8);
        for x in [-0.9, -0.8, -0.6, -0.3, -0.2, -0.05] {
            let i = rf.rate(x).unwrap();
            assert!((i - analytic(x)).abs() < 1e-9, "x = {x}: {i}");
            assert!((i - legendre_grid(0.5, x)).abs() < 1e-5);
        }
        assert!(matches!(rf.rate(-1.2), Err(Error::RateOutOfRange { .. })));
        assert_eq!(rf.rate_or_infinity(0.1), f64::INFINITY);
        assert_eq!(rf.rate(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rate_function_vanishes_only_at_log_theta() {
        for a in GRID {
            let rf = RateFunction::new(a).unwrap();
            let lt = log_theta_closed(a).unwrap();
            assert!(rf.rate(lt).unwrap() <= 1e-8);
            let (lo, _) = rf.slope_range();
            for x in [lt - 0.05, lt + 0.05, 0.5 * (lo + lt), 0.5 * lt] {
                if x > lo && x < 0.0 && (x - lt).abs() > 1e-3 {
                    let i = rf.rate(x).unwrap();
                    assert!(i > 0.0, "a = {a}, x = {x}");
                    assert!((i - legendre_grid(a, x)).abs() < 1e-4, "a = {a}, x = {x}");
                }
            }
        }
    }

    #[test]
    fn legendre_duality_recovers_slope() {
        let h = 1e-5;
        for a in [0.3, 0.5, 0.65] {
            let rf = RateFunction::new(a).unwrap();
            let lt = log_theta_closed(a).unwrap();
            for x in [lt - 0.1, lt + 0.1] {
                let xi = rf.maximizer(x).unwrap().unwrap();
                let slope = (rf.lambda(xi + h).unwrap() - rf.lambda(xi - h).unwrap()) / (2.0 * h);
                assert!((slope - x).abs() < 1e-8);
                let i = rf.rate(x).unwrap();
                assert!((i - (x * xi - rf.lambda(xi).unwrap())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_endpoints_away_from_half_are_infinite() {
        let rf = RateFunction::new(0.3).unwrap();
        let (lo, hi) = rf.slope_range();
        assert_eq!(rf.rate(lo).unwrap(), f64::INFINITY);
        assert_eq!(rf.rate(hi).unwrap(), f64::INFINITY);
        assert!(rf.rate(lo - 1e-3).is_err());
        assert!(rf.rate(lo + 1e-3).unwrap().is_finite());
    }
}
