//! Adaptive Gauss–Legendre quadrature.
//!
//! Used as the independent oracle for every closed-form sphere average. The
//! integrand on each panel is evaluated with a fixed-order rule; a panel is
//! accepted when the rule agrees with the sum over its two halves.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 15;
const MAX_PANELS: usize = 20_000;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule on `[lo, hi]`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: &F, lo: f64, hi: f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum();
        s * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let prev = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * p - prev) / (x * x - 1.0);
    (p, d)
}

fn default_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(ORDER))
}

/// Integrates `f` over `[lo, hi]` to absolute tolerance `tol`.
///
/// Endpoints are never evaluated, so integrable endpoint singularities are
/// admissible (convergence is slower there).
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || tol <= 0.0 {
        return Err(Error::Domain(format!(
            "quadrature needs finite bounds and positive tolerance, got [{lo}, {hi}], tol {tol}"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let rule = default_rule();
    let width = hi - lo;
    let mut total = 0.0;
    let mut stack = vec![(lo, hi, rule.apply(&f, lo, hi))];
    let mut panels = 0usize;
    while let Some((a, b, coarse)) = stack.pop() {
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::ResourceLimit(format!(
                "quadrature on [{lo}, {hi}] did not converge within {MAX_PANELS} panels"
            )));
        }
        let mid = 0.5 * (a + b);
        let left = rule.apply(&f, a, mid);
        let right = rule.apply(&f, mid, b);
        let fine = left + right;
        if !fine.is_finite() {
            return Err(Error::Domain(format!(
                "integrand is not finite on [{a}, {b}]"
            )));
        }
        // Tolerance is distributed proportionally to panel width.
        let local_tol = tol * ((b - a) / width).abs();
        if (fine - coarse).abs() <= local_tol || (b - a).abs() < 1e-14 * width.abs() {
            total += fine;
        } else {
            stack.push((mid, b, right));
            stack.push((a, mid, left));
        }
    }
    Ok(total)
}
