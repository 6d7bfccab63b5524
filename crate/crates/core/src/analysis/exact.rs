use std::f64::consts::PI;

use super::{derive_seed, par_blocks, StatReport, AXES};
use crate::constants::{self, RateFunction};
use crate::error::Result;
use crate::kernel::{self, PhysParams};
use crate::simulate::{observe_path, DEFAULT_MAX_JUMPS};
use crate::stats;
use crate::vec3::Vec3;

const BLOCK: u64 = 50_000;

/// Closed forms against quadrature on the mass-ratio grid `0.1, …, 0.9`,
/// exact values at equal masses, and the cross-check at `p`.
pub fn check_constants(p: &PhysParams) -> Result<StatReport> {
    let mut r = StatReport::new("constants", None, 0);
    let mut max_db: f64 = 0.0;
    let mut max_dl: f64 = 0.0;
    for i in 1..=9 {
        let a = i as f64 / 10.0;
        max_db = max_db.max((constants::b_by_quadrature(a)? - constants::b_closed(a)?).abs());
        max_dl = max_dl
            .max((constants::logtheta_by_quadrature(a)? - constants::log_theta_closed(a)?).abs());
    }
    r.within("grid max |b closed - quadrature|", max_db, 0.0, 1e-8);
    r.within(
        "grid max |log theta closed - quadrature|",
        max_dl,
        0.0,
        1e-8,
    );

    let unit = PhysParams::new(1.0, 1.0)?;
    let c = constants::closed_form_constants(&unit)?;
    r.within("equal masses theta", c.theta, (-0.5f64).exp(), 1e-10);
    r.within("equal masses b", c.b, 2.0 / 3.0, 1e-10);
    r.within("equal masses sigma2", c.sigma2, 2.0 / (PI * PI), 1e-10);
    r.within("equal masses eta", unit.eta, PI / 2.0, 1e-10);

    let own = constants::closed_form_constants(p)?;
    r.within(
        "b at requested a",
        own.b,
        constants::b_by_quadrature(p.a)?,
        1e-8,
    );
    r.within(
        "log theta at requested a",
        own.log_theta,
        constants::logtheta_by_quadrature(p.a)?,
        1e-8,
    );
    Ok(r)
}

/// `Λ(0) = 0`, `Λ'(0) = log θ`, `I(log θ) = 0`, convexity, and the
/// equal-mass value `I(−1) = 1 − log 2`.
pub fn check_rate_function(p: &PhysParams) -> Result<StatReport> {
    let mut r = StatReport::new("rate-function", None, 0);
    let rf = RateFunction::new(p.a)?;
    let log_theta = constants::log_theta_closed(p.a)?;
    r.gate(
        "lambda(0)",
        rf.lambda(0.0)?,
        0.0,
        0.0,
        rf.lambda(0.0)? == 0.0,
    );
    let h = 1e-5;
    let fd = (rf.lambda(h)? - rf.lambda(-h)?) / (2.0 * h);
    r.within("lambda'(0) by central difference", fd, log_theta, 1e-8);
    r.within("I(log theta)", rf.rate(log_theta)?, 0.0, 1e-8);

    let lo = rf.xi_min().max(-10.0) + 0.05;
    let step = (10.0 - lo) / 400.0;
    let values: Vec<f64> = (0..=400)
        .map(|i| rf.lambda(lo + i as f64 * step))
        .collect::<Result<_>>()?;
    let min_second_difference = values
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min);
    r.gate(
        "min second difference of lambda",
        min_second_difference,
        0.0,
        1e-9,
        min_second_difference >= -1e-9,
    );
    let (slo, shi) = rf.slope_range();
    let positive = (1..20)
        .map(|i| slo + (shi - slo) * i as f64 / 20.0)
        .filter(|x| (x - log_theta).abs() > 1e-3)
        .all(|x| rf.rate_or_infinity(x) > 0.0);
    r.gate(
        "I > 0 away from log theta",
        positive as u8 as f64,
        1.0,
        0.0,
        positive,
    );

    let half = RateFunction::new(0.5)?;
    r.within(
        "equal masses I(-1)",
        half.rate(-1.0)?,
        1.0 - 2f64.ln(),
        1e-8,
    );
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Jumps drawn at random momenta for the shell and monotonicity checks.
    pub jumps: u64,
    /// Samples per arm of the scaling comparison.
    pub scaling_samples: u64,
    pub scale: f64,
    pub momentum: Vec3,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            jumps: 1_000_000,
            scaling_samples: 100_000,
            scale: 7.5,
            momentum: Vec3::new(0.1, 0.2, 0.3),
        }
    }
}

#[derive(Default)]
struct ShellStats {
    max_residual: f64,
    above: u64,
    below: u64,
}

/// Energy-shell membership and monotonicity of sampled jumps, plus the
/// scaling relation `law(k'/λ | λk) = law(k' | k)` by two-sample KS.
pub fn check_kernel(p: &PhysParams, cfg: &KernelConfig, seed: u64) -> Result<StatReport> {
    let mut r = StatReport::new("kernel", Some(seed), cfg.jumps + 2 * cfg.scaling_samples);
    let floor = (1.0 - 2.0 * p.a).abs();
    let blocks = par_blocks(derive_seed(seed, 1), cfg.jumps, BLOCK, |s, n| {
        let mut st = ShellStats::default();
        for _ in 0..n {
            let radius = 10f64.powf(6.0 * s.uniform() - 3.0);
            let k = radius * s.unit_vector();
            let k2 = kernel::sample_jump(p, k, s)?;
            let rel = kernel::energy_residual(p, k, k2).abs() / kernel::epsilon(p, k);
            st.max_residual = st.max_residual.max(rel);
            st.above += (k2.norm() > k.norm()) as u64;
            st.below += (k2.norm() < floor * k.norm() * (1.0 - 1e-15)) as u64;
        }
        Ok(st)
    })?;
    let max_residual = blocks.iter().map(|b| b.max_residual).fold(0.0, f64::max);
    let above: u64 = blocks.iter().map(|b| b.above).sum();
    let below: u64 = blocks.iter().map(|b| b.below).sum();
    r.within("max relative energy residual", max_residual, 0.0, 1e-12);
    r.gate("jumps with |k'| > |k|", above as f64, 0.0, 0.0, above == 0);
    r.gate(
        "jumps with |k'| < |1-2a||k|",
        below as f64,
        0.0,
        0.0,
        below == 0,
    );

    let k = cfg.momentum;
    let draw = |tag: u64, scale: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let kk = scale * k;
        let blocks = par_blocks(
            derive_seed(seed, tag),
            cfg.scaling_samples,
            BLOCK,
            |s, n| {
                let mut out = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    out.push(kernel::sample_jump(p, kk, s)?);
                }
                Ok(out)
            },
        )?;
        let jumps: Vec<Vec3> = blocks.into_iter().flatten().collect();
        let norms = jumps.iter().map(|j| j.norm() / scale).collect();
        let cosines = jumps
            .iter()
            .map(|j| j.dot(k) / (j.norm() * k.norm()))
            .collect();
        Ok((norms, cosines))
    };
    let (n1, c1) = draw(2, 1.0)?;
    let (n2, c2) = draw(3, cfg.scale)?;
    for (label, ks) in [
        ("scaling KS on |k'|", stats::ks_two_sample(&n1, &n2)),
        ("scaling KS on cos angle", stats::ks_two_sample(&c1, &c2)),
    ] {
        r.gate(label, ks.statistic, 0.0, ks.critical(0.01), ks.passes(0.01));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    pub momentum: Vec3,
    pub samples: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            momentum: Vec3::E1,
            samples: 1_000_000,
        }
    }
}

/// Monte Carlo `Σ(k)·E(k' − k)` against `−η|k|k`.
pub fn check_drift(p: &PhysParams, cfg: &DriftConfig, seed: u64) -> Result<StatReport> {
    let k = cfg.momentum;
    let mut r = StatReport::new("drift", Some(seed), cfg.samples);
    let blocks = par_blocks(seed, cfg.samples, BLOCK, |s, n| {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let d = kernel::sample_jump(p, k, s)? - k;
            for i in 0..3 {
                sum[i] += d[i];
                sq[i] += d[i] * d[i];
            }
        }
        Ok((sum, sq))
    })?;
    let n = cfg.samples as f64;
    let rate = kernel::scattering_rate(p, k);
    let target = -(p.eta * k.norm()) * k;
    let mut estimate = Vec3::ZERO;
    let mut se = [0.0; 3];
    for i in 0..3 {
        let s: f64 = blocks.iter().map(|b| b.0[i]).sum();
        let q: f64 = blocks.iter().map(|b| b.1[i]).sum();
        let mean = s / n;
        let var = (q - n * mean * mean) / (n - 1.0);
        let e = rate * mean;
        match i {
            0 => estimate.x = e,
            1 => estimate.y = e,
            _ => estimate.z = e,
        }
        se[i] = rate * (var / n).sqrt();
    }
    let rel = (estimate - target).norm() / target.norm();
    r.within("relative error of drift vector", rel, 0.0, 0.03);
    for i in 0..3 {
        r.within(
            &format!("drift {} within 3 se", AXES[i]),
            estimate[i],
            target[i],
            3.0 * se[i],
        );
    }
    Ok(r)
}

/// `exp(−(|x − cx|² + |k − ck|²)/(2w²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub x_center: Vec3,
    pub k_center: Vec3,
    pub width: f64,
}

impl GaussianBump {
    pub fn eval(&self, x: Vec3, k: Vec3) -> f64 {
        (-((x - self.x_center).norm_sq() + (k - self.k_center).norm_sq())
            / (2.0 * self.width * self.width))
            .exp()
    }

    pub fn grad_x(&self, x: Vec3, k: Vec3) -> Vec3 {
        (-self.eval(x, k) / (self.width * self.width)) * (x - self.x_center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub bump: GaussianBump,
    pub position: Vec3,
    pub momentum: Vec3,
    pub dt: f64,
    pub samples: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            bump: GaussianBump {
                x_center: Vec3::new(0.3, 0.1, 0.0),
                k_center: Vec3::new(0.6, 0.2, 0.1),
                width: 0.5,
            },
            position: Vec3::ZERO,
            momentum: Vec3::E1,
            dt: 1e-3,
            samples: 1_000_000,
        }
    }
}

/// Compares `(E f(X_dt, K_dt) − f(x, k))/dt` from exact paths with the
/// generator `(k/m)·∇ₓf + Σ(k)·E(f(x, k') − f(x, k))`.
///
/// The band is three combined standard errors plus the first-order bias
/// bound `dt/2·(|k|/(m w) + 2Σ(k))²`.
pub fn check_generator(p: &PhysParams, cfg: &GeneratorConfig, seed: u64) -> Result<StatReport> {
    let f = cfg.bump;
    let (x, k) = (cfg.position, cfg.momentum);
    let f0 = f.eval(x, k);
    let mut r = StatReport::new("generator", Some(seed), 2 * cfg.samples);

    let lhs = par_blocks(derive_seed(seed, 1), cfg.samples, BLOCK, |s, n| {
        let mut v = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let o = observe_path(p, x, k, &[cfg.dt], DEFAULT_MAX_JUMPS, s)?[0];
            v.push((f.eval(o.position, o.momentum()) - f0) / cfg.dt);
        }
        Ok(v)
    })?
    .concat();
    let jumps = par_blocks(derive_seed(seed, 2), cfg.samples, BLOCK, |s, n| {
        let mut v = Vec::with_capacity(n as usize);
        for _ in 0..n {
            v.push(f.eval(x, kernel::sample_jump(p, k, s)?) - f0);
        }
        Ok(v)
    })?
    .concat();

    let rate = kernel::scattering_rate(p, k);
    let duhamel = stats::mean(&lhs);
    let advection = (k / p.tracer_mass).dot(f.grad_x(x, k));
    let collision = rate * stats::mean(&jumps);
    let se_l = stats::standard_error(&lhs);
    let se_r = rate * stats::standard_error(&jumps);
    let bias = 0.5 * cfg.dt * (k.norm() / (p.tracer_mass * f.width) + 2.0 * rate).powi(2);
    let band = 3.0 * (se_l * se_l + se_r * se_r).sqrt() + bias;
    r.within(
        "difference quotient vs generator",
        duhamel,
        advection + collision,
        band,
    );
    r.note("advection term", advection, advection, 0.0, true);
    r.note("collision term", collision, collision, 3.0 * se_r, true);
    Ok(r)
}
