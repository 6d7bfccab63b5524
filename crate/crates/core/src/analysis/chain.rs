use serde::Serialize;

use super::{derive_seed, par_blocks, StatReport, AXES};
use crate::constants::{self, RateFunction};
use crate::error::{Error, Result};
use crate::kernel::{self, PhysParams};
use crate::rng::RandomStream;
use crate::simulate::JumpSource;
use crate::stats;
use crate::sum::NeumaierSum;
use crate::vec3::Vec3;

const CHAINS_PER_BLOCK: u64 = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct CltConfig {
    pub chain_length: usize,
    pub chains: u64,
    pub start: Vec3,
    /// Fractions of the chain at which partial sums are recorded; the last
    /// entry must be 1.
    pub s_grid: Vec<f64>,
    /// `|Y'_j| ≥ threshold·√n` counts as a large increment.
    pub lindeberg_threshold: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        CltConfig {
            chain_length: 10_000,
            chains: 10_000,
            start: Vec3::E1,
            s_grid: vec![0.25, 0.5, 0.75, 1.0],
            lindeberg_threshold: 0.1,
        }
    }
}

struct CltChain {
    partials: Vec<Vec3>,
    large: u64,
}

fn clt_chain(
    a: f64,
    beta: f64,
    cfg: &CltConfig,
    checkpoints: &[usize],
    stream: &mut RandomStream,
) -> Result<CltChain> {
    let scale = (cfg.chain_length as f64).sqrt();
    let threshold = cfg.lindeberg_threshold * scale;
    let mut y = cfg.start.normalized().ok_or(Error::ZeroMomentum)?;
    let mut prev = y;
    let mut sum = Vec3::ZERO;
    let mut large = 0;
    let mut partials = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for j in 0..cfg.chain_length {
        let clock = stream.clock();
        sum += clock * y;
        if j > 0 && ((clock + beta) * y - beta * prev).norm() >= threshold {
            large += 1;
        }
        while next < checkpoints.len() && checkpoints[next] == j + 1 {
            partials.push(sum / scale);
            next += 1;
        }
        let u = stream.direction();
        prev = y;
        y = kernel::contract_direction(a, y, u)
            .ok_or(Error::ZeroMomentum)?
            .1;
    }
    Ok(CltChain { partials, large })
}

/// Normalized skeleton sums `S_n = n^{−1/2} Σ_{j<n} λ_j Y_j` over independent
/// chains: covariance against `2/(3(1 − b))·I`, Gaussian shape, and
/// uncorrelated increments along the chain.
pub fn check_clt(p: &PhysParams, cfg: &CltConfig, seed: u64) -> Result<StatReport> {
    if cfg.chains < 2 || cfg.chain_length < 2 {
        return Err(Error::InsufficientData(
            "need at least two chains of length two".into(),
        ));
    }
    if cfg.s_grid.last() != Some(&1.0) || cfg.s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("s grid must increase and end at 1".into()));
    }
    let consts = constants::closed_form_constants(p)?;
    let target = consts.skeleton_variance();
    let beta = consts.b / (1.0 - consts.b);
    let n = cfg.chain_length;
    let checkpoints: Vec<usize> = cfg
        .s_grid
        .iter()
        .map(|s| ((s * n as f64).round() as usize).clamp(1, n))
        .collect();
    let blocks = par_blocks(seed, cfg.chains, CHAINS_PER_BLOCK, |s, count| {
        (0..count)
            .map(|_| clt_chain(p.a, beta, cfg, &checkpoints, s))
            .collect::<Result<Vec<_>>>()
    })?;
    let chains: Vec<CltChain> = blocks.into_iter().flatten().collect();
    let finals: Vec<Vec3> = chains.iter().map(|c| *c.partials.last().unwrap()).collect();
    let (mean, cov) = stats::mean_and_covariance(&finals);

    let mut r = StatReport::new("clt", Some(seed), cfg.chains * n as u64);
    for i in 0..3 {
        r.within(
            &format!("variance {} relative to target", AXES[i]),
            cov[i][i] / target,
            1.0,
            0.05,
        );
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        r.within(
            &format!("covariance {}{} relative to target", AXES[i], AXES[j]),
            cov[i][j] / target,
            0.0,
            0.05,
        );
    }
    for i in 0..3 {
        let ks = stats::ks_normal_fitted(&stats::component(&finals, i));
        r.gate(
            &format!("KS normality {}", AXES[i]),
            ks.statistic,
            0.0,
            ks.critical(0.01),
            ks.passes(0.01),
        );
    }
    let increments: Vec<Vec<Vec3>> = (0..checkpoints.len())
        .map(|k| {
            chains
                .iter()
                .map(|c| {
                    if k == 0 {
                        c.partials[0]
                    } else {
                        c.partials[k] - c.partials[k - 1]
                    }
                })
                .collect()
        })
        .collect();
    let mut max_corr: f64 = 0.0;
    for k in 0..increments.len() {
        for l in k + 1..increments.len() {
            for i in 0..3 {
                let rho = stats::correlation(
                    &stats::component(&increments[k], i),
                    &stats::component(&increments[l], i),
                );
                max_corr = max_corr.max(rho.abs());
            }
        }
    }
    r.within("max |correlation| between increments", max_corr, 0.0, 0.05);

    let exact_mean = ((1.0 - consts.b.powi(n as i32)) / ((1.0 - consts.b) * (n as f64).sqrt()))
        * cfg.start.normalized().unwrap_or(Vec3::ZERO);
    for i in 0..3 {
        let se = (cov[i][i] / cfg.chains as f64).sqrt();
        r.note(
            &format!("mean {} within 3 se of exact finite-n mean", AXES[i]),
            mean[i],
            exact_mean[i],
            3.0 * se,
            (mean[i] - exact_mean[i]).abs() <= 3.0 * se,
        );
    }
    let large: u64 = chains.iter().map(|c| c.large).sum();
    let fraction = large as f64 / (cfg.chains as f64 * (n - 1) as f64);
    r.note(
        "fraction of large martingale increments",
        fraction,
        0.0,
        1e-3,
        fraction < 1e-3,
    );
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpConfig {
    pub steps: usize,
    pub chains: u64,
    /// Tails are probed at `log θ ± offset`.
    pub offset: f64,
    pub min_events: u64,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig {
            steps: 50,
            chains: 100_000,
            offset: 0.3,
            min_events: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailEstimator {
    Direct,
    /// Importance sampling under the exponentially tilted step law
    /// `∝ |v|^ξ`.
    Tilted {
        xi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub x: f64,
    pub upper: bool,
    pub probability: f64,
    /// `−(1/n)·log P`.
    pub rate: f64,
    /// Chains that landed in the tail.
    pub events: u64,
    pub estimator: TailEstimator,
}

fn in_tail(sum: f64, bound: f64, upper: bool) -> bool {
    if upper {
        sum >= bound
    } else {
        sum <= bound
    }
}

/// Plain Monte Carlo estimate of `P(log R_n − log R_0 ≥ xn)` (upper) or
/// `≤ xn` (lower) from `chains` chains started at `Y_0 = e₁`.
pub fn direct_tail(
    p: &PhysParams,
    steps: usize,
    x: f64,
    upper: bool,
    chains: u64,
    seed: u64,
) -> Result<TailEstimate> {
    let n = steps as f64;
    let bound = x * n;
    let a = p.a;
    let blocks = par_blocks(seed, chains, CHAINS_PER_BLOCK * 10, |s, count| {
        let mut hits = 0u64;
        for _ in 0..count {
            let mut y = Vec3::E1;
            let mut sum = NeumaierSum::default();
            for _ in 0..steps {
                let (r, y2) =
                    kernel::contract_direction(a, y, s.unit_vector()).ok_or(Error::ZeroMomentum)?;
                sum.add(r.ln());
                y = y2;
            }
            hits += in_tail(sum.value(), bound, upper) as u64;
        }
        Ok(hits)
    })?;
    let events: u64 = blocks.iter().sum();
    let probability = events as f64 / chains as f64;
    Ok(TailEstimate {
        x,
        upper,
        probability,
        rate: -probability.ln() / n,
        events,
        estimator: TailEstimator::Direct,
    })
}

/// Orthonormal `(e1, e2)` completing the unit vector `y` to a frame.
fn frame(y: Vec3) -> (Vec3, Vec3) {
    let sign = 1f64.copysign(y.z);
    let a = -1.0 / (sign + y.z);
    let b = y.x * y.y * a;
    (
        Vec3::new(1.0 + sign * y.x * y.x * a, sign * b, -sign * y.x),
        Vec3::new(b, sign + y.y * y.y * a, -y.y),
    )
}

/// Draws `U` from the uniform law reweighted by `|a·y + (1 − a)U|^ξ`.
///
/// With `t = U·y`, `|v|² = A + Bt` and `t` is uniform, so under the
/// reweighting `|v|^{2s}` (`s = ξ/2 + 1`) is uniform between
/// `|1 − 2a|^{2s}` and 1 (`log|v|` is uniform when `s = 0`), and the azimuth
/// stays uniform. Requires `s > 0` at `a = 1/2`.
fn tilted_direction(a: f64, xi: f64, y: Vec3, s: &mut RandomStream) -> Vec3 {
    let shape = xi / 2.0 + 1.0;
    let big_a = a * a + (1.0 - a) * (1.0 - a);
    let big_b = 2.0 * a * (1.0 - a);
    let c = (1.0 - 2.0 * a).abs();
    let w = s.uniform();
    let r2 = if shape.abs() < 1e-12 {
        c.powf(2.0 * (1.0 - w))
    } else {
        let floor = c.powf(2.0 * shape);
        (floor + w * (1.0 - floor)).powf(1.0 / shape)
    };
    let t = ((r2 - big_a) / big_b).clamp(-1.0, 1.0);
    let phi = 2.0 * std::f64::consts::PI * s.uniform();
    let (e1, e2) = frame(y);
    let rho = (1.0 - t * t).max(0.0).sqrt();
    t * y + (rho * phi.cos()) * e1 + (rho * phi.sin()) * e2
}

/// Importance-sampling estimate of the same tail probability.
///
/// Steps are drawn from the law tilted by `|v|^ξ` with `Λ'(ξ) = x`, which
/// makes `x` typical. The normalizer `E|v|^ξ` is estimated by plain Monte
/// Carlo from an independent stream, so only the choice of `ξ` uses the
/// closed-form `Λ`.
pub fn tilted_tail(
    p: &PhysParams,
    steps: usize,
    x: f64,
    upper: bool,
    chains: u64,
    seed: u64,
) -> Result<TailEstimate> {
    let n = steps as f64;
    let bound = x * n;
    let a = p.a;
    let xi = RateFunction::new(a)?
        .maximizer(x)?
        .filter(|xi| *xi > -2.0 || a != 0.5)
        .ok_or(Error::InsufficientTail {
            x,
            events: 0,
            required: 1,
        })?;
    let blocks = par_blocks(
        derive_seed(seed, 1),
        chains,
        CHAINS_PER_BLOCK * 10,
        |s, count| {
            let mut weights = NeumaierSum::default();
            let mut hits = 0u64;
            for _ in 0..count {
                let mut y = Vec3::E1;
                let mut sum = NeumaierSum::default();
                for _ in 0..steps {
                    let u = tilted_direction(a, xi, y, s);
                    let (r, y2) = kernel::contract_direction(a, y, u).ok_or(Error::ZeroMomentum)?;
                    sum.add(r.ln());
                    y = y2;
                }
                if in_tail(sum.value(), bound, upper) {
                    hits += 1;
                    weights.add((-xi * sum.value()).exp());
                }
            }
            Ok((weights.value(), hits))
        },
    )?;
    let weight_sum: f64 = blocks.iter().map(|t| t.0).sum();
    let events: u64 = blocks.iter().map(|t| t.1).sum();

    let draws = 10 * chains;
    let moments = par_blocks(
        derive_seed(seed, 2),
        draws,
        CHAINS_PER_BLOCK * 100,
        |s, count| {
            let mut m = NeumaierSum::default();
            for _ in 0..count {
                let (r, _) = kernel::contract_direction(a, Vec3::E1, s.unit_vector())
                    .ok_or(Error::ZeroMomentum)?;
                m.add(r.powf(xi));
            }
            Ok(m.value())
        },
    )?;
    let lambda_hat = (moments.iter().sum::<f64>() / draws as f64).ln();
    let log_p = (weight_sum / chains as f64).ln() + n * lambda_hat;
    Ok(TailEstimate {
        x,
        upper,
        probability: log_p.exp(),
        rate: -log_p / n,
        events,
        estimator: TailEstimator::Tilted { xi },
    })
}

/// Direct estimate when it sees at least `min_events` chains in the tail,
/// otherwise the tilted estimate, which must in turn reach `min_events`.
pub fn estimate_tail(
    p: &PhysParams,
    steps: usize,
    x: f64,
    upper: bool,
    chains: u64,
    min_events: u64,
    seed: u64,
) -> Result<TailEstimate> {
    let direct = direct_tail(p, steps, x, upper, chains, derive_seed(seed, 1))?;
    if direct.events >= min_events {
        return Ok(direct);
    }
    let insufficient = |events| Error::InsufficientTail {
        x,
        events,
        required: min_events,
    };
    let tilted = match tilted_tail(p, steps, x, upper, chains, derive_seed(seed, 2)) {
        Err(Error::InsufficientTail { .. }) => return Err(insufficient(direct.events)),
        other => other?,
    };
    if tilted.events < min_events {
        return Err(insufficient(tilted.events));
    }
    Ok(tilted)
}

/// Empirical large-deviation rates of `log R_n − log R_0` at
/// `log θ ± offset` against `I(x)`.
pub fn check_ldp_tails(p: &PhysParams, cfg: &LdpConfig, seed: u64) -> Result<StatReport> {
    let log_theta = constants::log_theta_closed(p.a)?;
    let rf = RateFunction::new(p.a)?;
    let mut r = StatReport::new("ldp", Some(seed), cfg.chains * cfg.steps as u64);
    for (label, upper, tag) in [("upper", true, 1), ("lower", false, 2)] {
        let x = if upper {
            log_theta + cfg.offset
        } else {
            log_theta - cfg.offset
        };
        let est = estimate_tail(
            p,
            cfg.steps,
            x,
            upper,
            cfg.chains,
            cfg.min_events,
            derive_seed(seed, tag),
        )?;
        r.within(
            &format!("{label} tail rate at x = {x:.4}"),
            est.rate,
            rf.rate(x)?,
            0.15,
        );
        let xi = match est.estimator {
            TailEstimator::Direct => 0.0,
            TailEstimator::Tilted { xi } => xi,
        };
        r.note(
            &format!("{label} tail events"),
            est.events as f64,
            cfg.min_events as f64,
            0.0,
            true,
        );
        r.note(
            &format!("{label} tail tilt (0 = direct)"),
            xi,
            xi,
            0.0,
            true,
        );
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn median_tail_has_zero_rate() {
        let p = unit();
        for upper in [true, false] {
            let est = estimate_tail(&p, 50, -0.5, upper, 4000, 10, 3).unwrap();
            assert_eq!(est.estimator, TailEstimator::Direct);
            assert!((est.probability - 0.5).abs() < 0.05, "{est:?}");
            assert!(est.rate < 0.02);
        }
    }

    #[test]
    fn tilted_and_direct_estimates_agree() {
        // moderately rare upper tail that both estimators resolve
        for (p, offset) in [(unit(), 0.15), (PhysParams::new(1.0, 3.0).unwrap(), 0.05)] {
            let x = constants::log_theta_closed(p.a).unwrap() + offset;
            let direct = direct_tail(&p, 20, x, true, 200_000, 5).unwrap();
            let tilted = tilted_tail(&p, 20, x, true, 20_000, 6).unwrap();
            assert!(direct.events > 500, "{direct:?}");
            assert!(
                (direct.probability.ln() - tilted.probability.ln()).abs() < 0.1,
                "{direct:?} vs {tilted:?}"
            );
        }
    }

    #[test]
    fn tilted_lower_tail_away_from_half() {
        let p = PhysParams::new(1.0, 3.0).unwrap();
        let x = constants::log_theta_closed(p.a).unwrap() - 0.1;
        let direct = direct_tail(&p, 20, x, false, 200_000, 7).unwrap();
        let tilted = tilted_tail(&p, 20, x, false, 20_000, 8).unwrap();
        assert!(matches!(tilted.estimator, TailEstimator::Tilted { xi } if xi < 0.0));
        assert!((direct.probability.ln() - tilted.probability.ln()).abs() < 0.1);
    }

    #[test]
    fn tilted_lower_tail_at_half() {
        // -2 log R_n is Gamma(n, 1) at equal masses; P(Gamma(20, 1) >= 28)
        // = 0.04781 by the regularized incomplete gamma function
        let p = unit();
        let tilted = tilted_tail(&p, 20, -0.7, false, 20_000, 9).unwrap();
        assert!(
            (tilted.probability / 0.04781 - 1.0).abs() < 0.05,
            "{tilted:?}"
        );
    }

    #[test]
    fn frame_is_orthonormal() {
        let mut s = RandomStream::new(1);
        for y in [Vec3::E3, -Vec3::E3, Vec3::E1]
            .into_iter()
            .chain((0..100).map(|_| s.unit_vector()))
        {
            let (e1, e2) = frame(y);
            for (u, v) in [(y, e1), (y, e2), (e1, e2)] {
                assert!(u.dot(v).abs() < 1e-14);
            }
            assert!((e1.norm() - 1.0).abs() < 1e-14 && (e2.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn untilted_sampler_is_uniform() {
        // ξ = 0 must reproduce the uniform law of t = U·y
        let mut s = RandomStream::new(2);
        let y = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        let t: Vec<f64> = (0..20_000)
            .map(|_| tilted_direction(0.3, 0.0, y, &mut s).dot(y))
            .collect();
        let ks = stats::ks_one_sample(&t, |x| (x + 1.0) / 2.0);
        assert!(ks.passes(0.01), "{ks:?}");
    }

    #[test]
    fn small_clt_run_is_reproducible() {
        let cfg = CltConfig {
            chain_length: 500,
            chains: 600,
            ..CltConfig::default()
        };
        let a = check_clt(&unit(), &cfg, 2).unwrap();
        let b = check_clt(&unit(), &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clauses.len(), 14);
    }
}
