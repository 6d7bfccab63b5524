use super::{StatReport, AXES};
use crate::constants;
use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::meanfield::{log_grid, MeanFieldState};
use crate::rng::RandomStream;
use crate::simulate::{
    observe_path, par_map_indexed, rescaled_time, run_ensemble, simulate_trajectory, Observation,
    DEFAULT_MAX_JUMPS,
};
use crate::stats;
use crate::vec3::Vec3;

/// Largest observation time accepted by the rescaled-time checks.
pub const TIME_CAP: f64 = 1e300;

fn observe_ensemble(
    p: &PhysParams,
    x0: Vec3,
    k0: Vec3,
    times: &[f64],
    count: u64,
    seed: u64,
) -> Result<Vec<Vec<Observation>>> {
    par_map_indexed(count, |i| {
        observe_path(
            p,
            x0,
            k0,
            times,
            DEFAULT_MAX_JUMPS,
            &mut RandomStream::substream(seed, i),
        )
    })
}

fn rescaled_times(n: usize, theta: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    s_grid
        .iter()
        .map(|&s| {
            let t = rescaled_time(n, theta, s);
            if t.is_finite() && t <= TIME_CAP {
                Ok(t)
            } else {
                Err(Error::ResourceLimit(format!(
                    "rescaled time theta^(-{n}*{s}) = {t:e} exceeds the cap {TIME_CAP:e}"
                )))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlnConfig {
    pub n: usize,
    pub s_max: f64,
    pub s_step: f64,
    pub trajectories: u64,
    pub momentum: Vec3,
}

impl Default for LlnConfig {
    fn default() -> Self {
        LlnConfig {
            n: 200,
            s_max: 1.0,
            s_step: 0.05,
            trajectories: 200,
            momentum: Vec3::E1,
        }
    }
}

/// Uniform law of large numbers for the jump count on the exponential time
/// scale: `sup_s |N(θ^{−ns})/n − s|` over a grid on `[0, s_max]`.
pub fn check_lln_jumpcount(p: &PhysParams, cfg: &LlnConfig, seed: u64) -> Result<StatReport> {
    let theta = constants::closed_form_constants(p)?.theta;
    let steps = (cfg.s_max / cfg.s_step).round() as usize;
    let s_grid: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.s_step).collect();
    let times = rescaled_times(cfg.n, theta, &s_grid)?;
    let paths = observe_ensemble(p, Vec3::ZERO, cfg.momentum, &times, cfg.trajectories, seed)?;
    let n = cfg.n as f64;
    let sups: Vec<f64> = paths
        .iter()
        .map(|obs| {
            obs.iter()
                .zip(&s_grid)
                .map(|(o, s)| (o.jumps as f64 / n - s).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut r = StatReport::new("lln", Some(seed), cfg.trajectories);
    let q90 = stats::quantile(&sups, 0.9);
    r.gate(
        "90th percentile of sup |N/n - s|",
        q90,
        0.0,
        0.2,
        q90 <= 0.2,
    );
    let last = s_grid.len() - 1;
    let ratios: Vec<f64> = paths
        .iter()
        .map(|o| o[last].jumps as f64 / (n * cfg.s_max))
        .collect();
    let median = stats::quantile(&ratios, 0.5);
    r.note(
        "median N/(n s_max) at s_max",
        median,
        1.0,
        0.1,
        (median - 1.0).abs() <= 0.1,
    );
    let first: Vec<f64> = paths.iter().map(|o| o[0].jumps as f64 / n).collect();
    r.note(
        "mean N(1)/n",
        stats::mean(&first),
        0.0,
        0.05,
        stats::mean(&first) <= 0.05,
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    pub t_grid: Vec<f64>,
    pub trajectories: u64,
    pub momentum: Vec3,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            t_grid: log_grid(3, 6, 10),
            trajectories: 200,
            momentum: Vec3::E1,
        }
    }
}

/// Per-trajectory least-squares slope of `log|K_t|` against `log t`.
pub fn check_momentum_decay(p: &PhysParams, cfg: &DecayConfig, seed: u64) -> Result<StatReport> {
    let log_t: Vec<f64> = cfg.t_grid.iter().map(|t| t.ln()).collect();
    // fails early on a degenerate grid
    stats::ols_slope(&log_t, &vec![0.0; log_t.len()])?;
    let paths = observe_ensemble(
        p,
        Vec3::ZERO,
        cfg.momentum,
        &cfg.t_grid,
        cfg.trajectories,
        seed,
    )?;
    let slopes: Vec<f64> = paths
        .iter()
        .map(|obs| {
            let log_k: Vec<f64> = obs.iter().map(|o| o.log_momentum).collect();
            stats::ols_slope(&log_t, &log_k)
        })
        .collect::<Result<_>>()?;
    let median = stats::quantile(&slopes, 0.5);
    let mut r = StatReport::new("decay", Some(seed), cfg.trajectories);
    r.within("median log-log slope of |K_t|", median, -1.0, 0.1);
    let mf = MeanFieldState::new(p, Vec3::ZERO, cfg.momentum)?;
    let mf_log_k: Vec<f64> = cfg.t_grid.iter().map(|&t| mf.speed(t).ln()).collect();
    let mf_slope = stats::ols_slope(&log_t, &mf_log_k)?;
    r.note(
        "mean-field slope on the same grid",
        mf_slope,
        -1.0,
        0.1,
        (mf_slope + 1.0).abs() <= 0.1,
    );
    let prefactors: Vec<f64> = paths
        .iter()
        .map(|obs| {
            let o = obs.last().unwrap();
            o.log_momentum + o.time.ln()
        })
        .collect();
    let spread = stats::variance(&prefactors).sqrt();
    r.note(
        "sd of log(t |K_t|) at the last time",
        spread,
        spread,
        0.0,
        true,
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionConfig {
    pub t_list: Vec<f64>,
    pub trajectories: u64,
    pub position: Vec3,
    pub momentum: Vec3,
}

impl Default for PositionConfig {
    fn default() -> Self {
        PositionConfig {
            t_list: log_grid(3, 6, 2),
            trajectories: 10_000,
            position: Vec3::ZERO,
            momentum: Vec3::E1,
        }
    }
}

/// The mean displacement stays bounded while the mean distance grows
/// like `√log t`.
pub fn check_position_moments(
    p: &PhysParams,
    cfg: &PositionConfig,
    seed: u64,
) -> Result<StatReport> {
    if cfg.t_list.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two observation times".into(),
        ));
    }
    let x0 = cfg.position;
    let paths = observe_ensemble(p, x0, cfg.momentum, &cfg.t_list, cfg.trajectories, seed)?;
    let mut r = StatReport::new("position", Some(seed), cfg.trajectories);

    let last = cfg.t_list.len() - 1;
    let displacements: Vec<Vec3> = paths.iter().map(|o| o[last].position - x0).collect();
    let (mean, cov) = stats::mean_and_covariance(&displacements);
    let n = cfg.trajectories as f64;
    let se = ((cov[0][0] + cov[1][1] + cov[2][2]) / n).sqrt();
    r.gate(
        "|mean displacement| at the final time within 4 se of 0",
        mean.norm(),
        0.0,
        4.0 * se,
        mean.norm() <= 4.0 * se,
    );

    let distances: Vec<f64> = (0..=last)
        .map(|k| {
            stats::mean(
                &paths
                    .iter()
                    .map(|o| (o[k].position - x0).norm())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let increasing = distances.windows(2).all(|w| w[1] > w[0]);
    let min_step = distances
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    r.gate(
        "min step of mean |X_t - x0|",
        min_step,
        0.0,
        0.0,
        increasing,
    );
    let root_log: Vec<f64> = cfg.t_list.iter().map(|t| t.ln().sqrt()).collect();
    let rho = stats::correlation(&distances, &root_log);
    r.gate(
        "correlation of mean |X_t - x0| with sqrt(log t)",
        rho,
        1.0,
        0.01,
        rho >= 0.99,
    );

    let consts = constants::closed_form_constants(p)?;
    let y0 = cfg.momentum.normalized().ok_or(Error::ZeroMomentum)?;
    let limit = (p.increment_prefactor() / (1.0 - consts.b)) * y0;
    let gap = (mean - limit).norm();
    r.note(
        "|mean displacement - prefactor Y0/(1-b)| within 4 se",
        gap,
        0.0,
        4.0 * se,
        gap <= 4.0 * se,
    );
    for (k, t) in cfg.t_list.iter().enumerate() {
        let m: Vec3 = paths
            .iter()
            .fold(Vec3::ZERO, |acc, o| acc + (o[k].position - x0))
            / n;
        r.note(
            &format!("|mean displacement| at t = {t:.3e}"),
            m.norm(),
            limit.norm(),
            0.0,
            true,
        );
    }
    let slope = stats::ols_slope(&root_log, &distances)?;
    r.note(
        "growth coefficient of mean |X_t - x0| in sqrt(log t)",
        slope,
        slope,
        0.0,
        true,
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianConfig {
    pub n: usize,
    pub s_grid: Vec<f64>,
    pub trajectories: u64,
    pub position: Vec3,
    pub momentum: Vec3,
}

impl Default for BrownianConfig {
    fn default() -> Self {
        BrownianConfig {
            n: 40,
            s_grid: vec![0.25, 0.5, 0.75, 1.0],
            trajectories: 5000,
            position: Vec3::ZERO,
            momentum: Vec3::E1,
        }
    }
}

/// `W_n(s) = X(θ^{−ns})/√n` on a grid: variances against `σ²s`,
/// uncorrelated non-adjacent increments, Gaussian marginal at the last
/// grid point.
pub fn check_brownian_limit(p: &PhysParams, cfg: &BrownianConfig, seed: u64) -> Result<StatReport> {
    if cfg.s_grid.is_empty() || cfg.s_grid.windows(2).any(|w| w[0] >= w[1]) || cfg.s_grid[0] <= 0.0
    {
        return Err(Error::Domain(
            "s grid must be positive and increasing".into(),
        ));
    }
    let consts = constants::closed_form_constants(p)?;
    let times = rescaled_times(cfg.n, consts.theta, &cfg.s_grid)?;
    let paths = observe_ensemble(
        p,
        cfg.position,
        cfg.momentum,
        &times,
        cfg.trajectories,
        seed,
    )?;
    let scale = (cfg.n as f64).sqrt();
    let w: Vec<Vec<Vec3>> = (0..cfg.s_grid.len())
        .map(|k| paths.iter().map(|o| o[k].position / scale).collect())
        .collect();

    let mut r = StatReport::new("brownian", Some(seed), cfg.trajectories);
    for (k, &s) in cfg.s_grid.iter().enumerate() {
        let (_, cov) = stats::mean_and_covariance(&w[k]);
        for i in 0..3 {
            r.within(
                &format!("variance {} at s = {s} relative to sigma2 s", AXES[i]),
                cov[i][i] / (consts.sigma2 * s),
                1.0,
                0.15,
            );
        }
        if k + 1 == cfg.s_grid.len() {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                r.note(
                    &format!(
                        "covariance {}{} at s = {s} relative to sigma2 s",
                        AXES[i], AXES[j]
                    ),
                    cov[i][j] / (consts.sigma2 * s),
                    0.0,
                    0.05,
                    (cov[i][j] / (consts.sigma2 * s)).abs() <= 0.05,
                );
            }
        }
    }

    // increments over [0, s_1], [s_1, s_2], …; W(0) is dropped in the limit
    let increments: Vec<Vec<Vec3>> = (0..w.len())
        .map(|k| {
            if k == 0 {
                w[0].clone()
            } else {
                w[k].iter().zip(&w[k - 1]).map(|(a, b)| *a - *b).collect()
            }
        })
        .collect();
    let mut disjoint: f64 = 0.0;
    let mut adjacent: f64 = 0.0;
    for k in 0..increments.len() {
        for l in k + 1..increments.len() {
            for i in 0..3 {
                let rho = stats::correlation(
                    &stats::component(&increments[k], i),
                    &stats::component(&increments[l], i),
                )
                .abs();
                if l == k + 1 {
                    adjacent = adjacent.max(rho);
                } else {
                    disjoint = disjoint.max(rho);
                }
            }
        }
    }
    if increments.len() > 2 {
        r.within(
            "max |correlation| of non-adjacent increments",
            disjoint,
            0.0,
            0.05,
        );
    }
    r.note(
        "max |correlation| of adjacent increments",
        adjacent,
        0.0,
        0.05,
        adjacent <= 0.05,
    );

    let last = w.len() - 1;
    for i in 0..3 {
        let ks = stats::ks_normal_fitted(&stats::component(&w[last], i));
        r.gate(
            &format!("KS normality {} at s = {}", AXES[i], cfg.s_grid[last]),
            ks.statistic,
            0.0,
            ks.critical(0.01),
            ks.passes(0.01),
        );
    }
    let jumps: Vec<f64> = paths.iter().map(|o| o[last].jumps as f64).collect();
    let expected = cfg.n as f64 * cfg.s_grid[last];
    r.note(
        "mean jump count at the last grid point",
        stats::mean(&jumps),
        expected,
        0.0,
        true,
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterminismConfig {
    pub trajectories: u64,
    pub t_max: f64,
    pub threads: Vec<usize>,
}

impl Default for DeterminismConfig {
    fn default() -> Self {
        DeterminismConfig {
            trajectories: 256,
            t_max: 1e4,
            threads: vec![1, 4],
        }
    }
}

/// Same seed, different worker counts: ensemble summaries must serialize
/// to identical bytes, and repeated single trajectories must coincide.
pub fn check_determinism(p: &PhysParams, cfg: &DeterminismConfig, seed: u64) -> Result<StatReport> {
    let mut r = StatReport::new(
        "determinism",
        Some(seed),
        cfg.trajectories * cfg.threads.len() as u64,
    );
    let mut outputs = Vec::new();
    for &threads in &cfg.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| {
                Error::ResourceLimit(format!("cannot start {threads} worker threads: {e}"))
            })?;
        let summary = pool
            .install(|| run_ensemble(p, Vec3::ZERO, Vec3::E1, cfg.t_max, cfg.trajectories, seed))?;
        outputs.push(serde_json::to_string(&summary).expect("summary serializes"));
    }
    let differing = outputs.iter().filter(|o| **o != outputs[0]).count();
    r.gate(
        "ensemble outputs differing across thread counts",
        differing as f64,
        0.0,
        0.0,
        differing == 0,
    );

    let run = || {
        simulate_trajectory(
            p,
            Vec3::ZERO,
            Vec3::E1,
            cfg.t_max,
            &mut RandomStream::new(seed),
        )
    };
    let (a, b) = (run()?, run()?);
    let same = a.events() == b.events();
    r.gate(
        "repeated trajectory identical",
        same as u8 as f64,
        1.0,
        0.0,
        same,
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn small_lln_run() {
        let cfg = LlnConfig {
            n: 100,
            trajectories: 50,
            ..LlnConfig::default()
        };
        let r = check_lln_jumpcount(&unit(), &cfg, 4).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn horizon_cap_is_a_resource_limit() {
        let cfg = LlnConfig {
            n: 2000,
            ..LlnConfig::default()
        };
        let err = check_lln_jumpcount(&unit(), &cfg, 4).unwrap_err();
        assert!(err.is_resource_limit());
    }

    #[test]
    fn single_point_grid_is_insufficient() {
        let cfg = DecayConfig {
            t_grid: vec![1e3],
            ..DecayConfig::default()
        };
        assert!(matches!(
            check_momentum_decay(&unit(), &cfg, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn decay_slope_near_minus_one() {
        let cfg = DecayConfig {
            trajectories: 60,
            ..DecayConfig::default()
        };
        let r = check_momentum_decay(&unit(), &cfg, 2).unwrap();
        assert!(r.pass, "{r}");
        let mf = r.clause("mean-field slope on the same grid").unwrap();
        assert!((mf.estimate + 1.0).abs() < 0.01);
    }

    #[test]
    fn determinism_holds() {
        let cfg = DeterminismConfig {
            trajectories: 40,
            t_max: 100.0,
            threads: vec![1, 3],
        };
        assert!(check_determinism(&unit(), &cfg, 8).unwrap().pass);
    }

    #[test]
    fn brownian_grid_validation() {
        let cfg = BrownianConfig {
            s_grid: vec![0.5, 0.25],
            ..BrownianConfig::default()
        };
        assert!(check_brownian_limit(&unit(), &cfg, 1).is_err());
    }
}
