use super::{derive_seed, relative_frobenius, scaled_identity, StatReport, AXES};
use crate::constants;
use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::rng::RandomStream;
use crate::simulate::{simulate_skeleton, SkeletonPath};
use crate::stats;
use crate::vec3::Vec3;

/// Martingale part of the position sum `Σ λ_j Y_j`.
///
/// With `β = b/(1 − b)`, the increments `Y'_j = (λ_j + β)Y_j − βY_{j−1}`
/// form a martingale difference sequence, and
/// `Σ_{j=1}^{m} λ_j Y_j = Z'_m + β(Y_0 − Y_m)` with `Z'_m = Σ_{j≤m} Y'_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleDecomposition {
    b: f64,
    beta: f64,
    increments: Vec<Vec3>,
    partial_sums: Vec<Vec3>,
}

impl MartingaleDecomposition {
    /// Builds `Y'_1..Y'_{n−1}` from a path with `n` jumps (the last clock
    /// drawn is `λ_{n−1}`).
    pub fn new(path: &SkeletonPath, b: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Domain(format!("b must lie in (0, 1), got {b}")));
        }
        if path.is_absorbed() {
            return Err(Error::ZeroMomentum);
        }
        let beta = b / (1.0 - b);
        let n = path.jumps();
        let mut increments = Vec::with_capacity(n.saturating_sub(1));
        let mut partial_sums = Vec::with_capacity(n.max(1));
        let mut z = Vec3::ZERO;
        partial_sums.push(z);
        for j in 1..n {
            let inc = Self::h(beta, path.direction(j), path.clock(j))
                - Self::ph(beta, path.direction(j - 1));
            z += inc;
            increments.push(inc);
            partial_sums.push(z);
        }
        Ok(MartingaleDecomposition {
            b,
            beta,
            increments,
            partial_sums,
        })
    }

    /// `h(y, λ) = λy + βy`, the solution of the Poisson equation for `λy`.
    pub fn h(beta: f64, y: Vec3, clock: f64) -> Vec3 {
        (clock + beta) * y
    }

    /// `(Ph)(y) = βy`.
    pub fn ph(beta: f64, y: Vec3) -> Vec3 {
        beta * y
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Y'_j` for `j = 1..n−1`, stored at index `j − 1`.
    pub fn increments(&self) -> &[Vec3] {
        &self.increments
    }

    /// `Z'_m` for `m = 0..n−1`.
    pub fn partial_sums(&self) -> &[Vec3] {
        &self.partial_sums
    }

    /// `β(Y_0 − Y_m)`, bounded by `2β`.
    pub fn boundary(&self, path: &SkeletonPath, m: usize) -> Vec3 {
        self.beta * (path.direction(0) - path.direction(m))
    }
}

/// `E(Y'_j Y'_jᵀ | Y_{j−1} = y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalCovariance {
    b: f64,
    /// `E((Y_j·y)² | Y_{j−1} = y)`.
    parallel: f64,
}

impl ConditionalCovariance {
    pub fn new(a: f64) -> Result<Self> {
        Ok(ConditionalCovariance {
            b: constants::b_closed(a)?,
            parallel: constants::parallel_second_moment(a)?,
        })
    }

    /// `[(1 + (1−b)²)·E(Y_jY_jᵀ | y) − b²·yyᵀ]/(1 − b)²`, where
    /// `E(Y_jY_jᵀ | y) = c·yyᵀ + (1 − c)/2·(I − yyᵀ)`.
    pub fn at(&self, y: Vec3) -> [[f64; 3]; 3] {
        let b = self.b;
        let c = self.parallel;
        let s = (1.0 - b) * (1.0 - b);
        let second = 1.0 + s;
        let mut q = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let yy = y[i] * y[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                let m = c * yy + 0.5 * (1.0 - c) * (delta - yy);
                q[i][j] = (second * m - b * b * yy) / s;
            }
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainStart {
    Fixed(Vec3),
    /// `Y_0` uniform on the sphere.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleConfig {
    pub chain_length: usize,
    pub fixed_start: Vec3,
    pub batches: usize,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        MartingaleConfig {
            chain_length: 1_000_000,
            fixed_start: Vec3::E1,
            batches: 100,
        }
    }
}

struct CovarianceAverage {
    mean: [[f64; 3]; 3],
    se: [[f64; 3]; 3],
    empirical: [[f64; 3]; 3],
    max_bound_excess: f64,
}

fn time_average(
    p: &PhysParams,
    cfg: &MartingaleConfig,
    start: ChainStart,
    seed: u64,
) -> Result<CovarianceAverage> {
    let mut stream = RandomStream::new(seed);
    let y0 = match start {
        ChainStart::Fixed(y) => y,
        ChainStart::Uniform => stream.unit_vector(),
    };
    // one extra jump so that λ_n is available for Y'_n
    let path = simulate_skeleton(p, y0, cfg.chain_length + 1, &mut stream)?;
    let consts = constants::closed_form_constants(p)?;
    let dec = MartingaleDecomposition::new(&path, consts.b)?;
    let cc = ConditionalCovariance::new(p.a)?;
    let n = cfg.chain_length;
    let size = n / cfg.batches;
    let mut batch_means = vec![[[0.0; 3]; 3]; cfg.batches];
    let mut mean = [[0.0; 3]; 3];
    let mut empirical = [[0.0; 3]; 3];
    let mut max_bound_excess = f64::NEG_INFINITY;
    for j in 1..=n {
        let q = cc.at(path.direction(j - 1));
        let inc = dec.increments()[j - 1];
        let batch = ((j - 1) / size).min(cfg.batches - 1);
        for a in 0..3 {
            for b in 0..3 {
                mean[a][b] += q[a][b];
                batch_means[batch][a][b] += q[a][b];
                empirical[a][b] += inc[a] * inc[b];
            }
        }
        max_bound_excess = max_bound_excess.max(inc.norm() - (path.clock(j) + 2.0 * dec.beta()));
    }
    let mut se = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            mean[a][b] /= n as f64;
            empirical[a][b] /= n as f64;
            let per_batch: Vec<f64> = batch_means
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let len = if k + 1 == cfg.batches {
                        n - k * size
                    } else {
                        size
                    };
                    m[a][b] / len as f64
                })
                .collect();
            se[a][b] = stats::standard_error(&per_batch);
        }
    }
    Ok(CovarianceAverage {
        mean,
        se,
        empirical,
        max_bound_excess,
    })
}

/// Time average of the conditional covariance of the martingale increments
/// along one chain, against `2/(3(1 − b))·I`, from a fixed and from a
/// uniformly drawn start.
pub fn check_martingale_covariance(
    p: &PhysParams,
    cfg: &MartingaleConfig,
    seed: u64,
) -> Result<StatReport> {
    if cfg.chain_length < cfg.batches.max(2) || cfg.batches < 2 {
        return Err(Error::InsufficientData(format!(
            "chain length {} too short for {} batches",
            cfg.chain_length, cfg.batches
        )));
    }
    let consts = constants::closed_form_constants(p)?;
    let target = scaled_identity(consts.skeleton_variance());
    let mut r = StatReport::new("martingale", Some(seed), 2 * cfg.chain_length as u64);
    for (label, start, tag) in [
        ("fixed start", ChainStart::Fixed(cfg.fixed_start), 1),
        ("uniform start", ChainStart::Uniform, 2),
    ] {
        let avg = time_average(p, cfg, start, derive_seed(seed, tag))?;
        r.within(
            &format!("{label}: relative Frobenius error"),
            relative_frobenius(&avg.mean, &target),
            0.0,
            0.03,
        );
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            r.note(
                &format!("{label}: off-diagonal {}{} within 3 se", AXES[a], AXES[b]),
                avg.mean[a][b],
                0.0,
                3.0 * avg.se[a][b],
                avg.mean[a][b].abs() <= 3.0 * avg.se[a][b],
            );
        }
        let emp = relative_frobenius(&avg.empirical, &target);
        r.note(
            &format!("{label}: empirical second moment"),
            emp,
            0.0,
            0.03,
            emp <= 0.03,
        );
        r.note(
            &format!("{label}: max |Y'| - (lambda + 2 beta)"),
            avg.max_bound_excess,
            0.0,
            1e-12,
            avg.max_bound_excess <= 1e-12,
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
    fn increments_satisfy_the_defining_identity() {
        let p = unit();
        let path = simulate_skeleton(&p, Vec3::new(0.0, 2.0, 0.0), 500, &mut RandomStream::new(1))
            .unwrap();
        let dec = MartingaleDecomposition::new(&path, 2.0 / 3.0).unwrap();
        let beta = dec.beta();
        assert!((beta - 2.0).abs() < 1e-15);
        for j in 1..path.jumps() {
            let expected =
                (path.clock(j) + beta) * path.direction(j) - beta * path.direction(j - 1);
            assert!((dec.increments()[j - 1] - expected).norm() < 1e-13);
            assert!(dec.increments()[j - 1].norm() <= path.clock(j) + 2.0 * beta + 1e-12);
        }
    }

    #[test]
    fn boundary_terms_are_bounded() {
        let p = PhysParams::new(0.4, 1.3).unwrap();
        let b = constants::b_closed(p.a).unwrap();
        let path = simulate_skeleton(&p, Vec3::E3, 2000, &mut RandomStream::new(2)).unwrap();
        let dec = MartingaleDecomposition::new(&path, b).unwrap();
        let mut direct = Vec3::ZERO;
        for m in 1..path.jumps() {
            direct += path.clock(m) * path.direction(m);
            let rebuilt = dec.partial_sums()[m] + dec.boundary(&path, m);
            assert!((rebuilt - direct).norm() <= 1e-10 * direct.norm().max(1.0));
            assert!(dec.boundary(&path, m).norm() <= 2.0 * dec.beta() + 1e-12);
        }
    }

    #[test]
    fn conditional_covariance_averages_to_the_target() {
        for a in [0.2, 0.5, 0.8] {
            let cc = ConditionalCovariance::new(a).unwrap();
            let b = constants::b_closed(a).unwrap();
            let mut avg = [[0.0; 3]; 3];
            for e in [Vec3::E1, Vec3::E2, Vec3::E3] {
                let q = cc.at(e);
                for i in 0..3 {
                    for j in 0..3 {
                        avg[i][j] += q[i][j] / 3.0;
                    }
                }
            }
            let target = scaled_identity(2.0 / (3.0 * (1.0 - b)));
            assert!(relative_frobenius(&avg, &target) < 1e-13, "a = {a}");
        }
    }

    #[test]
    fn short_chain_check_passes() {
        let cfg = MartingaleConfig {
            chain_length: 200_000,
            ..MartingaleConfig::default()
        };
        let r = check_martingale_covariance(&unit(), &cfg, 11).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = unit();
        let path = simulate_skeleton(&p, Vec3::E1, 3, &mut RandomStream::new(1)).unwrap();
        assert!(MartingaleDecomposition::new(&path, 1.0).is_err());
        let cfg = MartingaleConfig {
            chain_length: 10,
            ..MartingaleConfig::default()
        };
        assert!(check_martingale_covariance(&p, &cfg, 1).is_err());
    }
}
