use crate::error::{Error, Result};
use crate::kernel::{self, PhysParams};
use crate::rng::RandomStream;
use crate::sum::NeumaierSum;
use crate::vec3::Vec3;

/// Supplies the randomness of one jump: the unit-exponential clock `λ_j` and
/// the uniform direction `U_j`, drawn in that order.
pub trait JumpSource {
    fn clock(&mut self) -> f64;
    fn direction(&mut self) -> Vec3;
}

impl JumpSource for RandomStream {
    fn clock(&mut self) -> f64 {
        self.exp1()
    }

    fn direction(&mut self) -> Vec3 {
        self.unit_vector()
    }
}

/// Holding time `λ/Σ(K)` at momentum radius `exp(log_radius)`.
pub(crate) fn holding_time(rate_coeff: f64, log_radius: f64, clock: f64) -> f64 {
    clock * (-log_radius).exp() / rate_coeff
}

/// Polar update `Y → (Y', log(R'/R))`; `None` on absorption at `k = 0`.
pub(crate) fn chain_step(a: f64, direction: Vec3, u: Vec3) -> Option<(Vec3, f64)> {
    kernel::contract_direction(a, direction, u).map(|(r, y)| (y, r.ln()))
}

pub(crate) fn initial_polar(k0: Vec3) -> Result<(Vec3, f64)> {
    if !k0.is_finite() {
        return Err(Error::Domain(format!(
            "initial momentum must be finite, got {k0:?}"
        )));
    }
    let r = k0.norm();
    if r == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    Ok((k0 / r, r.ln()))
}

/// The embedded jump chain `(K_n)` with its clocks and jump times.
///
/// Momenta are stored in polar form, `K_j = exp(log R_j)·Y_j`. The chain
/// contracts geometrically (`R_n ≈ θ^n R_0`), so long chains would underflow
/// in Cartesian form while the polar form stays exact.
#[derive(Debug, Clone)]
pub struct SkeletonPath {
    a: f64,
    rate_coeff: f64,
    directions: Vec<Vec3>,
    log_radii: Vec<f64>,
    log_increments: Vec<f64>,
    clocks: Vec<f64>,
    times: Vec<f64>,
    time_sum: NeumaierSum,
    absorbed: bool,
}

impl SkeletonPath {
    pub fn new(p: &PhysParams, k0: Vec3) -> Result<Self> {
        let (y, log_r) = initial_polar(k0)?;
        Ok(SkeletonPath {
            a: p.a,
            rate_coeff: p.rate_coeff,
            directions: vec![y],
            log_radii: vec![log_r],
            log_increments: Vec::new(),
            clocks: Vec::new(),
            times: vec![0.0],
            time_sum: NeumaierSum::default(),
            absorbed: false,
        })
    }

    /// Appends one jump driven by clock `λ` and direction `u`. Returns `false`
    /// (and records nothing) once the path is absorbed.
    pub fn push(&mut self, clock: f64, u: Vec3) -> bool {
        if self.absorbed {
            return false;
        }
        let j = self.clocks.len();
        self.time_sum
            .add(holding_time(self.rate_coeff, self.log_radii[j], clock));
        self.clocks.push(clock);
        self.times.push(self.time_sum.value());
        match chain_step(self.a, self.directions[j], u) {
            Some((y, d)) => {
                self.directions.push(y);
                self.log_radii.push(self.log_radii[j] + d);
                self.log_increments.push(d);
            }
            None => {
                self.directions.push(Vec3::ZERO);
                self.log_radii.push(f64::NEG_INFINITY);
                self.log_increments.push(f64::NEG_INFINITY);
                self.absorbed = true;
            }
        }
        true
    }

    /// Draws up to `steps` further jumps from `source`.
    pub fn extend<S: JumpSource>(&mut self, steps: usize, source: &mut S) {
        self.reserve(steps);
        for _ in 0..steps {
            let clock = source.clock();
            let u = source.direction();
            if !self.push(clock, u) {
                break;
            }
        }
    }

    pub fn reserve(&mut self, steps: usize) {
        self.directions.reserve(steps);
        self.log_radii.reserve(steps);
        self.log_increments.reserve(steps);
        self.clocks.reserve(steps);
        self.times.reserve(steps);
    }

    /// Number of jumps `n` (the chain holds `K_0..K_n`).
    pub fn jumps(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    pub fn mass_ratio(&self) -> f64 {
        self.a
    }

    /// `K_j`.
    pub fn momentum(&self, j: usize) -> Vec3 {
        self.log_radii[j].exp() * self.directions[j]
    }

    /// `Y_j = K_j/|K_j|` (zero after absorption).
    pub fn direction(&self, j: usize) -> Vec3 {
        self.directions[j]
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    /// `R_j = |K_j|`.
    pub fn radius(&self, j: usize) -> f64 {
        self.log_radii[j].exp()
    }

    pub fn log_radius(&self, j: usize) -> f64 {
        self.log_radii[j]
    }

    pub fn log_radii(&self) -> &[f64] {
        &self.log_radii
    }

    /// `D_j = log R_j − log R_{j−1}` for `j ≥ 1`, as drawn (not as the
    /// difference of the rounded partial sums).
    pub fn log_increment(&self, j: usize) -> f64 {
        self.log_increments[j - 1]
    }

    pub fn log_increments(&self) -> &[f64] {
        &self.log_increments
    }

    /// `λ_j` for `j < n`.
    pub fn clock(&self, j: usize) -> f64 {
        self.clocks[j]
    }

    pub fn clocks(&self) -> &[f64] {
        &self.clocks
    }

    /// `T_j`, the time of the `j`-th jump (`T_0 = 0`).
    pub fn time(&self, j: usize) -> f64 {
        self.times[j]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// Simulates `n_steps` jumps of the skeleton chain from `k0`.
///
/// Stops early if the chain is absorbed at `k = 0`.
pub fn simulate_skeleton(
    p: &PhysParams,
    k0: Vec3,
    n_steps: usize,
    stream: &mut RandomStream,
) -> Result<SkeletonPath> {
    simulate_skeleton_with(p, k0, n_steps, stream)
}

pub fn simulate_skeleton_with<S: JumpSource>(
    p: &PhysParams,
    k0: Vec3,
    n_steps: usize,
    source: &mut S,
) -> Result<SkeletonPath> {
    let mut path = SkeletonPath::new(p, k0)?;
    path.extend(n_steps, source);
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants;
    use crate::kernel::energy_residual;
    use crate::stats;

    /// Replays a [`RandomStream`] while recording every direction drawn.
    struct Recording {
        inner: RandomStream,
        directions: Vec<Vec3>,
    }

    impl JumpSource for Recording {
        fn clock(&mut self) -> f64 {
            self.inner.exp1()
        }

        fn direction(&mut self) -> Vec3 {
            let u = self.inner.unit_vector();
            self.directions.push(u);
            u
        }
    }

    /// Always jumps straight ahead.
    struct Ray {
        clocks: Vec<f64>,
        next: usize,
        along: Vec3,
    }

    impl JumpSource for Ray {
        fn clock(&mut self) -> f64 {
            self.next += 1;
            self.clocks[self.next - 1]
        }

        fn direction(&mut self) -> Vec3 {
            self.along
        }
    }

    fn unit() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_chain() {
        let mut s = RandomStream::new(1);
        let path = simulate_skeleton(&unit(), Vec3::E1, 0, &mut s).unwrap();
        assert_eq!(path.jumps(), 0);
        assert_eq!(path.momentum(0), Vec3::E1);
        assert_eq!(path.times(), &[0.0]);
    }

    #[test]
    fn zero_initial_momentum_is_rejected() {
        let mut s = RandomStream::new(1);
        assert!(matches!(
            simulate_skeleton(&unit(), Vec3::ZERO, 3, &mut s),
            Err(Error::ZeroMomentum)
        ));
    }

    #[test]
    fn straight_ray_never_contracts() {
        let p = unit();
        let k0 = Vec3::new(0.0, 2.0, 0.0);
        let clocks = vec![0.3, 1.7, 0.2, 2.5];
        let mut src = Ray {
            clocks: clocks.clone(),
            next: 0,
            along: Vec3::E2,
        };
        let path = simulate_skeleton_with(&p, k0, 4, &mut src).unwrap();
        for j in 0..=4 {
            assert!((path.momentum(j) - k0).norm() < 1e-15);
        }
        let expected: f64 = clocks.iter().sum::<f64>() / kernel::scattering_rate(&p, k0);
        assert!((path.last_time() - expected).abs() < 1e-15);
    }

    #[test]
    fn chain_invariants_hold_stepwise() {
        for (m, big_m) in [(1.0, 1.0), (0.4, 1.3), (3.0, 0.5)] {
            let p = PhysParams::new(m, big_m).unwrap();
            let mut src = Recording {
                inner: RandomStream::new(21),
                directions: Vec::new(),
            };
            let k0 = Vec3::new(0.7, -0.2, 1.1);
            let path = simulate_skeleton_with(&p, k0, 300, &mut src).unwrap();
            let mut naive_t = 0.0;
            for j in 0..path.jumps() {
                let k = path.momentum(j);
                let k2 = path.momentum(j + 1);
                let u = src.directions[j];
                let factor = (p.a * path.direction(j) + (1.0 - p.a) * u).norm();
                // multiplicative radius law
                assert!(
                    (path.radius(j + 1) - path.radius(j) * factor).abs() <= 1e-13 * path.radius(j)
                );
                assert!((path.log_increment(j + 1) - factor.ln()).abs() <= 1e-13);
                assert!(path.radius(j + 1) <= path.radius(j));
                // energy shell
                let res = energy_residual(&p, k, k2);
                assert!(res.abs() <= 1e-12 * kernel::epsilon(&p, k).max(f64::MIN_POSITIVE));
                naive_t += path.clock(j) / kernel::scattering_rate(&p, k);
                assert!((path.time(j + 1) - naive_t).abs() <= 1e-12 * naive_t);
                assert!(path.time(j + 1) > path.time(j));
            }
        }
    }

    #[test]
    fn long_chain_stays_representable_in_polar_form() {
        // R_n ≈ e^{−n/2}: Cartesian momenta underflow after ~1500 jumps.
        let mut s = RandomStream::new(2);
        let path = simulate_skeleton(&unit(), Vec3::E1, 5000, &mut s).unwrap();
        assert_eq!(path.jumps(), 5000);
        assert!(!path.is_absorbed());
        assert!(path.log_radius(5000).is_finite());
        assert!(path.log_radius(5000) < -1000.0);
    }

    #[test]
    fn absorption_truncates_the_path() {
        struct Backward(usize);
        impl JumpSource for Backward {
            fn clock(&mut self) -> f64 {
                1.0
            }
            fn direction(&mut self) -> Vec3 {
                self.0 += 1;
                if self.0 == 3 {
                    -Vec3::E1
                } else {
                    Vec3::E1
                }
            }
        }
        let path = simulate_skeleton_with(&unit(), Vec3::E1, 10, &mut Backward(0)).unwrap();
        assert!(path.is_absorbed());
        assert_eq!(path.jumps(), 3);
        assert_eq!(path.momentum(3), Vec3::ZERO);
    }

    #[test]
    fn mean_log_contraction_matches_log_theta() {
        let p = unit();
        let mut s = RandomStream::new(1234);
        let n = 1_000_000;
        let path = simulate_skeleton(&p, Vec3::E1, n, &mut s).unwrap();
        let d: Vec<f64> = (1..=n).map(|j| path.log_increment(j)).collect();
        let mean = stats::mean(&d);
        let se = stats::standard_error(&d);
        let target = constants::log_theta_closed(p.a).unwrap();
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "{mean} vs {target} (se {se})"
        );
    }

    #[test]
    fn waiting_times_are_unit_exponential_in_rate_units() {
        // 10^6 steps as 1000 chains of 1000 jumps, so every T_j stays finite.
        let p = PhysParams::new(0.6, 1.4).unwrap();
        let mut scaled = Vec::with_capacity(1_000_000);
        for chain in 0..1000 {
            let mut s = RandomStream::substream(77, chain);
            let path = simulate_skeleton(&p, Vec3::E3, 1000, &mut s).unwrap();
            for j in 0..path.jumps() {
                let rate = kernel::scattering_rate(&p, path.momentum(j));
                let x = rate * (path.time(j + 1) - path.time(j));
                assert!((x - path.clock(j)).abs() <= 1e-9 * path.clock(j).max(1e-3));
                scaled.push(x);
            }
        }
        let mean = stats::mean(&scaled);
        let se = stats::standard_error(&scaled);
        assert!((mean - 1.0).abs() <= 3.0 * se, "{mean} (se {se})");
    }
}
