use serde::Serialize;

use super::skeleton::{chain_step, holding_time, initial_polar, JumpSource, SkeletonPath};
use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::rng::RandomStream;
use crate::sum::{NeumaierSum, NeumaierVec3};
use crate::vec3::Vec3;

/// Jump cap for a single trajectory.
pub const DEFAULT_MAX_JUMPS: u64 = 100_000_000;

/// Walks `(X_t, K_t)` forward jump by jump without storing the path.
///
/// The walker sits on the segment `[T_j, T_{j+1})`: the clock `λ_j` has been
/// drawn, so the next jump time is known. Draw order is `λ_0, U_0, λ_1, U_1,
/// …`, the same as [`SkeletonPath::extend`].
#[derive(Debug, Clone)]
pub struct PathWalker {
    a: f64,
    rate_coeff: f64,
    tracer_mass: f64,
    prefactor: f64,
    position: NeumaierVec3,
    direction: Vec3,
    log_radius: f64,
    time: NeumaierSum,
    clock: f64,
    next_time: f64,
    jumps: u64,
    max_jumps: u64,
    absorbed: bool,
}

/// One committed jump, as reported by [`PathWalker::jump`].
#[derive(Debug, Clone, Copy)]
pub struct JumpRecord {
    pub clock: f64,
    pub u: Vec3,
    pub time: f64,
    pub position: Vec3,
}

impl PathWalker {
    pub fn new<S: JumpSource>(
        p: &PhysParams,
        x0: Vec3,
        k0: Vec3,
        max_jumps: u64,
        source: &mut S,
    ) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::Domain(format!(
                "initial position must be finite, got {x0:?}"
            )));
        }
        let (direction, log_radius) = initial_polar(k0)?;
        let clock = source.clock();
        let time = NeumaierSum::default();
        let next_time = holding_time(p.rate_coeff, log_radius, clock);
        Ok(PathWalker {
            a: p.a,
            rate_coeff: p.rate_coeff,
            tracer_mass: p.tracer_mass,
            prefactor: p.increment_prefactor(),
            position: NeumaierVec3::new(x0),
            direction,
            log_radius,
            time,
            clock,
            next_time,
            jumps: 0,
            max_jumps,
            absorbed: false,
        })
    }

    /// Jumps so far, `j`.
    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    /// `T_j`.
    pub fn time(&self) -> f64 {
        self.time.value()
    }

    /// `T_{j+1}` (`+∞` once absorbed).
    pub fn next_time(&self) -> f64 {
        self.next_time
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn log_radius(&self) -> f64 {
        self.log_radius
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    /// `X(T_j)`.
    pub fn jump_position(&self) -> Vec3 {
        self.position.value()
    }

    /// `X(t)` for `t` on the current segment.
    pub fn position_at(&self, t: f64) -> Vec3 {
        if self.absorbed {
            return self.position.value();
        }
        let speed = self.log_radius.exp() / self.tracer_mass;
        self.position.value() + ((t - self.time.value()) * speed) * self.direction
    }

    /// Commits the pending jump at `T_{j+1}`.
    pub fn jump<S: JumpSource>(&mut self, source: &mut S) -> Result<JumpRecord> {
        if self.absorbed {
            return Err(Error::ZeroMomentum);
        }
        if self.jumps >= self.max_jumps {
            return Err(Error::ResourceLimit(format!(
                "jump cap of {} reached at t = {}",
                self.max_jumps,
                self.time.value()
            )));
        }
        let clock = self.clock;
        // X(T_{j+1}) − X(T_j) = λ_j/(m Σ(K_j))·K_j = prefactor·λ_j·Y_j
        self.position.add((self.prefactor * clock) * self.direction);
        self.time
            .add(holding_time(self.rate_coeff, self.log_radius, clock));
        self.jumps += 1;
        let u = source.direction();
        match chain_step(self.a, self.direction, u) {
            Some((y, d)) => {
                let log_r = self.log_radius + d;
                self.direction = y;
                self.log_radius = log_r;
                self.clock = source.clock();
                let mut next = self.time;
                next.add(holding_time(self.rate_coeff, log_r, self.clock));
                self.next_time = next.value();
            }
            None => {
                self.direction = Vec3::ZERO;
                self.log_radius = f64::NEG_INFINITY;
                self.absorbed = true;
                self.next_time = f64::INFINITY;
            }
        }
        Ok(JumpRecord {
            clock,
            u,
            time: self.time.value(),
            position: self.position.value(),
        })
    }

    /// Advances until `t` lies on the current segment. A jump exactly at `t`
    /// is counted.
    pub fn advance_to<S: JumpSource>(&mut self, t: f64, source: &mut S) -> Result<()> {
        while self.next_time <= t {
            self.jump(source)?;
        }
        Ok(())
    }

    /// Snapshot of the process at `t`; the walker must already be on the
    /// segment containing `t`.
    pub fn observe(&self, t: f64) -> Observation {
        Observation {
            time: t,
            position: self.position_at(t),
            direction: self.direction,
            log_momentum: self.log_radius,
            jumps: self.jumps,
        }
    }
}

/// State of the process at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub time: f64,
    pub position: Vec3,
    pub direction: Vec3,
    /// `log|K_t|` (`−∞` after absorption).
    pub log_momentum: f64,
    /// `N_t`.
    pub jumps: u64,
}

impl Observation {
    pub fn momentum(&self) -> Vec3 {
        self.log_momentum.exp() * self.direction
    }
}

/// Observes one path at the nondecreasing `times` without storing it.
pub fn observe_path<S: JumpSource>(
    p: &PhysParams,
    x0: Vec3,
    k0: Vec3,
    times: &[f64],
    max_jumps: u64,
    source: &mut S,
) -> Result<Vec<Observation>> {
    let mut walker = PathWalker::new(p, x0, k0, max_jumps, source)?;
    let mut out = Vec::with_capacity(times.len());
    let mut last = 0.0;
    for &t in times {
        if t.is_nan() || t < last || !t.is_finite() {
            return Err(Error::Domain(format!(
                "observation times must be finite, nonnegative and nondecreasing; got {t} after {last}"
            )));
        }
        last = t;
        walker.advance_to(t, source)?;
        out.push(walker.observe(t));
    }
    Ok(out)
}

/// A fully stored path on `[0, horizon]`.
///
/// The skeleton is extended one jump past the horizon, so the jump count and
/// position are exact at every `t ≤ T_n`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: PhysParams,
    skeleton: SkeletonPath,
    x0: Vec3,
    positions: Vec<Vec3>,
    horizon: f64,
}

/// Row of the exported event list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryEvent {
    pub t: f64,
    pub x: Vec3,
    pub k: Vec3,
}

impl Trajectory {
    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn skeleton(&self) -> &SkeletonPath {
        &self.skeleton
    }

    pub fn initial_position(&self) -> Vec3 {
        self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `X(T_j)` for `j = 0..=n`.
    pub fn jump_positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Last time at which the path is known.
    pub fn coverage(&self) -> f64 {
        if self.skeleton.is_absorbed() {
            f64::INFINITY
        } else {
            self.skeleton.last_time()
        }
    }

    pub fn jump_count(&self, t: f64) -> Result<usize> {
        super::jump_count(&self.skeleton, t)
    }

    /// Exact `X(t)`: position at the last jump plus free flight.
    pub fn position(&self, t: f64) -> Result<Vec3> {
        let j = self.jump_count(t)?;
        let base = self.positions[j];
        if self.skeleton.is_absorbed() && j == self.skeleton.jumps() {
            return Ok(base);
        }
        let speed = self.skeleton.log_radius(j).exp() / self.params.tracer_mass;
        Ok(base + ((t - self.skeleton.time(j)) * speed) * self.skeleton.direction(j))
    }

    /// `K_t = K_{N_t}`.
    pub fn momentum(&self, t: f64) -> Result<Vec3> {
        Ok(self.skeleton.momentum(self.jump_count(t)?))
    }

    /// Start, every jump in `(0, horizon]`, and the horizon endpoint.
    pub fn events(&self) -> Vec<TrajectoryEvent> {
        let mut out = vec![TrajectoryEvent {
            t: 0.0,
            x: self.x0,
            k: self.skeleton.momentum(0),
        }];
        for j in 1..=self.skeleton.jumps() {
            let t = self.skeleton.time(j);
            if t > self.horizon {
                break;
            }
            out.push(TrajectoryEvent {
                t,
                x: self.positions[j],
                k: self.skeleton.momentum(j),
            });
        }
        // coverage ≥ horizon by construction
        out.push(TrajectoryEvent {
            t: self.horizon,
            x: self.position(self.horizon).expect("horizon is covered"),
            k: self.momentum(self.horizon).expect("horizon is covered"),
        });
        out
    }
}

pub fn simulate_trajectory(
    p: &PhysParams,
    x0: Vec3,
    k0: Vec3,
    t_max: f64,
    stream: &mut RandomStream,
) -> Result<Trajectory> {
    simulate_trajectory_with(p, x0, k0, t_max, DEFAULT_MAX_JUMPS, stream)
}

/// Simulates until the first jump at or after `t_max` (or absorption).
pub fn simulate_trajectory_with<S: JumpSource>(
    p: &PhysParams,
    x0: Vec3,
    k0: Vec3,
    t_max: f64,
    max_jumps: u64,
    source: &mut S,
) -> Result<Trajectory> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!(
            "t_max must be positive and finite, got {t_max}"
        )));
    }
    let mut skeleton = SkeletonPath::new(p, k0)?;
    let mut walker = PathWalker::new(p, x0, k0, max_jumps, source)?;
    let mut positions = vec![x0];
    while walker.time() < t_max && !walker.is_absorbed() {
        let rec = walker.jump(source)?;
        skeleton.push(rec.clock, rec.u);
        positions.push(rec.position);
        debug_assert_eq!(skeleton.last_time(), rec.time);
    }
    Ok(Trajectory {
        params: *p,
        skeleton,
        x0,
        positions,
        horizon: t_max,
    })
}
