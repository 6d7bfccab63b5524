//! Exact event-driven simulation: the skeleton chain, piecewise-linear
//! trajectories and seeded ensembles.

mod ensemble;
mod export;
mod skeleton;
mod trajectory;

pub use ensemble::{par_map_indexed, run_ensemble, EnsembleSummary};
pub use export::{format_f64, write_events_csv, write_events_json, CSV_HEADER};
pub use skeleton::{simulate_skeleton, simulate_skeleton_with, JumpSource, SkeletonPath};
pub use trajectory::{
    observe_path, simulate_trajectory, simulate_trajectory_with, JumpRecord, Observation,
    PathWalker, Trajectory, TrajectoryEvent, DEFAULT_MAX_JUMPS,
};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// `N_t`, the number of jumps `j ≥ 1` with `T_j ≤ t`.
///
/// A jump exactly at `t` is counted. Fails with `OutOfRange` when `t` lies
/// beyond the last simulated jump of a path that is not absorbed.
pub fn jump_count(path: &SkeletonPath, t: f64) -> Result<usize> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::OutOfRange {
            what: "time",
            value: t,
            range: "[0, T_n]".into(),
        });
    }
    if t > path.last_time() && !path.is_absorbed() {
        return Err(Error::OutOfRange {
            what: "time",
            value: t,
            range: format!("[0, {}]", path.last_time()),
        });
    }
    Ok(path.times()[1..].partition_point(|&tj| tj <= t))
}

/// `X(θ^{−ns})/√n` at every `s` of the grid.
pub fn rescaled_path(traj: &Trajectory, n: usize, theta: f64, s_grid: &[f64]) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    let scale = (n as f64).sqrt();
    let mut last = 0.0;
    s_grid
        .iter()
        .map(|&s| {
            if s.is_nan() || s < last {
                return Err(Error::Domain(format!(
                    "s grid must be nonnegative and nondecreasing, got {s} after {last}"
                )));
            }
            last = s;
            let t = rescaled_time(n, theta, s);
            traj.position(t).map(|x| x / scale)
        })
        .collect()
}

/// `θ^{−ns}`.
pub fn rescaled_time(n: usize, theta: f64, s: f64) -> f64 {
    (-(n as f64) * s * theta.ln()).exp()
}
