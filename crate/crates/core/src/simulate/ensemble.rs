use rayon::prelude::*;
use serde::Serialize;

use super::trajectory::{observe_path, Observation, DEFAULT_MAX_JUMPS};
use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::rng::RandomStream;
use crate::stats;
use crate::sum::NeumaierSum;
use crate::vec3::Vec3;

/// Evaluates `f(0), …, f(count − 1)` in parallel and returns the results in
/// index order.
///
/// The first failing index (lowest, not first in wall-clock order) is
/// reported, wrapped with its index.
pub fn par_map_indexed<T, F>(count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..count).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Trajectory {
                    index: i as u64,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Terminal states of an ensemble at `t_max` with summary statistics.
///
/// Statistics are reduced sequentially in trajectory order, so the summary
/// does not depend on how the work was scheduled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub count: u64,
    pub base_seed: u64,
    pub t_max: f64,
    pub x0: Vec3,
    pub k0: Vec3,
    pub mean_position: Vec3,
    pub position_covariance: [[f64; 3]; 3],
    pub mean_displacement_norm: f64,
    pub mean_momentum_norm: f64,
    pub mean_log_momentum: f64,
    pub mean_jumps: f64,
    pub absorbed: u64,
    pub terminal: Vec<Observation>,
}

/// Simulates `count` independent trajectories; trajectory `i` uses substream
/// `(base_seed, i)`.
pub fn run_ensemble(
    p: &PhysParams,
    x0: Vec3,
    k0: Vec3,
    t_max: f64,
    count: u64,
    base_seed: u64,
) -> Result<EnsembleSummary> {
    if count == 0 {
        return Err(Error::Domain("ensemble count must be at least 1".into()));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!(
            "t_max must be positive and finite, got {t_max}"
        )));
    }
    let terminal = par_map_indexed(count, |i| {
        let mut stream = RandomStream::substream(base_seed, i);
        observe_path(p, x0, k0, &[t_max], DEFAULT_MAX_JUMPS, &mut stream).map(|o| o[0])
    })?;
    let positions: Vec<Vec3> = terminal.iter().map(|o| o.position).collect();
    let (mean_position, position_covariance) = stats::mean_and_covariance(&positions);
    let n = count as f64;
    let mean_of = |f: &dyn Fn(&Observation) -> f64| -> f64 {
        terminal.iter().map(f).collect::<NeumaierSum>().value() / n
    };
    let mean_log_momentum = if terminal.iter().any(|o| o.log_momentum == f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        mean_of(&|o| o.log_momentum)
    };
    Ok(EnsembleSummary {
        count,
        base_seed,
        t_max,
        x0,
        k0,
        mean_position,
        position_covariance,
        mean_displacement_norm: mean_of(&|o| (o.position - x0).norm()),
        mean_momentum_norm: mean_of(&|o| o.momentum().norm()),
        mean_log_momentum,
        mean_jumps: mean_of(&|o| o.jumps as f64),
        absorbed: terminal
            .iter()
            .filter(|o| o.log_momentum == f64::NEG_INFINITY)
            .count() as u64,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_trajectory;

    fn unit() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn single_member_matches_direct_simulation() {
        let p = unit();
        let x0 = Vec3::new(1.0, 0.0, 0.0);
        let k0 = Vec3::new(0.0, 1.0, 1.0);
        let summary = run_ensemble(&p, x0, k0, 50.0, 1, 17).unwrap();
        let traj =
            simulate_trajectory(&p, x0, k0, 50.0, &mut RandomStream::substream(17, 0)).unwrap();
        let o = summary.terminal[0];
        assert_eq!(o.position, traj.position(50.0).unwrap());
        assert_eq!(o.momentum(), traj.momentum(50.0).unwrap());
        assert_eq!(o.jumps as usize, traj.jump_count(50.0).unwrap());
    }

    #[test]
    fn summary_is_independent_of_thread_count() {
        let p = unit();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&p, Vec3::ZERO, Vec3::E1, 100.0, 300, 5).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one, four);
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
    }

    #[test]
    fn momentum_decays_with_time() {
        let p = unit();
        let early = run_ensemble(&p, Vec3::ZERO, Vec3::E1, 1e3, 200, 9).unwrap();
        let late = run_ensemble(&p, Vec3::ZERO, Vec3::E1, 1e5, 200, 9).unwrap();
        assert!(late.mean_momentum_norm < early.mean_momentum_norm);
        assert!(late.mean_jumps > early.mean_jumps);
    }

    #[test]
    fn errors_carry_the_lowest_failing_index() {
        let err = par_map_indexed(100, |i| {
            if i % 10 == 7 {
                Err(Error::ZeroMomentum)
            } else {
                Ok(i)
            }
        })
        .unwrap_err();
        match err {
            Error::Trajectory { index, source } => {
                assert_eq!(index, 7);
                assert!(matches!(*source, Error::ZeroMomentum));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_ensembles() {
        assert!(run_ensemble(&unit(), Vec3::ZERO, Vec3::E1, 1.0, 0, 1).is_err());
        assert!(run_ensemble(&unit(), Vec3::ZERO, Vec3::ZERO, 1.0, 3, 1).is_err());
    }
}
