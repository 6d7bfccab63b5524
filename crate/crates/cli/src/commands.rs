use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use friction_walk_core::analysis::{run_check, StatReport, CHECK_NAMES};
use friction_walk_core::constants::{
    b_by_quadrature, closed_form_constants, logtheta_by_quadrature, parallel_second_moment,
    parallel_second_moment_by_quadrature,
};
use friction_walk_core::simulate::{
    format_f64, run_ensemble, simulate_trajectory_with, write_events_csv, write_events_json,
    EnsembleSummary,
};
use friction_walk_core::{MeanFieldState, PhysParams, RandomStream};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Cli, Command, Format};
use crate::output::{sink, write_json};
use crate::CliError;

const PROGRAM: &str = "friction-walk";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every setting that influences the output. Worker threads are left out
/// because they never change it.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    m: f64,
    #[serde(rename = "M")]
    big_m: f64,
    x0: [f64; 3],
    k0: [f64; 3],
    seed: u64,
    format: Format,
    #[serde(flatten)]
    options: BTreeMap<&'static str, Value>,
}

#[derive(Serialize)]
struct Meta<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a RunConfig,
}

impl RunConfig {
    fn meta(&self) -> Meta<'_> {
        Meta {
            program: PROGRAM,
            version: VERSION,
            config: self,
        }
    }

    fn preamble(&self) -> Vec<String> {
        vec![
            format!("{PROGRAM} {VERSION}"),
            format!(
                "config={}",
                serde_json::to_string(self).expect("config serializes")
            ),
        ]
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let p = PhysParams::new(c.m, c.big_m)?;
    let (name, default_format, options) = describe(&cli.command);
    let format = c.format.unwrap_or(default_format);
    let config = RunConfig {
        command: name,
        m: c.m,
        big_m: c.big_m,
        x0: c.x0.to_array(),
        k0: c.k0.to_array(),
        seed: c.seed,
        format,
        options,
    };
    match &cli.command {
        Command::Constants => {
            json_only(format, name)?;
            let doc = constants_document(&p, &config)?;
            emit(c.out.as_deref(), |out| write_json(out, &doc))
        }
        Command::Simulate { t_max, max_jumps } => {
            positive("--t-max", *t_max)?;
            if *max_jumps == 0 {
                return Err(CliError::Usage("--max-jumps must be at least 1".into()));
            }
            let mut stream = RandomStream::new(c.seed);
            let traj = simulate_trajectory_with(&p, c.x0, c.k0, *t_max, *max_jumps, &mut stream)?;
            let events = traj.events();
            emit(c.out.as_deref(), |out| match format {
                Format::Csv => write_events_csv(out, &config.preamble(), &events),
                Format::Json => write_events_json(out, &config.meta(), &events),
            })
        }
        Command::Ensemble { t_max, count } => {
            positive("--t-max", *t_max)?;
            if *count == 0 {
                return Err(CliError::Usage("--count must be at least 1".into()));
            }
            let summary = run_ensemble(&p, c.x0, c.k0, *t_max, *count, c.seed)?;
            emit(c.out.as_deref(), |out| match format {
                Format::Csv => write_ensemble_csv(out, &config, &summary),
                Format::Json => {
                    write_json(out, &json!({ "meta": config.meta(), "summary": summary }))
                }
            })
        }
        Command::Meanfield {
            t_min,
            t_max,
            per_decade,
        } => {
            positive("--t-min", *t_min)?;
            positive("--t-max", *t_max)?;
            if t_max <= t_min {
                return Err(CliError::Usage("--t-max must exceed --t-min".into()));
            }
            if *per_decade == 0 {
                return Err(CliError::Usage("--per-decade must be at least 1".into()));
            }
            let state = MeanFieldState::new(&p, c.x0, c.k0)?;
            let grid = time_grid(*t_min, *t_max, *per_decade);
            emit(c.out.as_deref(), |out| match format {
                Format::Csv => write_meanfield_csv(out, &config, &state, &grid),
                Format::Json => {
                    let rows: Vec<Value> = grid
                        .iter()
                        .map(|&t| json!({ "t": t, "k": state.speed(t), "x": state.distance(t) }))
                        .collect();
                    write_json(out, &json!({ "meta": config.meta(), "rows": rows }))
                }
            })
        }
        Command::Verify {
            checks,
            all,
            timing,
        } => {
            json_only(format, name)?;
            let names: Vec<String> = if *all {
                CHECK_NAMES.iter().map(|s| s.to_string()).collect()
            } else if checks.is_empty() {
                return Err(CliError::Usage(format!(
                    "give --all or at least one --check NAME; valid checks: {}",
                    CHECK_NAMES.join(", ")
                )));
            } else {
                checks.clone()
            };
            if let Some(bad) = names.iter().find(|n| !CHECK_NAMES.contains(&n.as_str())) {
                return Err(CliError::Usage(format!(
                    "unknown check `{bad}`; valid checks: {}",
                    CHECK_NAMES.join(", ")
                )));
            }
            let mut entries = Vec::with_capacity(names.len());
            let mut all_pass = true;
            for check in &names {
                let start = Instant::now();
                let outcome = run_check(check, &p, c.seed);
                let wall_time = timing.then(|| start.elapsed().as_secs_f64());
                let entry = match outcome {
                    Ok(report) => {
                        eprintln!("{report}");
                        VerifyEntry::from_report(report, c.seed, wall_time)
                    }
                    Err(e) if e.is_resource_limit() => return Err(e.into()),
                    Err(e) => {
                        eprintln!("FAIL {check}: {e}");
                        VerifyEntry::from_error(check, c.seed, wall_time, e.to_string())
                    }
                };
                all_pass &= entry.pass;
                entries.push(entry);
            }
            emit(c.out.as_deref(), |out| {
                write_json(out, &json!({ "meta": config.meta(), "reports": entries }))
            })?;
            if all_pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed)
            }
        }
    }
}

fn describe(command: &Command) -> (&'static str, Format, BTreeMap<&'static str, Value>) {
    let mut o = BTreeMap::new();
    let (name, format) = match command {
        Command::Constants => ("constants", Format::Json),
        Command::Simulate { t_max, max_jumps } => {
            o.insert("t_max", json!(t_max));
            o.insert("max_jumps", json!(max_jumps));
            ("simulate", Format::Csv)
        }
        Command::Ensemble { t_max, count } => {
            o.insert("t_max", json!(t_max));
            o.insert("count", json!(count));
            ("ensemble", Format::Json)
        }
        Command::Meanfield {
            t_min,
            t_max,
            per_decade,
        } => {
            o.insert("t_min", json!(t_min));
            o.insert("t_max", json!(t_max));
            o.insert("per_decade", json!(per_decade));
            ("meanfield", Format::Csv)
        }
        Command::Verify {
            checks,
            all,
            timing,
        } => {
            o.insert("checks", json!(checks));
            o.insert("all", json!(all));
            o.insert("timing", json!(timing));
            ("verify", Format::Json)
        }
    };
    (name, format, o)
}

fn positive(flag: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{flag} must be positive and finite, got {v}"
        )))
    }
}

fn json_only(format: Format, command: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("`{command}` only writes JSON"))),
    }
}

fn emit<F>(path: Option<&std::path::Path>, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut out = sink(path)?;
    body(&mut *out)?;
    out.flush()?;
    Ok(())
}

fn constants_document(p: &PhysParams, config: &RunConfig) -> Result<Value, CliError> {
    let c = closed_form_constants(p)?;
    let b_quad = b_by_quadrature(p.a)?;
    let lt_quad = logtheta_by_quadrature(p.a)?;
    let par = parallel_second_moment(p.a)?;
    let par_quad = parallel_second_moment_by_quadrature(p.a)?;
    Ok(json!({
        "meta": config.meta(),
        "a": c.a,
        "b": c.b,
        "theta": c.theta,
        "log_theta": c.log_theta,
        "sigma2": c.sigma2,
        "eta": p.eta,
        "quadrature": {
            "b": b_quad,
            "log_theta": lt_quad,
            "parallel_second_moment": par_quad,
            "delta_b": (c.b - b_quad).abs(),
            "delta_log_theta": (c.log_theta - lt_quad).abs(),
            "delta_parallel_second_moment": (par - par_quad).abs(),
        },
    }))
}

/// Log-spaced grid `10^(lo + i/per_decade)` from `t_min` up to `t_max`,
/// always ending at `t_max`.
fn time_grid(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let lo = t_min.log10();
    let hi = t_max.log10();
    let steps = ((hi - lo) * per_decade as f64 - 1e-9).ceil() as usize;
    let mut grid: Vec<f64> = (0..steps)
        .map(|i| {
            if i == 0 {
                t_min
            } else {
                10f64.powf(lo + i as f64 / per_decade as f64)
            }
        })
        .collect();
    grid.push(t_max);
    grid
}

fn write_meanfield_csv(
    out: &mut dyn Write,
    config: &RunConfig,
    state: &MeanFieldState,
    grid: &[f64],
) -> std::io::Result<()> {
    for line in config.preamble() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "t,|K|,|X-x0|")?;
    for &t in grid {
        writeln!(
            out,
            "{},{},{}",
            format_f64(t),
            format_f64(state.speed(t)),
            format_f64(state.distance(t))
        )?;
    }
    Ok(())
}

fn write_ensemble_csv(
    out: &mut dyn Write,
    config: &RunConfig,
    summary: &EnsembleSummary,
) -> std::io::Result<()> {
    for line in config.preamble() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "index,t,x1,x2,x3,k1,k2,k3,jumps")?;
    for (i, o) in summary.terminal.iter().enumerate() {
        let k = o.momentum();
        let cells = [
            o.time,
            o.position.x,
            o.position.y,
            o.position.z,
            k.x,
            k.y,
            k.z,
        ]
        .map(format_f64)
        .join(",");
        writeln!(out, "{i},{cells},{}", o.jumps)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyEntry {
    name: String,
    pass: bool,
    estimate: f64,
    target: f64,
    tolerance: f64,
    seed: u64,
    wall_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<StatReport>,
}

impl VerifyEntry {
    fn from_report(report: StatReport, seed: u64, wall_time: Option<f64>) -> Self {
        VerifyEntry {
            name: report.name.clone(),
            pass: report.pass,
            estimate: report.estimate,
            target: report.target,
            tolerance: report.tolerance,
            seed,
            wall_time,
            error: None,
            report: Some(report),
        }
    }

    fn from_error(name: &str, seed: u64, wall_time: Option<f64>, error: String) -> Self {
        VerifyEntry {
            name: name.to_string(),
            pass: false,
            estimate: f64::NAN,
            target: f64::NAN,
            tolerance: f64::NAN,
            seed,
            wall_time,
            error: Some(error),
            report: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_both_ends() {
        let g = time_grid(0.1, 1e6, 8);
        assert_eq!(g.len(), 57);
        assert_eq!(g[0], 0.1);
        assert_eq!(*g.last().unwrap(), 1e6);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((g[8] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_ends_at_t_max_off_the_lattice() {
        let g = time_grid(1.0, 50.0, 2);
        assert_eq!(g, vec![1.0, 10f64.powf(0.5), 10.0, 10f64.powf(1.5), 50.0]);
    }
}
