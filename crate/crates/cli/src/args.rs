use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use friction_walk_core::Vec3;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "friction-walk",
    version,
    about = "Simulate and verify the quantum-friction jump process"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Tracer mass.
    #[arg(long = "m", global = true, default_value_t = 1.0)]
    pub m: f64,
    /// Atom mass.
    #[arg(long = "M", global = true, default_value_t = 1.0)]
    pub big_m: f64,
    /// Initial position, as `x,y,z`.
    #[arg(long, global = true, default_value = "0,0,0", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub x0: Vec3,
    /// Initial momentum, as `x,y,z`.
    #[arg(long, global = true, default_value = "1,0,0", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub k0: Vec3,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file (standard output when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "FRICTION_WALK_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the limit constants with quadrature cross-checks.
    Constants,
    /// Simulate one trajectory and write its jump events.
    Simulate {
        #[arg(long = "t-max", default_value_t = 1000.0)]
        t_max: f64,
        #[arg(long = "max-jumps", default_value_t = friction_walk_core::simulate::DEFAULT_MAX_JUMPS)]
        max_jumps: u64,
    },
    /// Simulate an ensemble and write terminal states with a summary.
    Ensemble {
        #[arg(long = "t-max", default_value_t = 1000.0)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        count: u64,
    },
    /// Tabulate the mean-field solution on a log-spaced time grid.
    Meanfield {
        #[arg(long = "t-min", default_value_t = 0.1)]
        t_min: f64,
        #[arg(long = "t-max", default_value_t = 1e6)]
        t_max: f64,
        #[arg(long = "per-decade", default_value_t = 8)]
        per_decade: usize,
    },
    /// Run statistical checks of the limit theorems.
    Verify {
        /// Check to run; repeatable.
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Run every check.
        #[arg(long, conflicts_with = "checks")]
        all: bool,
        /// Record wall-clock time per check (makes output nondeterministic).
        #[arg(long)]
        timing: bool,
    },
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|e| format!("invalid number `{part}`: {e}"))?;
        if !slot.is_finite() {
            return Err(format!("components must be finite, got `{part}`"));
        }
    }
    Ok(Vec3::from(v))
}
