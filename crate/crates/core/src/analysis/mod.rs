//! Statistical verification of the limit theorems.
//!
//! Every check is a deterministic function of its parameters and a seed and
//! returns a [`StatReport`]. A report passes when all of its gating clauses
//! pass; non-gating clauses carry diagnostics.

mod chain;
mod exact;
mod martingale;
mod process;

use std::fmt;

use serde::Serialize;

pub use chain::{
    check_clt, check_ldp_tails, direct_tail, estimate_tail, tilted_tail, CltConfig, LdpConfig,
    TailEstimate, TailEstimator,
};
pub use exact::{
    check_constants, check_drift, check_generator, check_kernel, check_rate_function, DriftConfig,
    GaussianBump, GeneratorConfig, KernelConfig,
};
pub use martingale::{
    check_martingale_covariance, ChainStart, ConditionalCovariance, MartingaleConfig,
    MartingaleDecomposition,
};
pub use process::{
    check_brownian_limit, check_determinism, check_lln_jumpcount, check_momentum_decay,
    check_position_moments, BrownianConfig, DecayConfig, DeterminismConfig, LlnConfig,
    PositionConfig,
};

use crate::error::{Error, Result};
use crate::kernel::PhysParams;
use crate::rng::RandomStream;
use crate::simulate::par_map_indexed;

/// One tested or reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Whether this clause decides the report's verdict.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    pub name: String,
    pub seed: Option<u64>,
    pub pass: bool,
    pub estimate: f64,
    pub target: f64,
    pub tolerance: f64,
    pub samples: u64,
    pub clauses: Vec<Clause>,
}

impl StatReport {
    pub fn new(name: &str, seed: Option<u64>, samples: u64) -> Self {
        StatReport {
            name: name.to_string(),
            seed,
            pass: true,
            estimate: f64::NAN,
            target: f64::NAN,
            tolerance: f64::NAN,
            samples,
            clauses: Vec::new(),
        }
    }

    /// Adds a gating clause that passes when `|estimate − target| ≤ tolerance`.
    pub fn within(&mut self, name: &str, estimate: f64, target: f64, tolerance: f64) -> &mut Self {
        let pass = (estimate - target).abs() <= tolerance;
        self.gate(name, estimate, target, tolerance, pass)
    }

    /// Adds a gating clause with an explicit verdict.
    pub fn gate(
        &mut self,
        name: &str,
        estimate: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    ) -> &mut Self {
        if self.clauses.iter().all(|c| !c.gating) {
            self.estimate = estimate;
            self.target = target;
            self.tolerance = tolerance;
        }
        self.pass &= pass;
        self.push(name, estimate, target, tolerance, pass, true)
    }

    /// Adds a diagnostic clause that does not affect the verdict.
    pub fn note(
        &mut self,
        name: &str,
        estimate: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    ) -> &mut Self {
        self.push(name, estimate, target, tolerance, pass, false)
    }

    fn push(
        &mut self,
        name: &str,
        estimate: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
        gating: bool,
    ) -> &mut Self {
        self.clauses.push(Clause {
            name: name.to_string(),
            estimate,
            target,
            tolerance,
            pass,
            gating,
        });
        self
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| c.gating && !c.pass)
    }
}

impl fmt::Display for StatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name
        )?;
        for c in &self.clauses {
            writeln!(
                f,
                "  [{}{}] {}: estimate {:.6e}, target {:.6e}, tolerance {:.3e}",
                if c.pass { "ok" } else { "FAIL" },
                if c.gating { "" } else { ", info" },
                c.name,
                c.estimate,
                c.target,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

/// Independent seed for one sub-experiment of a check (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `total` samples into fixed blocks, each drawn from its own
/// substream, and runs the blocks in parallel. Results come back in block
/// order, so reductions over them are schedule-independent.
pub(crate) fn par_blocks<T, F>(seed: u64, total: u64, block: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RandomStream, u64) -> Result<T> + Sync + Send,
{
    let blocks = total.div_ceil(block);
    par_map_indexed(blocks, |b| {
        let count = block.min(total - b * block);
        f(&mut RandomStream::substream(seed, b), count)
    })
}

/// Names accepted by [`run_check`], in suite order.
pub const CHECK_NAMES: &[&str] = &[
    "constants",
    "rate-function",
    "kernel",
    "drift",
    "martingale",
    "clt",
    "lln",
    "ldp",
    "decay",
    "position",
    "brownian",
    "generator",
    "determinism",
];

/// Runs a named check with its default configuration.
pub fn run_check(name: &str, p: &PhysParams, seed: u64) -> Result<StatReport> {
    match name {
        "constants" => check_constants(p),
        "rate-function" => check_rate_function(p),
        "kernel" => check_kernel(p, &KernelConfig::default(), seed),
        "drift" => check_drift(p, &DriftConfig::default(), seed),
        "martingale" => check_martingale_covariance(p, &MartingaleConfig::default(), seed),
        "clt" => check_clt(p, &CltConfig::default(), seed),
        "lln" => check_lln_jumpcount(p, &LlnConfig::default(), seed),
        "ldp" => check_ldp_tails(p, &LdpConfig::default(), seed),
        "decay" => check_momentum_decay(p, &DecayConfig::default(), seed),
        "position" => check_position_moments(p, &PositionConfig::default(), seed),
        "brownian" => check_brownian_limit(p, &BrownianConfig::default(), seed),
        "generator" => check_generator(p, &GeneratorConfig::default(), seed),
        "determinism" => check_determinism(p, &DeterminismConfig::default(), seed),
        other => Err(Error::Domain(format!(
            "unknown check `{other}`; valid checks: {}",
            CHECK_NAMES.join(", ")
        ))),
    }
}

/// Relative Frobenius distance `‖A − B‖/‖B‖`.
pub(crate) fn relative_frobenius(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += (a[i][j] - b[i][j]).powi(2);
            den += b[i][j].powi(2);
        }
    }
    (num / den).sqrt()
}

pub(crate) fn scaled_identity(s: f64) -> [[f64; 3]; 3] {
    [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]]
}

pub(crate) const AXES: [&str; 3] = ["x", "y", "z"];
