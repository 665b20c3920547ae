//! The three desk-scale studies: conditional CLT, curve collapse and
//! variance scaling, with CSV and JSON manifest output.

mod clt;
mod collapse;
mod config;
mod variance;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gossip::GossipState;
use crate::laplace::{solve_phi_fixed_point, GridSpec, LimitCurves, PhiGrid, SolverOptions};

pub use clt::{clt_experiment, CltResult, GateReport, ResidualRecord, UStudy};
pub use collapse::{collapse_experiment, CollapseRecord, CollapseResult, UCollapse};
pub use config::{parse_config, read_config, CltConfig, CollapseConfig, Rate, VarianceConfig};
pub use variance::{
    variance_study, SnapshotVariance, VarianceLevel, VarianceRecord, VarianceResult,
};

pub const VERSION: &str = concat!("gossip-clt v", env!("CARGO_PKG_VERSION"));

/// One pass/fail line of a `--check` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        threshold: impl Into<String>,
        pass: bool,
    ) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
        }
    }
}

/// `ℓ` and `Dℓ` from the cache when given, otherwise freshly solved.
/// Also returns the cache's content hash.
pub fn limit_curves(d: usize, cache: Option<&Path>) -> Result<(LimitCurves, Option<String>)> {
    match cache {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| {
                Error::Config(format!("cannot read phi cache {}: {e}", path.display()))
            })?;
            let text =
                String::from_utf8(bytes.clone()).map_err(|e| Error::Format(e.to_string()))?;
            let grid = PhiGrid::from_cache_str(&text)?;
            if grid.d != d {
                return Err(Error::Config(format!(
                    "phi cache is for d = {}, need d = {d}",
                    grid.d
                )));
            }
            Ok((LimitCurves::on_nodes(&grid), Some(hex_digest(&bytes))))
        }
        None => {
            let grid = solve_phi_fixed_point(d, GridSpec::default(), SolverOptions::default())?;
            Ok((LimitCurves::on_nodes(&grid), None))
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn measure_coverage<R: Rng + ?Sized>(
    state: &GossipState,
    t: f64,
    exact: bool,
    probes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if exact {
        Ok((state.coverage_exact(t)?, 0.0))
    } else {
        state.coverage_fraction(t, probes, rng)
    }
}

/// Times `λ⁻¹(log Λ + u)` for `u` in ascending order, with the positions of
/// the `u` values in the caller's list.
pub(crate) fn target_times(
    lambda: f64,
    system_size: f64,
    u_values: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..u_values.len()).collect();
    order.sort_by(|&a, &b| u_values[a].total_cmp(&u_values[b]));
    let times = order
        .iter()
        .map(|&i| (system_size.ln() + u_values[i]) / lambda)
        .collect();
    (times, order)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub lambda: f64,
    pub master_seed: u64,
    pub stages: Vec<(String, u64)>,
    pub threads: Option<usize>,
    pub phi_cache_sha256: Option<String>,
    pub wall_time_secs: f64,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

/// Writes `results.csv` and `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, csv: &str, manifest: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), csv)?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}
