//! Typed experiment configurations, read from TOML.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cmj::malthusian_lambda;
use crate::error::{Error, Result};
use crate::torus::{unit_ball_volume, TorusSpec};

/// Growth rate given either directly or through `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rate {
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
}

impl Rate {
    pub fn resolve(&self, d: usize) -> Result<f64> {
        match (self.lambda, self.rho) {
            (Some(_), Some(_)) => Err(Error::Config("give either lambda or rho, not both".into())),
            (Some(l), None) if l > 0.0 && l.is_finite() => Ok(l),
            (Some(l), None) => Err(Error::Config(format!("lambda must be positive, got {l}"))),
            (None, Some(rho)) => malthusian_lambda(d, rho, unit_ball_volume(d)?),
            (None, None) => Ok(1.0),
        }
    }
}

fn default_probes() -> usize {
    100_000
}

fn default_gate() -> [f64; 2] {
    [0.05, 20.0]
}

fn default_budget() -> usize {
    50
}

fn default_w_horizon() -> f64 {
    12.0
}

fn default_alpha2() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub d: usize,
    #[serde(flatten)]
    pub rate: Rate,
    /// Dimensionless system size `Λ`.
    pub system_size: f64,
    /// Snapshot at `v = α λ⁻¹ log Λ`.
    pub alpha: f64,
    pub u_values: Vec<f64>,
    pub replicates: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Exact arc-union coverage (d = 1 only).
    #[serde(default)]
    pub exact_d1: bool,
    pub master_seed: u64,
    #[serde(default = "default_gate")]
    pub gate: [f64; 2],
    #[serde(default = "default_budget")]
    pub seed_budget: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub phi_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    pub d: usize,
    #[serde(flatten)]
    pub rate: Rate,
    pub system_size: f64,
    pub u_values: Vec<f64>,
    pub replicates: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub exact_d1: bool,
    pub master_seed: u64,
    /// Horizon `λT` for the limit-variable draws.
    #[serde(default = "default_w_horizon")]
    pub w_horizon: f64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub phi_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub d: usize,
    #[serde(flatten)]
    pub rate: Rate,
    pub system_sizes: Vec<f64>,
    /// Conditioning time `s = α₁ λ⁻¹ log Λ`.
    pub alpha1: f64,
    /// Target time `t = λ⁻¹ (α₂ log Λ + u)`.
    #[serde(default = "default_alpha2")]
    pub alpha2: f64,
    pub u: f64,
    /// Independent snapshots per system size.
    pub snapshots: usize,
    /// Continuations per snapshot.
    pub replicates: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub exact_d1: bool,
    pub master_seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn check_common(
    d: usize,
    system_size: f64,
    probes: usize,
    exact_d1: bool,
    threads: Option<usize>,
) -> Result<()> {
    if !(1..=3).contains(&d) {
        return Err(Error::Config(format!("d must be 1, 2 or 3, got {d}")));
    }
    if !(system_size >= 10.0 && system_size.is_finite()) {
        return Err(Error::Config(format!(
            "system size must be at least 10, got {system_size}"
        )));
    }
    if probes == 0 {
        return Err(Error::Config("probes must be positive".into()));
    }
    if exact_d1 && d != 1 {
        return Err(Error::Config(
            "exact coverage is only available for d = 1".into(),
        ));
    }
    if threads == Some(0) {
        return Err(Error::Config("threads must be positive".into()));
    }
    Ok(())
}

/// Rejects horizons at which discs would wrap around the torus.
fn check_horizon(d: usize, lambda: f64, system_size: f64, t: f64) -> Result<()> {
    let spec = TorusSpec::for_system_size(d, lambda, system_size)?;
    if t > spec.wrap_radius() {
        return Err(Error::Config(format!(
            "time {t:.3} exceeds the wrap radius {:.3}; increase the system size",
            spec.wrap_radius()
        )));
    }
    if t <= 0.0 {
        return Err(Error::Config(format!("target time {t:.3} is not positive")));
    }
    Ok(())
}

fn check_u_values(u_values: &[f64]) -> Result<()> {
    if u_values.is_empty() || u_values.iter().any(|u| !u.is_finite()) {
        return Err(Error::Config(
            "u_values must be a non-empty list of finite numbers".into(),
        ));
    }
    let mut sorted = u_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("u_values must be distinct".into()));
    }
    Ok(())
}

impl CltConfig {
    pub fn validate(&self) -> Result<f64> {
        check_common(
            self.d,
            self.system_size,
            self.probes,
            self.exact_d1,
            self.threads,
        )?;
        let lambda = self.rate.resolve(self.d)?;
        if !(self.alpha > 0.0 && self.alpha < 2.0 / 3.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 2/3), got {}",
                self.alpha
            )));
        }
        if self.replicates < 2 {
            return Err(Error::Config("need at least 2 replicates".into()));
        }
        check_u_values(&self.u_values)?;
        let [lo, hi] = self.gate;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("bad gate [{lo}, {hi}]")));
        }
        if self.seed_budget == 0 {
            return Err(Error::Config("seed budget must be positive".into()));
        }
        let u_max = self
            .u_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let u_min = self.u_values.iter().copied().fold(f64::INFINITY, f64::min);
        let v = self.alpha * self.system_size.ln() / lambda;
        if (self.system_size.ln() + u_min) / lambda <= v {
            return Err(Error::Config(
                "every target time must come after the snapshot".into(),
            ));
        }
        check_horizon(
            self.d,
            lambda,
            self.system_size,
            (self.system_size.ln() + u_max) / lambda,
        )?;
        Ok(lambda)
    }
}

impl CollapseConfig {
    pub fn validate(&self) -> Result<f64> {
        check_common(
            self.d,
            self.system_size,
            self.probes,
            self.exact_d1,
            self.threads,
        )?;
        let lambda = self.rate.resolve(self.d)?;
        if self.replicates < 2 {
            return Err(Error::Config("need at least 2 replicates".into()));
        }
        check_u_values(&self.u_values)?;
        if !(self.w_horizon >= 8.0) {
            return Err(Error::Config("w_horizon must be at least 8".into()));
        }
        let u_max = self
            .u_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        check_horizon(
            self.d,
            lambda,
            self.system_size,
            (self.system_size.ln() + u_max) / lambda,
        )?;
        Ok(lambda)
    }
}

impl VarianceConfig {
    pub fn validate(&self) -> Result<f64> {
        if self.system_sizes.len() < 2 {
            return Err(Error::Config("need at least two system sizes".into()));
        }
        for &size in &self.system_sizes {
            check_common(self.d, size, self.probes, self.exact_d1, self.threads)?;
        }
        let lambda = self.rate.resolve(self.d)?;
        if !(0.0 < self.alpha1 && self.alpha1 < self.alpha2 && self.alpha2 <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < alpha1 < alpha2 <= 1, got {} and {}",
                self.alpha1, self.alpha2
            )));
        }
        if self.replicates < 2 || self.snapshots == 0 {
            return Err(Error::Config(
                "need at least 2 replicates and 1 snapshot".into(),
            ));
        }
        for &size in &self.system_sizes {
            let s = self.alpha1 * size.ln() / lambda;
            let t = (self.alpha2 * size.ln() + self.u) / lambda;
            if t <= s {
                return Err(Error::Config(format!(
                    "target time precedes the snapshot at system size {size}"
                )));
            }
            check_horizon(self.d, lambda, size, t)?;
        }
        Ok(lambda)
    }
}
