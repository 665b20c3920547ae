//! Conditional variance of `L_t/L` given the state at an earlier time `s`,
//! against the shape `Λ^{-2} e^{2λ(t-s)} (λ^d M_s + N_s)`.
//!
//! With `s = α₁ λ⁻¹ log Λ` and `t = λ⁻¹(α₂ log Λ + u)` the shape grows like
//! `Λ^{2α₂ - α₁ - 2}`, which is the slope the study fits.

use std::time::Instant;

use serde::Serialize;

use super::config::VarianceConfig;
use super::{fmt_f64, measure_coverage, to_json, Check, Manifest, VERSION};
use crate::error::Result;
use crate::gossip::{GossipState, SeedLineage, Snapshot};
use crate::par::{map_indexed, with_threads};
use crate::rng::{stage, stream};
use crate::stats::{ols, summarize};
use crate::torus::TorusSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRecord {
    pub system_size: f64,
    pub snapshot: u64,
    pub replicate: u64,
    pub coverage: f64,
    pub probe_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotVariance {
    pub snapshot: u64,
    pub n_kept: usize,
    pub m_kept: f64,
    pub bound_shape: f64,
    pub mean_coverage: f64,
    /// Sample variance across continuations, less the mean probe variance.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceLevel {
    pub system_size: f64,
    pub s: f64,
    pub t: f64,
    pub mean_variance: f64,
    pub mean_bound_shape: f64,
    /// Mean over snapshots of variance / bound shape.
    pub ratio: f64,
    pub snapshots: Vec<SnapshotVariance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceResult {
    pub config: VarianceConfig,
    pub lambda: f64,
    pub levels: Vec<VarianceLevel>,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    pub ratio_spread: f64,
    pub records: Vec<VarianceRecord>,
    pub wall_time_secs: f64,
}

pub fn variance_study(config: &VarianceConfig) -> Result<VarianceResult> {
    let start = Instant::now();
    let lambda = config.validate()?;
    let d = config.d;
    let n_snap = config.snapshots;
    let n_rep = config.replicates;
    let mut levels = Vec::with_capacity(config.system_sizes.len());
    let mut records = Vec::new();

    with_threads(config.threads, || {
        for (level, &size) in config.system_sizes.iter().enumerate() {
            let spec = TorusSpec::for_system_size(d, lambda, size)?;
            let s = config.alpha1 * size.ln() / lambda;
            let t = (config.alpha2 * size.ln() + config.u) / lambda;
            let base = (level * n_snap) as u64;
            let snaps: Vec<(Snapshot, usize, f64)> = map_indexed(n_snap, |k| {
                let id = base + k as u64;
                let lineage = SeedLineage {
                    master_seed: config.master_seed,
                    replicate: id,
                    stage: stage::SNAPSHOT,
                };
                let mut state = GossipState::new(
                    spec,
                    lambda,
                    stream(config.master_seed, id, stage::SNAPSHOT),
                    lineage,
                )?;
                state.run_until(s)?;
                let stats = state.process_stats(s)?;
                Ok((state.snapshot(), stats.n_kept, stats.m_kept))
            })?;
            let cont: Vec<VarianceRecord> = map_indexed(n_snap * n_rep, |i| {
                let (k, r) = (i / n_rep, i % n_rep);
                let id = (base + k as u64) * n_rep as u64 + r as u64;
                let mut state = snaps[k].0.restore()?;
                let lineage = SeedLineage {
                    master_seed: config.master_seed,
                    replicate: id,
                    stage: stage::CONTINUATION,
                };
                state.reseed(stream(config.master_seed, id, stage::CONTINUATION), lineage);
                state.run_until(t)?;
                let mut probes = stream(config.master_seed, id, stage::PROBES);
                let (coverage, probe_se) =
                    measure_coverage(&state, t, config.exact_d1, config.probes, &mut probes)?;
                Ok(VarianceRecord {
                    system_size: size,
                    snapshot: k as u64,
                    replicate: r as u64,
                    coverage,
                    probe_se,
                })
            })?;

            let shape_scale = (2.0 * lambda * (t - s)).exp() / (size * size);
            let mut per_snap = Vec::with_capacity(n_snap);
            for (k, (_, n_kept, m_kept)) in snaps.iter().enumerate() {
                let rows: Vec<&VarianceRecord> =
                    cont.iter().filter(|r| r.snapshot == k as u64).collect();
                let cov: Vec<f64> = rows.iter().map(|r| r.coverage).collect();
                let summary = summarize(&cov)?;
                let probe_var =
                    rows.iter().map(|r| r.probe_se * r.probe_se).sum::<f64>() / rows.len() as f64;
                per_snap.push(SnapshotVariance {
                    snapshot: k as u64,
                    n_kept: *n_kept,
                    m_kept: *m_kept,
                    bound_shape: shape_scale * (lambda.powi(d as i32) * m_kept + *n_kept as f64),
                    mean_coverage: summary.mean,
                    variance: summary.variance - probe_var,
                });
            }
            let nf = n_snap as f64;
            levels.push(VarianceLevel {
                system_size: size,
                s,
                t,
                mean_variance: per_snap.iter().map(|p| p.variance).sum::<f64>() / nf,
                mean_bound_shape: per_snap.iter().map(|p| p.bound_shape).sum::<f64>() / nf,
                ratio: per_snap
                    .iter()
                    .map(|p| p.variance / p.bound_shape)
                    .sum::<f64>()
                    / nf,
                snapshots: per_snap,
            });
            records.extend(cont);
        }
        Ok(())
    })?;

    let xs: Vec<f64> = levels.iter().map(|l| l.system_size.ln()).collect();
    let ys: Vec<f64> = levels
        .iter()
        .map(|l| l.mean_variance.max(f64::MIN_POSITIVE).ln())
        .collect();
    let (fitted_slope, _) = ols(&xs, &ys)?;
    let ratios: Vec<f64> = levels.iter().map(|l| l.ratio).collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(VarianceResult {
        config: config.clone(),
        lambda,
        levels,
        fitted_slope,
        predicted_slope: 2.0 * config.alpha2 - config.alpha1 - 2.0,
        ratio_spread: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        records,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

impl VarianceResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("system_size,snapshot,replicate,coverage,probe_se\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(r.system_size),
                r.snapshot,
                r.replicate,
                fmt_f64(r.coverage),
                fmt_f64(r.probe_se)
            ));
        }
        s
    }

    pub fn checks(&self) -> Vec<Check> {
        let gap = (self.fitted_slope - self.predicted_slope).abs();
        vec![
            Check::new(
                format!("log-log slope vs predicted {:.3}", self.predicted_slope),
                self.fitted_slope,
                "within 0.3",
                gap <= 0.3,
            ),
            Check::new(
                "variance/bound-shape spread",
                self.ratio_spread,
                "<= 10",
                self.ratio_spread <= 10.0,
            ),
        ]
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            command: "variance".into(),
            version: VERSION.into(),
            config: to_json(&self.config),
            lambda: self.lambda,
            master_seed: self.config.master_seed,
            stages: vec![
                ("snapshot".into(), stage::SNAPSHOT),
                ("continuation".into(), stage::CONTINUATION),
                ("probes".into(), stage::PROBES),
            ],
            threads: self.config.threads,
            phi_cache_sha256: None,
            wall_time_secs: self.wall_time_secs,
            summary: serde_json::json!({
                "fitted_slope": self.fitted_slope,
                "predicted_slope": self.predicted_slope,
                "ratio_spread": self.ratio_spread,
                "levels": to_json(&self.levels),
            }),
            checks: self.checks(),
        }
    }
}
