//! Conditional CLT: one gated snapshot at `v`, many continuations.

use std::time::Instant;

use serde::Serialize;

use super::config::CltConfig;
use super::{
    fmt_f64, limit_curves, measure_coverage, target_times, to_json, Check, Manifest, VERSION,
};
use crate::error::{Error, Result};
use crate::gossip::{GossipState, SeedLineage};
use crate::laplace::{c_hat, sigma2};
use crate::par::{map_indexed, with_threads};
use crate::rng::{check_distinct, stage, stream};
use crate::stats::{correlation, distance_to_normal, summarize, DistanceReport, SampleSummary};
use crate::torus::TorusSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub replicate: u64,
    pub u: f64,
    pub coverage: f64,
    pub what_v: f64,
    pub ell_target: f64,
    pub residual: f64,
    pub sigma2_target: f64,
    pub probe_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateReport {
    pub v: f64,
    pub attempts: usize,
    pub rejections: usize,
    pub pass_rate: f64,
    pub accepted_seed: u64,
    pub w_hat: f64,
    pub isolated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UStudy {
    pub u: f64,
    pub summary: SampleSummary,
    pub distance: DistanceReport,
    pub sigma2: f64,
    /// `σ²` plus the probe-noise term.
    pub target_variance: f64,
    pub variance_ratio: f64,
    pub w1_over_sigma: f64,
    /// Mean residual in units of its standard error.
    pub mean_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CltResult {
    pub config: CltConfig,
    pub lambda: f64,
    pub gate: GateReport,
    pub per_u: Vec<UStudy>,
    pub records: Vec<ResidualRecord>,
    pub phi_cache_sha256: Option<String>,
    pub wall_time_secs: f64,
}

pub fn clt_experiment(config: &CltConfig) -> Result<CltResult> {
    let start = Instant::now();
    let lambda = config.validate()?;
    let (curves, cache_hash) = limit_curves(config.d, config.phi_cache.as_deref())?;
    check_distinct(
        config.master_seed,
        stage::CONTINUATION,
        config.replicates as u64,
    )?;
    let spec = TorusSpec::for_system_size(config.d, lambda, config.system_size)?;
    let v = config.alpha * config.system_size.ln() / lambda;

    let (snapshot, gate) = gated_snapshot(config, spec, lambda, v)?;
    let (times, order) = target_times(lambda, config.system_size, &config.u_values);
    let exact = config.exact_d1;
    let w_hat = gate.w_hat;
    let scale = (0.5 * lambda * v).exp();
    let mut targets = Vec::with_capacity(times.len());
    for &i in &order {
        let u = config.u_values[i];
        let ell = curves.ell_at(u + (c_hat(config.d) * w_hat).ln())?;
        targets.push((u, ell, sigma2(u, w_hat, &curves)?));
    }

    let per_rep = with_threads(config.threads, || {
        map_indexed(config.replicates, |r| {
            let r = r as u64;
            let mut state = snapshot.restore()?;
            let lineage = SeedLineage {
                master_seed: config.master_seed,
                replicate: r,
                stage: stage::CONTINUATION,
            };
            state.reseed(stream(config.master_seed, r, stage::CONTINUATION), lineage);
            let mut probes = stream(config.master_seed, r, stage::PROBES);
            let mut out = Vec::with_capacity(times.len());
            let mut k = 0;
            state.run_with_checkpoints(&times, |st, t| {
                let (coverage, probe_se) =
                    measure_coverage(st, t, exact, config.probes, &mut probes)?;
                let (u, ell_target, sigma2_target) = targets[k];
                k += 1;
                out.push(ResidualRecord {
                    replicate: r,
                    u,
                    coverage,
                    what_v: w_hat,
                    ell_target,
                    residual: scale * (coverage - ell_target),
                    sigma2_target,
                    probe_se,
                });
                Ok(())
            })?;
            Ok(out)
        })
    })?;
    let mut records: Vec<ResidualRecord> = per_rep.into_iter().flatten().collect();
    records.sort_by(|a, b| a.replicate.cmp(&b.replicate).then(a.u.total_cmp(&b.u)));

    let per_u = summarize_by_u(&records, &config.u_values, lambda * v, exact)?;
    Ok(CltResult {
        config: config.clone(),
        lambda,
        gate,
        per_u,
        records,
        phi_cache_sha256: cache_hash,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn gated_snapshot(
    config: &CltConfig,
    spec: TorusSpec,
    lambda: f64,
    v: f64,
) -> Result<(crate::gossip::Snapshot, GateReport)> {
    let [lo, hi] = config.gate;
    for attempt in 0..config.seed_budget as u64 {
        let lineage = SeedLineage {
            master_seed: config.master_seed,
            replicate: attempt,
            stage: stage::SNAPSHOT,
        };
        let rng = stream(config.master_seed, attempt, stage::SNAPSHOT);
        let mut state = GossipState::new(spec, lambda, rng, lineage)?;
        state.run_until(v)?;
        let isolated = state.isolated_records(v)?.len();
        let w_hat = state.w_hat(v)?;
        if isolated > 0 && (lo..=hi).contains(&w_hat) {
            let attempts = attempt as usize + 1;
            return Ok((
                state.snapshot(),
                GateReport {
                    v,
                    attempts,
                    rejections: attempts - 1,
                    pass_rate: 1.0 / attempts as f64,
                    accepted_seed: attempt,
                    w_hat,
                    isolated,
                },
            ));
        }
    }
    Err(Error::Config(format!(
        "gate [{lo}, {hi}] not passed within {} snapshot seeds",
        config.seed_budget
    )))
}

fn summarize_by_u(
    records: &[ResidualRecord],
    u_values: &[f64],
    lambda_v: f64,
    exact: bool,
) -> Result<Vec<UStudy>> {
    let mut out = Vec::with_capacity(u_values.len());
    for &u in u_values {
        let rows: Vec<&ResidualRecord> = records.iter().filter(|r| r.u == u).collect();
        let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let sigma2 = rows[0].sigma2_target;
        let probe_var = if exact {
            0.0
        } else {
            lambda_v.exp() * rows.iter().map(|r| r.probe_se * r.probe_se).sum::<f64>()
                / rows.len() as f64
        };
        let target_variance = sigma2 + probe_var;
        let sd = target_variance.sqrt();
        let summary = summarize(&residuals)?;
        let distance = distance_to_normal(&residuals, 0.0, sd)?;
        out.push(UStudy {
            u,
            summary,
            distance,
            sigma2,
            target_variance,
            variance_ratio: summary.variance / target_variance,
            w1_over_sigma: distance.w1 / sd,
            mean_z: summary.mean / summary.se_mean,
        });
    }
    Ok(out)
}

impl CltResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "replicate,u,coverage,what_v,ell_target,residual,sigma2_target,probe_se\n",
        );
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.replicate,
                fmt_f64(r.u),
                fmt_f64(r.coverage),
                fmt_f64(r.what_v),
                fmt_f64(r.ell_target),
                fmt_f64(r.residual),
                fmt_f64(r.sigma2_target),
                fmt_f64(r.probe_se)
            ));
        }
        s
    }

    pub fn residuals(&self, u: f64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.u == u)
            .map(|r| r.residual)
            .collect()
    }

    /// Correlation across continuations of the residuals at two `u` values.
    pub fn residual_correlation(&self, u_a: f64, u_b: f64) -> Result<f64> {
        correlation(&self.residuals(u_a), &self.residuals(u_b))
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for s in &self.per_u {
            let u = s.u;
            out.push(Check::new(
                format!("mean residual z at u={u}"),
                s.mean_z,
                "|z| <= 5",
                s.mean_z.abs() <= 5.0,
            ));
            out.push(Check::new(
                format!("variance ratio at u={u}"),
                s.variance_ratio,
                "[0.7, 1.4]",
                (0.7..=1.4).contains(&s.variance_ratio),
            ));
            out.push(Check::new(
                format!("W1/sigma at u={u}"),
                s.w1_over_sigma,
                "<= 0.15",
                s.w1_over_sigma <= 0.15,
            ));
        }
        out
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            command: "clt".into(),
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
            phi_cache_sha256: self.phi_cache_sha256.clone(),
            wall_time_secs: self.wall_time_secs,
            summary: serde_json::json!({ "gate": to_json(&self.gate), "per_u": to_json(&self.per_u) }),
            checks: self.checks(),
        }
    }
}
