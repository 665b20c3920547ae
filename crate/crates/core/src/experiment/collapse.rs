//! Unconditional curve collapse: the law of `L_{t_Λ(u)}/L` against the law
//! of `ℓ(u + log(ĉ_d W))`.

use std::time::Instant;

use serde::Serialize;

use super::config::CollapseConfig;
use super::{
    fmt_f64, limit_curves, measure_coverage, target_times, to_json, Check, Manifest, VERSION,
};
use crate::cmj::{sample_w, CmjParams};
use crate::error::Result;
use crate::gossip::{GossipState, SeedLineage};
use crate::laplace::c_hat;
use crate::par::{map_indexed, with_threads};
use crate::rng::{check_distinct, stage, stream};
use crate::stats::{summarize, two_sample_report, DistanceReport, SampleSummary};
use crate::torus::TorusSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseRecord {
    pub replicate: u64,
    pub u: f64,
    pub coverage: f64,
    pub probe_se: f64,
    /// Independent draw of the limit variable, shared across system sizes.
    pub w_limit: f64,
    pub ell_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UCollapse {
    pub u: f64,
    pub distance: DistanceReport,
    pub coverage: SampleSummary,
    pub limit: SampleSummary,
    /// Every coverage value lies strictly inside `(0, 1)`.
    pub interior: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseResult {
    pub config: CollapseConfig,
    pub lambda: f64,
    pub per_u: Vec<UCollapse>,
    pub records: Vec<CollapseRecord>,
    pub phi_cache_sha256: Option<String>,
    pub wall_time_secs: f64,
}

pub fn collapse_experiment(config: &CollapseConfig) -> Result<CollapseResult> {
    let start = Instant::now();
    let lambda = config.validate()?;
    let (curves, cache_hash) = limit_curves(config.d, config.phi_cache.as_deref())?;
    check_distinct(
        config.master_seed,
        stage::FULL_RUN,
        config.replicates as u64,
    )?;
    let spec = TorusSpec::for_system_size(config.d, lambda, config.system_size)?;
    let unit = CmjParams::with_lambda(config.d, 1.0)?;
    let (times, order) = target_times(lambda, config.system_size, &config.u_values);
    let c = c_hat(config.d);

    let per_rep = with_threads(config.threads, || {
        map_indexed(config.replicates, |r| {
            let r = r as u64;
            let lineage = SeedLineage {
                master_seed: config.master_seed,
                replicate: r,
                stage: stage::FULL_RUN,
            };
            let mut state = GossipState::new(
                spec,
                lambda,
                stream(config.master_seed, r, stage::FULL_RUN),
                lineage,
            )?;
            let mut probes = stream(config.master_seed, r, stage::PROBES);
            // In λ = 1 units, so the draw is the same for every λ.
            let w = sample_w(
                &unit,
                config.w_horizon,
                &mut stream(config.master_seed, r, stage::LIMIT_W),
            )?;
            let mut out = Vec::with_capacity(times.len());
            let mut k = 0;
            state.run_with_checkpoints(&times, |st, t| {
                let u = config.u_values[order[k]];
                k += 1;
                let (coverage, probe_se) =
                    measure_coverage(st, t, config.exact_d1, config.probes, &mut probes)?;
                out.push(CollapseRecord {
                    replicate: r,
                    u,
                    coverage,
                    probe_se,
                    w_limit: w,
                    ell_limit: curves.ell_at(u + (c * w).ln())?,
                });
                Ok(())
            })?;
            Ok(out)
        })
    })?;
    let mut records: Vec<CollapseRecord> = per_rep.into_iter().flatten().collect();
    records.sort_by(|a, b| a.replicate.cmp(&b.replicate).then(a.u.total_cmp(&b.u)));

    let mut per_u = Vec::with_capacity(config.u_values.len());
    for &u in &config.u_values {
        let cov: Vec<f64> = records
            .iter()
            .filter(|r| r.u == u)
            .map(|r| r.coverage)
            .collect();
        let lim: Vec<f64> = records
            .iter()
            .filter(|r| r.u == u)
            .map(|r| r.ell_limit)
            .collect();
        per_u.push(UCollapse {
            u,
            distance: two_sample_report(&cov, &lim)?,
            coverage: summarize(&cov)?,
            limit: summarize(&lim)?,
            interior: cov.iter().all(|&x| x > 0.0 && x < 1.0),
        });
    }
    Ok(CollapseResult {
        config: config.clone(),
        lambda,
        per_u,
        records,
        phi_cache_sha256: cache_hash,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

impl CollapseResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("replicate,u,coverage,probe_se,w_limit,ell_limit\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.replicate,
                fmt_f64(r.u),
                fmt_f64(r.coverage),
                fmt_f64(r.probe_se),
                fmt_f64(r.w_limit),
                fmt_f64(r.ell_limit)
            ));
        }
        s
    }

    pub fn w1(&self, u: f64) -> Option<f64> {
        self.per_u.iter().find(|s| s.u == u).map(|s| s.distance.w1)
    }

    pub fn checks(&self) -> Vec<Check> {
        self.per_u
            .iter()
            .map(|s| {
                Check::new(
                    format!("two-sample W1 at u={}", s.u),
                    s.distance.w1,
                    "<= 0.05",
                    s.distance.w1 <= 0.05,
                )
            })
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            command: "collapse".into(),
            version: VERSION.into(),
            config: to_json(&self.config),
            lambda: self.lambda,
            master_seed: self.config.master_seed,
            stages: vec![
                ("full_run".into(), stage::FULL_RUN),
                ("probes".into(), stage::PROBES),
                ("limit_w".into(), stage::LIMIT_W),
            ],
            threads: self.config.threads,
            phi_cache_sha256: self.phi_cache_sha256.clone(),
            wall_time_secs: self.wall_time_secs,
            summary: to_json(&self.per_u),
            checks: self.checks(),
        }
    }
}
