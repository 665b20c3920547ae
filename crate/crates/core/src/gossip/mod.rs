//! Exact event-driven simulation of the gossip process.
//!
//! Every birth of the flattened branching process is a transmission record
//! `(τ_j, P_j, K(j), Q_j)`: a new centre `P_j` uniform on the torus, reached
//! from a transmitter `Q_j` uniform in the disc of a source record `K(j)`
//! chosen with probability proportional to `(τ_j - τ_l)^d`. A record is
//! kept when its source is kept and no earlier kept disc covered `Q_j` at
//! time `τ_j`, so contacts always come from the earliest informed
//! neighbourhood and kept births occur at rate `ρ · vol(L_t)`.

mod index;
mod sampler;
mod snapshot;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmj::{w_from_births, CmjParams, CmjState};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::torus::{Disc, TorusPoint, TorusSpec};

use index::{DiscIndex, IndexedDisc};
use sampler::AgeSampler;

pub use snapshot::{Snapshot, SNAPSHOT_VERSION};

/// Default cap on the number of records.
pub const DEFAULT_RECORD_CAP: usize = 5_000_000;

/// Where a state's random stream came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub replicate: u64,
    pub stage: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionRecord {
    pub tau: f64,
    pub p: TorusPoint,
    pub k_source: Option<usize>,
    pub q_source: Option<TorusPoint>,
    pub kept: bool,
    /// Kept, but `p` was already informed at `tau`.
    pub redundant: bool,
}

impl TransmissionRecord {
    pub fn ancestor(p: TorusPoint) -> Self {
        Self {
            tau: 0.0,
            p,
            k_source: None,
            q_source: None,
            kept: true,
            redundant: false,
        }
    }

    pub fn disc(&self) -> Disc {
        Disc::new(self.p, self.tau)
    }
}

/// `N_t`, `M_t = Σ (t - τ_j)^d` over kept records and the same over all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessStats {
    pub n_kept: usize,
    pub m_kept: f64,
    pub n_all: usize,
    pub m_all: f64,
}

#[derive(Debug, Clone)]
pub struct GossipState {
    spec: TorusSpec,
    params: CmjParams,
    records: Vec<TransmissionRecord>,
    t_now: f64,
    clock: CmjState,
    sampler: AgeSampler,
    index: DiscIndex,
    rng: SimRng,
    lineage: SeedLineage,
}

impl GossipState {
    /// A single informed point at the origin at time 0.
    pub fn new(spec: TorusSpec, lambda: f64, rng: SimRng, lineage: SeedLineage) -> Result<Self> {
        let origin = spec.point(&vec![0.0; spec.d()])?;
        Self::from_records(
            spec,
            lambda,
            vec![TransmissionRecord::ancestor(origin)],
            0.0,
            rng,
            lineage,
        )
    }

    /// Rebuilds a state from its record list, validating the invariants.
    pub fn from_records(
        spec: TorusSpec,
        lambda: f64,
        records: Vec<TransmissionRecord>,
        t_now: f64,
        rng: SimRng,
        lineage: SeedLineage,
    ) -> Result<Self> {
        let d = spec.d();
        let params = CmjParams::with_lambda(d, lambda)?;
        validate_records(&spec, &records)?;
        let births: Vec<f64> = records.iter().map(|r| r.tau).collect();
        let clock = CmjState::from_births(params, births, t_now)?.with_cap(DEFAULT_RECORD_CAP);
        spec.check_radius(t_now)?;
        let mut sampler = AgeSampler::new(d);
        let mut index = DiscIndex::new(d, spec.side(), lambda);
        for (j, r) in records.iter().enumerate() {
            sampler.push(r.tau);
            if r.kept && !r.redundant {
                index.ensure(r.tau);
                index.push(IndexedDisc {
                    c: *r.p.raw(),
                    tau: r.tau,
                    rec: j as u32,
                });
            }
        }
        index.ensure(t_now);
        Ok(Self {
            spec,
            params,
            records,
            t_now,
            clock,
            sampler,
            index,
            rng,
            lineage,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.clock = self.clock.with_cap(cap);
        self
    }

    pub(crate) fn restore_clock_sums(&mut self, h: &[f64]) -> Result<()> {
        self.clock.restore_sums(h)
    }

    pub(crate) fn clock_sums(&self) -> &[f64] {
        self.clock.clock().h()
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn params(&self) -> &CmjParams {
        &self.params
    }

    pub fn records(&self) -> &[TransmissionRecord] {
        &self.records
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }

    pub fn rng(&self) -> &SimRng {
        &self.rng
    }

    /// Swaps in a new random stream, e.g. for a continuation.
    pub fn reseed(&mut self, rng: SimRng, lineage: SeedLineage) {
        self.rng = rng;
        self.lineage = lineage;
    }

    /// Generates the next transmission, wherever it falls in time.
    pub fn next_event(&mut self) -> Result<&TransmissionRecord> {
        let t = self.clock.next_birth_time(&mut self.rng)?;
        self.event_at(t)?;
        Ok(self.records.last().expect("just pushed"))
    }

    /// Generates every transmission in `(t_now, target]`.
    pub fn run_until(&mut self, target: f64) -> Result<()> {
        if target < self.t_now {
            return Err(Error::TimeOrder {
                t: target,
                t_now: self.t_now,
            });
        }
        self.spec.check_radius(target)?;
        loop {
            let t = self.clock.next_birth_time(&mut self.rng)?;
            if t > target {
                break;
            }
            self.event_at(t)?;
        }
        self.clock.advance_idle(target)?;
        self.t_now = target;
        self.index.ensure(target);
        Ok(())
    }

    /// Runs through the sorted `times`, calling `observe` at each one.
    pub fn run_with_checkpoints<F>(&mut self, times: &[f64], mut observe: F) -> Result<()>
    where
        F: FnMut(&GossipState, f64) -> Result<()>,
    {
        for &t in times {
            self.run_until(t)?;
            observe(self, t)?;
        }
        Ok(())
    }

    fn event_at(&mut self, t: f64) -> Result<()> {
        self.spec.check_radius(t)?;
        self.index.ensure(t);
        let j = self.records.len();
        let u: f64 = self.rng.random();
        let k = self.sampler.sample(t, u);
        let source = self.records[k];
        let q = self
            .spec
            .uniform_in_ball(&mut self.rng, &source.p, t - source.tau)?;
        let p = self.spec.uniform_point(&mut self.rng);
        let kept = self.thinning_verdict(k, &q, t);
        let redundant = kept && self.index.any_within(p.raw(), 0.0, t, u32::MAX, u32::MAX);
        self.clock.commit_birth(t)?;
        self.sampler.push(t);
        if kept && !redundant {
            self.index.push(IndexedDisc {
                c: *p.raw(),
                tau: t,
                rec: j as u32,
            });
        }
        self.records.push(TransmissionRecord {
            tau: t,
            p,
            k_source: Some(k),
            q_source: Some(q),
            kept,
            redundant,
        });
        self.t_now = t;
        Ok(())
    }

    /// A transmission at `t` from `q` in the disc of record `k` is kept iff
    /// `k` is kept and no earlier kept disc already covered `q`.
    pub(crate) fn thinning_verdict(&self, k: usize, q: &TorusPoint, t: f64) -> bool {
        self.records[k].kept && !self.index.any_within(q.raw(), 0.0, t, k as u32, u32::MAX)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.t_now || t < 0.0 {
            Err(Error::TimeOrder {
                t,
                t_now: self.t_now,
            })
        } else {
            Ok(())
        }
    }

    /// Kept discs born by `t`, redundant ones excluded (they lie inside
    /// earlier kept discs and do not change the union).
    pub fn kept_discs(&self, t: f64) -> Vec<Disc> {
        self.index
            .discs()
            .iter()
            .take_while(|disc| disc.tau <= t)
            .map(|disc| self.records[disc.rec as usize].disc())
            .collect()
    }

    /// Whether `p` lies in `L_t`.
    pub fn is_covered(&self, p: &TorusPoint, t: f64) -> Result<bool> {
        self.check_time(t)?;
        Ok(self.index.any_within(p.raw(), 0.0, t, u32::MAX, u32::MAX))
    }

    /// Kept, non-redundant records whose disc at `v` meets no other such disc.
    pub fn isolated_records(&self, v: f64) -> Result<Vec<usize>> {
        self.check_time(v)?;
        Ok(self
            .index
            .discs()
            .iter()
            .take_while(|disc| disc.tau <= v)
            .filter(|disc| {
                !self
                    .index
                    .any_within(&disc.c, v - disc.tau, v, u32::MAX, disc.rec)
            })
            .map(|disc| disc.rec as usize)
            .collect())
    }

    /// `Ŵ(v)`, built from the isolated discs of `L_v`.
    pub fn w_hat(&self, v: f64) -> Result<f64> {
        let isolated = self.isolated_records(v)?;
        Ok(w_from_births(
            self.spec.d(),
            self.params.lambda,
            isolated.iter().map(|&j| self.records[j].tau),
            v,
        ))
    }

    /// `W*(s)`, the same sum over every record born by `s`.
    pub fn w_star(&self, s: f64) -> Result<f64> {
        self.check_time(s)?;
        let taus = self
            .records
            .iter()
            .map(|r| r.tau)
            .take_while(|&tau| tau <= s);
        Ok(w_from_births(self.spec.d(), self.params.lambda, taus, s))
    }

    /// Fraction of `m` fresh uniform probes informed by time `t`, with its
    /// binomial standard error.
    pub fn coverage_fraction<R: Rng + ?Sized>(
        &self,
        t: f64,
        m: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "probe count must be positive".into(),
            ));
        }
        self.check_time(t)?;
        let mut hits = 0usize;
        for _ in 0..m {
            let probe = self.spec.uniform_point(rng);
            if self
                .index
                .any_within(probe.raw(), 0.0, t, u32::MAX, u32::MAX)
            {
                hits += 1;
            }
        }
        let p = hits as f64 / m as f64;
        Ok((p, (p * (1.0 - p) / m as f64).sqrt()))
    }

    /// `L_t / L` from the exact arc union (`d = 1`).
    pub fn coverage_exact(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let length = self.spec.arc_union_length(&self.kept_discs(t), t)?;
        Ok(length / self.spec.side())
    }

    pub fn process_stats(&self, t: f64) -> Result<ProcessStats> {
        self.check_time(t)?;
        let d = self.spec.d() as i32;
        let mut stats = ProcessStats {
            n_kept: 0,
            m_kept: 0.0,
            n_all: 0,
            m_all: 0.0,
        };
        for r in self.records.iter().take_while(|r| r.tau <= t) {
            let m = (t - r.tau).powi(d);
            stats.n_all += 1;
            stats.m_all += m;
            if r.kept {
                stats.n_kept += 1;
                stats.m_kept += m;
            }
        }
        Ok(stats)
    }
}

fn validate_records(spec: &TorusSpec, records: &[TransmissionRecord]) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    let Some(first) = records.first() else {
        return Err(Error::Empty("a gossip state needs the ancestor record"));
    };
    if first.tau != 0.0 || !first.kept || first.redundant || first.k_source.is_some() {
        return bad("record 0 must be the kept ancestor born at 0".into());
    }
    for (j, r) in records.iter().enumerate() {
        if r.p.dim() != spec.d() {
            return Err(Error::DimensionMismatch {
                expected: spec.d(),
                got: r.p.dim(),
            });
        }
        if r.redundant && !r.kept {
            return bad(format!("record {j} is redundant but not kept"));
        }
        if j == 0 {
            continue;
        }
        if !(r.tau > records[j - 1].tau) {
            return bad(format!("record {j} is not later than its predecessor"));
        }
        match (r.k_source, r.q_source) {
            (Some(k), Some(q)) if k < j => {
                let src = &records[k];
                if src.p.dim() != q.dim()
                    || spec.distance(&src.p, &q)? > (r.tau - src.tau) * (1.0 + 1e-12) + 1e-12
                {
                    return bad(format!("record {j}: transmitter outside the source disc"));
                }
            }
            _ => return bad(format!("record {j} lacks a valid source")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
