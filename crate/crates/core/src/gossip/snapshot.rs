//! Versioned little-endian snapshot encoding of a [`GossipState`].
//!
//! Layout: magic `GSNP`, format version (u32), `d` (u32), side, ρ, ν(K), λ,
//! `t_now` (f64), record count, master seed, replicate, stage (u64); then per
//! record `tau`, `d` coordinates of `p`, `k_source` (`u64::MAX` for none),
//! `d` coordinates of `q` (NaN for none) and a flag byte (bit 0 kept, bit 1
//! redundant); then the `d + 2` branching-clock sums (f64), the ChaCha seed
//! (32 bytes), stream (u64) and word position (u128); finally the first 8 bytes of the SHA-256 of everything
//! before it, as a u64.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

use super::{GossipState, SeedLineage, TransmissionRecord};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::torus::{TorusPoint, TorusSpec, MAX_DIM};

const MAGIC: &[u8; 4] = b"GSNP";
pub const SNAPSHOT_VERSION: u32 = 1;
const NONE: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    bytes: Vec<u8>,
}

fn content_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a gossip snapshot".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!(
                "snapshot version {version}, expected {SNAPSHOT_VERSION}"
            )));
        }
        let split = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[split..].try_into().expect("8 bytes"));
        let computed = content_hash(&bytes[..split]);
        if stored != computed {
            return Err(Error::HashMismatch { stored, computed });
        }
        Ok(Self { bytes })
    }

    pub fn hash(&self) -> u64 {
        u64::from_le_bytes(
            self.bytes[self.bytes.len() - 8..]
                .try_into()
                .expect("8 bytes"),
        )
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_bytes(std::fs::read(path)?)
    }

    /// Time at which the snapshot was taken.
    pub fn time(&self) -> f64 {
        Reader {
            buf: &self.bytes,
            pos: 8 + 4 + 4 * 8,
        }
        .f64()
        .expect("validated header")
    }

    pub fn restore(&self) -> Result<GossipState> {
        let mut r = Reader {
            buf: &self.bytes[..self.bytes.len() - 8],
            pos: 8,
        };
        let d = r.u32()? as usize;
        let side = r.f64()?;
        let rho = r.f64()?;
        let nu_k = r.f64()?;
        let lambda = r.f64()?;
        let t_now = r.f64()?;
        let n = r.u64()? as usize;
        let lineage = SeedLineage {
            master_seed: r.u64()?,
            replicate: r.u64()?,
            stage: r.u64()?,
        };
        let spec = TorusSpec::new(d, side)?;
        if spec.nu_k() != nu_k {
            return Err(Error::Format(
                "stored unit-ball volume does not match the dimension".into(),
            ));
        }
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let tau = r.f64()?;
            let p = r.point(d)?;
            let k = r.u64()?;
            let q = r.point(d)?;
            let flags = r.u8()?;
            let k_source = (k != NONE).then_some(k as usize);
            records.push(TransmissionRecord {
                tau,
                p,
                k_source,
                q_source: k_source.map(|_| q),
                kept: flags & 1 != 0,
                redundant: flags & 2 != 0,
            });
        }
        let mut sums = vec![0.0; d + 2];
        for h in sums.iter_mut() {
            *h = r.f64()?;
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.take(32)?);
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        if r.pos != r.buf.len() {
            return Err(Error::Format("trailing bytes in snapshot".into()));
        }
        let mut rng = SimRng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let mut state = GossipState::from_records(spec, lambda, records, t_now, rng, lineage)?;
        state
            .restore_clock_sums(&sums)
            .map_err(|e| Error::Format(e.to_string()))?;
        if state.params.rho.to_bits() != rho.to_bits() {
            return Err(Error::Format("stored rho does not match lambda".into()));
        }
        Ok(state)
    }
}

impl GossipState {
    pub fn snapshot(&self) -> Snapshot {
        let d = self.spec.d();
        let mut out = Vec::with_capacity(96 + self.records.len() * (17 + 16 * d) + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for x in [
            self.spec.side(),
            self.params.rho,
            self.params.nu_k,
            self.params.lambda,
            self.t_now,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in [
            self.records.len() as u64,
            self.lineage.master_seed,
            self.lineage.replicate,
            self.lineage.stage,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for rec in &self.records {
            out.extend_from_slice(&rec.tau.to_le_bytes());
            for x in rec.p.coords() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&rec.k_source.map_or(NONE, |k| k as u64).to_le_bytes());
            for k in 0..d {
                let x = rec.q_source.map_or(f64::NAN, |q| q.coords()[k]);
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.push(u8::from(rec.kept) | (u8::from(rec.redundant) << 1));
        }
        for h in self.clock_sums() {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        let hash = content_hash(&out);
        out.extend_from_slice(&hash.to_le_bytes());
        Snapshot { bytes: out }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("snapshot truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn point(&mut self, d: usize) -> Result<TorusPoint> {
        let mut c = [0.0; MAX_DIM];
        for x in c.iter_mut().take(d) {
            *x = self.f64()?;
        }
        Ok(TorusPoint::from_raw(c, d))
    }
}
