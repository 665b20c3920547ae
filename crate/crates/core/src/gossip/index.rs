//! Spatial hash of the kept, non-redundant discs.
//!
//! Discs are appended in birth order. Those born before a cut time `τ_cut`
//! (few, but large) are scanned linearly; younger ones live in a uniform
//! grid whose cell width bounds their radius until `τ_cut + width`. The
//! grid is rebuilt when that horizon passes or the disc count doubles, with
//! the resolution chosen by a simple cost model.

use crate::torus::MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct IndexedDisc {
    pub c: [f64; MAX_DIM],
    pub tau: f64,
    pub rec: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct DiscIndex {
    d: usize,
    side: f64,
    lambda: f64,
    discs: Vec<IndexedDisc>,
    n_old: usize,
    per_dim: usize,
    cell_w: f64,
    valid_until: f64,
    rebuild_at_len: usize,
    cells: Vec<Vec<u32>>,
}

const BRUTE_LIMIT: usize = 64;
const MAX_CELLS: usize = 1 << 22;

impl DiscIndex {
    pub fn new(d: usize, side: f64, lambda: f64) -> Self {
        Self {
            d,
            side,
            lambda,
            discs: Vec::new(),
            n_old: 0,
            per_dim: 0,
            cell_w: f64::INFINITY,
            valid_until: f64::INFINITY,
            rebuild_at_len: BRUTE_LIMIT,
            cells: Vec::new(),
        }
    }

    pub fn discs(&self) -> &[IndexedDisc] {
        &self.discs
    }

    pub fn push(&mut self, disc: IndexedDisc) {
        let id = self.discs.len() as u32;
        self.discs.push(disc);
        if self.per_dim == 0 {
            self.n_old += 1;
        } else {
            let cell = self.cell_of(&disc.c);
            self.cells[cell].push(id);
        }
    }

    /// Makes queries at times `<= t` valid.
    pub fn ensure(&mut self, t: f64) {
        if t > self.valid_until || self.discs.len() >= self.rebuild_at_len {
            self.rebuild(t);
        }
    }

    fn rebuild(&mut self, t: f64) {
        let n = self.discs.len();
        self.rebuild_at_len = (2 * n).max(BRUTE_LIMIT);
        self.cells.clear();
        self.per_dim = 0;
        self.n_old = n;
        self.cell_w = f64::INFINITY;
        self.valid_until = f64::INFINITY;
        if n < BRUTE_LIMIT {
            return;
        }
        let fan = 3f64.powi(self.d as i32);
        let mut best_cost = n as f64;
        let mut best = None;
        let mut m = 3usize;
        while m.pow(self.d as u32) <= MAX_CELLS.min(4 * n + 64) {
            let w = self.side / m as f64;
            let cut = t - 0.5 * w;
            let n_old = self.discs.partition_point(|disc| disc.tau < cut);
            let per_cell = (n - n_old) as f64 / (m as f64).powi(self.d as i32);
            // Linear scan of old discs, neighbour cells, and amortised
            // rebuilds over the validity window.
            let cost = n_old as f64 + fan * (1.0 + per_cell) + 2.0 / (self.lambda * w);
            if cost < best_cost {
                best_cost = cost;
                best = Some((m, w, cut, n_old));
            }
            m = if m < 4 { 4 } else { m + m / 2 };
        }
        let Some((m, w, cut, n_old)) = best else {
            return;
        };
        self.per_dim = m;
        self.cell_w = w;
        self.n_old = n_old;
        self.valid_until = cut + w;
        self.cells = vec![Vec::new(); m.pow(self.d as u32)];
        for id in n_old..n {
            let cell = self.cell_of(&self.discs[id].c);
            self.cells[cell].push(id as u32);
        }
    }

    fn cell_coord(&self, x: f64) -> usize {
        ((x / self.cell_w) as usize).min(self.per_dim - 1)
    }

    fn cell_of(&self, c: &[f64; MAX_DIM]) -> usize {
        let mut idx = 0;
        for k in (0..self.d).rev() {
            idx = idx * self.per_dim + self.cell_coord(c[k]);
        }
        idx
    }

    #[inline]
    fn dist2(&self, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.d {
            let mut delta = (a[k] - b[k]).abs();
            if delta > 0.5 * self.side {
                delta = self.side - delta;
            }
            acc += delta * delta;
        }
        acc
    }

    #[inline]
    fn reaches(&self, disc: &IndexedDisc, p: &[f64; MAX_DIM], extra: f64, t: f64) -> bool {
        let r = extra + (t - disc.tau);
        disc.tau <= t && self.dist2(p, &disc.c) <= r * r
    }

    /// Whether some disc with record index `< limit` other than `skip`, born
    /// by `t`, comes within `extra` of `p` at time `t`. With `extra = 0` this
    /// is a point-cover query.
    pub fn any_within(
        &self,
        p: &[f64; MAX_DIM],
        extra: f64,
        t: f64,
        limit: u32,
        skip: u32,
    ) -> bool {
        debug_assert!(t <= self.valid_until);
        for disc in &self.discs[..self.n_old] {
            if disc.rec >= limit {
                return false;
            }
            if disc.rec != skip && self.reaches(disc, p, extra, t) {
                return true;
            }
        }
        if self.per_dim == 0 {
            return false;
        }
        let k = (extra / self.cell_w).ceil() as usize + 1;
        if 2 * k + 1 >= self.per_dim {
            return self.discs[self.n_old..]
                .iter()
                .take_while(|disc| disc.rec < limit)
                .any(|disc| disc.rec != skip && self.reaches(disc, p, extra, t));
        }
        let m = self.per_dim as isize;
        let k = k as isize;
        let mut base = [0isize; MAX_DIM];
        for j in 0..self.d {
            base[j] = self.cell_coord(p[j]) as isize;
        }
        let span = (2 * k + 1) as usize;
        let total = span.pow(self.d as u32);
        for combo in 0..total {
            let mut rest = combo;
            let mut idx = 0usize;
            let mut stride = 1usize;
            for j in 0..self.d {
                let off = (rest % span) as isize - k;
                rest /= span;
                let c = (base[j] + off).rem_euclid(m) as usize;
                idx += c * stride;
                stride *= self.per_dim;
            }
            for &id in &self.cells[idx] {
                let disc = &self.discs[id as usize];
                if disc.rec >= limit {
                    break;
                }
                if disc.rec != skip && self.reaches(disc, p, extra, t) {
                    return true;
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_queries_agree_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let side = 40.0;
            let mut index = DiscIndex::new(d, side, 1.0);
            let mut brute = Vec::new();
            let mut tau = 0.0;
            for rec in 0..3000u32 {
                tau += rng.random::<f64>() * 0.003;
                let mut c = [0.0; MAX_DIM];
                for x in c.iter_mut().take(d) {
                    *x = rng.random::<f64>() * side;
                }
                index.ensure(tau);
                let disc = IndexedDisc {
                    c,
                    tau,
                    rec: 2 * rec,
                };
                index.push(disc);
                brute.push(disc);
            }
            let t = tau + 0.5;
            index.ensure(t);
            assert!(index.per_dim > 0, "grid expected for d = {d}");
            for _ in 0..500 {
                let mut p = [0.0; MAX_DIM];
                for x in p.iter_mut().take(d) {
                    *x = rng.random::<f64>() * side;
                }
                let extra = if rng.random::<bool>() {
                    0.0
                } else {
                    rng.random::<f64>() * 3.0
                };
                let limit = rng.random_range(0..7000u32);
                let q = t - rng.random::<f64>() * 2.0;
                let expect = brute
                    .iter()
                    .any(|disc| disc.rec < limit && index.reaches(disc, &p, extra, q));
                assert_eq!(index.any_within(&p, extra, q, limit, u32::MAX), expect);
            }
        }
    }
}
