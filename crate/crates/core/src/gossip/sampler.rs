//! Sampling a record with probability proportional to `(t - τ_l)^d`.
//!
//! A Fenwick tree stores the power sums `Σ τ^k`, `k = 0..=d`, of each node
//! range, so the weight of any range at any time `t` follows from the
//! binomial expansion of `(t - τ)^d`.

const WIDTH: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct AgeSampler {
    d: usize,
    tree: Vec<[f64; WIDTH]>,
    total: [f64; WIDTH],
}

impl AgeSampler {
    pub fn new(d: usize) -> Self {
        assert!(d < WIDTH);
        Self {
            d,
            tree: vec![[0.0; WIDTH]],
            total: [0.0; WIDTH],
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    fn powers(&self, tau: f64) -> [f64; WIDTH] {
        let mut p = [0.0; WIDTH];
        let mut acc = 1.0;
        for slot in p.iter_mut().take(self.d + 1) {
            *slot = acc;
            acc *= tau;
        }
        p
    }

    pub fn push(&mut self, tau: f64) {
        let i = self.tree.len();
        let mut node = self.powers(tau);
        for k in 0..=self.d {
            self.total[k] += node[k];
        }
        let low = i & i.wrapping_neg();
        let mut j = i - 1;
        while j > i - low {
            for k in 0..=self.d {
                node[k] += self.tree[j][k];
            }
            j -= j & j.wrapping_neg();
        }
        self.tree.push(node);
    }

    /// Coefficients of `τ^k` in `(t - τ)^d`.
    fn coefficients(&self, t: f64) -> [f64; WIDTH] {
        let d = self.d;
        let mut c = [0.0; WIDTH];
        let mut binom = 1.0;
        for (k, slot) in c.iter_mut().enumerate().take(d + 1) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *slot = sign * binom * t.powi((d - k) as i32);
            binom = binom * (d - k) as f64 / (k + 1) as f64;
        }
        c
    }

    fn weight(&self, sums: &[f64; WIDTH], coef: &[f64; WIDTH]) -> f64 {
        let mut w = 0.0;
        for k in 0..=self.d {
            w += coef[k] * sums[k];
        }
        w.max(0.0)
    }

    /// `Σ_l (t - τ_l)^d`.
    #[cfg(test)]
    pub fn total_weight(&self, t: f64) -> f64 {
        self.weight(&self.total, &self.coefficients(t))
    }

    /// Index `l` drawn with probability `∝ (t - τ_l)^d`, for `u` uniform on
    /// `[0, 1)`.
    pub fn sample(&self, t: f64, u: f64) -> usize {
        let n = self.len();
        let coef = self.coefficients(t);
        let mut rem = u * self.weight(&self.total, &coef);
        let mut pos = 0;
        let mut step = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        while step > 0 {
            let next = pos + step;
            if next <= n {
                let w = self.weight(&self.tree[next], &coef);
                if w <= rem {
                    pos = next;
                    rem -= w;
                }
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}
