//! The flattened Crump–Mode–Jagers process: an individual of age `s` gives
//! birth at rate `ρ ν(K) s^d`.
//!
//! With `H_l(t) = Σ_j (λ(t - τ_j))^l / l!` the vector `(H_0, …, H_d)` is
//! Markov, and the compensator of the birth process is exactly `H_{d+1}`.
//! Between births every `H_l` is a polynomial in elapsed time, so the next
//! birth is drawn exactly by inverting `H_{d+1}(t) - H_{d+1}(t_now) = E`,
//! `E ~ Exp(1)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::unit_ball_volume;

pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

const ROOT_REL_TOL: f64 = 1e-12;

/// `1/k` for the Taylor shift, indexed by `k <= MAX_DIM + 1`.
const INV: [f64; 5] = [f64::NAN, 1.0, 0.5, 1.0 / 3.0, 0.25];

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `λ = (d! ρ ν(K))^{1/(d+1)}`.
pub fn malthusian_lambda(d: usize, rho: f64, nu_k: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    if !(rho > 0.0 && nu_k > 0.0) || !rho.is_finite() || !nu_k.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rho and nu_k must be positive (rho = {rho}, nu_k = {nu_k})"
        )));
    }
    Ok((factorial(d) * rho * nu_k).powf(1.0 / (d as f64 + 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmjParams {
    pub d: usize,
    pub rho: f64,
    pub nu_k: f64,
    pub lambda: f64,
}

impl CmjParams {
    pub fn new(d: usize, rho: f64, nu_k: f64) -> Result<Self> {
        let lambda = malthusian_lambda(d, rho, nu_k)?;
        Ok(Self {
            d,
            rho,
            nu_k,
            lambda,
        })
    }

    /// Parameters on the flat torus of dimension `d` with growth rate `λ`.
    pub fn with_lambda(d: usize, lambda: f64) -> Result<Self> {
        let nu_k = unit_ball_volume(d)?;
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let rho = lambda.powi(d as i32 + 1) / (factorial(d) * nu_k);
        Ok(Self {
            d,
            rho,
            nu_k,
            lambda,
        })
    }

    /// Residual of `∫_0^∞ e^{-λs} ρ ν(K) s^d ds = 1`, by the closed form
    /// `ρ ν(K) d! / λ^{d+1}`.
    pub fn malthusian_residual(&self) -> f64 {
        self.rho * self.nu_k * factorial(self.d) / self.lambda.powi(self.d as i32 + 1) - 1.0
    }
}

/// The `(d+1)`-th roots of unity and the gap constant `ζ(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRoots {
    pub roots: Vec<Complex64>,
    pub real_parts: Vec<f64>,
    pub zeta: f64,
    /// `min{1 - r_1, 1/2}`. Coincides with `zeta` for `d <= 5`; for larger
    /// `d` it is `1 - cos(2π/(d+1))` while `zeta` uses `cos(2π/d)`.
    pub spectral_gap: f64,
}

pub fn unit_roots_and_zeta(d: usize) -> Result<UnitRoots> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    let n = d + 1;
    let roots: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64))
        .collect();
    let real_parts: Vec<f64> = roots.iter().map(|x| x.re).collect();
    let zeta = if d <= 6 {
        0.5
    } else {
        1.0 - (2.0 * PI / d as f64).cos()
    };
    let spectral_gap = (1.0 - real_parts[1]).min(0.5);
    Ok(UnitRoots {
        roots,
        real_parts,
        zeta,
        spectral_gap,
    })
}

/// `(H_0, …, H_d)` at time `t`, plus the compensator `Â(t) = H_{d+1}(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    pub h: Vec<f64>,
    pub a_cum: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WMartingales {
    pub w: Vec<Complex64>,
    pub t: f64,
}

impl WMartingales {
    /// `W(t) = W_0(t)`.
    pub fn w0(&self) -> f64 {
        self.w[0].re
    }

    /// `(1/(d+1)) Σ_l x_j^{-l} e^{-λ(1 - x_l)t} W_l(t)` for every `j`; equals
    /// `e^{-λt} H_j(t)` since `Σ_l x_j^{-l} x_l^r = (d+1) δ_{jr}`. With
    /// `x_j^{+l}` the sum picks out `H_{d+1-j}` instead, which differs from
    /// `H_j` once `d >= 2`.
    pub fn represent_h(&self, roots: &UnitRoots, lambda: f64) -> Vec<Complex64> {
        let n = self.w.len();
        let t = self.t;
        (0..n)
            .map(|j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    let decay = (-(Complex64::new(1.0, 0.0) - roots.roots[l]) * (lambda * t)).exp();
                    acc += roots.roots[j].conj().powu(l as u32) * decay * self.w[l];
                }
                acc / n as f64
            })
            .collect()
    }
}

/// The Markov vector `(H_0, …, H_{d+1})` maintained incrementally.
///
/// Advancing by `Δ` maps `H_l ↦ Σ_{k≤l} H_{l-k} (λΔ)^k / k!`; a birth adds 1
/// to `H_0`. [`BranchingClock::resync`] recomputes exactly from a birth list.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingClock {
    lambda: f64,
    h: Vec<f64>,
    t: f64,
}

impl BranchingClock {
    /// Clock with a single individual born at time 0.
    pub fn new(d: usize, lambda: f64) -> Self {
        let mut h = vec![0.0; d + 2];
        h[0] = 1.0;
        Self { lambda, h, t: 0.0 }
    }

    pub fn from_births(d: usize, lambda: f64, births: &[f64], t: f64) -> Self {
        let mut clock = Self {
            lambda,
            h: vec![0.0; d + 2],
            t,
        };
        clock.resync(births, t);
        clock
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Current birth intensity `λ H_d`.
    pub fn intensity(&self) -> f64 {
        self.lambda * self.h[self.h.len() - 2]
    }

    pub fn resync(&mut self, births: &[f64], t: f64) {
        h_sums(self.lambda, births, t, &mut self.h);
        self.t = t;
    }

    pub fn advance_to(&mut self, t: f64) {
        let x = self.lambda * (t - self.t);
        if x > 0.0 {
            for l in (1..self.h.len()).rev() {
                let mut acc = self.h[0];
                for m in 1..=l {
                    acc = self.h[m] + acc * x * INV[l - m + 1];
                }
                self.h[l] = acc;
            }
        }
        self.t = t;
    }

    pub fn add_birth(&mut self) {
        self.h[0] += 1.0;
    }

    /// Compensator increment `H_{d+1}(t + Δ) - H_{d+1}(t)` as a function of `Δ`.
    pub fn increment(&self, delta: f64) -> f64 {
        let (value, _) = self.increment_and_slope(delta);
        value
    }

    fn increment_and_slope(&self, delta: f64) -> (f64, f64) {
        // Σ_{k=1}^{d+1} H_{d+1-k} x^k / k!, with x = λΔ.
        let top = self.h.len() - 1;
        let x = self.lambda * delta;
        let mut value = 0.0;
        let mut slope = 0.0;
        let mut power = 1.0;
        for k in 1..=top {
            let coeff = self.h[top - k];
            slope += coeff * power;
            power *= x * INV[k];
            value += coeff * power;
        }
        // slope currently holds dValue/dx.
        (value, slope * self.lambda)
    }

    /// The unique `Δ > 0` with `increment(Δ) = target`, by Newton's method on
    /// the convex increasing polynomial started from a guaranteed upper
    /// bracket, with bisection as a fallback.
    pub fn solve_increment(&self, target: f64) -> Result<f64> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::RootFinding(format!("invalid target {target}")));
        }
        let top = self.h.len() - 1;
        // Any single term reaching the target bounds the root from above; the
        // linear one is cheap and tight once the population is large.
        let linear = self.lambda * self.h[top - 1];
        let quadratic = if top >= 2 {
            0.5 * self.lambda * self.lambda * self.h[top - 2]
        } else {
            0.0
        };
        let mut hi = if linear > 0.0 {
            // Root of the quadratic truncation, still an upper bound.
            2.0 * target / (linear + (linear * linear + 4.0 * quadratic * target).sqrt())
        } else {
            f64::INFINITY
        };
        if self.h[top - 1] < 1.0 {
            let mut kfact = 1.0;
            for k in 2..=top {
                kfact *= k as f64;
                let coeff = self.h[top - k] / kfact;
                if coeff > 0.0 {
                    let x = (target / coeff).powf(1.0 / k as f64);
                    hi = hi.min(x / self.lambda);
                }
            }
        }
        if !hi.is_finite() {
            return Err(Error::RootFinding("clock has no individuals".into()));
        }
        let mut lo = 0.0;
        let mut delta = hi;
        for _ in 0..200 {
            let (value, slope) = self.increment_and_slope(delta);
            let f = value - target;
            if f.abs() <= ROOT_REL_TOL * target {
                return Ok(delta);
            }
            if f > 0.0 {
                hi = delta;
            } else {
                lo = delta;
            }
            let mut next = delta - f / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - delta).abs() <= ROOT_REL_TOL * next || hi - lo <= ROOT_REL_TOL * hi {
                return Ok(next);
            }
            delta = next;
        }
        Err(Error::RootFinding(format!(
            "no convergence for target {target} (bracket [{lo}, {hi}])"
        )))
    }
}

/// `out[l] = Σ_j (λ(t - τ_j))^l / l!` for `l < out.len()`.
pub(crate) fn h_sums(lambda: f64, births: &[f64], t: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &tau in births {
        let x = lambda * (t - tau);
        let mut term = 1.0;
        for (l, slot) in out.iter_mut().enumerate() {
            if l > 0 {
                term *= x / l as f64;
            }
            *slot += term;
        }
    }
}

/// `e^{-λt} Σ_{l=0}^d Σ_j (λ(t - τ_j))^l / l!` over the given birth times.
pub fn w_from_births(d: usize, lambda: f64, births: impl IntoIterator<Item = f64>, t: f64) -> f64 {
    let mut total = 0.0;
    for tau in births {
        let x = lambda * (t - tau);
        let mut term = 1.0;
        let mut sum = 1.0;
        for l in 1..=d {
            term *= x / l as f64;
            sum += term;
        }
        total += sum;
    }
    (-lambda * t).exp() * total
}

/// State of one realization of the flattened process.
#[derive(Debug, Clone)]
pub struct CmjState {
    params: CmjParams,
    births: Vec<f64>,
    t_now: f64,
    clock: BranchingClock,
    next_resync: usize,
    cap: usize,
}

impl CmjState {
    pub fn new(params: CmjParams) -> Self {
        Self {
            params,
            births: vec![0.0],
            t_now: 0.0,
            clock: BranchingClock::new(params.d, params.lambda),
            next_resync: 2,
            cap: DEFAULT_POPULATION_CAP,
        }
    }

    /// State holding `births` (sorted, ancestor first at 0) observed up to
    /// `t_now`.
    pub fn from_births(params: CmjParams, births: Vec<f64>, t_now: f64) -> Result<Self> {
        if births.first() != Some(&0.0) {
            return Err(Error::InvalidParameter(
                "birth list must start with the ancestor at 0".into(),
            ));
        }
        if births.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "birth times must be strictly increasing".into(),
            ));
        }
        let last = births[births.len() - 1];
        if t_now < last {
            return Err(Error::TimeOrder {
                t: t_now,
                t_now: last,
            });
        }
        let clock = BranchingClock::from_births(params.d, params.lambda, &births, t_now);
        let next_resync = (births.len() + 1).next_power_of_two();
        Ok(Self {
            params,
            births,
            t_now,
            clock,
            next_resync,
            cap: DEFAULT_POPULATION_CAP,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Replaces the clock sums with `h`, e.g. saved from an earlier state, so
    /// that continuations reproduce its rounding exactly. `h` must agree with
    /// the birth list to within accumulated rounding.
    pub fn restore_sums(&mut self, h: &[f64]) -> Result<()> {
        let cur = &self.clock.h;
        if h.len() != cur.len() {
            return Err(Error::DimensionMismatch {
                expected: cur.len(),
                got: h.len(),
            });
        }
        let close = h
            .iter()
            .zip(cur)
            .all(|(a, b)| a.is_finite() && (a - b).abs() <= 1e-9 * b.abs().max(1.0));
        if !close {
            return Err(Error::InvalidParameter(
                "clock sums do not match the birth list".into(),
            ));
        }
        self.clock.h.copy_from_slice(h);
        Ok(())
    }

    pub fn params(&self) -> &CmjParams {
        &self.params
    }

    pub fn births(&self) -> &[f64] {
        &self.births
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    pub fn clock(&self) -> &BranchingClock {
        &self.clock
    }

    /// Draws the next birth time after `t_now`; nothing is committed.
    pub fn next_birth_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let e = exp1(rng);
        self.birth_time_for(e)
    }

    /// Birth time whose compensator increment from `t_now` equals `e`.
    pub fn birth_time_for(&self, e: f64) -> Result<f64> {
        Ok(self.t_now + self.clock.solve_increment(e)?)
    }

    /// Appends a birth at `t > t_now`.
    pub fn commit_birth(&mut self, t: f64) -> Result<()> {
        if !(t > self.t_now) {
            return Err(Error::TimeOrder {
                t,
                t_now: self.t_now,
            });
        }
        if self.births.len() >= self.cap {
            return Err(Error::PopulationCap { cap: self.cap });
        }
        self.clock.advance_to(t);
        self.births.push(t);
        self.clock.add_birth();
        self.t_now = t;
        if self.births.len() >= self.next_resync {
            self.clock.resync(&self.births, t);
            self.next_resync *= 2;
        }
        Ok(())
    }

    /// Simulates all births in `(t_now, t]` and moves the clock to `t`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        if t < self.t_now {
            return Err(Error::TimeOrder {
                t,
                t_now: self.t_now,
            });
        }
        loop {
            let next = self.next_birth_time(rng)?;
            if next > t {
                break;
            }
            self.commit_birth(next)?;
        }
        self.advance_idle(t)
    }

    /// Moves the clock to `t` without a birth. The next draw is then taken
    /// afresh from `t`, which is exact by memorylessness.
    pub fn advance_idle(&mut self, t: f64) -> Result<()> {
        if t < self.t_now {
            return Err(Error::TimeOrder {
                t,
                t_now: self.t_now,
            });
        }
        self.clock.advance_to(t);
        self.t_now = t;
        Ok(())
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let last = *self.births.last().expect("ancestor always present");
        if t < last {
            Err(Error::TimeOrder { t, t_now: last })
        } else {
            Ok(())
        }
    }

    /// `H_l(t)`, recomputed from the birth list.
    pub fn h_vector(&self, t: f64) -> Result<HVector> {
        self.check_time(t)?;
        let d = self.params.d;
        let mut h = vec![0.0; d + 2];
        h_sums(self.params.lambda, &self.births, t, &mut h);
        let a_cum = h[d + 1];
        h.truncate(d + 1);
        Ok(HVector { h, a_cum, t })
    }

    /// `W_j(t) = Σ_r e^{-λ x_j t} x_j^r H_r(t)`.
    pub fn w_martingales(&self, t: f64) -> Result<WMartingales> {
        let hv = self.h_vector(t)?;
        let roots = unit_roots_and_zeta(self.params.d)?;
        Ok(w_from_h(&hv, &roots, self.params.lambda))
    }
}

pub fn w_from_h(hv: &HVector, roots: &UnitRoots, lambda: f64) -> WMartingales {
    let w = roots
        .roots
        .iter()
        .map(|&x| {
            let scale = (-x * (lambda * hv.t)).exp();
            let mut acc = Complex64::new(0.0, 0.0);
            let mut xr = Complex64::new(1.0, 0.0);
            for &h in &hv.h {
                acc += xr * h;
                xr *= x;
            }
            scale * acc
        })
        .collect::<Vec<_>>();
    let mut w = w;
    // W_0 is real by construction.
    w[0].im = 0.0;
    WMartingales { w, t: hv.t }
}

#[inline]
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            return -u.ln();
        }
    }
}

/// One draw of `W(T)`, `T = horizon_mult / λ`, as a proxy for `W(∞)`.
pub fn sample_w<R: Rng + ?Sized>(
    params: &CmjParams,
    horizon_mult: f64,
    rng: &mut R,
) -> Result<f64> {
    sample_w_capped(params, horizon_mult, DEFAULT_POPULATION_CAP, rng)
}

pub fn sample_w_capped<R: Rng + ?Sized>(
    params: &CmjParams,
    horizon_mult: f64,
    cap: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(horizon_mult >= 8.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon multiple must be at least 8, got {horizon_mult}"
        )));
    }
    let horizon = horizon_mult / params.lambda;
    let mut state = CmjState::new(*params).with_cap(cap);
    loop {
        let next = state.next_birth_time(rng)?;
        if next > horizon {
            break;
        }
        state.commit_birth(next)?;
    }
    Ok(w_from_births(
        params.d,
        params.lambda,
        state.births.iter().copied(),
        horizon,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_examples() {
        // rho * nu_k = 2 for d = 1.
        assert!((malthusian_lambda(1, 1.0, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((malthusian_lambda(2, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        for d in 1..=3 {
            let p = CmjParams::new(d, 0.37, unit_ball_volume(d).unwrap()).unwrap();
            assert!(p.malthusian_residual().abs() < 1e-12);
            let q = CmjParams::with_lambda(d, 1.7).unwrap();
            assert!(q.malthusian_residual().abs() < 1e-12);
        }
        assert!(malthusian_lambda(1, 0.0, 2.0).is_err());
        assert!(malthusian_lambda(0, 1.0, 2.0).is_err());
    }

    #[test]
    fn roots_and_zeta() {
        let r1 = unit_roots_and_zeta(1).unwrap();
        assert!((r1.roots[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(r1.zeta, 0.5);
        let r2 = unit_roots_and_zeta(2).unwrap();
        assert!((r2.real_parts[1] + 0.5).abs() < 1e-15);
        assert_eq!(r2.zeta, 0.5);
        let r7 = unit_roots_and_zeta(7).unwrap();
        assert!((r7.zeta - 0.376510).abs() < 1e-6);
        for d in 1..=10 {
            let r = unit_roots_and_zeta(d).unwrap();
            if d <= 5 {
                assert!((r.spectral_gap - r.zeta).abs() < 1e-12, "d = {d}");
            } else {
                let gap = 1.0 - (2.0 * PI / (d as f64 + 1.0)).cos();
                assert!((r.spectral_gap - gap).abs() < 1e-12, "d = {d}");
            }
            for (j, x) in r.roots.iter().enumerate() {
                assert!((x.powu(d as u32 + 1) - 1.0).norm() < 1e-12);
                if j > 0 {
                    assert!((r.roots[d + 1 - j] - x.conj()).norm() < 1e-12);
                }
            }
        }
        assert!(unit_roots_and_zeta(0).is_err());
    }

    #[test]
    fn h_vector_examples() {
        let p = CmjParams::with_lambda(2, 1.3).unwrap();
        let mut s = CmjState::new(p);
        let h0 = s.h_vector(0.0).unwrap();
        assert_eq!(h0.h, vec![1.0, 0.0, 0.0]);
        let t = 0.8;
        let hv = s.h_vector(t).unwrap();
        let x: f64 = 1.3 * t;
        assert!((hv.h[1] - x).abs() < 1e-15);
        assert!((hv.h[2] - x * x / 2.0).abs() < 1e-15);
        assert!((hv.a_cum - x.powi(3) / 6.0).abs() < 1e-15);
        s.commit_birth(0.5).unwrap();
        let hv = s.h_vector(t).unwrap();
        let y: f64 = 1.3 * (t - 0.5);
        assert!((hv.h[2] - (x * x + y * y) / 2.0).abs() < 1e-14);
        assert!(s.h_vector(0.4).is_err());
    }

    #[test]
    fn inversion_examples() {
        // Single ancestor: t* = ((d+1)! e)^{1/(d+1)} / λ.
        for d in 1..=3 {
            let p = CmjParams::with_lambda(d, 0.7).unwrap();
            let s = CmjState::new(p);
            let e = 1.9;
            let expect = (factorial(d + 1) * e).powf(1.0 / (d as f64 + 1.0)) / 0.7;
            let got = s.birth_time_for(e).unwrap();
            assert!(
                (got - expect).abs() < 1e-11 * expect,
                "d = {d}: {got} vs {expect}"
            );
        }
        let s = CmjState::new(CmjParams::with_lambda(1, 1.0).unwrap());
        assert!((s.birth_time_for(0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incremental_clock_matches_recompute() {
        let p = CmjParams::with_lambda(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = CmjState::new(p);
        s.run_until(6.0, &mut rng).unwrap();
        let exact = s.h_vector(6.0).unwrap();
        for l in 0..=3 {
            let rel = (s.clock().h()[l] - exact.h[l]).abs() / exact.h[l];
            assert!(rel < 1e-10, "l = {l}: rel {rel}");
        }
        assert!((s.clock().h()[4] - exact.a_cum).abs() / exact.a_cum < 1e-10);
    }

    #[test]
    fn representation_recovers_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            let p = CmjParams::with_lambda(d, 1.0).unwrap();
            let roots = unit_roots_and_zeta(d).unwrap();
            let mut s = CmjState::new(p);
            s.run_until(4.0, &mut rng).unwrap();
            let h = s.h_vector(4.0).unwrap();
            let rep = s.w_martingales(4.0).unwrap().represent_h(&roots, 1.0);
            for (a, b) in rep.iter().zip(&h.h) {
                assert!(
                    (a - b * (-4.0f64).exp()).norm() < 1e-12,
                    "d = {d}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn w_at_zero_is_one() {
        let s = CmjState::new(CmjParams::with_lambda(2, 1.0).unwrap());
        let w = s.w_martingales(0.0).unwrap();
        for wj in &w.w {
            assert!((wj - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    /// `W_j(t) = 1 + Σ_{0<τ_k≤t} e^{-λ x_j τ_k} - ∫_0^t e^{-λ x_j u} â(u) du`,
    /// with the compensator integral done in closed form per individual.
    fn w_by_integral(params: &CmjParams, births: &[f64], t: f64) -> Vec<Complex64> {
        let d = params.d;
        let roots = unit_roots_and_zeta(d).unwrap();
        let rate = params.rho * params.nu_k;
        roots
            .roots
            .iter()
            .map(|&x| {
                let a = x * params.lambda;
                let mut w = Complex64::new(1.0, 0.0);
                for &tau in births.iter().skip(1).filter(|&&tau| tau <= t) {
                    w += (-a * tau).exp();
                }
                for &tau in births.iter().filter(|&&tau| tau <= t) {
                    // ∫_0^T e^{-a s} s^d ds = d!/a^{d+1} (1 - e^{-aT} Σ_{k≤d} (aT)^k/k!)
                    let big_t = t - tau;
                    let mut partial = Complex64::new(0.0, 0.0);
                    let mut term = Complex64::new(1.0, 0.0);
                    for k in 0..=d {
                        if k > 0 {
                            term *= a * big_t / k as f64;
                        }
                        partial += term;
                    }
                    let integral = factorial(d) / a.powu(d as u32 + 1)
                        * (Complex64::new(1.0, 0.0) - (-a * big_t).exp() * partial);
                    w -= rate * (-a * tau).exp() * integral;
                }
                w
            })
            .collect()
    }

    #[test]
    fn closed_form_w_matches_integral_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let p = CmjParams::with_lambda(d, 1.4).unwrap();
            let mut s = CmjState::new(p);
            let t1 = s.next_birth_time(&mut rng).unwrap();
            s.commit_birth(t1).unwrap();
            let t = t1 + 0.6;
            let closed = s.w_martingales(t).unwrap();
            let integral = w_by_integral(&p, s.births(), t);
            for (a, b) in closed.w.iter().zip(&integral) {
                assert!((a - b).norm() < 1e-9, "d = {d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sample_w_rejects_short_horizon_and_cap() {
        let p = CmjParams::with_lambda(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_w(&p, 4.0, &mut rng).is_err());
        let err = sample_w_capped(&p, 12.0, 50, &mut rng).unwrap_err();
        assert!(err.is_resource());
        let w = sample_w(&p, 8.0, &mut rng).unwrap();
        assert!(w > 0.0);
    }
}
