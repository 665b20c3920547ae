//! Laplace transform `φ(θ) = E e^{-θW}` of the limit variable and the
//! limit curve `ℓ(u) = 1 - φ(e^u)`.
//!
//! Decomposing `W` over the first generation (offspring at rate `s^d/d!`
//! in the `λ = 1` scaling, each contributing `e^{-s} W_i`) gives
//!
//! ```text
//! φ(θ) = exp( -∫_0^θ (log(θ/y))^d / d! · (1 - φ(y)) dy / y )
//! ```
//!
//! which is solved by damped Picard iteration on a geometric θ grid. In
//! `x = log θ` the kernel depends only on `x_k - x_i`, and the part of the
//! integral below the grid is done in closed form from
//! `1 - φ(y) ≈ y - E[W²] y² / 2`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmj::factorial;
use crate::error::{Error, Result};

const CACHE_MAGIC: &str = "# gossip-clt phi-grid v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            theta_min: 1e-6,
            theta_max: 1e4,
            n: 2048,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if !(self.theta_min > 0.0 && self.theta_min <= 1e-6) {
            return Err(Error::InvalidParameter(format!(
                "theta_min must lie in (0, 1e-6], got {}",
                self.theta_min
            )));
        }
        if !(self.theta_max >= 1e3 && self.theta_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta_max must be at least 1e3, got {}",
                self.theta_max
            )));
        }
        if self.n < 1024 {
            return Err(Error::InvalidParameter(format!(
                "need at least 1024 nodes, got {}",
                self.n
            )));
        }
        Ok(())
    }

    fn log_nodes(&self) -> Vec<f64> {
        let x0 = self.theta_min.ln();
        let x1 = self.theta_max.ln();
        let h = (x1 - x0) / (self.n - 1) as f64;
        (0..self.n).map(|k| x0 + k as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            damping: 0.5,
        }
    }
}

/// Tabulated `φ` on a geometric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiGrid {
    pub d: usize,
    pub spec: GridSpec,
    pub tol: f64,
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `ĉ_d = d!/(d+1)`.
pub fn c_hat(d: usize) -> f64 {
    factorial(d) / (d as f64 + 1.0)
}

/// `E[W²] = 1 / (1 - 2^{-(d+1)})`, from the second moment of the
/// first-generation decomposition.
pub fn limit_second_moment(d: usize) -> f64 {
    1.0 / (1.0 - 0.5f64.powi(d as i32 + 1))
}

pub fn solve_phi_fixed_point(d: usize, spec: GridSpec, opts: SolverOptions) -> Result<PhiGrid> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    spec.validate()?;
    let xs = spec.log_nodes();
    let n = xs.len();
    let h = xs[1] - xs[0];
    let x0 = xs[0];
    let dfact = factorial(d);
    // kernel[m] = (m h)^d / d!
    let kernel: Vec<f64> = (0..n)
        .map(|m| (m as f64 * h).powi(d as i32) / dfact)
        .collect();
    let thetas: Vec<f64> = xs.iter().map(|x| x.exp()).collect();

    let mut phi: Vec<f64> = thetas.iter().map(|&t| 1.0 / (1.0 + t)).collect();
    let mut rhs = vec![0.0; n];
    let mut gap = vec![0.0; n];
    let m2_node = thetas.iter().position(|&t| t >= 1e-4).unwrap_or(n / 4);

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let m2 = second_moment_from(&thetas, &phi, m2_node);
        for (g, p) in gap.iter_mut().zip(&phi) {
            *g = 1.0 - p;
        }
        for k in 0..n {
            let a = xs[k] - x0;
            let mut integral = tail_integral(d, a, x0, m2);
            if k > 0 {
                let mut acc = 0.5 * (kernel[k] * gap[0] + kernel[0] * gap[k]);
                for i in 1..k {
                    acc += kernel[k - i] * gap[i];
                }
                // Euler-Maclaurin end correction; the kernel has a kink at
                // the upper end when d = 1.
                let slope_hi = if d == 1 { -gap[k] } else { 0.0 };
                let theta0 = thetas[0];
                let slope_lo = -a.powi(d as i32 - 1) / factorial(d - 1) * gap[0]
                    + kernel[k] * (theta0 - m2 * theta0 * theta0);
                integral += h * acc - h * h / 12.0 * (slope_hi - slope_lo);
            }
            rhs[k] = (-integral).exp();
        }
        residual = rhs
            .iter()
            .zip(&phi)
            .map(|(r, p)| (r - p).abs())
            .fold(0.0, f64::max);
        if residual < opts.tol {
            phi.copy_from_slice(&rhs);
            break;
        }
        for (p, r) in phi.iter_mut().zip(&rhs) {
            *p = (1.0 - opts.damping) * *p + opts.damping * r;
        }
    }
    if residual >= opts.tol {
        return Err(Error::Numerical(format!(
            "fixed point not reached after {iterations} iterations (residual {residual:e})"
        )));
    }
    let grid = PhiGrid {
        d,
        spec,
        tol: opts.tol,
        thetas,
        values: phi,
        residual,
        iterations,
    };
    grid.check_shape()?;
    Ok(grid)
}

/// `∫_{-∞}^{x0} (X - x)^d/d! (e^x - m2 e^{2x}/2) dx` with `a = X - x0`.
fn tail_integral(d: usize, a: f64, x0: f64, m2: f64) -> f64 {
    let mut first = 0.0;
    let mut second = 0.0;
    for j in 0..=d {
        let poly = a.powi((d - j) as i32) / factorial(d - j);
        first += poly;
        second += poly * 0.5f64.powi(j as i32 + 1);
    }
    x0.exp() * first - 0.5 * m2 * (2.0 * x0).exp() * second
}

fn second_moment_from(thetas: &[f64], phi: &[f64], node: usize) -> f64 {
    let t = thetas[node];
    2.0 * (phi[node] - 1.0 + t) / (t * t)
}

impl PhiGrid {
    /// `E[W²]` read off the grid near `θ = 10^-4`.
    pub fn second_moment(&self) -> f64 {
        let node = self.thetas.iter().position(|&t| t >= 1e-4).unwrap_or(0);
        second_moment_from(&self.thetas, &self.values, node)
    }

    /// `-dφ/dθ` at `0+`, from the two smallest nodes.
    pub fn slope_at_zero(&self) -> f64 {
        (self.values[0] - self.values[1]) / (self.thetas[1] - self.thetas[0])
    }

    pub fn check_shape(&self) -> Result<()> {
        for (k, &v) in self.values.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Numerical(format!("phi[{k}] = {v} outside (0, 1]")));
            }
            if k > 0 && v >= self.values[k - 1] {
                return Err(Error::Numerical(format!(
                    "phi not strictly decreasing at node {k}"
                )));
            }
        }
        let t = &self.thetas;
        for (k, dd) in self.second_divided_differences().iter().enumerate() {
            // Rounding of the values alone moves a divided difference by
            // this much on the tightly packed small-θ nodes.
            let (hl, hr) = (t[k + 1] - t[k], t[k + 2] - t[k + 1]);
            let noise = 8.0 * f64::EPSILON * self.values[k] * (1.0 / hl + 1.0 / hr) / (hl + hr);
            if *dd < -1e-8 - noise {
                return Err(Error::Numerical(format!(
                    "convexity violated at node {}: {dd:e}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn second_divided_differences(&self) -> Vec<f64> {
        let t = &self.thetas;
        let v = &self.values;
        (1..t.len() - 1)
            .map(|k| {
                let left = (v[k] - v[k - 1]) / (t[k] - t[k - 1]);
                let right = (v[k + 1] - v[k]) / (t[k + 1] - t[k]);
                2.0 * (right - left) / (t[k + 1] - t[k - 1])
            })
            .collect()
    }

    pub fn interpolant(&self) -> Pchip {
        Pchip::new(
            self.thetas.iter().map(|t| t.ln()).collect(),
            self.values.clone(),
        )
    }

    /// `φ(θ)` for any `θ >= 0` up to `θ_max`; the two-term expansion is used
    /// below the grid.
    pub fn phi(&self, theta: f64) -> Result<f64> {
        LimitCurves::from_grid(self).phi_at(theta)
    }

    /// Largest midpoint gap between the monotone cubic and the chord, a
    /// proxy for the interpolation error.
    pub fn interp_tol(&self) -> f64 {
        let p = self.interpolant();
        let xs = p.xs();
        (0..xs.len() - 1)
            .map(|k| {
                let mid = 0.5 * (xs[k] + xs[k + 1]);
                let chord = 0.5 * (self.values[k] + self.values[k + 1]);
                (p.eval(mid).0 - chord).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_cache_string())?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        Self::from_cache_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_cache_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CACHE_MAGIC}");
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "theta_min = {:?}", self.spec.theta_min);
        let _ = writeln!(out, "theta_max = {:?}", self.spec.theta_max);
        let _ = writeln!(out, "n = {}", self.spec.n);
        let _ = writeln!(out, "tol = {:?}", self.tol);
        let _ = writeln!(out, "residual = {:?}", self.residual);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "theta phi");
        for (t, v) in self.thetas.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:?} {v:?}");
        }
        out
    }

    pub fn from_cache_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CACHE_MAGIC) {
            return Err(Error::Format(
                "missing or unsupported phi-grid header".into(),
            ));
        }
        let mut header = std::collections::HashMap::new();
        for line in lines.by_ref() {
            if line == "theta phi" {
                break;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
            header.insert(key.to_string(), value.to_string());
        }
        let get = |key: &str| -> Result<&String> {
            header
                .get(key)
                .ok_or_else(|| Error::Format(format!("missing header key {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{key}: {e}")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("{key}: {e}")))
        };
        let spec = GridSpec {
            theta_min: num("theta_min")?,
            theta_max: num("theta_max")?,
            n: int("n")?,
        };
        let mut thetas = Vec::with_capacity(spec.n);
        let mut values = Vec::with_capacity(spec.n);
        for line in lines {
            let mut parts = line.split_whitespace();
            let mut field = || -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("short row {line:?}")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(e.to_string()))
            };
            thetas.push(field()?);
            values.push(field()?);
        }
        if thetas.len() != spec.n {
            return Err(Error::Format(format!(
                "expected {} rows, found {}",
                spec.n,
                thetas.len()
            )));
        }
        Ok(Self {
            d: int("d")?,
            spec,
            tol: num("tol")?,
            thetas,
            values,
            residual: num("residual")?,
            iterations: int("iterations")?,
        })
    }
}

/// Monte Carlo estimate of `E e^{-θW}` with its standard error.
pub fn phi_mc(theta: f64, w_samples: &[f64]) -> Result<(f64, f64)> {
    if w_samples.is_empty() {
        return Err(Error::Empty("phi_mc needs at least one sample"));
    }
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must be non-negative, got {theta}"
        )));
    }
    let n = w_samples.len() as f64;
    let values: Vec<f64> = w_samples.iter().map(|w| (-theta * w).exp()).collect();
    let mean = values.iter().sum::<f64>() / n;
    if w_samples.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Shape-preserving (Fritsch–Butland) cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 3 && xs.len() == ys.len());
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Self { xs, ys, slopes }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Value and derivative at `x`; `x` must lie in the node range.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let k = match self.xs.binary_search_by(|probe| probe.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let deriv = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        (value, deriv)
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let slope = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if slope.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && slope.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        slope
    }
}

/// `ℓ(u) = 1 - φ(e^u)` and `Dℓ(u)`, sampled on `u_grid` and available at
/// any `u` through the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCurves {
    pub d: usize,
    pub u_grid: Vec<f64>,
    pub ell: Vec<f64>,
    pub dell: Vec<f64>,
    interp: Pchip,
    second_moment: f64,
}

impl LimitCurves {
    fn from_grid(phi: &PhiGrid) -> Self {
        Self {
            d: phi.d,
            u_grid: Vec::new(),
            ell: Vec::new(),
            dell: Vec::new(),
            interp: phi.interpolant(),
            second_moment: phi.second_moment(),
        }
    }

    /// Curves on the solver's own nodes.
    pub fn on_nodes(phi: &PhiGrid) -> Self {
        let u_grid: Vec<f64> = phi.thetas.iter().map(|t| t.ln()).collect();
        ell_and_dell(phi, &u_grid).expect("solver nodes lie in range")
    }

    pub fn u_range(&self) -> (f64, f64) {
        self.interp.range()
    }

    fn phi_at(&self, theta: f64) -> Result<f64> {
        if theta == 0.0 {
            return Ok(1.0);
        }
        Ok(1.0 - self.ell_at(theta.ln())?)
    }

    /// `ℓ(u)`; below the grid the expansion `θ - E[W²] θ²/2` is used.
    pub fn ell_at(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.interp.range();
        if u > hi || u.is_nan() {
            return Err(Error::OutOfGrid { value: u, lo, hi });
        }
        if u < lo {
            let theta = u.exp();
            return Ok(theta - 0.5 * self.second_moment * theta * theta);
        }
        Ok(1.0 - self.interp.eval(u).0)
    }

    /// `Dℓ(u) = e^u ψ(e^u)` with `ψ = -dφ/dθ`.
    pub fn dell_at(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.interp.range();
        if u > hi || u.is_nan() {
            return Err(Error::OutOfGrid { value: u, lo, hi });
        }
        if u < lo {
            let theta = u.exp();
            return Ok(theta - self.second_moment * theta * theta);
        }
        // d/du of 1 - φ(e^u) is minus the interpolant's log-θ derivative.
        Ok(-self.interp.eval(u).1)
    }
}

pub fn ell_and_dell(phi: &PhiGrid, u_grid: &[f64]) -> Result<LimitCurves> {
    let mut curves = LimitCurves::from_grid(phi);
    let (lo, hi) = curves.u_range();
    let mut ell = Vec::with_capacity(u_grid.len());
    let mut dell = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        if !(lo..=hi).contains(&u) {
            return Err(Error::OutOfGrid { value: u, lo, hi });
        }
        ell.push(curves.ell_at(u)?);
        dell.push(curves.dell_at(u)?);
    }
    curves.u_grid = u_grid.to_vec();
    curves.ell = ell;
    curves.dell = dell;
    Ok(curves)
}

/// `σ²(u, w) = Dℓ(u + log(ĉ_d w))² / ((d+1) w)`.
pub fn sigma2(u: f64, w: f64, curves: &LimitCurves) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "w must be positive, got {w}"
        )));
    }
    let d = curves.d;
    let slope = curves.dell_at(u + (c_hat(d) * w).ln())?;
    Ok(slope * slope / ((d as f64 + 1.0) * w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn grid(d: usize) -> &'static PhiGrid {
        static G1: OnceLock<PhiGrid> = OnceLock::new();
        static G2: OnceLock<PhiGrid> = OnceLock::new();
        let cell = if d == 1 { &G1 } else { &G2 };
        cell.get_or_init(|| {
            solve_phi_fixed_point(d, GridSpec::default(), SolverOptions::default()).unwrap()
        })
    }

    #[test]
    fn grid_spec_validation() {
        let bad = GridSpec {
            theta_min: 1e-3,
            ..GridSpec::default()
        };
        assert!(solve_phi_fixed_point(2, bad, SolverOptions::default()).is_err());
        let short = GridSpec {
            n: 100,
            ..GridSpec::default()
        };
        assert!(solve_phi_fixed_point(2, short, SolverOptions::default()).is_err());
    }

    #[test]
    fn boundary_and_mean() {
        for d in [1, 2] {
            let g = grid(d);
            assert_eq!(g.phi(0.0).unwrap(), 1.0);
            assert!(g.residual < 1e-10);
            assert!(
                (g.slope_at_zero() - 1.0).abs() < 1e-3,
                "d = {d}: {}",
                g.slope_at_zero()
            );
            let m2 = limit_second_moment(d);
            assert!(
                (g.second_moment() - m2).abs() < 5e-4 * m2,
                "d = {d}: {}",
                g.second_moment()
            );
        }
    }

    #[test]
    fn complete_monotonicity_spot_check() {
        let g = grid(2);
        g.check_shape().unwrap();
        assert!(g.second_divided_differences().iter().all(|&dd| dd >= -1e-8));
    }

    #[test]
    fn dilation_bound() {
        let g = grid(2);
        let slack = 2.0 * g.interp_tol();
        for k in 0..=20 {
            let theta = 0.1 * 100f64.powf(k as f64 / 20.0);
            for delta in [0.01, 0.1] {
                let diff = (g.phi(theta * (1.0 + delta)).unwrap() - g.phi(theta).unwrap()).abs();
                let bound = delta * (-1f64).exp().min(theta) + slack;
                assert!(
                    diff <= bound,
                    "theta {theta} delta {delta}: {diff} > {bound}"
                );
            }
        }
    }

    #[test]
    fn phi_mc_examples() {
        assert!(phi_mc(1.0, &[]).is_err());
        assert_eq!(phi_mc(0.0, &[0.3, 2.0, 1.1]).unwrap(), (1.0, 0.0));
        let (est, _) = phi_mc(1e4, &[0.5, 1.0, 2.0]).unwrap();
        assert!(est < 1e-100);
        let (est, se) = phi_mc(1.0, &[1.0; 10]).unwrap();
        assert!((est - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn ell_examples() {
        let g = grid(2);
        let curves = ell_and_dell(g, &[-10.0, -3.0, 0.0, 3.0, 7.0]).unwrap();
        let ratio = curves.ell[0] / (-10f64).exp();
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
        assert!(curves.ell.windows(2).all(|w| w[1] > w[0]));
        assert!(curves.dell.iter().all(|&v| v > 0.0));
        assert!(curves.ell[4] > 0.99);
        assert!(ell_and_dell(g, &[20.0]).is_err());
        let nodes = LimitCurves::on_nodes(g);
        assert!(nodes.ell.windows(2).all(|w| w[1] >= w[0]));
        assert!(nodes.ell.iter().all(|&l| l > 0.0 && l <= 1.0));
    }

    #[test]
    fn dell_matches_finite_differences() {
        let g = grid(2);
        let curves = LimitCurves::on_nodes(g);
        let step = 1e-4;
        for k in (10..curves.u_grid.len() - 10).step_by(37) {
            let u = curves.u_grid[k];
            // Differencing φ rather than 1 - φ avoids cancellation where ℓ ≈ 1.
            let fd =
                (curves.interp.eval(u - step).0 - curves.interp.eval(u + step).0) / (2.0 * step);
            let rel = (fd - curves.dell[k]).abs() / curves.dell[k];
            assert!(rel < 1e-3, "u = {u}: fd {fd} vs {}", curves.dell[k]);
        }
    }

    #[test]
    fn sigma2_examples() {
        let g = grid(2);
        let curves = LimitCurves::on_nodes(g);
        assert!((c_hat(2) - 2.0 / 3.0).abs() < 1e-15);
        let s = sigma2(0.0, 1.0, &curves).unwrap();
        let u = (2f64 / 3.0).ln();
        let step = 1e-4;
        let fd =
            (curves.ell_at(u + step).unwrap() - curves.ell_at(u - step).unwrap()) / (2.0 * step);
        let expect = fd * fd / 3.0;
        assert!((s - expect).abs() < 1e-3 * expect, "{s} vs {expect}");
        assert!(sigma2(0.0, 0.0, &curves).is_err());
        for u in [-3.0, -1.0, 0.0, 2.0] {
            for w in [0.05, 0.5, 1.0, 5.0, 20.0] {
                assert!(sigma2(u, w, &curves).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let g = grid(1);
        let text = g.to_cache_string();
        let back = PhiGrid::from_cache_str(&text).unwrap();
        assert_eq!(&back, g);
        assert_eq!(back.to_cache_string(), text);
        assert!(PhiGrid::from_cache_str("nonsense").is_err());
    }
}
