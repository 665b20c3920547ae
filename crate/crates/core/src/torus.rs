//! Geometry of the flat d-dimensional torus `[0, side)^d`.
//!
//! Balls of radius at most `side / 2` embed isometrically, so below that
//! radius every volume here is the Euclidean one. Larger radii are rejected
//! with [`Error::WrapRadius`].

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    match d {
        1 => Ok(2.0),
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    d: usize,
    side: f64,
    volume: f64,
    nu_k: f64,
}

impl TorusSpec {
    pub fn new(d: usize, side: f64) -> Result<Self> {
        let nu_k = unit_ball_volume(d)?;
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "side must be positive, got {side}"
            )));
        }
        Ok(Self {
            d,
            side,
            volume: side.powi(d as i32),
            nu_k,
        })
    }

    /// Torus whose volume is `L = Λ ν(K) / λ^d`.
    pub fn for_system_size(d: usize, lambda: f64, system_size: f64) -> Result<Self> {
        let nu_k = unit_ball_volume(d)?;
        if !(system_size > 0.0 && lambda > 0.0) {
            return Err(Error::InvalidParameter(
                "system size and lambda must be positive".into(),
            ));
        }
        let volume = system_size * nu_k / lambda.powi(d as i32);
        Self::new(d, volume.powf(1.0 / d as f64))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// `L = side^d`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Unit-ball volume `ν(K)`.
    pub fn nu_k(&self) -> f64 {
        self.nu_k
    }

    pub fn wrap_radius(&self) -> f64 {
        0.5 * self.side
    }

    pub fn check_radius(&self, radius: f64) -> Result<()> {
        if radius > self.wrap_radius() {
            Err(Error::WrapRadius {
                radius,
                limit: self.wrap_radius(),
            })
        } else {
            Ok(())
        }
    }

    pub fn point(&self, coords: &[f64]) -> Result<TorusPoint> {
        if coords.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: coords.len(),
            });
        }
        let mut c = [0.0; MAX_DIM];
        for (dst, &x) in c.iter_mut().zip(coords) {
            *dst = self.wrap(x);
        }
        Ok(TorusPoint {
            coords: c,
            dim: self.d as u8,
        })
    }

    fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.side);
        if w >= self.side {
            0.0
        } else {
            w
        }
    }

    fn check_point(&self, p: &TorusPoint) -> Result<()> {
        if p.dim() != self.d {
            Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.dim(),
            })
        } else {
            Ok(())
        }
    }

    /// Geodesic distance with per-coordinate minimum image.
    pub fn distance(&self, p: &TorusPoint, q: &TorusPoint) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.dist(p, q))
    }

    /// Unchecked distance for hot loops; both points must belong to `self`.
    #[inline]
    pub(crate) fn dist(&self, p: &TorusPoint, q: &TorusPoint) -> f64 {
        self.dist2(p, q).sqrt()
    }

    #[inline]
    pub(crate) fn dist2(&self, p: &TorusPoint, q: &TorusPoint) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.d {
            let mut delta = (p.coords[k] - q.coords[k]).abs();
            if delta > 0.5 * self.side {
                delta = self.side - delta;
            }
            acc += delta * delta;
        }
        acc
    }

    /// `ν(K) s^d`, exact for `s <= side / 2`.
    pub fn ball_volume(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidParameter(format!("negative radius {s}")));
        }
        self.check_radius(s)?;
        Ok(self.nu_k * s.powi(self.d as i32))
    }

    /// Closed balls `K(a, t - a.birth)` and `K(b, t - b.birth)` meet.
    pub fn discs_intersect(&self, a: &Disc, b: &Disc, t: f64) -> bool {
        self.dist(&a.center, &b.center) <= (t - a.birth) + (t - b.birth)
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> TorusPoint {
        let mut c = [0.0; MAX_DIM];
        for x in c.iter_mut().take(self.d) {
            *x = self.wrap(rng.random::<f64>() * self.side);
        }
        TorusPoint {
            coords: c,
            dim: self.d as u8,
        }
    }

    /// Uniform point of the closed ball, by rejection from the bounding cube.
    pub fn uniform_in_ball<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        center: &TorusPoint,
        radius: f64,
    ) -> Result<TorusPoint> {
        self.check_point(center)?;
        self.check_radius(radius)?;
        if radius <= 0.0 {
            return Ok(*center);
        }
        let mut offset = [0.0; MAX_DIM];
        loop {
            let mut r2 = 0.0;
            for x in offset.iter_mut().take(self.d) {
                *x = (2.0 * rng.random::<f64>() - 1.0) * radius;
                r2 += *x * *x;
            }
            if r2 <= radius * radius {
                break;
            }
        }
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.d {
            c[k] = self.wrap(center.coords[k] + offset[k]);
        }
        Ok(TorusPoint {
            coords: c,
            dim: self.d as u8,
        })
    }

    /// `min_j (birth_j + dist(center_j, probe))`; the probe is informed at
    /// time `t` iff the result is `<= t`.
    pub fn coverage_time(&self, probe: &TorusPoint, discs: &[Disc]) -> Result<f64> {
        if discs.is_empty() {
            return Err(Error::Empty("coverage_time needs at least one disc"));
        }
        self.check_point(probe)?;
        let mut best = f64::INFINITY;
        for disc in discs {
            self.check_point(&disc.center)?;
            best = best.min(disc.birth + self.dist(&disc.center, probe));
        }
        Ok(best)
    }

    /// Exact length of the union of the arcs `K(P_j, t - birth_j)` on the
    /// circle (`d = 1` only). Discs born after `t` are ignored.
    pub fn arc_union_length(&self, discs: &[Disc], t: f64) -> Result<f64> {
        if self.d != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.d,
            });
        }
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(2 * discs.len());
        for disc in discs.iter().filter(|disc| disc.birth <= t) {
            let r = t - disc.birth;
            self.check_radius(r)?;
            if 2.0 * r >= self.side {
                return Ok(self.side);
            }
            let start = self.wrap(disc.center.coords[0] - r);
            let end = start + 2.0 * r;
            if end > self.side {
                intervals.push((start, self.side));
                intervals.push((0.0, end - self.side));
            } else {
                intervals.push((start, end));
            }
        }
        Ok(merged_length(&mut intervals).min(self.side))
    }
}

/// Total length of a union of intervals (sorted in place).
pub(crate) fn merged_length(intervals: &mut [(f64, f64)]) -> f64 {
    intervals.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for &(lo, hi) in intervals.iter() {
        match current {
            Some((clo, chi)) if lo <= chi => current = Some((clo, chi.max(hi))),
            Some((clo, chi)) => {
                total += chi - clo;
                current = Some((lo, hi));
            }
            None => current = Some((lo, hi)),
        }
    }
    if let Some((clo, chi)) = current {
        total += chi - clo;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl TorusPoint {
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub(crate) fn from_raw(coords: [f64; MAX_DIM], dim: usize) -> Self {
        Self {
            coords,
            dim: dim as u8,
        }
    }

    pub(crate) fn raw(&self) -> &[f64; MAX_DIM] {
        &self.coords
    }
}

/// A ball growing at unit speed from `center`, started at `birth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: TorusPoint,
    pub birth: f64,
}

impl Disc {
    pub fn new(center: TorusPoint, birth: f64) -> Self {
        Self { center, birth }
    }

    pub fn radius_at(&self, t: f64) -> f64 {
        t - self.birth
    }
}
