//! Random ray sets.
//!
//! Method R1 fires segments of fixed length `L` through a shift drawn
//! uniformly from `[-1/2, 1/2]^d` along a uniformly random direction.
//! Method R2 joins two uniform points on a sphere, rejecting chords
//! shorter than `tau`. Each ray draws from its own substream
//! `(seed, ray index)`, so the first `m` rays of a larger set are exactly
//! the set of size `m`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, random_unit_vector};
use crate::rng::substream;

/// Default R1 segment length.
pub const DEFAULT_LENGTH: f64 = 2.0;
/// Default R2 minimum chord length.
pub const DEFAULT_TAU: f64 = 0.5;
/// Redraw budget per R2 ray.
pub const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RayMethod {
    R1,
    R2,
}

impl RayMethod {
    pub fn code(self) -> u8 {
        match self {
            RayMethod::R1 => 1,
            RayMethod::R2 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(RayMethod::R1),
            2 => Some(RayMethod::R2),
            _ => None,
        }
    }
}

impl FromStr for RayMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1" | "R1" => Ok(RayMethod::R1),
            "r2" | "R2" => Ok(RayMethod::R2),
            other => Err(invalid(format!("unknown ray method {other:?}"))),
        }
    }
}

/// Generation parameters of a single ray.
#[derive(Debug, Clone, PartialEq)]
pub enum RayOrigin {
    /// Midpoint shift `a` and unit direction `v`.
    R1 { shift: Vec<f64>, direction: Vec<f64> },
    /// Endpoints `p` and `q`.
    R2 { start: Vec<f64>, end: Vec<f64> },
}

/// `k` equally spaced samples along a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    samples: Vec<f64>,
    dim: usize,
    spacing: f64,
    origin: RayOrigin,
}

impl Ray {
    fn r1(shift: Vec<f64>, direction: Vec<f64>, k: usize, length: f64) -> Self {
        let d = shift.len();
        let mut samples = Vec::with_capacity(k * d);
        for i in 0..k {
            let t = length * (i as f64 / (k - 1) as f64 - 0.5);
            samples.extend(shift.iter().zip(&direction).map(|(a, v)| a + t * v));
        }
        Self {
            samples,
            dim: d,
            spacing: length / (k - 1) as f64,
            origin: RayOrigin::R1 { shift, direction },
        }
    }

    fn r2(start: Vec<f64>, end: Vec<f64>, k: usize) -> Self {
        let d = start.len();
        let mut samples = Vec::with_capacity(k * d);
        for i in 0..k {
            let t = i as f64 / (k - 1) as f64;
            // (1 - t) p + t q hits both endpoints exactly
            samples.extend(start.iter().zip(&end).map(|(p, q)| (1.0 - t) * p + t * q));
        }
        let spacing = libm::sqrt(dist2(&start, &end)) / (k - 1) as f64;
        Self {
            samples,
            dim: d,
            spacing,
            origin: RayOrigin::R2 { start, end },
        }
    }

    /// Rebuilds a ray from stored samples; generation parameters are
    /// recovered from the endpoints.
    pub fn from_samples(method: RayMethod, dim: usize, samples: Vec<f64>) -> Result<Self> {
        let k = samples.len() / dim.max(1);
        if dim == 0 || k < 2 || samples.len() != k * dim {
            return Err(invalid("a ray needs at least two samples of positive dimension"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ray samples"));
        }
        let first = samples[..dim].to_vec();
        let last = samples[(k - 1) * dim..].to_vec();
        let length = libm::sqrt(dist2(&first, &last));
        let spacing = length / (k - 1) as f64;
        let origin = match method {
            RayMethod::R1 => RayOrigin::R1 {
                shift: first.iter().zip(&last).map(|(a, b)| 0.5 * (a + b)).collect(),
                direction: first
                    .iter()
                    .zip(&last)
                    .map(|(a, b)| if length > 0.0 { (b - a) / length } else { 0.0 })
                    .collect(),
            },
            RayMethod::R2 => RayOrigin::R2 {
                start: first,
                end: last,
            },
        };
        Ok(Self {
            samples,
            dim,
            spacing,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.samples[j * self.dim..(j + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.samples.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.samples
    }

    /// Distance between consecutive samples.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Segment length `‖r_{k-1} - r_0‖`.
    pub fn length(&self) -> f64 {
        self.spacing * (self.len() - 1) as f64
    }

    pub fn origin(&self) -> &RayOrigin {
        &self.origin
    }
}

/// `m` rays sharing `k` and `d`, plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySet {
    rays: Vec<Ray>,
    method: RayMethod,
    k: usize,
    dim: usize,
    /// `L` for R1, `tau` for R2.
    param: f64,
    sphere_radius: f64,
    seed: u64,
}

impl RaySet {
    /// Assembles a ray set from existing rays (e.g. read back from disk).
    pub fn from_rays(rays: Vec<Ray>, method: RayMethod, param: f64, sphere_radius: f64, seed: u64) -> Result<Self> {
        let first = rays.first().ok_or(Error::Empty("ray set"))?;
        let (k, dim) = (first.len(), first.dim);
        if rays.iter().any(|r| r.len() != k || r.dim != dim) {
            return Err(invalid("all rays must share k and d"));
        }
        Ok(Self {
            rays,
            method,
            k,
            dim,
            param,
            sphere_radius,
            seed,
        })
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn ray(&self, i: usize) -> &Ray {
        &self.rays[i]
    }

    /// Number of rays `m`.
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Samples per ray.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn method(&self) -> RayMethod {
        self.method
    }

    /// `L` for R1, `tau` for R2.
    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn sphere_radius(&self) -> f64 {
        self.sphere_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.rays.iter().map(Ray::spacing).collect()
    }

    /// The first `m` rays.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.rays.len() {
            return Err(invalid(format!("prefix of {m} rays out of 1..={}", self.rays.len())));
        }
        Ok(Self {
            rays: self.rays[..m].to_vec(),
            ..self.clone()
        })
    }

    /// Every sample of every ray, ray-major.
    pub fn all_samples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.rays.iter().flat_map(Ray::samples)
    }
}

fn check_common(m: usize, k: usize, dim: usize) -> Result<()> {
    if m == 0 {
        return Err(invalid("need at least one ray"));
    }
    if k < 2 {
        return Err(invalid("need at least two samples per ray"));
    }
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    Ok(())
}

/// Method R1: `r_i = a + L (i/(k-1) - 1/2) v`.
pub fn generate_r1(m: usize, k: usize, dim: usize, length: f64, seed: u64) -> Result<RaySet> {
    check_common(m, k, dim)?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(invalid("ray length must be positive"));
    }
    let rays = (0..m)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let direction = random_unit_vector(&mut rng, dim);
            let shift = (0..dim).map(|_| rng.random_range(-0.5..=0.5)).collect();
            Ray::r1(shift, direction, k, length)
        })
        .collect();
    Ok(RaySet {
        rays,
        method: RayMethod::R1,
        k,
        dim,
        param: length,
        sphere_radius: 0.0,
        seed,
    })
}

/// Method R2: chords between uniform points on the sphere of
/// `sphere_radius`, redrawn while shorter than `tau`.
pub fn generate_r2(m: usize, k: usize, dim: usize, tau: f64, sphere_radius: f64, seed: u64) -> Result<RaySet> {
    check_common(m, k, dim)?;
    if !(sphere_radius > 0.0 && sphere_radius.is_finite()) {
        return Err(invalid("sphere radius must be positive"));
    }
    if !(tau >= 0.0 && tau < 2.0 * sphere_radius) {
        return Err(invalid(format!(
            "tau must lie in [0, {}) for radius {sphere_radius}",
            2.0 * sphere_radius
        )));
    }
    if dim == 1 && tau > 0.0 {
        return Err(invalid("tau > 0 needs dimension >= 2"));
    }
    let mut rays = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = substream(seed, i as u64);
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let p: Vec<f64> = random_unit_vector(&mut rng, dim).into_iter().map(|x| x * sphere_radius).collect();
            let q: Vec<f64> = random_unit_vector(&mut rng, dim).into_iter().map(|x| x * sphere_radius).collect();
            if libm::sqrt(dist2(&p, &q)) >= tau && dist2(&p, &q) > 0.0 {
                accepted = Some((p, q));
                break;
            }
        }
        let (p, q) = accepted.ok_or(Error::RejectionLimit(MAX_REDRAWS))?;
        rays.push(Ray::r2(p, q, k));
    }
    Ok(RaySet {
        rays,
        method: RayMethod::R2,
        k,
        dim,
        param: tau,
        sphere_radius,
        seed,
    })
}

/// Normalized sample counts on a 2-D grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityField {
    pub resolution: usize,
    pub lo: f64,
    pub hi: f64,
    pub axes: (usize, usize),
    /// Row-major `[row = second axis][column = first axis]`.
    pub mass: Vec<f64>,
    /// Samples that fell inside the window.
    pub hits: u64,
}

impl DensityField {
    pub fn cell(&self, col: usize, row: usize) -> f64 {
        self.mass[row * self.resolution + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.resolution as f64;
        (self.lo + (col as f64 + 0.5) * w, self.lo + (row as f64 + 0.5) * w)
    }
}

/// Histogram of ray samples over `[lo, hi]^2` in the plane spanned by
/// coordinate `axes`. Samples outside the window are dropped; the upper
/// edge is inclusive.
pub fn ray_density_field(rays: &RaySet, resolution: usize, lo: f64, hi: f64, axes: (usize, usize)) -> Result<DensityField> {
    if resolution == 0 {
        return Err(Error::Empty("density grid"));
    }
    if lo.is_nan() || hi.is_nan() || hi <= lo {
        return Err(invalid("density window needs hi > lo"));
    }
    if axes.0 >= rays.dim() || axes.1 >= rays.dim() || axes.0 == axes.1 {
        return Err(invalid("density axes must be two distinct coordinates"));
    }
    let mut counts = vec![0u64; resolution * resolution];
    let w = (hi - lo) / resolution as f64;
    let bin = |x: f64| -> Option<usize> {
        if x < lo || x > hi {
            return None;
        }
        Some((((x - lo) / w) as usize).min(resolution - 1))
    };
    let mut hits = 0;
    for s in rays.all_samples() {
        if let (Some(c), Some(r)) = (bin(s[axes.0]), bin(s[axes.1])) {
            counts[r * resolution + c] += 1;
            hits += 1;
        }
    }
    let mass = counts
        .iter()
        .map(|&c| if hits > 0 { c as f64 / hits as f64 } else { 0.0 })
        .collect();
    Ok(DensityField {
        resolution,
        lo,
        hi,
        axes,
        mass,
        hits,
    })
}

/// Mean ray length, useful for checking R2 chord statistics.
pub fn mean_length(rays: &RaySet) -> f64 {
    rays.rays.iter().map(Ray::length).sum::<f64>() / rays.len() as f64
}
