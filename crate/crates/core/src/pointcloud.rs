//! Point sets in `R^d`: validation, calibration and synthetic generators.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{mat_vec, norm, random_orthogonal, random_unit_vector};
use crate::rng::{named_seed, substream};

/// `N` points in `R^d`, stored row-major, with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    labels: Option<Vec<i32>>,
    id: Option<String>,
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::LengthMismatch {
                expected: (coords.len() / dim + 1) * dim,
                found: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Self {
            dim,
            coords,
            labels: None,
            id: None,
        })
    }

    /// Builds a cloud from a list of equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyCloud)?.as_ref().len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LabelLength {
                labels: labels.len(),
                points: self.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false: a valid cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    /// Coordinate mean.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|x| *x /= n);
        c
    }

    /// Largest Euclidean norm over all points.
    pub fn max_norm(&self) -> f64 {
        self.points().map(norm).fold(0.0, f64::max)
    }

    /// Same cloud with the points reordered so that output row `i` is input
    /// row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: perm.len(),
            });
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for &i in perm {
            coords.extend_from_slice(self.point(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&i| l[i]).collect());
        Ok(Self {
            dim: self.dim,
            coords,
            labels,
            id: self.id.clone(),
        })
    }

    fn map_coords(&self, coords: Vec<f64>, dim: usize) -> Self {
        Self {
            dim,
            coords,
            labels: self.labels.clone(),
            id: self.id.clone(),
        }
    }
}

/// What [`calibrate`] did to a cloud.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationReport {
    pub centroid: Vec<f64>,
    /// Max point norm after centering; 0 for a fully coincident cloud.
    pub scale: f64,
    /// Whether the scaling step was applied.
    pub applied: bool,
}

/// Centers the cloud at its coordinate mean, then divides by the largest
/// point norm so the result lies in the closed unit ball.
pub fn calibrate(cloud: &PointCloud) -> (PointCloud, CalibrationReport) {
    let centroid = cloud.centroid();
    let d = cloud.dim;
    let mut coords: Vec<f64> = cloud
        .coords
        .iter()
        .enumerate()
        .map(|(i, x)| x - centroid[i % d])
        .collect();
    let scale = coords.chunks_exact(d).map(norm).fold(0.0, f64::max);
    let applied = scale > 0.0;
    if applied {
        coords.iter_mut().for_each(|x| *x /= scale);
    } else {
        coords.iter_mut().for_each(|x| *x = 0.0);
    }
    (
        cloud.map_coords(coords, d),
        CalibrationReport {
            centroid,
            scale,
            applied,
        },
    )
}

/// Synthetic shape families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ShapeKind {
    Sphere,
    Hemisphere,
    CubeSurface,
    Torus,
    Curve,
    Grid,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Hemisphere => "hemisphere",
            ShapeKind::CubeSurface => "cube-surface",
            ShapeKind::Torus => "torus",
            ShapeKind::Curve => "curve",
            ShapeKind::Grid => "grid",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sphere" => ShapeKind::Sphere,
            "hemisphere" => ShapeKind::Hemisphere,
            "cube-surface" | "cube" => ShapeKind::CubeSurface,
            "torus" => ShapeKind::Torus,
            "curve" => ShapeKind::Curve,
            "grid" => ShapeKind::Grid,
            other => return Err(invalid(alloc::format!("unknown shape {other:?}"))),
        })
    }
}

/// Shape parameters; each generator reads only the fields it needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapeParams {
    /// Sphere / hemisphere radius.
    pub radius: f64,
    /// Cube and grid half side length.
    pub half_side: f64,
    pub torus_major: f64,
    pub torus_minor: f64,
    /// Uniform scale applied to the trefoil curve.
    pub curve_scale: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            half_side: 1.0,
            torus_major: 1.0,
            torus_minor: 0.4,
            curve_scale: 1.0,
        }
    }
}

/// Samples `n` points from the named shape in `R^dim`.
///
/// Sphere, hemisphere and cube surface are uniform with respect to surface
/// measure in any `dim >= 2`. The torus and the trefoil curve exist only in
/// `R^3`; use [`embed_rotate`] to place them in higher dimensions. The grid
/// returns the first `n` nodes of the smallest regular lattice on
/// `[-half_side, half_side]^dim` that has at least `n` nodes.
pub fn synth_shape(
    kind: ShapeKind,
    n: usize,
    dim: usize,
    params: &ShapeParams,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let unsupported = Error::UnsupportedShape {
        kind: kind.name(),
        dim,
    };
    let mut rng = substream(named_seed(seed, kind.name()), 0);
    let mut coords = Vec::with_capacity(n * dim);
    match kind {
        ShapeKind::Sphere | ShapeKind::Hemisphere => {
            if dim < 2 {
                return Err(unsupported);
            }
            for _ in 0..n {
                let mut v = random_unit_vector(&mut rng, dim);
                if kind == ShapeKind::Hemisphere {
                    v[dim - 1] = v[dim - 1].abs();
                }
                coords.extend(v.into_iter().map(|x| x * params.radius));
            }
        }
        ShapeKind::CubeSurface => {
            if dim < 2 {
                return Err(unsupported);
            }
            let h = params.half_side;
            for _ in 0..n {
                let axis = rng.random_range(0..dim);
                let side = if rng.random::<bool>() { h } else { -h };
                for a in 0..dim {
                    coords.push(if a == axis {
                        side
                    } else {
                        rng.random_range(-h..=h)
                    });
                }
            }
        }
        ShapeKind::Torus => {
            if dim != 3 {
                return Err(unsupported);
            }
            let (big, small) = (params.torus_major, params.torus_minor);
            if !(big > small && small > 0.0) {
                return Err(invalid("torus needs major > minor > 0"));
            }
            // Accept (theta, phi) with density proportional to the area element.
            while coords.len() < n * 3 {
                let theta = rng.random_range(0.0..2.0 * PI);
                let phi = rng.random_range(0.0..2.0 * PI);
                let w = (big + small * libm::cos(phi)) / (big + small);
                if rng.random::<f64>() >= w {
                    continue;
                }
                let ring = big + small * libm::cos(phi);
                coords.push(ring * libm::cos(theta));
                coords.push(ring * libm::sin(theta));
                coords.push(small * libm::sin(phi));
            }
        }
        ShapeKind::Curve => {
            if dim != 3 {
                return Err(unsupported);
            }
            let s = params.curve_scale;
            for _ in 0..n {
                let t = rng.random_range(0.0..2.0 * PI);
                coords.push(s * (libm::sin(t) + 2.0 * libm::sin(2.0 * t)));
                coords.push(s * (libm::cos(t) - 2.0 * libm::cos(2.0 * t)));
                coords.push(s * -libm::sin(3.0 * t));
            }
        }
        ShapeKind::Grid => {
            if dim == 0 {
                return Err(unsupported);
            }
            let mut side = 1usize;
            while side.checked_pow(dim as u32).is_some_and(|c| c < n) {
                side += 1;
            }
            let h = params.half_side;
            let step = if side > 1 { 2.0 * h / (side - 1) as f64 } else { 0.0 };
            let mut digits = vec![0usize; dim];
            for _ in 0..n {
                coords.extend(digits.iter().map(|&i| if side > 1 { -h + step * i as f64 } else { 0.0 }));
                for slot in digits.iter_mut().rev() {
                    *slot += 1;
                    if *slot < side {
                        break;
                    }
                    *slot = 0;
                }
            }
        }
    }
    PointCloud::new(dim, coords).map(|c| c.with_id(kind.name()))
}

/// Zero-pads the cloud to `target_dim` coordinates, then applies a
/// Haar-random rotation of `R^target_dim`.
pub fn embed_rotate(cloud: &PointCloud, target_dim: usize, seed: u64) -> Result<PointCloud> {
    if target_dim < cloud.dim {
        return Err(invalid(alloc::format!(
            "target dimension {target_dim} is below cloud dimension {}",
            cloud.dim
        )));
    }
    let mut rng = substream(named_seed(seed, "embed-rotate"), 0);
    let q = random_orthogonal(&mut rng, target_dim);
    let mut padded = vec![0.0; target_dim];
    let mut coords = Vec::with_capacity(cloud.len() * target_dim);
    for p in cloud.points() {
        padded[..cloud.dim].copy_from_slice(p);
        coords.extend(mat_vec(&q, target_dim, target_dim, &padded));
    }
    Ok(cloud.map_coords(coords, target_dim))
}

/// Distribution of injected outliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OutlierMode {
    /// Uniform in the closed unit ball.
    UnitSphereUniform,
    /// Uniform in `[-1, 1]^d` ("salt and pepper").
    CubeUniform,
}

impl FromStr for OutlierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-sphere-uniform" | "sphere" => Ok(OutlierMode::UnitSphereUniform),
            "cube-uniform" | "cube" => Ok(OutlierMode::CubeUniform),
            other => Err(invalid(alloc::format!("unknown outlier mode {other:?}"))),
        }
    }
}

/// A cloud with appended outliers and the index range they occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct Contaminated {
    pub cloud: PointCloud,
    pub outliers: Range<usize>,
}

impl Contaminated {
    pub fn is_outlier(&self, index: usize) -> bool {
        self.outliers.contains(&index)
    }
}

/// Appends `count` outlier points; existing points keep their indices.
/// Outliers get label `-1` when the cloud is labelled.
pub fn add_outliers(cloud: &PointCloud, count: usize, mode: OutlierMode, seed: u64) -> Contaminated {
    let d = cloud.dim;
    let mut rng = substream(named_seed(seed, "outliers"), 0);
    let start = cloud.len();
    let mut out = cloud.clone();
    out.coords.reserve(count * d);
    for _ in 0..count {
        match mode {
            OutlierMode::UnitSphereUniform => {
                let v = random_unit_vector(&mut rng, d);
                let r = libm::pow(rng.random::<f64>(), 1.0 / d as f64);
                out.coords.extend(v.into_iter().map(|x| x * r));
            }
            OutlierMode::CubeUniform => {
                for _ in 0..d {
                    out.coords.push(rng.random_range(-1.0..=1.0));
                }
            }
        }
    }
    if let Some(l) = out.labels.as_mut() {
        l.extend(core::iter::repeat_n(-1, count));
    }
    Contaminated {
        cloud: out,
        outliers: start..start + count,
    }
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    let mut rng = substream(named_seed(seed, "gaussian-noise"), 0);
    let coords = cloud
        .coords
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    cloud.map_coords(coords, cloud.dim)
}
