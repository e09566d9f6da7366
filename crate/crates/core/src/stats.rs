//! Histograms, Voronoi-length estimates and histogram distances.

use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::linalg::norm;
use crate::nnindex::NNIndex;
use crate::pointcloud::PointCloud;
use crate::rays::RaySet;
use crate::signature::Signature;

/// Default bin count for coordinate histograms.
pub const DEFAULT_BINS: usize = 50;
/// Default coordinate histogram range.
pub const DEFAULT_RANGE: (f64, f64) = (-1.0, 1.0);

/// A binned 1-D distribution.
///
/// A value equal to an interior edge falls in the bin to its right; the
/// last edge is inclusive. Values outside the edges are counted in
/// `outside` and excluded from the normalized mass.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    edges: Vec<f64>,
    mass: Vec<f64>,
    raw_counts: Vec<f64>,
    outside: f64,
}

impl Histogram {
    /// Empty histogram with the given strictly increasing edges.
    pub fn with_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(invalid("a histogram needs at least one bin"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("histogram edges must be finite and strictly increasing"));
        }
        let b = edges.len() - 1;
        Ok(Self {
            edges,
            mass: vec![0.0; b],
            raw_counts: vec![0.0; b],
            outside: 0.0,
        })
    }

    /// `bins` equal-width bins on `[lo, hi]`.
    pub fn uniform(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("a histogram needs at least one bin"));
        }
        if lo.is_nan() || hi.is_nan() || hi <= lo {
            return Err(invalid("histogram range needs hi > lo"));
        }
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * w).collect();
        edges.push(hi);
        Self::with_edges(edges)
    }

    /// Histogram with prescribed (unnormalized) bin weights.
    pub fn from_counts(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let mut h = Self::with_edges(edges)?;
        if counts.len() != h.bins() {
            return Err(Error::LengthMismatch {
                expected: h.bins(),
                found: counts.len(),
            });
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(invalid("bin weights must be finite and nonnegative"));
        }
        h.raw_counts = counts;
        h.normalize();
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn raw_counts(&self) -> &[f64] {
        &self.raw_counts
    }

    /// Weight that fell outside the edges.
    pub fn outside(&self) -> f64 {
        self.outside
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Bin index for `x`, or `None` outside the edges.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let last = *self.edges.last()?;
        if !(x >= self.edges[0] && x <= last) {
            return None;
        }
        if x == last {
            return Some(self.bins() - 1);
        }
        Some(self.edges.partition_point(|e| *e <= x) - 1)
    }

    /// Adds `weight` at `x` without renormalizing.
    pub fn add(&mut self, x: f64, weight: f64) {
        match self.bin_of(x) {
            Some(b) => self.raw_counts[b] += weight,
            None => self.outside += weight,
        }
    }

    /// Recomputes `mass` from `raw_counts`; an empty histogram keeps zero mass.
    pub fn normalize(&mut self) {
        let total: f64 = self.raw_counts.iter().sum();
        for (m, c) in self.mass.iter_mut().zip(&self.raw_counts) {
            *m = if total > 0.0 { c / total } else { 0.0 };
        }
    }

    /// Cumulative mass through each bin.
    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

/// Per-point Voronoi ray-length estimate `H_j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VoronoiLengthEstimate {
    /// `H_j` for every cloud point (zero for points never hit).
    pub per_point: Vec<f64>,
    /// Hit counts behind `per_point`.
    pub hits: Vec<u64>,
    /// Rays used.
    pub m: usize,
    /// Common sample spacing, or `None` when rays differ (R2).
    pub delta_r: Option<f64>,
    /// Radius of the clipping ball `U` (centered at the origin).
    pub clip_radius: f64,
    /// Samples that fell inside `U`.
    pub in_domain_samples: u64,
    /// `Σ_rays spacing · (in-U samples on that ray)`.
    pub weighted_samples: f64,
}

impl VoronoiLengthEstimate {
    pub fn total(&self) -> f64 {
        self.per_point.iter().sum()
    }

    /// Per-point `g(x_j) H_j` and their sum.
    pub fn weighted(&self, g: &[f64]) -> Result<WeightedSum> {
        if g.len() != self.per_point.len() {
            return Err(Error::LengthMismatch {
                expected: self.per_point.len(),
                found: g.len(),
            });
        }
        let per_point: Vec<f64> = self.per_point.iter().zip(g).map(|(h, g)| h * g).collect();
        let total = per_point.iter().sum();
        Ok(WeightedSum { per_point, total })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightedSum {
    pub per_point: Vec<f64>,
    pub total: f64,
}

struct Hits {
    counts: Vec<u64>,
    lengths: Vec<f64>,
    in_domain: u64,
    weighted: f64,
}

const RAY_CHUNK: usize = 256;

fn hits_for_rays(index: &NNIndex<'_>, rays: &RaySet, range: core::ops::Range<usize>, clip: f64) -> Result<Hits> {
    let n = index.cloud().len();
    let mut h = Hits {
        counts: vec![0; n],
        lengths: vec![0.0; n],
        in_domain: 0,
        weighted: 0.0,
    };
    for ray in &rays.rays()[range] {
        let mut inside = 0u64;
        for s in ray.samples() {
            if norm(s) > clip {
                continue;
            }
            let j = index.nearest(s)?.index;
            h.counts[j] += 1;
            h.lengths[j] += ray.spacing();
            inside += 1;
        }
        h.in_domain += inside;
        h.weighted += ray.spacing() * inside as f64;
    }
    Ok(h)
}

/// Monte-Carlo estimate of the expected length of ray inside each
/// Voronoi cell intersected with the ball of radius `clip_radius`:
/// every in-ball sample credits its ray spacing to its nearest point and
/// the sums are divided by `m`.
pub fn estimate_voronoi_lengths(cloud: &PointCloud, rays: &RaySet, clip_radius: f64) -> Result<VoronoiLengthEstimate> {
    let index = NNIndex::build(cloud)?;
    estimate_voronoi_lengths_with_index(&index, rays, clip_radius)
}

pub fn estimate_voronoi_lengths_with_index(
    index: &NNIndex<'_>,
    rays: &RaySet,
    clip_radius: f64,
) -> Result<VoronoiLengthEstimate> {
    if rays.is_empty() {
        return Err(Error::Empty("ray set"));
    }
    if rays.dim() != index.cloud().dim() {
        return Err(Error::DimensionMismatch {
            expected: index.cloud().dim(),
            found: rays.dim(),
        });
    }
    if clip_radius.is_nan() || clip_radius <= 0.0 {
        return Err(invalid("clip radius must be positive"));
    }
    let m = rays.len();
    let chunks: Vec<core::ops::Range<usize>> = (0..m)
        .step_by(RAY_CHUNK)
        .map(|s| s..(s + RAY_CHUNK).min(m))
        .collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Hits> = {
        use rayon::prelude::*;
        chunks
            .into_par_iter()
            .map(|r| hits_for_rays(index, rays, r, clip_radius))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Hits> = chunks
        .into_iter()
        .map(|r| hits_for_rays(index, rays, r, clip_radius))
        .collect::<Result<_>>()?;

    let n = index.cloud().len();
    let mut total = Hits {
        counts: vec![0; n],
        lengths: vec![0.0; n],
        in_domain: 0,
        weighted: 0.0,
    };
    for p in parts {
        for j in 0..n {
            total.counts[j] += p.counts[j];
            total.lengths[j] += p.lengths[j];
        }
        total.in_domain += p.in_domain;
        total.weighted += p.weighted;
    }
    let spacing = rays.ray(0).spacing();
    let common = rays.rays().iter().all(|r| r.spacing() == spacing);
    let per_point = if common {
        let unit = spacing / m as f64;
        total.counts.iter().map(|&c| c as f64 * unit).collect()
    } else {
        total.lengths.iter().map(|l| l / m as f64).collect()
    };
    Ok(VoronoiLengthEstimate {
        per_point,
        hits: total.counts,
        m,
        delta_r: common.then_some(spacing),
        clip_radius,
        in_domain_samples: total.in_domain,
        weighted_samples: total.weighted,
    })
}

/// `g(x_j) H_j` for every point, and the total.
pub fn weighted_sensed_sum(cloud: &PointCloud, rays: &RaySet, g: &[f64], clip_radius: f64) -> Result<WeightedSum> {
    if g.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            found: g.len(),
        });
    }
    estimate_voronoi_lengths(cloud, rays, clip_radius)?.weighted(g)
}

/// One histogram per coordinate of the sensed nearest points.
pub fn coordinate_histograms(sig: &Signature, bins: usize, lo: f64, hi: f64) -> Result<Vec<Histogram>> {
    if !sig.spec().include_closest_point {
        return Err(Error::MissingChannels("closest-point"));
    }
    let template = Histogram::uniform(bins, lo, hi)?;
    let mut hists = vec![template; sig.dim()];
    for i in 0..sig.m() {
        for j in 0..sig.k() {
            let p = sig.closest_point(i, j, 0).expect("checked above");
            for (h, x) in hists.iter_mut().zip(p) {
                h.add(f64::from(*x), 1.0);
            }
        }
    }
    hists.iter_mut().for_each(Histogram::normalize);
    Ok(hists)
}

/// `∫ |F - G|` for two histograms on identical edges, with each bin's
/// cumulative mass held over that bin's width.
pub fn wasserstein1(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::EdgeMismatch);
    }
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut acc = 0.0;
    for bin in 0..a.bins() {
        fa += a.mass[bin];
        fb += b.mass[bin];
        acc += (fa - fb).abs() * a.width(bin);
    }
    Ok(acc)
}

/// Euclidean distance between mass vectors.
pub fn l2_distance(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::EdgeMismatch);
    }
    Ok(libm::sqrt(
        a.mass.iter().zip(&b.mass).map(|(x, y)| (x - y) * (x - y)).sum(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HistMetric {
    L2,
    W1,
}

impl HistMetric {
    pub fn distance(self, a: &Histogram, b: &Histogram) -> Result<f64> {
        match self {
            HistMetric::L2 => l2_distance(a, b),
            HistMetric::W1 => wasserstein1(a, b),
        }
    }
}

impl FromStr for HistMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(HistMetric::L2),
            "w1" => Ok(HistMetric::W1),
            other => Err(invalid(alloc::format!("unknown histogram metric {other:?}"))),
        }
    }
}

/// Sum of per-coordinate histogram distances.
pub fn hist_distance(a: &[Histogram], b: &[Histogram], metric: HistMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    a.iter().zip(b).map(|(x, y)| metric.distance(x, y)).sum()
}

/// Histogram distance between two signatures using the same binning.
pub fn hist_distance_pair(
    a: &Signature,
    b: &Signature,
    metric: HistMetric,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    hist_distance(
        &coordinate_histograms(a, bins, lo, hi)?,
        &coordinate_histograms(b, bins, lo, hi)?,
        metric,
    )
}

/// Symmetric `n × n` matrix of histogram distances, row-major.
pub fn pairwise_distances(sets: &[Vec<Histogram>], metric: HistMetric) -> Result<Vec<f64>> {
    let n = sets.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let eval = |&(i, j): &(usize, usize)| hist_distance(&sets[i], &sets[j], metric);
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        pairs.par_iter().map(eval).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = pairs.iter().map(eval).collect::<Result<_>>()?;
    let mut out = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[i * n + j] = v;
        out[j * n + i] = v;
    }
    Ok(out)
}

/// Class-aggregated distance matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMatrix {
    /// Sorted distinct labels; row/column `a` is `labels[a]`.
    pub labels: Vec<i64>,
    /// Row-major `K × K` mean distances.
    pub matrix: Vec<f64>,
    /// Column of the smallest entry in each row (lowest index on ties).
    pub row_argmin: Vec<usize>,
}

impl ClassMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.labels.len() + b]
    }

    /// Whether every row attains its minimum on the diagonal.
    pub fn argmins_on_diagonal(&self) -> bool {
        self.row_argmin.iter().enumerate().all(|(a, &b)| a == b)
    }
}

/// Averages an object-level distance matrix over label pairs.
///
/// Self pairs are excluded from diagonal blocks; a class with a single
/// member falls back to its self distance.
pub fn class_matrix_from_distances(distances: &[f64], labels: &[i64]) -> Result<ClassMatrix> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty("object list"));
    }
    if distances.len() != n * n {
        return Err(Error::LengthMismatch {
            expected: n * n,
            found: distances.len(),
        });
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let slot: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label collected above"))
        .collect();
    let mut sum = vec![0.0; k * k];
    let mut count = vec![0usize; k * k];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cell = slot[i] * k + slot[j];
            sum[cell] += distances[i * n + j];
            count[cell] += 1;
        }
    }
    for i in 0..n {
        let cell = slot[i] * k + slot[i];
        if count[cell] == 0 {
            // singleton class
            sum[cell] = distances[i * n + i];
            count[cell] = 1;
        }
    }
    let matrix: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let row_argmin = (0..k)
        .map(|a| {
            (0..k)
                .min_by(|&x, &y| matrix[a * k + x].total_cmp(&matrix[a * k + y]).then(x.cmp(&y)))
                .expect("k >= 1")
        })
        .collect();
    Ok(ClassMatrix {
        labels: classes,
        matrix,
        row_argmin,
    })
}

/// Class matrix from per-object coordinate histograms.
pub fn class_distance_matrix(sets: &[Vec<Histogram>], labels: &[i64], metric: HistMetric) -> Result<ClassMatrix> {
    if sets.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: sets.len(),
            found: labels.len(),
        });
    }
    class_matrix_from_distances(&pairwise_distances(sets, metric)?, labels)
}

/// Mean of the sensed points of one class next to the mean of all its points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMean {
    /// Hit-weighted mean of sensed nearest points.
    pub sensed: Vec<f64>,
    /// Plain mean over the whole class cloud.
    pub full: Vec<f64>,
    /// Total nearest-neighbour hits (`m·k`).
    pub hits: u64,
}

/// For each class cloud, the hit-weighted mean of its sensed points and
/// its plain mean, sensed with the same ray set.
pub fn sensed_mean(clouds: &[PointCloud], rays: &RaySet) -> Result<Vec<ClassMean>> {
    let dim = clouds.first().ok_or(Error::Empty("class list"))?.dim();
    clouds
        .iter()
        .map(|cloud| {
            if cloud.dim() != dim || rays.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: if cloud.dim() != dim { cloud.dim() } else { rays.dim() },
                });
            }
            let index = NNIndex::build(cloud)?;
            let mut sensed = vec![0.0; dim];
            let mut hits = 0u64;
            for s in rays.all_samples() {
                let p = cloud.point(index.nearest(s)?.index);
                for (acc, x) in sensed.iter_mut().zip(p) {
                    *acc += x;
                }
                hits += 1;
            }
            sensed.iter_mut().for_each(|x| *x /= hits as f64);
            Ok(ClassMean {
                sensed,
                full: cloud.centroid(),
                hits,
            })
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(invalid("rank correlation needs at least two values"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    Ok(cov / libm::sqrt(va * vb))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut s = 0;
    while s < order.len() {
        let mut e = s + 1;
        while e < order.len() && v[order[e]] == v[order[s]] {
            e += 1;
        }
        let r = (s + e + 1) as f64 / 2.0;
        for &i in &order[s..e] {
            out[i] = r;
        }
        s = e;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{synth_shape, ShapeKind, ShapeParams};
    use crate::rays::{generate_r1, generate_r2, DEFAULT_LENGTH};
    use crate::rng::substream;
    use crate::signature::{build_signature, FeatureSpec};
    use proptest::prelude::*;
    use rand::Rng;

    /// W1 between the discrete measures with equal-weight atoms at bin
    /// left edges, by matching sorted atoms one to one.
    fn sorted_matching_w1(edges: &[f64], a: &[u32], b: &[u32]) -> f64 {
        let atoms = |c: &[u32]| -> Vec<f64> {
            c.iter()
                .enumerate()
                .flat_map(|(bin, &n)| core::iter::repeat_n(edges[bin], n as usize))
                .collect()
        };
        let (xa, xb) = (atoms(a), atoms(b));
        assert_eq!(xa.len(), xb.len());
        xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum::<f64>() / xa.len() as f64
    }

    fn random_counts(rng: &mut impl Rng, bins: usize, total: u32) -> Vec<u32> {
        let mut c = vec![0u32; bins];
        for _ in 0..total {
            c[rng.random_range(0..bins)] += 1;
        }
        c
    }

    fn as_f64(c: &[u32]) -> Vec<f64> {
        c.iter().map(|&x| f64::from(x)).collect()
    }

    #[test]
    fn bin_boundaries() {
        let mut h = Histogram::uniform(4, 0.0, 1.0).unwrap();
        assert_eq!(h.bin_of(0.0), Some(0));
        assert_eq!(h.bin_of(0.25), Some(1));
        assert_eq!(h.bin_of(0.5), Some(2));
        assert_eq!(h.bin_of(1.0), Some(3));
        assert_eq!(h.bin_of(1.0 + 1e-12), None);
        assert_eq!(h.bin_of(-1e-12), None);
        assert_eq!(h.bin_of(f64::NAN), None);
        h.add(0.25, 1.0);
        h.add(2.0, 1.0);
        h.normalize();
        assert_eq!(h.mass(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(h.outside(), 1.0);
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(Histogram::uniform(0, 0.0, 1.0).is_err());
        assert!(Histogram::uniform(3, 1.0, 1.0).is_err());
        assert!(Histogram::with_edges(vec![0.0, 1.0, 1.0]).is_err());
        assert!(Histogram::with_edges(vec![0.0]).is_err());
    }

    #[test]
    fn w1_point_mass_shift() {
        let edges = vec![-0.5, 0.5, 1.5];
        let a = Histogram::from_counts(edges.clone(), vec![1.0, 0.0]).unwrap();
        let b = Histogram::from_counts(edges, vec![0.0, 1.0]).unwrap();
        assert_eq!(wasserstein1(&a, &b).unwrap(), 1.0);
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w1_translation_is_shift() {
        let edges: Vec<f64> = (0..=20).map(f64::from).collect();
        let mut rng = substream(5, 0);
        for shift in 1..6 {
            let base = random_counts(&mut rng, 10, 37);
            let mut moved = vec![0u32; 20];
            moved[shift..shift + 10].copy_from_slice(&base);
            let mut padded = vec![0u32; 20];
            padded[..10].copy_from_slice(&base);
            let a = Histogram::from_counts(edges.clone(), as_f64(&padded)).unwrap();
            let b = Histogram::from_counts(edges.clone(), as_f64(&moved)).unwrap();
            let w = wasserstein1(&a, &b).unwrap();
            assert!((w - shift as f64).abs() < 1e-12, "{w} vs {shift}");
        }
    }

    #[test]
    fn w1_matches_sorted_matching() {
        let mut rng = substream(17, 3);
        for trial in 0..500 {
            let bins = rng.random_range(1..60);
            let mut edges = vec![rng.random_range(-2.0..0.0)];
            for _ in 0..bins {
                let last = *edges.last().unwrap();
                edges.push(last + rng.random_range(0.01..0.5));
            }
            let total = rng.random_range(1..200);
            let ca = random_counts(&mut rng, bins, total);
            let cb = random_counts(&mut rng, bins, total);
            let a = Histogram::from_counts(edges.clone(), as_f64(&ca)).unwrap();
            let b = Histogram::from_counts(edges.clone(), as_f64(&cb)).unwrap();
            let w = wasserstein1(&a, &b).unwrap();
            let oracle = sorted_matching_w1(&edges, &ca, &cb);
            assert!((w - oracle).abs() < 1e-10, "trial {trial}: {w} vs {oracle}");
        }
    }

    #[test]
    fn edge_mismatch_is_an_error() {
        let a = Histogram::uniform(4, 0.0, 1.0).unwrap();
        let b = Histogram::uniform(5, 0.0, 1.0).unwrap();
        assert!(matches!(wasserstein1(&a, &b), Err(Error::EdgeMismatch)));
        assert!(matches!(l2_distance(&a, &b), Err(Error::EdgeMismatch)));
    }

    fn hist_strategy() -> impl Strategy<Value = Histogram> {
        proptest::collection::vec(0u32..20, 8).prop_map(|mut c| {
            if c.iter().all(|&x| x == 0) {
                c[0] = 1;
            }
            Histogram::from_counts((0..=8).map(|i| f64::from(i) * 0.25).collect(), as_f64(&c)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn w1_is_a_metric(a in hist_strategy(), b in hist_strategy(), c in hist_strategy()) {
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            let bc = wasserstein1(&b, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab == 0.0, a.mass() == b.mass());
        }

        #[test]
        fn l2_is_a_metric(a in hist_strategy(), b in hist_strategy(), c in hist_strategy()) {
            let ab = l2_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, l2_distance(&b, &a).unwrap());
            prop_assert!(l2_distance(&a, &c).unwrap() <= ab + l2_distance(&b, &c).unwrap() + 1e-12);
        }
    }

    #[test]
    fn single_point_takes_every_in_ball_sample() {
        let cloud = PointCloud::from_rows(&[vec![0.1, -0.2]]).unwrap();
        let rays = generate_r1(200, 21, 2, DEFAULT_LENGTH, 8).unwrap();
        let est = estimate_voronoi_lengths(&cloud, &rays, 1.0).unwrap();
        let inside = rays.all_samples().filter(|s| norm(s) <= 1.0).count() as u64;
        assert_eq!(est.in_domain_samples, inside);
        assert_eq!(est.hits[0], inside);
        let expected = 0.1 / 200.0 * inside as f64;
        assert!((est.per_point[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn mass_is_conserved() {
        let cloud = synth_shape(ShapeKind::Sphere, 60, 3, &ShapeParams::default(), 2).unwrap();
        for rays in [
            generate_r1(300, 31, 3, DEFAULT_LENGTH, 3).unwrap(),
            generate_r2(300, 31, 3, 0.5, 1.0, 3).unwrap(),
        ] {
            let est = estimate_voronoi_lengths(&cloud, &rays, 1.0).unwrap();
            let expected = est.weighted_samples / est.m as f64;
            assert!((est.total() - expected).abs() <= 1e-12 * expected);
            assert_eq!(est.hits.iter().sum::<u64>(), est.in_domain_samples);
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let cloud = PointCloud::from_rows(&[vec![0.5, 0.0], vec![-0.5, 0.0]]).unwrap();
        let rays = generate_r1(100_000, 21, 2, DEFAULT_LENGTH, 42).unwrap();
        let est = estimate_voronoi_lengths(&cloud, &rays, 1.0).unwrap();
        let ratio = est.per_point[0] / est.per_point[1];
        assert!((0.97..=1.03).contains(&ratio), "ratio {ratio}");

        let g = [0.5, -0.5];
        let s = est.weighted(&g).unwrap();
        assert!(s.total.abs() < 0.02 * est.total(), "{}", s.total);
    }

    #[test]
    fn weighted_sum_reductions() {
        let cloud = synth_shape(ShapeKind::Sphere, 30, 3, &ShapeParams::default(), 9).unwrap();
        let rays = generate_r1(200, 21, 3, DEFAULT_LENGTH, 10).unwrap();
        let est = estimate_voronoi_lengths(&cloud, &rays, 1.0).unwrap();
        let ones = weighted_sensed_sum(&cloud, &rays, &vec![1.0; 30], 1.0).unwrap();
        assert_eq!(ones.total, est.total());
        let mut ind = vec![0.0; 30];
        ind[0] = 1.0;
        assert_eq!(weighted_sensed_sum(&cloud, &rays, &ind, 1.0).unwrap().total, est.per_point[0]);
        assert!(matches!(
            weighted_sensed_sum(&cloud, &rays, &[1.0], 1.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn estimates_self_converge() {
        let cloud = synth_shape(ShapeKind::Grid, 20, 2, &ShapeParams::default(), 0).unwrap();
        let (cloud, _) = crate::pointcloud::calibrate(&cloud);
        let est = |m: usize, seed: u64| {
            estimate_voronoi_lengths(&cloud, &generate_r1(m, 101, 2, DEFAULT_LENGTH, seed).unwrap(), 1.0)
                .unwrap()
                .per_point
        };
        let gap = |m: usize| {
            let (a, b) = (est(m, 1), est(4 * m, 2));
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let coarse = gap(1000);
        let fine = gap(16_000);
        assert!(fine < coarse / 2.0, "{coarse} -> {fine}");
    }

    #[test]
    fn empty_rays_rejected() {
        let rays = RaySet::from_rays(Vec::new(), crate::rays::RayMethod::R1, DEFAULT_LENGTH, 1.0, 0);
        assert!(matches!(rays, Err(Error::Empty(_))));
    }

    #[test]
    fn origin_point_histograms() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let rays = generate_r1(10, 5, 3, DEFAULT_LENGTH, 1).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let hists = coordinate_histograms(&sig, DEFAULT_BINS, -1.0, 1.0).unwrap();
        assert_eq!(hists.len(), 3);
        for h in &hists {
            assert_eq!(h.mass()[25], 1.0);
            assert!((h.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let no_cp = FeatureSpec {
            include_closest_point: false,
            ..FeatureSpec::default()
        };
        let sig = build_signature(&cloud, &rays, &no_cp).unwrap();
        assert!(matches!(
            coordinate_histograms(&sig, 10, -1.0, 1.0),
            Err(Error::MissingChannels(_))
        ));
    }

    #[test]
    fn same_object_histograms_are_closer() {
        let params = ShapeParams::default();
        let sphere = synth_shape(ShapeKind::Sphere, 2000, 3, &params, 1).unwrap();
        let cube = synth_shape(ShapeKind::CubeSurface, 2000, 3, &params, 1).unwrap();
        let (sphere, _) = crate::pointcloud::calibrate(&sphere);
        let (cube, _) = crate::pointcloud::calibrate(&cube);
        let spec = FeatureSpec::default();
        let h = |c: &PointCloud, seed| {
            let rays = generate_r1(50, 10, 3, DEFAULT_LENGTH, seed).unwrap();
            coordinate_histograms(&build_signature(c, &rays, &spec).unwrap(), 50, -1.0, 1.0).unwrap()
        };
        let (s1, s2, c1) = (h(&sphere, 10), h(&sphere, 11), h(&cube, 12));
        let same = hist_distance(&s1, &s2, HistMetric::W1).unwrap();
        let diff = hist_distance(&s1, &c1, HistMetric::W1).unwrap();
        assert!(same < diff, "{same} vs {diff}");
        assert_eq!(hist_distance(&s1, &s1, HistMetric::W1).unwrap(), 0.0);
        assert_eq!(diff, hist_distance(&c1, &s1, HistMetric::W1).unwrap());
    }

    #[test]
    fn class_matrix_two_far_classes() {
        let edges: Vec<f64> = (0..=10).map(f64::from).collect();
        let at = |bin: usize| {
            let mut c = vec![0.0; 10];
            c[bin] = 1.0;
            vec![Histogram::from_counts(edges.clone(), c).unwrap()]
        };
        let sets = vec![at(0), at(8), at(0), at(8)];
        let labels = [3, 7, 3, 7];
        let m = class_distance_matrix(&sets, &labels, HistMetric::W1).unwrap();
        assert_eq!(m.labels, vec![3, 7]);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.get(0, 1), 8.0);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert!(m.argmins_on_diagonal());
    }

    #[test]
    fn class_matrix_excludes_self_pairs() {
        // objects 0,1 in class 0 at distance 2; self distances would pull the mean down
        let d = vec![0.0, 2.0, 5.0, 2.0, 0.0, 4.0, 5.0, 4.0, 0.0];
        let m = class_matrix_from_distances(&d, &[0, 0, 1]).unwrap();
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 4.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.row_argmin, vec![0, 1]);
    }

    #[test]
    fn sensed_means() {
        let rays = generate_r1(200, 21, 2, DEFAULT_LENGTH, 4).unwrap();
        let single = PointCloud::from_rows(&[vec![0.3, -0.1]]).unwrap();
        let means = sensed_mean(&[single], &rays).unwrap();
        assert!((means[0].sensed[0] - 0.3).abs() < 1e-12 && (means[0].sensed[1] + 0.1).abs() < 1e-12);
        assert_eq!(means[0].full, vec![0.3, -0.1]);

        // tight cluster near the origin plus a few isolated points to the right
        let mut rows: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let a = i as f64 * 0.157;
                let r = 0.05 * (i % 7) as f64 / 7.0;
                vec![r * libm::cos(a), r * libm::sin(a)]
            })
            .collect();
        rows.extend([vec![0.8, 0.0], vec![0.8, 0.3], vec![0.8, -0.3]]);
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let m = &sensed_mean(&[cloud], &rays).unwrap()[0];
        assert!(m.sensed[0] > m.full[0] + 0.1, "{:?} vs {:?}", m.sensed, m.full);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }
}
