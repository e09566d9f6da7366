//! Curvature of sensed curves, coverage of the cloud, and salient points.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, dot, least_squares, norm, solve, symmetric_eigen};
use crate::nnindex::NNIndex;
use crate::pointcloud::PointCloud;
use crate::rays::{Ray, RaySet};
use crate::signature::{sensed_multiset, Signature};

/// Curvature estimates at the interior samples of every ray.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureProfile {
    pub m: usize,
    pub k: usize,
    /// Common sample spacing, or `None` when rays differ.
    pub delta_r: Option<f64>,
    /// Row-major `m × (k-2)`; `None` marks a degenerate window.
    pub per_ray: Vec<Option<f64>>,
}

/// Order statistics of the non-degenerate curvature estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureSummary {
    pub count: usize,
    pub flagged: usize,
    pub median: f64,
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
}

impl CurvatureProfile {
    /// Estimate at interior sample `j` (`1 ≤ j ≤ k-2`) of `ray`.
    pub fn get(&self, ray: usize, j: usize) -> Option<f64> {
        assert!(j >= 1 && j + 1 < self.k, "curvature is undefined at ray endpoints");
        self.per_ray[ray * (self.k - 2) + j - 1]
    }

    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_ray.iter().flatten().copied()
    }

    pub fn flagged(&self) -> usize {
        self.per_ray.iter().filter(|v| v.is_none()).count()
    }

    /// `None` when every window is degenerate.
    pub fn summary(&self) -> Option<CurvatureSummary> {
        let mut v: Vec<f64> = self.valid().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(CurvatureSummary {
            count: v.len(),
            flagged: self.flagged(),
            median: quantile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p05: quantile(&v, 0.05),
            p95: quantile(&v, 0.95),
        })
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

/// Curvature of the discrete curve through `a, b, c` by central
/// differences: `κ = ‖γ''_⊥‖ / ‖γ'‖²` with `γ' = (c - a)/2h` and
/// `γ'' = (c - 2b + a)/h²`. The step `h` cancels.
pub fn three_point_curvature(a: &[f64], b: &[f64], c: &[f64]) -> Option<f64> {
    let d1: Vec<f64> = a.iter().zip(c).map(|(a, c)| c - a).collect();
    let d2: Vec<f64> = a.iter().zip(b).zip(c).map(|((a, b), c)| c - 2.0 * b + a).collect();
    let t2 = dot(&d1, &d1);
    if t2.is_nan() || t2 <= 0.0 {
        return None;
    }
    let along = dot(&d2, &d1) / t2;
    let perp: Vec<f64> = d2.iter().zip(&d1).map(|(x, t)| x - along * t).collect();
    let kappa = 4.0 * norm(&perp) / t2;
    kappa.is_finite().then_some(kappa)
}

fn common_spacing(spacings: &[f64]) -> Option<f64> {
    let first = *spacings.first()?;
    spacings.iter().all(|s| *s == first).then_some(first)
}

fn profile_from_rows(m: usize, k: usize, delta_r: Option<f64>, rows: Vec<Vec<Option<f64>>>) -> CurvatureProfile {
    CurvatureProfile {
        m,
        k,
        delta_r,
        per_ray: rows.into_iter().flatten().collect(),
    }
}

fn map_rays<T: Send, F>(m: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..m).map(f).collect()
    }
}

/// Curvature along each ray from the closest-point channels.
///
/// Windows where consecutive samples sense the same point are flagged.
pub fn curvature_along_rays(sig: &Signature) -> Result<CurvatureProfile> {
    if !sig.spec().include_closest_point {
        return Err(Error::MissingChannels("closest-point"));
    }
    sensed_curve_profile(sig, |i, j| {
        sig.closest_point(i, j, 0)
            .expect("checked above")
            .iter()
            .map(|x| f64::from(*x))
            .collect()
    })
}

/// Like [`curvature_along_rays`], reading full-precision coordinates of
/// the sensed points from the cloud the signature was built from.
pub fn curvature_from_cloud(cloud: &PointCloud, sig: &Signature) -> Result<CurvatureProfile> {
    check_source(cloud, sig)?;
    sensed_curve_profile(sig, |i, j| cloud.point(sig.sensed_id(i, j, 0)).to_vec())
}

fn sensed_curve_profile<F>(sig: &Signature, point: F) -> Result<CurvatureProfile>
where
    F: Fn(usize, usize) -> Vec<f64> + Sync + Send,
{
    let (m, k) = (sig.m(), sig.k());
    if k < 3 {
        return Err(invalid("curvature needs at least three samples per ray"));
    }
    let rows = map_rays(m, |i| {
        let pts: Vec<Vec<f64>> = (0..k).map(|j| point(i, j)).collect();
        Ok((1..k - 1)
            .map(|j| {
                let ids = [sig.sensed_id(i, j - 1, 0), sig.sensed_id(i, j, 0), sig.sensed_id(i, j + 1, 0)];
                if ids[0] == ids[1] || ids[1] == ids[2] {
                    return None;
                }
                three_point_curvature(&pts[j - 1], &pts[j], &pts[j + 1])
            })
            .collect())
    })?;
    Ok(profile_from_rows(m, k, common_spacing(&sig.provenance().spacings), rows))
}

fn check_source(cloud: &PointCloud, sig: &Signature) -> Result<()> {
    if cloud.dim() != sig.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: sig.dim(),
        });
    }
    if sig.provenance().cloud_len != cloud.len() || sig.sensed_ids().iter().any(|&id| id as usize >= cloud.len()) {
        return Err(invalid("signature was not built from this cloud"));
    }
    Ok(())
}

/// Quadratic height function over the tangent plane of a local patch of
/// a codimension-one surface, fitted to neighbouring cloud points.
#[derive(Debug, Clone)]
pub struct LocalSurface {
    center: Vec<f64>,
    normal: Vec<f64>,
    /// Orthonormal tangent directions as rows.
    tangents: Vec<Vec<f64>>,
    /// Tangent coordinates are divided by this before the fit.
    scale: f64,
    coeffs: Vec<f64>,
}

impl LocalSurface {
    fn features(t: usize) -> usize {
        1 + t + t * (t + 1) / 2
    }

    /// Fits the patch to `points` (rows of length `dim`).
    pub fn fit(points: &[&[f64]], dim: usize) -> Option<Self> {
        let t = dim.checked_sub(1).filter(|t| *t > 0)?;
        let p = Self::features(t);
        if points.len() < p {
            return None;
        }
        let n = points.len() as f64;
        let mut center = vec![0.0; dim];
        for x in points {
            for (c, v) in center.iter_mut().zip(*x) {
                *c += v / n;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for x in points {
            for a in 0..dim {
                for b in 0..dim {
                    cov[a * dim + b] += (x[a] - center[a]) * (x[b] - center[b]);
                }
            }
        }
        let (_, mut vectors) = symmetric_eigen(&cov, dim);
        let normal = vectors.remove(0);
        let tangents = vectors;
        let local: Vec<(Vec<f64>, f64)> = points
            .iter()
            .map(|x| {
                let rel: Vec<f64> = x.iter().zip(&center).map(|(a, c)| a - c).collect();
                (tangents.iter().map(|tv| dot(tv, &rel)).collect(), dot(&normal, &rel))
            })
            .collect();
        let scale = local
            .iter()
            .flat_map(|(u, _)| u.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        if scale.is_nan() || scale <= 0.0 {
            return None;
        }
        let mut design = Vec::with_capacity(points.len() * p);
        let mut heights = Vec::with_capacity(points.len());
        for (u, z) in &local {
            let a: Vec<f64> = u.iter().map(|v| v / scale).collect();
            design.extend(quadratic_features(&a));
            heights.push(*z);
        }
        let coeffs = least_squares(&design, &heights, points.len(), p)?;
        Some(Self {
            center,
            normal,
            tangents,
            scale,
            coeffs,
        })
    }

    fn height(&self, u: &[f64]) -> f64 {
        let a: Vec<f64> = u.iter().map(|v| v / self.scale).collect();
        dot(&quadratic_features(&a), &self.coeffs)
    }

    fn height_gradient(&self, u: &[f64]) -> Vec<f64> {
        let t = u.len();
        let a: Vec<f64> = u.iter().map(|v| v / self.scale).collect();
        let mut g: Vec<f64> = self.coeffs[1..=t].to_vec();
        let mut idx = 1 + t;
        for i in 0..t {
            for j in i..t {
                let c = self.coeffs[idx];
                g[i] += c * a[j];
                g[j] += c * a[i];
                idx += 1;
            }
        }
        g.iter().map(|v| v / self.scale).collect()
    }

    fn embed(&self, u: &[f64]) -> Vec<f64> {
        let h = self.height(u);
        let mut x: Vec<f64> = self.center.iter().zip(&self.normal).map(|(c, n)| c + h * n).collect();
        for (tv, ui) in self.tangents.iter().zip(u) {
            for (xi, ti) in x.iter_mut().zip(tv) {
                *xi += ui * ti;
            }
        }
        x
    }

    /// Closest point of the patch to `r`, by Gauss-Newton on the tangent
    /// coordinates starting from the orthogonal projection onto the plane.
    pub fn project(&self, r: &[f64]) -> Option<Vec<f64>> {
        let t = self.tangents.len();
        let rel: Vec<f64> = r.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut u: Vec<f64> = self.tangents.iter().map(|tv| dot(tv, &rel)).collect();
        for _ in 0..100 {
            let s = self.embed(&u);
            let res: Vec<f64> = r.iter().zip(&s).map(|(a, b)| a - b).collect();
            let g = self.height_gradient(&u);
            // columns of the Jacobian: tangent_i + normal * dh/du_i
            let cols: Vec<Vec<f64>> = (0..t)
                .map(|i| self.tangents[i].iter().zip(&self.normal).map(|(a, n)| a + g[i] * n).collect())
                .collect();
            let mut jtj = vec![0.0; t * t];
            for a in 0..t {
                for b in 0..t {
                    jtj[a * t + b] = dot(&cols[a], &cols[b]);
                }
            }
            let jtr: Vec<f64> = cols.iter().map(|c| dot(c, &res)).collect();
            let du = solve(&jtj, &jtr, t)?;
            u.iter_mut().zip(&du).for_each(|(a, d)| *a += d);
            if norm(&du) < 1e-14 {
                break;
            }
        }
        let x = self.embed(&u);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

fn quadratic_features(a: &[f64]) -> Vec<f64> {
    let t = a.len();
    let mut f = Vec::with_capacity(LocalSurface::features(t));
    f.push(1.0);
    f.extend_from_slice(a);
    for i in 0..t {
        for j in i..t {
            f.push(a[i] * a[j]);
        }
    }
    f
}

/// Projects every ray sample onto a quadratic patch fitted to its
/// `neighbors` nearest cloud points. Samples whose patch cannot be
/// fitted come back as `None`.
pub fn project_ray_onto_surface(index: &NNIndex<'_>, ray: &Ray, neighbors: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let cloud = index.cloud();
    let mut found = Vec::new();
    ray.samples()
        .map(|s| {
            index.query_into(s, neighbors, &mut found)?;
            let pts: Vec<&[f64]> = found.iter().map(|c| cloud.point(c.index)).collect();
            Ok(LocalSurface::fit(&pts, cloud.dim()).and_then(|patch| patch.project(s)))
        })
        .collect()
}

/// Curvature along each ray of the curve traced by projecting the ray
/// onto the surface reconstructed from `neighbors` nearest points.
///
/// The cloud is taken to sample a codimension-one surface; the
/// projection removes the jitter of snapping to individual points.
pub fn surface_curvature_along_rays(cloud: &PointCloud, rays: &RaySet, neighbors: usize) -> Result<CurvatureProfile> {
    if rays.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: rays.dim(),
        });
    }
    let (m, k) = (rays.len(), rays.k());
    if k < 3 {
        return Err(invalid("curvature needs at least three samples per ray"));
    }
    if neighbors > cloud.len() {
        return Err(Error::KappaTooLarge {
            kappa: neighbors,
            available: cloud.len(),
        });
    }
    let index = NNIndex::build(cloud)?;
    let rows = map_rays(m, |i| {
        let proj = project_ray_onto_surface(&index, rays.ray(i), neighbors)?;
        Ok((1..k - 1)
            .map(|j| match (&proj[j - 1], &proj[j], &proj[j + 1]) {
                (Some(a), Some(b), Some(c)) => {
                    if dist2(a, b) == 0.0 || dist2(b, c) == 0.0 {
                        None
                    } else {
                        three_point_curvature(a, b, c)
                    }
                }
                _ => None,
            })
            .collect())
    })?;
    Ok(profile_from_rows(m, k, common_spacing(&rays.spacings()), rows))
}

/// Distance from every cloud point to the nearest sensed point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverageReport {
    pub max_gap: f64,
    pub per_point_gap: Vec<f64>,
    pub m: usize,
    pub k: usize,
    /// Distinct points among the nearest-neighbour ids.
    pub sensed_count: usize,
}

/// Coverage of `cloud` by the nearest points sensed by `sig`.
pub fn coverage(cloud: &PointCloud, sig: &Signature) -> Result<CoverageReport> {
    coverage_of_prefix(cloud, sig, sig.m())
}

/// Coverage using only the first `m` rays of `sig`.
pub fn coverage_of_prefix(cloud: &PointCloud, sig: &Signature, m: usize) -> Result<CoverageReport> {
    check_source(cloud, sig)?;
    if m == 0 || m > sig.m() {
        return Err(invalid(alloc::format!("ray prefix {m} outside 1..={}", sig.m())));
    }
    let k = sig.k();
    let mut ids: Vec<usize> = (0..m)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| sig.sensed_id(i, j, 0))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::Empty("sensed set"));
    }
    let rows: Vec<&[f64]> = ids.iter().map(|&i| cloud.point(i)).collect();
    let sensed = PointCloud::from_rows(&rows)?;
    let index = NNIndex::build(&sensed)?;
    let gap = |x: &[f64]| index.nearest(x).map(|c| libm::sqrt(c.dist2));
    #[cfg(feature = "parallel")]
    let per_point_gap: Vec<f64> = {
        use rayon::prelude::*;
        (0..cloud.len())
            .into_par_iter()
            .map(|i| gap(cloud.point(i)))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_point_gap: Vec<f64> = cloud.points().map(gap).collect::<Result<_>>()?;
    let max_gap = per_point_gap.iter().copied().fold(0.0, f64::max);
    Ok(CoverageReport {
        max_gap,
        per_point_gap,
        m,
        k,
        sensed_count: ids.len(),
    })
}

/// How many salient points to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Top {
    /// At most this many points.
    Count(usize),
    /// Every point hit at least this many times.
    MinHits(usize),
}

/// Sensed points by descending hit count, ties broken by index.
pub fn salient_points(sig: &Signature, top: Top) -> Vec<(usize, usize)> {
    let mut ranked: Vec<(usize, usize)> = sensed_multiset(sig).into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    match top {
        Top::Count(n) => ranked.truncate(n),
        Top::MinHits(h) => ranked.retain(|&(_, c)| c >= h),
    }
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_vec, random_orthogonal};
    use crate::pointcloud::{synth_shape, ShapeKind, ShapeParams};
    use crate::rays::{generate_r1, RayMethod, DEFAULT_LENGTH};
    use crate::rng::substream;
    use crate::signature::{build_signature, FeatureSpec};
    use crate::stats::spearman;
    use rand::Rng;

    fn ray_between(a: &[f64], b: &[f64], k: usize) -> Ray {
        let samples = (0..k)
            .flat_map(|i| {
                let t = i as f64 / (k - 1) as f64;
                a.iter().zip(b).map(move |(p, q)| (1.0 - t) * p + t * q)
            })
            .collect();
        Ray::from_samples(RayMethod::R1, a.len(), samples).unwrap()
    }

    fn circle(n: usize, radius: f64) -> PointCloud {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = core::f64::consts::TAU * i as f64 / n as f64;
                vec![radius * libm::cos(t), radius * libm::sin(t)]
            })
            .collect();
        PointCloud::from_rows(&rows).unwrap()
    }

    #[test]
    fn three_point_formula() {
        // three points on the unit circle at angle steps t: 2 / (1 + cos t)
        for t in [1.5f64, 0.3, 0.01] {
            let p = |a: f64| [libm::cos(a), libm::sin(a)];
            let c = three_point_curvature(&p(-t), &p(0.0), &p(t)).unwrap();
            assert!((c - 2.0 / (1.0 + libm::cos(t))).abs() < 1e-9, "{t}: {c}");
        }
        assert_eq!(three_point_curvature(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]), Some(0.0));
        assert_eq!(three_point_curvature(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn straight_line_has_zero_curvature() {
        let rows: Vec<Vec<f64>> = (0..=2000).map(|i| vec![-1.0 + i as f64 * 0.001, 0.0, 0.0]).collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let ray = ray_between(&[-0.9, 0.1, 0.05], &[0.9, 0.1, 0.05], 37);
        let rays = RaySet::from_rays(vec![ray], RayMethod::R1, 1.8, 0.0, 0).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        for profile in [curvature_from_cloud(&cloud, &sig).unwrap(), curvature_along_rays(&sig).unwrap()] {
            assert_eq!(profile.per_ray.len(), 35);
            assert_eq!(profile.flagged(), 0);
            assert!(profile.valid().all(|c| c.abs() < 1e-8));
        }
    }

    #[test]
    fn repeated_points_are_flagged() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let ray = ray_between(&[-0.2, 0.3], &[1.2, 0.3], 9);
        let rays = RaySet::from_rays(vec![ray], RayMethod::R1, 1.4, 0.0, 0).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let p = curvature_from_cloud(&cloud, &sig).unwrap();
        assert_eq!(p.flagged(), 7);
        assert!(p.summary().is_none());
    }

    #[test]
    fn circle_curvature_converges_with_density() {
        let rays = generate_r1(60, 41, 2, DEFAULT_LENGTH, 7).unwrap();
        let radius = 0.8;
        let error = |n| {
            let cloud = circle(n, radius);
            let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
            let s = curvature_from_cloud(&cloud, &sig).unwrap().summary().unwrap();
            (s.median - 1.0 / radius).abs()
        };
        let coarse = error(2_000);
        let fine = error(200_000);
        assert!(fine < coarse, "{coarse} -> {fine}");
        assert!(fine < 0.02 / radius, "{fine}");
    }

    #[test]
    fn sphere_curvature_from_local_surfaces() {
        let cloud = synth_shape(ShapeKind::Sphere, 20_000, 3, &ShapeParams::default(), 2).unwrap();
        let rays = generate_r1(40, 41, 3, DEFAULT_LENGTH, 3).unwrap();
        let p = surface_curvature_along_rays(&cloud, &rays, 16).unwrap();
        assert_eq!(p.delta_r, Some(0.05));
        let s = p.summary().unwrap();
        assert!((s.median - 1.0).abs() < 5e-3, "{s:?}");
    }

    #[test]
    fn local_surface_recovers_a_paraboloid() {
        let pts: Vec<Vec<f64>> = (0..25)
            .map(|i| {
                let (x, y) = ((i % 5) as f64 * 0.1 - 0.2, (i / 5) as f64 * 0.1 - 0.2);
                vec![x, y, 0.5 * (x * x + y * y)]
            })
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let patch = LocalSurface::fit(&refs, 3).unwrap();
        for q in [[0.0, 0.0, 0.3], [0.1, -0.05, -0.2]] {
            let x = patch.project(&q).unwrap();
            assert!((x[2] - 0.5 * (x[0] * x[0] + x[1] * x[1])).abs() < 1e-12);
            // the residual is normal to the paraboloid
            let res = [q[0] - x[0], q[1] - x[1], q[2] - x[2]];
            assert!((res[0] + x[0] * res[2]).abs() < 1e-10);
            assert!((res[1] + x[1] * res[2]).abs() < 1e-10);
        }
    }

    #[test]
    fn rigid_motion_leaves_curvature_unchanged() {
        let cloud = synth_shape(ShapeKind::Torus, 3000, 3, &ShapeParams::default(), 5).unwrap();
        let rays = generate_r1(20, 21, 3, DEFAULT_LENGTH, 6).unwrap();
        let q = random_orthogonal(&mut substream(99, 0), 3);
        let shift = [0.3, -0.7, 1.1];
        let moved = |x: &[f64]| -> Vec<f64> {
            mat_vec(&q, 3, 3, x).iter().zip(&shift).map(|(a, b)| a + b).collect()
        };
        let rows: Vec<Vec<f64>> = cloud.points().map(moved).collect();
        let cloud2 = PointCloud::from_rows(&rows).unwrap();
        let rays2 = RaySet::from_rays(
            rays.rays()
                .iter()
                .map(|r| Ray::from_samples(RayMethod::R1, 3, r.samples().flat_map(moved).collect()).unwrap())
                .collect(),
            RayMethod::R1,
            DEFAULT_LENGTH,
            0.0,
            6,
        )
        .unwrap();
        let spec = FeatureSpec::default();
        let sig = build_signature(&cloud, &rays, &spec).unwrap();
        let sig2 = build_signature(&cloud2, &rays2, &spec).unwrap();
        assert_eq!(sig.sensed_ids(), sig2.sensed_ids());
        let a = curvature_from_cloud(&cloud, &sig).unwrap();
        let b = curvature_from_cloud(&cloud2, &sig2).unwrap();
        for (x, y) in a.per_ray.iter().zip(&b.per_ray) {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * x.max(1.0), "{x} vs {y}"),
                (None, None) => {}
                _ => panic!("flags differ"),
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let rays = generate_r1(3, 2, 2, DEFAULT_LENGTH, 0).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        assert!(curvature_along_rays(&sig).is_err());
        assert!(surface_curvature_along_rays(&cloud, &rays, 1).is_err());
    }

    #[test]
    fn coverage_basics() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.9]]).unwrap();
        // both samples sit next to point 0
        let ray = ray_between(&[0.01, 0.0], &[0.02, 0.0], 2);
        let rays = RaySet::from_rays(vec![ray], RayMethod::R1, 0.01, 0.0, 0).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let c = coverage(&cloud, &sig).unwrap();
        assert_eq!(c.sensed_count, 1);
        assert_eq!(c.per_point_gap, vec![0.0, 0.5, 0.9]);
        assert_eq!(c.max_gap, 0.9);

        let rays = generate_r1(500, 41, 2, DEFAULT_LENGTH, 1).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let c = coverage(&cloud, &sig).unwrap();
        assert_eq!(c.sensed_count, 3);
        assert_eq!(c.max_gap, 0.0);

        let other = PointCloud::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(coverage(&other, &sig).is_err());
    }

    #[test]
    fn coverage_shrinks_with_nested_rays() {
        let cloud = synth_shape(ShapeKind::Sphere, 3000, 3, &ShapeParams::default(), 8).unwrap();
        let rays = generate_r1(128, 32, 3, DEFAULT_LENGTH, 9).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let gaps: Vec<f64> = (1..=128)
            .map(|m| coverage_of_prefix(&cloud, &sig, m).unwrap().max_gap)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
        assert!(gaps[127] < gaps[0]);
        // a prefix signature gives the same answer as the prefix of a signature
        let sig16 = build_signature(&cloud, &rays.prefix(16).unwrap(), &FeatureSpec::default()).unwrap();
        assert_eq!(coverage(&cloud, &sig16).unwrap().max_gap, gaps[15]);
    }

    #[test]
    fn salient_single_point() {
        let cloud = PointCloud::from_rows(&[vec![0.2, 0.1]]).unwrap();
        let rays = generate_r1(7, 5, 2, DEFAULT_LENGTH, 1).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        assert_eq!(salient_points(&sig, Top::Count(3)), vec![(0, 35)]);
    }

    #[test]
    fn salient_counts_and_order() {
        let cloud = synth_shape(ShapeKind::Sphere, 200, 3, &ShapeParams::default(), 3).unwrap();
        let rays = generate_r1(50, 10, 3, DEFAULT_LENGTH, 4).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let all = salient_points(&sig, Top::Count(200));
        assert_eq!(all.iter().map(|p| p.1).sum::<usize>(), 500);
        assert!(all.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        let frequent = salient_points(&sig, Top::MinHits(5));
        assert!(frequent.iter().all(|p| p.1 >= 5));
    }

    /// Filled square of grid points with a thin spike poking out.
    fn square_with_spike() -> (PointCloud, usize) {
        let mut rows = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                rows.push(vec![-0.5 + i as f64 / 19.0 * 0.6, -0.3 + j as f64 / 19.0 * 0.6]);
            }
        }
        for s in 1..=8 {
            rows.push(vec![0.1 + 0.08 * s as f64, 0.0]);
        }
        let tip = rows.len() - 1;
        (PointCloud::from_rows(&rows).unwrap(), tip)
    }

    #[test]
    fn spike_tip_is_salient() {
        let (cloud, tip) = square_with_spike();
        let rays = generate_r1(500, 41, 2, DEFAULT_LENGTH, 12).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let top = salient_points(&sig, Top::Count(cloud.len() / 20));
        assert!(top.iter().any(|p| p.0 == tip), "{top:?}");
    }

    #[test]
    fn hit_counts_track_voronoi_areas() {
        let mut rng = substream(31, 0);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let index = NNIndex::build(&cloud).unwrap();
        // pixel areas of Voronoi cells clipped to the unit disk
        let res = 600;
        let mut area = vec![0.0; cloud.len()];
        for a in 0..res {
            for b in 0..res {
                let p = [-1.0 + (a as f64 + 0.5) * 2.0 / res as f64, -1.0 + (b as f64 + 0.5) * 2.0 / res as f64];
                if p[0] * p[0] + p[1] * p[1] <= 1.0 {
                    area[index.nearest(&p).unwrap().index] += 1.0;
                }
            }
        }
        let rays = generate_r1(10_000, 41, 2, DEFAULT_LENGTH, 13).unwrap();
        let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
        let mut hits = vec![0.0; cloud.len()];
        for (id, c) in sensed_multiset(&sig) {
            hits[id] = c as f64;
        }
        let rho = spearman(&hits, &area).unwrap();
        assert!(rho > 0.9, "{rho}");
    }
}
