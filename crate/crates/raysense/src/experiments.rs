//! Desk-scale experiments. Each takes a serializable config (every
//! field has a default) and returns a serializable report; all
//! randomness derives from the config's root seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use raysense_core::classify::{ensemble_classify, nn_classify, Binning, Metric, SignatureGallery};
use raysense_core::geometry::{coverage_of_prefix, curvature_from_cloud, surface_curvature_along_rays, CurvatureSummary};
use raysense_core::pointcloud::{
    add_gaussian_noise, add_outliers, calibrate, embed_rotate, synth_shape, OutlierMode, ShapeKind, ShapeParams,
};
use raysense_core::rays::generate_r1;
use raysense_core::rng::{indexed_seed, named_seed, substream};
use raysense_core::signature::{build_signature, FeatureSpec, Signature};
use raysense_core::stats::{
    class_distance_matrix, coordinate_histograms, estimate_voronoi_lengths, hist_distance, ClassMatrix, HistMetric,
    Histogram,
};
use raysense_core::{PointCloud, Result};

/// Only the closest-point channels, which is all histograms, coverage
/// and salience read.
fn closest_points_only(kappa: usize) -> FeatureSpec {
    FeatureSpec {
        include_closest_point: true,
        include_displacement: false,
        include_distance: false,
        kappa,
    }
}

fn disk_cloud(n: usize, seed: u64) -> Result<PointCloud> {
    use rand::Rng;
    let mut rng = substream(seed, 0);
    let mut rows = Vec::with_capacity(n);
    while rows.len() < n {
        let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if p[0] * p[0] + p[1] * p[1] <= 1.0 {
            rows.push(p.to_vec());
        }
    }
    Ok(calibrate(&PointCloud::from_rows(&rows)?).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistInvarianceConfig {
    pub seed: u64,
    /// Points of the 2-D cloud.
    pub points: usize,
    /// Ray counts, each a prefix of the next.
    pub ms: Vec<usize>,
    pub k: usize,
    pub length: f64,
    pub clip_radius: f64,
}

impl Default for HistInvarianceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 20,
            ms: vec![512, 2048, 8192, 32768],
            // L = 2 over 200 steps: spacing 0.01
            k: 201,
            length: 2.0,
            clip_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistInvarianceLevel {
    pub m: usize,
    /// `max_j |H_j(A) − H_j(B)|` for two independent ray sets.
    pub max_abs_diff: f64,
    pub h_a: Vec<f64>,
    pub h_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistInvarianceReport {
    pub delta_r: f64,
    pub levels: Vec<HistInvarianceLevel>,
    pub monotone: bool,
    /// First level's discrepancy over the last level's.
    pub ratio: f64,
}

/// Two independent estimates of every `H_j` at increasing `m`.
pub fn hist_invariance(cfg: &HistInvarianceConfig) -> Result<HistInvarianceReport> {
    let cloud = disk_cloud(cfg.points, named_seed(cfg.seed, "cloud"))?;
    let m_max = cfg.ms.iter().copied().max().ok_or(raysense_core::Error::Empty("ray counts"))?;
    let rays_a = generate_r1(m_max, cfg.k, 2, cfg.length, named_seed(cfg.seed, "rays-a"))?;
    let rays_b = generate_r1(m_max, cfg.k, 2, cfg.length, named_seed(cfg.seed, "rays-b"))?;
    let levels = cfg
        .ms
        .iter()
        .map(|&m| {
            let h_a = estimate_voronoi_lengths(&cloud, &rays_a.prefix(m)?, cfg.clip_radius)?.per_point;
            let h_b = estimate_voronoi_lengths(&cloud, &rays_b.prefix(m)?, cfg.clip_radius)?.per_point;
            let max_abs_diff = h_a.iter().zip(&h_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(HistInvarianceLevel {
                m,
                max_abs_diff,
                h_a,
                h_b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = levels.windows(2).all(|w| w[1].max_abs_diff < w[0].max_abs_diff);
    let ratio = levels[0].max_abs_diff / levels[levels.len() - 1].max_abs_diff;
    Ok(HistInvarianceReport {
        delta_r: rays_a.ray(0).spacing(),
        levels,
        monotone,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSweepConfig {
    pub seed: u64,
    pub points: usize,
    pub dims: Vec<usize>,
    /// Nested ray counts.
    pub ms: Vec<usize>,
    pub trials: usize,
    pub k: usize,
    /// Ray length in `d = 3`.
    pub length: f64,
    /// Grow the ray length as `sqrt(d/3)` so the expected length of a
    /// ray's projection onto the curve's 3-D span stays fixed.
    pub scale_length: bool,
    /// Per-coordinate Gaussian noise added after embedding.
    pub noise: f64,
}

impl Default for CoverageSweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 5000,
            dims: vec![3, 10, 50],
            ms: vec![8, 16, 32, 64],
            trials: 40,
            k: 32,
            length: 2.0,
            scale_length: true,
            noise: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub dim: usize,
    pub length: f64,
    /// Mean `max_gap` at each `m`.
    pub mean_max_gap: Vec<f64>,
    /// `max_gap` per trial per `m`.
    pub trials: Vec<Vec<f64>>,
    /// Every trial nonincreasing in `m`.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSweepReport {
    pub ms: Vec<usize>,
    pub curves: Vec<CoverageCurve>,
    /// `(max − min) / mean` of the mean curves across dimensions, per `m`.
    pub spread: Vec<f64>,
    pub max_spread: f64,
}

/// Coverage of a noisy curve embedded in several dimensions as rays are
/// added.
pub fn coverage_sweep(cfg: &CoverageSweepConfig) -> Result<CoverageSweepReport> {
    let mut ms = cfg.ms.clone();
    ms.sort_unstable();
    let m_max = *ms.last().ok_or(raysense_core::Error::Empty("ray counts"))?;
    let spec = closest_points_only(1);
    let curve_seed = named_seed(cfg.seed, "curve");
    let trials: Vec<Vec<Vec<f64>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = indexed_seed(curve_seed, t as u64);
            let base = synth_shape(ShapeKind::Curve, cfg.points, 3, &ShapeParams::default(), trial_seed)?;
            let base = calibrate(&base).0;
            cfg.dims
                .iter()
                .map(|&d| {
                    let s = indexed_seed(trial_seed, d as u64);
                    let cloud = embed_rotate(&base, d, named_seed(s, "rotation"))?;
                    let cloud = add_gaussian_noise(&cloud, cfg.noise, named_seed(s, "noise"));
                    let rays = generate_r1(m_max, cfg.k, d, ray_length(cfg, d), named_seed(s, "rays"))?;
                    let sig = build_signature(&cloud, &rays, &spec)?;
                    ms.iter()
                        .map(|&m| Ok(coverage_of_prefix(&cloud, &sig, m)?.max_gap))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let curves: Vec<CoverageCurve> = cfg
        .dims
        .iter()
        .enumerate()
        .map(|(di, &dim)| {
            let per_trial: Vec<Vec<f64>> = trials.iter().map(|t| t[di].clone()).collect();
            let mean_max_gap = (0..ms.len())
                .map(|mi| per_trial.iter().map(|t| t[mi]).sum::<f64>() / per_trial.len() as f64)
                .collect();
            CoverageCurve {
                dim,
                length: ray_length(cfg, dim),
                mean_max_gap,
                monotone: per_trial.iter().all(|t| t.windows(2).all(|w| w[1] <= w[0])),
                trials: per_trial,
            }
        })
        .collect();
    let spread: Vec<f64> = (0..ms.len())
        .map(|mi| {
            let v: Vec<f64> = curves.iter().map(|c| c.mean_max_gap[mi]).collect();
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
            (hi - lo) / (v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let max_spread = spread.iter().copied().fold(0.0, f64::max);
    Ok(CoverageSweepReport {
        ms,
        curves,
        spread,
        max_spread,
    })
}

fn ray_length(cfg: &CoverageSweepConfig, dim: usize) -> f64 {
    if cfg.scale_length {
        cfg.length * (dim as f64 / 3.0).sqrt()
    } else {
        cfg.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureSphereConfig {
    pub seed: u64,
    pub points: usize,
    pub m: usize,
    pub k: usize,
    pub length: f64,
    /// Neighbours per local surface fit.
    pub neighbors: usize,
}

impl Default for CurvatureSphereConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 20_000,
            m: 100,
            // spacing 0.05
            k: 41,
            length: 2.0,
            neighbors: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSphereReport {
    pub delta_r: f64,
    /// Curves traced on locally fitted quadratic surfaces.
    pub surface: Option<CurvatureSummary>,
    /// Curves through the raw nearest points.
    pub nearest_point: Option<CurvatureSummary>,
}

/// Curvature along rays through a dense unit sphere (exact value 1).
pub fn curvature_sphere(cfg: &CurvatureSphereConfig) -> Result<CurvatureSphereReport> {
    let cloud = synth_shape(ShapeKind::Sphere, cfg.points, 3, &ShapeParams::default(), named_seed(cfg.seed, "sphere"))?;
    let rays = generate_r1(cfg.m, cfg.k, 3, cfg.length, named_seed(cfg.seed, "rays"))?;
    let surface = surface_curvature_along_rays(&cloud, &rays, cfg.neighbors)?.summary();
    let sig = build_signature(&cloud, &rays, &closest_points_only(1))?;
    let nearest_point = curvature_from_cloud(&cloud, &sig)?.summary();
    Ok(CurvatureSphereReport {
        delta_r: rays.ray(0).spacing(),
        surface,
        nearest_point,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierKappaConfig {
    pub seed: u64,
    pub shape: ShapeKind,
    pub points: usize,
    /// Noise points as a fraction of `points`.
    pub noise_fraction: f64,
    pub kappas: Vec<usize>,
    pub repeats: usize,
    pub m: usize,
    pub k: usize,
    pub length: f64,
}

impl Default for OutlierKappaConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shape: ShapeKind::Sphere,
            points: 1000,
            noise_fraction: 0.05,
            kappas: vec![1, 3, 5],
            repeats: 10,
            m: 100,
            k: 20,
            length: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierKappaReport {
    pub kappas: Vec<usize>,
    /// Fraction of all `m·k·κ` sensed ids that are noise, per repeat.
    pub fractions: Vec<Vec<f64>>,
    pub mean_fraction: Vec<f64>,
    pub nonincreasing: bool,
}

/// How much of the signature is taken up by uniform noise in `[−1,1]^d`
/// as more neighbours are stacked per sample.
pub fn outlier_kappa(cfg: &OutlierKappaConfig) -> Result<OutlierKappaReport> {
    let noise = (cfg.points as f64 * cfg.noise_fraction).round() as usize;
    let fractions: Vec<Vec<f64>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let s = indexed_seed(named_seed(cfg.seed, "repeat"), r as u64);
            let base = synth_shape(cfg.shape, cfg.points, 3, &ShapeParams::default(), named_seed(s, "shape"))?;
            let base = calibrate(&base).0;
            let dirty = add_outliers(&base, noise, OutlierMode::CubeUniform, named_seed(s, "noise"));
            let rays = generate_r1(cfg.m, cfg.k, 3, cfg.length, named_seed(s, "rays"))?;
            cfg.kappas
                .iter()
                .map(|&kappa| {
                    let sig = build_signature(&dirty.cloud, &rays, &closest_points_only(kappa))?;
                    let hits = sig.sensed_ids().iter().filter(|&&id| dirty.is_outlier(id as usize)).count();
                    Ok(hits as f64 / sig.sensed_ids().len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_fraction: Vec<f64> = (0..cfg.kappas.len())
        .map(|i| fractions.iter().map(|f| f[i]).sum::<f64>() / fractions.len() as f64)
        .collect();
    Ok(OutlierKappaReport {
        kappas: cfg.kappas.clone(),
        nonincreasing: mean_fraction.windows(2).all(|w| w[1] <= w[0]),
        fractions,
        mean_fraction,
    })
}

/// Synthetic object: `kind` with jittered shape parameters, light
/// Gaussian noise, calibrated.
pub fn synthetic_object(kind: ShapeKind, points: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    use rand::Rng;
    let mut rng = substream(seed, 0);
    let params = ShapeParams {
        torus_minor: rng.random_range(0.3..0.5),
        ..ShapeParams::default()
    };
    let cloud = synth_shape(kind, points, 3, &params, named_seed(seed, "points"))?;
    let cloud = add_gaussian_noise(&cloud, noise, named_seed(seed, "noise"));
    Ok(calibrate(&cloud).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassMatrixConfig {
    pub seed: u64,
    pub classes: Vec<ShapeKind>,
    pub per_class: usize,
    pub points: usize,
    pub noise: f64,
    pub m: usize,
    pub k: usize,
    pub length: f64,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClassMatrixConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: vec![ShapeKind::Sphere, ShapeKind::CubeSurface, ShapeKind::Torus],
            per_class: 10,
            points: 1500,
            noise: 0.01,
            m: 50,
            k: 10,
            length: 2.0,
            bins: 50,
            lo: -1.0,
            hi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMatrixReport {
    pub class_names: Vec<String>,
    pub w1: ClassMatrix,
    pub l2: ClassMatrix,
    pub w1_diagonal: bool,
    pub l2_diagonal: bool,
}

/// Class-averaged histogram distances; every object is sensed by its
/// own ray set.
pub fn class_matrix(cfg: &ClassMatrixConfig) -> Result<ClassMatrixReport> {
    let jobs: Vec<(usize, usize)> =
        (0..cfg.classes.len()).flat_map(|c| (0..cfg.per_class).map(move |i| (c, i))).collect();
    let hists: Vec<Vec<Histogram>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let s = indexed_seed(named_seed(cfg.seed, cfg.classes[c].name()), i as u64);
            let cloud = synthetic_object(cfg.classes[c], cfg.points, cfg.noise, s)?;
            let rays = generate_r1(cfg.m, cfg.k, 3, cfg.length, named_seed(s, "rays"))?;
            let sig = build_signature(&cloud, &rays, &closest_points_only(1))?;
            coordinate_histograms(&sig, cfg.bins, cfg.lo, cfg.hi)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<i64> = jobs.iter().map(|&(c, _)| c as i64).collect();
    let w1 = class_distance_matrix(&hists, &labels, HistMetric::W1)?;
    let l2 = class_distance_matrix(&hists, &labels, HistMetric::L2)?;
    Ok(ClassMatrixReport {
        class_names: cfg.classes.iter().map(|k| k.name().to_owned()).collect(),
        w1_diagonal: w1.argmins_on_diagonal(),
        l2_diagonal: l2.argmins_on_diagonal(),
        w1,
        l2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    /// One full train/test experiment per seed.
    pub seeds: Vec<u64>,
    pub classes: Vec<ShapeKind>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub noise: f64,
    pub m: usize,
    pub k: usize,
    pub length: f64,
    pub metric: Metric,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Ray sets averaged per prediction.
    pub lambda: usize,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            classes: vec![ShapeKind::Sphere, ShapeKind::CubeSurface, ShapeKind::Torus],
            train_per_class: 10,
            test_per_class: 10,
            points: 1500,
            noise: 0.01,
            m: 50,
            k: 10,
            length: 2.0,
            metric: Metric::W1Hist,
            bins: 50,
            lo: -1.0,
            hi: 1.0,
            lambda: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRun {
    pub seed: u64,
    pub accuracy: f64,
    /// 1-NN on histograms of every cloud point, no rays.
    pub full_cloud_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub lambda: usize,
    pub runs: Vec<ClassificationRun>,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub mean_full_cloud_accuracy: f64,
}

struct Split {
    train: Vec<(PointCloud, i64)>,
    test: Vec<(PointCloud, i64)>,
}

fn make_split(cfg: &ClassificationConfig, seed: u64) -> Result<Split> {
    let objects = |part: &str, per_class: usize| -> Result<Vec<(PointCloud, i64)>> {
        let jobs: Vec<(usize, usize)> =
            (0..cfg.classes.len()).flat_map(|c| (0..per_class).map(move |i| (c, i))).collect();
        jobs.par_iter()
            .map(|&(c, i)| {
                let s = indexed_seed(named_seed(named_seed(seed, part), cfg.classes[c].name()), i as u64);
                Ok((synthetic_object(cfg.classes[c], cfg.points, cfg.noise, s)?, c as i64))
            })
            .collect()
    };
    Ok(Split {
        train: objects("train", cfg.train_per_class)?,
        test: objects("test", cfg.test_per_class)?,
    })
}

fn gallery_for(cfg: &ClassificationConfig, sigs: &[(Signature, i64)]) -> Result<SignatureGallery> {
    let binning = Binning {
        bins: cfg.bins,
        lo: cfg.lo,
        hi: cfg.hi,
    };
    let mut g = SignatureGallery::new(cfg.metric, binning);
    for (i, (s, l)) in sigs.iter().enumerate() {
        g.add_signature(s, *l, format!("train-{i}"))?;
    }
    Ok(g)
}

fn full_cloud_hists(cfg: &ClassificationConfig, cloud: &PointCloud) -> Result<Vec<Histogram>> {
    let template = Histogram::uniform(cfg.bins, cfg.lo, cfg.hi)?;
    let mut hists = vec![template; cloud.dim()];
    for p in cloud.points() {
        for (h, x) in hists.iter_mut().zip(p) {
            h.add(*x, 1.0);
        }
    }
    hists.iter_mut().for_each(Histogram::normalize);
    Ok(hists)
}

/// Accuracy of 1-NN classification (λ = 1) or of the λ-ray-set softmin
/// ensemble, for one seed.
pub fn classify_once(cfg: &ClassificationConfig, seed: u64) -> Result<ClassificationRun> {
    let split = make_split(cfg, seed)?;
    let spec = FeatureSpec::default();
    let lambda = cfg.lambda.max(1);
    let ray_sets = (0..lambda)
        .map(|j| generate_r1(cfg.m, cfg.k, 3, cfg.length, indexed_seed(named_seed(seed, "rays"), j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let galleries = ray_sets
        .iter()
        .map(|rays| {
            let sigs = split
                .train
                .par_iter()
                .map(|(c, l)| Ok((build_signature(c, rays, &spec)?, *l)))
                .collect::<Result<Vec<_>>>()?;
            gallery_for(cfg, &sigs)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct: usize = split
        .test
        .par_iter()
        .map(|(cloud, label)| {
            let queries = ray_sets
                .iter()
                .map(|rays| build_signature(cloud, rays, &spec))
                .collect::<Result<Vec<_>>>()?;
            let predicted = if lambda == 1 {
                nn_classify(&queries[0], &galleries[0])?.label
            } else {
                ensemble_classify(&queries, &galleries)?.label
            };
            Ok(usize::from(predicted == *label))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();

    let train_full: Vec<(Vec<Histogram>, i64)> = split
        .train
        .iter()
        .map(|(c, l)| Ok((full_cloud_hists(cfg, c)?, *l)))
        .collect::<Result<_>>()?;
    let hist_metric = match cfg.metric {
        Metric::L2Hist => HistMetric::L2,
        _ => HistMetric::W1,
    };
    let mut full_correct = 0;
    for (cloud, label) in &split.test {
        let q = full_cloud_hists(cfg, cloud)?;
        let mut best = (f64::INFINITY, -1);
        for (h, l) in &train_full {
            let d = hist_distance(&q, h, hist_metric)?;
            if d < best.0 {
                best = (d, *l);
            }
        }
        full_correct += usize::from(best.1 == *label);
    }
    let n = split.test.len() as f64;
    Ok(ClassificationRun {
        seed,
        accuracy: correct as f64 / n,
        full_cloud_accuracy: full_correct as f64 / n,
    })
}

pub fn classification(cfg: &ClassificationConfig) -> Result<ClassificationReport> {
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| classify_once(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len().max(1) as f64;
    Ok(ClassificationReport {
        lambda: cfg.lambda.max(1),
        mean_accuracy: runs.iter().map(|r| r.accuracy).sum::<f64>() / n,
        min_accuracy: runs.iter().map(|r| r.accuracy).fold(f64::INFINITY, f64::min),
        mean_full_cloud_accuracy: runs.iter().map(|r| r.full_cloud_accuracy).sum::<f64>() / n,
        runs,
    })
}
