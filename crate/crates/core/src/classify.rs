//! Nearest-neighbour classification of signatures.

use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::pointcloud::PointCloud;
use crate::rays::RaySet;
use crate::signature::{build_signature, FeatureSpec, Signature};
use crate::stats::{coordinate_histograms, hist_distance, HistMetric, Histogram, DEFAULT_BINS, DEFAULT_RANGE};

/// `‖A − B‖_F` over all tensor entries.
///
/// Entries only correspond when both signatures come from the same rays,
/// so the ray provenance must match as well as the shape.
pub fn frobenius_distance(a: &Signature, b: &Signature) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Incomparable(alloc::format!(
            "signature shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    if !same_rays(a, b) {
        return Err(Error::Incomparable("signatures were sensed with different rays".into()));
    }
    let sum: f64 = a
        .tensor()
        .iter()
        .zip(b.tensor())
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum();
    Ok(libm::sqrt(sum))
}

fn same_rays(a: &Signature, b: &Signature) -> bool {
    let (p, q) = (a.provenance(), b.provenance());
    p.method == q.method
        && p.ray_seed == q.ray_seed
        && p.ray_param == q.ray_param
        && p.sphere_radius == q.sphere_radius
        && p.spacings == q.spacings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Metric {
    Frobenius,
    W1Hist,
    L2Hist,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Frobenius => "frobenius",
            Metric::W1Hist => "w1-hist",
            Metric::L2Hist => "l2-hist",
        }
    }

    fn hist_metric(self) -> Option<HistMetric> {
        match self {
            Metric::Frobenius => None,
            Metric::W1Hist => Some(HistMetric::W1),
            Metric::L2Hist => Some(HistMetric::L2),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frobenius" => Ok(Metric::Frobenius),
            "w1-hist" | "w1" => Ok(Metric::W1Hist),
            "l2-hist" | "l2" => Ok(Metric::L2Hist),
            other => Err(invalid(alloc::format!("unknown metric {other:?}"))),
        }
    }
}

/// Histogram binning shared by a gallery and its queries.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Binning {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            lo: DEFAULT_RANGE.0,
            hi: DEFAULT_RANGE.1,
        }
    }
}

/// What a gallery stores per object for its metric.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Signature(Signature),
    Histograms(Vec<Histogram>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub features: Features,
    pub label: i64,
    pub id: String,
}

/// Labelled reference objects compared under one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureGallery {
    metric: Metric,
    binning: Binning,
    entries: Vec<GalleryEntry>,
}

impl SignatureGallery {
    pub fn new(metric: Metric, binning: Binning) -> Self {
        Self {
            metric,
            binning,
            entries: Vec::new(),
        }
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<i64> {
        let mut l: Vec<i64> = self.entries.iter().map(|e| e.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    /// Converts a signature into this gallery's representation.
    pub fn features_of(&self, sig: &Signature) -> Result<Features> {
        match self.metric {
            Metric::Frobenius => Ok(Features::Signature(sig.clone())),
            Metric::W1Hist | Metric::L2Hist => Ok(Features::Histograms(coordinate_histograms(
                sig,
                self.binning.bins,
                self.binning.lo,
                self.binning.hi,
            )?)),
        }
    }

    pub fn add_signature(&mut self, sig: &Signature, label: i64, id: impl Into<String>) -> Result<()> {
        let features = self.features_of(sig)?;
        self.add(features, label, id)
    }

    pub fn add(&mut self, features: Features, label: i64, id: impl Into<String>) -> Result<()> {
        if let Some(first) = self.entries.first() {
            self.distance(&features, &first.features)?;
        } else {
            self.distance(&features, &features)?;
        }
        self.entries.push(GalleryEntry {
            features,
            label,
            id: id.into(),
        });
        Ok(())
    }

    /// Distance between two feature sets under the gallery metric.
    pub fn distance(&self, a: &Features, b: &Features) -> Result<f64> {
        match (self.metric.hist_metric(), a, b) {
            (None, Features::Signature(x), Features::Signature(y)) => frobenius_distance(x, y),
            (Some(m), Features::Histograms(x), Features::Histograms(y)) => {
                hist_distance(x, y, m).map_err(|e| match e {
                    Error::EdgeMismatch | Error::DimensionMismatch { .. } => {
                        Error::Incomparable(alloc::format!("histogram sets do not share binning: {e}"))
                    }
                    other => other,
                })
            }
            _ => Err(Error::Incomparable(alloc::format!(
                "features do not match metric {}",
                self.metric.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedEntry {
    pub entry: usize,
    pub id: String,
    pub label: i64,
    pub distance: f64,
}

/// Result of a 1-NN query.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Classification {
    pub label: i64,
    /// All entries by ascending distance, ties in entry order.
    pub ranked: Vec<RankedEntry>,
    /// Sorted distinct gallery labels.
    pub classes: Vec<i64>,
    /// Smallest distance to each class in `classes`.
    pub class_min: Vec<f64>,
}

impl Classification {
    /// Softmin of the class-min distances.
    pub fn scores(&self) -> Vec<f64> {
        softmin(&self.class_min)
    }
}

/// Label of the nearest gallery entry.
pub fn nn_classify(query: &Signature, gallery: &SignatureGallery) -> Result<Classification> {
    nn_classify_features(&gallery.features_of(query)?, gallery)
}

/// Senses `cloud` with `rays` and classifies the signature.
pub fn nn_classify_cloud(
    cloud: &PointCloud,
    rays: &RaySet,
    spec: &FeatureSpec,
    gallery: &SignatureGallery,
) -> Result<Classification> {
    nn_classify(&build_signature(cloud, rays, spec)?, gallery)
}

pub fn nn_classify_features(query: &Features, gallery: &SignatureGallery) -> Result<Classification> {
    if gallery.is_empty() {
        return Err(Error::Empty("gallery"));
    }
    let mut ranked: Vec<RankedEntry> = gallery
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(RankedEntry {
                entry: i,
                id: e.id.clone(),
                label: e.label,
                distance: gallery.distance(query, &e.features)?,
            })
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.entry.cmp(&b.entry)));
    let classes = gallery.labels();
    let class_min = classes
        .iter()
        .map(|l| {
            ranked
                .iter()
                .find(|r| r.label == *l)
                .map(|r| r.distance)
                .expect("every class has an entry")
        })
        .collect();
    Ok(Classification {
        label: ranked[0].label,
        ranked,
        classes,
        class_min,
    })
}

/// `exp(−d_a) / Σ_b exp(−d_b)`, shifted by the minimum for stability.
pub fn softmin(distances: &[f64]) -> Vec<f64> {
    let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = distances.iter().map(|d| libm::exp(lo - d)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Averages score vectors and returns the argmax (lowest index on ties)
/// with the mean vector.
pub fn ensemble_vote(scores: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let first = scores.first().ok_or(Error::Empty("score list"))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::Empty("score vector"));
    }
    let mut mean = alloc::vec![0.0; k];
    for s in scores {
        if s.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                found: s.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let n = scores.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let best = (0..k)
        .max_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(b.cmp(&a)))
        .expect("k >= 1");
    Ok((best, mean))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleResult {
    pub label: i64,
    pub classes: Vec<i64>,
    pub scores: Vec<f64>,
    /// One 1-NN result per ray set.
    pub votes: Vec<Classification>,
}

/// Classifies one object sensed by `λ` ray sets, each against the
/// gallery built with that ray set, by averaging softmin scores.
pub fn ensemble_classify(queries: &[Signature], galleries: &[SignatureGallery]) -> Result<EnsembleResult> {
    if queries.len() != galleries.len() {
        return Err(Error::LengthMismatch {
            expected: galleries.len(),
            found: queries.len(),
        });
    }
    let votes: Vec<Classification> = queries
        .iter()
        .zip(galleries)
        .map(|(q, g)| nn_classify(q, g))
        .collect::<Result<_>>()?;
    let classes = votes.first().ok_or(Error::Empty("ray set list"))?.classes.clone();
    if votes.iter().any(|v| v.classes != classes) {
        return Err(Error::Incomparable("galleries hold different label sets".into()));
    }
    let (best, scores) = ensemble_vote(&votes.iter().map(Classification::scores).collect::<Vec<_>>())?;
    Ok(EnsembleResult {
        label: classes[best],
        classes,
        scores,
        votes,
    })
}
