//! The sampling signature tensor.
//!
//! Entry `(i, j)` of the `m × k × c` tensor holds features of the κ
//! nearest cloud points to sample `j` of ray `i`. Channels are grouped per
//! neighbour, nearest first, and inside each group are laid out as
//! `[closest point | displacement | distance]` with disabled parts left
//! out. The displacement is `closest point - ray sample`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::nnindex::{Candidate, NNIndex};
use crate::pointcloud::PointCloud;
use crate::rays::{RayMethod, RaySet};

/// Which features to record, and for how many neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSpec {
    pub include_closest_point: bool,
    pub include_displacement: bool,
    pub include_distance: bool,
    /// Neighbours per sample (κ).
    pub kappa: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            include_closest_point: true,
            include_displacement: true,
            include_distance: false,
            kappa: 1,
        }
    }
}

impl FeatureSpec {
    pub fn with_kappa(self, kappa: usize) -> Self {
        Self { kappa, ..self }
    }

    /// Channels contributed by one neighbour.
    pub fn channels_per_neighbor(&self, dim: usize) -> usize {
        usize::from(self.include_closest_point) * dim
            + usize::from(self.include_displacement) * dim
            + usize::from(self.include_distance)
    }

    /// Total channel count `c`.
    pub fn channels(&self, dim: usize) -> usize {
        self.kappa * self.channels_per_neighbor(dim)
    }

    /// Bit 0: closest point, bit 1: displacement, bit 2: distance.
    pub fn flags(&self) -> u8 {
        u8::from(self.include_closest_point)
            | u8::from(self.include_displacement) << 1
            | u8::from(self.include_distance) << 2
    }

    pub fn from_flags(flags: u8, kappa: usize) -> Result<Self> {
        if flags & !0b111 != 0 {
            return Err(invalid("unknown feature flag bits"));
        }
        Ok(Self {
            include_closest_point: flags & 1 != 0,
            include_displacement: flags & 2 != 0,
            include_distance: flags & 4 != 0,
            kappa,
        })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.kappa == 0 {
            return Err(invalid("kappa must be at least 1"));
        }
        if self.channels(dim) == 0 {
            return Err(invalid("feature spec selects no channels"));
        }
        Ok(())
    }
}

/// Where a signature came from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub cloud_id: Option<String>,
    pub cloud_len: usize,
    pub method: RayMethod,
    pub ray_seed: u64,
    /// `L` for R1, `tau` for R2.
    pub ray_param: f64,
    pub sphere_radius: f64,
    /// Sample spacing of every ray.
    pub spacings: Vec<f64>,
}

/// Signature tensor plus the cloud indices that produced each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    m: usize,
    k: usize,
    dim: usize,
    spec: FeatureSpec,
    tensor: Vec<f32>,
    sensed_ids: Vec<u64>,
    provenance: Provenance,
}

impl Signature {
    /// Reassembles a signature from raw parts, checking shapes.
    pub fn from_parts(
        m: usize,
        k: usize,
        dim: usize,
        spec: FeatureSpec,
        tensor: Vec<f32>,
        sensed_ids: Vec<u64>,
        provenance: Provenance,
    ) -> Result<Self> {
        spec.validate(dim)?;
        let c = spec.channels(dim);
        if tensor.len() != m * k * c {
            return Err(Error::LengthMismatch {
                expected: m * k * c,
                found: tensor.len(),
            });
        }
        if sensed_ids.len() != m * k * spec.kappa {
            return Err(Error::LengthMismatch {
                expected: m * k * spec.kappa,
                found: sensed_ids.len(),
            });
        }
        if provenance.spacings.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: provenance.spacings.len(),
            });
        }
        Ok(Self {
            m,
            k,
            dim,
            spec,
            tensor,
            sensed_ids,
            provenance,
        })
    }

    /// `(m, k, c)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.k, self.channels())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.spec.channels(self.dim)
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Row-major tensor: ray, then sample, then channel.
    pub fn tensor(&self) -> &[f32] {
        &self.tensor
    }

    /// Row-major `m × k × κ` cloud indices.
    pub fn sensed_ids(&self) -> &[u64] {
        &self.sensed_ids
    }

    pub fn entry(&self, ray: usize, sample: usize) -> &[f32] {
        let c = self.channels();
        let at = (ray * self.k + sample) * c;
        &self.tensor[at..at + c]
    }

    /// Cloud index of the `n`-th neighbour of sample `(ray, sample)`.
    pub fn sensed_id(&self, ray: usize, sample: usize, n: usize) -> usize {
        self.sensed_ids[(ray * self.k + sample) * self.spec.kappa + n] as usize
    }

    /// Nearest-neighbour ids (the κ = 1 slice) in ray-major order.
    pub fn nearest_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.sensed_ids
            .iter()
            .step_by(self.spec.kappa)
            .map(|&i| i as usize)
    }

    fn block(&self, ray: usize, sample: usize, n: usize) -> &[f32] {
        let per = self.spec.channels_per_neighbor(self.dim);
        &self.entry(ray, sample)[n * per..(n + 1) * per]
    }

    pub fn closest_point(&self, ray: usize, sample: usize, n: usize) -> Option<&[f32]> {
        self.spec
            .include_closest_point
            .then(|| &self.block(ray, sample, n)[..self.dim])
    }

    pub fn displacement(&self, ray: usize, sample: usize, n: usize) -> Option<&[f32]> {
        let off = usize::from(self.spec.include_closest_point) * self.dim;
        self.spec
            .include_displacement
            .then(|| &self.block(ray, sample, n)[off..off + self.dim])
    }

    pub fn distance(&self, ray: usize, sample: usize, n: usize) -> Option<f32> {
        let off = (usize::from(self.spec.include_closest_point) + usize::from(self.spec.include_displacement)) * self.dim;
        self.spec
            .include_distance
            .then(|| self.block(ray, sample, n)[off])
    }
}

/// Builds the signature of `cloud` under `rays`.
pub fn build_signature(cloud: &PointCloud, rays: &RaySet, spec: &FeatureSpec) -> Result<Signature> {
    let index = NNIndex::build(cloud)?;
    build_signature_with_index(&index, rays, spec)
}

/// As [`build_signature`], reusing a prebuilt index.
pub fn build_signature_with_index(index: &NNIndex<'_>, rays: &RaySet, spec: &FeatureSpec) -> Result<Signature> {
    let cloud = index.cloud();
    let d = cloud.dim();
    if rays.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rays.dim(),
        });
    }
    spec.validate(d)?;
    if spec.kappa > cloud.len() {
        return Err(Error::KappaTooLarge {
            kappa: spec.kappa,
            available: cloud.len(),
        });
    }
    let (m, k, c) = (rays.len(), rays.k(), spec.channels(d));
    let mut tensor = vec![0f32; m * k * c];
    let mut ids = vec![0u64; m * k * spec.kappa];

    let fill = |ray: usize, tensor: &mut [f32], ids: &mut [u64]| -> Result<()> {
        let mut buf: Vec<Candidate> = Vec::with_capacity(spec.kappa);
        for (j, r) in rays.ray(ray).samples().enumerate() {
            index.query_into(r, spec.kappa, &mut buf)?;
            let entry = &mut tensor[j * c..(j + 1) * c];
            let mut at = 0;
            for (n, cand) in buf.iter().enumerate() {
                ids[j * spec.kappa + n] = cand.index as u64;
                let p = cloud.point(cand.index);
                if spec.include_closest_point {
                    for (slot, x) in entry[at..at + d].iter_mut().zip(p) {
                        *slot = *x as f32;
                    }
                    at += d;
                }
                if spec.include_displacement {
                    for ((slot, x), y) in entry[at..at + d].iter_mut().zip(p).zip(r) {
                        *slot = (x - y) as f32;
                    }
                    at += d;
                }
                if spec.include_distance {
                    entry[at] = libm::sqrt(cand.dist2) as f32;
                    at += 1;
                }
            }
        }
        Ok(())
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        tensor
            .par_chunks_mut(k * c)
            .zip(ids.par_chunks_mut(k * spec.kappa))
            .enumerate()
            .try_for_each(|(i, (t, s))| fill(i, t, s))?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, (t, s)) in tensor
            .chunks_mut(k * c)
            .zip(ids.chunks_mut(k * spec.kappa))
            .enumerate()
        {
            fill(i, t, s)?;
        }
    }

    Ok(Signature {
        m,
        k,
        dim: d,
        spec: *spec,
        tensor,
        sensed_ids: ids,
        provenance: Provenance {
            cloud_id: cloud.id().map(String::from),
            cloud_len: cloud.len(),
            method: rays.method(),
            ray_seed: rays.seed(),
            ray_param: rays.param(),
            sphere_radius: rays.sphere_radius(),
            spacings: rays.spacings(),
        },
    })
}

/// Hit count of every cloud point among nearest-neighbour ids.
/// Counts sum to `m·k`.
pub fn sensed_multiset(sig: &Signature) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for id in sig.nearest_ids() {
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
}
