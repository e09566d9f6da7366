//! Exact κ-nearest-neighbour search.
//!
//! [`NNIndex`] is a bucketed kd-tree. Ties in distance are broken by the
//! smaller point index, so a query has exactly one correct answer and the
//! tree agrees with [`brute_force_query`] bit for bit.
//!
//! Pruning compares the squared distance to a node's bounding box against
//! the current κ-th candidate. The box distance is summed in the same
//! coordinate order as point distances, and every term is a lower bound
//! of the matching point term under IEEE rounding, so a pruned subtree
//! can never hold a strictly better candidate. Subtrees whose bound equals
//! the κ-th distance are still visited because they may hold a tie with a
//! smaller index.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::dist2;
use crate::pointcloud::PointCloud;

/// Tree construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    /// Maximum points per leaf.
    pub leaf_size: usize,
    /// Below this many points the index is a single leaf (linear scan).
    pub scan_threshold: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            leaf_size: 16,
            scan_threshold: 32,
        }
    }
}

/// Neighbours of one query, nearest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NNResult {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

/// A `(squared distance, point index)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub dist2: f64,
    pub index: usize,
}

impl Candidate {
    #[inline]
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// kd-tree over an immutable [`PointCloud`].
#[derive(Debug, Clone)]
pub struct NNIndex<'a> {
    cloud: &'a PointCloud,
    nodes: Vec<Node>,
    /// Point indices in leaf order.
    order: Vec<usize>,
    /// Coordinates copied in leaf order.
    packed: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> NNIndex<'a> {
    pub fn build(cloud: &'a PointCloud) -> Result<Self> {
        Self::with_params(cloud, IndexParams::default())
    }

    pub fn with_params(cloud: &'a PointCloud, params: IndexParams) -> Result<Self> {
        let n = cloud.len();
        if n == 0 {
            return Err(Error::EmptyCloud);
        }
        let d = cloud.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in cloud.points() {
            for a in 0..d {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut index = Self {
            cloud,
            nodes: Vec::new(),
            order: (0..n).collect(),
            packed: Vec::new(),
            lo,
            hi,
        };
        if n < params.scan_threshold.max(1) {
            index.nodes.push(Node::Leaf { start: 0, end: n });
        } else {
            index.build_node(0, n, params.leaf_size.max(1));
        }
        index.packed = index
            .order
            .iter()
            .flat_map(|&i| cloud.point(i).iter().copied())
            .collect();
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= leaf_size {
            return id;
        }
        let cloud = self.cloud;
        let d = cloud.dim();
        let slice = &self.order[start..end];
        let (mut axis, mut spread) = (0, 0.0);
        for a in 0..d {
            let (mn, mx) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &i| {
                let v = cloud.point(i)[a];
                (mn.min(v), mx.max(v))
            });
            if mx - mn > spread {
                spread = mx - mn;
                axis = a;
            }
        }
        if spread == 0.0 {
            return id;
        }
        let mid = (end - start) / 2;
        let key = |i: &usize| (cloud.point(*i)[axis], *i);
        self.order[start..end].select_nth_unstable_by(mid, |a, b| {
            let (va, ia) = key(a);
            let (vb, ib) = key(b);
            va.total_cmp(&vb).then(ia.cmp(&ib))
        });
        let value = cloud.point(self.order[start + mid])[axis];
        let left = self.build_node(start, start + mid, leaf_size);
        let right = self.build_node(start + mid, end, leaf_size);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn cloud(&self) -> &'a PointCloud {
        self.cloud
    }

    /// κ nearest neighbours of `q`.
    pub fn query(&self, q: &[f64], kappa: usize) -> Result<NNResult> {
        let mut buf = Vec::with_capacity(kappa);
        self.query_into(q, kappa, &mut buf)?;
        Ok(to_result(&buf))
    }

    /// Nearest neighbour of `q` as `(index, squared distance)`.
    pub fn nearest(&self, q: &[f64]) -> Result<Candidate> {
        let mut buf = Vec::with_capacity(1);
        self.query_into(q, 1, &mut buf)?;
        Ok(buf[0])
    }

    /// Allocation-free query: `out` is cleared and filled nearest-first.
    pub fn query_into(&self, q: &[f64], kappa: usize, out: &mut Vec<Candidate>) -> Result<()> {
        check_query(self.cloud, q, kappa)?;
        out.clear();
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        self.search(0, q, kappa, &mut lo, &mut hi, out);
        Ok(())
    }

    fn search(
        &self,
        node: usize,
        q: &[f64],
        kappa: usize,
        lo: &mut [f64],
        hi: &mut [f64],
        out: &mut Vec<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let d = q.len();
                for slot in start..end {
                    let p = &self.packed[slot * d..(slot + 1) * d];
                    push_candidate(
                        out,
                        kappa,
                        Candidate {
                            dist2: dist2(q, p),
                            index: self.order[slot],
                        },
                    );
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let (near, far, near_is_left) = if q[axis] < value {
                    (left, right, true)
                } else {
                    (right, left, false)
                };
                // near child
                let saved = if near_is_left { hi[axis] } else { lo[axis] };
                if near_is_left {
                    hi[axis] = value;
                } else {
                    lo[axis] = value;
                }
                if self.reachable(q, kappa, lo, hi, out) {
                    self.search(near, q, kappa, lo, hi, out);
                }
                if near_is_left {
                    hi[axis] = saved;
                } else {
                    lo[axis] = saved;
                }
                // far child
                let saved = if near_is_left { lo[axis] } else { hi[axis] };
                if near_is_left {
                    lo[axis] = value;
                } else {
                    hi[axis] = value;
                }
                if self.reachable(q, kappa, lo, hi, out) {
                    self.search(far, q, kappa, lo, hi, out);
                }
                if near_is_left {
                    lo[axis] = saved;
                } else {
                    hi[axis] = saved;
                }
            }
        }
    }

    #[inline]
    fn reachable(&self, q: &[f64], kappa: usize, lo: &[f64], hi: &[f64], out: &[Candidate]) -> bool {
        if out.len() < kappa {
            return true;
        }
        let mut bound = 0.0;
        for a in 0..q.len() {
            let gap = if q[a] < lo[a] {
                lo[a] - q[a]
            } else if q[a] > hi[a] {
                q[a] - hi[a]
            } else {
                0.0
            };
            bound += gap * gap;
        }
        bound <= out[kappa - 1].dist2
    }
}

fn check_query(cloud: &PointCloud, q: &[f64], kappa: usize) -> Result<()> {
    if q.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: q.len(),
        });
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("query point"));
    }
    if kappa == 0 {
        return Err(crate::error::invalid("kappa must be at least 1"));
    }
    if kappa > cloud.len() {
        return Err(Error::KappaTooLarge {
            kappa,
            available: cloud.len(),
        });
    }
    Ok(())
}

#[inline]
fn push_candidate(out: &mut Vec<Candidate>, kappa: usize, c: Candidate) {
    if out.len() == kappa {
        if c.cmp_key(&out[kappa - 1]) != Ordering::Less {
            return;
        }
        out.pop();
    }
    let pos = out.partition_point(|x| x.cmp_key(&c) == Ordering::Less);
    out.insert(pos, c);
}

fn to_result(buf: &[Candidate]) -> NNResult {
    NNResult {
        indices: buf.iter().map(|c| c.index).collect(),
        distances: buf.iter().map(|c| libm::sqrt(c.dist2)).collect(),
    }
}

/// Full linear scan with the same tie rule as [`NNIndex::query`].
pub fn brute_force_query(cloud: &PointCloud, q: &[f64], kappa: usize) -> Result<NNResult> {
    check_query(cloud, q, kappa)?;
    let mut all: Vec<Candidate> = cloud
        .points()
        .enumerate()
        .map(|(index, p)| Candidate {
            dist2: dist2(q, p),
            index,
        })
        .collect();
    all.sort_unstable_by(Candidate::cmp_key);
    all.truncate(kappa);
    Ok(to_result(&all))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
        let mut rng = substream(seed, 0);
        PointCloud::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_point_cloud() {
        let c = PointCloud::from_rows(&[[0.3, -0.2]]).unwrap();
        let idx = NNIndex::build(&c).unwrap();
        for q in [[0.0, 0.0], [10.0, -4.0], [0.3, -0.2]] {
            assert_eq!(idx.query(&q, 1).unwrap().indices, vec![0]);
        }
    }

    #[test]
    fn direct_query() {
        let c = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let r = NNIndex::build(&c).unwrap().query(&[0.4, 0.0], 1).unwrap();
        assert_eq!(r.indices, vec![0]);
        assert!((r.distances[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let mut rows = vec![[5.0, 5.0]; 10];
        rows[3] = [1.0, 0.0];
        rows[7] = [-1.0, 0.0];
        let c = PointCloud::from_rows(&rows).unwrap();
        for params in [IndexParams::default(), IndexParams { leaf_size: 1, scan_threshold: 0 }] {
            let idx = NNIndex::with_params(&c, params).unwrap();
            let r = idx.query(&[0.0, 0.0], 2).unwrap();
            assert_eq!(r.indices, vec![3, 7]);
        }
    }

    #[test]
    fn duplicates_are_both_returned() {
        let c = PointCloud::from_rows(&[[0.5, 0.5], [0.1, 0.1], [0.5, 0.5]]).unwrap();
        let r = NNIndex::build(&c).unwrap().query(&[0.6, 0.6], 2).unwrap();
        assert_eq!(r.indices, vec![0, 2]);
        assert_eq!(r.distances[0], r.distances[1]);
    }

    #[test]
    fn query_errors() {
        let c = random_cloud(5, 3, 1);
        let idx = NNIndex::build(&c).unwrap();
        assert!(matches!(idx.query(&[0.0; 3], 6), Err(Error::KappaTooLarge { .. })));
        assert!(matches!(idx.query(&[f64::NAN, 0.0, 0.0], 1), Err(Error::NonFinite(_))));
        assert!(matches!(idx.query(&[0.0; 2], 1), Err(Error::DimensionMismatch { .. })));
        assert!(idx.query(&[0.0; 3], 0).is_err());
    }

    #[test]
    fn tree_matches_scan_on_1024_points() {
        let c = random_cloud(1024, 3, 2);
        let idx = NNIndex::build(&c).unwrap();
        let mut rng = substream(3, 0);
        for _ in 0..10_000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
            assert_eq!(idx.query(&q, 1).unwrap(), brute_force_query(&c, &q, 1).unwrap());
        }
    }

    #[test]
    fn tree_matches_scan_in_784_dims() {
        let c = random_cloud(2000, 784, 4);
        let idx = NNIndex::build(&c).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..100 {
            let q: Vec<f64> = (0..784).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(idx.query(&q, 5).unwrap(), brute_force_query(&c, &q, 5).unwrap());
        }
    }

    #[test]
    fn distances_are_monotone_and_zero_on_hits() {
        let c = random_cloud(300, 4, 6);
        let idx = NNIndex::build(&c).unwrap();
        let r = idx.query(c.point(17), 8).unwrap();
        assert_eq!(r.indices[0], 17);
        assert_eq!(r.distances[0], 0.0);
        assert!(r.distances.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.distances[1] > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tree_equals_scan(
            n in 1usize..200,
            d in 1usize..6,
            kappa_frac in 0.0f64..1.0,
            seed in any::<u64>(),
            grid in any::<bool>(),
        ) {
            let mut rng = substream(seed, 0);
            // Snapping to a coarse lattice forces many exact ties.
            let coords = (0..n * d)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    if grid { (x * 3.0).round() / 3.0 } else { x }
                })
                .collect();
            let c = PointCloud::new(d, coords).unwrap();
            let kappa = 1 + ((n - 1) as f64 * kappa_frac) as usize;
            let idx = NNIndex::with_params(&c, IndexParams { leaf_size: 2, scan_threshold: 4 }).unwrap();
            for _ in 0..8 {
                let q: Vec<f64> = (0..d)
                    .map(|_| {
                        let x: f64 = rng.random_range(-1.5..1.5);
                        if grid { (x * 6.0).round() / 6.0 } else { x }
                    })
                    .collect();
                prop_assert_eq!(idx.query(&q, kappa).unwrap(), brute_force_query(&c, &q, kappa).unwrap());
            }
        }
    }
}
