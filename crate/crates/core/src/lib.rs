//! Nearest-neighbour sampling of point sets along random rays.
//!
//! A set of random line segments ("rays") is fired through the ambient
//! space of a point set. Every sample point on every ray is replaced by
//! its nearest neighbours in the set, and a feature vector built from
//! those neighbours is written into an `m × k × c` signature tensor.
//! Histograms, Voronoi-length estimates, curvature, coverage, salience
//! and nearest-neighbour classification are all computed from that
//! tensor.
//!
//! The crate is `no_std` (it needs `alloc`). Enable `std` for
//! `std::error::Error` impls, `parallel` to spread per-ray work across a
//! rayon pool, and `serde` to derive serialization on the report types.
//!
//! ```
//! use raysense_core::pointcloud::{synth_shape, ShapeKind, ShapeParams};
//! use raysense_core::rays::generate_r1;
//! use raysense_core::signature::{build_signature, FeatureSpec};
//!
//! let cloud = synth_shape(ShapeKind::Sphere, 500, 3, &ShapeParams::default(), 7).unwrap();
//! let rays = generate_r1(16, 10, 3, 2.0, 11).unwrap();
//! let sig = build_signature(&cloud, &rays, &FeatureSpec::default()).unwrap();
//! assert_eq!(sig.shape(), (16, 10, 6));
//! ```
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classify;
mod error;
pub mod geometry;
pub mod linalg;
pub mod nnindex;
pub mod pointcloud;
pub mod rays;
pub mod rng;
pub mod signature;
pub mod stats;

pub use error::{Error, Result};
pub use nnindex::{NNIndex, NNResult};
pub use pointcloud::PointCloud;
pub use rays::{Ray, RayMethod, RaySet};
pub use signature::{FeatureSpec, Signature};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
