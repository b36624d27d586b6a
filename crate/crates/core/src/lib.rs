//! Piecewise-planar scene reconstruction from per-pixel network outputs.
//!
//! Planar pixels carry learned embeddings; [`clustering`] groups them into
//! plane instances with anchor mean shift, [`geometry`] pools per-pixel plane
//! parameters into one plane per instance and renders depth, [`losses`]
//! holds the training objective with analytic gradients, and [`metrics`]
//! scores the result.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
mod parallel;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod types;
mod union_find;

pub use clustering::{
    cluster, cluster_with_stats, hard_labels, hard_labels_with_map, vanilla_mean_shift, ClusterSet,
    MeanShiftConfig,
};
pub use error::{Error, Result};
pub use geometry::Plane;
pub use types::{
    CameraIntrinsics, DepthMap, EmbeddingMap, ImageGrid, InstanceSegmentation, LossReport,
    PixelPlaneParams, PlanarMask, PlanarProbabilityMap, PlaneInstanceParams, PointMap,
    SoftAssignment,
};
