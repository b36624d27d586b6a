//! Inference: probabilities and embeddings to planes and depth.

use crate::clustering::{cluster_with_stats, hard_labels, ClusterSet, MeanShiftConfig, RunStats};
use crate::error::Result;
use crate::geometry::{depth_from_segmentation, pool_instance_params, Plane};
use crate::types::{
    CameraIntrinsics, DepthMap, EmbeddingMap, InstanceSegmentation, PixelPlaneParams,
    PlanarProbabilityMap, SoftAssignment,
};

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub clusters: ClusterSet,
    pub assignment: SoftAssignment,
    pub segmentation: InstanceSegmentation,
    /// `planes[l - 1]` belongs to label `l`.
    pub planes: Vec<Plane>,
    pub depth: DepthMap,
    pub stats: RunStats,
}

/// Thresholds the planar probabilities, clusters the masked embeddings,
/// decodes hard labels and pools the per-pixel parameters over each label.
///
/// The soft assignment is returned for inspection; pooling uses the hard
/// segmentation so neighbouring instances do not bleed into each other.
pub fn reconstruct(
    embeddings: &EmbeddingMap,
    probs: &PlanarProbabilityMap,
    pixel_params: &PixelPlaneParams,
    intr: &CameraIntrinsics,
    config: &MeanShiftConfig,
    mask_threshold: f64,
) -> Result<Reconstruction> {
    embeddings
        .grid()
        .ensure_same(&probs.grid(), "embeddings vs probabilities")?;
    embeddings
        .grid()
        .ensure_same(&pixel_params.grid(), "embeddings vs plane parameters")?;
    intr.validate()?;
    let mask = probs.threshold(mask_threshold);
    let run = cluster_with_stats(embeddings, &mask, config)?;
    let segmentation = hard_labels(&run.assignment);
    let planes =
        pool_instance_params(pixel_params, &SoftAssignment::one_hot(&segmentation))?.planes();
    let depth = depth_from_segmentation(&segmentation, &planes, intr)?;
    Ok(Reconstruction {
        clusters: run.clusters,
        assignment: run.assignment,
        segmentation,
        planes,
        depth,
        stats: run.stats,
    })
}
