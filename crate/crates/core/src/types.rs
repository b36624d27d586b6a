//! Per-pixel maps shared across the crate.
//!
//! Every map is laid out row-major over an [`ImageGrid`]: pixel `(row, col)`
//! lives at index `row * width + col`. Non-planar pixels keep their slot
//! (label 0, all-zero assignment row) so every map stays index-aligned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image grid must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixel count.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// `(row, col)` of a linear index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub(crate) fn ensure_same(&self, other: &ImageGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

fn check_len(grid: &ImageGrid, per_pixel: usize, got: usize, what: &str) -> Result<()> {
    let want = grid.len() * per_pixel;
    if got != want {
        return Err(Error::invalid(format!(
            "{what}: expected {want} values for {}x{} grid, got {got}",
            grid.height, grid.width
        )));
    }
    Ok(())
}

/// Per-pixel embedding vectors, `N x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    grid: ImageGrid,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMap {
    pub fn new(grid: ImageGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        check_len(&grid, dim, values.len(), "embedding map")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding map contains non-finite values"));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    /// Embeddings of the masked pixels packed contiguously, plus their pixel indices.
    pub(crate) fn gather(&self, mask: &PlanarMask) -> (Vec<f64>, Vec<usize>) {
        let indices: Vec<usize> = mask.planar_indices().collect();
        let mut packed = Vec::with_capacity(indices.len() * self.dim);
        for &i in &indices {
            packed.extend_from_slice(self.pixel(i));
        }
        (packed, indices)
    }
}

/// Foreground (planar) probability per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarProbabilityMap {
    grid: ImageGrid,
    probs: Vec<f64>,
}

impl PlanarProbabilityMap {
    pub fn new(grid: ImageGrid, probs: Vec<f64>) -> Result<Self> {
        check_len(&grid, 1, probs.len(), "probability map")?;
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self { grid, probs })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Planar where `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> PlanarMask {
        PlanarMask {
            grid: self.grid,
            mask: self.probs.iter().map(|&p| p >= threshold).collect(),
        }
    }
}

/// Binary planar/non-planar mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanarMask {
    grid: ImageGrid,
    mask: Vec<bool>,
}

impl PlanarMask {
    pub fn new(grid: ImageGrid, mask: Vec<bool>) -> Result<Self> {
        check_len(&grid, 1, mask.len(), "planar mask")?;
        Ok(Self { grid, mask })
    }

    pub fn all(grid: ImageGrid) -> Self {
        Self {
            grid,
            mask: vec![true; grid.len()],
        }
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_planar(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn planar_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn planar_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }
}

/// Instance labels: 0 is non-planar, `1..=count` are plane instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSegmentation {
    grid: ImageGrid,
    labels: Vec<u32>,
    count: usize,
}

impl InstanceSegmentation {
    /// Validates that the used labels are exactly `1..=C` for some `C`.
    pub fn new(grid: ImageGrid, labels: Vec<u32>) -> Result<Self> {
        check_len(&grid, 1, labels.len(), "instance segmentation")?;
        let count = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut seen = vec![false; count + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = (1..=count).find(|&l| !seen[l]) {
            return Err(Error::invalid(format!(
                "instance labels must be contiguous 1..={count}; label {missing} is unused"
            )));
        }
        Ok(Self {
            grid,
            labels,
            count,
        })
    }

    /// Renumbers arbitrary labels to a contiguous range, ordered by first
    /// appearance. Label 0 stays 0.
    pub fn from_raw_labels(grid: ImageGrid, raw: &[u32]) -> Result<Self> {
        check_len(&grid, 1, raw.len(), "instance segmentation")?;
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                if l == 0 {
                    0
                } else {
                    let next = map.len() as u32 + 1;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Ok(Self {
            grid,
            labels,
            count: map.len(),
        })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Number of plane instances `C`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn planar_mask(&self) -> PlanarMask {
        PlanarMask {
            grid: self.grid,
            mask: self.labels.iter().map(|&l| l != 0).collect(),
        }
    }

    /// Pixel count per label, index 0 being non-planar.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count + 1];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Soft pixel-to-cluster membership, `N x clusters`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    grid: ImageGrid,
    clusters: usize,
    weights: Vec<f64>,
    planar: Vec<bool>,
}

pub(crate) const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl SoftAssignment {
    /// Non-planar rows are the all-zero rows; every other row must sum to 1.
    pub fn new(grid: ImageGrid, clusters: usize, weights: Vec<f64>) -> Result<Self> {
        check_len(&grid, clusters, weights.len(), "soft assignment")?;
        let mut planar = Vec::with_capacity(grid.len());
        for (i, row) in weights.chunks(clusters.max(1)).take(grid.len()).enumerate() {
            if row.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(Error::invalid(format!("pixel {i}: weight outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                planar.push(false);
            } else if (sum - 1.0).abs() <= ROW_SUM_TOLERANCE {
                planar.push(true);
            } else {
                return Err(Error::invalid(format!("pixel {i}: row sums to {sum}")));
            }
        }
        if clusters == 0 {
            planar = vec![false; grid.len()];
        }
        Ok(Self {
            grid,
            clusters,
            weights,
            planar,
        })
    }

    /// One-hot assignment from an instance segmentation; cluster `j` is label `j + 1`.
    pub fn one_hot(seg: &InstanceSegmentation) -> Self {
        let clusters = seg.count();
        let mut weights = vec![0.0; seg.grid().len() * clusters];
        for (i, &l) in seg.labels().iter().enumerate() {
            if l != 0 {
                weights[i * clusters + (l as usize - 1)] = 1.0;
            }
        }
        Self {
            grid: seg.grid(),
            clusters,
            weights,
            planar: seg.labels().iter().map(|&l| l != 0).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        grid: ImageGrid,
        clusters: usize,
        weights: Vec<f64>,
        planar: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(weights.len(), grid.len() * clusters);
        Self {
            grid,
            clusters,
            weights,
            planar,
        }
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.weights[index * self.clusters..(index + 1) * self.clusters]
    }

    pub fn is_planar(&self, index: usize) -> bool {
        self.planar[index]
    }

    pub fn planar_mask(&self) -> PlanarMask {
        PlanarMask {
            grid: self.grid,
            mask: self.planar.clone(),
        }
    }

    pub fn planar_count(&self) -> usize {
        self.planar.iter().filter(|&&p| p).count()
    }
}

fn check_finite3(values: &[[f64; 3]], what: &str) -> Result<()> {
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Per-pixel plane parameters `n`, with `n·Q = 1` for points `Q` on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPlaneParams {
    grid: ImageGrid,
    params: Vec<[f64; 3]>,
}

impl PixelPlaneParams {
    pub fn new(grid: ImageGrid, params: Vec<[f64; 3]>) -> Result<Self> {
        check_len(&grid, 1, params.len(), "pixel plane params")?;
        check_finite3(&params, "pixel plane params")?;
        Ok(Self { grid, params })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn params(&self) -> &[[f64; 3]] {
        &self.params
    }
}

/// One plane parameter per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneInstanceParams {
    params: Vec<[f64; 3]>,
}

impl PlaneInstanceParams {
    pub fn new(params: Vec<[f64; 3]>) -> Result<Self> {
        check_finite3(&params, "instance plane params")?;
        if let Some(j) = params
            .iter()
            .position(|n| crate::geometry::norm3(n) <= crate::geometry::PLANE_EPS)
        {
            return Err(Error::invalid(format!(
                "instance {j}: plane parameter norm below {}",
                crate::geometry::PLANE_EPS
            )));
        }
        Ok(Self { params })
    }

    pub fn clusters(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[[f64; 3]] {
        &self.params
    }

    pub fn planes(&self) -> Vec<crate::geometry::Plane> {
        self.params
            .iter()
            .map(|&n| crate::geometry::Plane::new_unchecked(n))
            .collect()
    }
}

/// Metric depth with a validity flag per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: ImageGrid,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(grid: ImageGrid, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        check_len(&grid, 1, depth.len(), "depth map")?;
        check_len(&grid, 1, valid.len(), "depth validity")?;
        for (i, (&z, &v)) in depth.iter().zip(&valid).enumerate() {
            if v && !(z.is_finite() && z > 0.0) {
                return Err(Error::invalid(format!(
                    "pixel {i}: valid depth {z} not positive"
                )));
            }
        }
        Ok(Self { grid, depth, valid })
    }

    /// Valid exactly where the depth is finite and positive.
    pub fn from_depths(grid: ImageGrid, depth: Vec<f64>) -> Result<Self> {
        let valid = depth.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        Self::new(grid, depth, valid)
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at `index` if valid.
    pub fn get(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.depth[index])
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }

    /// Principal point at the image center, focal length `focal` on both axes.
    pub fn centered(grid: ImageGrid, focal: f64) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (grid.width() as f64 - 1.0) / 2.0,
            (grid.height() as f64 - 1.0) / 2.0,
        )
    }

    /// Viewing ray `((u - cx)/fx, (v - cy)/fy, 1)` through pixel column `u`, row `v`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }
}

/// Camera-frame 3D points per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    grid: ImageGrid,
    points: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

impl PointMap {
    pub fn new(grid: ImageGrid, points: Vec<[f64; 3]>, valid: Vec<bool>) -> Result<Self> {
        check_len(&grid, 1, points.len(), "point map")?;
        check_len(&grid, 1, valid.len(), "point validity")?;
        if points
            .iter()
            .zip(&valid)
            .any(|(p, &v)| v && p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::invalid("valid point with non-finite coordinates"));
        }
        Ok(Self {
            grid,
            points,
            valid,
        })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, index: usize) -> Option<[f64; 3]> {
        self.valid[index].then(|| self.points[index])
    }
}

/// Every term of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_s: f64,
    pub l_pull: f64,
    pub l_push: f64,
    pub l_e: f64,
    pub l_pp: f64,
    pub l_ip: f64,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_zero() {
        assert!(ImageGrid::new(0, 3).is_err());
        let g = ImageGrid::new(2, 3).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.index(1, 2), 5);
        assert_eq!(g.coords(5), (1, 2));
    }

    #[test]
    fn segmentation_requires_contiguous_labels() {
        let g = ImageGrid::new(1, 4).unwrap();
        assert!(InstanceSegmentation::new(g, vec![0, 1, 3, 3]).is_err());
        let seg = InstanceSegmentation::new(g, vec![0, 1, 2, 2]).unwrap();
        assert_eq!(seg.count(), 2);
        assert_eq!(seg.sizes(), vec![1, 1, 2]);
        let raw = InstanceSegmentation::from_raw_labels(g, &[7, 0, 3, 7]).unwrap();
        assert_eq!(raw.labels(), &[1, 0, 2, 1]);
    }

    #[test]
    fn soft_assignment_row_sums() {
        let g = ImageGrid::new(1, 2).unwrap();
        assert!(SoftAssignment::new(g, 2, vec![0.5, 0.5, 0.0, 0.0]).is_ok());
        assert!(SoftAssignment::new(g, 2, vec![0.5, 0.4, 0.0, 0.0]).is_err());
        let s = SoftAssignment::new(g, 2, vec![0.25, 0.75, 0.0, 0.0]).unwrap();
        assert!(s.is_planar(0));
        assert!(!s.is_planar(1));
    }

    #[test]
    fn probability_bounds() {
        let g = ImageGrid::new(1, 2).unwrap();
        assert!(PlanarProbabilityMap::new(g, vec![0.2, 1.2]).is_err());
        let p = PlanarProbabilityMap::new(g, vec![0.2, 0.5]).unwrap();
        assert_eq!(p.threshold(0.5).mask(), &[false, true]);
    }
}
