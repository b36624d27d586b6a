//! Planes as `n·Q = 1`, depth/point conversions, instance-aware pooling and
//! ground-truth plane fitting.
//!
//! A plane with unit normal `ñ` at distance `d` from the camera center is
//! stored as `n = ñ / d`; planes through the origin have no such form.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    CameraIntrinsics, DepthMap, ImageGrid, InstanceSegmentation, PixelPlaneParams,
    PlaneInstanceParams, PointMap, SoftAssignment,
};

/// Smallest admissible `‖n‖` (1/m); smaller means a plane near infinity.
pub const PLANE_EPS: f64 = 1e-6;
/// Rays with `n·r` at or below this never hit the plane in front of the camera.
pub const RAY_EPS: f64 = 1e-8;
/// Tikhonov damping of the least-squares normal equations.
pub const LSQ_DAMPING: f64 = 1e-10;
/// Relative eigenvalue floor below which a point set counts as degenerate.
const RANK_TOLERANCE: f64 = 1e-12;

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    n: [f64; 3],
}

impl Plane {
    pub fn new(n: [f64; 3]) -> Result<Self> {
        if n.iter().any(|c| !c.is_finite()) || norm3(&n) < PLANE_EPS {
            return Err(Error::invalid(format!("invalid plane parameter {n:?}")));
        }
        Ok(Self { n })
    }

    pub(crate) fn new_unchecked(n: [f64; 3]) -> Self {
        Self { n }
    }

    /// Plane with unit normal `normal` (normalized here) at distance `offset`.
    pub fn from_normal_offset(normal: [f64; 3], offset: f64) -> Result<Self> {
        let len = norm3(&normal);
        if !(len > 0.0) || !(offset > 0.0) {
            return Err(Error::invalid(
                "plane needs a nonzero normal and positive offset",
            ));
        }
        Self::new(normal.map(|c| c / len / offset))
    }

    pub fn params(&self) -> [f64; 3] {
        self.n
    }

    pub fn normal(&self) -> [f64; 3] {
        let len = norm3(&self.n);
        self.n.map(|c| c / len)
    }

    /// Distance of the plane from the camera center.
    pub fn offset(&self) -> f64 {
        1.0 / norm3(&self.n)
    }

    /// `n·Q - 1`: zero on the plane.
    pub fn residual(&self, q: &[f64; 3]) -> f64 {
        dot3(&self.n, q) - 1.0
    }

    /// Euclidean distance from `q` to the plane.
    pub fn distance(&self, q: &[f64; 3]) -> f64 {
        self.residual(q).abs() / norm3(&self.n)
    }

    /// Depth where the ray through pixel column `u`, row `v` meets the plane.
    pub fn depth_at(&self, intr: &CameraIntrinsics, u: f64, v: f64) -> Option<f64> {
        let denom = dot3(&self.n, &intr.ray(u, v));
        (denom > RAY_EPS).then(|| 1.0 / denom)
    }
}

/// Lifts every valid depth to the camera-frame point `z · ray(u, v)`.
pub fn backproject(depth: &DepthMap, intr: &CameraIntrinsics) -> PointMap {
    let grid = depth.grid();
    let mut points = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (row, col) = grid.coords(i);
        let z = depth.depth()[i];
        if depth.valid()[i] {
            let r = intr.ray(col as f64, row as f64);
            points.push([z * r[0], z * r[1], z]);
        } else {
            points.push([0.0; 3]);
        }
    }
    PointMap::new(grid, points, depth.valid().to_vec()).expect("finite points from valid depths")
}

/// Renders the plane's depth over the grid; pixels whose rays miss it (or hit
/// behind the camera) are invalid.
pub fn depth_from_plane(plane: &Plane, grid: ImageGrid, intr: &CameraIntrinsics) -> DepthMap {
    let mut depth = vec![0.0; grid.len()];
    let mut valid = vec![false; grid.len()];
    for i in 0..grid.len() {
        let (row, col) = grid.coords(i);
        if let Some(z) = plane.depth_at(intr, col as f64, row as f64) {
            if z.is_finite() {
                depth[i] = z;
                valid[i] = true;
            }
        }
    }
    DepthMap::new(grid, depth, valid).expect("rendered depths are positive")
}

/// Piecewise-planar depth: each labeled pixel takes the depth of its plane.
pub fn depth_from_segmentation(
    seg: &InstanceSegmentation,
    planes: &[Plane],
    intr: &CameraIntrinsics,
) -> Result<DepthMap> {
    if planes.len() < seg.count() {
        return Err(Error::invalid(format!(
            "{} planes for {} instances",
            planes.len(),
            seg.count()
        )));
    }
    let grid = seg.grid();
    let mut depth = vec![0.0; grid.len()];
    let mut valid = vec![false; grid.len()];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (row, col) = grid.coords(i);
        if let Some(z) = planes[l as usize - 1].depth_at(intr, col as f64, row as f64) {
            depth[i] = z;
            valid[i] = z.is_finite();
        }
    }
    DepthMap::new(grid, depth, valid)
}

/// Soft-assignment weighted mean of per-pixel parameters, one per cluster.
pub fn pool_instance_params(
    pixel_params: &PixelPlaneParams,
    assignment: &SoftAssignment,
) -> Result<PlaneInstanceParams> {
    pixel_params
        .grid()
        .ensure_same(&assignment.grid(), "pixel params vs assignment")?;
    let c = assignment.clusters();
    if c == 0 {
        return Err(Error::invalid("pooling needs at least one cluster"));
    }
    let mut sums = vec![[0.0; 3]; c];
    let mut weights = vec![0.0; c];
    for (i, n) in pixel_params.params().iter().enumerate() {
        if !assignment.is_planar(i) {
            continue;
        }
        for (j, &s) in assignment.row(i).iter().enumerate() {
            weights[j] += s;
            for a in 0..3 {
                sums[j][a] += s * n[a];
            }
        }
    }
    let params = sums
        .into_iter()
        .zip(&weights)
        .enumerate()
        .map(|(j, (sum, &z))| {
            if z > 0.0 {
                Ok(sum.map(|v| v / z))
            } else {
                Err(Error::EmptyInstance(j))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PlaneInstanceParams::new(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Root mean square of `n·Q - 1` over the fitted points.
    pub rms: f64,
}

fn fit_points(points: &[[f64; 3]]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegeneratePointSet);
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for q in points {
        let v = Vector3::from(*q);
        a += v * v.transpose();
        b += v;
    }
    let eig = a.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::DegeneratePointSet);
    }
    let damped = a + Matrix3::identity() * LSQ_DAMPING;
    let n = damped
        .cholesky()
        .ok_or(Error::DegeneratePointSet)?
        .solve(&b);
    let plane = Plane::new([n.x, n.y, n.z]).map_err(|_| Error::DegeneratePointSet)?;
    let rms = (points
        .iter()
        .map(|q| plane.residual(q).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(PlaneFit { plane, rms })
}

/// Least-squares `n` minimizing `Σ (n·Q - 1)²` over the valid points of
/// `subset`.
pub fn fit_plane_lsq(points: &PointMap, subset: &[usize]) -> Result<PlaneFit> {
    let selected: Vec<[f64; 3]> = subset.iter().filter_map(|&i| points.get(i)).collect();
    fit_points(&selected)
}

/// Plane through three points, if they span one that misses the origin.
fn plane_through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<Plane> {
    let u = Vector3::from(*b) - Vector3::from(*a);
    let v = Vector3::from(*c) - Vector3::from(*a);
    let normal = u.cross(&v);
    let len = normal.norm();
    if len <= 1e-12 * u.norm() * v.norm() || len == 0.0 {
        return None;
    }
    let normal = normal / len;
    let offset = normal.dot(&Vector3::from(*a));
    if offset.abs() < 1e-9 {
        return None;
    }
    Plane::new((normal / offset).into()).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtPlaneConfig {
    /// RANSAC inlier threshold on point-to-plane distance (m).
    pub inlier_tol: f64,
    /// Segments merge while their mean cross distance is below this (m).
    pub merge_tol: f64,
    pub ransac_iterations: usize,
    pub seed: u64,
}

impl Default for GtPlaneConfig {
    fn default() -> Self {
        Self {
            inlier_tol: 0.02,
            merge_tol: 0.10,
            ransac_iterations: 200,
            seed: 0,
        }
    }
}

struct Segment {
    first_label: u32,
    pixels: Vec<usize>,
    inliers: Vec<[f64; 3]>,
    plane: Plane,
}

fn ransac_segment(
    points: &[[f64; 3]],
    config: &GtPlaneConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(Plane, Vec<[f64; 3]>)> {
    if points.len() < 3 {
        return None;
    }
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..config.ransac_iterations {
        let idx = sample(rng, points.len(), 3);
        let Some(candidate) = plane_through(
            &points[idx.index(0)],
            &points[idx.index(1)],
            &points[idx.index(2)],
        ) else {
            continue;
        };
        let inliers = points
            .iter()
            .filter(|q| candidate.distance(q) < config.inlier_tol)
            .count();
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, candidate));
        }
    }
    if let Some((_, candidate)) = best {
        let inliers: Vec<[f64; 3]> = points
            .iter()
            .copied()
            .filter(|q| candidate.distance(q) < config.inlier_tol)
            .collect();
        if let Ok(fit) = fit_points(&inliers) {
            return Some((fit.plane, inliers));
        }
    }
    fit_points(points)
        .ok()
        .map(|fit| (fit.plane, points.to_vec()))
}

fn mean_distance(points: &[[f64; 3]], plane: &Plane) -> f64 {
    points.iter().map(|q| plane.distance(q)).sum::<f64>() / points.len() as f64
}

/// Symmetrized mean point-to-plane distance between two segments.
fn segment_distance(a: &Segment, b: &Segment) -> f64 {
    0.5 * (mean_distance(&a.inliers, &b.plane) + mean_distance(&b.inliers, &a.plane))
}

/// Fits a plane to every segment with RANSAC, then greedily merges the
/// closest pair of segments while their mean distance is below `merge_tol`.
///
/// Segments with fewer than three valid points become non-planar. Output
/// labels are contiguous, ordered by the smallest input label of each group,
/// and `planes[l - 1]` belongs to label `l`.
pub fn fit_planes_ransac_merge(
    points: &PointMap,
    segments: &InstanceSegmentation,
    config: &GtPlaneConfig,
) -> Result<(InstanceSegmentation, Vec<Plane>)> {
    points
        .grid()
        .ensure_same(&segments.grid(), "points vs segments")?;
    if !(config.inlier_tol > 0.0 && config.merge_tol >= 0.0) || config.ransac_iterations == 0 {
        return Err(Error::invalid("RANSAC tolerances must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); segments.count() + 1];
    for (i, &l) in segments.labels().iter().enumerate() {
        members[l as usize].push(i);
    }

    let mut live: Vec<Segment> = Vec::new();
    for (label, pixels) in members.into_iter().enumerate().skip(1) {
        let valid: Vec<[f64; 3]> = pixels.iter().filter_map(|&i| points.get(i)).collect();
        if let Some((plane, inliers)) = ransac_segment(&valid, config, &mut rng) {
            live.push(Segment {
                first_label: label as u32,
                pixels,
                inliers,
                plane,
            });
        }
    }

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..live.len() {
            for b in (a + 1)..live.len() {
                let d = segment_distance(&live[a], &live[b]);
                if d < config.merge_tol && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let absorbed = live.remove(b);
        let target = &mut live[a];
        target.pixels.extend(absorbed.pixels);
        target.inliers.extend(absorbed.inliers);
        target.first_label = target.first_label.min(absorbed.first_label);
        if let Ok(fit) = fit_points(&target.inliers) {
            target.plane = fit.plane;
        }
    }

    live.sort_by_key(|s| s.first_label);
    let mut labels = vec![0u32; segments.grid().len()];
    for (k, seg) in live.iter().enumerate() {
        for &i in &seg.pixels {
            labels[i] = k as u32 + 1;
        }
    }
    let planes = live.iter().map(|s| s.plane).collect();
    Ok((InstanceSegmentation::new(segments.grid(), labels)?, planes))
}

/// Angle between the planes' unit normals, in degrees.
///
/// Uses `atan2(|a × b|, a · b)`, which stays accurate for nearly parallel
/// normals and gives exactly 0 for identical ones.
pub fn normal_angle(a: &Plane, b: &Plane) -> f64 {
    let (u, v) = (a.normal(), b.normal());
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    norm3(&cross).atan2(dot3(&u, &v)).to_degrees()
}
