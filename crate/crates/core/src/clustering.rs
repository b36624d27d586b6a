//! Anchor-based mean shift over pixel embeddings.
//!
//! Rather than moving every pixel embedding, `k^d` anchors laid out on a grid
//! over the embeddings' bounding box are shifted toward the Gaussian-weighted
//! mean of the planar embeddings, so one iteration costs `O(k^d · N · d)`
//! instead of `O(N² · d)`. Converged anchors closer than the merge radius are
//! grouped into clusters and every planar pixel is softly assigned to the
//! cluster centers.
//!
//! [`vanilla_mean_shift`] is the classic per-pixel mode seeker, kept as a
//! reference for equivalence tests and benchmarks.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::with_workers;
use crate::types::{EmbeddingMap, InstanceSegmentation, PlanarMask, SoftAssignment};
use crate::union_find::{count_within_radius, sq_dist, union_within_radius, DisjointSet};

/// Densities below this are treated as zero: the anchor has no support.
pub const ZERO_DENSITY: f64 = 1e-300;

/// Largest anchor grid `init_anchors` will build.
pub const MAX_ANCHORS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftConfig {
    /// Anchors per embedding dimension (`k`).
    pub anchors_per_dim: usize,
    /// Embedding dimension (`d`).
    pub dim: usize,
    /// Gaussian kernel bandwidth (`b`).
    pub bandwidth: f64,
    /// Shift iterations (`T`).
    pub iterations: usize,
    /// Anchors with density below `density_fraction · max density` are dropped
    /// once, right after initialization.
    pub density_fraction: f64,
    /// Anchors closer than this are merged into one cluster.
    pub merge_radius: f64,
    /// Stop once no anchor moves more than `1e-5 · bandwidth`.
    pub early_exit: bool,
    /// Worker threads for the shift kernel; 0 = all cores, 1 = inline.
    pub workers: usize,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self {
            anchors_per_dim: 10,
            dim: 2,
            bandwidth: 0.5,
            iterations: 10,
            density_fraction: 0.1,
            merge_radius: 0.5,
            early_exit: false,
            workers: 1,
        }
    }
}

impl MeanShiftConfig {
    /// Defaults with the given bandwidth, also used as the merge radius.
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            merge_radius: bandwidth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors_per_dim < 2 {
            return Err(Error::invalid("anchors per dimension must be at least 2"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.density_fraction) {
            return Err(Error::invalid("density fraction must lie in [0, 1)"));
        }
        if !(self.merge_radius > 0.0 && self.merge_radius.is_finite()) {
            return Err(Error::invalid("merge radius must be positive"));
        }
        match self.anchors_per_dim.checked_pow(self.dim as u32) {
            Some(m) if m <= MAX_ANCHORS => Ok(()),
            _ => Err(Error::invalid(format!(
                "{}^{} anchors exceeds the limit of {MAX_ANCHORS}",
                self.anchors_per_dim, self.dim
            ))),
        }
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors_per_dim.pow(self.dim as u32)
    }
}

/// Anchor positions (`M x dim`) and their densities `Z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorState {
    dim: usize,
    positions: Vec<f64>,
    densities: Vec<f64>,
}

impl AnchorState {
    pub fn new(dim: usize, positions: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.len() != densities.len() * dim {
            return Err(Error::invalid("anchor positions and densities disagree"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("anchor positions must be finite"));
        }
        if densities.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::invalid("anchor densities must be non-negative"));
        }
        Ok(Self {
            dim,
            positions,
            densities,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }
}

/// Merged clusters: one center per plane instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    dim: usize,
    centers: Vec<f64>,
    member_anchor_counts: Vec<usize>,
}

impl ClusterSet {
    pub fn new(dim: usize, centers: Vec<f64>, member_anchor_counts: Vec<usize>) -> Result<Self> {
        if dim == 0 || centers.len() != member_anchor_counts.len() * dim {
            return Err(Error::invalid("cluster centers and counts disagree"));
        }
        Ok(Self {
            dim,
            centers,
            member_anchor_counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of clusters `C̃`.
    pub fn len(&self) -> usize {
        self.member_anchor_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_anchor_counts.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn member_anchor_counts(&self) -> &[usize] {
        &self.member_anchor_counts
    }
}

/// Timing and bookkeeping of one clustering run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    /// Shift iterations actually executed.
    pub iterations: usize,
    /// Anchors (or seeds) alive during the shift phase.
    pub seeds: usize,
    /// Wall time of the shift phase alone.
    pub shift_time: Duration,
    /// Wall time of the whole run.
    pub total_time: Duration,
}

#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub clusters: ClusterSet,
    pub assignment: SoftAssignment,
    pub stats: RunStats,
}

/// Gaussian potential `exp(-m² / 2b²) / (√(2π) b)` with `m = ‖anchor - embedding‖`.
pub fn pairwise_potential(anchor: &[f64], embedding: &[f64], bandwidth: f64) -> f64 {
    Kernel::new(bandwidth).eval(sq_dist(anchor, embedding))
}

#[derive(Clone, Copy)]
struct Kernel {
    scale: f64,
    inv_two_b2: f64,
}

impl Kernel {
    fn new(bandwidth: f64) -> Self {
        Self {
            scale: 1.0 / ((2.0 * PI).sqrt() * bandwidth),
            inv_two_b2: 1.0 / (2.0 * bandwidth * bandwidth),
        }
    }

    #[inline]
    fn eval(&self, m2: f64) -> f64 {
        self.scale * (-m2 * self.inv_two_b2).exp()
    }
}

fn check_inputs(embeddings: &EmbeddingMap, mask: &PlanarMask, dim: usize) -> Result<()> {
    embeddings
        .grid()
        .ensure_same(&mask.grid(), "embeddings vs mask")?;
    if embeddings.dim() != dim {
        return Err(Error::invalid(format!(
            "config dimension {dim} does not match embedding dimension {}",
            embeddings.dim()
        )));
    }
    if mask.planar_count() == 0 {
        return Err(Error::NoPlanarPixels);
    }
    Ok(())
}

/// One shift step for a single position: returns the weighted mean and `Z`.
#[inline]
fn shift_one(position: &[f64], points: &[f64], dim: usize, kernel: Kernel, out: &mut [f64]) -> f64 {
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut z = 0.0;
    for x in points.chunks_exact(dim) {
        let p = kernel.eval(sq_dist(position, x));
        z += p;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o += p * xi;
        }
    }
    if z < ZERO_DENSITY {
        out.copy_from_slice(position);
    } else {
        out.iter_mut().for_each(|o| *o /= z);
    }
    z
}

fn density_one(position: &[f64], points: &[f64], dim: usize, kernel: Kernel) -> f64 {
    points
        .chunks_exact(dim)
        .map(|x| kernel.eval(sq_dist(position, x)))
        .sum()
}

fn densities(
    positions: &[f64],
    points: &[f64],
    dim: usize,
    kernel: Kernel,
    parallel: bool,
) -> Vec<f64> {
    if parallel {
        positions
            .par_chunks_exact(dim)
            .map(|a| density_one(a, points, dim, kernel))
            .collect()
    } else {
        positions
            .chunks_exact(dim)
            .map(|a| density_one(a, points, dim, kernel))
            .collect()
    }
}

/// Shifts every position in place; returns the new densities and the largest
/// displacement.
fn shift_all(
    positions: &mut [f64],
    points: &[f64],
    dim: usize,
    kernel: Kernel,
    parallel: bool,
) -> (Vec<f64>, f64) {
    let step = |a: &mut [f64]| -> (f64, f64) {
        let mut next = vec![0.0; dim];
        let z = shift_one(a, points, dim, kernel, &mut next);
        let moved = sq_dist(a, &next).sqrt();
        a.copy_from_slice(&next);
        (z, moved)
    };
    let results: Vec<(f64, f64)> = if parallel {
        positions.par_chunks_exact_mut(dim).map(step).collect()
    } else {
        positions.chunks_exact_mut(dim).map(step).collect()
    };
    let max_move = results.iter().map(|r| r.1).fold(0.0, f64::max);
    (results.into_iter().map(|r| r.0).collect(), max_move)
}

fn grid_positions(lo: &[f64], hi: &[f64], k: usize) -> Vec<f64> {
    let dim = lo.len();
    let count = k.pow(dim as u32);
    let mut positions = Vec::with_capacity(count * dim);
    for j in 0..count {
        let mut code = j;
        for axis in 0..dim {
            let step = code % k;
            code /= k;
            let extent = hi[axis] - lo[axis];
            positions.push(if extent > 0.0 {
                lo[axis] + extent * step as f64 / (k - 1) as f64
            } else {
                lo[axis]
            });
        }
    }
    positions
}

fn bounding_box(points: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in points.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    (lo, hi)
}

fn init_packed(points: &[f64], config: &MeanShiftConfig, parallel: bool) -> AnchorState {
    let dim = config.dim;
    let (lo, hi) = bounding_box(points, dim);
    let positions = grid_positions(&lo, &hi, config.anchors_per_dim);
    let densities = densities(
        &positions,
        points,
        dim,
        Kernel::new(config.bandwidth),
        parallel,
    );
    AnchorState {
        dim,
        positions,
        densities,
    }
}

/// `k^d` anchors on a uniform grid spanning the bounding box of the planar
/// embeddings (endpoints included), with their initial densities.
pub fn init_anchors(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    config: &MeanShiftConfig,
) -> Result<AnchorState> {
    config.validate()?;
    check_inputs(embeddings, mask, config.dim)?;
    let (points, _) = embeddings.gather(mask);
    Ok(init_packed(&points, config, false))
}

/// One mean-shift step of every anchor toward the potential-weighted mean of
/// the planar embeddings. Anchors without support stay where they are.
pub fn shift_anchors(
    state: &AnchorState,
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    config: &MeanShiftConfig,
) -> Result<AnchorState> {
    config.validate()?;
    check_inputs(embeddings, mask, config.dim)?;
    if state.dim != config.dim {
        return Err(Error::invalid("anchor dimension does not match config"));
    }
    let (points, _) = embeddings.gather(mask);
    let mut positions = state.positions.clone();
    let (densities, _) = with_workers(config.workers, |par| {
        shift_all(
            &mut positions,
            &points,
            config.dim,
            Kernel::new(config.bandwidth),
            par,
        )
    });
    Ok(AnchorState {
        dim: state.dim,
        positions,
        densities,
    })
}

/// Keeps anchors whose density is at least `density_fraction` of the largest.
/// The densest anchor always survives.
pub fn filter_low_density(state: &AnchorState, config: &MeanShiftConfig) -> AnchorState {
    let max = state.densities.iter().copied().fold(0.0, f64::max);
    let argmax = state.densities.iter().position(|&z| z == max).unwrap_or(0);
    let threshold = config.density_fraction * max;
    let mut positions = Vec::new();
    let mut densities = Vec::new();
    for (j, &z) in state.densities.iter().enumerate() {
        if z >= threshold || j == argmax {
            positions.extend_from_slice(state.position(j));
            densities.push(z);
        }
    }
    AnchorState {
        dim: state.dim,
        positions,
        densities,
    }
}

/// Groups points (rows of `points`) into clusters: connected components of
/// the graph linking points closer than `radius`, with components whose means
/// end up closer than `radius` joined as well. Centers are member means.
fn merge_points(points: &[f64], dim: usize, radius: f64) -> (ClusterSet, Vec<usize>) {
    let n = points.len() / dim;
    let mut sets = DisjointSet::new(n);
    union_within_radius(&mut sets, points, dim, radius);
    loop {
        let (ids, count) = sets.component_ids();
        let (centers, counts) = component_means(points, dim, &ids, count);
        let mut joined = false;
        let r2 = radius * radius;
        let rep: Vec<usize> = {
            let mut rep = vec![usize::MAX; count];
            for (i, &c) in ids.iter().enumerate() {
                if rep[c] == usize::MAX {
                    rep[c] = i;
                }
            }
            rep
        };
        for a in 0..count {
            for b in (a + 1)..count {
                if sq_dist(
                    &centers[a * dim..(a + 1) * dim],
                    &centers[b * dim..(b + 1) * dim],
                ) < r2
                {
                    joined |= sets.union(rep[a], rep[b]);
                }
            }
        }
        if !joined {
            return (
                ClusterSet {
                    dim,
                    centers,
                    member_anchor_counts: counts,
                },
                ids,
            );
        }
    }
}

/// Classic mode deduplication: modes are ranked by how many points lie within
/// `radius` of them, and each is kept only if no stronger kept mode lies
/// within `radius`. Unlike transitive merging this cannot chain two modes
/// through seeds stranded between them.
fn suppress_modes(modes: &[f64], points: &[f64], dim: usize, radius: f64) -> ClusterSet {
    let support = count_within_radius(modes, points, dim, radius);
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| support[b].cmp(&support[a]).then(a.cmp(&b)));
    let r2 = radius * radius;
    let mut centers: Vec<f64> = Vec::new();
    for &m in &order {
        let mode = &modes[m * dim..(m + 1) * dim];
        if centers.chunks_exact(dim).all(|c| sq_dist(c, mode) >= r2) {
            centers.extend_from_slice(mode);
        }
    }
    let mut counts = vec![0usize; centers.len() / dim];
    for mode in modes.chunks_exact(dim) {
        let nearest = centers
            .chunks_exact(dim)
            .map(|c| sq_dist(c, mode))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (j, d)| if d < best.1 { (j, d) } else { best },
            );
        counts[nearest.0] += 1;
    }
    ClusterSet {
        dim,
        centers,
        member_anchor_counts: counts,
    }
}

fn component_means(
    points: &[f64],
    dim: usize,
    ids: &[usize],
    count: usize,
) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; count * dim];
    let mut counts = vec![0usize; count];
    for (x, &c) in points.chunks_exact(dim).zip(ids) {
        counts[c] += 1;
        for a in 0..dim {
            sums[c * dim + a] += x[a];
        }
    }
    for c in 0..count {
        for a in 0..dim {
            sums[c * dim + a] /= counts[c] as f64;
        }
    }
    (sums, counts)
}

/// Merges anchors closer than the merge radius (transitively) into clusters
/// centered at the mean of their member anchors.
pub fn merge_anchors(state: &AnchorState, config: &MeanShiftConfig) -> ClusterSet {
    merge_points(&state.positions, state.dim, config.merge_radius).0
}

fn soft_assign_with(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    clusters: &ClusterSet,
    parallel: bool,
) -> SoftAssignment {
    let c = clusters.len();
    let dim = clusters.dim;
    let grid = embeddings.grid();
    let mut weights = vec![0.0; grid.len() * c];
    let fill = |(i, row): (usize, &mut [f64])| {
        if !mask.is_planar(i) {
            return;
        }
        let x = embeddings.pixel(i);
        for (j, w) in row.iter_mut().enumerate() {
            *w = sq_dist(x, &clusters.centers[j * dim..(j + 1) * dim]).sqrt();
        }
        let nearest = row.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for w in row.iter_mut() {
            *w = (nearest - *w).exp();
            total += *w;
        }
        row.iter_mut().for_each(|w| *w /= total);
    };
    if parallel {
        weights.par_chunks_exact_mut(c).enumerate().for_each(fill);
    } else {
        weights.chunks_exact_mut(c).enumerate().for_each(fill);
    }
    SoftAssignment::from_parts_unchecked(grid, c, weights, mask.mask().to_vec())
}

/// Softmax over negative embedding-to-center distances for every planar
/// pixel; non-planar rows are zero.
pub fn soft_assign(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    clusters: &ClusterSet,
) -> Result<SoftAssignment> {
    embeddings
        .grid()
        .ensure_same(&mask.grid(), "embeddings vs mask")?;
    if clusters.is_empty() {
        return Err(Error::invalid("soft assignment needs at least one cluster"));
    }
    if clusters.dim != embeddings.dim() {
        return Err(Error::invalid("cluster and embedding dimensions differ"));
    }
    Ok(soft_assign_with(embeddings, mask, clusters, false))
}

/// Full anchor mean shift: init, one density filter, `T` shifts, merge, soft
/// assignment.
pub fn cluster(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    config: &MeanShiftConfig,
) -> Result<(ClusterSet, SoftAssignment)> {
    let run = cluster_with_stats(embeddings, mask, config)?;
    Ok((run.clusters, run.assignment))
}

pub fn cluster_with_stats(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    config: &MeanShiftConfig,
) -> Result<ClusterRun> {
    config.validate()?;
    check_inputs(embeddings, mask, config.dim)?;
    let start = Instant::now();
    let (points, _) = embeddings.gather(mask);
    let dim = config.dim;
    let kernel = Kernel::new(config.bandwidth);
    let stop_below = 1e-5 * config.bandwidth;

    Ok(with_workers(config.workers, |par| {
        let initial = init_packed(&points, config, par);
        let mut state = filter_low_density(&initial, config);
        let seeds = state.len();

        let shift_start = Instant::now();
        let mut iterations = 0;
        for _ in 0..config.iterations {
            let (z, moved) = shift_all(&mut state.positions, &points, dim, kernel, par);
            state.densities = z;
            iterations += 1;
            if config.early_exit && moved < stop_below {
                break;
            }
        }
        let shift_time = shift_start.elapsed();

        let clusters = merge_anchors(&state, config);
        let assignment = soft_assign_with(embeddings, mask, &clusters, par);
        ClusterRun {
            clusters,
            assignment,
            stats: RunStats {
                iterations,
                seeds,
                shift_time,
                total_time: start.elapsed(),
            },
        }
    }))
}

/// Classic mean shift: one seed per planar pixel, Gaussian kernel, iterate
/// until every seed moves less than `tol` (or `max_iters`), suppress modes
/// within `bandwidth` of a better-supported mode, then soft-assign like
/// [`cluster`].
pub fn vanilla_mean_shift(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    bandwidth: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(ClusterSet, SoftAssignment)> {
    let run = vanilla_mean_shift_with_stats(embeddings, mask, bandwidth, max_iters, tol, 1)?;
    Ok((run.clusters, run.assignment))
}

pub fn vanilla_mean_shift_with_stats(
    embeddings: &EmbeddingMap,
    mask: &PlanarMask,
    bandwidth: f64,
    max_iters: usize,
    tol: f64,
    workers: usize,
) -> Result<ClusterRun> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let dim = embeddings.dim();
    check_inputs(embeddings, mask, dim)?;
    let start = Instant::now();
    let (points, _) = embeddings.gather(mask);
    let kernel = Kernel::new(bandwidth);

    Ok(with_workers(workers, |par| {
        let n = points.len() / dim;
        let mut seeds = points.clone();
        let mut active = vec![true; n];
        let shift_start = Instant::now();
        let mut iterations = 0;
        while iterations < max_iters && active.iter().any(|&a| a) {
            let step = |(seed, live): (&mut [f64], &mut bool)| -> f64 {
                if !*live {
                    return 0.0;
                }
                let mut next = vec![0.0; dim];
                shift_one(seed, &points, dim, kernel, &mut next);
                let moved = sq_dist(seed, &next).sqrt();
                seed.copy_from_slice(&next);
                if moved < tol {
                    *live = false;
                }
                moved
            };
            if par {
                seeds
                    .par_chunks_exact_mut(dim)
                    .zip(active.par_iter_mut())
                    .for_each(|p| {
                        step(p);
                    });
            } else {
                seeds
                    .chunks_exact_mut(dim)
                    .zip(active.iter_mut())
                    .for_each(|p| {
                        step(p);
                    });
            }
            iterations += 1;
        }
        let shift_time = shift_start.elapsed();

        let clusters = suppress_modes(&seeds, &points, dim, bandwidth);
        let assignment = soft_assign_with(embeddings, mask, &clusters, par);
        ClusterRun {
            clusters,
            assignment,
            stats: RunStats {
                iterations,
                seeds: n,
                shift_time,
                total_time: start.elapsed(),
            },
        }
    }))
}

/// Argmax decode of a soft assignment (ties go to the lowest cluster index).
///
/// Clusters that win no pixel get no label, so labels stay contiguous; the
/// second value maps label `l` to cluster index `map[l - 1]`.
pub fn hard_labels_with_map(assignment: &SoftAssignment) -> (InstanceSegmentation, Vec<usize>) {
    let grid = assignment.grid();
    let c = assignment.clusters();
    let mut winner = vec![usize::MAX; grid.len()];
    let mut used = vec![false; c];
    for (i, w) in winner.iter_mut().enumerate() {
        if !assignment.is_planar(i) || c == 0 {
            continue;
        }
        let row = assignment.row(i);
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        *w = best;
        used[best] = true;
    }
    let mut label_of = vec![0u32; c];
    let mut map = Vec::new();
    for j in 0..c {
        if used[j] {
            map.push(j);
            label_of[j] = map.len() as u32;
        }
    }
    let labels = winner
        .iter()
        .map(|&w| if w == usize::MAX { 0 } else { label_of[w] })
        .collect();
    let seg =
        InstanceSegmentation::new(grid, labels).expect("labels are contiguous by construction");
    (seg, map)
}

pub fn hard_labels(assignment: &SoftAssignment) -> InstanceSegmentation {
    hard_labels_with_map(assignment).0
}
