//! C ABI over `planar-recon`.
//!
//! Conventions:
//! - every fallible call returns a [`PrStatus`]; on failure
//!   [`pr_last_error_message`] describes the most recent error on the thread;
//! - arrays are caller-owned, row-major, and their lengths are passed
//!   explicitly; output arrays must hold exactly the documented length;
//! - clustering results live behind an opaque [`PrClusterResult`] handle that
//!   must be released with [`pr_cluster_result_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use planar_recon::clustering::{self, MeanShiftConfig};
use planar_recon::geometry::{backproject, depth_from_plane, Plane};
use planar_recon::losses::{balanced_bce, embedding_loss, Margins};
use planar_recon::metrics::{
    rand_index_labels, segmentation_covering_labels, variation_of_information_labels,
};
use planar_recon::{
    CameraIntrinsics, ClusterSet, DepthMap, EmbeddingMap, Error, ImageGrid, InstanceSegmentation,
    PlanarMask, PlanarProbabilityMap, SoftAssignment,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    GridMismatch = 3,
    NoPlanarPixels = 4,
    EmptyInstance = 5,
    DegenerateInput = 6,
    BufferSize = 7,
    Io = 8,
    Panic = 9,
}

/// Mean shift settings; see [`pr_mean_shift_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrMeanShiftConfig {
    pub anchors_per_dim: usize,
    pub bandwidth: f64,
    pub iterations: usize,
    pub density_fraction: f64,
    pub merge_radius: f64,
    /// 0 = all cores, 1 = caller's thread.
    pub workers: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Opaque clustering result.
pub struct PrClusterResult {
    clusters: ClusterSet,
    assignment: SoftAssignment,
    labels: InstanceSegmentation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(PrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Generator(_) => PrStatus::InvalidInput,
            Error::GridMismatch(_) => PrStatus::GridMismatch,
            Error::NoPlanarPixels => PrStatus::NoPlanarPixels,
            Error::EmptyInstance(_) => PrStatus::EmptyInstance,
            Error::DegeneratePointSet | Error::DegenerateClassBalance | Error::NoValidDepth => {
                PrStatus::DegenerateInput
            }
            Error::Io { .. } | Error::Format { .. } => PrStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PrStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PrStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            PrStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out_value<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn check_len(actual: usize, expected: usize, what: &str) -> Result<(), Failure> {
    if actual != expected {
        return Err(Failure(
            PrStatus::BufferSize,
            format!("{what} holds {actual} values, expected {expected}"),
        ));
    }
    Ok(())
}

fn pixels(height: usize, width: usize) -> Result<(ImageGrid, usize), Failure> {
    let grid = ImageGrid::new(height, width)?;
    Ok((grid, grid.len()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pr_mean_shift_config_default() -> PrMeanShiftConfig {
    let d = MeanShiftConfig::default();
    PrMeanShiftConfig {
        anchors_per_dim: d.anchors_per_dim,
        bandwidth: d.bandwidth,
        iterations: d.iterations,
        density_fraction: d.density_fraction,
        merge_radius: d.merge_radius,
        workers: d.workers,
    }
}

fn finish(
    out: *mut *mut PrClusterResult,
    (clusters, assignment): (ClusterSet, SoftAssignment),
) -> Result<(), Failure> {
    let labels = clustering::hard_labels(&assignment);
    let handle = Box::new(PrClusterResult {
        clusters,
        assignment,
        labels,
    });
    // SAFETY: checked non-null by the caller of `finish`.
    unsafe { *out = Box::into_raw(handle) };
    Ok(())
}

unsafe fn embedding_inputs(
    embeddings: *const f64,
    probs: *const f64,
    height: usize,
    width: usize,
    dim: usize,
    mask_threshold: f64,
) -> Result<(EmbeddingMap, PlanarMask), Failure> {
    let (grid, n) = pixels(height, width)?;
    let len = n
        .checked_mul(dim)
        .ok_or_else(|| Failure(PrStatus::InvalidInput, "embedding size overflows".into()))?;
    let values = input(embeddings, len, "embeddings")?;
    let probs = input(probs, n, "probs")?;
    let emb = EmbeddingMap::new(grid, dim, values.to_vec())?;
    let mask = PlanarProbabilityMap::new(grid, probs.to_vec())?.threshold(mask_threshold);
    Ok((emb, mask))
}

/// Anchor mean shift over the embeddings of pixels whose probability is at
/// least `mask_threshold`.
///
/// # Safety
/// `embeddings` holds `height * width * dim` values, `probs` holds
/// `height * width`, `config` may be null for defaults, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pr_cluster(
    embeddings: *const f64,
    probs: *const f64,
    height: usize,
    width: usize,
    dim: usize,
    mask_threshold: f64,
    config: *const PrMeanShiftConfig,
    out: *mut *mut PrClusterResult,
) -> PrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = config
            .as_ref()
            .copied()
            .unwrap_or_else(|| pr_mean_shift_config_default());
        let config = MeanShiftConfig {
            anchors_per_dim: c.anchors_per_dim,
            dim,
            bandwidth: c.bandwidth,
            iterations: c.iterations,
            density_fraction: c.density_fraction,
            merge_radius: c.merge_radius,
            early_exit: false,
            workers: c.workers,
        };
        let (emb, mask) = embedding_inputs(embeddings, probs, height, width, dim, mask_threshold)?;
        finish(out, clustering::cluster(&emb, &mask, &config)?)
    })
}

/// Classic per-pixel mean shift, for comparison with [`pr_cluster`].
///
/// # Safety
/// As [`pr_cluster`].
#[no_mangle]
pub unsafe extern "C" fn pr_vanilla_mean_shift(
    embeddings: *const f64,
    probs: *const f64,
    height: usize,
    width: usize,
    dim: usize,
    mask_threshold: f64,
    bandwidth: f64,
    max_iters: usize,
    tol: f64,
    out: *mut *mut PrClusterResult,
) -> PrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (emb, mask) = embedding_inputs(embeddings, probs, height, width, dim, mask_threshold)?;
        finish(
            out,
            clustering::vanilla_mean_shift(&emb, &mask, bandwidth, max_iters, tol)?,
        )
    })
}

/// Number of cluster centers (columns of the soft assignment).
///
/// # Safety
/// `result` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_cluster_count(result: *const PrClusterResult) -> usize {
    result.as_ref().map_or(0, |r| r.clusters.len())
}

/// Number of distinct nonzero hard labels.
///
/// # Safety
/// `result` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_instance_count(result: *const PrClusterResult) -> usize {
    result.as_ref().map_or(0, |r| r.labels.count())
}

/// Copies the centers (`cluster_count * dim` values).
///
/// # Safety
/// `result` is a live handle; `out` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_centers(
    result: *const PrClusterResult,
    out: *mut f64,
    len: usize,
) -> PrStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        check_len(len, r.clusters.centers().len(), "centers buffer")?;
        output(out, len, "out")?.copy_from_slice(r.clusters.centers());
        Ok(())
    })
}

/// Copies the hard labels (`height * width` values, 0 = non-planar).
///
/// # Safety
/// `result` is a live handle; `out` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_labels(
    result: *const PrClusterResult,
    out: *mut u32,
    len: usize,
) -> PrStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        check_len(len, r.labels.labels().len(), "labels buffer")?;
        output(out, len, "out")?.copy_from_slice(r.labels.labels());
        Ok(())
    })
}

/// Copies the soft assignment (`height * width * cluster_count` values).
///
/// # Safety
/// `result` is a live handle; `out` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_assignment(
    result: *const PrClusterResult,
    out: *mut f64,
    len: usize,
) -> PrStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        check_len(len, r.assignment.weights().len(), "assignment buffer")?;
        output(out, len, "out")?.copy_from_slice(r.assignment.weights());
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `result` came from [`pr_cluster`] or [`pr_vanilla_mean_shift`] and is
/// freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pr_cluster_result_free(result: *mut PrClusterResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

fn intrinsics(intr: *const PrIntrinsics) -> Result<CameraIntrinsics, Failure> {
    // SAFETY: caller guarantees `intr` is null or valid.
    let i = unsafe { intr.as_ref() }.ok_or_else(|| null("intrinsics"))?;
    Ok(CameraIntrinsics::new(i.fx, i.fy, i.cx, i.cy)?)
}

/// Renders the depth of plane `n·Q = 1`; pixels whose ray misses get
/// `valid = 0` and depth 0.
///
/// # Safety
/// `plane` holds 3 values; `depth` and `valid` hold `height * width`.
#[no_mangle]
pub unsafe extern "C" fn pr_depth_from_plane(
    plane: *const f64,
    height: usize,
    width: usize,
    intr: *const PrIntrinsics,
    depth: *mut f64,
    valid: *mut u8,
) -> PrStatus {
    guard(|| {
        let n = input(plane, 3, "plane")?;
        let plane = Plane::new([n[0], n[1], n[2]])?;
        let (grid, len) = pixels(height, width)?;
        let map = depth_from_plane(&plane, grid, &intrinsics(intr)?);
        output(depth, len, "depth")?.copy_from_slice(map.depth());
        for (v, &ok) in output(valid, len, "valid")?.iter_mut().zip(map.valid()) {
            *v = ok as u8;
        }
        Ok(())
    })
}

/// Lifts valid depths (`> 0` and finite) to camera-frame points; invalid
/// pixels get `(0, 0, 0)`.
///
/// # Safety
/// `depth` holds `height * width` values and `points` three times that.
#[no_mangle]
pub unsafe extern "C" fn pr_backproject(
    depth: *const f64,
    height: usize,
    width: usize,
    intr: *const PrIntrinsics,
    points: *mut f64,
) -> PrStatus {
    guard(|| {
        let (grid, len) = pixels(height, width)?;
        let map = DepthMap::from_depths(grid, input(depth, len, "depth")?.to_vec())?;
        let cloud = backproject(&map, &intrinsics(intr)?);
        let out = output(points, len * 3, "points")?;
        for (dst, src) in out.chunks_exact_mut(3).zip(cloud.points()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    })
}

/// Class-balanced cross-entropy of planar probabilities; `grad` (may be null)
/// receives `d loss / d probs`.
///
/// # Safety
/// `probs`, `mask` and a non-null `grad` hold `height * width` values.
#[no_mangle]
pub unsafe extern "C" fn pr_balanced_bce(
    probs: *const f64,
    mask: *const u8,
    height: usize,
    width: usize,
    value: *mut f64,
    grad: *mut f64,
) -> PrStatus {
    guard(|| {
        let (grid, len) = pixels(height, width)?;
        let probs = PlanarProbabilityMap::new(grid, input(probs, len, "probs")?.to_vec())?;
        let mask = PlanarMask::new(
            grid,
            input(mask, len, "mask")?.iter().map(|&m| m != 0).collect(),
        )?;
        let loss = balanced_bce(&probs, &mask)?;
        *out_value(value, "value")? = loss.value;
        if !grad.is_null() {
            output(grad, len, "grad")?.copy_from_slice(&loss.grad);
        }
        Ok(())
    })
}

/// Pull plus push embedding loss against contiguous labels (0 = non-planar);
/// `grad` (may be null) receives `d loss / d embeddings`.
///
/// # Safety
/// `embeddings` and a non-null `grad` hold `height * width * dim` values,
/// `labels` holds `height * width`.
#[no_mangle]
pub unsafe extern "C" fn pr_embedding_loss(
    embeddings: *const f64,
    labels: *const u32,
    height: usize,
    width: usize,
    dim: usize,
    delta_v: f64,
    delta_d: f64,
    value: *mut f64,
    grad: *mut f64,
) -> PrStatus {
    guard(|| {
        let (grid, len) = pixels(height, width)?;
        let emb = EmbeddingMap::new(
            grid,
            dim,
            input(embeddings, len * dim, "embeddings")?.to_vec(),
        )?;
        let seg = InstanceSegmentation::new(grid, input(labels, len, "labels")?.to_vec())?;
        let loss = embedding_loss(&emb, &seg, &Margins::new(delta_v, delta_d)?)?;
        *out_value(value, "value")? = loss.value;
        if !grad.is_null() {
            output(grad, len * dim, "grad")?.copy_from_slice(&loss.grad);
        }
        Ok(())
    })
}

unsafe fn partition_pair(
    a: *const u32,
    b: *const u32,
    len: usize,
    exclude_nonplanar: bool,
) -> Result<(Vec<u32>, Vec<u32>), Failure> {
    let a = input(a, len, "a")?;
    let b = input(b, len, "b")?;
    Ok(a.iter()
        .zip(b)
        .filter(|(&x, _)| !exclude_nonplanar || x != 0)
        .map(|(&x, &y)| (x, y))
        .unzip())
}

/// Rand index of two labelings of `len` pixels. With `exclude_nonplanar`,
/// pixels labeled 0 in `a` are ignored.
///
/// # Safety
/// `a` and `b` hold `len` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn pr_rand_index(
    a: *const u32,
    b: *const u32,
    len: usize,
    exclude_nonplanar: bool,
    out: *mut f64,
) -> PrStatus {
    guard(|| {
        let (x, y) = partition_pair(a, b, len, exclude_nonplanar)?;
        *out_value(out, "out")? = rand_index_labels(&x, &y);
        Ok(())
    })
}

/// Variation of information (nats) of two labelings.
///
/// # Safety
/// As [`pr_rand_index`].
#[no_mangle]
pub unsafe extern "C" fn pr_variation_of_information(
    a: *const u32,
    b: *const u32,
    len: usize,
    exclude_nonplanar: bool,
    out: *mut f64,
) -> PrStatus {
    guard(|| {
        let (x, y) = partition_pair(a, b, len, exclude_nonplanar)?;
        *out_value(out, "out")? = variation_of_information_labels(&x, &y);
        Ok(())
    })
}

/// Segmentation covering of ground truth `gt` by `pred`.
///
/// # Safety
/// As [`pr_rand_index`].
#[no_mangle]
pub unsafe extern "C" fn pr_segmentation_covering(
    gt: *const u32,
    pred: *const u32,
    len: usize,
    exclude_nonplanar: bool,
    out: *mut f64,
) -> PrStatus {
    guard(|| {
        let (x, y) = partition_pair(gt, pred, len, exclude_nonplanar)?;
        *out_value(out, "out")? = segmentation_covering_labels(&x, &y);
        Ok(())
    })
}
