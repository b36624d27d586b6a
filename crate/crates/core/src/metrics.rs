//! Evaluation: plane/pixel recall curves, partition similarity (RI, VI, SC),
//! depth accuracy and plane-count statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normal_angle, Plane};
use crate::types::{CameraIntrinsics, DepthMap, InstanceSegmentation};

/// A predicted instance matches a ground-truth plane above this IOU.
pub const MATCH_IOU: f64 = 0.5;

/// Absorbs rounding when a geometric error equals a grid threshold.
pub const THRESHOLD_SLACK: f64 = 1e-9;

/// Depth thresholds 0.05 m to 0.60 m in steps of 0.05 m.
pub fn depth_thresholds() -> Vec<f64> {
    (1..=12).map(|k| k as f64 * 0.05).collect()
}

/// Normal thresholds 0° to 30° in steps of 2.5°.
pub fn normal_thresholds() -> Vec<f64> {
    (0..=12).map(|k| k as f64 * 2.5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    /// Percent of ground-truth planes correctly predicted.
    pub plane_recall: Vec<f64>,
    /// Percent of ground-truth planar pixels inside correctly predicted planes.
    pub pixel_recall: Vec<f64>,
}

impl RecallCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["threshold", "plane_recall", "pixel_recall"])
            .map_err(io)?;
        for k in 0..self.thresholds.len() {
            w.write_record(&[
                self.thresholds[k].to_string(),
                self.plane_recall[k].to_string(),
                self.pixel_recall[k].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Dense label co-occurrence counts; row = label in `a`, column = label in `b`.
#[derive(Debug, Clone)]
struct Contingency {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Contingency {
    fn new(a: &[u32], b: &[u32]) -> Self {
        let rows = a.iter().copied().max().map_or(1, |m| m as usize + 1);
        let cols = b.iter().copied().max().map_or(1, |m| m as usize + 1);
        let mut counts = vec![0u64; rows * cols];
        for (&x, &y) in a.iter().zip(b) {
            counts[x as usize * cols + y as usize] += 1;
        }
        Self {
            rows,
            cols,
            counts,
            total: a.len() as u64,
        }
    }

    fn at(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.cols + c]
    }

    fn row_sums(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.at(r, c)).sum())
            .collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.at(r, c)).sum())
            .collect()
    }
}

/// `IOU[p][g]` between predicted instance `p + 1` and ground-truth instance
/// `g + 1`; label 0 takes part on neither side.
pub fn iou_matrix(pred: &InstanceSegmentation, gt: &InstanceSegmentation) -> Result<Vec<Vec<f64>>> {
    pred.grid()
        .ensure_same(&gt.grid(), "prediction vs ground truth")?;
    let table = Contingency::new(pred.labels(), gt.labels());
    let pred_sizes = pred.sizes();
    let gt_sizes = gt.sizes();
    Ok((1..=pred.count())
        .map(|p| {
            (1..=gt.count())
                .map(|g| {
                    let inter = if p < table.rows && g < table.cols {
                        table.at(p, g)
                    } else {
                        0
                    };
                    let union = pred_sizes[p] as u64 + gt_sizes[g] as u64 - inter;
                    if union == 0 {
                        0.0
                    } else {
                        inter as f64 / union as f64
                    }
                })
                .collect()
        })
        .collect())
}

/// For each ground-truth plane, the predicted instance (0-based) whose IOU
/// exceeds [`MATCH_IOU`], if any.
fn matches(iou: &[Vec<f64>], gt_count: usize) -> Vec<Option<usize>> {
    (0..gt_count)
        .map(|g| (0..iou.len()).find(|&p| iou[p][g] > MATCH_IOU))
        .collect()
}

fn curve_from_errors(
    errors: &[Option<f64>],
    gt_sizes: &[usize],
    thresholds: &[f64],
) -> RecallCurve {
    let planes = errors.len();
    let planar_pixels: usize = gt_sizes.iter().sum();
    let mut plane_recall = Vec::with_capacity(thresholds.len());
    let mut pixel_recall = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut correct = 0usize;
        let mut pixels = 0usize;
        for (g, e) in errors.iter().enumerate() {
            if matches!(e, Some(err) if *err <= t + THRESHOLD_SLACK) {
                correct += 1;
                pixels += gt_sizes[g];
            }
        }
        plane_recall.push(if planes == 0 {
            0.0
        } else {
            100.0 * correct as f64 / planes as f64
        });
        pixel_recall.push(if planar_pixels == 0 {
            0.0
        } else {
            100.0 * pixels as f64 / planar_pixels as f64
        });
    }
    RecallCurve {
        thresholds: thresholds.to_vec(),
        plane_recall,
        pixel_recall,
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("thresholds must be ascending"));
    }
    Ok(())
}

/// Plane and pixel recall with the mean absolute depth difference over the
/// overlap region as the geometric test. `pred_planes[l - 1]` is the plane of
/// predicted label `l`.
pub fn recall_depth(
    pred_seg: &InstanceSegmentation,
    pred_planes: &[Plane],
    gt_seg: &InstanceSegmentation,
    gt_depth: &DepthMap,
    intr: &CameraIntrinsics,
    thresholds: &[f64],
) -> Result<RecallCurve> {
    check_thresholds(thresholds)?;
    gt_seg
        .grid()
        .ensure_same(&gt_depth.grid(), "labels vs depth")?;
    if pred_planes.len() < pred_seg.count() {
        return Err(Error::invalid(format!(
            "{} predicted planes for {} predicted instances",
            pred_planes.len(),
            pred_seg.count()
        )));
    }
    let iou = iou_matrix(pred_seg, gt_seg)?;
    let matched = matches(&iou, gt_seg.count());
    let grid = gt_seg.grid();

    let mut sums = vec![0.0; gt_seg.count()];
    let mut counts = vec![0usize; gt_seg.count()];
    for i in 0..grid.len() {
        let g = gt_seg.labels()[i] as usize;
        let p = pred_seg.labels()[i] as usize;
        if g == 0 || p == 0 || matched[g - 1] != Some(p - 1) {
            continue;
        }
        let Some(z) = gt_depth.get(i) else { continue };
        let (row, col) = grid.coords(i);
        if let Some(zp) = pred_planes[p - 1].depth_at(intr, col as f64, row as f64) {
            sums[g - 1] += (zp - z).abs();
            counts[g - 1] += 1;
        }
    }
    let errors: Vec<Option<f64>> = (0..gt_seg.count())
        .map(|g| (matched[g].is_some() && counts[g] > 0).then(|| sums[g] / counts[g] as f64))
        .collect();
    Ok(curve_from_errors(&errors, &gt_seg.sizes()[1..], thresholds))
}

/// Plane and pixel recall with the normal angle (degrees) as the geometric test.
pub fn recall_normal(
    pred_seg: &InstanceSegmentation,
    pred_planes: &[Plane],
    gt_seg: &InstanceSegmentation,
    gt_planes: &[Plane],
    thresholds: &[f64],
) -> Result<RecallCurve> {
    check_thresholds(thresholds)?;
    if pred_planes.len() < pred_seg.count() || gt_planes.len() < gt_seg.count() {
        return Err(Error::invalid("fewer planes than instances"));
    }
    let iou = iou_matrix(pred_seg, gt_seg)?;
    let errors: Vec<Option<f64>> = matches(&iou, gt_seg.count())
        .into_iter()
        .enumerate()
        .map(|(g, p)| p.map(|p| normal_angle(&pred_planes[p], &gt_planes[g])))
        .collect();
    Ok(curve_from_errors(&errors, &gt_seg.sizes()[1..], thresholds))
}

/// Which pixels take part in partition metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionOptions {
    /// Drop pixels that are non-planar in the first (reference) segmentation.
    /// Otherwise label 0 is one more segment.
    pub exclude_nonplanar: bool,
}

fn partition_labels<'a>(
    a: &'a InstanceSegmentation,
    b: &'a InstanceSegmentation,
    opts: PartitionOptions,
) -> Result<(Vec<u32>, Vec<u32>)> {
    a.grid().ensure_same(&b.grid(), "partition metrics")?;
    if opts.exclude_nonplanar {
        Ok(a.labels()
            .iter()
            .zip(b.labels())
            .filter(|(&x, _)| x != 0)
            .map(|(&x, &y)| (x, y))
            .unzip())
    } else {
        Ok((a.labels().to_vec(), b.labels().to_vec()))
    }
}

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Rand index of two labelings given as raw label slices.
pub fn rand_index_labels(a: &[u32], b: &[u32]) -> f64 {
    let table = Contingency::new(a, b);
    let total = pairs(table.total);
    if total == 0 {
        return 1.0;
    }
    let joint: u128 = table.counts.iter().map(|&c| pairs(c)).sum();
    let rows: u128 = table.row_sums().into_iter().map(pairs).sum();
    let cols: u128 = table.col_sums().into_iter().map(pairs).sum();
    let agree = total + 2 * joint - rows - cols;
    agree as f64 / total as f64
}

fn entropy(counts: &mut [u64], total: u64) -> f64 {
    // Sorted so the sum does not depend on table orientation.
    counts.sort_unstable();
    let n = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Variation of information (nats) of two labelings given as raw label slices.
pub fn variation_of_information_labels(a: &[u32], b: &[u32]) -> f64 {
    let table = Contingency::new(a, b);
    if table.total == 0 {
        return 0.0;
    }
    let h_joint = entropy(&mut table.counts.clone(), table.total);
    let h_a = entropy(&mut table.row_sums(), table.total);
    let h_b = entropy(&mut table.col_sums(), table.total);
    (2.0 * h_joint - (h_a + h_b)).max(0.0)
}

/// Segmentation covering of `gt` by `pred` for raw label slices.
pub fn segmentation_covering_labels(gt: &[u32], pred: &[u32]) -> f64 {
    let table = Contingency::new(gt, pred);
    if table.total == 0 {
        return 1.0;
    }
    let gt_sizes = table.row_sums();
    let pred_sizes = table.col_sums();
    let mut covered = 0.0;
    for (r, &size) in gt_sizes.iter().enumerate() {
        if size == 0 {
            continue;
        }
        let best = (0..table.cols)
            .filter(|&c| table.at(r, c) > 0)
            .map(|c| {
                let inter = table.at(r, c);
                inter as f64 / (size + pred_sizes[c] - inter) as f64
            })
            .fold(0.0, f64::max);
        covered += size as f64 * best;
    }
    covered / table.total as f64
}

/// Fraction of pixel pairs on which the two segmentations agree about being
/// in the same segment or not.
pub fn rand_index(
    a: &InstanceSegmentation,
    b: &InstanceSegmentation,
    opts: PartitionOptions,
) -> Result<f64> {
    let (x, y) = partition_labels(a, b, opts)?;
    Ok(rand_index_labels(&x, &y))
}

/// `H(a|b) + H(b|a)` in nats.
pub fn variation_of_information(
    a: &InstanceSegmentation,
    b: &InstanceSegmentation,
    opts: PartitionOptions,
) -> Result<f64> {
    let (x, y) = partition_labels(a, b, opts)?;
    Ok(variation_of_information_labels(&x, &y))
}

/// Size-weighted best IOU of each ground-truth segment against the prediction.
pub fn segmentation_covering(
    gt: &InstanceSegmentation,
    pred: &InstanceSegmentation,
    opts: PartitionOptions,
) -> Result<f64> {
    let (x, y) = partition_labels(gt, pred, opts)?;
    Ok(segmentation_covering_labels(&x, &y))
}

/// Depth accuracy over jointly valid pixels; `acc_k` are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rel: f64,
    pub rel_sqr: f64,
    pub log10: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub acc_1: f64,
    pub acc_2: f64,
    pub acc_3: f64,
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    pred.grid()
        .ensure_same(&gt.grid(), "predicted vs true depth")?;
    let mut n = 0usize;
    let (mut rel, mut rel_sqr, mut log10, mut se, mut se_log) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for i in 0..gt.grid().len() {
        let (Some(p), Some(g)) = (pred.get(i), gt.get(i)) else {
            continue;
        };
        n += 1;
        let diff = p - g;
        rel += diff.abs() / g;
        rel_sqr += diff * diff / g;
        log10 += (p.log10() - g.log10()).abs();
        se += diff * diff;
        se_log += (p.ln() - g.ln()).powi(2);
        let ratio = (p / g).max(g / p);
        for (k, w) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *w += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoValidDepth);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        rel: rel / nf,
        rel_sqr: rel_sqr / nf,
        log10: log10 / nf,
        rmse: (se / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        acc_1: 100.0 * within[0] as f64 / nf,
        acc_2: 100.0 * within[1] as f64 / nf,
        acc_3: 100.0 * within[2] as f64 / nf,
    })
}

/// Number of images per plane count.
pub fn plane_count_histogram(segmentations: &[InstanceSegmentation]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for seg in segmentations {
        let planes = seg.sizes().iter().skip(1).filter(|&&s| s > 0).count();
        *hist.entry(planes).or_insert(0) += 1;
    }
    hist
}

/// Fraction of `a`'s planar pixels whose label corresponds to `b`'s under a
/// greedy one-to-one matching of labels by overlap.
pub fn label_agreement(a: &InstanceSegmentation, b: &InstanceSegmentation) -> Result<f64> {
    a.grid().ensure_same(&b.grid(), "label agreement")?;
    let table = Contingency::new(a.labels(), b.labels());
    let mut cells: Vec<(u64, usize, usize)> = (1..table.rows)
        .flat_map(|r| (1..table.cols).map(move |c| (r, c)))
        .map(|(r, c)| (table.at(r, c), r, c))
        .filter(|cell| cell.0 > 0)
        .collect();
    cells.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut row_used = vec![false; table.rows];
    let mut col_used = vec![false; table.cols];
    let mut agreed = 0u64;
    for (count, r, c) in cells {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            agreed += count;
        }
    }
    let planar = a.labels().iter().filter(|&&l| l != 0).count();
    Ok(if planar == 0 {
        1.0
    } else {
        agreed as f64 / planar as f64
    })
}
