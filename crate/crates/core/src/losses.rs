//! Training objective terms as value-and-gradient functions.
//!
//! Every function is pure: gradients are analytic, taken with respect to the
//! prediction argument, and use subgradient 0 at hinge and absolute-value
//! kinks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    EmbeddingMap, InstanceSegmentation, LossReport, PixelPlaneParams, PlanarMask,
    PlanarProbabilityMap, PlaneInstanceParams, PointMap, SoftAssignment,
};

/// Log arguments are clamped to at least `PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-12;

/// A loss value with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Loss<G> {
    pub value: f64,
    pub grad: G,
}

/// Pull (`delta_v`) and push (`delta_d`) margins of the embedding loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub delta_v: f64,
    pub delta_d: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            delta_v: 0.5,
            delta_d: 1.5,
        }
    }
}

impl Margins {
    pub fn new(delta_v: f64, delta_d: f64) -> Result<Self> {
        if !(delta_v > 0.0 && delta_d > delta_v && delta_d.is_finite()) {
            return Err(Error::invalid(format!(
                "margins need 0 < delta_v < delta_d, got {delta_v}, {delta_d}"
            )));
        }
        Ok(Self { delta_v, delta_d })
    }
}

/// How the class-balance weight `w` is derived from the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BceWeighting {
    /// `w = |F| / (|F| + |B|)`
    #[default]
    ForegroundFraction,
    /// `w = |F| / |B|`
    ForegroundRatio,
}

/// Balanced binary cross-entropy of planar probabilities against a mask,
/// with `w` the foreground fraction.
pub fn balanced_bce(probs: &PlanarProbabilityMap, gt: &PlanarMask) -> Result<Loss<Vec<f64>>> {
    balanced_bce_with(probs, gt, BceWeighting::ForegroundFraction)
}

pub fn balanced_bce_with(
    probs: &PlanarProbabilityMap,
    gt: &PlanarMask,
    weighting: BceWeighting,
) -> Result<Loss<Vec<f64>>> {
    probs
        .grid()
        .ensure_same(&gt.grid(), "probabilities vs mask")?;
    let n = gt.grid().len();
    let fg = gt.planar_count();
    let bg = n - fg;
    if fg == 0 || bg == 0 {
        return Err(Error::DegenerateClassBalance);
    }
    let w = match weighting {
        BceWeighting::ForegroundFraction => fg as f64 / n as f64,
        BceWeighting::ForegroundRatio => fg as f64 / bg as f64,
    };
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for (i, (&p, g)) in probs.probs().iter().zip(grad.iter_mut()).enumerate() {
        if gt.is_planar(i) {
            let q = p.max(PROB_CLAMP);
            value -= (1.0 - w) * q.ln();
            if q == p {
                *g = -(1.0 - w) / q;
            }
        } else {
            let q = (1.0 - p).max(PROB_CLAMP);
            value -= w * q.ln();
            if q == 1.0 - p {
                *g = w / q;
            }
        }
    }
    Ok(Loss { value, grad })
}

struct Instances {
    /// Instance index per pixel, `None` for non-planar.
    of_pixel: Vec<Option<usize>>,
    sizes: Vec<usize>,
    means: Vec<f64>,
    dim: usize,
}

impl Instances {
    fn new(embeddings: &EmbeddingMap, gt: &InstanceSegmentation) -> Result<Self> {
        embeddings
            .grid()
            .ensure_same(&gt.grid(), "embeddings vs labels")?;
        let dim = embeddings.dim();
        // Compact to nonempty instances.
        let raw_sizes = gt.sizes();
        let mut compact = vec![None; raw_sizes.len()];
        let mut sizes = Vec::new();
        for (l, &s) in raw_sizes.iter().enumerate().skip(1) {
            if s > 0 {
                compact[l] = Some(sizes.len());
                sizes.push(s);
            }
        }
        let of_pixel: Vec<Option<usize>> =
            gt.labels().iter().map(|&l| compact[l as usize]).collect();
        let mut means = vec![0.0; sizes.len() * dim];
        for (i, c) in of_pixel.iter().enumerate() {
            if let Some(c) = *c {
                for (m, &x) in means[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(embeddings.pixel(i))
                {
                    *m += x;
                }
            }
        }
        for (c, &s) in sizes.iter().enumerate() {
            means[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|m| *m /= s as f64);
        }
        Ok(Self {
            of_pixel,
            sizes,
            means,
            dim,
        })
    }

    fn count(&self) -> usize {
        self.sizes.len()
    }

    fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }
}

/// Hinge pull of each embedding toward its instance mean beyond `delta_v`,
/// averaged per instance then over instances. The mean is a function of the
/// embeddings and the gradient flows through it.
pub fn pull_loss(
    embeddings: &EmbeddingMap,
    gt: &InstanceSegmentation,
    margins: &Margins,
) -> Result<Loss<Vec<f64>>> {
    let inst = Instances::new(embeddings, gt)?;
    let dim = inst.dim;
    let mut grad = vec![0.0; embeddings.values().len()];
    let c = inst.count();
    if c == 0 {
        return Ok(Loss { value: 0.0, grad });
    }
    let mut value = 0.0;
    // Sum of active unit vectors per instance, for the mean's share of the gradient.
    let mut active_sum = vec![0.0; c * dim];
    let mut unit = vec![0.0; dim];
    for (i, ci) in inst.of_pixel.iter().enumerate() {
        let Some(ci) = *ci else { continue };
        let x = embeddings.pixel(i);
        let mu = inst.mean(ci);
        let mut r2 = 0.0;
        for a in 0..dim {
            unit[a] = x[a] - mu[a];
            r2 += unit[a] * unit[a];
        }
        let r = r2.sqrt();
        if r <= margins.delta_v {
            continue;
        }
        let scale = 1.0 / (c as f64 * inst.sizes[ci] as f64);
        value += scale * (r - margins.delta_v);
        for a in 0..dim {
            let u = unit[a] / r;
            grad[i * dim + a] += scale * u;
            active_sum[ci * dim + a] += scale * u;
        }
    }
    for (i, ci) in inst.of_pixel.iter().enumerate() {
        let Some(ci) = *ci else { continue };
        let share = 1.0 / inst.sizes[ci] as f64;
        for a in 0..dim {
            grad[i * dim + a] -= share * active_sum[ci * dim + a];
        }
    }
    Ok(Loss { value, grad })
}

/// Hinge push between instance means closer than `delta_d`, averaged over
/// ordered pairs. Zero with fewer than two instances.
pub fn push_loss(
    embeddings: &EmbeddingMap,
    gt: &InstanceSegmentation,
    margins: &Margins,
) -> Result<Loss<Vec<f64>>> {
    let inst = Instances::new(embeddings, gt)?;
    let dim = inst.dim;
    let mut grad = vec![0.0; embeddings.values().len()];
    let c = inst.count();
    if c < 2 {
        return Ok(Loss { value: 0.0, grad });
    }
    let pairs = (c * (c - 1)) as f64;
    let mut value = 0.0;
    let mut mean_grad = vec![0.0; c * dim];
    for a in 0..c {
        for b in (a + 1)..c {
            let (ma, mb) = (inst.mean(a), inst.mean(b));
            let dist = ma
                .iter()
                .zip(mb)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if dist >= margins.delta_d {
                continue;
            }
            // (a, b) and (b, a) both count.
            value += 2.0 * (margins.delta_d - dist) / pairs;
            if dist > 0.0 {
                for k in 0..dim {
                    let u = (ma[k] - mb[k]) / dist;
                    mean_grad[a * dim + k] -= 2.0 * u / pairs;
                    mean_grad[b * dim + k] += 2.0 * u / pairs;
                }
            }
        }
    }
    for (i, ci) in inst.of_pixel.iter().enumerate() {
        let Some(ci) = *ci else { continue };
        let share = 1.0 / inst.sizes[ci] as f64;
        for k in 0..dim {
            grad[i * dim + k] = share * mean_grad[ci * dim + k];
        }
    }
    Ok(Loss { value, grad })
}

/// Pull plus push.
pub fn embedding_loss(
    embeddings: &EmbeddingMap,
    gt: &InstanceSegmentation,
    margins: &Margins,
) -> Result<Loss<Vec<f64>>> {
    let pull = pull_loss(embeddings, gt, margins)?;
    let push = push_loss(embeddings, gt, margins)?;
    Ok(Loss {
        value: pull.value + push.value,
        grad: pull
            .grad
            .iter()
            .zip(&push.grad)
            .map(|(a, b)| a + b)
            .collect(),
    })
}

/// Mean Euclidean distance between predicted and true per-pixel parameters
/// over planar pixels.
pub fn pixel_param_loss(
    pred: &PixelPlaneParams,
    gt: &PixelPlaneParams,
    mask: &PlanarMask,
) -> Result<Loss<Vec<[f64; 3]>>> {
    pred.grid()
        .ensure_same(&gt.grid(), "predicted vs true params")?;
    pred.grid().ensure_same(&mask.grid(), "params vs mask")?;
    let mut grad = vec![[0.0; 3]; pred.grid().len()];
    let planar = mask.planar_count();
    if planar == 0 {
        return Ok(Loss { value: 0.0, grad });
    }
    let scale = 1.0 / planar as f64;
    let mut value = 0.0;
    for i in mask.planar_indices() {
        let (p, g) = (pred.params()[i], gt.params()[i]);
        let diff = [p[0] - g[0], p[1] - g[1], p[2] - g[2]];
        let len = crate::geometry::norm3(&diff);
        value += scale * len;
        if len > 0.0 {
            grad[i] = diff.map(|d| scale * d / len);
        }
    }
    Ok(Loss { value, grad })
}

/// Soft-assignment weighted `|n_j·Q_i - 1|`, normalized by planar pixel count
/// times cluster count.
pub fn instance_param_loss(
    instance_params: &PlaneInstanceParams,
    assignment: &SoftAssignment,
    points: &PointMap,
) -> Result<Loss<Vec<[f64; 3]>>> {
    assignment
        .grid()
        .ensure_same(&points.grid(), "assignment vs points")?;
    let c = assignment.clusters();
    if instance_params.clusters() != c {
        return Err(Error::invalid(format!(
            "{} instance params for {c} clusters",
            instance_params.clusters()
        )));
    }
    let mut grad = vec![[0.0; 3]; c];
    let planar = assignment.planar_count();
    if planar == 0 || c == 0 {
        return Ok(Loss { value: 0.0, grad });
    }
    let scale = 1.0 / (planar as f64 * c as f64);
    let mut value = 0.0;
    for i in 0..assignment.grid().len() {
        if !assignment.is_planar(i) {
            continue;
        }
        let row = assignment.row(i);
        let Some(q) = points.get(i) else {
            if row.iter().any(|&s| s > 0.0) {
                return Err(Error::invalid(format!(
                    "pixel {i} is assigned but has no valid point"
                )));
            }
            continue;
        };
        for (j, &s) in row.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let n = instance_params.params()[j];
            let r = crate::geometry::dot3(&n, &q) - 1.0;
            value += scale * s * r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            for a in 0..3 {
                grad[j][a] += scale * s * sign * q[a];
            }
        }
    }
    Ok(Loss { value, grad })
}

/// Everything the combined objective looks at.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub probs: &'a PlanarProbabilityMap,
    pub gt_mask: &'a PlanarMask,
    pub embeddings: &'a EmbeddingMap,
    pub gt_segmentation: &'a InstanceSegmentation,
    pub margins: Margins,
    pub pred_params: &'a PixelPlaneParams,
    pub gt_params: &'a PixelPlaneParams,
    pub instance_params: &'a PlaneInstanceParams,
    pub assignment: &'a SoftAssignment,
    pub points: &'a PointMap,
}

/// All loss terms and their sum.
pub fn total_loss(inputs: &LossInputs<'_>) -> Result<LossReport> {
    let l_s = balanced_bce(inputs.probs, inputs.gt_mask)?.value;
    let l_pull = pull_loss(inputs.embeddings, inputs.gt_segmentation, &inputs.margins)?.value;
    let l_push = push_loss(inputs.embeddings, inputs.gt_segmentation, &inputs.margins)?.value;
    let l_pp = pixel_param_loss(inputs.pred_params, inputs.gt_params, inputs.gt_mask)?.value;
    let l_ip = instance_param_loss(inputs.instance_params, inputs.assignment, inputs.points)?.value;
    let l_e = l_pull + l_push;
    Ok(LossReport {
        l_s,
        l_pull,
        l_push,
        l_e,
        l_pp,
        l_ip,
        total: l_s + l_e + l_pp + l_ip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ImageGrid;

    fn grid(n: usize) -> ImageGrid {
        ImageGrid::new(1, n).unwrap()
    }

    #[test]
    fn bce_perfect_and_half() {
        let g = grid(4);
        let mask = PlanarMask::new(g, vec![true, true, false, false]).unwrap();
        let perfect = PlanarProbabilityMap::new(g, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let loss = balanced_bce(&perfect, &mask).unwrap();
        assert!(loss.value < 1e-9 * 4.0);

        let half = PlanarProbabilityMap::new(g, vec![0.5; 4]).unwrap();
        let loss = balanced_bce(&half, &mask).unwrap();
        assert!((loss.value - 0.5 * 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_degenerate_balance() {
        let g = grid(2);
        let mask = PlanarMask::all(g);
        let p = PlanarProbabilityMap::new(g, vec![0.5; 2]).unwrap();
        assert!(matches!(
            balanced_bce(&p, &mask),
            Err(Error::DegenerateClassBalance)
        ));
    }

    #[test]
    fn bce_ratio_weighting() {
        let g = grid(3);
        let mask = PlanarMask::new(g, vec![true, false, false]).unwrap();
        let p = PlanarProbabilityMap::new(g, vec![0.5; 3]).unwrap();
        let ratio = balanced_bce_with(&p, &mask, BceWeighting::ForegroundRatio).unwrap();
        // w = 1/2: 0.5·ln2 + 2·0.5·ln2
        assert!((ratio.value - 1.5 * 2f64.ln()).abs() < 1e-12);
    }

    fn two_points() -> (EmbeddingMap, InstanceSegmentation) {
        let g = grid(2);
        (
            EmbeddingMap::new(g, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap(),
            InstanceSegmentation::new(g, vec![1, 1]).unwrap(),
        )
    }

    #[test]
    fn pull_hand_value() {
        let (e, seg) = two_points();
        let loss = pull_loss(&e, &seg, &Margins::default()).unwrap();
        assert!((loss.value - 0.5).abs() < 1e-15);
        // The unit vectors cancel in the mean's share, leaving scale · u_i.
        assert!((loss.grad[0] + 0.5).abs() < 1e-15);
        assert!((loss.grad[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pull_inside_margin_is_zero() {
        let g = grid(3);
        let e = EmbeddingMap::new(g, 1, vec![0.0, 0.2, 0.4]).unwrap();
        let seg = InstanceSegmentation::new(g, vec![1, 1, 1]).unwrap();
        let loss = pull_loss(&e, &seg, &Margins::default()).unwrap();
        assert_eq!(loss.value, 0.0);
        assert!(loss.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn push_values() {
        let g = grid(2);
        let near = EmbeddingMap::new(g, 1, vec![0.0, 1.0]).unwrap();
        let seg = InstanceSegmentation::new(g, vec![1, 2]).unwrap();
        let loss = push_loss(&near, &seg, &Margins::default()).unwrap();
        assert!((loss.value - 0.5).abs() < 1e-15);

        let far = EmbeddingMap::new(g, 1, vec![0.0, 1.5]).unwrap();
        assert_eq!(
            push_loss(&far, &seg, &Margins::default()).unwrap().value,
            0.0
        );

        let one = InstanceSegmentation::new(g, vec![1, 1]).unwrap();
        let loss = push_loss(&near, &one, &Margins::default()).unwrap();
        assert_eq!(loss.value, 0.0);
        assert!(loss.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_loss_is_the_sum() {
        let g = grid(4);
        let e = EmbeddingMap::new(g, 2, vec![0.0, 0.1, 1.3, 0.2, 0.2, 0.9, 1.0, 1.0]).unwrap();
        let seg = InstanceSegmentation::new(g, vec![1, 2, 1, 2]).unwrap();
        let m = Margins::default();
        let pull = pull_loss(&e, &seg, &m).unwrap();
        let push = push_loss(&e, &seg, &m).unwrap();
        let both = embedding_loss(&e, &seg, &m).unwrap();
        assert_eq!(both.value, pull.value + push.value);
    }

    #[test]
    fn pixel_param_values() {
        let g = grid(2);
        let gt = PixelPlaneParams::new(g, vec![[0.0, 0.0, 0.5], [1.0, 1.0, 1.0]]).unwrap();
        let pred = PixelPlaneParams::new(g, vec![[0.3, 0.0, 0.9], [7.0, 7.0, 7.0]]).unwrap();
        let mask = PlanarMask::new(g, vec![true, false]).unwrap();
        let loss = pixel_param_loss(&pred, &gt, &mask).unwrap();
        assert!((loss.value - 0.5).abs() < 1e-15);
        assert!((loss.grad[0][0] - 0.6).abs() < 1e-15);
        assert_eq!(loss.grad[1], [0.0; 3]);
        assert_eq!(pixel_param_loss(&gt, &gt, &mask).unwrap().value, 0.0);
    }

    #[test]
    fn instance_param_values() {
        let g = grid(1);
        let s = SoftAssignment::new(g, 1, vec![1.0]).unwrap();
        let pts = PointMap::new(g, vec![[0.0, 0.0, 2.0]], vec![true]).unwrap();
        let params = PlaneInstanceParams::new(vec![[0.0, 0.0, 1.0]]).unwrap();
        let loss = instance_param_loss(&params, &s, &pts).unwrap();
        assert_eq!(loss.value, 1.0);
        assert_eq!(loss.grad, vec![[0.0, 0.0, 2.0]]);
        let on_plane = PlaneInstanceParams::new(vec![[0.0, 0.0, 0.5]]).unwrap();
        assert_eq!(instance_param_loss(&on_plane, &s, &pts).unwrap().value, 0.0);
    }

    #[test]
    fn invalid_margins() {
        assert!(Margins::new(0.5, 0.4).is_err());
        assert!(Margins::new(0.0, 1.0).is_err());
    }
}
