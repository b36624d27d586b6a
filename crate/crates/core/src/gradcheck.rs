//! Central finite-difference check of every analytic loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{dot3, norm3};
use crate::losses::{
    balanced_bce, embedding_loss, instance_param_loss, pixel_param_loss, pull_loss, push_loss,
    Margins,
};
use crate::tensor::chunk3;
use crate::types::{
    EmbeddingMap, ImageGrid, InstanceSegmentation, PixelPlaneParams, PlanarMask,
    PlanarProbabilityMap, PlaneInstanceParams, PointMap, SoftAssignment,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Samples keep every hinge and absolute-value argument this far from its kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub samples: usize,
    pub seed: u64,
    /// Perturbs every analytic gradient; the check must then fail.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub loss: String,
    pub samples: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + STEP;
            let up = f(&probe);
            probe[k] = x[k] - STEP;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

type ValueGrad = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>;

/// One sample: the point to check at and the loss as a function of it.
struct Case {
    x: Vec<f64>,
    f: ValueGrad,
}

const PIXELS: usize = 12;
const DIM: usize = 2;

fn grid() -> ImageGrid {
    ImageGrid::new(3, PIXELS / 3).expect("fixed grid")
}

/// Labels with three instances and one non-planar pixel, shuffled.
fn labels(rng: &mut ChaCha8Rng) -> InstanceSegmentation {
    let mut raw: Vec<u32> = (0..PIXELS as u32).map(|i| i % 4).collect();
    for i in (1..raw.len()).rev() {
        raw.swap(i, rng.random_range(0..=i));
    }
    InstanceSegmentation::new(grid(), raw).expect("all labels used")
}

fn flatten3(v: &[[f64; 3]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn instance_means(x: &[f64], seg: &InstanceSegmentation) -> Vec<Vec<f64>> {
    let sizes = seg.sizes();
    let mut means = vec![vec![0.0; DIM]; seg.count()];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l > 0 {
            for a in 0..DIM {
                means[l as usize - 1][a] += x[i * DIM + a] / sizes[l as usize] as f64;
            }
        }
    }
    means
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn pull_off_kink(x: &[f64], seg: &InstanceSegmentation, m: &Margins) -> bool {
    let means = instance_means(x, seg);
    seg.labels().iter().enumerate().all(|(i, &l)| {
        l == 0 || {
            let r = dist(&x[i * DIM..(i + 1) * DIM], &means[l as usize - 1]);
            (r - m.delta_v).abs() >= KINK_MARGIN && r >= KINK_MARGIN
        }
    })
}

fn push_off_kink(x: &[f64], seg: &InstanceSegmentation, m: &Margins) -> bool {
    let means = instance_means(x, seg);
    (0..means.len()).all(|a| {
        ((a + 1)..means.len()).all(|b| {
            let d = dist(&means[a], &means[b]);
            (d - m.delta_d).abs() >= KINK_MARGIN && d >= KINK_MARGIN
        })
    })
}

type EmbeddingLossFn =
    fn(&EmbeddingMap, &InstanceSegmentation, &Margins) -> Result<crate::losses::Loss<Vec<f64>>>;

fn embedding_case(
    rng: &mut ChaCha8Rng,
    accept: fn(&[f64], &InstanceSegmentation, &Margins) -> bool,
    loss: EmbeddingLossFn,
) -> Case {
    let margins = Margins::default();
    loop {
        let seg = labels(rng);
        // Spread chosen so both hinges are often active.
        let x: Vec<f64> = (0..PIXELS * DIM)
            .map(|_| rng.random_range(0.0..2.5))
            .collect();
        if !accept(&x, &seg, &margins) {
            continue;
        }
        let f: ValueGrad = Box::new(move |x: &[f64]| {
            let emb = EmbeddingMap::new(grid(), DIM, x.to_vec()).expect("finite embeddings");
            let l = loss(&emb, &seg, &margins).expect("valid inputs");
            (l.value, l.grad)
        });
        return Case { x, f };
    }
}

fn bce_case(rng: &mut ChaCha8Rng) -> Case {
    let mut mask: Vec<bool> = (0..PIXELS).map(|_| rng.random_bool(0.5)).collect();
    mask[0] = true;
    mask[1] = false;
    let x: Vec<f64> = (0..PIXELS).map(|_| rng.random_range(0.05..0.95)).collect();
    let mask = PlanarMask::new(grid(), mask).expect("grid sized");
    let f: ValueGrad = Box::new(move |x: &[f64]| {
        let probs = PlanarProbabilityMap::new(grid(), x.to_vec()).expect("probabilities");
        let l = balanced_bce(&probs, &mask).expect("both classes present");
        (l.value, l.grad)
    });
    Case { x, f }
}

fn pixel_param_case(rng: &mut ChaCha8Rng) -> Case {
    loop {
        let mask: Vec<bool> = (0..PIXELS).map(|_| rng.random_bool(0.75)).collect();
        let gt: Vec<f64> = (0..PIXELS * 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x: Vec<f64> = (0..PIXELS * 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let off_kink = (0..PIXELS).all(|i| {
            let d = [
                x[3 * i] - gt[3 * i],
                x[3 * i + 1] - gt[3 * i + 1],
                x[3 * i + 2] - gt[3 * i + 2],
            ];
            !mask[i] || norm3(&d) >= KINK_MARGIN
        });
        if !off_kink {
            continue;
        }
        let mask = PlanarMask::new(grid(), mask).expect("grid sized");
        let gt = PixelPlaneParams::new(grid(), chunk3(&gt)).expect("grid sized");
        let f: ValueGrad = Box::new(move |x: &[f64]| {
            let pred = PixelPlaneParams::new(grid(), chunk3(x)).expect("grid sized");
            let l = pixel_param_loss(&pred, &gt, &mask).expect("same grids");
            (l.value, flatten3(&l.grad))
        });
        return Case { x, f };
    }
}

fn instance_param_case(rng: &mut ChaCha8Rng) -> Case {
    const CLUSTERS: usize = 3;
    loop {
        let points: Vec<[f64; 3]> = (0..PIXELS)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(1.0..4.0),
                ]
            })
            .collect();
        let planar: Vec<bool> = (0..PIXELS).map(|i| i != 0).collect();
        let mut weights = vec![0.0; PIXELS * CLUSTERS];
        for i in 1..PIXELS {
            let row: Vec<f64> = (0..CLUSTERS).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = row.iter().sum();
            for j in 0..CLUSTERS {
                weights[i * CLUSTERS + j] = row[j] / total;
            }
        }
        let x: Vec<f64> = (0..CLUSTERS * 3)
            .map(|k| {
                if k % 3 == 2 {
                    rng.random_range(0.2..0.6)
                } else {
                    rng.random_range(-0.3..0.3)
                }
            })
            .collect();
        let off_kink = (1..PIXELS).all(|i| {
            (0..CLUSTERS).all(|j| (dot3(&chunk3(&x)[j], &points[i]) - 1.0).abs() >= KINK_MARGIN)
        });
        if !off_kink {
            continue;
        }
        let assignment = SoftAssignment::new(grid(), CLUSTERS, weights).expect("rows sum to one");
        debug_assert_eq!(assignment.planar_mask().mask(), planar.as_slice());
        let points = PointMap::new(grid(), points, vec![true; PIXELS]).expect("finite points");
        let f: ValueGrad = Box::new(move |x: &[f64]| {
            let params = PlaneInstanceParams::new(chunk3(x)).expect("params away from zero");
            let l = instance_param_loss(&params, &assignment, &points).expect("consistent inputs");
            (l.value, flatten3(&l.grad))
        });
        return Case { x, f };
    }
}

fn check(
    name: &str,
    config: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
    make: &dyn Fn(&mut ChaCha8Rng) -> Case,
) -> GradcheckResult {
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..config.samples {
        let case = make(rng);
        let (_, mut analytic) = (case.f)(&case.x);
        if config.corrupt {
            for g in analytic.iter_mut() {
                *g = *g * 1.01 + 1e-3;
            }
        }
        let numeric = numeric_gradient(&case.x, &|x| (case.f)(x).0);
        max_rel_err = max_rel_err.max(relative_error(&analytic, &numeric));
    }
    GradcheckResult {
        loss: name.to_string(),
        samples: config.samples,
        max_rel_err,
        passed: max_rel_err < TOLERANCE,
    }
}

/// Checks every loss at `config.samples` random off-kink points.
pub fn run_gradcheck(config: &GradcheckConfig) -> Vec<GradcheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    vec![
        check("balanced_bce", config, &mut rng, &bce_case),
        check("pull", config, &mut rng, &|r| {
            embedding_case(r, pull_off_kink, pull_loss)
        }),
        check("push", config, &mut rng, &|r| {
            embedding_case(r, push_off_kink, push_loss)
        }),
        check("embedding", config, &mut rng, &|r| {
            embedding_case(
                r,
                |x, s, m| pull_off_kink(x, s, m) && push_off_kink(x, s, m),
                embedding_loss,
            )
        }),
        check("pixel_param", config, &mut rng, &pixel_param_case),
        check("instance_param", config, &mut rng, &instance_param_case),
    ]
}
