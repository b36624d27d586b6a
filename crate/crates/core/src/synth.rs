//! Seeded synthetic scenes: Voronoi plane layouts with rendered depth, plus
//! embedding, plane-parameter and probability maps shaped like the outputs of
//! a trained network.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, Plane};
use crate::types::{
    CameraIntrinsics, DepthMap, EmbeddingMap, ImageGrid, InstanceSegmentation, PixelPlaneParams,
    PlanarProbabilityMap, PointMap,
};

pub const MAX_PLANES: usize = 64;
pub const PLANE_RESAMPLES: usize = 1000;
pub const CENTER_ATTEMPTS: usize = 10_000;
/// Embedding centers are drawn from `[0, CENTER_DOMAIN]^d`.
pub const CENTER_DOMAIN: f64 = 10.0;
/// Embedding noise is truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 3.0;
const LLOYD_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub grid: ImageGrid,
    pub intr: CameraIntrinsics,
    pub plane_count: usize,
    pub nonplanar_fraction: f64,
    /// Every planar depth lies in `[near, far]` (m).
    pub depth_range: [f64; 2],
    pub seed: u64,
}

impl SceneSpec {
    /// A centered camera with a focal length of one image width, 10% clutter
    /// and depths in 1–8 m.
    pub fn new(grid: ImageGrid, plane_count: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            grid,
            intr: CameraIntrinsics::centered(grid, grid.width() as f64)?,
            plane_count,
            nonplanar_fraction: 0.1,
            depth_range: [1.0, 8.0],
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.intr.validate()?;
        if self.plane_count == 0 || self.plane_count > MAX_PLANES {
            return Err(Error::invalid(format!(
                "plane count must be in 1..={MAX_PLANES}"
            )));
        }
        if self.plane_count > self.grid.len() {
            return Err(Error::invalid("more planes than pixels"));
        }
        if !(0.0..1.0).contains(&self.nonplanar_fraction) {
            return Err(Error::invalid("non-planar fraction must lie in [0, 1)"));
        }
        let [near, far] = self.depth_range;
        if !(near > 0.0 && far > near && far.is_finite()) {
            return Err(Error::invalid("depth range must satisfy 0 < near < far"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub segmentation: InstanceSegmentation,
    /// `planes[l - 1]` is the plane of label `l`.
    pub planes: Vec<Plane>,
    pub depth: DepthMap,
    pub points: PointMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNoiseSpec {
    pub center_min_gap: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EmbeddingNoiseSpec {
    fn default() -> Self {
        Self {
            center_min_gap: 1.5,
            sigma: 0.5 / 3.0,
            seed: 0,
        }
    }
}

impl EmbeddingNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("embedding sigma must be non-negative"));
        }
        if !(self.center_min_gap > 0.0 && self.center_min_gap.is_finite()) {
            return Err(Error::invalid("center gap must be positive"));
        }
        Ok(())
    }
}

/// Voronoi seeds spread at least `spacing` apart where possible, so cells
/// stay within a modest size ratio of each other.
fn voronoi_seeds(grid: ImageGrid, count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut spacing = 0.6 * (grid.len() as f64 / count as f64).sqrt();
    let mut seeds: Vec<(usize, usize)> = Vec::with_capacity(count);
    let mut failures = 0;
    while seeds.len() < count {
        let p = (
            rng.random_range(0..grid.height()),
            rng.random_range(0..grid.width()),
        );
        let far_enough = seeds.iter().all(|&(r, c)| {
            let (dr, dc) = (r as f64 - p.0 as f64, c as f64 - p.1 as f64);
            (dr * dr + dc * dc).sqrt() >= spacing && (r, c) != p
        });
        if far_enough || (spacing == 0.0 && !seeds.contains(&p)) {
            seeds.push(p);
            failures = 0;
        } else {
            failures += 1;
            if failures == 200 {
                spacing = if spacing < 1.0 { 0.0 } else { spacing * 0.9 };
                failures = 0;
            }
        }
    }
    seeds
}

/// Moves each seed to the centroid of its cell a few times (Lloyd
/// relaxation), evening out cell sizes.
fn relax_seeds(grid: ImageGrid, seeds: &mut [(usize, usize)]) {
    for _ in 0..LLOYD_STEPS {
        let labels = voronoi_labels(grid, seeds);
        let mut sums = vec![(0.0, 0.0, 0usize); seeds.len()];
        for (i, &l) in labels.iter().enumerate() {
            let (r, c) = grid.coords(i);
            let s = &mut sums[l as usize - 1];
            s.0 += r as f64;
            s.1 += c as f64;
            s.2 += 1;
        }
        for (k, &(sr, sc, n)) in sums.iter().enumerate() {
            let moved = (
                (sr / n as f64).round() as usize,
                (sc / n as f64).round() as usize,
            );
            if !seeds.contains(&moved) {
                seeds[k] = moved;
            }
        }
    }
}

fn voronoi_labels(grid: ImageGrid, seeds: &[(usize, usize)]) -> Vec<u32> {
    (0..grid.len())
        .map(|i| {
            let (r, c) = grid.coords(i);
            let mut best = (u64::MAX, 0);
            for (s, &(sr, sc)) in seeds.iter().enumerate() {
                let dr = r.abs_diff(sr) as u64;
                let dc = c.abs_diff(sc) as u64;
                let d = dr * dr + dc * dc;
                if d < best.0 {
                    best = (d, s);
                }
            }
            best.1 as u32 + 1
        })
        .collect()
}

/// A plane through a point at depth `z` on the seed pixel's ray, tilted at
/// most ~40° from facing the camera.
fn random_plane(spec: &SceneSpec, seed_px: (usize, usize), rng: &mut ChaCha8Rng) -> Option<Plane> {
    let [near, far] = spec.depth_range;
    let z = rng.random_range(near..=far);
    let ray = spec.intr.ray(seed_px.1 as f64, seed_px.0 as f64);
    let anchor = [z * ray[0], z * ray[1], z];
    let (tx, ty) = (rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
    let len = (tx * tx + ty * ty + 1.0f64).sqrt();
    let normal = [tx / len, ty / len, 1.0 / len];
    let offset = normal[0] * anchor[0] + normal[1] * anchor[1] + normal[2] * anchor[2];
    Plane::from_normal_offset(normal, offset).ok()
}

/// Renders a piecewise-planar scene. Deterministic per `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let grid = spec.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seeds = voronoi_seeds(grid, spec.plane_count, &mut rng);
    relax_seeds(grid, &mut seeds);
    let mut labels = voronoi_labels(grid, &seeds);

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); spec.plane_count];
    for (i, &l) in labels.iter().enumerate() {
        cells[l as usize - 1].push(i);
    }
    let [near, far] = spec.depth_range;
    let mut planes = Vec::with_capacity(spec.plane_count);
    let mut resamples = 0;
    for (c, cell) in cells.iter().enumerate() {
        loop {
            let fits = random_plane(spec, seeds[c], &mut rng).filter(|plane| {
                cell.iter().all(|&i| {
                    let (r, col) = grid.coords(i);
                    plane
                        .depth_at(&spec.intr, col as f64, r as f64)
                        .is_some_and(|z| (near..=far).contains(&z))
                })
            });
            if let Some(plane) = fits {
                planes.push(plane);
                break;
            }
            resamples += 1;
            if resamples > PLANE_RESAMPLES {
                return Err(Error::Generator(format!(
                    "no plane fits depth range [{near}, {far}] after {PLANE_RESAMPLES} resamples"
                )));
            }
        }
    }

    let seed_pixels: Vec<usize> = seeds.iter().map(|&(r, c)| grid.index(r, c)).collect();
    let carvable: Vec<usize> = (0..grid.len())
        .filter(|i| !seed_pixels.contains(i))
        .collect();
    let carve =
        ((spec.nonplanar_fraction * grid.len() as f64).round() as usize).min(carvable.len());
    for k in sample(&mut rng, carvable.len(), carve) {
        labels[carvable[k]] = 0;
    }

    let mut depth = vec![0.0; grid.len()];
    for (i, &l) in labels.iter().enumerate() {
        let (r, c) = grid.coords(i);
        depth[i] = if l == 0 {
            rng.random_range(near..=far)
        } else {
            planes[l as usize - 1]
                .depth_at(&spec.intr, c as f64, r as f64)
                .expect("plane was accepted for every cell pixel")
        };
    }
    let depth = DepthMap::new(grid, depth, vec![true; grid.len()])?;
    let points = backproject(&depth, &spec.intr);
    Ok(Scene {
        spec: *spec,
        segmentation: InstanceSegmentation::new(grid, labels)?,
        planes,
        depth,
        points,
    })
}

/// Cluster centers in `[0, 10]^d`, pairwise at least `min_gap` apart.
pub fn sample_centers(
    count: usize,
    dim: usize,
    min_gap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut centers: Vec<f64> = Vec::with_capacity(count * dim);
    let mut attempts = 0;
    while centers.len() < count * dim {
        attempts += 1;
        if attempts > CENTER_ATTEMPTS {
            return Err(Error::Generator(format!(
                "could not place {count} centers {min_gap} apart in {CENTER_ATTEMPTS} attempts"
            )));
        }
        let candidate: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(0.0..=CENTER_DOMAIN))
            .collect();
        let clear = centers.chunks_exact(dim).all(|c| {
            c.iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                >= min_gap * min_gap
        });
        if clear {
            centers.extend(candidate);
        }
    }
    Ok(centers)
}

fn gaussian_vec(dim: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let limit = NOISE_TRUNCATION * sigma;
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        if v.iter().map(|x| x * x).sum::<f64>().sqrt() <= limit {
            return v;
        }
    }
}

/// Per-pixel embeddings: instance center plus isotropic Gaussian noise.
///
/// The noise is truncated at 3σ, then re-centered per instance so the
/// instance mean is the center, and shrunk if needed so no pixel ends up
/// 3σ or further from it. Non-planar pixels are uniform over the centers'
/// bounding box.
pub fn generate_embeddings(
    scene: &Scene,
    noise: &EmbeddingNoiseSpec,
    dim: usize,
) -> Result<EmbeddingMap> {
    noise.validate()?;
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    let seg = &scene.segmentation;
    let grid = seg.grid();
    let c = seg.count();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let centers = sample_centers(c, dim, noise.center_min_gap, &mut rng)?;

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for center in centers.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(center[a]);
            hi[a] = hi[a].max(center[a]);
        }
    }

    let mut offsets = vec![0.0; grid.len() * dim];
    let mut values = vec![0.0; grid.len() * dim];
    for (i, &l) in seg.labels().iter().enumerate() {
        let out = &mut values[i * dim..(i + 1) * dim];
        if l == 0 {
            for a in 0..dim {
                out[a] = if hi[a] > lo[a] {
                    rng.random_range(lo[a]..=hi[a])
                } else {
                    lo[a]
                };
            }
        } else {
            offsets[i * dim..(i + 1) * dim].copy_from_slice(&gaussian_vec(
                dim,
                noise.sigma,
                &mut rng,
            ));
        }
    }

    let sizes = seg.sizes();
    let mut means = vec![0.0; (c + 1) * dim];
    for (i, &l) in seg.labels().iter().enumerate() {
        for a in 0..dim {
            means[l as usize * dim + a] += offsets[i * dim + a] / sizes[l as usize] as f64;
        }
    }
    let mut radius = vec![0.0f64; c + 1];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let l = l as usize;
        let mut r2 = 0.0;
        for a in 0..dim {
            offsets[i * dim + a] -= means[l * dim + a];
            r2 += offsets[i * dim + a] * offsets[i * dim + a];
        }
        radius[l] = radius[l].max(r2.sqrt());
    }
    // Slightly inside 3σ so the radius survives rounding.
    let limit = (1.0 - 1e-6) * NOISE_TRUNCATION * noise.sigma;
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let l = l as usize;
        let shrink = if radius[l] > limit {
            limit / radius[l]
        } else {
            1.0
        };
        for a in 0..dim {
            values[i * dim + a] = centers[(l - 1) * dim + a] + shrink * offsets[i * dim + a];
        }
    }
    EmbeddingMap::new(grid, dim, values)
}

/// Ground-truth plane parameter per planar pixel plus Gaussian noise; zero
/// on non-planar pixels.
pub fn generate_pixel_params(scene: &Scene, sigma: f64, seed: u64) -> Result<PixelPlaneParams> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("parameter sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = scene
        .segmentation
        .labels()
        .iter()
        .map(|&l| {
            if l == 0 {
                return [0.0; 3];
            }
            let n = scene.planes[l as usize - 1].params();
            n.map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + sigma * e
            })
        })
        .collect();
    PixelPlaneParams::new(scene.segmentation.grid(), params)
}

/// Planar probabilities pushed toward the ground truth with logit magnitude
/// `2 + |N(0,1)|`; each pixel's side is flipped when its uniform draw falls
/// below `flip_rate`, so for a fixed seed the flipped set grows with the rate.
pub fn corrupt_probability(
    scene: &Scene,
    flip_rate: f64,
    seed: u64,
) -> Result<PlanarProbabilityMap> {
    if !(0.0..1.0).contains(&flip_rate) {
        return Err(Error::invalid("flip rate must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = scene
        .segmentation
        .labels()
        .iter()
        .map(|&l| {
            let u: f64 = rng.random();
            let e: f64 = StandardNormal.sample(&mut rng);
            let magnitude = 2.0 + e.abs();
            let planar = (l != 0) != (u < flip_rate);
            let logit = if planar { magnitude } else { -magnitude };
            1.0 / (1.0 + (-logit).exp())
        })
        .collect();
    PlanarProbabilityMap::new(scene.segmentation.grid(), probs)
}

/// Everything needed to regenerate an exported scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub spec: SceneSpec,
    pub embedding: EmbeddingNoiseSpec,
    pub embedding_dim: usize,
    pub param_sigma: f64,
    pub flip_rate: f64,
    /// `planes[l - 1]` holds the parameter vector `n` of label `l`.
    pub planes: Vec<[f64; 3]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot3, pool_instance_params};
    use crate::losses::{balanced_bce, embedding_loss, Margins};
    use crate::types::SoftAssignment;

    fn spec(planes: usize, seed: u64) -> SceneSpec {
        SceneSpec::new(ImageGrid::new(48, 64).unwrap(), planes, seed).unwrap()
    }

    #[test]
    fn single_plane_scene() {
        let s = SceneSpec {
            nonplanar_fraction: 0.0,
            ..spec(1, 4)
        };
        let scene = generate_scene(&s).unwrap();
        assert!(scene.segmentation.labels().iter().all(|&l| l == 1));
        let n = scene.planes[0].params();
        for q in scene.points.points() {
            assert!((dot3(&n, q) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scene(&spec(6, 11)).unwrap();
        let b = generate_scene(&spec(6, 11)).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.segmentation,
            generate_scene(&spec(6, 12)).unwrap().segmentation
        );
    }

    #[test]
    fn plane_count_respected() {
        for seed in 0..5 {
            let scene = generate_scene(&spec(8, seed)).unwrap();
            assert_eq!(scene.segmentation.count(), 8);
            assert!(scene.segmentation.sizes()[1..].iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn impossible_depth_range_errors() {
        let s = SceneSpec {
            depth_range: [1.0, 1.0 + 1e-9],
            ..spec(3, 0)
        };
        assert!(matches!(generate_scene(&s), Err(Error::Generator(_))));
    }

    #[test]
    fn noiseless_embeddings_share_center() {
        let scene = generate_scene(&spec(5, 2)).unwrap();
        let noise = EmbeddingNoiseSpec {
            sigma: 0.0,
            ..Default::default()
        };
        let emb = generate_embeddings(&scene, &noise, 2).unwrap();
        let labels = scene.segmentation.labels();
        let mut centers: Vec<Option<Vec<f64>>> = vec![None; 6];
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let c = centers[l as usize].get_or_insert_with(|| emb.pixel(i).to_vec());
            assert_eq!(c.as_slice(), emb.pixel(i));
        }
        let centers: Vec<Vec<f64>> = centers.into_iter().flatten().collect();
        for a in 0..centers.len() {
            for b in (a + 1)..centers.len() {
                let d = crate::union_find::sq_dist(&centers[a], &centers[b]).sqrt();
                assert!(d >= 1.5);
            }
        }
    }

    #[test]
    fn embedding_loss_vanishes_within_margin() {
        let margins = Margins::default();
        let mut zero = 0;
        for seed in 0..100 {
            let scene = generate_scene(&spec(2 + (seed as usize % 11), seed)).unwrap();
            let noise = EmbeddingNoiseSpec {
                seed,
                ..Default::default()
            };
            let emb = generate_embeddings(&scene, &noise, 2).unwrap();
            if embedding_loss(&emb, &scene.segmentation, &margins)
                .unwrap()
                .value
                == 0.0
            {
                zero += 1;
            }
        }
        assert!(zero >= 99, "{zero}/100");
    }

    #[test]
    fn center_placement_can_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_centers(10, 1, 5.0, &mut rng),
            Err(Error::Generator(_))
        ));
    }

    #[test]
    fn noiseless_params_pool_to_gt() {
        let scene = generate_scene(&spec(4, 8)).unwrap();
        let params = generate_pixel_params(&scene, 0.0, 1).unwrap();
        let pooled =
            pool_instance_params(&params, &SoftAssignment::one_hot(&scene.segmentation)).unwrap();
        for (p, gt) in pooled.params().iter().zip(&scene.planes) {
            for (x, y) in p.iter().zip(gt.params()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
        for (i, &l) in scene.segmentation.labels().iter().enumerate() {
            if l == 0 {
                assert_eq!(params.params()[i], [0.0; 3]);
            }
        }
    }

    #[test]
    fn noisy_params_pool_within_standard_error() {
        let sigma = 0.01;
        let mut ratios = Vec::new();
        for seed in 0..10 {
            let scene = generate_scene(&spec(4, seed)).unwrap();
            let params = generate_pixel_params(&scene, sigma, seed).unwrap();
            let pooled =
                pool_instance_params(&params, &SoftAssignment::one_hot(&scene.segmentation))
                    .unwrap();
            let sizes = scene.segmentation.sizes();
            for (c, (p, gt)) in pooled.params().iter().zip(&scene.planes).enumerate() {
                let bound = sigma * 3.0 / (sizes[c + 1] as f64).sqrt();
                for (x, y) in p.iter().zip(gt.params()) {
                    ratios.push((x - y).abs() / bound);
                }
            }
        }
        // A 3-standard-error bound holds for ~99.7% of components.
        let inside = ratios.iter().filter(|&&r| r < 1.0).count();
        assert!(inside as f64 >= 0.98 * ratios.len() as f64);
        assert!(ratios.iter().all(|&r| r < 1.5));
    }

    #[test]
    fn flip_rate_controls_disagreement() {
        let scene =
            generate_scene(&SceneSpec::new(ImageGrid::new(96, 128).unwrap(), 6, 3).unwrap())
                .unwrap();
        let gt = scene.segmentation.planar_mask();
        let clean = corrupt_probability(&scene, 0.0, 5).unwrap().threshold(0.5);
        assert_eq!(clean, gt);
        let noisy = corrupt_probability(&scene, 0.1, 5).unwrap().threshold(0.5);
        let flipped = noisy
            .mask()
            .iter()
            .zip(gt.mask())
            .filter(|(a, b)| a != b)
            .count();
        let rate = flipped as f64 / gt.mask().len() as f64;
        assert!((rate - 0.1).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn bce_falls_with_flip_rate() {
        let scene = generate_scene(&spec(5, 9)).unwrap();
        let gt = scene.segmentation.planar_mask();
        let losses: Vec<f64> = [0.4, 0.3, 0.2, 0.1, 0.05, 0.0]
            .iter()
            .map(|&r| {
                balanced_bce(&corrupt_probability(&scene, r, 2).unwrap(), &gt)
                    .unwrap()
                    .value
            })
            .collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }
}
