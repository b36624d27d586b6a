use planar_recon::clustering::{cluster, hard_labels, MeanShiftConfig};
use planar_recon::geometry::{backproject, depth_from_plane, normal_angle, Plane};
use planar_recon::losses::{balanced_bce, embedding_loss, Margins};
use planar_recon::metrics::{
    depth_thresholds, rand_index_labels, recall_depth, segmentation_covering_labels,
    variation_of_information_labels,
};
use planar_recon::synth::{generate_embeddings, generate_scene, EmbeddingNoiseSpec, SceneSpec};
use planar_recon::{
    CameraIntrinsics, EmbeddingMap, ImageGrid, InstanceSegmentation, PlanarMask,
    PlanarProbabilityMap,
};
use proptest::prelude::*;

fn labels(max_len: usize, max_label: u32) -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (1..=max_len).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..max_label, n),
            prop::collection::vec(0..max_label, n),
        )
    })
}

fn relabel(v: &[u32], perm: &[u32]) -> Vec<u32> {
    v.iter().map(|&l| perm[l as usize]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_metrics_ignore_label_names(
        (a, b) in labels(40, 6),
        perm in Just((0..6u32).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let pa = relabel(&a, &perm);
        prop_assert_eq!(rand_index_labels(&a, &b), rand_index_labels(&pa, &b));
        prop_assert_eq!(
            variation_of_information_labels(&a, &b),
            variation_of_information_labels(&pa, &b)
        );
        // Relabeling reorders the per-segment sum, so allow rounding.
        let sc = segmentation_covering_labels(&a, &b) - segmentation_covering_labels(&pa, &b);
        prop_assert!(sc.abs() < 1e-12);
    }

    #[test]
    fn partition_metrics_are_bounded((a, b) in labels(40, 6)) {
        let ri = rand_index_labels(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ri));
        prop_assert_eq!(ri, rand_index_labels(&b, &a));
        let vi = variation_of_information_labels(&a, &b);
        prop_assert!(vi >= 0.0);
        prop_assert_eq!(vi, variation_of_information_labels(&b, &a));
        prop_assert!(vi <= (a.len() as f64).ln() + 1e-12);
        let sc = segmentation_covering_labels(&a, &b);
        prop_assert!(sc > 0.0 && sc <= 1.0);
    }

    #[test]
    fn identical_partitions_score_perfectly((a, _) in labels(40, 6)) {
        prop_assert_eq!(segmentation_covering_labels(&a, &a), 1.0);
        prop_assert_eq!(rand_index_labels(&a, &a), 1.0);
        prop_assert_eq!(variation_of_information_labels(&a, &a), 0.0);
    }

    #[test]
    fn plane_depth_round_trip(
        nx in -0.3..0.3f64,
        ny in -0.3..0.3f64,
        nz in 0.05..1.0f64,
        f in 20.0..400.0f64,
    ) {
        let grid = ImageGrid::new(12, 16).unwrap();
        let intr = CameraIntrinsics::centered(grid, f).unwrap();
        let plane = Plane::new([nx, ny, nz]).unwrap();
        let depth = depth_from_plane(&plane, grid, &intr);
        let points = backproject(&depth, &intr);
        for i in 0..grid.len() {
            if let Some(q) = points.get(i) {
                prop_assert!(plane.residual(&q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normal_angle_is_a_symmetric_metric(
        a in prop::array::uniform3(-1.0..1.0f64),
        b in prop::array::uniform3(-1.0..1.0f64),
    ) {
        prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        prop_assume!(b.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let (pa, pb) = (Plane::new(a).unwrap(), Plane::new(b).unwrap());
        prop_assert_eq!(normal_angle(&pa, &pa), 0.0);
        let ab = normal_angle(&pa, &pb);
        prop_assert!((ab - normal_angle(&pb, &pa)).abs() < 1e-12);
        prop_assert!((0.0..=180.0).contains(&ab));
    }

    #[test]
    fn bce_is_non_negative(
        probs in prop::collection::vec(0.0..=1.0f64, 12),
        mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        prop_assume!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        let grid = ImageGrid::new(3, 4).unwrap();
        let loss = balanced_bce(
            &PlanarProbabilityMap::new(grid, probs).unwrap(),
            &PlanarMask::new(grid, mask).unwrap(),
        )
        .unwrap();
        prop_assert!(loss.value >= 0.0 && loss.value.is_finite());
    }

    #[test]
    fn embedding_loss_is_translation_invariant(
        values in prop::collection::vec(-3.0..3.0f64, 24),
        raw in prop::collection::vec(0..4u32, 12),
        shift in prop::array::uniform2(-5.0..5.0f64),
    ) {
        let grid = ImageGrid::new(3, 4).unwrap();
        let seg = InstanceSegmentation::from_raw_labels(grid, &raw).unwrap();
        let moved: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + shift[i % 2]).collect();
        let margins = Margins::default();
        let a = embedding_loss(&EmbeddingMap::new(grid, 2, values).unwrap(), &seg, &margins).unwrap();
        let b = embedding_loss(&EmbeddingMap::new(grid, 2, moved).unwrap(), &seg, &margins).unwrap();
        prop_assert!(a.value >= 0.0);
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clustering_is_invariant_to_pixel_order(seed in 0..1000u64, planes in 2..7usize) {
        let grid = ImageGrid::new(16, 20).unwrap();
        let scene = generate_scene(&SceneSpec::new(grid, planes, seed).unwrap()).unwrap();
        let noise = EmbeddingNoiseSpec { seed, ..Default::default() };
        let emb = generate_embeddings(&scene, &noise, 2).unwrap();
        let mask = scene.segmentation.planar_mask();
        let config = MeanShiftConfig::default();
        let (clusters, assign) = cluster(&emb, &mask, &config).unwrap();
        for i in 0..grid.len() {
            let row = assign.row(i);
            if mask.is_planar(i) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(row.iter().all(|&w| w == 0.0));
            }
        }

        let order: Vec<usize> = (0..grid.len()).rev().collect();
        let rev_emb = EmbeddingMap::new(
            grid,
            2,
            order.iter().flat_map(|&i| emb.pixel(i).to_vec()).collect(),
        )
        .unwrap();
        let rev_mask = PlanarMask::new(grid, order.iter().map(|&i| mask.is_planar(i)).collect()).unwrap();
        let (rev_clusters, rev_assign) = cluster(&rev_emb, &rev_mask, &config).unwrap();
        prop_assert_eq!(clusters.len(), rev_clusters.len());
        let a = hard_labels(&assign);
        let b = hard_labels(&rev_assign);
        let b_back: Vec<u32> = (0..grid.len()).map(|i| b.labels()[grid.len() - 1 - i]).collect();
        prop_assert_eq!(rand_index_labels(a.labels(), &b_back), 1.0);
    }

    #[test]
    fn worker_count_does_not_change_results(seed in 0..1000u64) {
        let grid = ImageGrid::new(16, 20).unwrap();
        let scene = generate_scene(&SceneSpec::new(grid, 4, seed).unwrap()).unwrap();
        let emb = generate_embeddings(&scene, &EmbeddingNoiseSpec { seed, ..Default::default() }, 2).unwrap();
        let mask = scene.segmentation.planar_mask();
        let one = cluster(&emb, &mask, &MeanShiftConfig { workers: 1, ..Default::default() }).unwrap();
        let many = cluster(&emb, &mask, &MeanShiftConfig { workers: 3, ..Default::default() }).unwrap();
        prop_assert_eq!(one.0.centers(), many.0.centers());
        prop_assert_eq!(one.1.weights(), many.1.weights());
    }

    #[test]
    fn recall_grows_with_threshold(seed in 0..1000u64, scale in 0.0..0.2f64) {
        let grid = ImageGrid::new(20, 24).unwrap();
        let scene = generate_scene(&SceneSpec::new(grid, 4, seed).unwrap()).unwrap();
        let planes: Vec<Plane> = scene
            .planes
            .iter()
            .enumerate()
            .map(|(j, p)| Plane::new(p.params().map(|x| x * (1.0 + scale * (j as f64 - 1.5) / 1.5))).unwrap())
            .collect();
        let curve = recall_depth(
            &scene.segmentation,
            &planes,
            &scene.segmentation,
            &scene.depth,
            &scene.spec.intr,
            &depth_thresholds(),
        )
        .unwrap();
        for w in curve.plane_recall.windows(2).chain(curve.pixel_recall.windows(2)) {
            prop_assert!(w[0] <= w[1]);
        }
    }
}
