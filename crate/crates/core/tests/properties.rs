//! Property tests for the spec-level invariants: partition totality,
//! determinism, energy symmetries, evidence exclusivity, fusion argmax
//! stability and score normalization.

use proptest::prelude::*;

use partcut_core::energy::{total_energy, PairEdge, PairwiseWeights, UnaryTable};
use partcut_core::evaluation::ConfusionMatrix;
use partcut_core::model::{mask_to_object, ImagePlane, LabelMask, PartTaxonomy, ScoreMap};
use partcut_core::pipeline::{correlation_fuse, predict_scores, ScorerModel};
use partcut_core::skeleton::{assign_region_labels, rasterize, Segment};
use partcut_core::superpixels::{build_adjacency, segment_graph_based, SuperPixelPartition};

fn small_image() -> impl Strategy<Value = ImagePlane> {
    (4usize..12, 4usize..10).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3)
            .prop_map(move |pixels| ImagePlane::new(w, h, pixels).unwrap())
    })
}

fn small_mask() -> impl Strategy<Value = LabelMask> {
    (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0u8..=4, w * h)
            .prop_map(move |labels| LabelMask::new(w, h, labels).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn object_mask_preserves_foreground_area(mask in small_mask()) {
        let object = mask_to_object(&mask);
        prop_assert_eq!(object.foreground_area(), mask.foreground_area());
        prop_assert!(object.labels().iter().all(|&l| l <= 1));
    }

    #[test]
    fn partition_is_total_and_deterministic(
        image in small_image(),
        scale in 1.0f64..200.0,
        min_size in 1usize..20,
    ) {
        let partition = segment_graph_based(&image, scale, min_size, 0.5).unwrap();
        prop_assert_eq!(partition.region_of().len(), image.width() * image.height());
        prop_assert!(partition.region_of().iter().all(|&r| (r as usize) < partition.region_count()));
        let total: usize = partition.regions().iter().map(|r| r.pixel_count).sum();
        prop_assert_eq!(total, image.width() * image.height());
        let enforced = min_size.min(image.width() * image.height());
        prop_assert!(partition.regions().iter().all(|r| r.pixel_count >= enforced));

        let again = segment_graph_based(&image, scale, min_size, 0.5).unwrap();
        prop_assert_eq!(partition.region_of(), again.region_of());

        let graph = build_adjacency(&partition);
        if partition.region_count() >= 2 {
            for node in 0..graph.node_count {
                prop_assert!(graph.degree(node) >= 1, "region {} isolated", node);
            }
        }
    }

    #[test]
    fn energy_is_invariant_under_region_relabeling(
        costs in proptest::collection::vec(0.0f64..5.0, 18),
        weights in proptest::collection::vec(0.0f64..2.0, 3),
        labeling in proptest::collection::vec(0usize..3, 6),
        permutation in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let unary = UnaryTable::from_costs(3, costs.clone());
        let edges = vec![
            PairEdge { a: 0, b: 1, weight: weights[0] },
            PairEdge { a: 2, b: 3, weight: weights[1] },
            PairEdge { a: 4, b: 5, weight: weights[2] },
        ];
        let pairwise = PairwiseWeights { edges: edges.clone(), lambda: 1.0 };
        let base = total_energy(&labeling, &unary, &pairwise);

        // permuted instance: region i moves to slot permutation[i]
        let mut permuted_costs = vec![0.0; costs.len()];
        let mut permuted_labeling = vec![0usize; 6];
        for region in 0..6 {
            let target = permutation[region];
            permuted_costs[target * 3..(target + 1) * 3]
                .copy_from_slice(&costs[region * 3..(region + 1) * 3]);
            permuted_labeling[target] = labeling[region];
        }
        let permuted_edges: Vec<PairEdge> = edges
            .iter()
            .map(|e| PairEdge { a: permutation[e.a], b: permutation[e.b], weight: e.weight })
            .collect();
        let permuted = total_energy(
            &permuted_labeling,
            &UnaryTable::from_costs(3, permuted_costs),
            &PairwiseWeights { edges: permuted_edges, lambda: 1.0 },
        );
        prop_assert!((base - permuted).abs() < 1e-9);
    }

    #[test]
    fn energy_is_invariant_under_edge_flips(
        costs in proptest::collection::vec(0.0f64..5.0, 12),
        weight in 0.0f64..3.0,
        labeling in proptest::collection::vec(0usize..3, 4),
        flip in any::<bool>(),
    ) {
        let unary = UnaryTable::from_costs(3, costs);
        let edge = if flip {
            PairEdge { a: 2, b: 1, weight }
        } else {
            PairEdge { a: 1, b: 2, weight }
        };
        let pairwise = PairwiseWeights { edges: vec![edge], lambda: 1.0 };
        let forward = total_energy(&labeling, &unary, &pairwise);
        let flipped = PairwiseWeights {
            edges: vec![PairEdge { a: edge.b, b: edge.a, weight }],
            lambda: 1.0,
        };
        prop_assert_eq!(forward, total_energy(&labeling, &unary, &flipped));
    }

    #[test]
    fn region_states_partition_the_possibilities(
        map in proptest::collection::vec(0usize..5, 48),
        seg_x in 0usize..8,
        part in 1usize..5,
    ) {
        let partition = SuperPixelPartition::from_region_map(8, 6, &map);
        let segments = [Segment {
            a: (seg_x as f64, 0.0),
            b: (seg_x as f64, 5.0),
            part,
        }];
        let raster = rasterize(&segments, 8, 6, 1.0);
        let evidence = assign_region_labels(&partition, &raster);
        for region in 0..partition.region_count() {
            let has_label = evidence.part_label(region).is_some();
            let is_background = evidence.is_background(region);
            prop_assert!(!(has_label && is_background));
            // L_i present iff overlap counts are nonzero
            let overlap: u32 = evidence.overlap_counts(region).iter().sum();
            prop_assert_eq!(has_label, overlap > 0);
        }
    }

    #[test]
    fn raster_matches_per_pixel_redraw_oracle(
        segments in proptest::collection::vec(
            ((0.0f64..12.0), (0.0f64..10.0), (0.0f64..12.0), (0.0f64..10.0), 1usize..5),
            0..5,
        ),
        radius in 0.0f64..3.0,
    ) {
        let segments: Vec<Segment> = segments
            .into_iter()
            .map(|(ax, ay, bx, by, part)| Segment { a: (ax, ay), b: (bx, by), part })
            .collect();
        let raster = rasterize(&segments, 12, 10, radius);

        // independent oracle: for each pixel, the last segment in draw
        // order whose capsule covers it decides the label
        let rank = |part: usize| match part {
            2 => 0,
            4 => 1,
            3 => 2,
            1 => 3,
            p => 3 + p,
        };
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.sort_by_key(|&i| (rank(segments[i].part), i));
        for y in 0..10 {
            for x in 0..12 {
                let mut expected = 0u8;
                for &i in &order {
                    let s = &segments[i];
                    let (ax, ay) = s.a;
                    let (bx, by) = s.b;
                    let (dx, dy) = (bx - ax, by - ay);
                    let len_sq = dx * dx + dy * dy;
                    let t = if len_sq == 0.0 {
                        0.0
                    } else {
                        (((x as f64 - ax) * dx + (y as f64 - ay) * dy) / len_sq).clamp(0.0, 1.0)
                    };
                    let (cx, cy) = (ax + t * dx, ay + t * dy);
                    let d_sq = (x as f64 - cx) * (x as f64 - cx) + (y as f64 - cy) * (y as f64 - cy);
                    if d_sq <= radius * radius {
                        expected = s.part as u8;
                    }
                }
                prop_assert_eq!(raster.label(x, y), expected, "pixel ({}, {})", x, y);
            }
        }
    }

    #[test]
    fn fusion_never_changes_part_argmax(
        part_values in proptest::collection::vec(0.001f64..1.0, 5),
        object_fg in 0.001f64..0.999,
    ) {
        let sum: f64 = part_values.iter().sum();
        let normalized: Vec<f64> = part_values.iter().map(|v| v / sum).collect();
        let part = ScoreMap::new(1, 1, 5, normalized).unwrap();
        let object = ScoreMap::new(1, 1, 2, vec![1.0 - object_fg, object_fg]).unwrap();
        let fused = correlation_fuse(&part, &object);
        let argmax_parts = |m: &ScoreMap| {
            (1..5).fold(1, |best, c| {
                if m.value(c, 0, 0) > m.value(best, 0, 0) { c } else { best }
            })
        };
        prop_assert_eq!(argmax_parts(&part), argmax_parts(&fused.raw));
        prop_assert_eq!(argmax_parts(&part), argmax_parts(&fused.normalized));
    }

    #[test]
    fn predicted_scores_stay_normalized(
        seeds in proptest::collection::vec(-2.0f64..2.0, 10),
    ) {
        // random-ish model weights derived from the seeds
        let mut model = ScorerModel::zeros(5);
        let image = ImagePlane::filled(6, 6, [128, 60, 20]).unwrap();
        let partition = segment_graph_based(&image, 50.0, 4, 0.0).unwrap();
        let features = partcut_core::energy::extract_features(&image, &partition);
        let n_part = model.part_weights().len();
        let part: Vec<f64> = (0..n_part)
            .map(|i| seeds[i % seeds.len()] * ((i % 7) as f64 - 3.0))
            .collect();
        let object: Vec<f64> = (0..model.object_weights().len())
            .map(|i| seeds[(i + 3) % seeds.len()])
            .collect();
        model = ScorerModel::from_weights(5, part, object);
        let (part_map, object_map) = predict_scores(&model, &partition, &features);
        prop_assert!(part_map.is_normalized(1e-6));
        prop_assert!(object_map.is_normalized(1e-6));
    }

    #[test]
    fn confusion_row_sums_match_gt_histogram(
        gt in small_mask(),
    ) {
        let taxonomy = PartTaxonomy::human();
        let pred = LabelMask::new(gt.width(), gt.height(), gt.labels().iter().rev().copied().collect()).unwrap();
        let mut matrix = ConfusionMatrix::new(taxonomy.label_count());
        matrix.accumulate(&pred, &gt).unwrap();
        let mut histogram = [0u64; 5];
        for &g in gt.labels() {
            histogram[g as usize] += 1;
        }
        for (g, &count) in histogram.iter().enumerate() {
            prop_assert_eq!(matrix.row_sum(g), count);
        }
        prop_assert_eq!(matrix.total(), (gt.width() * gt.height()) as u64);

        // every IoU lies in [0, 1]; 1 exactly when row and column are
        // purely diagonal
        let report = partcut_core::evaluation::iou_report(&matrix, &taxonomy).unwrap();
        for (class, value) in report.per_class.iter().enumerate() {
            if let Some(v) = value {
                prop_assert!((0.0..=1.0).contains(v));
                let diagonal_only = matrix.row_sum(class) == matrix.count(class, class)
                    && matrix.col_sum(class) == matrix.count(class, class);
                prop_assert_eq!(*v == 1.0, diagonal_only);
            }
        }
        if let Some(object) = report.object {
            prop_assert!((0.0..=1.0).contains(&object));
        }
    }

    #[test]
    fn region_label_assignment_ignores_enumeration_order(
        map in proptest::collection::vec(0usize..4, 36),
        swap in (0usize..4, 0usize..4),
    ) {
        // renaming region ids must rename the evidence accordingly
        let (a, b) = swap;
        let renamed: Vec<usize> = map
            .iter()
            .map(|&r| if r == a { b } else if r == b { a } else { r })
            .collect();
        let partition = SuperPixelPartition::from_region_map(6, 6, &map);
        let permuted = SuperPixelPartition::from_region_map(6, 6, &renamed);
        let segments = [Segment { a: (0.0, 0.0), b: (5.0, 5.0), part: 2 }];
        let raster = rasterize(&segments, 6, 6, 1.0);
        let evidence = assign_region_labels(&partition, &raster);
        let evidence_permuted = assign_region_labels(&permuted, &raster);

        // compare per pixel: the region containing a pixel must carry the
        // same label under both enumerations
        for pixel in 0..36 {
            let region = partition.region_of()[pixel] as usize;
            let region_p = permuted.region_of()[pixel] as usize;
            prop_assert_eq!(
                evidence.part_label(region),
                evidence_permuted.part_label(region_p),
                "pixel {}", pixel
            );
        }
    }
}
