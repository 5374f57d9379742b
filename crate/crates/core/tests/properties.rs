use ganbench_core::evaluator::{count_histogram_images, CountConfig};
use ganbench_core::pointgen::{generate, normalize_points, PointKind, PointParams, NORMALIZED_BOUND};
use ganbench_core::scenegen::{render_scene, rects_overlap, rects_touch, sample_scene, ImageDatasetName, Rect, SceneConfig};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = PointKind> {
    prop_oneof![
        Just(PointKind::Blobs),
        Just(PointKind::Circles),
        Just(PointKind::SCurve),
        Just(PointKind::SwissRoll)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn point_generation_is_seed_determined(kind in kind_strategy(), n in 1usize..300, seed: u64, noise in 0.0f64..0.3) {
        let p = PointParams::default_for(kind);
        let a = generate(&p, n, noise, seed).unwrap();
        prop_assert_eq!(&a, &generate(&p, n, noise, seed).unwrap());
        prop_assert_eq!(a.points.len(), n * kind.dim());
    }

    #[test]
    fn normalisation_round_trips(kind in kind_strategy(), n in 2usize..300, seed: u64) {
        let ds = generate(&PointParams::default_for(kind), n, 0.05, seed).unwrap();
        let (norm, tf) = normalize_points(&ds).unwrap();
        prop_assert!(norm.points.iter().all(|v| v.abs() <= NORMALIZED_BOUND + 1e-12));
        let back = tf.invert_all(&norm.points);
        for (a, b) in back.iter().zip(&ds.points) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn overlap_predicates_are_symmetric(ax in 0i32..24, ay in 0i32..24, bx in 0i32..24, by in 0i32..24, e in 1u32..6) {
        let (a, b) = (Rect { x: ax, y: ay, edge: e }, Rect { x: bx, y: by, edge: e });
        prop_assert_eq!(rects_overlap(a, b), rects_overlap(b, a));
        prop_assert_eq!(rects_touch(a, b), rects_touch(b, a));
        prop_assert!(!rects_overlap(a, b) || rects_touch(a, b));
    }

    #[test]
    fn square_scenes_render_exact_foreground(seed: u64, index in 0u64..1000, which in 0usize..3) {
        let name = [ImageDatasetName::Squares1x4, ImageDatasetName::Squares3x4, ImageDatasetName::Squares1x16][which];
        let (count, edge) = name.square_layout().unwrap();
        let s = sample_scene(name, seed, index, &SceneConfig::default()).unwrap();
        let img = render_scene(&s.annotation).unwrap();
        let fg = img.data.iter().filter(|&&v| v == 1.0).count();
        prop_assert_eq!(fg, count * (edge * edge) as usize);
        prop_assert_eq!(img.data.iter().filter(|&&v| v == -1.0).count() + fg, 28 * 28);
    }

    #[test]
    fn histogram_mass_is_conserved(seed: u64, n in 0usize..40) {
        let imgs: Vec<_> = (0..n)
            .map(|i| render_scene(&sample_scene(ImageDatasetName::Ct2, seed, i as u64, &SceneConfig::default()).unwrap().annotation).unwrap())
            .collect();
        let h = count_histogram_images(&imgs, &CountConfig::default(), Some(4));
        prop_assert_eq!(h.histogram.values().sum::<usize>(), n);
        if let Some(rate) = h.exact_count_rate {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
    }
}
