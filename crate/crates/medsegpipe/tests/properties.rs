//! Property tests for the pipeline's structural invariants.

use proptest::collection::vec;
use proptest::prelude::*;

use medsegpipe::augment::mirror;
use medsegpipe::batching::shuffle_order;
use medsegpipe::metrics::{dice_hard, jaccard};
use medsegpipe::patching::{compute_grid, extract_score_patches, merge_patches};
use medsegpipe::preprocess::{clip, one_hot_decode, one_hot_encode, scale_range};
use medsegpipe::volume::{ClassMap, ScoreVolume, Volume};

/// (shape, patch, overlap) triples small enough to scan exhaustively.
fn grid_spec() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>)> {
    (vec(1usize..10, 3), vec(1usize..10, 3)).prop_flat_map(|(shape, patch)| {
        let overlap = patch
            .iter()
            .map(|&p| (0usize..p).boxed())
            .collect::<Vec<_>>();
        (Just(shape), Just(patch), overlap)
    })
}

proptest! {
    #[test]
    fn patch_grids_cover_and_round_trip((shape, patch, overlap) in grid_spec(), seed in 0u64..1000) {
        let grid = compute_grid(&shape, &patch, &overlap).unwrap();

        // coverage of the padded shape
        let padded = &grid.padded_shape;
        let mut covered = vec![false; padded.iter().product()];
        for origin in &grid.origins {
            for z in origin[0]..origin[0] + patch[0] {
                for y in origin[1]..origin[1] + patch[1] {
                    for x in origin[2]..origin[2] + patch[2] {
                        covered[(z * padded[1] + y) * padded[2] + x] = true;
                    }
                }
            }
        }
        prop_assert!(covered.iter().all(|&c| c));

        // deterministic grids
        prop_assert_eq!(&grid, &compute_grid(&shape, &patch, &overlap).unwrap());

        // lossless merge of extracted patches
        let voxels: usize = shape.iter().product();
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f32 / 1000.0
        };
        let data: Vec<f32> = (0..2 * voxels).map(|_| next()).collect();
        let scores = ScoreVolume::new(shape.clone(), vec![1.0; 3], 2, data).unwrap();
        let merged = merge_patches(&extract_score_patches(&scores, &grid).unwrap(), &grid).unwrap();
        prop_assert_eq!(merged, scores);
    }

    #[test]
    fn clip_is_idempotent(data in vec(-500f32..500.0, 1..64), lo in -100f64..0.0, hi in 1f64..100.0) {
        let n = data.len();
        let v = Volume::new(vec![1, n], vec![1.0; 2], data).unwrap();
        let once = clip(&v, lo, hi).unwrap();
        let twice = clip(&once, lo, hi).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.data().iter().all(|&x| (lo as f32..=hi as f32).contains(&x)));
    }

    #[test]
    fn scale_range_is_idempotent_on_its_target(data in vec(-50f32..50.0, 2..64)) {
        let n = data.len();
        let v = Volume::new(vec![1, n], vec![1.0; 2], data).unwrap();
        let once = scale_range(&v, 0.0, 1.0).unwrap();
        let twice = scale_range(&once, 0.0, 1.0).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn one_hot_is_invertible(ids in vec(0u32..4, 1..128)) {
        let n = ids.len();
        let m = ClassMap::new(vec![1, n], vec![1.0; 2], ids, 4).unwrap();
        let encoded = one_hot_encode(&m);
        // channel sums are exactly one
        for i in 0..n {
            let sum: f32 = (0..4).map(|c| encoded.channel(c)[i]).sum();
            prop_assert_eq!(sum, 1.0);
        }
        prop_assert_eq!(one_hot_decode(&encoded), m);
    }

    #[test]
    fn dice_jaccard_identity(pred in vec(0u32..3, 27), truth in vec(0u32..3, 27)) {
        let p = ClassMap::new(vec![3, 3, 3], vec![1.0; 3], pred, 3).unwrap();
        let t = ClassMap::new(vec![3, 3, 3], vec![1.0; 3], truth, 3).unwrap();
        for c in 0..3u32 {
            let d = dice_hard(&p, &t, c).unwrap();
            let j = jaccard(&p, &t, c).unwrap();
            prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&j));
        }
    }

    #[test]
    fn mirror_is_an_involution(
        data in vec(-10f32..10.0, 24),
        mask in vec(any::<bool>(), 3),
    ) {
        let img = Volume::new(vec![2, 3, 4], vec![1.0; 3], data.clone()).unwrap();
        let ids: Vec<u32> = data.iter().map(|&v| u32::from(v > 0.0)).collect();
        let lab = ClassMap::new(vec![2, 3, 4], vec![1.0; 3], ids, 2).unwrap();
        let (i1, l1) = mirror(&img, &lab, &mask).unwrap();
        let (i2, l2) = mirror(&i1, &l1, &mask).unwrap();
        prop_assert_eq!(i2, img);
        prop_assert_eq!(l2, lab);
    }

    #[test]
    fn shuffle_is_always_a_permutation(n in 1usize..200, epoch in 0u64..50, seed in 0u64..1000) {
        let mut order = shuffle_order(n, epoch, seed);
        prop_assert_eq!(order.len(), n);
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}
