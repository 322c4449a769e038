mod common;

use std::collections::HashSet;

use alexbench::data::idx::{parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels};
use alexbench::data::{
    load_split, normalize, stratified_seed_from, subsample_indices, ImageTensor, LoadError, Oracle, PoolError, Split,
};
use common::fixture;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor() -> impl Strategy<Value = ImageTensor> {
    (0usize..6, 1usize..8, 1usize..8).prop_flat_map(|(count, rows, cols)| {
        proptest::collection::vec(any::<u8>(), count * rows * cols).prop_map(move |pixels| ImageTensor {
            count,
            rows,
            cols,
            pixels,
        })
    })
}

proptest! {
    #[test]
    fn image_round_trip(t in tensor()) {
        let bytes = write_idx_images(&t);
        let back = parse_idx_images(&bytes).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(write_idx_images(&back), bytes);
    }

    #[test]
    fn label_round_trip(labels in proptest::collection::vec(0u8..10, 0..64)) {
        let bytes = write_idx_labels(&labels);
        prop_assert_eq!(parse_idx_labels(&bytes, 10).unwrap(), labels);
    }

    #[test]
    fn truncation_never_panics(t in tensor(), cut in 0usize..64) {
        let bytes = write_idx_images(&t);
        let cut = cut.min(bytes.len());
        if cut < bytes.len() {
            prop_assert!(parse_idx_images(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn normalized_pixels_stay_in_unit_range(pixels in proptest::collection::vec(any::<u8>(), 1..100)) {
        let v = normalize(&pixels);
        prop_assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn stratified_seed_partitions_the_candidates(
        labels in proptest::collection::vec(0u8..10, 60..120),
        q in 1usize..3,
        seed in any::<u64>(),
    ) {
        let candidates: Vec<usize> = (0..labels.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match stratified_seed_from(&candidates, &labels, q, &mut rng) {
            Ok((s, u)) => {
                prop_assert_eq!(s.len(), 10 * q);
                prop_assert!(s.class_counts().iter().all(|&c| c == q));
                prop_assert!(s.entries().iter().all(|&(i, y)| labels[i] == y));
                prop_assert_eq!(s.len() + u.len(), labels.len());
                prop_assert!(u.indices().iter().all(|&i| !s.contains(i)));
            }
            Err(PoolError::InsufficientClassCount { class, available, required }) => {
                prop_assert_eq!(required, q);
                prop_assert_eq!(labels.iter().filter(|&&y| usize::from(y) == class).count(), available);
                prop_assert!(available < q);
            }
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn subsample_is_sorted_and_distinct(n in 0usize..500, limit in proptest::option::of(0usize..600), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let got = subsample_indices(n, limit, &mut rng);
        prop_assert_eq!(got.len(), limit.map_or(n, |l| l.min(n)));
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(got.iter().all(|&i| i < n));
    }
}

#[test]
fn transfer_is_all_or_nothing() {
    let labels = vec![3u8, 1, 4, 1, 5, 9, 2, 6];
    let oracle = Oracle::new(&labels);
    let mut s = alexbench::data::LabeledPool::from_entries(vec![(0, 3)]).unwrap();
    let mut u = alexbench::data::UnlabeledPool::new((1..8).collect());
    let before = (s.clone(), u.clone());
    assert!(oracle.transfer(&[2, 0], &mut s, &mut u).is_err());
    assert!(oracle.transfer(&[2, 2], &mut s, &mut u).is_err());
    assert_eq!((s.clone(), u.clone()), before);
    oracle.transfer(&[5, 2], &mut s, &mut u).unwrap();
    assert_eq!(s.entries().iter().map(|&(i, _)| i).collect::<HashSet<_>>(), HashSet::from([0, 2, 5]));
    assert!(s.contains(5) && !u.contains(5));
    assert_eq!(s.entries().iter().find(|e| e.0 == 5).unwrap().1, 9);
}

#[test]
fn gzip_and_plain_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let plain = std::fs::read(fixture("valid-images-idx3-ubyte")).unwrap();
    let gz = std::fs::read(fixture("valid-images-idx3-ubyte.gz")).unwrap();
    let labels = std::fs::read(fixture("valid-labels-idx1-ubyte")).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (d, name, bytes) in [(&a, "train-images-idx3-ubyte", &plain), (&b, "train-images-idx3-ubyte.gz", &gz)] {
        std::fs::create_dir_all(d).unwrap();
        std::fs::write(d.join(name), bytes).unwrap();
        std::fs::write(d.join("train-labels-idx1-ubyte"), &labels).unwrap();
    }
    let x = load_split(&a, Split::Train).unwrap();
    let y = load_split(&b, Split::Train).unwrap();
    assert_eq!(x.images, y.images);
    assert_eq!(x.labels, y.labels);
    assert!(matches!(load_split(&a, Split::Test), Err(LoadError::Missing { .. })));
}
