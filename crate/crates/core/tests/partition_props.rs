use ggt_core::init::standard_normal;
use ggt_core::partition::{
    dilated_split_permutation, merge, split, window_split_permutation, PartitionSpec,
};
use proptest::prelude::*;

fn valid_spec() -> impl Strategy<Value = PartitionSpec> {
    (1usize..=4, 1usize..=5, 1usize..=5)
        .prop_map(|(m, a, b)| PartitionSpec::new(m * a, m * b, m).unwrap())
}

proptest! {
    #[test]
    fn permutations_are_bijections(spec in valid_spec()) {
        for perm in [dilated_split_permutation(&spec), window_split_permutation(&spec)] {
            let mut sorted = perm.forward().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..spec.tokens()).collect::<Vec<_>>());
            for (i, &f) in perm.forward().iter().enumerate() {
                prop_assert_eq!(perm.inverse()[f], i);
            }
        }
    }

    #[test]
    fn split_and_merge_invert_each_other(spec in valid_spec(), seed in 0u64..1000) {
        let x = standard_normal::<f64>(vec![spec.tokens(), 3], seed);
        let perm = dilated_split_permutation(&spec);
        prop_assert_eq!(merge(&split(&x, &perm).unwrap(), &perm).unwrap(), x.clone());
        prop_assert_eq!(split(&merge(&x, &perm).unwrap(), &perm).unwrap(), x);
    }

    #[test]
    fn permutations_depend_only_on_geometry(spec in valid_spec()) {
        let a = dilated_split_permutation(&spec);
        let b = dilated_split_permutation(&spec);
        prop_assert_eq!(a.forward(), b.forward());
    }
}

#[test]
fn dilated_split_groups_residue_classes_exhaustively() {
    // every valid spec with h, w ≤ 16: token (a, b) lands in partition
    // (a mod h/M, b mod w/M), at intra-partition offset (p, q) with
    // a = i + p·h/M, b = j + q·w/M
    for h in 1..=16usize {
        for w in 1..=16usize {
            for m in 1..=h.min(w) {
                if h % m != 0 || w % m != 0 {
                    continue;
                }
                let spec = PartitionSpec::new(h, w, m).unwrap();
                let (dh, dw) = spec.dilation();
                let perm = dilated_split_permutation(&spec);
                let m2 = m * m;
                assert_eq!(spec.partitions() * m2, h * w);
                for (slot, &tok) in perm.forward().iter().enumerate() {
                    let (a, b) = (tok / w, tok % w);
                    let part = slot / m2;
                    let (i, j) = (part / dw, part % dw);
                    assert_eq!((a % dh, b % dw), (i, j), "h={h} w={w} m={m} slot={slot}");
                    let r = slot % m2;
                    let (p, q) = (r / m, r % m);
                    assert_eq!((a, b), (i + p * dh, j + q * dw));
                }
            }
        }
    }
}

#[test]
fn window_and_dilated_permutations_coincide_only_when_degenerate() {
    // equal exactly when h = w = M (single partition)
    for (h, w, m) in [(3usize, 3usize, 3usize), (2, 2, 2), (1, 1, 1)] {
        let spec = PartitionSpec::new(h, w, m).unwrap();
        assert_eq!(
            dilated_split_permutation(&spec).forward(),
            window_split_permutation(&spec).forward()
        );
    }
    for (h, w, m) in [(4usize, 4usize, 2usize), (6, 4, 2), (8, 8, 4)] {
        let spec = PartitionSpec::new(h, w, m).unwrap();
        assert_ne!(
            dilated_split_permutation(&spec).forward(),
            window_split_permutation(&spec).forward()
        );
    }
}
