mod common;

use common::{oracle_dice, oracle_threshold};
use labelqc::dsc::{
    compute_class_stats, dice, pair_dice, read_threshold_table, should_compare,
    write_threshold_table, DiceSpace, DscStats,
};
use labelqc::volume::LabelVolume;
use labelqc::OrganClass;
use proptest::prelude::*;

#[test]
fn set_arithmetic_example() {
    assert_eq!(dice(&[1, 1, 0], &[0, 1, 1]).unwrap(), 0.5);
    assert_eq!(dice(&[1, 1], &[1, 1]).unwrap(), 1.0);
    assert_eq!(dice(&[1, 0], &[0, 1]).unwrap(), 0.0);
    assert!(dice(&[1], &[1, 0]).is_err());
}

#[test]
fn threshold_examples() {
    let c = OrganClass::Liver;
    let report = compute_class_stats(&[(c, 0.9), (c, 0.8), (c, 1.0)], &[c]);
    let s = report.get(c).unwrap();
    assert!((s.mean - 0.9).abs() < 1e-12);
    assert!((s.std - 0.081_649_658).abs() < 1e-9);
    assert!((s.threshold - 0.81835).abs() < 1e-5);
    assert!((s.threshold - oracle_threshold(&[0.9, 0.8, 1.0])).abs() < 1e-12);

    let single = compute_class_stats(&[(c, 0.7)], &[c]);
    assert_eq!(single.get(c).unwrap().threshold, 0.7);
    let flat = compute_class_stats(&[(c, 0.6); 5], &[c]);
    assert_eq!(flat.get(c).unwrap().threshold, 0.6);

    let missing = compute_class_stats(&[(c, 0.6)], &[c, OrganClass::Spleen]);
    assert!(missing.get(OrganClass::Spleen).is_none());
    assert_eq!(missing.warnings.len(), 1);
}

#[test]
fn gate_boundary() {
    let s = DscStats {
        class: OrganClass::Aorta,
        mean: 0.9,
        std: 0.082,
        threshold: 0.818,
    };
    assert!(should_compare(0.5, &s));
    assert!(!should_compare(0.9, &s));
    assert!(!should_compare(0.818, &s));
}

#[test]
fn threshold_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let stats = vec![
        DscStats::new(OrganClass::Aorta, 0.91, 0.05),
        DscStats::new(OrganClass::Stomach, 0.5, 0.25),
    ];
    write_threshold_table(&path, &stats).unwrap();
    assert_eq!(read_threshold_table(&path).unwrap(), stats);
}

#[test]
fn projected_and_volumetric_spaces_differ() {
    let dims = [3, 2, 1];
    let a = LabelVolume::new(OrganClass::Liver, "a", dims, vec![1, 0, 0, 0, 0, 0]).unwrap();
    let b = LabelVolume::new(OrganClass::Liver, "b", dims, vec![0, 0, 0, 1, 0, 0]).unwrap();
    // Same AP column, different depth.
    assert_eq!(pair_dice(&a, &b, DiceSpace::Projected).unwrap(), 1.0);
    assert_eq!(pair_dice(&a, &b, DiceSpace::Volumetric).unwrap(), 0.0);
}

fn mask_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..=256).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..2, n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dice_matches_set_formula((a, b) in mask_pair()) {
        let d = dice(&a, &b).unwrap();
        prop_assert!((d - oracle_dice(&a, &b)).abs() <= 1e-12);
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn stats_ignore_sample_order(mut values in prop::collection::vec(0.0f64..=1.0, 1..40), seed in any::<u64>()) {
        let c = OrganClass::Pancreas;
        let forward: Vec<_> = values.iter().map(|&v| (c, v)).collect();
        let a = compute_class_stats(&forward, &[c]);
        let k = (seed as usize) % values.len();
        values.rotate_left(k);
        values.reverse();
        let shuffled: Vec<_> = values.iter().map(|&v| (c, v)).collect();
        let b = compute_class_stats(&shuffled, &[c]);
        prop_assert_eq!(a.stats, b.stats.clone());
        let s = b.get(c).unwrap();
        prop_assert!((s.threshold - oracle_threshold(&values)).abs() < 1e-9);
        prop_assert!(s.threshold <= s.mean);
        prop_assert!(s.std >= 0.0);
    }
}
