mod common;

use common::bounds_by_vertex_enumeration;
use ivkit_core::data::BinaryIVTable;
use ivkit_core::late::itt_effects;
use ivkit_core::{
    compliance_shares, exclusion_tests, flu_table, iv_ratio, late, natural_bounds, table_from_dataset, IvError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cell_probabilities(t: &BinaryIVTable) -> [[[f64; 2]; 2]; 2] {
    let mut p = [[[0.0; 2]; 2]; 2];
    for (z, pz) in p.iter_mut().enumerate() {
        for (x, pzx) in pz.iter_mut().enumerate() {
            for (y, cell) in pzx.iter_mut().enumerate() {
                *cell = t.prob(y, x, z);
            }
        }
    }
    p
}

fn bounds(t: &BinaryIVTable) -> (f64, f64) {
    let set = natural_bounds(t).unwrap();
    assert_eq!(set.intervals().len(), 1);
    let i = set.intervals()[0];
    (i.lo, i.hi)
}

/// Observed table from latent counts `latent[type][y0][y1]` (type 0 never,
/// 1 complier, 2 always-taker), replicated in both arms.
fn table_from_latent(latent: [[[u64; 2]; 2]; 3]) -> BinaryIVTable {
    let mut counts = [[[0u64; 2]; 2]; 2];
    for (t, lt) in latent.iter().enumerate() {
        for y0 in 0..2 {
            for y1 in 0..2 {
                let c = lt[y0][y1];
                for z in 0..2 {
                    let treated = t == 2 || (t == 1 && z == 1);
                    let y = if treated { y1 } else { y0 };
                    counts[y][treated as usize][z] += c;
                }
            }
        }
    }
    BinaryIVTable::new(counts).unwrap()
}

#[test]
fn toy_table_matches_enumeration_oracle() {
    let t = BinaryIVTable::from_arms([6, 5, 2, 2], [4, 3, 4, 4]).unwrap();
    assert_eq!(t.total(), 30);
    assert!(!exclusion_tests(&t).any_violated());
    let (lo, hi) = bounds_by_vertex_enumeration(cell_probabilities(&t));
    let (a, b) = bounds(&t);
    assert!((a - lo).abs() < 1e-9 && (b - hi).abs() < 1e-9, "[{a}, {b}] vs [{lo}, {hi}]");
}

#[test]
fn flu_bounds_and_width() {
    let t = flu_table();
    let (lo, hi) = bounds(&t);
    assert!((lo - -0.2396).abs() < 5e-5);
    assert!((hi - 0.6420).abs() < 5e-5);
    assert!((hi - lo - (1.0 - compliance_shares(&t).pi_c)).abs() < 1e-12);
}

#[test]
fn late_equals_iv_ratio_on_expanded_flu() {
    let t = flu_table();
    let a = late(&t).unwrap().point;
    let b = iv_ratio(&t.expand()).unwrap().beta1;
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn empty_cells_with_zero_weight() {
    // No treated units under Z = 0 and no untreated units under Z = 1.
    let t = BinaryIVTable::from_arms([5, 5, 0, 0], [0, 0, 5, 5]).unwrap();
    assert_eq!(compliance_shares(&t).pi_c, 1.0);
    let (lo, hi) = bounds(&t);
    assert_eq!(lo, hi);
    assert_eq!(lo, itt_effects(&t).itt_y);
}

#[test]
fn compliant_population_has_no_violations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (pi_n, pi_c) = (0.4, 0.35);
    let mut counts = [[[0u64; 2]; 2]; 2];
    for _ in 0..400_000 {
        let z = rng.random_bool(0.5) as usize;
        let u: f64 = rng.random();
        let t = if u < pi_n { 0 } else if u < pi_n + pi_c { 1 } else { 2 };
        let y0 = rng.random_bool([0.3, 0.4, 0.5][t]) as usize;
        let y1 = rng.random_bool([0.3, 0.6, 0.7][t]) as usize;
        let x = (t == 2 || (t == 1 && z == 1)) as usize;
        let y = if x == 1 { y1 } else { y0 };
        counts[y][x][z] += 1;
    }
    let t = BinaryIVTable::new(counts).unwrap();
    assert!(!exclusion_tests(&t).any_violated(), "{:?}", exclusion_tests(&t));
}

#[test]
fn defier_heavy_late_is_an_error() {
    let t = BinaryIVTable::from_arms([2, 2, 8, 8], [8, 8, 2, 2]).unwrap();
    assert!(compliance_shares(&t).monotonicity_violated);
    assert!(matches!(late(&t), Err(IvError::NonPositiveCompliance { .. })));
}

fn arb_table() -> impl Strategy<Value = BinaryIVTable> {
    (prop::array::uniform4(0u64..60), prop::array::uniform4(0u64..60))
        .prop_filter("both arms non-empty", |(a, b)| a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0)
        .prop_map(|(a, b)| BinaryIVTable::from_arms(a, b).unwrap())
}

fn arb_latent() -> impl Strategy<Value = [[[u64; 2]; 2]; 3]> {
    prop::array::uniform12(0u64..20)
        .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
        .prop_map(|c| {
            let mut l = [[[0u64; 2]; 2]; 3];
            for (i, v) in c.iter().enumerate() {
                l[i / 4][(i % 4) / 2][i % 2] = *v;
            }
            l
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn width_identity(t in arb_table()) {
        if let Ok(set) = natural_bounds(&t) {
            let i = set.intervals()[0];
            let pi_c = compliance_shares(&t).pi_c;
            prop_assert!((i.hi - i.lo - (1.0 - pi_c)).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_contain_itt_and_factorize(t in arb_table()) {
        let shares = compliance_shares(&t);
        prop_assume!(shares.pi_c > 0.0 && shares.pi_c <= 1.0);
        let itt_y = itt_effects(&t).itt_y;
        if let Ok(set) = natural_bounds(&t) {
            prop_assert!(set.contains(itt_y) || (set.intervals()[0].lo - itt_y).abs() < 1e-12);
        }
        let tau = late(&t).unwrap().point;
        prop_assert!((itt_y - tau * shares.pi_c).abs() < 1e-12);
    }

    #[test]
    fn outcome_relabeling(t in arb_table()) {
        let flipped = t.flip_outcome();
        if let (Ok(a), Ok(b)) = (natural_bounds(&t), natural_bounds(&flipped)) {
            let (a, b) = (a.intervals()[0], b.intervals()[0]);
            prop_assert!((a.lo + b.hi).abs() < 1e-12 && (a.hi + b.lo).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (late(&t), late(&flipped)) {
            prop_assert!((a.point + b.point).abs() < 1e-12);
        }
    }

    #[test]
    fn late_matches_iv_ratio(t in arb_table()) {
        prop_assume!(compliance_shares(&t).pi_c > 0.05);
        let d = t.expand();
        if let (Ok(a), Ok(b)) = (late(&t), iv_ratio(&d)) {
            prop_assert!((a.point - b.beta1).abs() < 1e-10);
        }
    }

    #[test]
    fn tabulation_round_trip(t in arb_table()) {
        let d = t.expand();
        prop_assert_eq!(table_from_dataset(&d).unwrap(), t);
    }

    #[test]
    fn model_consistent_tables_match_oracle(latent in arb_latent()) {
        let t = table_from_latent(latent);
        prop_assert!(!exclusion_tests(&t).any_violated());
        let (lo, hi) = bounds_by_vertex_enumeration(cell_probabilities(&t));
        let (a, b) = bounds(&t);
        prop_assert!((a - lo).abs() < 1e-9, "lower {} vs {}", a, lo);
        prop_assert!((b - hi).abs() < 1e-9, "upper {} vs {}", b, hi);
    }
}
