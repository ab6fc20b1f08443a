mod common;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;
use common::{all_tables, binomial_table, exact_upper_tail};
use tcube::stats::{
    chi_square_p, expected_count, fisher_exact_p, select_test, test_table, ContingencyTable, TestKind,
};

#[test]
fn fisher_matches_enumeration_up_to_40() {
    let c = binomial_table(40);
    let mut worst: f64 = 0.0;
    let mut checked = 0u64;
    for t in all_tables(40) {
        let diff = (fisher_exact_p(&t) - exact_upper_tail(&c, &t)).abs();
        worst = worst.max(diff);
        checked += 1;
    }
    assert!(checked > 135_000);
    assert!(worst <= 1e-12, "largest deviation {worst:e}");
}

#[test]
fn fisher_matches_statrs_on_large_tables() {
    let cases = [
        (60, 400, 900, 15_000),
        (23, 90, 320, 4_000),
        (5, 1, 2, 3_000),
        (150, 2_000, 1_800, 30_000),
    ];
    for (a, b, c, d) in cases {
        let t = ContingencyTable::new(a, b, c, d);
        let (n, row, col) = (t.total(), a + b, a + c);
        let oracle: f64 = (a..=row.min(col))
            .map(|x| (ln_binomial(row, x) + ln_binomial(n - row, col - x) - ln_binomial(n, col)).exp())
            .sum();
        let p = fisher_exact_p(&t);
        assert!(((p - oracle) / oracle).abs() < 1e-8, "{t:?}: {p:e} vs {oracle:e}");
    }
}

/// Below or at its expectation, the target cell has p ≥ 1/2.
#[test]
fn fisher_at_most_expected_is_not_significant() {
    for t in all_tables(30) {
        if t.total() == 0 {
            continue;
        }
        if (t.a as f64) <= expected_count(&t).unwrap() {
            assert!(fisher_exact_p(&t) >= 0.5, "{t:?}");
        }
    }
}

#[test]
fn chi_square_reference_table() {
    let out = chi_square_p(&ContingencyTable::new(20, 10, 10, 20)).unwrap();
    assert!((out.statistic - 20.0 / 3.0).abs() < 1e-9);
    let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(out.statistic);
    assert!((out.two_sided - oracle).abs() < 1e-12);
    assert!((out.two_sided - 0.009823).abs() < 1e-6);
    assert!((out.p_value - out.two_sided / 2.0).abs() < 1e-15);

    let flat = chi_square_p(&ContingencyTable::new(25, 25, 25, 25)).unwrap();
    assert_eq!(flat.statistic, 0.0);
    assert_eq!(flat.p_value, 1.0);
}

#[test]
fn routing_rule() {
    assert_eq!(select_test(&ContingencyTable::new(3, 1, 1, 3)), TestKind::Fisher);
    assert_eq!(select_test(&ContingencyTable::new(50, 50, 50, 50)), TestKind::ChiSquare);
    // Large total but a small expected cell.
    assert_eq!(select_test(&ContingencyTable::new(1, 2, 500, 5_000)), TestKind::Fisher);
    // Balanced cells but fewer than 200 events.
    assert_eq!(select_test(&ContingencyTable::new(40, 40, 40, 40)), TestKind::Fisher);
    assert!(test_table(&ContingencyTable::new(0, 0, 0, 0)).is_err());
}

proptest! {
    #[test]
    fn chi_square_matches_statrs(a in 0u64..2_000, b in 1u64..2_000, c in 1u64..2_000, d in 1u64..2_000) {
        let t = ContingencyTable::new(a, b, c, d);
        let out = chi_square_p(&t).unwrap();
        let e = t.expected_cells().unwrap();
        let o = [a, b, c, d];
        let stat: f64 = (0..4).map(|i| (o[i] as f64 - e[i]).powi(2) / e[i]).sum();
        prop_assert!((out.statistic - stat).abs() <= 1e-9 * stat.max(1.0));
        let tail = 1.0 - ChiSquared::new(1.0).unwrap().cdf(out.statistic);
        if tail > 1e-10 {
            prop_assert!((out.two_sided - tail).abs() <= 1e-9 * tail.max(1e-3));
        }
        prop_assert!(out.p_value >= 0.0 && out.p_value <= 1.0);
        if (a as f64) <= e[0] {
            prop_assert_eq!(out.p_value, 1.0);
        }
    }

    /// Moving one event into the target/current cell with all margins fixed
    /// can only lower the p-value.
    #[test]
    fn fisher_is_monotone_in_a(a in 0u64..40, b in 1u64..50, c in 1u64..50, d in 0u64..500) {
        let before = fisher_exact_p(&ContingencyTable::new(a, b, c, d));
        let after = fisher_exact_p(&ContingencyTable::new(a + 1, b - 1, c - 1, d + 1));
        prop_assert!(after <= before + 1e-12, "{after} > {before}");
    }
}
