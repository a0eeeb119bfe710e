mod common;

use chipbeam::design::{enumerate_known_sets, pitch_ratio, solve_design, Param, DEFAULT_PITCH_BAND};
use chipbeam::{Error, ErrorKind};
use common::{design_determined, forward_design, DESIGN_NAMES};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn worked_example_by_hand() {
    let d = solve_design(
        &[
            (Param::Magnification, 0.187),
            (Param::SpacingChip, 73.4e-6),
            (Param::SpotQubit, 2e-6),
        ],
        650e-9,
    )
    .unwrap();
    // s_q = M s_c, w_c = w_q / M, na_q = lambda / (pi w_q), na_c = M na_q.
    let na_q = 650e-9 / (std::f64::consts::PI * 2e-6);
    assert!(rel(d.s_q, 0.187 * 73.4e-6) < 1e-12);
    assert!(rel(d.w_c, 2e-6 / 0.187) < 1e-12);
    assert!(rel(d.na_qubit, na_q) < 1e-12);
    assert!(rel(d.na_chip, 0.187 * na_q) < 1e-12);
    assert!((d.s_q - 13.7258e-6).abs() < 1e-10);
    assert!((d.w_c - 10.695e-6).abs() < 1e-9);
    assert!((d.na_qubit - 0.10345).abs() < 1e-5);
    assert!((d.na_chip - 0.019345).abs() < 1e-6);
}

#[test]
fn all_known_sets_classify_and_round_trip() {
    let sets = enumerate_known_sets();
    assert_eq!(sets.len(), 35);
    let truth = forward_design(3.1e-6, 41.0e-6, 0.23, 650e-9);
    let mut solvable = 0;
    for (set, determined) in sets {
        let idx: Vec<usize> = set.iter().map(|p| p.index()).collect();
        let names: Vec<&str> = idx.iter().map(|&k| DESIGN_NAMES[k]).collect();
        assert_eq!(determined, design_determined(&idx), "{names:?}");
        let known: Vec<(Param, f64)> = set.iter().map(|&p| (p, truth[p.index()])).collect();
        match solve_design(&known, 650e-9) {
            Ok(d) => {
                assert!(determined, "{names:?} solved but should not be");
                solvable += 1;
                for p in Param::ALL {
                    assert!(rel(d.get(p), truth[p.index()]) < 1e-9, "{names:?}: {p}");
                }
            }
            Err(e) => {
                assert!(!determined, "{names:?}: {e}");
                assert!(matches!(e, Error::Underdetermined(_)), "{names:?}: {e}");
                assert_eq!(e.kind(), ErrorKind::Validation);
            }
        }
    }
    assert!(solvable > 0 && solvable < 35);
}

#[test]
fn contradictory_values_are_reported() {
    // w_c and na_c are tied together; giving both with the wrong product is a contradiction.
    let e = solve_design(
        &[
            (Param::SpotChip, 10e-6),
            (Param::NaChip, 0.05),
            (Param::Magnification, 0.2),
        ],
        650e-9,
    )
    .unwrap_err();
    assert!(matches!(e, Error::Inconsistent(_)), "{e}");
}

#[test]
fn pitch_of_five_is_in_band() {
    let p = pitch_ratio(73.4e-6, 14.68e-6, DEFAULT_PITCH_BAND);
    assert!((p.ratio - 5.0).abs() < 1e-12);
    assert!(p.in_band);
    assert!(!pitch_ratio(40e-6, 14.68e-6, DEFAULT_PITCH_BAND).in_band);
}

proptest! {
    #[test]
    fn solvable_sets_recover_random_designs(
        w in 0.5e-6f64..20e-6,
        s in 5e-6f64..500e-6,
        m in 0.05f64..5.0,
        lambda in 300e-9f64..1.6e-6,
    ) {
        let truth = forward_design(w, s, m, lambda);
        prop_assume!(truth[2] < 1.0 && truth[5] < 1.0);
        for (set, determined) in enumerate_known_sets() {
            if !determined {
                continue;
            }
            let known: Vec<(Param, f64)> = set.iter().map(|&p| (p, truth[p.index()])).collect();
            let d = solve_design(&known, lambda).unwrap();
            for p in Param::ALL {
                prop_assert!(rel(d.get(p), truth[p.index()]) < 1e-9);
            }
        }
    }
}
