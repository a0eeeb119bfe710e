mod common;

use std::f64::consts::PI;

use chipbeam::ion_chain::{equilibrium_positions, force_residual, physical_positions, potential_energy, IonChainSpec};
use common::{brute_force_chain, chain_residual};
use proptest::prelude::*;

#[test]
fn small_chains_have_closed_forms() {
    // Two ions: u^3 = 1/4. Three ions: the outer pair sits at (5/4)^(1/3).
    let two = equilibrium_positions(2).unwrap().u;
    let a = 0.25f64.cbrt();
    assert!((two[0] + a).abs() < 1e-12 && (two[1] - a).abs() < 1e-12);
    let three = equilibrium_positions(3).unwrap().u;
    let b = 1.25f64.cbrt();
    assert!(three[1].abs() < 1e-12);
    assert!((three[2] - b).abs() < 1e-12 && (three[0] + b).abs() < 1e-12);
}

#[test]
fn matches_coordinate_descent_up_to_ten_ions() {
    for n in 2..=10 {
        let reference = brute_force_chain(n);
        assert!(chain_residual(&reference) < 1e-11);
        let got = equilibrium_positions(n).unwrap();
        let worst = got
            .u
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "n = {n}: {worst}");
        assert!(got.residual <= 1e-10 && chain_residual(&got.u) <= 1e-10);
    }
}

#[test]
fn barium_chain_of_eight_at_34_khz() {
    let spec = IonChainSpec::ba138_default();
    assert_eq!(spec.n_ions, 8);
    // l = (e^2 / (4 pi eps0 m w^2))^(1/3) with CODATA 2018 values.
    let e = 1.602_176_634e-19;
    let eps0 = 8.854_187_812_8e-12;
    // Singly ionised: one electron mass removed.
    let m = 137.905_247_2 * 1.660_539_066_60e-27 - 9.109_383_701_5e-31;
    let w = 2.0 * PI * 34e3;
    let l = (e * e / (4.0 * PI * eps0 * m * w * w)).cbrt();
    let chain = physical_positions(&spec).unwrap();
    assert!(
        (chain.length_scale - l).abs() / l < 1e-9,
        "{} vs {l}",
        chain.length_scale
    );
    let u = brute_force_chain(8);
    let gap = (u[4] - u[3]) * l;
    let got = chain.min_gap().unwrap();
    assert!((got - gap).abs() < 1e-12, "{got} vs {gap}");
    assert!((got - 17.84e-6).abs() < 0.01e-6, "{got}");
}

proptest! {
    #[test]
    fn equilibria_are_sorted_symmetric_minima(n in 1usize..=20) {
        let eq = equilibrium_positions(n).unwrap();
        let u = &eq.u;
        prop_assert!(u.windows(2).all(|w| w[1] > w[0]));
        for i in 0..n {
            prop_assert!((u[i] + u[n - 1 - i]).abs() < 1e-9);
        }
        prop_assert!(force_residual(u) <= 1e-10);
        // Any small displacement raises the energy.
        let e0 = potential_energy(u);
        for i in 0..n {
            for s in [-1e-4, 1e-4] {
                let mut v = u.clone();
                v[i] += s;
                prop_assert!(potential_energy(&v) > e0);
            }
        }
    }

    #[test]
    fn length_scale_follows_the_trap_frequency(f in 5e3f64..2e6, n in 2usize..=10) {
        let base = IonChainSpec { n_ions: n, axial_frequency: f, ..IonChainSpec::ba138_default() };
        let twice = IonChainSpec { axial_frequency: 2.0 * f, ..base };
        let a = physical_positions(&base).unwrap();
        let b = physical_positions(&twice).unwrap();
        // l scales as w^(-2/3).
        let ratio = a.length_scale / b.length_scale;
        prop_assert!((ratio - 2f64.powf(2.0 / 3.0)).abs() < 1e-9);
        for (x, y) in a.positions.iter().zip(&b.positions) {
            prop_assert!((x / y - ratio).abs() < 1e-9 || x.abs() < 1e-18);
        }
    }
}
