mod common;

use common::prox_objective;
use num_complex::Complex;
use proptest::prelude::*;

use ptycho_dd::stagm::{
    gradient_amplitude, lipschitz_constant, prox_amplitude, prox_threshold_rule, value_amplitude,
};

/// Brute-force minimizer over a polar grid around the origin.
fn grid_minimum(y: Complex<f64>, a: f64, lambda: f64, eps: f64) -> f64 {
    let radius = 1.5 * (a + y.norm()) + 1e-3;
    let (nr, nt) = (600, 256);
    let mut best = prox_objective(Complex::default(), y, a, lambda, eps);
    for i in 1..=nr {
        let t = radius * i as f64 / nr as f64;
        for k in 0..nt {
            let th = std::f64::consts::TAU * k as f64 / nt as f64;
            best = best.min(prox_objective(
                Complex::from_polar(t, th),
                y,
                a,
                lambda,
                eps,
            ));
        }
    }
    best
}

fn complex(max: f64) -> impl Strategy<Value = Complex<f64>> {
    (-max..max, -max..max).prop_map(|(re, im)| Complex::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn prox_is_a_global_minimizer(
        y in complex(3.0),
        a in 0.0..2.0f64,
        lambda in 0.05..20.0f64,
        eps in 0.05..0.95f64,
        dirs in prop::collection::vec(complex(1.0), 16),
    ) {
        let x = prox_amplitude(y, a, lambda, eps);
        let fx = prox_objective(x, y, a, lambda, eps);
        let tol = 1e-12 * (1.0 + fx.abs());
        for d in dirs {
            for h in [1e-1, 1e-3, 1e-6] {
                prop_assert!(fx <= prox_objective(x + d * h, y, a, lambda, eps) + tol);
            }
        }
        prop_assert!(fx <= prox_objective(Complex::default(), y, a, lambda, eps) + tol);
        prop_assert!(fx <= prox_objective(y, y, a, lambda, eps) + tol);
    }

    #[test]
    fn gradient_matches_finite_differences(
        x in complex(3.0),
        a in 0.0..2.0f64,
        eps in 0.05..0.95f64,
        d in complex(1.0),
    ) {
        let m = x.norm();
        // Skip the kink at the branch boundary and the origin.
        prop_assume!((m - eps * a).abs() > 1e-3 && m > 1e-3);
        let h = 1e-6;
        let fd = (value_amplitude(x + d * h, a, eps) - value_amplitude(x - d * h, a, eps)) / (2.0 * h);
        let g = gradient_amplitude(x, a, eps);
        let directional = (g.conj() * d).re;
        prop_assert!((fd - directional).abs() <= 1e-6 * (1.0 + directional.abs()));
    }

    #[test]
    fn gradient_is_lipschitz(
        x in complex(3.0),
        y in complex(3.0),
        a in 0.0..2.0f64,
        eps in 0.05..0.95f64,
    ) {
        let l = lipschitz_constant(eps).unwrap();
        let lhs = (gradient_amplitude(x, a, eps) - gradient_amplitude(y, a, eps)).norm();
        prop_assert!(lhs <= l * (x - y).norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn threshold_rule_agrees_with_prox_when_strongly_penalized(
        y in complex(3.0),
        a in 0.0..2.0f64,
        eps in 0.3..0.95f64,
        extra in 0.1..10.0f64,
    ) {
        // Above (1-ε)/ε the inner branch is strictly convex and the two rules coincide.
        let lambda = (1.0 - eps) / eps * (1.0 + extra) + 1.0;
        let x = prox_amplitude(y, a, lambda, eps);
        let t = prox_threshold_rule(y, a * a, lambda, eps);
        let fx = prox_objective(x, y, a, lambda, eps);
        let ft = prox_objective(t, y, a, lambda, eps);
        prop_assert!((fx - ft).abs() <= 1e-10 * (1.0 + fx.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prox_beats_polar_grid_search(
        y in complex(2.0),
        a in 0.0..1.5f64,
        lambda in 0.05..10.0f64,
        eps in 0.05..0.95f64,
    ) {
        let x = prox_amplitude(y, a, lambda, eps);
        let fx = prox_objective(x, y, a, lambda, eps);
        prop_assert!(fx <= grid_minimum(y, a, lambda, eps) + 1e-12);
    }
}

#[test]
fn lipschitz_constant_at_half() {
    assert_eq!(lipschitz_constant(0.5).unwrap(), 3.0);
    assert!(lipschitz_constant(1.0).is_err());
    assert!(lipschitz_constant(0.0).is_err());
}
