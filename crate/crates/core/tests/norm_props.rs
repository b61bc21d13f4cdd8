//! Norm axioms and sampling invariants on random inputs.

mod common;

use contraction_core::norms::{
    inf_index_set, norm, sample_unit_sphere, signal_norm, Lp, NormSpec, SignalNorm,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, n)
}

proptest! {
    #[test]
    fn absolute_homogeneity(xs in vec_strategy(4), c in -10.0f64..10.0) {
        for p in [Lp::One, Lp::P(1.7), Lp::P(2.0), Lp::P(3.0), Lp::Inf] {
            let spec = NormSpec::unweighted(p, 4);
            let x = DVector::from_row_slice(&xs);
            let lhs = norm(&(&x * c), &spec).unwrap();
            let rhs = c.abs() * norm(&x, &spec).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }

    #[test]
    fn triangle_inequality(xs in vec_strategy(4), ys in vec_strategy(4)) {
        for p in [Lp::One, Lp::P(1.7), Lp::P(2.0), Lp::P(3.0), Lp::Inf] {
            let spec = NormSpec::unweighted(p, 4);
            let x = DVector::from_row_slice(&xs);
            let y = DVector::from_row_slice(&ys);
            let sum = norm(&(&x + &y), &spec).unwrap();
            let parts = norm(&x, &spec).unwrap() + norm(&y, &spec).unwrap();
            prop_assert!(sum <= parts + 1e-12 * (1.0 + parts));
        }
    }

    #[test]
    fn lp_family_monotone(xs in vec_strategy(5)) {
        let x = DVector::from_row_slice(&xs);
        let n_inf = norm(&x, &NormSpec::unweighted(Lp::Inf, 5)).unwrap();
        let n_one = norm(&x, &NormSpec::unweighted(Lp::One, 5)).unwrap();
        for p in [1.3, 2.0, 4.0, 9.0] {
            let n_p = norm(&x, &NormSpec::unweighted(Lp::P(p), 5)).unwrap();
            prop_assert!(n_inf <= n_p + 1e-12 * (1.0 + n_p));
            prop_assert!(n_p <= n_one + 1e-12 * (1.0 + n_one));
        }
    }

    #[test]
    fn inf_index_set_attains_max(xs in vec_strategy(6)) {
        let x = DVector::from_row_slice(&xs);
        let set = inf_index_set(&x);
        let m = norm(&x, &NormSpec::unweighted(Lp::Inf, 6)).unwrap();
        prop_assert!(!set.is_empty());
        for i in set {
            prop_assert_eq!(x[i].abs(), m);
        }
    }
}

#[test]
fn unit_sphere_idempotent_under_renormalization() {
    let mut r = common::rng(11);
    for _ in 0..20 {
        let n = r.random_range(2..6);
        for (spec, _) in common::norm_rows(&mut r, n) {
            for x in sample_unit_sphere(&spec, 50, 123) {
                let nv = norm(&x, &spec).unwrap();
                assert!((nv - 1.0).abs() <= 1e-12, "|x| = {nv}");
                let renorm = &x / nv;
                assert!((&renorm - &x).amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn signal_norm_q1_matches_independent_quadrature() {
    // Oracle: direct trapezoid integration of the scalar signal.
    let mut r = common::rng(5);
    for _ in 0..20 {
        let n = 2000;
        let grid: Vec<f64> = (0..=n).map(|i| 3.0 * i as f64 / n as f64).collect();
        let a: f64 = r.random_range(0.2..2.0);
        let vals: Vec<f64> = grid.iter().map(|&t| (a * t).sin().abs() + 0.1).collect();
        let samples: Vec<DVector<f64>> = vals.iter().map(|&v| DVector::from_row_slice(&[v])).collect();
        let sn = SignalNorm::new(1.0, NormSpec::unweighted(Lp::P(2.0), 1), grid.clone()).unwrap();
        let got = signal_norm(&samples, &sn).unwrap();
        let mut oracle = 0.0;
        for i in 1..vals.len() {
            oracle += 0.5 * (grid[i] - grid[i - 1]) * (vals[i] + vals[i - 1]);
        }
        assert!((got - oracle).abs() <= 1e-12 * (1.0 + oracle));
    }
}
