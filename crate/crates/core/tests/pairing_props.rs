//! Weak pairing axioms and cross-pairing orderings on seeded random tuples.

mod common;

use contraction_core::norms::{inf_index_set, norm, Lp, NormSpec};
use contraction_core::pairings::{
    curve_norm_derivative_check, deimling_pairing, directional_norm_derivative,
    single_index_pairing, weak_pairing, ChoiceRule, PairingKind,
};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn rows_with_kinds(r: &mut ChaCha8Rng, n: usize) -> Vec<(NormSpec, Vec<PairingKind>)> {
    common::norm_rows(r, n)
        .into_iter()
        .map(|(spec, _)| {
            let kinds = match spec.p() {
                Lp::One => vec![
                    PairingKind::SignL1,
                    PairingKind::DeimlingL1Closed,
                    PairingKind::DeimlingNumeric,
                ],
                Lp::Inf => vec![
                    PairingKind::MaxLinf,
                    PairingKind::SingleIndex(ChoiceRule::SmallestIndex),
                    PairingKind::SingleIndex(ChoiceRule::LargestIndex),
                    PairingKind::DeimlingNumeric,
                ],
                Lp::P(_) => vec![PairingKind::GateauxLp, PairingKind::DeimlingNumeric],
            };
            (spec, kinds)
        })
        .collect()
}

fn rand_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0))
}

#[test]
fn weak_pairing_axioms_on_random_triples() {
    let mut r = common::rng(42);
    for n in [2usize, 4] {
        for (spec, kinds) in rows_with_kinds(&mut r, n) {
            for kind in kinds {
                // The numeric Deimling pairing resolves its one-sided limit
                // to ~1e-9, so it gets a looser budget than the closed forms.
                let (tuples, tol) = if kind == PairingKind::DeimlingNumeric {
                    (100, 1e-6)
                } else {
                    (1500, 1e-10)
                };
                for _ in 0..tuples {
                    let x1 = rand_vec(&mut r, n);
                    let x2 = rand_vec(&mut r, n);
                    let y = rand_vec(&mut r, n);
                    let alpha: f64 = r.random_range(0.0..3.0);
                    let pair = |a: &DVector<f64>, b: &DVector<f64>| {
                        weak_pairing(a, b, &spec, kind).unwrap()
                    };
                    // Subadditivity in the first argument.
                    let sub = pair(&(&x1 + &x2), &y) - (pair(&x1, &y) + pair(&x2, &y));
                    assert!(sub <= tol, "subadditivity violated by {sub} ({kind:?})");
                    // Weak homogeneity.
                    assert!(
                        (pair(&(&x1 * alpha), &y) - alpha * pair(&x1, &y)).abs()
                            <= tol * (1.0 + alpha),
                        "first-arg homogeneity ({kind:?})"
                    );
                    assert!(
                        (pair(&x1, &(&y * alpha)) - alpha * pair(&x1, &y)).abs()
                            <= tol.max(1e-9) * (1.0 + alpha),
                        "second-arg homogeneity ({kind:?})"
                    );
                    assert!(
                        (pair(&(-&x1), &(-&y)) - pair(&x1, &y)).abs() <= tol,
                        "sign flip ({kind:?})"
                    );
                    // Positive definiteness and compatibility.
                    let nx = norm(&x1, &spec).unwrap();
                    if nx > 0.0 {
                        let xx = pair(&x1, &x1);
                        assert!(xx > 0.0);
                        assert!((xx - nx * nx).abs() <= tol * (1.0 + nx * nx));
                    }
                    // Cauchy-Schwarz.
                    let ny = norm(&y, &spec).unwrap();
                    assert!(pair(&x1, &y).abs() <= nx * ny + tol);
                }
            }
        }
    }
}

#[test]
fn deimling_inequality_all_kinds() {
    let mut r = common::rng(7);
    for n in [2usize, 3] {
        for (spec, kinds) in rows_with_kinds(&mut r, n) {
            for kind in kinds {
                for _ in 0..100 {
                    let x = rand_vec(&mut r, n);
                    let y = rand_vec(&mut r, n);
                    let lhs = weak_pairing(&x, &y, &spec, kind).unwrap();
                    let rhs = norm(&y, &spec).unwrap()
                        * directional_norm_derivative(&x, &y, &spec).unwrap();
                    assert!(
                        lhs <= rhs + 1e-6,
                        "Deimling inequality violated: {lhs} > {rhs} ({kind:?}, p = {})",
                        spec.p()
                    );
                }
            }
        }
    }
}

#[test]
fn pairing_dominance_orderings() {
    let mut r = common::rng(19);
    for n in [2usize, 4] {
        let spec1 = NormSpec::unweighted(Lp::One, n);
        let spec_inf = NormSpec::unweighted(Lp::Inf, n);
        for _ in 0..2000 {
            let x = rand_vec(&mut r, n);
            let mut y = rand_vec(&mut r, n);
            if r.random_range(0..4) == 0 {
                y[r.random_range(0..n)] = 0.0; // exercise the zero-entry branch
            }
            // Sign pairing is dominated by the l1 Deimling closed form.
            let sign = weak_pairing(&x, &y, &spec1, PairingKind::SignL1).unwrap();
            let dml = deimling_pairing(&x, &y, &spec1).unwrap();
            assert!(sign <= dml + 1e-12);

            // Every single-index pairing is dominated by the max pairing,
            // and the max pairing is attained over the max index set.
            let maxp = weak_pairing(&x, &y, &spec_inf, PairingKind::MaxLinf).unwrap();
            for rule in [ChoiceRule::SmallestIndex, ChoiceRule::LargestIndex] {
                let si = single_index_pairing(&x, &y, &spec_inf, rule).unwrap();
                assert!(si <= maxp + 1e-12);
            }
            let attained = inf_index_set(&y)
                .into_iter()
                .map(|i| x[i] * y[i])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((attained - maxp).abs() <= 1e-12);

            // Max pairing equals the linf Deimling pairing away from y = 0.
            if norm(&y, &spec_inf).unwrap() > 0.0 {
                let dinf = deimling_pairing(&x, &y, &spec_inf).unwrap();
                assert!((maxp - dinf).abs() <= 1e-12 * (1.0 + dinf.abs()));
            }
        }
    }
}

#[test]
fn shift_identity_in_first_argument() {
    let mut r = common::rng(23);
    for n in [2usize, 3] {
        for (spec, kinds) in rows_with_kinds(&mut r, n) {
            for kind in kinds {
                let tuples = if kind == PairingKind::DeimlingNumeric { 50 } else { 500 };
                for _ in 0..tuples {
                    let x = rand_vec(&mut r, n);
                    let y = rand_vec(&mut r, n);
                    let c: f64 = r.random_range(-3.0..3.0);
                    let ny = norm(&y, &spec).unwrap();
                    let lhs = weak_pairing(&(&x + &y * c), &y, &spec, kind).unwrap();
                    let rhs = weak_pairing(&x, &y, &spec, kind).unwrap() + c * ny * ny;
                    let tol = if kind == PairingKind::DeimlingNumeric { 1e-6 } else { 1e-10 };
                    assert!(
                        (lhs - rhs).abs() <= tol * (1.0 + rhs.abs()),
                        "shift identity off by {} ({kind:?}, p = {})",
                        (lhs - rhs).abs(),
                        spec.p()
                    );
                }
            }
        }
    }
}

#[test]
fn gateaux_approaches_sign_pairing_as_p_drops() {
    let mut r = common::rng(31);
    let n = 3;
    let spec1 = NormSpec::unweighted(Lp::One, n);
    let spec_p = NormSpec::unweighted(Lp::P(1.001), n);
    for _ in 0..300 {
        let x = rand_vec(&mut r, n);
        let mut y = rand_vec(&mut r, n);
        for v in y.iter_mut() {
            if v.abs() < 0.3 {
                *v = if *v < 0.0 { -0.3 } else { 0.3 };
            }
        }
        let sign = weak_pairing(&x, &y, &spec1, PairingKind::SignL1).unwrap();
        let lp = weak_pairing(&x, &y, &spec_p, PairingKind::GateauxLp).unwrap();
        let nx = norm(&x, &spec1).unwrap();
        let ny = norm(&y, &spec1).unwrap();
        assert!(
            (sign - lp).abs() <= 1e-2 * (1.0 + nx * ny),
            "p -> 1 limit: sign {sign} vs lp {lp}"
        );
    }
}

#[test]
fn directional_derivative_agrees_with_deimling() {
    let mut r = common::rng(37);
    for n in [2usize, 3] {
        for (spec, _) in common::norm_rows(&mut r, n) {
            for _ in 0..60 {
                let x = rand_vec(&mut r, n);
                let y = rand_vec(&mut r, n);
                let ny = norm(&y, &spec).unwrap();
                if ny < 1e-6 {
                    continue;
                }
                let dml = deimling_pairing(&x, &y, &spec).unwrap();
                let dnd = directional_norm_derivative(&x, &y, &spec).unwrap();
                assert!(
                    (dml / ny - dnd).abs() <= 1e-6 * (1.0 + dnd.abs()),
                    "p = {}: {} vs {}",
                    spec.p(),
                    dml / ny,
                    dnd
                );
            }
        }
    }
}

#[test]
fn curve_norm_derivative_median_residual_shrinks_with_h() {
    // x(t) = (e^{-t}, sin 2t, cos t) sampled at two resolutions.
    let build = |h: f64| -> Vec<(f64, DVector<f64>, DVector<f64>)> {
        (0..(2.0 / h) as usize)
            .map(|i| {
                let t = i as f64 * h;
                (
                    t,
                    DVector::from_row_slice(&[(-t).exp(), (2.0 * t).sin(), t.cos()]),
                    DVector::from_row_slice(&[-(-t).exp(), 2.0 * (2.0 * t).cos(), -t.sin()]),
                )
            })
            .collect()
    };
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for (spec, kind) in [
        (NormSpec::unweighted(Lp::P(2.0), 3), PairingKind::GateauxLp),
        (NormSpec::unweighted(Lp::One, 3), PairingKind::SignL1),
        (NormSpec::unweighted(Lp::Inf, 3), PairingKind::MaxLinf),
    ] {
        let coarse = median(curve_norm_derivative_check(&build(1e-2), &spec, kind).unwrap());
        let fine = median(curve_norm_derivative_check(&build(1e-3), &spec, kind).unwrap());
        assert!(
            fine <= 0.5 * coarse + 1e-12,
            "median residual {coarse} -> {fine} under refinement (p = {})",
            spec.p()
        );
    }
}
