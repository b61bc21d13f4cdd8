//! Weak pairings compatible with weighted lp norms.
//!
//! The sign pairing (l1), the max pairing (linf), the Gateaux pairing
//! (differentiable lp), single-index pairings, and Deimling pairings, plus
//! numeric one-sided norm derivatives and a curve-norm-derivative residual
//! check. Every pairing here satisfies compatibility `pair(x, x) = norm(x)^2`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::norms::{inf_index_set, norm, NormSpec, Lp};

/// Index-selection rule for single-index pairings on the linf norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceRule {
    SmallestIndex,
    LargestIndex,
}

impl ChoiceRule {
    fn pick(&self, set: &[usize]) -> usize {
        match self {
            ChoiceRule::SmallestIndex => *set.first().expect("index set never empty"),
            ChoiceRule::LargestIndex => *set.last().expect("index set never empty"),
        }
    }
}

/// Which weak pairing to evaluate. Each variant constrains the exponent of
/// the `NormSpec` it is used with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairingKind {
    /// Unique Lumer pairing of a differentiable lp norm, p in ]1, inf[.
    GateauxLp,
    /// Sign pairing for the l1 norm.
    SignL1,
    /// Max pairing for the linf norm.
    MaxLinf,
    /// Deimling pairing via the numeric one-sided norm derivative.
    DeimlingNumeric,
    /// Deimling pairing for l1 in closed form.
    DeimlingL1Closed,
    /// Single-index Lumer pairing for linf.
    SingleIndex(ChoiceRule),
}

impl PairingKind {
    /// The natural pairing for a given norm: sign for l1, max for linf,
    /// Gateaux otherwise.
    pub fn default_for(spec: &NormSpec) -> PairingKind {
        match spec.p() {
            Lp::One => PairingKind::SignL1,
            Lp::Inf => PairingKind::MaxLinf,
            Lp::P(_) => PairingKind::GateauxLp,
        }
    }

    pub fn check_compatible(&self, spec: &NormSpec) -> Result<()> {
        let ok = match self {
            PairingKind::GateauxLp => matches!(spec.p(), Lp::P(_)),
            PairingKind::SignL1 | PairingKind::DeimlingL1Closed => matches!(spec.p(), Lp::One),
            PairingKind::MaxLinf | PairingKind::SingleIndex(_) => matches!(spec.p(), Lp::Inf),
            PairingKind::DeimlingNumeric => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatiblePairing {
                kind: self.name(),
                requirement: match self {
                    PairingKind::GateauxLp => "p in ]1, inf[",
                    PairingKind::SignL1 | PairingKind::DeimlingL1Closed => "p = 1",
                    _ => "p = inf",
                },
                p: spec.p().to_string(),
            })
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PairingKind::GateauxLp => "gateaux_lp",
            PairingKind::SignL1 => "sign_l1",
            PairingKind::MaxLinf => "max_linf",
            PairingKind::DeimlingNumeric => "deimling_numeric",
            PairingKind::DeimlingL1Closed => "deimling_l1_closed",
            PairingKind::SingleIndex(_) => "single_index",
        }
    }
}

/// A pairing evaluation bundled with the ingredients that produced it.
#[derive(Debug, Clone)]
pub struct PairingValue {
    pub value: f64,
    pub kind: PairingKind,
    pub dim: usize,
    pub p: Lp,
}

impl PairingValue {
    pub fn evaluate(
        x: &DVector<f64>,
        y: &DVector<f64>,
        spec: &NormSpec,
        kind: PairingKind,
    ) -> Result<PairingValue> {
        Ok(PairingValue {
            value: weak_pairing(x, y, spec, kind)?,
            kind,
            dim: spec.dim(),
            p: spec.p(),
        })
    }
}

fn sign(v: f64) -> f64 {
    // sign(0) = 0 exactly.
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluate the weak pairing `pair(x, y)` under `spec`.
///
/// Weighted variants apply R inside the unweighted formulas, e.g. the sign
/// pairing is `||Ry||_1 sign(Ry)' Rx`.
pub fn weak_pairing(
    x: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NormSpec,
    kind: PairingKind,
) -> Result<f64> {
    spec.check_dim(x)?;
    spec.check_dim(y)?;
    kind.check_compatible(spec)?;
    let rx = spec.apply_weight(x);
    let ry = spec.apply_weight(y);
    Ok(match kind {
        PairingKind::SignL1 => {
            let y1: f64 = ry.iter().map(|v| v.abs()).sum();
            y1 * ry.iter().zip(rx.iter()).map(|(yi, xi)| sign(*yi) * xi).sum::<f64>()
        }
        PairingKind::MaxLinf => max_pairing_raw(&rx, &ry),
        PairingKind::GateauxLp => gateaux_raw(&rx, &ry, spec.p().as_f64()),
        PairingKind::SingleIndex(rule) => {
            let idx = rule.pick(&inf_index_set(&ry));
            rx[idx] * ry[idx]
        }
        PairingKind::DeimlingL1Closed => deimling_l1_raw(&rx, &ry),
        PairingKind::DeimlingNumeric => {
            let ny = norm(y, spec)?;
            ny * directional_norm_derivative(x, y, spec)?
        }
    })
}

fn max_pairing_raw(rx: &DVector<f64>, ry: &DVector<f64>) -> f64 {
    inf_index_set(ry)
        .into_iter()
        .map(|i| rx[i] * ry[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn gateaux_raw(rx: &DVector<f64>, ry: &DVector<f64>, p: f64) -> f64 {
    if p == 2.0 {
        return rx.dot(ry);
    }
    let ny = crate::norms::lp_norm_raw(ry, Lp::P(p));
    if ny == 0.0 {
        // Weak homogeneity forces pair(x, 0) = 0.
        return 0.0;
    }
    let dot: f64 = ry
        .iter()
        .zip(rx.iter())
        .map(|(yi, xi)| {
            if *yi == 0.0 {
                0.0 // continuous extension of y |y|^{p-2} at zero entries
            } else {
                yi * yi.abs().powf(p - 2.0) * xi
            }
        })
        .sum();
    ny.powf(2.0 - p) * dot
}

fn deimling_l1_raw(rx: &DVector<f64>, ry: &DVector<f64>) -> f64 {
    let y1: f64 = ry.iter().map(|v| v.abs()).sum();
    let mut dot = 0.0;
    for (yi, xi) in ry.iter().zip(rx.iter()) {
        if *yi == 0.0 {
            dot += xi.abs();
        } else {
            dot += sign(*yi) * xi;
        }
    }
    y1 * dot
}

/// The Deimling pairing `(x, y)_+ = ||y|| lim_{h->0+} (||y+hx||-||y||)/h`.
///
/// Closed forms are used for p = 1, p = inf, and the Gateaux formula for
/// differentiable p; anything else falls back to the numeric limit.
pub fn deimling_pairing(x: &DVector<f64>, y: &DVector<f64>, spec: &NormSpec) -> Result<f64> {
    spec.check_dim(x)?;
    spec.check_dim(y)?;
    let rx = spec.apply_weight(x);
    let ry = spec.apply_weight(y);
    Ok(match spec.p() {
        Lp::One => deimling_l1_raw(&rx, &ry),
        Lp::Inf => {
            let ny = crate::norms::lp_norm_raw(&ry, Lp::Inf);
            if ny == 0.0 {
                0.0
            } else {
                let d = inf_index_set(&ry)
                    .into_iter()
                    .map(|i| sign(ry[i]) * rx[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                ny * d
            }
        }
        Lp::P(p) => gateaux_raw(&rx, &ry, p),
    })
}

/// Numeric one-sided limit of `(||y + h x|| - ||y||)/h` as h -> 0+.
///
/// Uses a halving h-sequence with two-point Richardson extrapolation; the
/// quotient is nondecreasing in h for any norm, so the extrapolation is
/// stable.
pub fn directional_norm_derivative(
    x: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NormSpec,
) -> Result<f64> {
    spec.check_dim(x)?;
    spec.check_dim(y)?;
    let nx = norm(x, spec)?;
    if nx == 0.0 {
        return Ok(0.0);
    }
    let ny = norm(y, spec)?;
    let mut h = 1e-2 * (1.0f64).max(ny / nx);
    let quot = |h: f64| -> f64 {
        let z = y + x * h;
        (norm(&z, spec).expect("dims checked") - ny) / h
    };
    let mut d_prev = quot(h);
    let mut best = d_prev;
    for _ in 0..60 {
        h *= 0.5;
        let d = quot(h);
        let extrapolated = 2.0 * d - d_prev;
        if (extrapolated - best).abs() < 1e-9 {
            return Ok(extrapolated);
        }
        best = extrapolated;
        d_prev = d;
    }
    Ok(best)
}

/// Residuals `| ||x|| D+||x|| - pair(xdot, x) |` along a uniformly sampled
/// differentiable curve, with D+ taken as a forward difference. The curve
/// norm derivative formula holds for almost every t, so callers should
/// assert on the median residual, not pointwise.
pub fn curve_norm_derivative_check(
    trajectory: &[(f64, DVector<f64>, DVector<f64>)],
    spec: &NormSpec,
    kind: PairingKind,
) -> Result<Vec<f64>> {
    if trajectory.len() < 3 {
        return Err(Error::TrajectoryTooShort {
            needed: 3,
            got: trajectory.len(),
        });
    }
    let mut residuals = Vec::with_capacity(trajectory.len() - 1);
    for w in trajectory.windows(2) {
        let (t0, x0, xdot0) = &w[0];
        let (t1, x1, _) = &w[1];
        let h = t1 - t0;
        let n0 = norm(x0, spec)?;
        let n1 = norm(x1, spec)?;
        let dplus = (n1 - n0) / h;
        let pair = weak_pairing(xdot0, x0, spec, kind)?;
        residuals.push((n0 * dplus - pair).abs());
    }
    Ok(residuals)
}

/// Single-index pairing `(Rx)_f (Ry)_f` with f chosen from I_inf(Ry).
pub fn single_index_pairing(
    x: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NormSpec,
    choice: ChoiceRule,
) -> Result<f64> {
    weak_pairing(x, y, spec, PairingKind::SingleIndex(choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(entries: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(entries)
    }

    #[test]
    fn sign_pairing_hand_value() {
        // ||y||_1 = 4, sign(y)'x = 1 - 2 = -1
        let spec = NormSpec::unweighted(Lp::One, 2);
        let val = weak_pairing(&v(&[1.0, 2.0]), &v(&[3.0, -1.0]), &spec, PairingKind::SignL1);
        assert_eq!(val.unwrap(), -4.0);
    }

    #[test]
    fn max_pairing_hand_value() {
        // I_inf(y) = {0, 1}; max of {1*2, 3*(-2)} = 2
        let spec = NormSpec::unweighted(Lp::Inf, 2);
        let val = weak_pairing(&v(&[1.0, 3.0]), &v(&[2.0, -2.0]), &spec, PairingKind::MaxLinf);
        assert_eq!(val.unwrap(), 2.0);
    }

    #[test]
    fn compatibility_all_kinds() {
        let x = v(&[0.7, -1.3]);
        for (spec, kind) in [
            (NormSpec::unweighted(Lp::One, 2), PairingKind::SignL1),
            (NormSpec::unweighted(Lp::One, 2), PairingKind::DeimlingL1Closed),
            (NormSpec::unweighted(Lp::Inf, 2), PairingKind::MaxLinf),
            (
                NormSpec::unweighted(Lp::Inf, 2),
                PairingKind::SingleIndex(ChoiceRule::SmallestIndex),
            ),
            (NormSpec::unweighted(Lp::P(2.0), 2), PairingKind::GateauxLp),
            (NormSpec::unweighted(Lp::P(3.5), 2), PairingKind::GateauxLp),
            (NormSpec::unweighted(Lp::P(1.5), 2), PairingKind::DeimlingNumeric),
        ] {
            let pair = weak_pairing(&x, &x, &spec, kind).unwrap();
            let n = norm(&x, &spec).unwrap();
            assert_abs_diff_eq!(pair, n * n, epsilon = 1e-10);
        }
    }

    #[test]
    fn orthogonal_l2() {
        let spec = NormSpec::unweighted(Lp::P(2.0), 2);
        let val = weak_pairing(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &spec, PairingKind::GateauxLp);
        assert_eq!(val.unwrap(), 0.0);
    }

    #[test]
    fn incompatible_kind_rejected() {
        let spec = NormSpec::unweighted(Lp::One, 2);
        assert!(matches!(
            weak_pairing(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &spec, PairingKind::MaxLinf),
            Err(Error::IncompatiblePairing { .. })
        ));
    }

    #[test]
    fn deimling_l1_zero_entry() {
        // ||y||_1 = 3, sign term 1, |x_2| picked up by the zero entry: 3*(1+2) = 9
        let spec = NormSpec::unweighted(Lp::One, 2);
        let val = deimling_pairing(&v(&[1.0, 2.0]), &v(&[3.0, 0.0]), &spec).unwrap();
        assert_eq!(val, 9.0);
    }

    #[test]
    fn deimling_l1_agrees_with_sign_pairing_away_from_zeros() {
        let spec = NormSpec::unweighted(Lp::One, 2);
        let x = v(&[1.0, 2.0]);
        let y = v(&[3.0, -1.0]);
        assert_eq!(deimling_pairing(&x, &y, &spec).unwrap(), -4.0);
    }

    #[test]
    fn deimling_compatibility() {
        for p in [Lp::One, Lp::P(1.7), Lp::P(2.0), Lp::P(4.0), Lp::Inf] {
            let spec = NormSpec::unweighted(p, 3);
            let x = v(&[0.4, -2.0, 1.1]);
            let n = norm(&x, &spec).unwrap();
            assert_abs_diff_eq!(deimling_pairing(&x, &x, &spec).unwrap(), n * n, epsilon = 1e-10);
        }
    }

    #[test]
    fn directional_derivative_along_itself() {
        let spec = NormSpec::unweighted(Lp::P(3.0), 2);
        let x = v(&[1.0, -2.0]);
        let n = norm(&x, &spec).unwrap();
        assert_abs_diff_eq!(
            directional_norm_derivative(&x, &x, &spec).unwrap(),
            n,
            epsilon = 1e-8
        );
    }

    #[test]
    fn directional_derivative_linf_flat() {
        let spec = NormSpec::unweighted(Lp::Inf, 2);
        let d = directional_norm_derivative(&v(&[0.0, 1.0]), &v(&[1.0, 0.0]), &spec).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn directional_derivative_l1_slope_one() {
        let spec = NormSpec::unweighted(Lp::One, 2);
        let d = directional_norm_derivative(&v(&[0.0, 1.0]), &v(&[1.0, 0.0]), &spec).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_index_choices() {
        let spec = NormSpec::unweighted(Lp::Inf, 2);
        let x = v(&[1.0, 3.0]);
        let y = v(&[2.0, -2.0]);
        assert_eq!(
            single_index_pairing(&x, &y, &spec, ChoiceRule::SmallestIndex).unwrap(),
            2.0
        );
        assert_eq!(
            single_index_pairing(&x, &y, &spec, ChoiceRule::LargestIndex).unwrap(),
            -6.0
        );
        let n = norm(&y, &spec).unwrap();
        assert_eq!(
            single_index_pairing(&y, &y, &spec, ChoiceRule::SmallestIndex).unwrap(),
            n * n
        );
    }

    #[test]
    fn weighted_sign_pairing_applies_r_inside() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let spec = NormSpec::weighted(Lp::One, r.clone()).unwrap();
        let x = v(&[0.5, -1.0]);
        let y = v(&[1.0, 2.0]);
        let rx = &r * &x;
        let ry = &r * &y;
        let expect =
            (ry[0].abs() + ry[1].abs()) * (ry[0].signum() * rx[0] + ry[1].signum() * rx[1]);
        assert_abs_diff_eq!(
            weak_pairing(&x, &y, &spec, PairingKind::SignL1).unwrap(),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn curve_norm_derivative_exponential_decay() {
        // x(t) = e^{-t} (1,1): pair(xdot, x) = -||x||^2, residuals O(h)
        let spec = NormSpec::unweighted(Lp::P(2.0), 2);
        let h = 1e-4;
        let traj: Vec<_> = (0..200)
            .map(|i| {
                let t = i as f64 * h;
                let e = (-t).exp();
                (t, v(&[e, e]), v(&[-e, -e]))
            })
            .collect();
        let res = curve_norm_derivative_check(&traj, &spec, PairingKind::GateauxLp).unwrap();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[sorted.len() / 2] < 10.0 * h);
    }

    #[test]
    fn curve_norm_derivative_rotation_constant_norm() {
        let spec = NormSpec::unweighted(Lp::P(2.0), 2);
        let h = 1e-4;
        let traj: Vec<_> = (0..100)
            .map(|i| {
                let t = i as f64 * h;
                (t, v(&[t.cos(), t.sin()]), v(&[-t.sin(), t.cos()]))
            })
            .collect();
        let res = curve_norm_derivative_check(&traj, &spec, PairingKind::GateauxLp).unwrap();
        for r in res {
            assert!(r < 1e-7);
        }
    }

    #[test]
    fn curve_norm_derivative_l1_line() {
        // x(t) = (1-t, t) on [0, 1]: sign(x)' xdot = 0 away from the endpoints
        let spec = NormSpec::unweighted(Lp::One, 2);
        let n = 100;
        let traj: Vec<_> = (1..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (t, v(&[1.0 - t, t]), v(&[-1.0, 1.0]))
            })
            .collect();
        let res = curve_norm_derivative_check(&traj, &spec, PairingKind::SignL1).unwrap();
        for r in res {
            assert!(r < 1e-10);
        }
    }

    #[test]
    fn pairing_value_carries_context() {
        let spec = NormSpec::unweighted(Lp::One, 2);
        let x = v(&[1.0, 2.0]);
        let y = v(&[3.0, -1.0]);
        let pv = PairingValue::evaluate(&x, &y, &spec, PairingKind::SignL1).unwrap();
        assert_eq!(pv.value, -4.0);
        assert_eq!(pv.kind, PairingKind::SignL1);
        assert_eq!(pv.dim, 2);
        let same = PairingValue::evaluate(&y, &y, &spec, PairingKind::SignL1).unwrap();
        let n = norm(&y, &spec).unwrap();
        assert!((same.value - n * n).abs() <= 1e-10);
    }

    #[test]
    fn too_short_trajectory_rejected() {
        let spec = NormSpec::unweighted(Lp::One, 1);
        let traj = vec![(0.0, v(&[1.0]), v(&[0.0])), (0.1, v(&[1.0]), v(&[0.0]))];
        assert!(matches!(
            curve_norm_derivative_check(&traj, &spec, PairingKind::SignL1),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }
}
