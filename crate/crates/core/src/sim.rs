//! Fixed-step RK4 integration and trajectory-level verification:
//! exponential incremental envelopes, Dini-derivative decay, Coppel's
//! inequality, ISS experiments, and Lq gain measurement.

use nalgebra::{DMatrix, DVector};

use crate::certify::Region;
use crate::error::{Error, Result};
use crate::measure::matrix_measure;
use crate::model::VectorFieldModel;
use crate::norms::{inf_index_set, norm, signal_norm, NormSpec, SignalNorm, Lp};

pub type InputFn<'a> = &'a (dyn Fn(f64) -> DVector<f64> + Sync);

/// A fixed-step trajectory. States are finite; a blow-up truncates the
/// trajectory and is recorded with its onset time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub states: Vec<DVector<f64>>,
    pub inputs: Option<Vec<DVector<f64>>>,
    pub blowup: Option<(usize, f64)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory never empty")
    }

    fn check_grids_match(&self, other: &Trajectory) -> Result<()> {
        if self.len() != other.len() || self.h != other.h || self.t0 != other.t0 {
            return Err(Error::TrajectoryGridMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }
}

/// Classical fixed-step RK4 for xdot = f(t, x, u(t)).
pub fn integrate(
    model: &VectorFieldModel,
    t0: f64,
    x0: &DVector<f64>,
    u: Option<InputFn>,
    horizon: f64,
    h: f64,
) -> Result<Trajectory> {
    assert!(h > 0.0 && horizon >= h, "need h > 0 and horizon >= h");
    let steps = (horizon / h).round() as usize;
    let input_at = |t: f64| -> Option<DVector<f64>> { u.map(|f| f(t)) };
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs: Option<Vec<DVector<f64>>> = u.map(|_| Vec::with_capacity(steps + 1));
    let mut x = x0.clone();
    let mut blowup = None;
    states.push(x.clone());
    if let Some(inp) = inputs.as_mut() {
        inp.push(input_at(t0).unwrap());
    }
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let u1 = input_at(t);
        let u2 = input_at(t + 0.5 * h);
        let u3 = input_at(t + h);
        let k1 = model.eval_field(t, &x, u1.as_ref())?;
        let k2 = model.eval_field(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), u2.as_ref())?;
        let k3 = model.eval_field(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), u2.as_ref())?;
        let k4 = model.eval_field(t + h, &(&x + &k3 * h), u3.as_ref())?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            blowup = Some((i + 1, t + h));
            break;
        }
        states.push(x.clone());
        if let Some(inp) = inputs.as_mut() {
            inp.push(u3.unwrap());
        }
    }
    Ok(Trajectory {
        t0,
        h,
        states,
        inputs,
        blowup,
    })
}

/// Exponential envelope report: the largest violation of
/// `d(t) <= e^{b (t-s)} d(s)` over checked grid pairs s <= t.
#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    pub b: f64,
    pub tol: f64,
    pub max_violation: f64,
    pub pass: bool,
    pub worst_pair: (f64, f64),
    pub pairs_checked: usize,
}

/// Envelope check under a `NormSpec` distance.
pub fn envelope_check(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    spec: &NormSpec,
    b: f64,
    tol: f64,
) -> Result<EnvelopeReport> {
    envelope_check_with(traj_x, traj_y, &|v| norm(v, spec).expect("dims match"), b, tol)
}

/// Envelope check under an arbitrary distance function (used for aggregated
/// and semi-norm distances).
pub fn envelope_check_with(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    dist_norm: &dyn Fn(&DVector<f64>) -> f64,
    b: f64,
    tol: f64,
) -> Result<EnvelopeReport> {
    traj_x.check_grids_match(traj_y)?;
    let n = traj_x.len();
    let d: Vec<f64> = (0..n)
        .map(|i| dist_norm(&(&traj_x.states[i] - &traj_y.states[i])))
        .collect();
    let h = traj_x.h;
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = (0usize, 0usize);
    let mut pairs_checked = 0usize;
    let mut check = |s: usize, t: usize| {
        let gap = d[t] - (b * h * (t - s) as f64).exp() * d[s];
        pairs_checked += 1;
        if gap > max_violation {
            max_violation = gap;
            worst = (s, t);
        }
    };
    if n <= 2000 {
        for s in 0..n {
            for t in s..n {
                check(s, t);
            }
        }
    } else {
        // Violations concentrate at short and long lags; O(N^2) is wasteful.
        let lags = [1, 10, 100, n / 2, n - 1];
        for &lag in &lags {
            if lag == 0 || lag >= n {
                continue;
            }
            for s in 0..n - lag {
                check(s, s + lag);
            }
        }
        for t in 0..n {
            check(0, t);
        }
    }
    Ok(EnvelopeReport {
        b,
        tol,
        max_violation,
        pass: max_violation <= tol,
        worst_pair: (traj_x.time(worst.0), traj_x.time(worst.1)),
        pairs_checked,
    })
}

/// Dini decay report: forward differences of the distance against
/// `b * distance` with an O(h) margin, kink points excluded.
#[derive(Debug, Clone)]
pub struct DiniReport {
    pub checked: usize,
    pub excluded: usize,
    pub violations: usize,
    pub max_excess: f64,
    pub pass: bool,
}

/// Check `D+ d(t) <= b d(t)` along two trajectories via forward differences.
/// Grid points where the active sign pattern (l1) or max index set (linf) of
/// the weighted difference changes are excluded: the decay formula only
/// holds almost everywhere.
pub fn dini_decay_check(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    spec: &NormSpec,
    b: f64,
    tol: f64,
) -> Result<DiniReport> {
    traj_x.check_grids_match(traj_y)?;
    let n = traj_x.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort { needed: 3, got: n });
    }
    let h = traj_x.h;
    let diffs: Vec<DVector<f64>> = (0..n)
        .map(|i| &traj_x.states[i] - &traj_y.states[i])
        .collect();
    let d: Vec<f64> = diffs
        .iter()
        .map(|v| norm(v, spec))
        .collect::<Result<_>>()?;
    let excluded_at = kink_exclusions(&diffs, spec);

    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut violations = 0usize;
    let mut max_excess: f64 = 0.0;
    for i in 0..n - 1 {
        if excluded_at[i] {
            excluded += 1;
            continue;
        }
        checked += 1;
        let forward = (d[i + 1] - d[i]) / h;
        // Local Lipschitz estimate of the derivative bounds the forward
        // difference error at O(h).
        let l_est = if i + 2 < n {
            ((d[i + 2] - 2.0 * d[i + 1] + d[i]) / (h * h)).abs()
        } else if i >= 1 {
            ((d[i + 1] - 2.0 * d[i] + d[i - 1]) / (h * h)).abs()
        } else {
            0.0
        };
        let margin = tol + l_est * h;
        let excess = forward - (b * d[i] + margin);
        if excess > 0.0 {
            violations += 1;
            max_excess = max_excess.max(excess);
        }
    }
    let total = checked + excluded;
    let pass = total > 0 && (violations as f64) <= 0.01 * total as f64;
    Ok(DiniReport {
        checked,
        excluded,
        violations,
        max_excess,
        pass,
    })
}

/// Marks indices where the l1 sign pattern or the linf max index set of the
/// weighted vector changes between consecutive samples.
fn kink_exclusions(vecs: &[DVector<f64>], spec: &NormSpec) -> Vec<bool> {
    let n = vecs.len();
    let mut excluded = vec![false; n];
    match spec.p() {
        Lp::One => {
            let patterns: Vec<Vec<i8>> = vecs
                .iter()
                .map(|v| {
                    spec.apply_weight(v)
                        .iter()
                        .map(|&x| {
                            if x > 0.0 {
                                1
                            } else if x < 0.0 {
                                -1
                            } else {
                                0
                            }
                        })
                        .collect()
                })
                .collect();
            for i in 0..n - 1 {
                if patterns[i] != patterns[i + 1] {
                    excluded[i] = true;
                }
            }
        }
        Lp::Inf => {
            let sets: Vec<Vec<usize>> = vecs
                .iter()
                .map(|v| inf_index_set(&spec.apply_weight(v)))
                .collect();
            for i in 0..n - 1 {
                if sets[i] != sets[i + 1] {
                    excluded[i] = true;
                }
            }
        }
        Lp::P(_) => {}
    }
    excluded
}

/// Pointwise Coppel check `D+ ||x(t)|| <= mu(A(t, x(t))) ||x(t)||` along a
/// trajectory of xdot = A(t, x) x, with forward differences and O(h) margin.
pub fn coppel_check(
    a_of: &dyn Fn(f64, &DVector<f64>) -> Result<DMatrix<f64>>,
    traj: &Trajectory,
    spec: &NormSpec,
    tol: f64,
) -> Result<DiniReport> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort { needed: 3, got: n });
    }
    let h = traj.h;
    let d: Vec<f64> = traj
        .states
        .iter()
        .map(|v| norm(v, spec))
        .collect::<Result<_>>()?;
    let excluded_at = kink_exclusions(&traj.states, spec);
    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut violations = 0usize;
    let mut max_excess: f64 = 0.0;
    for i in 0..n - 1 {
        if excluded_at[i] {
            excluded += 1;
            continue;
        }
        checked += 1;
        let t = traj.time(i);
        let mu = matrix_measure(&a_of(t, &traj.states[i])?, spec)?.value;
        let forward = (d[i + 1] - d[i]) / h;
        let l_est = if i + 2 < n {
            ((d[i + 2] - 2.0 * d[i + 1] + d[i]) / (h * h)).abs()
        } else if i >= 1 {
            ((d[i + 1] - 2.0 * d[i] + d[i - 1]) / (h * h)).abs()
        } else {
            0.0
        };
        let margin = tol + l_est * h;
        let excess = forward - (mu * d[i] + margin);
        if excess > 0.0 {
            violations += 1;
            max_excess = max_excess.max(excess);
        }
    }
    let total = checked + excluded;
    Ok(DiniReport {
        checked,
        excluded,
        violations,
        max_excess,
        pass: total > 0 && (violations as f64) <= 0.01 * total as f64,
    })
}

/// ISS experiment report: worst violation of the incremental bound
/// `d(t) <= e^{-c t} d(0) + (l (1 - e^{-c t}) / c) sup_{tau<=t} |du(tau)|`.
#[derive(Debug, Clone)]
pub struct IssReport {
    pub max_violation: f64,
    pub pass: bool,
    pub sup_input_deviation: f64,
    pub final_distance: f64,
}

/// Simulate two inputs from two initial conditions and check the incremental
/// ISS bound at every grid point.
#[allow(clippy::too_many_arguments)]
pub fn iss_experiment(
    model: &VectorFieldModel,
    u_x: InputFn,
    u_y: InputFn,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    c: f64,
    ell: f64,
    spec_x: &NormSpec,
    spec_u: &NormSpec,
    horizon: f64,
    h: f64,
    tol: f64,
) -> Result<IssReport> {
    let tx = integrate(model, 0.0, x0, Some(u_x), horizon, h)?;
    let ty = integrate(model, 0.0, y0, Some(u_y), horizon, h)?;
    tx.check_grids_match(&ty)?;
    let d0 = norm(&(x0 - y0), spec_x)?;
    let mut sup_du: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..tx.len() {
        let t = tx.time(i);
        let du = norm(&(u_x(t) - u_y(t)), spec_u)?;
        sup_du = sup_du.max(du);
        let d = norm(&(&tx.states[i] - &ty.states[i]), spec_x)?;
        let bound = (-c * t).exp() * d0 + ell * (1.0 - (-c * t).exp()) / c * sup_du;
        max_violation = max_violation.max(d - bound);
    }
    let final_distance = norm(&(tx.last() - ty.last()), spec_x)?;
    Ok(IssReport {
        max_violation,
        pass: max_violation <= tol,
        sup_input_deviation: sup_du,
        final_distance,
    })
}

/// Equilibrium variant: `|x(t) - x*| <= e^{-c t} |x0 - x*| +
/// (l (1 - e^{-c t}) / c) sup |u - u*|` for an equilibrium input u*.
#[allow(clippy::too_many_arguments)]
pub fn iss_equilibrium_experiment(
    model: &VectorFieldModel,
    u: InputFn,
    u_star: InputFn,
    x0: &DVector<f64>,
    x_star: &DVector<f64>,
    c: f64,
    ell: f64,
    spec_x: &NormSpec,
    spec_u: &NormSpec,
    horizon: f64,
    h: f64,
    tol: f64,
) -> Result<IssReport> {
    let tx = integrate(model, 0.0, x0, Some(u), horizon, h)?;
    let d0 = norm(&(x0 - x_star), spec_x)?;
    let mut sup_du: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..tx.len() {
        let t = tx.time(i);
        let du = norm(&(u(t) - u_star(t)), spec_u)?;
        sup_du = sup_du.max(du);
        let d = norm(&(&tx.states[i] - x_star), spec_x)?;
        let bound = (-c * t).exp() * d0 + ell * (1.0 - (-c * t).exp()) / c * sup_du;
        max_violation = max_violation.max(d - bound);
    }
    let final_distance = norm(&(tx.last() - x_star), spec_x)?;
    Ok(IssReport {
        max_violation,
        pass: max_violation <= tol,
        sup_input_deviation: sup_du,
        final_distance,
    })
}

/// Measured Lq gain over a set of probe inputs, from identical initial
/// conditions; the theory bounds every ratio by l/c.
#[derive(Debug, Clone)]
pub struct GainReport {
    pub measured: f64,
    pub bound: f64,
    pub ratios: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn measure_gain(
    model: &VectorFieldModel,
    x0: &DVector<f64>,
    c: f64,
    ell: f64,
    spec_x: &NormSpec,
    spec_u: &NormSpec,
    q: f64,
    probes: &[&(dyn Fn(f64) -> DVector<f64> + Sync)],
    horizon: f64,
    h: f64,
) -> Result<GainReport> {
    let zero_input = move |_t: f64| DVector::<f64>::zeros(model.input_dim());
    let ty = integrate(model, 0.0, x0, Some(&zero_input), horizon, h)?;
    let grid = ty.times();
    let sn_x = SignalNorm::new(q, spec_x.clone(), grid.clone())?;
    let sn_u = SignalNorm::new(q, spec_u.clone(), grid.clone())?;
    let mut ratios = Vec::with_capacity(probes.len());
    for probe in probes {
        let tx = integrate(model, 0.0, x0, Some(*probe), horizon, h)?;
        tx.check_grids_match(&ty)?;
        let du: Vec<DVector<f64>> = grid.iter().map(|&t| probe(t)).collect();
        let u_norm = signal_norm(&du, &sn_u)?;
        if u_norm < 1e-12 {
            return Err(Error::ZeroProbe);
        }
        let dx: Vec<DVector<f64>> = (0..tx.len())
            .map(|i| &tx.states[i] - &ty.states[i])
            .collect();
        ratios.push(signal_norm(&dx, &sn_x)? / u_norm);
    }
    let measured = ratios.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(GainReport {
        measured,
        bound: ell / c,
        ratios,
    })
}

/// Integrate from the region center until `|f(t, x)| <= tol`; valid when the
/// model is certified contracting on the region, which makes the limit the
/// unique equilibrium.
pub fn find_equilibrium(
    model: &VectorFieldModel,
    spec: &NormSpec,
    region: &Region,
    t_max: f64,
    h: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    let mut x = region.center();
    let steps = (t_max / h).ceil() as usize;
    let mut residual = f64::INFINITY;
    for i in 0..=steps {
        let t = i as f64 * h;
        let f = model.eval_field(t, &x, None)?;
        residual = norm(&f, spec)?;
        if residual <= tol {
            return Ok(x);
        }
        let k1 = f;
        let k2 = model.eval_field(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), None)?;
        let k3 = model.eval_field(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), None)?;
        let k4 = model.eval_field(t + h, &(&x + &k3 * h), None)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::EquilibriumNotFound {
                horizon: t,
                residual,
            });
        }
    }
    Err(Error::EquilibriumNotFound {
        horizon: t_max,
        residual,
    })
}

/// Pointwise Gronwall bound `phi(t) <= e^{M(t)} (phi(0) + int r e^{-M})`
/// with M the running integral of m, all on the sample grid (trapezoid).
pub fn gronwall_bound(phi0: f64, m: &[f64], r: &[f64], h: f64) -> Vec<f64> {
    let n = m.len().min(r.len());
    let mut big_m = vec![0.0; n];
    for i in 1..n {
        big_m[i] = big_m[i - 1] + 0.5 * h * (m[i - 1] + m[i]);
    }
    let mut integral = vec![0.0; n];
    for i in 1..n {
        let f_prev = r[i - 1] * (-big_m[i - 1]).exp();
        let f_cur = r[i] * (-big_m[i]).exp();
        integral[i] = integral[i - 1] + 0.5 * h * (f_prev + f_cur);
    }
    (0..n)
        .map(|i| big_m[i].exp() * (phi0 + integral[i]))
        .collect()
}
