//! Matrix measures (logarithmic norms) for weighted lp norms.
//!
//! Closed forms for p in {1, 2, inf} on the similarity R A R^{-1}, an
//! ascent-based optimizer for every p, and a sampled lower bound. The
//! optimizer never touches the closed forms: every value it reports is a
//! genuine pairing ratio `pair(Ax, x) / norm(x)^2` at some concrete point, so
//! the two routes check each other through Lumer's equality.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::norms::{lp_norm_raw, norm, sample_unit_sphere, standard_normal_vector, Lp, NormSpec};
use crate::pairings::{weak_pairing, PairingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureMethod {
    ClosedForm,
    Optimized,
}

/// A matrix measure value plus the unit vector that (nearly) attains it.
#[derive(Debug, Clone)]
pub struct MeasureResult {
    pub value: f64,
    pub method: MeasureMethod,
    /// Feasible unit vector; its pairing ratio never exceeds `value + 1e-8`.
    pub witness: DVector<f64>,
    /// Spread of the restart values; only meaningful for `Optimized`.
    pub gap_estimate: Option<f64>,
}

fn check_square(a: &DMatrix<f64>, spec: &NormSpec) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: a.nrows(),
        });
    }
    Ok(())
}

/// mu_1 of an unweighted matrix: max over columns of the diagonal entry plus
/// the absolute off-diagonal column sum. Returns (value, attaining column),
/// smallest column index on ties.
fn mu_one_raw(b: &DMatrix<f64>) -> (f64, usize) {
    let n = b.nrows();
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for j in 0..n {
        let mut s = b[(j, j)];
        for i in 0..n {
            if i != j {
                s += b[(i, j)].abs();
            }
        }
        if s > best {
            best = s;
            best_j = j;
        }
    }
    (best, best_j)
}

/// mu_inf of an unweighted matrix: max over rows of the diagonal entry plus
/// the absolute off-diagonal row sum.
fn mu_inf_raw(b: &DMatrix<f64>) -> (f64, usize) {
    let n = b.nrows();
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for i in 0..n {
        let mut s = b[(i, i)];
        for j in 0..n {
            if j != i {
                s += b[(i, j)].abs();
            }
        }
        if s > best {
            best = s;
            best_i = i;
        }
    }
    (best, best_i)
}

fn sym_part(b: &DMatrix<f64>) -> DMatrix<f64> {
    (b + b.transpose()) * 0.5
}

fn sign_or_one(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Near-vertex candidates in weighted coordinates for the l1 measure: for each
/// column j, the vertex e_j bent slightly into the orthant aligned with the
/// column signs. The sign pairing approaches the column sum there.
fn l1_vertex_candidates(b: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = b.nrows();
    let eps = 1e-9;
    let mut out = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut z = DVector::zeros(n);
        z[j] = 1.0;
        out.push(z.clone());
        for i in 0..n {
            if i != j {
                z[i] = eps * sign_or_one(b[(i, j)]);
            }
        }
        out.push(z);
    }
    out
}

/// Sign-vertex candidates in weighted coordinates for the linf measure: for
/// each row i, own entry exactly 1 and the other entries bent to
/// (1 - eta) times the row signs. The strict maximum at index i keeps the
/// max index set a singleton under rounding, and the max pairing evaluates
/// to the row sum up to O(eta).
fn linf_vertex_candidates_bent(b: &DMatrix<f64>, eta: f64) -> Vec<DVector<f64>> {
    let n = b.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = DVector::from_element(n, 1.0);
        for j in 0..n {
            if j != i {
                z[j] = (1.0 - eta) * sign_or_one(b[(i, j)]);
            }
        }
        out.push(z);
    }
    out
}

fn linf_vertex_candidates(b: &DMatrix<f64>) -> Vec<DVector<f64>> {
    linf_vertex_candidates_bent(b, 1e-9)
}

/// Shifted power ascent of the Rayleigh quotient of sym(B); an optimizer
/// route for p = 2 that stays away from the eigendecomposition.
fn rayleigh_ascent(s: &DMatrix<f64>, z0: &DVector<f64>, iters: usize) -> (f64, DVector<f64>) {
    let shift = s.abs().column_sum().max() + 1.0;
    let mut z = z0.clone();
    let nz = z.norm();
    if nz == 0.0 {
        z = DVector::from_element(s.nrows(), 1.0);
    }
    z /= z.norm();
    let mut value = (z.transpose() * s * &z)[(0, 0)];
    for _ in 0..iters {
        let mut w = s * &z + &z * shift;
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        w /= nw;
        let v = (w.transpose() * s * &w)[(0, 0)];
        if (v - value).abs() < 1e-15 * (1.0 + value.abs()) {
            z = w;
            value = v;
            break;
        }
        z = w;
        value = v;
    }
    (value, z)
}

/// Objective (z o |z|^{p-2})' B z for the general-p measure.
fn lp_objective(b: &DMatrix<f64>, z: &DVector<f64>, p: f64) -> f64 {
    let bz = b * z;
    z.iter()
        .zip(bz.iter())
        .map(|(zi, bzi)| {
            if *zi == 0.0 {
                0.0
            } else {
                zi * zi.abs().powf(p - 2.0) * bzi
            }
        })
        .sum()
}

/// Projected gradient ascent on the lp sphere with backtracking.
fn lp_ascent(
    b: &DMatrix<f64>,
    p: f64,
    z0: &DVector<f64>,
    max_iters: usize,
) -> (f64, DVector<f64>) {
    let n = b.nrows();
    let renorm = |z: &mut DVector<f64>| {
        let s = lp_norm_raw(z, Lp::P(p));
        if s > 0.0 {
            *z /= s;
        }
    };
    let mut z = z0.clone();
    renorm(&mut z);
    let mut value = lp_objective(b, &z, p);
    let mut step = 1e-2;
    let mut stalled = 0u32;
    for _ in 0..max_iters {
        let bz = b * &z;
        let w = DVector::from_fn(n, |i, _| {
            let zi: f64 = z[i];
            if zi == 0.0 {
                0.0
            } else {
                zi * zi.abs().powf(p - 2.0)
            }
        });
        let btw = b.transpose() * &w;
        let grad = DVector::from_fn(n, |i, _| {
            let zi: f64 = z[i];
            let fac = zi.abs().max(1e-10).powf(p - 2.0);
            (p - 1.0) * fac * bz[i] + btw[i]
        });
        let gn = grad.norm();
        if gn < 1e-14 * (1.0 + value.abs()) {
            break;
        }
        let mut improved = false;
        let mut s = step;
        for _ in 0..40 {
            let mut cand = &z + &grad * (s / gn.max(1e-300));
            renorm(&mut cand);
            let v = lp_objective(b, &cand, p);
            if v > value {
                let gain = v - value;
                z = cand;
                value = v;
                step = (s * 2.0).min(1e-1);
                improved = true;
                if gain < 1e-13 * (1.0 + value.abs()) {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                break;
            }
            s *= 0.5;
        }
        if !improved || stalled >= 3 {
            break;
        }
    }
    (value, z)
}

/// Deterministic, moderately priced measure estimate for finite p outside
/// {1, 2}: projected ascent from structured vertex starts. Used in per-state
/// sampling loops where the full multi-restart optimizer is too slow; the
/// same routine backs the direction candidates, so Demidovich and one-sided
/// Lipschitz estimators see exactly this optimum at each state.
pub(crate) fn quick_measure_estimate(
    b: &DMatrix<f64>,
    p: f64,
    iters: usize,
) -> (f64, DVector<f64>) {
    let n = b.nrows();
    let mut starts = vec![DVector::from_element(n, 1.0)];
    starts.extend(l1_vertex_candidates(b));
    starts.extend(linf_vertex_candidates(b));
    starts.extend(linf_vertex_candidates_bent(b, (8.0 / p).clamp(1e-9, 0.2)));
    // Rank the starts by initial objective and only ascend from the best few.
    let mut scored: Vec<(f64, usize)> = starts
        .iter()
        .enumerate()
        .map(|(i, z0)| {
            let mut z = z0.clone();
            let s = lp_norm_raw(&z, Lp::P(p));
            if s > 0.0 {
                z /= s;
            }
            (lp_objective(b, &z, p), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = f64::NEG_INFINITY;
    let mut best_z = DVector::from_element(n, 1.0);
    for &(_, i) in scored.iter().take(4) {
        let (v, z) = lp_ascent(b, p, &starts[i], iters);
        if v > best {
            best = v;
            best_z = z;
        }
    }
    (best, best_z)
}

/// The pairing ratio `pair(Ax, x) / norm(x)^2`; by Lumer's equality it never
/// exceeds the matrix measure.
pub fn pairing_ratio(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    spec: &NormSpec,
    kind: PairingKind,
) -> Result<f64> {
    let n = norm(x, spec)?;
    if n == 0.0 {
        return Err(Error::TooFewSamples { needed: 1 });
    }
    let ax = a * x;
    Ok(weak_pairing(&ax, x, spec, kind)? / (n * n))
}

/// Matrix measure mu_{p,R}(A): closed forms for p in {1, 2, inf}, otherwise
/// a 32-restart projected ascent with the restart spread as a gap estimate.
pub fn matrix_measure(a: &DMatrix<f64>, spec: &NormSpec) -> Result<MeasureResult> {
    check_square(a, spec)?;
    let b = spec.similarity(a);
    let n = spec.dim();
    match spec.p() {
        Lp::One => {
            let (value, j) = mu_one_raw(&b);
            let z = l1_vertex_candidates(&b)[2 * j + 1].clone();
            let witness = unit_witness(&z, spec);
            Ok(MeasureResult {
                value,
                method: MeasureMethod::ClosedForm,
                witness,
                gap_estimate: None,
            })
        }
        Lp::Inf => {
            let (value, i) = mu_inf_raw(&b);
            let z = linf_vertex_candidates(&b)[i].clone();
            let witness = unit_witness(&z, spec);
            Ok(MeasureResult {
                value,
                method: MeasureMethod::ClosedForm,
                witness,
                gap_estimate: None,
            })
        }
        Lp::P(p) if p == 2.0 => {
            let eig = SymmetricEigen::new(sym_part(&b));
            let (mut value, mut idx) = (f64::NEG_INFINITY, 0);
            for (k, &l) in eig.eigenvalues.iter().enumerate() {
                if l > value {
                    value = l;
                    idx = k;
                }
            }
            let z = eig.eigenvectors.column(idx).into_owned();
            let witness = unit_witness(&z, spec);
            Ok(MeasureResult {
                value,
                method: MeasureMethod::ClosedForm,
                witness,
                gap_estimate: None,
            })
        }
        Lp::P(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6173);
            let mut best = f64::NEG_INFINITY;
            let mut worst = f64::INFINITY;
            let mut best_z = DVector::from_element(n, 1.0);
            // At extreme p the optimum sits near axis vertices (p -> 1) or
            // sign vertices (p -> inf); the vertex bend scales with p so
            // off-row entries stay suppressed in the p-weighted objective.
            let mut starts = vec![DVector::from_element(n, 1.0)];
            starts.extend(l1_vertex_candidates(&b));
            starts.extend(linf_vertex_candidates(&b));
            starts.extend(linf_vertex_candidates_bent(&b, (8.0 / p).clamp(1e-9, 0.2)));
            while starts.len() < 32 + 3 * n {
                starts.push(standard_normal_vector(&mut rng, n));
            }
            for z0 in &starts {
                let (v, z) = lp_ascent(&b, p, z0, 500);
                if v > best {
                    best = v;
                    best_z = z;
                }
                if v < worst {
                    worst = v;
                }
            }
            let witness = unit_witness(&best_z, spec);
            Ok(MeasureResult {
                value: best,
                method: MeasureMethod::Optimized,
                witness,
                gap_estimate: Some(best - worst),
            })
        }
    }
}

/// Map a weighted-coordinate direction back to state space and normalize.
fn unit_witness(z: &DVector<f64>, spec: &NormSpec) -> DVector<f64> {
    let mut x = spec.apply_weight_inv(z);
    let nx = norm(&x, spec).expect("dims match");
    if nx > 0.0 {
        x /= nx;
    }
    x
}

/// Max of `pair(Ax, x)` over seeded unit-sphere samples. A lower bound on the
/// matrix measure for any pairing kind compatible with the norm.
pub fn measure_lower_bound_sampling(
    a: &DMatrix<f64>,
    spec: &NormSpec,
    kind: PairingKind,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::TooFewSamples { needed: 1 });
    }
    check_square(a, spec)?;
    kind.check_compatible(spec)?;
    let mut best = f64::NEG_INFINITY;
    for x in sample_unit_sphere(spec, samples, seed) {
        let ax = a * &x;
        best = best.max(weak_pairing(&ax, &x, spec, kind)?);
    }
    Ok(best)
}

/// Candidate directions (state space) along which the pairing ratio of `a`
/// is large; used to polish sampled suprema. All returned vectors are unit.
pub fn direction_candidates(a: &DMatrix<f64>, spec: &NormSpec) -> Vec<DVector<f64>> {
    let b = spec.similarity(a);
    let zs: Vec<DVector<f64>> = match spec.p() {
        Lp::One => l1_vertex_candidates(&b),
        Lp::Inf => linf_vertex_candidates(&b),
        Lp::P(p) if p == 2.0 => {
            let (_, z) = rayleigh_ascent(&sym_part(&b), &DVector::from_element(b.nrows(), 1.0), 400);
            vec![z]
        }
        Lp::P(p) => {
            let (_, z) = quick_measure_estimate(&b, p, 250);
            vec![z]
        }
    };
    zs.iter().map(|z| unit_witness(z, spec)).collect()
}

/// Sampled supremum of the pairing ratio, polished with structured candidates
/// (near-vertex points for l1/linf, gradient ascent for finite p). Returns
/// the best ratio and the point attaining it. Independent of the closed
/// forms in `matrix_measure`: only pairing evaluations are ever compared.
pub fn optimize_pairing_sup(
    a: &DMatrix<f64>,
    spec: &NormSpec,
    kind: PairingKind,
    samples: usize,
    seed: u64,
) -> Result<(f64, DVector<f64>)> {
    check_square(a, spec)?;
    kind.check_compatible(spec)?;
    let b = spec.similarity(a);
    let n = spec.dim();
    let mut best = f64::NEG_INFINITY;
    let mut best_x = DVector::zeros(n);
    let consider = |x: &DVector<f64>, best: &mut f64, best_x: &mut DVector<f64>| {
        if let Ok(r) = pairing_ratio(a, x, spec, kind) {
            if r > *best {
                *best = r;
                *best_x = x.clone();
            }
        }
    };
    for x in sample_unit_sphere(spec, samples.max(1), seed) {
        consider(&x, &mut best, &mut best_x);
    }
    match spec.p() {
        Lp::One | Lp::Inf => {
            for x in direction_candidates(a, spec) {
                consider(&x, &mut best, &mut best_x);
            }
        }
        Lp::P(p) if p == 2.0 => {
            let s = sym_part(&b);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_7973);
            let start = spec.apply_weight(&best_x);
            let mut starts = vec![start];
            for _ in 0..4 {
                starts.push(standard_normal_vector(&mut rng, n));
            }
            for z0 in starts {
                let (_, z) = rayleigh_ascent(&s, &z0, 2000);
                let x = unit_witness(&z, spec);
                consider(&x, &mut best, &mut best_x);
            }
        }
        Lp::P(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c70_6173);
            let start = spec.apply_weight(&best_x);
            let mut starts = vec![start];
            for _ in 0..31 {
                starts.push(standard_normal_vector(&mut rng, n));
            }
            for z0 in starts {
                let (_, z) = lp_ascent(&b, p, &z0, 500);
                let x = unit_witness(&z, spec);
                consider(&x, &mut best, &mut best_x);
            }
        }
    }
    Ok((best, best_x))
}

/// Residuals of the standard matrix-measure identities evaluated through
/// `matrix_measure`: shift by c I, nonnegative scaling, subadditivity, and
/// domination of the spectral abscissa.
#[derive(Debug, Clone)]
pub struct MeasurePropertiesReport {
    pub shift_residual: f64,
    pub scale_residual: f64,
    pub subadditivity_excess: f64,
    pub spectral_excess: f64,
    pub pass: bool,
}

pub fn measure_properties_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: f64,
    alpha: f64,
    spec: &NormSpec,
) -> Result<MeasurePropertiesReport> {
    check_square(a, spec)?;
    check_square(b, spec)?;
    let n = spec.dim();
    let mu = |m: &DMatrix<f64>| -> Result<f64> { Ok(matrix_measure(m, spec)?.value) };
    let mu_a = mu(a)?;
    let shifted = a + DMatrix::<f64>::identity(n, n) * c;
    let shift_residual = (mu(&shifted)? - (mu_a + c)).abs();
    let scale_residual = (mu(&(a * alpha))? - alpha * mu_a).abs();
    let subadditivity_excess = (mu(&(a + b))? - (mu_a + mu(b)?)).max(0.0);
    let max_re = a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let spectral_excess = (max_re - mu_a).max(0.0);
    let tol = 1e-8;
    Ok(MeasurePropertiesReport {
        shift_residual,
        scale_residual,
        subadditivity_excess,
        spectral_excess,
        pass: shift_residual <= tol
            && scale_residual <= tol
            && subadditivity_excess <= tol
            && spectral_excess <= tol,
    })
}
