//! Semi-norms `|||v||| = norm(P v)`, matrix semi-measures, kernel-invariance
//! checks, and semi-/subspace-contraction certification. Convergence is
//! measured modulo the kernel of the projector (e.g. distance to consensus).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::{sample_states, Region};
use crate::error::{Error, Result};
use crate::measure::matrix_measure;
use crate::model::VectorFieldModel;
use crate::norms::{norm, sample_unit_sphere, NormSpec};
use crate::pairings::{weak_pairing, PairingKind};
use crate::sim::Trajectory;

/// A semi-norm given by a full-row-rank projector P (m x n) and a base norm
/// on the m-dimensional image.
#[derive(Debug, Clone)]
pub struct SemiNormSpec {
    projector: DMatrix<f64>,
    base: NormSpec,
    /// Orthonormal basis of ker P, n x (n - m).
    kernel: DMatrix<f64>,
    /// Minimum-norm right inverse P' (P P')^{-1}, n x m.
    pinv: DMatrix<f64>,
}

impl SemiNormSpec {
    pub fn new(projector: DMatrix<f64>, base: NormSpec) -> Result<SemiNormSpec> {
        let m = projector.nrows();
        let n = projector.ncols();
        if base.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: base.dim(),
            });
        }
        if m > n {
            return Err(Error::RankDeficientProjector { rcond: 0.0 });
        }
        // Rank and kernel from the spectral decomposition of P' P: the top m
        // eigenpairs carry the squared singular values of P, the remaining
        // n - m eigenvectors span the kernel.
        let gram = projector.transpose() * &projector;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lmax = eig.eigenvalues[order[0]].max(0.0);
        let lmin_row = eig.eigenvalues[order[m - 1]].max(0.0);
        if lmax == 0.0 || lmin_row.sqrt() <= 1e-10 * lmax.sqrt() {
            return Err(Error::RankDeficientProjector {
                rcond: if lmax > 0.0 {
                    lmin_row.sqrt() / lmax.sqrt()
                } else {
                    0.0
                },
            });
        }
        let mut kernel = DMatrix::zeros(n, n - m);
        for (j, &k) in order[m..].iter().enumerate() {
            kernel.set_column(j, &eig.eigenvectors.column(k));
        }
        let ppt = &projector * projector.transpose();
        let pinv = projector.transpose()
            * ppt
                .lu()
                .try_inverse()
                .ok_or(Error::RankDeficientProjector { rcond: 0.0 })?;
        Ok(SemiNormSpec {
            projector,
            base,
            kernel,
            pinv,
        })
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn base(&self) -> &NormSpec {
        &self.base
    }

    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn right_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn full_dim(&self) -> usize {
        self.projector.ncols()
    }

    pub fn image_dim(&self) -> usize {
        self.projector.nrows()
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.full_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.full_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Orthonormal complement of the all-ones direction: the projector whose
/// kernel is consensus, (n-1) x n.
pub fn consensus_projector(n: usize) -> DMatrix<f64> {
    assert!(n >= 2, "consensus projector needs n >= 2");
    let mut basis = DMatrix::zeros(n, n);
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    basis.set_column(0, &ones);
    for j in 1..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        basis.set_column(j, &e);
    }
    let qr = basis.qr();
    let q = qr.q();
    // Columns 1..n of Q span the complement of the ones direction.
    let mut p = DMatrix::zeros(n - 1, n);
    for j in 1..n {
        p.set_row(j - 1, &q.column(j).transpose());
    }
    p
}

/// `|||x||| = norm(P x)`; zero exactly on ker P.
pub fn semi_norm(x: &DVector<f64>, sspec: &SemiNormSpec) -> Result<f64> {
    sspec.check_dim(x)?;
    norm(&(&sspec.projector * x), &sspec.base)
}

/// Whether A maps ker P into ker P, with the residual `max_k |P A k|_2`
/// over an orthonormal kernel basis. The threshold scales with the data.
pub fn kernel_invariance(a: &DMatrix<f64>, sspec: &SemiNormSpec) -> Result<(bool, f64)> {
    if a.nrows() != sspec.full_dim() || a.ncols() != sspec.full_dim() {
        return Err(Error::DimensionMismatch {
            expected: sspec.full_dim(),
            got: a.nrows(),
        });
    }
    if sspec.kernel_dim() == 0 {
        return Ok((true, 0.0));
    }
    let pak = &sspec.projector * a * &sspec.kernel;
    let mut residual = 0.0f64;
    for j in 0..pak.ncols() {
        residual = residual.max(pak.column(j).norm());
    }
    let threshold = 1e-9 * (1.0 + a.abs().max());
    Ok((residual <= threshold, residual))
}

#[derive(Debug, Clone)]
pub struct SemiMeasureResult {
    pub value: f64,
    pub kernel_invariant: bool,
    pub kernel_residual: f64,
}

/// Matrix semi-measure via the reduced matrix P A P^+ on the image, valid
/// when ker P is A-invariant; any right inverse yields the same reduction in
/// that case. Non-invariant kernels are a hard error.
pub fn semi_measure(a: &DMatrix<f64>, sspec: &SemiNormSpec) -> Result<SemiMeasureResult> {
    let (ok, residual) = kernel_invariance(a, sspec)?;
    if !ok {
        return Err(Error::KernelNotInvariant {
            residual,
            threshold: 1e-9 * (1.0 + a.abs().max()),
        });
    }
    let reduced = &sspec.projector * a * &sspec.pinv;
    let value = matrix_measure(&reduced, &sspec.base)?.value;
    Ok(SemiMeasureResult {
        value,
        kernel_invariant: true,
        kernel_residual: residual,
    })
}

/// Sampled lower bound for the semi-measure: the pairing ratio of the
/// reduced matrix over unit vectors of the image, evaluated at points with
/// random kernel components mixed in.
pub fn semi_measure_lower_bound(
    a: &DMatrix<f64>,
    sspec: &SemiNormSpec,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let (ok, residual) = kernel_invariance(a, sspec)?;
    if !ok {
        return Err(Error::KernelNotInvariant {
            residual,
            threshold: 1e-9 * (1.0 + a.abs().max()),
        });
    }
    let kind = PairingKind::default_for(&sspec.base);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73_656d);
    let mut best = f64::NEG_INFINITY;
    for z in sample_unit_sphere(&sspec.base, samples.max(1), seed) {
        let mut x = &sspec.pinv * &z;
        if sspec.kernel_dim() > 0 {
            let w = DVector::from_fn(sspec.kernel_dim(), |_, _| rng.random_range(-1.0..1.0));
            x += &sspec.kernel * w;
        }
        let px = &sspec.projector * &x;
        let pax = &sspec.projector * (a * &x);
        let nd = norm(&px, &sspec.base)?;
        if nd > 0.0 {
            best = best.max(weak_pairing(&pax, &px, &sspec.base, kind)? / (nd * nd));
        }
    }
    Ok(best)
}

/// Semi-contraction certificate: empirical sups of the semi-norm one-sided
/// Lipschitz ratio and of the Jacobian semi-measure, with kernel invariance
/// verified at every sampled state.
#[derive(Debug, Clone)]
pub struct SemiContractionCertificate {
    pub osl_bound: f64,
    pub measure_bound: f64,
    pub samples: usize,
    pub osl_witness: (f64, DVector<f64>, DVector<f64>),
    pub measure_witness: (f64, DVector<f64>),
    pub verdict_contracting: bool,
}

pub fn certify_semicontraction(
    model: &VectorFieldModel,
    sspec: &SemiNormSpec,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<SemiContractionCertificate> {
    let n = sspec.full_dim();
    if model.state_dim() != n || region.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: model.state_dim(),
        });
    }
    let states = sample_states(region, samples.max(1), seed);
    let times = region.time_points(model.is_time_varying());
    let kind = PairingKind::default_for(&sspec.base);

    let mut measure_bound = f64::NEG_INFINITY;
    let mut measure_witness = (region.t0, states[0].clone());
    for (i, x) in states.iter().enumerate() {
        let t = times[i % times.len()];
        let j = model.eval_jacobian(t, x, None)?;
        let sm = semi_measure(&j, sspec)?;
        if sm.value > measure_bound {
            measure_bound = sm.value;
            measure_witness = (t, x.clone());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x736f_736c);
    let dirs = sample_unit_sphere(&sspec.base, 8, seed ^ 0x7364_6972);
    let mut osl_bound = f64::NEG_INFINITY;
    let mut osl_witness = (region.t0, states[0].clone(), states[0].clone());
    let mut evaluated = 0usize;
    let mut consider =
        |t: f64, x: &DVector<f64>, y: &DVector<f64>, best: &mut f64| -> Result<bool> {
            let dx = x - y;
            let pdx = &sspec.projector * &dx;
            let nd = norm(&pdx, &sspec.base)?;
            if nd < 1e-12 {
                return Ok(false);
            }
            let df = model.eval_field(t, x, None)? - model.eval_field(t, y, None)?;
            let pdf = &sspec.projector * df;
            let r = weak_pairing(&pdf, &pdx, &sspec.base, kind)? / (nd * nd);
            evaluated += 1;
            if r > *best {
                *best = r;
                return Ok(true);
            }
            Ok(false)
        };
    for (i, x) in states.iter().enumerate() {
        let t = times[i % times.len()];
        let y = DVector::from_fn(n, |d, _| {
            rng.random_range(region.lower()[d]..region.upper()[d])
        });
        if consider(t, x, &y, &mut osl_bound)? {
            osl_witness = (t, x.clone(), y.clone());
        }
        // Near pair along an image direction pulled back to state space.
        let z = &dirs[i % dirs.len()];
        let y = region.clamp(&(x + &sspec.pinv * z * 1e-4));
        if (&y - x).amax() > 0.0 && consider(t, x, &y, &mut osl_bound)? {
            osl_witness = (t, x.clone(), y.clone());
        }
    }
    let bound = osl_bound.max(measure_bound);
    Ok(SemiContractionCertificate {
        osl_bound,
        measure_bound,
        samples: evaluated + states.len(),
        osl_witness,
        measure_witness,
        verdict_contracting: bound < 0.0,
    })
}

/// Subspace contraction certificate toward x* + ker P.
#[derive(Debug, Clone)]
pub struct SubspaceContractionCertificate {
    pub bound: f64,
    pub samples: usize,
    pub worst_state: (f64, DVector<f64>),
    pub verdict_contracting: bool,
}

/// Certify `pair(P f(t,x), P(x - x*)) <= b |||x - x*|||^2` after verifying
/// the flow hypothesis `|||f(t, x* + k)||| = 0` on sampled kernel vectors.
pub fn certify_subspace_contraction(
    model: &VectorFieldModel,
    x_star: &DVector<f64>,
    sspec: &SemiNormSpec,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<SubspaceContractionCertificate> {
    let n = sspec.full_dim();
    if model.state_dim() != n || region.dim() != n || x_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_star.len(),
        });
    }
    let times = region.time_points(model.is_time_varying());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b66_6c6f);
    // Hypothesis: the field maps x* + ker P into ker P.
    if sspec.kernel_dim() > 0 {
        for _ in 0..16 {
            let w = DVector::from_fn(sspec.kernel_dim(), |_, _| rng.random_range(-2.0..2.0));
            let k = &sspec.kernel * w;
            for &t in &times {
                let residual = semi_norm(&model.eval_field(t, &(x_star + &k), None)?, sspec)?;
                if residual > 1e-8 {
                    return Err(Error::KernelFlowViolation { residual });
                }
            }
        }
    } else {
        for &t in &times {
            let residual = semi_norm(&model.eval_field(t, x_star, None)?, sspec)?;
            if residual > 1e-8 {
                return Err(Error::KernelFlowViolation { residual });
            }
        }
    }
    let kind = PairingKind::default_for(&sspec.base);
    let states = sample_states(region, samples.max(1), seed);
    let mut bound = f64::NEG_INFINITY;
    let mut worst = (region.t0, states[0].clone());
    let mut evaluated = 0usize;
    for (i, x) in states.iter().enumerate() {
        let t = times[i % times.len()];
        let dx = x - x_star;
        let pdx = &sspec.projector * &dx;
        let nd = norm(&pdx, &sspec.base)?;
        if nd < 1e-12 {
            continue;
        }
        let pf = &sspec.projector * model.eval_field(t, x, None)?;
        let r = weak_pairing(&pf, &pdx, &sspec.base, kind)? / (nd * nd);
        evaluated += 1;
        if r > bound {
            bound = r;
            worst = (t, x.clone());
        }
    }
    if evaluated == 0 {
        return Err(Error::TooFewSamples { needed: 1 });
    }
    Ok(SubspaceContractionCertificate {
        bound,
        samples: evaluated,
        worst_state: worst,
        verdict_contracting: bound < 0.0,
    })
}

/// Semi-norm Coppel check along a trajectory of xdot = A(t,x) x with
/// invariant kernels: `D+ |||x||| <= mu_semi(A(t,x)) |||x|||` with forward
/// differences and an O(h) margin; pass requires 99% of the grid.
pub fn semi_coppel_check(
    a_of: &dyn Fn(f64, &DVector<f64>) -> Result<DMatrix<f64>>,
    traj: &Trajectory,
    sspec: &SemiNormSpec,
    tol: f64,
) -> Result<crate::sim::DiniReport> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort { needed: 3, got: n });
    }
    let h = traj.h;
    let d: Vec<f64> = traj
        .states
        .iter()
        .map(|x| semi_norm(x, sspec))
        .collect::<Result<_>>()?;
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut max_excess = 0.0f64;
    for i in 0..n - 1 {
        checked += 1;
        let t = traj.time(i);
        let mu = semi_measure(&a_of(t, &traj.states[i])?, sspec)?.value;
        let forward = (d[i + 1] - d[i]) / h;
        let l_est = if i + 2 < n {
            ((d[i + 2] - 2.0 * d[i + 1] + d[i]) / (h * h)).abs()
        } else if i >= 1 {
            ((d[i + 1] - 2.0 * d[i] + d[i - 1]) / (h * h)).abs()
        } else {
            0.0
        };
        let excess = forward - (mu * d[i] + tol + l_est * h);
        if excess > 0.0 {
            violations += 1;
            max_excess = max_excess.max(excess);
        }
    }
    Ok(crate::sim::DiniReport {
        checked,
        excluded: 0,
        violations,
        max_excess,
        pass: (violations as f64) <= 0.01 * checked as f64,
    })
}

/// Semi-norm distance closure for envelope checks.
pub fn semi_distance<'a>(sspec: &'a SemiNormSpec) -> impl Fn(&DVector<f64>) -> f64 + 'a {
    move |v: &DVector<f64>| semi_norm(v, sspec).expect("dims match")
}
