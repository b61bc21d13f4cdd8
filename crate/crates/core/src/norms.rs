//! Weighted lp norms, index sets, unit-sphere sampling, and signal norms.
//!
//! A `NormSpec` fixes the exponent p and an invertible weight R so that
//! `norm(x) = ||R x||_p`. The l2 case also accepts a symmetric positive
//! definite P, converted internally to R = P^(1/2).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Exponent of an lp norm, p in [1, inf].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lp {
    One,
    /// Finite p in ]1, inf[.
    P(f64),
    Inf,
}

impl Lp {
    pub fn from_f64(p: f64) -> Result<Lp> {
        if p == 1.0 {
            Ok(Lp::One)
        } else if p.is_infinite() && p > 0.0 {
            Ok(Lp::Inf)
        } else if p.is_finite() && p > 1.0 {
            Ok(Lp::P(p))
        } else {
            Err(Error::InvalidExponent { p })
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Lp::One => 1.0,
            Lp::P(p) => *p,
            Lp::Inf => f64::INFINITY,
        }
    }

    pub fn is_two(&self) -> bool {
        matches!(self, Lp::P(p) if *p == 2.0)
    }
}

impl std::fmt::Display for Lp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lp::One => write!(f, "1"),
            Lp::P(p) => write!(f, "{p}"),
            Lp::Inf => write!(f, "inf"),
        }
    }
}

/// Unweighted lp norm of a raw slice of coordinates. Finite p scales by the
/// max entry first so that large exponents neither overflow nor underflow.
pub fn lp_norm_raw(z: &DVector<f64>, p: Lp) -> f64 {
    match p {
        Lp::One => z.iter().map(|v| v.abs()).sum(),
        Lp::Inf => z.iter().fold(0.0, |acc, v| acc.max(v.abs())),
        Lp::P(p) => {
            if p == 2.0 {
                return z.norm();
            }
            let m = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let sum: f64 = z.iter().map(|v| (v.abs() / m).powf(p)).sum();
            m * sum.powf(1.0 / p)
        }
    }
}

/// A weighted lp norm ||x||_{p,R} = ||R x||_p on R^n.
#[derive(Debug, Clone)]
pub struct NormSpec {
    p: Lp,
    dim: usize,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    identity_weight: bool,
}

impl NormSpec {
    /// Unweighted lp norm on R^n.
    pub fn unweighted(p: Lp, dim: usize) -> NormSpec {
        NormSpec {
            p,
            dim,
            r: DMatrix::identity(dim, dim),
            r_inv: DMatrix::identity(dim, dim),
            identity_weight: true,
        }
    }

    /// Weighted lp norm with an explicit invertible weight R.
    pub fn weighted(p: Lp, r: DMatrix<f64>) -> Result<NormSpec> {
        if r.nrows() != r.ncols() {
            return Err(Error::NotSquare {
                rows: r.nrows(),
                cols: r.ncols(),
            });
        }
        let dim = r.nrows();
        let svd = r.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) || smax == 0.0 {
            return Err(Error::SingularWeight {
                rcond: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or(Error::SingularWeight { rcond: smin / smax })?;
        let identity_weight = r == DMatrix::identity(dim, dim);
        Ok(NormSpec {
            p,
            dim,
            r,
            r_inv,
            identity_weight,
        })
    }

    /// Weighted l2 norm from a symmetric positive definite P; uses R = P^(1/2),
    /// so that norm(x)^2 = x' P x.
    pub fn weighted_l2_from_spd(p_matrix: DMatrix<f64>) -> Result<NormSpec> {
        if p_matrix.nrows() != p_matrix.ncols() {
            return Err(Error::NotSquare {
                rows: p_matrix.nrows(),
                cols: p_matrix.ncols(),
            });
        }
        let sym_err = (&p_matrix - p_matrix.transpose()).abs().max();
        if sym_err > 1e-10 * (1.0 + p_matrix.abs().max()) {
            return Err(Error::NotPositiveDefinite);
        }
        let sym = SymmetricEigen::new(p_matrix.clone());
        if sym.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let half = DMatrix::from_diagonal(&sym.eigenvalues.map(|l| l.sqrt()));
        let r = &sym.eigenvectors * half * sym.eigenvectors.transpose();
        NormSpec::weighted(Lp::P(2.0), r)
    }

    pub fn p(&self) -> Lp {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn weight_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn has_identity_weight(&self) -> bool {
        self.identity_weight
    }

    pub(crate) fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// R x, skipping the multiply for identity weights.
    pub fn apply_weight(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.identity_weight {
            x.clone()
        } else {
            &self.r * x
        }
    }

    /// R^{-1} z.
    pub fn apply_weight_inv(&self, z: &DVector<f64>) -> DVector<f64> {
        if self.identity_weight {
            z.clone()
        } else {
            &self.r_inv * z
        }
    }

    /// The similarity R A R^{-1} used by weighted matrix measures.
    pub fn similarity(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity_weight {
            a.clone()
        } else {
            &self.r * a * &self.r_inv
        }
    }
}

/// ||R x||_p. Zero exactly when x = 0.
pub fn norm(x: &DVector<f64>, spec: &NormSpec) -> Result<f64> {
    spec.check_dim(x)?;
    Ok(lp_norm_raw(&spec.apply_weight(x), spec.p()))
}

/// Indices attaining max_i |v_i|. For v = 0 every index attains the max.
pub fn inf_index_set(v: &DVector<f64>) -> Vec<usize> {
    let m = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() == m)
        .map(|(i, _)| i)
        .collect()
}

/// Deterministic unit-sphere samples: standard-normal draws in the weighted
/// coordinates, lp-normalized there, then mapped back through R^{-1} and
/// renormalized so |norm(x) - 1| stays at rounding level.
pub fn sample_unit_sphere(spec: &NormSpec, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = standard_normal_vector(&mut rng, spec.dim());
        let s = lp_norm_raw(&z, spec.p());
        if s < 1e-30 {
            continue;
        }
        let mut x = spec.apply_weight_inv(&(z / s));
        // One more pass through the public norm kills the R * R^{-1} rounding.
        let n = norm(&x, spec).expect("dims match by construction");
        if !(n.is_finite() && n > 0.0) {
            continue;
        }
        x /= n;
        out.push(x);
    }
    out
}

pub(crate) fn standard_normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    use rand::Rng;
    DVector::from_fn(dim, |_, _| {
        // Box-Muller; quality is irrelevant here, determinism is not.
        let u1: f64 = rng.random::<f64>().max(1e-16);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    })
}

/// Signal-space norm: a time exponent q over a fixed sample grid,
/// with an inner `NormSpec` for the state space.
#[derive(Debug, Clone)]
pub struct SignalNorm {
    pub q: f64,
    pub space_norm: NormSpec,
    pub time_grid: Vec<f64>,
}

impl SignalNorm {
    pub fn new(q: f64, space_norm: NormSpec, time_grid: Vec<f64>) -> Result<SignalNorm> {
        if !(q >= 1.0) {
            return Err(Error::InvalidSignalExponent { q });
        }
        if time_grid.len() < 2 {
            return Err(Error::GridTooShort {
                needed: 2,
                got: time_grid.len(),
            });
        }
        for i in 1..time_grid.len() {
            if !(time_grid[i] > time_grid[i - 1]) {
                return Err(Error::GridNotIncreasing { index: i });
            }
        }
        Ok(SignalNorm {
            q,
            space_norm,
            time_grid,
        })
    }
}

/// For finite q: trapezoid quadrature of ||x(t)||^q, then the q-th root.
/// For q = inf: the max of ||x(t)|| over the grid.
pub fn signal_norm(samples: &[DVector<f64>], sn: &SignalNorm) -> Result<f64> {
    if samples.len() != sn.time_grid.len() {
        return Err(Error::SignalLengthMismatch {
            expected: sn.time_grid.len(),
            got: samples.len(),
        });
    }
    let norms: Vec<f64> = samples
        .iter()
        .map(|x| norm(x, &sn.space_norm))
        .collect::<Result<_>>()?;
    if sn.q.is_infinite() {
        return Ok(norms.iter().fold(0.0f64, |acc, &v| acc.max(v)));
    }
    let mut acc = 0.0;
    for i in 1..norms.len() {
        let dt = sn.time_grid[i] - sn.time_grid[i - 1];
        acc += 0.5 * dt * (norms[i - 1].powf(sn.q) + norms[i].powf(sn.q));
    }
    Ok(acc.powf(1.0 / sn.q))
}
