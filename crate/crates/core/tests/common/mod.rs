//! Shared generators and oracles for the integration suites.
#![allow(dead_code)]

use contraction_core::model::{parse_vector_field, VectorFieldModel};
use contraction_core::norms::{Lp, NormSpec};
use contraction_core::pairings::PairingKind;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale))
}

/// Random invertible weight close to the identity (condition number ~ 2).
pub fn random_weight(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let r = DMatrix::identity(n, n) + random_matrix(rng, n, 0.3);
        let svd = r.clone().svd(false, false);
        if svd.singular_values.min() > 0.2 * svd.singular_values.max() {
            return r;
        }
    }
}

/// Random symmetric positive definite matrix with eigenvalues in [0.5, 2].
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q = random_matrix(rng, n, 1.0).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
    &q * d * q.transpose()
}

/// One `NormSpec` per contraction-equivalence row: weighted l2 (SPD P),
/// general p = 3 (invertible R), l1 (R), linf (R).
pub fn norm_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<(NormSpec, PairingKind)> {
    vec![
        (
            NormSpec::weighted_l2_from_spd(random_spd(rng, n)).unwrap(),
            PairingKind::GateauxLp,
        ),
        (
            NormSpec::weighted(Lp::P(3.0), random_weight(rng, n)).unwrap(),
            PairingKind::GateauxLp,
        ),
        (
            NormSpec::weighted(Lp::One, random_weight(rng, n)).unwrap(),
            PairingKind::SignL1,
        ),
        (
            NormSpec::weighted(Lp::Inf, random_weight(rng, n)).unwrap(),
            PairingKind::MaxLinf,
        ),
    ]
}

/// Random smooth expression model on [-2, 2]^n: stable linear part plus
/// small tanh/sin/product terms, built through the parser.
pub fn random_smooth_model(rng: &mut ChaCha8Rng, n: usize) -> VectorFieldModel {
    let amp = 0.3 / n as f64;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = format!("-{:.3}*x{}", rng.random_range(0.5..1.5), i + 1);
        for j in 0..n {
            let c: f64 = rng.random_range(-amp..amp);
            match rng.random_range(0..3) {
                0 => row.push_str(&format!(" + {:.4}*tanh(x{})", c, j + 1)),
                1 => row.push_str(&format!(" + {:.4}*sin(x{})", c, j + 1)),
                _ => row.push_str(&format!(" + {:.4}*x{}*x{}", c, i + 1, j + 1)),
            }
        }
        rows.push(row);
    }
    parse_vector_field(&rows.join("; "), n, 0).unwrap()
}

/// Laplacian of a random connected undirected graph on n nodes
/// (random spanning tree plus a few extra edges).
pub fn random_connected_laplacian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for v in 1..n {
        let u = rng.random_range(0..v);
        adj[(u, v)] = 1.0;
        adj[(v, u)] = 1.0;
    }
    for _ in 0..n {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            adj[(u, v)] = 1.0;
            adj[(v, u)] = 1.0;
        }
    }
    let mut lap = -adj.clone();
    for i in 0..n {
        lap[(i, i)] = adj.row(i).sum();
    }
    lap
}

/// Second-smallest eigenvalue of a symmetric Laplacian.
pub fn algebraic_connectivity(lap: &DMatrix<f64>) -> f64 {
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(lap.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(f64::total_cmp);
    eigs[1]
}

/// Matrix exponential oracle e^{A t}.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    (a * t).exp()
}

/// Random irreducible Metzler matrix: positive cycle plus random
/// nonnegative off-diagonals and a negative random diagonal.
pub fn random_irreducible_metzler(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = -rng.random_range(0.5..4.0);
        for j in 0..n {
            if i != j && rng.random_range(0.0..1.0) < 0.5 {
                m[(i, j)] = rng.random_range(0.0..2.0);
            }
        }
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if m[(i, j)] == 0.0 {
            m[(i, j)] = rng.random_range(0.1..1.0);
        }
    }
    m
}
