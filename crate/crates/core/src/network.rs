//! Composition of per-subsystem contraction certificates over an
//! interconnection: the Metzler gain matrix, its spectral abscissa, Perron
//! diagonal weights, the xi-weighted aggregation norm, and assembly of the
//! network vector field for simulation cross-checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::{sample_states, Region};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr, Var, VarContext};
use crate::model::VectorFieldModel;
use crate::norms::{norm, sample_unit_sphere, NormSpec};
use crate::pairings::{weak_pairing, PairingKind};

/// Block structure of a stacked state vector.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(dims: Vec<usize>) -> BlockLayout {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        BlockLayout {
            dims,
            offsets,
            total: acc,
        }
    }

    pub fn blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn block(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        x.rows(self.offsets[i], self.dims[i]).into_owned()
    }

    pub fn split(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.blocks()).map(|i| self.block(x, i)).collect()
    }
}

/// xi-weighted aggregation norm over per-block norms:
/// `norm(x)^2 = sum_i xi_i norm_i(x_i)^2`, with the matching summed pairing.
#[derive(Debug, Clone)]
pub struct AggregateNorm {
    pub layout: BlockLayout,
    pub norms: Vec<NormSpec>,
    pub kinds: Vec<PairingKind>,
    pub xi: DVector<f64>,
}

impl AggregateNorm {
    pub fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.layout.total() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.total(),
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        for i in 0..self.layout.blocks() {
            let n = norm(&self.layout.block(x, i), &self.norms[i])?;
            acc += self.xi[i] * n * n;
        }
        Ok(acc.sqrt())
    }

    pub fn pairing(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != self.layout.total() || y.len() != self.layout.total() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.total(),
                got: x.len().max(y.len()),
            });
        }
        let mut acc = 0.0;
        for i in 0..self.layout.blocks() {
            acc += self.xi[i]
                * weak_pairing(
                    &self.layout.block(x, i),
                    &self.layout.block(y, i),
                    &self.norms[i],
                    self.kinds[i],
                )?;
        }
        Ok(acc)
    }
}

/// xi-weighted norm of a list of blocks.
pub fn aggregate_norm(
    blocks: &[DVector<f64>],
    xi: &DVector<f64>,
    norms: &[NormSpec],
) -> Result<f64> {
    if blocks.len() != xi.len() || blocks.len() != norms.len() {
        return Err(Error::BlockMismatch {
            message: format!(
                "{} blocks, {} weights, {} norms",
                blocks.len(),
                xi.len(),
                norms.len()
            ),
        });
    }
    let mut acc = 0.0;
    for i in 0..blocks.len() {
        let n = norm(&blocks[i], &norms[i])?;
        acc += xi[i] * n * n;
    }
    Ok(acc.sqrt())
}

/// xi-weighted sum of per-block pairings.
pub fn aggregate_pairing(
    x_blocks: &[DVector<f64>],
    y_blocks: &[DVector<f64>],
    xi: &DVector<f64>,
    norms: &[NormSpec],
    kinds: &[PairingKind],
) -> Result<f64> {
    if x_blocks.len() != y_blocks.len() || x_blocks.len() != xi.len() {
        return Err(Error::BlockMismatch {
            message: "pairing block counts differ".to_string(),
        });
    }
    let mut acc = 0.0;
    for i in 0..x_blocks.len() {
        acc += xi[i] * weak_pairing(&x_blocks[i], &y_blocks[i], &norms[i], kinds[i])?;
    }
    Ok(acc)
}

fn check_metzler(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] < 0.0 {
                return Err(Error::NotMetzler {
                    i,
                    j,
                    value: m[(i, j)],
                });
            }
        }
    }
    Ok(())
}

/// Strong connectivity of the off-diagonal sparsity digraph.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if transpose { m[(j, i)] } else { m[(i, j)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(false) == n && reach(true) == n
}

/// Spectral abscissa of a Metzler matrix: the maximal real part, which is a
/// real (Perron) eigenvalue. The imaginary residual of the dominant
/// eigenvalue is required to vanish.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    check_metzler(m)?;
    let eigs = m.complex_eigenvalues();
    let mut best = eigs[0];
    for l in eigs.iter() {
        if l.re > best.re {
            best = *l;
        }
    }
    if best.im.abs() > 1e-10 * (1.0 + best.re.abs()) {
        return Err(Error::PerronNotConverged {
            change: best.im.abs(),
        });
    }
    Ok(best.re)
}

/// Right and left Perron eigenvectors of an irreducible Metzler matrix via
/// power iteration on the nonnegative shift M - beta I, polished by one
/// inverse-iteration step.
fn perron_pair(m: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = m.nrows();
    let beta = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min) - 1.0;
    let shifted = m - DMatrix::<f64>::identity(n, n) * beta;
    let one_sided = |a: &DMatrix<f64>| -> Result<DVector<f64>> {
        let mut v = DVector::from_element(n, 1.0 / n as f64);
        let mut change = f64::INFINITY;
        for _ in 0..200_000 {
            let mut w = a * &v;
            let s = w.sum();
            if !(s > 0.0) {
                return Err(Error::PerronNotConverged { change });
            }
            w /= s;
            change = (&w - &v).amax();
            v = w;
            if change < 1e-12 {
                break;
            }
        }
        if change >= 1e-10 {
            return Err(Error::PerronNotConverged { change });
        }
        // One inverse-iteration step sharpens the eigenvector; skipped if
        // the shifted solve is too close to singular.
        let av = a * &v;
        let lambda = v.dot(&av) / v.dot(&v);
        let sigma = lambda * (1.0 + 1e-8) + 1e-12;
        let shifted = a - DMatrix::<f64>::identity(n, n) * sigma;
        if let Some(w) = shifted.lu().solve(&v) {
            let w = w.abs();
            let s = w.sum();
            if s > 0.0 && w.iter().all(|x| x.is_finite()) {
                let w = w / s;
                if w.iter().all(|&x| x > 0.0) {
                    return Ok(w);
                }
            }
        }
        Ok(v)
    };
    let v = one_sided(&shifted)?;
    let u = one_sided(&shifted.transpose())?;
    if v.iter().any(|&x| !(x > 0.0)) || u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::PerronNotConverged { change: f64::NAN });
    }
    Ok((v, u))
}

/// Positive diagonal weights xi certifying
/// `diag(xi) M + M' diag(xi) <= 2 (alpha(M) + epsilon) diag(xi)`.
#[derive(Debug, Clone)]
pub struct DiagonalWeights {
    /// Normalized so min_i xi_i = 1.
    pub xi: DVector<f64>,
    pub epsilon: f64,
    /// Verified max eigenvalue of the LMI residual; always <= 1e-9.
    pub lmi_max_eig: f64,
}

fn lmi_max_eig(m: &DMatrix<f64>, xi: &DVector<f64>, level: f64) -> f64 {
    let d = DMatrix::from_diagonal(xi);
    let s = &d * m + m.transpose() * &d - &d * (2.0 * level);
    SymmetricEigen::new(s).eigenvalues.max()
}

/// Construct diagonal weights from the Perron pair xi_i = u_i / v_i; for
/// reducible matrices the off-diagonals are perturbed to force
/// irreducibility, with the perturbation shrunk until the LMI on the
/// original matrix verifies at level alpha(M) + epsilon.
pub fn diagonal_weights(m: &DMatrix<f64>, epsilon: f64) -> Result<DiagonalWeights> {
    check_metzler(m)?;
    let n = m.nrows();
    let alpha = spectral_abscissa(m)?;
    let verify = |xi: &DVector<f64>, eps: f64| -> f64 { lmi_max_eig(m, xi, alpha + eps) };
    let normalize = |xi: DVector<f64>| -> DVector<f64> {
        let mn = xi.min();
        xi / mn
    };
    if is_irreducible(m) {
        let (v, u) = perron_pair(m)?;
        let xi = normalize(DVector::from_fn(n, |i, _| u[i] / v[i]));
        let residual = verify(&xi, epsilon);
        if residual > 1e-9 {
            return Err(Error::LmiVerificationFailed { residual });
        }
        return Ok(DiagonalWeights {
            xi,
            epsilon,
            lmi_max_eig: residual,
        });
    }
    if epsilon <= 0.0 {
        return Err(Error::ReducibleNeedsEpsilon);
    }
    let mut delta = epsilon / (4.0 * n as f64);
    let mut last_residual = f64::INFINITY;
    for _ in 0..40 {
        let mut perturbed = m.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    perturbed[(i, j)] += delta;
                }
            }
        }
        let alpha_shift = spectral_abscissa(&perturbed)? - alpha;
        if alpha_shift <= epsilon {
            let (v, u) = perron_pair(&perturbed)?;
            let xi = normalize(DVector::from_fn(n, |i, _| u[i] / v[i]));
            last_residual = verify(&xi, epsilon);
            if last_residual <= 1e-9 {
                return Ok(DiagonalWeights {
                    xi,
                    epsilon,
                    lmi_max_eig: last_residual,
                });
            }
        }
        delta *= 0.5;
    }
    Err(Error::LmiVerificationFailed {
        residual: last_residual,
    })
}

/// One subsystem of an interconnection: its rows over the full stacked
/// state, a certified self rate c_i, cross gains to the other blocks, and
/// the block norm/pairing.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub name: String,
    rows: Vec<Expr>,
    pub input_dim: usize,
    /// Certified one-sided Lipschitz rate: osl of x_i -> f_i at frozen
    /// neighbors is at most -self_rate < 0.
    pub self_rate: f64,
    /// gamma_ij >= 0 for j != i; the own entry is ignored.
    pub cross_gains: Vec<f64>,
    pub norm: NormSpec,
    pub kind: PairingKind,
}

impl SubsystemSpec {
    pub fn new(
        name: &str,
        rows: Vec<Expr>,
        input_dim: usize,
        self_rate: f64,
        cross_gains: Vec<f64>,
        norm: NormSpec,
        kind: PairingKind,
    ) -> Result<SubsystemSpec> {
        if rows.len() != norm.dim() {
            return Err(Error::BlockMismatch {
                message: format!("{} rows for a block of dim {}", rows.len(), norm.dim()),
            });
        }
        kind.check_compatible(&norm)?;
        Ok(SubsystemSpec {
            name: name.to_string(),
            rows,
            input_dim,
            self_rate,
            cross_gains,
            norm,
            kind,
        })
    }

    /// Parse the block rows from a semicolon/newline-separated source over
    /// the full state x1..xN and this block's inputs u1..uk.
    #[allow(clippy::too_many_arguments)]
    pub fn parse(
        name: &str,
        source: &str,
        full_dim: usize,
        input_dim: usize,
        self_rate: f64,
        cross_gains: Vec<f64>,
        norm: NormSpec,
        kind: PairingKind,
    ) -> Result<SubsystemSpec> {
        let ctx = VarContext {
            state_dim: full_dim,
            input_dim,
        };
        let rows = source
            .split(|c| c == ';' || c == '\n')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| parse_expr(s, ctx))
            .collect::<Result<Vec<_>>>()?;
        SubsystemSpec::new(name, rows, input_dim, self_rate, cross_gains, norm, kind)
    }

    pub fn block_dim(&self) -> usize {
        self.norm.dim()
    }

    /// Evaluate this block's rows at the full state.
    pub fn eval_rows(
        &self,
        t: f64,
        x_full: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        let xs: Vec<f64> = x_full.iter().copied().collect();
        let us: Vec<f64> = match u {
            Some(u) => u.iter().copied().collect(),
            None => vec![0.0; self.input_dim],
        };
        let mut out = DVector::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row
                .eval(t, &xs, &us)
                .map_err(|_| Error::DivisionByZero { component: i })?;
        }
        Ok(out)
    }
}

/// The Metzler gain matrix Gamma with -c_i on the diagonal and gamma_ij off
/// the diagonal.
#[derive(Debug, Clone)]
pub struct GainMatrix {
    pub gamma: DMatrix<f64>,
    pub abscissa: f64,
    pub irreducible: bool,
}

pub fn assemble_gain_matrix(subsystems: &[SubsystemSpec]) -> Result<GainMatrix> {
    let n = subsystems.len();
    let mut gamma = DMatrix::zeros(n, n);
    for (i, sub) in subsystems.iter().enumerate() {
        if !(sub.self_rate > 0.0) {
            return Err(Error::BlockMismatch {
                message: format!("subsystem {} has self rate {} <= 0", sub.name, sub.self_rate),
            });
        }
        if sub.cross_gains.len() != n {
            return Err(Error::BlockMismatch {
                message: format!(
                    "subsystem {} lists {} cross gains for {} blocks",
                    sub.name,
                    sub.cross_gains.len(),
                    n
                ),
            });
        }
        gamma[(i, i)] = -sub.self_rate;
        for (j, &g) in sub.cross_gains.iter().enumerate() {
            if j != i {
                if g < 0.0 {
                    return Err(Error::NotMetzler { i, j, value: g });
                }
                gamma[(i, j)] = g;
            }
        }
    }
    let abscissa = spectral_abscissa(&gamma)?;
    let irreducible = is_irreducible(&gamma);
    Ok(GainMatrix {
        gamma,
        abscissa,
        irreducible,
    })
}

/// Network certificate: the gain matrix analysis plus, when Hurwitz, the
/// aggregation norm under which the interconnection contracts and the
/// assembled model for simulation cross-checks.
#[derive(Debug, Clone)]
pub struct NetworkCertificate {
    pub gain: GainMatrix,
    pub weights: Option<DiagonalWeights>,
    pub epsilon_used: f64,
    /// Contraction rate |alpha + epsilon| under the aggregate norm.
    pub rate: Option<f64>,
    pub certified: bool,
    pub aggregate: Option<AggregateNorm>,
    pub assembled: VectorFieldModel,
}

/// Compose subsystem certificates: Hurwitz gain matrix implies contraction
/// of the interconnection under the xi-weighted norm at rate
/// |alpha(Gamma) + epsilon| (epsilon = 0 when Gamma is irreducible).
pub fn certify_network(subsystems: &[SubsystemSpec], epsilon: f64) -> Result<NetworkCertificate> {
    if subsystems.is_empty() {
        return Err(Error::BlockMismatch {
            message: "no subsystems".to_string(),
        });
    }
    let layout = BlockLayout::new(subsystems.iter().map(|s| s.block_dim()).collect());
    let total = layout.total();
    let assembled = assemble_network_model(subsystems, total)?;
    let gain = assemble_gain_matrix(subsystems)?;
    if gain.abscissa >= 0.0 {
        return Ok(NetworkCertificate {
            gain,
            weights: None,
            epsilon_used: epsilon,
            rate: None,
            certified: false,
            aggregate: None,
            assembled,
        });
    }
    let epsilon_used = if gain.irreducible { 0.0 } else { epsilon };
    if !gain.irreducible && !(epsilon > 0.0 && epsilon < -gain.abscissa) {
        return Err(Error::BlockMismatch {
            message: format!(
                "reducible gain matrix needs epsilon in ]0, {}[, got {epsilon}",
                -gain.abscissa
            ),
        });
    }
    let weights = diagonal_weights(&gain.gamma, epsilon_used)?;
    let aggregate = AggregateNorm {
        layout,
        norms: subsystems.iter().map(|s| s.norm.clone()).collect(),
        kinds: subsystems.iter().map(|s| s.kind).collect(),
        xi: weights.xi.clone(),
    };
    let rate = -(gain.abscissa + epsilon_used);
    Ok(NetworkCertificate {
        gain,
        weights: Some(weights),
        epsilon_used,
        rate: Some(rate),
        certified: true,
        aggregate: Some(aggregate),
        assembled,
    })
}

fn assemble_network_model(subsystems: &[SubsystemSpec], total: usize) -> Result<VectorFieldModel> {
    let mut components = Vec::with_capacity(total);
    let mut input_offset = 0usize;
    for sub in subsystems {
        for row in &sub.rows {
            components.push(remap_inputs(row, input_offset));
        }
        input_offset += sub.input_dim;
    }
    if components.len() != total {
        return Err(Error::BlockMismatch {
            message: format!("{} rows assembled for total dim {total}", components.len()),
        });
    }
    Ok(VectorFieldModel::from_components(
        "network",
        components,
        input_offset,
    ))
}

fn remap_inputs(e: &Expr, offset: usize) -> Expr {
    match e {
        Expr::Var(Var::U(j)) => Expr::Var(Var::U(j + offset)),
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(remap_inputs(a, offset))),
        Expr::Add(a, b) => Expr::Add(
            Box::new(remap_inputs(a, offset)),
            Box::new(remap_inputs(b, offset)),
        ),
        Expr::Sub(a, b) => Expr::Sub(
            Box::new(remap_inputs(a, offset)),
            Box::new(remap_inputs(b, offset)),
        ),
        Expr::Mul(a, b) => Expr::Mul(
            Box::new(remap_inputs(a, offset)),
            Box::new(remap_inputs(b, offset)),
        ),
        Expr::Div(a, b) => Expr::Div(
            Box::new(remap_inputs(a, offset)),
            Box::new(remap_inputs(b, offset)),
        ),
        Expr::Pow(a, k) => Expr::Pow(Box::new(remap_inputs(a, offset)), *k),
        Expr::Tanh(a) => Expr::Tanh(Box::new(remap_inputs(a, offset))),
        Expr::Sin(a) => Expr::Sin(Box::new(remap_inputs(a, offset))),
        Expr::Cos(a) => Expr::Cos(Box::new(remap_inputs(a, offset))),
        Expr::Exp(a) => Expr::Exp(Box::new(remap_inputs(a, offset))),
        Expr::Abs(a) => Expr::Abs(Box::new(remap_inputs(a, offset))),
        Expr::Sign(a) => Expr::Sign(Box::new(remap_inputs(a, offset))),
    }
}

/// Empirical one-sided Lipschitz estimate of the assembled network under the
/// aggregate norm and pairing, over random and near-coincident pairs.
pub fn network_osl_estimate(
    assembled: &VectorFieldModel,
    aggregate: &AggregateNorm,
    region: &Region,
    pair_samples: usize,
    seed: u64,
) -> Result<f64> {
    let n = assembled.state_dim();
    if region.dim() != n || aggregate.layout.total() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: region.dim(),
        });
    }
    let half = (pair_samples / 2).max(1);
    let states = sample_states(region, half, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_7473);
    let mut best = f64::NEG_INFINITY;
    let mut consider = |t: f64, x: &DVector<f64>, y: &DVector<f64>| -> Result<()> {
        let dx = x - y;
        let nd = aggregate.norm(&dx)?;
        if nd > 0.0 {
            let df = assembled.eval_field(t, x, None)? - assembled.eval_field(t, y, None)?;
            best = best.max(aggregate.pairing(&df, &dx)? / (nd * nd));
        }
        Ok(())
    };
    let euclid = NormSpec::unweighted(crate::norms::Lp::P(2.0), n);
    let dirs = sample_unit_sphere(&euclid, 16, seed ^ 0x6469_7230);
    for (i, x) in states.iter().enumerate() {
        let y = DVector::from_fn(n, |d, _| {
            rng.random_range(region.lower()[d]..region.upper()[d])
        });
        if (&y - x).amax() > 0.0 {
            consider(region.t0, x, &y)?;
        }
        let dir = &dirs[i % dirs.len()];
        let y = region.clamp(&(x + dir * 1e-4));
        if (&y - x).amax() > 0.0 {
            consider(region.t0, x, &y)?;
        }
    }
    Ok(best)
}

/// Empirical cross-gain estimates for one subsystem: gamma_ij is the sup of
/// `norm_i(f_i(t, x) - f_i(t, x'))/norm_j(x_j - x'_j)` over pairs differing
/// only in block j, with each deviation measured in block j's own norm.
pub fn estimate_cross_gains(
    sub: &SubsystemSpec,
    layout: &BlockLayout,
    own_index: usize,
    block_norms: &[NormSpec],
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n_blocks = layout.blocks();
    if block_norms.len() != n_blocks {
        return Err(Error::BlockMismatch {
            message: format!("{} block norms for {} blocks", block_norms.len(), n_blocks),
        });
    }
    let states = sample_states(region, samples.max(1), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6761_696e);
    let mut gains = vec![0.0f64; n_blocks];
    for (j, gain) in gains.iter_mut().enumerate() {
        if j == own_index {
            continue;
        }
        let off = layout.offsets[j];
        let dim_j = layout.dims[j];
        for x in &states {
            let mut y = x.clone();
            for d in 0..dim_j {
                y[off + d] = rng.random_range(region.lower()[off + d]..region.upper()[off + d]);
            }
            let delta_j = y.rows(off, dim_j).into_owned() - x.rows(off, dim_j).into_owned();
            let nd = norm(&delta_j, &block_norms[j])?;
            if nd < 1e-12 {
                continue;
            }
            let df = sub.eval_rows(region.t0, &y, None)? - sub.eval_rows(region.t0, x, None)?;
            *gain = (*gain).max(norm(&df, &sub.norm)? / nd);
        }
    }
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::Lp;
    use approx::assert_abs_diff_eq;

    fn l2(n: usize) -> NormSpec {
        NormSpec::unweighted(Lp::P(2.0), n)
    }

    #[test]
    fn abscissa_worked_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 1.0, -1.0]);
        assert_abs_diff_eq!(spectral_abscissa(&m).unwrap(), 1.0, epsilon = 1e-10);
        let m = DMatrix::<f64>::identity(3, 3) * -1.0;
        assert_abs_diff_eq!(spectral_abscissa(&m).unwrap(), -1.0, epsilon = 1e-12);
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        assert_abs_diff_eq!(spectral_abscissa(&m).unwrap(), -1.0, epsilon = 1e-10);
    }

    #[test]
    fn non_metzler_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 1.0, -1.0]);
        assert!(matches!(spectral_abscissa(&m), Err(Error::NotMetzler { .. })));
    }

    #[test]
    fn diagonal_weights_worked_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 1.0, -1.0]);
        let w = diagonal_weights(&m, 0.0).unwrap();
        // xi proportional to (1/2, 2): normalized to min 1 -> (1, 4).
        assert_abs_diff_eq!(w.xi[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w.xi[1], 4.0, epsilon = 1e-8);
        assert!(w.lmi_max_eig <= 1e-9);
        // With the normalization xi = (1/2, 2), the residual matrix is
        // [[-2, 4], [4, -8]] with eigenvalues {0, -10}.
        let xi_half = DVector::from_row_slice(&[0.5, 2.0]);
        let d = DMatrix::from_diagonal(&xi_half);
        let s = &d * &m + m.transpose() * &d - &d * 2.0;
        let eigs = SymmetricEigen::new(s).eigenvalues;
        let mut sorted: Vec<f64> = eigs.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(sorted[0], -10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sorted[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn diagonal_weights_symmetric_gives_uniform_xi() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let w = diagonal_weights(&m, 0.0).unwrap();
        assert_abs_diff_eq!(w.xi[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w.xi[1], 1.0, epsilon = 1e-9);
        assert!(w.lmi_max_eig.abs() <= 1e-9);
    }

    #[test]
    fn diagonal_weights_reducible_needs_epsilon() {
        let m = DMatrix::<f64>::identity(2, 2) * -1.0;
        assert!(matches!(
            diagonal_weights(&m, 0.0),
            Err(Error::ReducibleNeedsEpsilon)
        ));
        let w = diagonal_weights(&m, 0.1).unwrap();
        assert!(w.xi.iter().all(|&x| x > 0.0));
        assert!(w.lmi_max_eig <= 1e-9);
    }

    #[test]
    fn aggregate_norm_examples() {
        // Two scalar blocks (3), (4) with unit weights: plain Euclidean 5.
        let blocks = vec![
            DVector::from_row_slice(&[3.0]),
            DVector::from_row_slice(&[4.0]),
        ];
        let xi = DVector::from_row_slice(&[1.0, 1.0]);
        let norms = vec![l2(1), l2(1)];
        assert_eq!(aggregate_norm(&blocks, &xi, &norms).unwrap(), 5.0);

        // Blocks (1,0), (0,2) in linf with xi = (4,1): sqrt(4*1 + 1*4).
        let blocks = vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[0.0, 2.0]),
        ];
        let xi = DVector::from_row_slice(&[4.0, 1.0]);
        let norms = vec![
            NormSpec::unweighted(Lp::Inf, 2),
            NormSpec::unweighted(Lp::Inf, 2),
        ];
        assert_abs_diff_eq!(
            aggregate_norm(&blocks, &xi, &norms).unwrap(),
            8.0f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn aggregate_pairing_compatibility() {
        let layout = BlockLayout::new(vec![2, 1]);
        let agg = AggregateNorm {
            layout,
            norms: vec![NormSpec::unweighted(Lp::One, 2), l2(1)],
            kinds: vec![PairingKind::SignL1, PairingKind::GateauxLp],
            xi: DVector::from_row_slice(&[2.0, 3.0]),
        };
        let x = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
        let n = agg.norm(&x).unwrap();
        assert_abs_diff_eq!(agg.pairing(&x, &x).unwrap(), n * n, epsilon = 1e-12);
    }

    #[test]
    fn two_block_symmetric_network_rate_one() {
        let subs = vec![
            SubsystemSpec::parse(
                "s1",
                "-2*x1 + x2",
                2,
                0,
                2.0,
                vec![0.0, 1.0],
                l2(1),
                PairingKind::GateauxLp,
            )
            .unwrap(),
            SubsystemSpec::parse(
                "s2",
                "x1 - 2*x2",
                2,
                0,
                2.0,
                vec![1.0, 0.0],
                l2(1),
                PairingKind::GateauxLp,
            )
            .unwrap(),
        ];
        let cert = certify_network(&subs, 0.0).unwrap();
        assert!(cert.certified);
        assert_abs_diff_eq!(cert.gain.abscissa, -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cert.rate.unwrap(), 1.0, epsilon = 1e-10);
        let w = cert.weights.unwrap();
        assert_abs_diff_eq!(w.xi[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(w.xi[1], 1.0, epsilon = 1e-8);
        // The assembled model is the linear system [[-2, 1], [1, -2]].
        let x = DVector::from_row_slice(&[0.3, -1.1]);
        let f = cert.assembled.eval_field(0.0, &x, None).unwrap();
        assert_abs_diff_eq!(f[0], -2.0 * 0.3 - 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.3 + 2.0 * 1.1, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_network_rate_min_c() {
        let subs = vec![
            SubsystemSpec::parse("a", "-3*x1", 2, 0, 3.0, vec![0.0, 0.0], l2(1), PairingKind::GateauxLp)
                .unwrap(),
            SubsystemSpec::parse("b", "-1.5*x2", 2, 0, 1.5, vec![0.0, 0.0], l2(1), PairingKind::GateauxLp)
                .unwrap(),
        ];
        let cert = certify_network(&subs, 0.1).unwrap();
        assert!(cert.certified);
        assert!(!cert.gain.irreducible);
        assert_abs_diff_eq!(cert.gain.abscissa, -1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.rate.unwrap(), 1.4, epsilon = 1e-12);
    }

    #[test]
    fn hurwitz_failure_not_certified() {
        let subs = vec![
            SubsystemSpec::parse("a", "-x1 + 4*x2", 2, 0, 1.0, vec![0.0, 4.0], l2(1), PairingKind::GateauxLp)
                .unwrap(),
            SubsystemSpec::parse("b", "x1 - x2", 2, 0, 1.0, vec![1.0, 0.0], l2(1), PairingKind::GateauxLp)
                .unwrap(),
        ];
        let cert = certify_network(&subs, 0.0).unwrap();
        assert!(!cert.certified);
        assert_abs_diff_eq!(cert.gain.abscissa, 1.0, epsilon = 1e-10);
        assert!(cert.rate.is_none());
    }

    #[test]
    fn perron_monotonicity_in_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = if i == j {
                        -rng.random_range(0.5..3.0)
                    } else {
                        rng.random_range(0.0..1.0)
                    };
                }
            }
            let base = spectral_abscissa(&m).unwrap();
            let mut bumped = m.clone();
            let i = rng.random_range(0..n);
            let j = (i + 1 + rng.random_range(0..n - 1)) % n;
            bumped[(i, j)] += rng.random_range(0.0..0.5);
            let after = spectral_abscissa(&bumped).unwrap();
            assert!(after >= base - 1e-10, "abscissa decreased: {base} -> {after}");
        }
    }

    #[test]
    fn cross_gain_estimate_linear_coupling() {
        let layout = BlockLayout::new(vec![1, 1]);
        let sub = SubsystemSpec::parse(
            "s1",
            "-2*x1 + 0.7*x2",
            2,
            0,
            2.0,
            vec![0.0, 0.7],
            l2(1),
            PairingKind::GateauxLp,
        )
        .unwrap();
        let region = Region::symmetric_box(2.0, 2);
        let norms = [l2(1), l2(1)];
        let gains = estimate_cross_gains(&sub, &layout, 0, &norms, &region, 200, 0).unwrap();
        assert_abs_diff_eq!(gains[1], 0.7, epsilon = 1e-9);
        assert_eq!(gains[0], 0.0);
    }
}
