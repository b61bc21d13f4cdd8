//! Time-varying vector fields f(t, x) or f(t, x, u) with exact symbolic
//! Jacobians, plus a registry of builtin systems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr, Var, VarContext};

/// A vector field with component expressions and their exact symbolic
/// Jacobians with respect to state and input.
#[derive(Debug, Clone)]
pub struct VectorFieldModel {
    pub name: String,
    state_dim: usize,
    input_dim: usize,
    components: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
    input_jacobian: Vec<Vec<Expr>>,
    /// Declared equilibrium of the unforced field, if known.
    pub equilibrium: Option<DVector<f64>>,
    /// Optional factorization f(t,x) = A(t,x)(x - x*): the entries of A and
    /// the base point x*.
    factor: Option<(Vec<Vec<Expr>>, DVector<f64>)>,
}

impl VectorFieldModel {
    pub fn from_components(name: &str, components: Vec<Expr>, input_dim: usize) -> VectorFieldModel {
        let n = components.len();
        let jacobian = components
            .iter()
            .map(|f| (0..n).map(|j| f.derivative(Var::X(j))).collect())
            .collect();
        let input_jacobian = components
            .iter()
            .map(|f| (0..input_dim).map(|j| f.derivative(Var::U(j))).collect())
            .collect();
        VectorFieldModel {
            name: name.to_string(),
            state_dim: n,
            input_dim,
            components,
            jacobian,
            input_jacobian,
            equilibrium: None,
            factor: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn with_equilibrium(mut self, x_star: DVector<f64>) -> VectorFieldModel {
        self.equilibrium = Some(x_star);
        self
    }

    pub fn with_factorization(
        mut self,
        a: Vec<Vec<Expr>>,
        x_star: DVector<f64>,
    ) -> VectorFieldModel {
        self.factor = Some((a, x_star));
        self
    }

    pub fn has_factorization(&self) -> bool {
        self.factor.is_some()
    }

    /// True if any component involves `abs`/`sign`, i.e. the field can have
    /// derivative kinks.
    pub fn has_abs_kinks(&self) -> bool {
        self.components.iter().any(|e| e.contains_abs())
    }

    pub fn is_time_varying(&self) -> bool {
        self.components.iter().any(|e| e.references_time())
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn input_slice(&self, u: Option<&DVector<f64>>) -> Result<Vec<f64>> {
        match u {
            Some(u) => {
                if u.len() != self.input_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.input_dim,
                        got: u.len(),
                    });
                }
                Ok(u.iter().copied().collect())
            }
            // Missing input reads as zero.
            None => Ok(vec![0.0; self.input_dim]),
        }
    }

    /// f(t, x, u).
    pub fn eval_field(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        self.check_state(x)?;
        let uu = self.input_slice(u)?;
        let xs: Vec<f64> = x.iter().copied().collect();
        let mut out = DVector::zeros(self.state_dim);
        for (i, c) in self.components.iter().enumerate() {
            out[i] = c
                .eval(t, &xs, &uu)
                .map_err(|_| Error::DivisionByZero { component: i })?;
        }
        Ok(out)
    }

    /// The exact Jacobian Df(t, x, u) evaluated numerically.
    pub fn eval_jacobian(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let uu = self.input_slice(u)?;
        let xs: Vec<f64> = x.iter().copied().collect();
        let mut out = DMatrix::zeros(self.state_dim, self.state_dim);
        for (i, row) in self.jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = e
                    .eval(t, &xs, &uu)
                    .map_err(|_| Error::DivisionByZero { component: i })?;
            }
        }
        Ok(out)
    }

    /// The input Jacobian df/du evaluated numerically.
    pub fn eval_input_jacobian(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let uu = self.input_slice(u)?;
        let xs: Vec<f64> = x.iter().copied().collect();
        let mut out = DMatrix::zeros(self.state_dim, self.input_dim);
        for (i, row) in self.input_jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = e
                    .eval(t, &xs, &uu)
                    .map_err(|_| Error::DivisionByZero { component: i })?;
            }
        }
        Ok(out)
    }

    /// Evaluate the declared factor A(t, x) with f(t,x) = A(t,x)(x - x*).
    pub fn eval_factor(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (a, _) = self.factor.as_ref().ok_or(Error::NoFactorization)?;
        self.check_state(x)?;
        let xs: Vec<f64> = x.iter().copied().collect();
        let n = self.state_dim;
        let mut out = DMatrix::zeros(n, n);
        for (i, row) in a.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = e
                    .eval(t, &xs, &[])
                    .map_err(|_| Error::DivisionByZero { component: i })?;
            }
        }
        Ok(out)
    }

    pub fn factor_base_point(&self) -> Option<&DVector<f64>> {
        self.factor.as_ref().map(|(_, x)| x)
    }

    /// Render the components as a parseable source string.
    pub fn print_source(&self) -> String {
        self.components
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// f + c * identity, with Jacobians rebuilt symbolically.
    pub fn shifted(&self, c: f64) -> VectorFieldModel {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(i, f)| Expr::add(f.clone(), Expr::mul(Expr::Const(c), Expr::var(Var::X(i)))))
            .collect();
        VectorFieldModel::from_components(&format!("{}+{}I", self.name, c), components, self.input_dim)
    }

    /// alpha * f.
    pub fn scaled(&self, alpha: f64) -> VectorFieldModel {
        let components = self
            .components
            .iter()
            .map(|f| Expr::mul(Expr::Const(alpha), f.clone()))
            .collect();
        VectorFieldModel::from_components(&format!("{}*{}", alpha, self.name), components, self.input_dim)
    }

    /// f + g (matching dimensions required).
    pub fn sum(&self, other: &VectorFieldModel) -> Result<VectorFieldModel> {
        if other.state_dim != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: other.state_dim,
            });
        }
        let input_dim = self.input_dim.max(other.input_dim);
        let components = self
            .components
            .iter()
            .zip(other.components.iter())
            .map(|(f, g)| Expr::add(f.clone(), g.clone()))
            .collect();
        Ok(VectorFieldModel::from_components(
            &format!("{}+{}", self.name, other.name),
            components,
            input_dim,
        ))
    }

    /// Max relative disagreement between the symbolic Jacobian and a central
    /// finite difference at seeded random points in [-2, 2]^n.
    pub fn jacobian_fd_error(&self, points: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.state_dim;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let t = rng.random_range(0.0..2.0);
            let u = if self.input_dim > 0 {
                Some(DVector::from_fn(self.input_dim, |_, _| rng.random_range(-1.0..1.0)))
            } else {
                None
            };
            let jac = self.eval_jacobian(t, &x, u.as_ref())?;
            let scale = 1.0 + jac.abs().max();
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = self.eval_field(t, &xp, u.as_ref())?;
                let fm = self.eval_field(t, &xm, u.as_ref())?;
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    worst = worst.max((jac[(i, j)] - fd).abs() / scale);
                }
            }
        }
        Ok(worst)
    }
}

/// Parse a semicolon- or newline-separated list of n component expressions
/// over x1..xn, t, u1..uk.
pub fn parse_vector_field(source: &str, n: usize, k: usize) -> Result<VectorFieldModel> {
    let ctx = VarContext {
        state_dim: n,
        input_dim: k,
    };
    let pieces: Vec<&str> = source
        .split(|c| c == ';' || c == '\n')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if pieces.len() != n {
        return Err(Error::ComponentCountMismatch {
            expected: n,
            found: pieces.len(),
        });
    }
    let components = pieces
        .iter()
        .map(|s| parse_expr(s, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorFieldModel::from_components("expression", components, k))
}

/// Builtin systems used throughout the test and CLI surfaces.
#[derive(Debug, Clone)]
pub enum BuiltinSystem {
    /// xdot = A x.
    Linear(DMatrix<f64>),
    /// xdot = A(x) x with A(x) = diag(-x2^2 - 1, x1^2 - 1): equilibrium
    /// contracting at rate 1 in l2 while mu_2(A(x)) reaches x1^2 - 1.
    Counterexample,
    /// xdot = -diag(a) x + T tanh(x) + bias + u, a > 0 entrywise.
    Hopfield {
        a: DVector<f64>,
        t: DMatrix<f64>,
        bias: DVector<f64>,
    },
    /// Scalar xdot = -c x + ell u.
    ScalarIss { c: f64, ell: f64 },
}

impl BuiltinSystem {
    pub fn build(&self) -> VectorFieldModel {
        match self {
            BuiltinSystem::Linear(a) => {
                let n = a.nrows();
                let components = (0..n)
                    .map(|i| {
                        let mut acc = Expr::Const(0.0);
                        for j in 0..n {
                            acc = Expr::add(
                                acc,
                                Expr::mul(Expr::Const(a[(i, j)]), Expr::var(Var::X(j))),
                            );
                        }
                        acc
                    })
                    .collect();
                let factor = (0..n)
                    .map(|i| (0..n).map(|j| Expr::Const(a[(i, j)])).collect())
                    .collect();
                VectorFieldModel::from_components("linear", components, 0)
                    .with_equilibrium(DVector::zeros(n))
                    .with_factorization(factor, DVector::zeros(n))
            }
            BuiltinSystem::Counterexample => {
                let x1 = || Expr::var(Var::X(0));
                let x2 = || Expr::var(Var::X(1));
                let a11 = Expr::sub(Expr::neg(Expr::pow(x2(), 2)), Expr::Const(1.0));
                let a22 = Expr::sub(Expr::pow(x1(), 2), Expr::Const(1.0));
                let components = vec![
                    Expr::mul(a11.clone(), x1()),
                    Expr::mul(a22.clone(), x2()),
                ];
                let factor = vec![
                    vec![a11, Expr::Const(0.0)],
                    vec![Expr::Const(0.0), a22],
                ];
                VectorFieldModel::from_components("counterexample", components, 0)
                    .with_equilibrium(DVector::zeros(2))
                    .with_factorization(factor, DVector::zeros(2))
            }
            BuiltinSystem::Hopfield { a, t, bias } => {
                let n = a.len();
                assert_eq!(t.nrows(), n);
                assert_eq!(bias.len(), n);
                assert!(a.iter().all(|&ai| ai > 0.0), "hopfield decay must be positive");
                let components = (0..n)
                    .map(|i| {
                        let mut acc = Expr::mul(Expr::Const(-a[i]), Expr::var(Var::X(i)));
                        for j in 0..n {
                            acc = Expr::add(
                                acc,
                                Expr::mul(
                                    Expr::Const(t[(i, j)]),
                                    Expr::Tanh(Box::new(Expr::var(Var::X(j)))),
                                ),
                            );
                        }
                        acc = Expr::add(acc, Expr::Const(bias[i]));
                        acc = Expr::add(acc, Expr::var(Var::U(i)));
                        acc
                    })
                    .collect();
                VectorFieldModel::from_components("hopfield", components, n)
            }
            BuiltinSystem::ScalarIss { c, ell } => {
                let f = Expr::add(
                    Expr::mul(Expr::Const(-c), Expr::var(Var::X(0))),
                    Expr::mul(Expr::Const(*ell), Expr::var(Var::U(0))),
                );
                VectorFieldModel::from_components("scalar_iss", vec![f], 1)
                    .with_equilibrium(DVector::zeros(1))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(entries: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(entries)
    }

    #[test]
    fn parsed_jacobian_matches_hand_differentiation() {
        let model = parse_vector_field("-x1 + tanh(x2); -x2", 2, 0).unwrap();
        let j = model.eval_jacobian(0.0, &v(&[0.0, 0.0]), None).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]));
        let j = model.eval_jacobian(0.0, &v(&[0.0, 0.8]), None).unwrap();
        let sech2 = 1.0 - 0.8f64.tanh().powi(2);
        assert_abs_diff_eq!(j[(0, 1)], sech2, epsilon = 1e-15);
    }

    #[test]
    fn zero_field() {
        let model = parse_vector_field("0; 0", 2, 0).unwrap();
        assert_eq!(model.eval_field(1.0, &v(&[3.0, -1.0]), None).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(
            model.eval_jacobian(1.0, &v(&[3.0, -1.0]), None).unwrap(),
            DMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn linear_skew_jacobian() {
        let model = parse_vector_field("x2; -x1", 2, 0).unwrap();
        let j = model.eval_jacobian(0.0, &v(&[0.4, 0.9]), None).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    }

    #[test]
    fn counterexample_field_and_jacobian() {
        let model = BuiltinSystem::Counterexample.build();
        assert_eq!(model.eval_field(0.0, &v(&[1.0, 1.0]), None).unwrap(), v(&[-2.0, 0.0]));
        let j = model.eval_jacobian(0.0, &v(&[1.0, 1.0]), None).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-2.0, -2.0, 2.0, 0.0]));
        let a = model.eval_factor(0.0, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn counterexample_quadratic_identity() {
        // x' A(x) x = -|x|^2 pointwise.
        let model = BuiltinSystem::Counterexample.build();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let f = model.eval_field(0.0, &x, None).unwrap();
            let lhs = x.dot(&f);
            assert_abs_diff_eq!(lhs, -x.norm_squared(), epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_builtin_evaluates_ax() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let model = BuiltinSystem::Linear(a.clone()).build();
        let x = v(&[0.5, -1.5]);
        assert_eq!(model.eval_field(0.0, &x, None).unwrap(), &a * &x);
        assert_eq!(model.eval_jacobian(0.0, &x, None).unwrap(), a);
    }

    #[test]
    fn scalar_iss_with_input() {
        let model = BuiltinSystem::ScalarIss { c: 2.0, ell: 1.0 }.build();
        let f = model.eval_field(0.0, &v(&[0.0]), Some(&v(&[1.0]))).unwrap();
        assert_eq!(f, v(&[1.0]));
        let b = model.eval_input_jacobian(0.0, &v(&[0.3]), None).unwrap();
        assert_eq!(b[(0, 0)], 1.0);
    }

    #[test]
    fn round_trip_through_print_source() {
        let model = parse_vector_field("-x1 + tanh(x2); -x2 + sin(t)", 2, 0).unwrap();
        let reparsed = parse_vector_field(&model.print_source(), 2, 0).unwrap();
        assert_eq!(model.components(), reparsed.components());
    }

    #[test]
    fn component_count_mismatch() {
        assert!(matches!(
            parse_vector_field("x1; x2; x1", 2, 0),
            Err(Error::ComponentCountMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn fd_agreement_on_builtins() {
        for model in [
            BuiltinSystem::Counterexample.build(),
            BuiltinSystem::ScalarIss { c: 2.0, ell: 1.0 }.build(),
            BuiltinSystem::Hopfield {
                a: v(&[2.0, 2.0, 2.0]),
                t: DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.0, -0.1, 0.1, 0.2, 0.0, 0.1, 0.1]),
                bias: v(&[0.1, -0.2, 0.0]),
            }
            .build(),
        ] {
            let err = model.jacobian_fd_error(100, 17).unwrap();
            assert!(err <= 1e-5, "{}: fd error {err}", model.name);
        }
    }

    #[test]
    fn shifted_and_scaled_jacobians() {
        let model = parse_vector_field("-x1 + x2^2; -x2", 2, 0).unwrap();
        let x = v(&[0.7, -0.4]);
        let j = model.eval_jacobian(0.0, &x, None).unwrap();
        let js = model.shifted(3.0).eval_jacobian(0.0, &x, None).unwrap();
        assert_eq!(js, &j + DMatrix::identity(2, 2) * 3.0);
        let ja = model.scaled(2.0).eval_jacobian(0.0, &x, None).unwrap();
        assert_eq!(ja, &j * 2.0);
    }
}
