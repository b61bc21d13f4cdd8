//! Scalar expressions over state variables x1..xn, time t, and inputs
//! u1..uk: an infix parser, exact symbolic differentiation, and evaluation.
//!
//! Precedence, tightest first: `^` (integer exponent), unary minus, `*` `/`,
//! `+` `-`. The unicode minus sign is normalized to ASCII before lexing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// State coordinate, zero-based (prints as x1..xn).
    X(usize),
    T,
    /// Input coordinate, zero-based (prints as u1..uk).
    U(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Tanh(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
    /// Entrywise sign with sign(0) = 0; arises from differentiating `abs`.
    Sign(Box<Expr>),
}

/// Evaluation failure inside a single expression; the owning model attaches
/// the component index.
#[derive(Debug, Clone, Copy)]
pub struct DivByZero;

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (a, b) if a.is_zero() || b.is_zero() => {
                let _ = (a, b);
                Expr::Const(0.0)
            }
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return Expr::Const(0.0);
        }
        if b.is_one() {
            return a;
        }
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(e: Expr, k: i32) -> Expr {
        match k {
            0 => Expr::Const(1.0),
            1 => e,
            _ => Expr::Pow(Box::new(e), k),
        }
    }

    /// Numeric evaluation. `u` must cover every input index referenced.
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> std::result::Result<f64, DivByZero> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::T) => t,
            Expr::Var(Var::U(j)) => u[*j],
            Expr::Neg(e) => -e.eval(t, x, u)?,
            Expr::Add(a, b) => a.eval(t, x, u)? + b.eval(t, x, u)?,
            Expr::Sub(a, b) => a.eval(t, x, u)? - b.eval(t, x, u)?,
            Expr::Mul(a, b) => a.eval(t, x, u)? * b.eval(t, x, u)?,
            Expr::Div(a, b) => {
                let d = b.eval(t, x, u)?;
                if d == 0.0 {
                    return Err(DivByZero);
                }
                a.eval(t, x, u)? / d
            }
            Expr::Pow(e, k) => {
                let v = e.eval(t, x, u)?;
                if *k < 0 && v == 0.0 {
                    return Err(DivByZero);
                }
                v.powi(*k)
            }
            Expr::Tanh(e) => e.eval(t, x, u)?.tanh(),
            Expr::Sin(e) => e.eval(t, x, u)?.sin(),
            Expr::Cos(e) => e.eval(t, x, u)?.cos(),
            Expr::Exp(e) => e.eval(t, x, u)?.exp(),
            Expr::Abs(e) => e.eval(t, x, u)?.abs(),
            Expr::Sign(e) => {
                let v = e.eval(t, x, u)?;
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Exact symbolic derivative with respect to `var`. `abs` differentiates
    /// to `sign` with sign(0) = 0, and `sign` itself to zero (valid almost
    /// everywhere).
    pub fn derivative(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(e) => Expr::neg(e.derivative(var)),
            Expr::Add(a, b) => Expr::add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(var), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                let num = Expr::sub(
                    Expr::mul(a.derivative(var), (**b).clone()),
                    Expr::mul((**a).clone(), b.derivative(var)),
                );
                Expr::div(num, Expr::pow((**b).clone(), 2))
            }
            Expr::Pow(e, k) => Expr::mul(
                Expr::mul(Expr::Const(*k as f64), Expr::pow((**e).clone(), k - 1)),
                e.derivative(var),
            ),
            Expr::Tanh(e) => Expr::mul(
                Expr::sub(
                    Expr::Const(1.0),
                    Expr::pow(Expr::Tanh(e.clone()), 2),
                ),
                e.derivative(var),
            ),
            Expr::Sin(e) => Expr::mul(Expr::Cos(e.clone()), e.derivative(var)),
            Expr::Cos(e) => Expr::neg(Expr::mul(Expr::Sin(e.clone()), e.derivative(var))),
            Expr::Exp(e) => Expr::mul(Expr::Exp(e.clone()), e.derivative(var)),
            Expr::Abs(e) => Expr::mul(Expr::Sign(e.clone()), e.derivative(var)),
            Expr::Sign(_) => Expr::Const(0.0),
        }
    }

    pub fn references_time(&self) -> bool {
        self.any_node(&|e| matches!(e, Expr::Var(Var::T)))
    }

    pub fn contains_abs(&self) -> bool {
        self.any_node(&|e| matches!(e, Expr::Abs(_) | Expr::Sign(_)))
    }

    fn any_node(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(e)
            | Expr::Pow(e, _)
            | Expr::Tanh(e)
            | Expr::Sin(e)
            | Expr::Cos(e)
            | Expr::Exp(e)
            | Expr::Abs(e)
            | Expr::Sign(e) => e.any_node(pred),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.any_node(pred) || b.any_node(pred)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 0,
            Expr::Mul(..) | Expr::Div(..) => 1,
            Expr::Neg(_) => 2,
            Expr::Pow(..) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut std::fmt::Formatter<'_>, min_prec: u8) -> std::fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::U(j)) => write!(f, "u{}", j + 1),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_child(f, 2)
            }
            Expr::Add(a, b) => {
                a.fmt_child(f, 0)?;
                write!(f, " + ")?;
                b.fmt_child(f, 1)
            }
            Expr::Sub(a, b) => {
                a.fmt_child(f, 0)?;
                write!(f, " - ")?;
                b.fmt_child(f, 1)
            }
            Expr::Mul(a, b) => {
                a.fmt_child(f, 1)?;
                write!(f, "*")?;
                b.fmt_child(f, 2)
            }
            Expr::Div(a, b) => {
                a.fmt_child(f, 1)?;
                write!(f, "/")?;
                b.fmt_child(f, 2)
            }
            Expr::Pow(e, k) => {
                e.fmt_child(f, 4)?;
                write!(f, "^{k}")
            }
            Expr::Tanh(e) => write!(f, "tanh({e})"),
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Sign(e) => write!(f, "sign({e})"),
        }
    }
}

/// Dimensions an expression is allowed to reference.
#[derive(Debug, Clone, Copy)]
pub struct VarContext {
    pub state_dim: usize,
    pub input_dim: usize,
}

pub fn parse_expr(source: &str, ctx: VarContext) -> Result<Expr> {
    let normalized: String = source
        .chars()
        .map(|c| if c == '\u{2212}' { '-' } else { c })
        .collect();
    let mut parser = Parser {
        src: normalized.as_bytes(),
        pos: 0,
        ctx,
    };
    parser.skip_ws();
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    ctx: VarContext,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let negative = self.eat(b'-');
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == start {
                return Err(self.error("expected integer exponent after '^'"));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let mut k: i32 = digits
                .parse()
                .map_err(|_| self.error("exponent out of range"))?;
            if negative {
                k = -k;
            }
            self.skip_ws();
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character '{}'", c as char))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let digit_start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digit_start {
                // Not an exponent after all (e.g. `2*exp(t)` tokenizes fine).
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(&format!("invalid number literal `{text}`")))?;
        self.skip_ws();
        Ok(Expr::Const(value))
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && ((self.src[self.pos] as char).is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();
        match name.as_str() {
            "t" => return Ok(Expr::Var(Var::T)),
            "tanh" | "sin" | "cos" | "exp" | "abs" | "sign" => {
                if !self.eat(b'(') {
                    return Err(self.error(&format!("expected '(' after function `{name}`")));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                let boxed = Box::new(arg);
                return Ok(match name.as_str() {
                    "tanh" => Expr::Tanh(boxed),
                    "sin" => Expr::Sin(boxed),
                    "cos" => Expr::Cos(boxed),
                    "exp" => Expr::Exp(boxed),
                    "abs" => Expr::Abs(boxed),
                    _ => Expr::Sign(boxed),
                });
            }
            _ => {}
        }
        let (prefix, digits) = name.split_at(1);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            let idx: usize = digits.parse().map_err(|_| {
                self.error(&format!("invalid variable index in `{name}`"))
            })?;
            if idx == 0 {
                return Err(self.error(&format!("variable indices are 1-based: `{name}`")));
            }
            match prefix {
                "x" => {
                    if idx > self.ctx.state_dim {
                        return Err(self.error(&format!(
                            "state index {idx} out of range (n = {})",
                            self.ctx.state_dim
                        )));
                    }
                    return Ok(Expr::Var(Var::X(idx - 1)));
                }
                "u" => {
                    if idx > self.ctx.input_dim {
                        return Err(self.error(&format!(
                            "input index {idx} out of range (k = {})",
                            self.ctx.input_dim
                        )));
                    }
                    return Ok(Expr::Var(Var::U(idx - 1)));
                }
                _ => {}
            }
        }
        Err(self.error(&format!("unknown identifier `{name}`")))
    }
}
