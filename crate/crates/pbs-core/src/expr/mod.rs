//! Expression trees over named variables with exact symbolic differentiation.
//!
//! `Expr` is the lingua franca of the crate: PDE right-hand sides, seed
//! solutions, symmetries, invariant functions and everything derived from them
//! are all expression trees. Simplification is deliberately limited to
//! constant folding, identity elimination and structural cancellation —
//! correctness comes from evaluation, not canonical form, because hierarchy
//! expressions grow and must still evaluate.

mod jet;
mod parse;

pub use jet::{
    compose_with_table, derivative_table, total_derivative, JetConvention, JetError,
    DEFAULT_MAX_ORDER,
};
pub use parse::{parse, ParseError};

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Unary operations supported by the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Arcsin,
    Abs,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Arcsin => "arcsin",
            UnaryOp::Abs => "abs",
        }
    }
}

/// Binary operations. Exponentiation is kept separate (`Expr::Pow`) because
/// its exponent is restricted to a real constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Immutable expression tree. Structural equality is decidable via `PartialEq`;
/// evaluation at identical bindings is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Power with a real constant exponent.
    Pow(Box<Expr>, f64),
}

/// Map from variable name to value; every free variable of an expression must
/// be bound before evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    map: BTreeMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        let mut b = Self::new();
        for (name, value) in pairs {
            b.set(name, *value);
        }
        b
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.map.insert(name.to_owned(), value);
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.map.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Merge `other` into `self`, overwriting collisions.
    pub fn extend(&mut self, other: &Bindings) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }
}

/// Evaluation failure. Domain violations carry the printed offending
/// subexpression.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },
    #[error("domain violation ({reason}) in `{subexpr}`")]
    Domain { reason: DomainReason, subexpr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainReason {
    #[error("sqrt of negative value")]
    SqrtNegative,
    #[error("ln of non-positive value")]
    LnNonPositive,
    #[error("arcsin argument outside [-1, 1]")]
    ArcsinRange,
    #[error("negative base with non-integer exponent")]
    NegativeBaseFractionalExponent,
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

impl Expr {
    pub fn cst(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_owned())
    }

    pub fn pow(self, exponent: f64) -> Self {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn sqrt(self) -> Self {
        Expr::Unary(UnaryOp::Sqrt, Box::new(self))
    }

    pub fn exp(self) -> Self {
        Expr::Unary(UnaryOp::Exp, Box::new(self))
    }

    pub fn ln(self) -> Self {
        Expr::Unary(UnaryOp::Ln, Box::new(self))
    }

    pub fn sin(self) -> Self {
        Expr::Unary(UnaryOp::Sin, Box::new(self))
    }

    pub fn cos(self) -> Self {
        Expr::Unary(UnaryOp::Cos, Box::new(self))
    }

    pub fn arcsin(self) -> Self {
        Expr::Unary(UnaryOp::Arcsin, Box::new(self))
    }

    pub fn abs(self) -> Self {
        Expr::Unary(UnaryOp::Abs, Box::new(self))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Free variable names, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_variables(out),
            Expr::Binary(_, a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
            Expr::Pow(a, _) => a.collect_variables(out),
        }
    }

    /// Simultaneous substitution of variables by expressions.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.substitute(map))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
            Expr::Pow(a, e) => Expr::Pow(Box::new(a.substitute(map)), *e),
        }
    }

    /// Substitute a single variable.
    pub fn substitute_var(&self, name: &str, replacement: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(name.to_owned(), replacement.clone());
        self.substitute(&map)
    }

    /// Evaluate at the given bindings, in IEEE double precision.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => bindings
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable { name: name.clone() })?,
            Expr::Unary(op, a) => {
                let v = a.evaluate(bindings)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(self.domain(DomainReason::SqrtNegative));
                        }
                        libm::sqrt(v)
                    }
                    UnaryOp::Exp => libm::exp(v),
                    UnaryOp::Ln => {
                        if v <= 0.0 {
                            return Err(self.domain(DomainReason::LnNonPositive));
                        }
                        libm::log(v)
                    }
                    UnaryOp::Sin => libm::sin(v),
                    UnaryOp::Cos => libm::cos(v),
                    UnaryOp::Arcsin => {
                        if !(-1.0..=1.0).contains(&v) {
                            return Err(self.domain(DomainReason::ArcsinRange));
                        }
                        libm::asin(v)
                    }
                    UnaryOp::Abs => libm::fabs(v),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.evaluate(bindings)?;
                let y = b.evaluate(bindings)?;
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain(DomainReason::DivisionByZero));
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(a, e) => {
                let base = a.evaluate(bindings)?;
                if base < 0.0 && !is_integral(*e) {
                    return Err(self.domain(DomainReason::NegativeBaseFractionalExponent));
                }
                libm::pow(base, *e)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain(DomainReason::NonFinite))
        }
    }

    fn domain(&self, reason: DomainReason) -> EvalError {
        EvalError::Domain { reason, subexpr: self.to_string() }
    }

    /// Evaluate together with a running bound on the accumulated rounding
    /// error (standard model, first order). The bound is what residual checks
    /// use as their noise floor: a composed expression that is identically
    /// zero evaluates to rounding noise, and only the bound can tell that
    /// apart from a genuinely nonzero residual.
    pub fn evaluate_with_error(&self, bindings: &Bindings) -> Result<(f64, f64), EvalError> {
        const U: f64 = f64::EPSILON * 0.5;
        let (value, err) = match self {
            Expr::Const(c) => (*c, 0.0),
            Expr::Var(name) => (
                bindings
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundVariable { name: name.clone() })?,
                0.0,
            ),
            Expr::Unary(op, a) => {
                let (v, e) = a.evaluate_with_error(bindings)?;
                match op {
                    UnaryOp::Neg => (-v, e),
                    UnaryOp::Abs => (libm::fabs(v), e),
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(self.domain(DomainReason::SqrtNegative));
                        }
                        let r = libm::sqrt(v);
                        (r, if r > 0.0 { e / (2.0 * r) + U * r } else { libm::sqrt(e) })
                    }
                    UnaryOp::Exp => {
                        let r = libm::exp(v);
                        (r, r * e + U * r)
                    }
                    UnaryOp::Ln => {
                        if v <= 0.0 {
                            return Err(self.domain(DomainReason::LnNonPositive));
                        }
                        (libm::log(v), e / v + U)
                    }
                    UnaryOp::Sin => (libm::sin(v), e + U),
                    UnaryOp::Cos => (libm::cos(v), e + U),
                    UnaryOp::Arcsin => {
                        if !(-1.0..=1.0).contains(&v) {
                            return Err(self.domain(DomainReason::ArcsinRange));
                        }
                        let denom = libm::sqrt((1.0 - v * v).max(f64::MIN_POSITIVE));
                        (libm::asin(v), e / denom + U)
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let (x, ex) = a.evaluate_with_error(bindings)?;
                let (y, ey) = b.evaluate_with_error(bindings)?;
                match op {
                    BinaryOp::Add => {
                        let r = x + y;
                        (r, ex + ey + U * libm::fabs(r))
                    }
                    BinaryOp::Sub => {
                        let r = x - y;
                        (r, ex + ey + U * libm::fabs(r))
                    }
                    BinaryOp::Mul => {
                        let r = x * y;
                        (r, libm::fabs(y) * ex + libm::fabs(x) * ey + U * libm::fabs(r))
                    }
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain(DomainReason::DivisionByZero));
                        }
                        let r = x / y;
                        (r, (ex + libm::fabs(r) * ey) / libm::fabs(y) + U * libm::fabs(r))
                    }
                }
            }
            Expr::Pow(a, k) => {
                let (v, e) = a.evaluate_with_error(bindings)?;
                if v < 0.0 && !is_integral(*k) {
                    return Err(self.domain(DomainReason::NegativeBaseFractionalExponent));
                }
                let r = libm::pow(v, *k);
                let sensitivity = if v != 0.0 {
                    libm::fabs(k * r / v)
                } else {
                    0.0
                };
                (r, sensitivity * e + 2.0 * U * libm::fabs(r))
            }
        };
        if value.is_finite() {
            Ok((value, err))
        } else {
            Err(self.domain(DomainReason::NonFinite))
        }
    }

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Expr {
        simplify(&self.diff_raw(var))
    }

    fn diff_raw(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::cst(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::cst(1.0)
                } else {
                    Expr::cst(0.0)
                }
            }
            Expr::Unary(op, a) => {
                let da = a.diff_raw(var);
                let a = a.as_ref().clone();
                match op {
                    UnaryOp::Neg => -da,
                    UnaryOp::Sqrt => da / (Expr::cst(2.0) * a.sqrt()),
                    UnaryOp::Exp => da * a.exp(),
                    UnaryOp::Ln => da / a,
                    UnaryOp::Sin => da * a.cos(),
                    UnaryOp::Cos => -(da * a.sin()),
                    UnaryOp::Arcsin => da / (Expr::cst(1.0) - a.pow(2.0)).sqrt(),
                    // d|f| = f·f'/|f|; undefined at f = 0, which evaluation reports.
                    UnaryOp::Abs => a.clone() * da / a.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff_raw(var);
                let db = b.diff_raw(var);
                let a = a.as_ref().clone();
                let b = b.as_ref().clone();
                match op {
                    BinaryOp::Add => da + db,
                    BinaryOp::Sub => da - db,
                    BinaryOp::Mul => da * b + a * db,
                    BinaryOp::Div => (da * b.clone() - a * db) / b.pow(2.0),
                }
            }
            Expr::Pow(a, e) => {
                let da = a.diff_raw(var);
                Expr::cst(*e) * a.as_ref().clone().pow(e - 1.0) * da
            }
        }
    }

    /// Split the expression into its top-level additive terms, with signs
    /// folded in. Used for scale normalization of residuals.
    pub fn additive_terms(&self) -> Vec<Expr> {
        let mut terms = Vec::new();
        self.collect_terms(false, &mut terms);
        terms
    }

    fn collect_terms(&self, negate: bool, out: &mut Vec<Expr>) {
        match self {
            Expr::Binary(BinaryOp::Add, a, b) => {
                a.collect_terms(negate, out);
                b.collect_terms(negate, out);
            }
            Expr::Binary(BinaryOp::Sub, a, b) => {
                a.collect_terms(negate, out);
                b.collect_terms(!negate, out);
            }
            Expr::Unary(UnaryOp::Neg, a) => a.collect_terms(!negate, out),
            _ => out.push(if negate { -self.clone() } else { self.clone() }),
        }
    }
}

fn is_integral(e: f64) -> bool {
    e == libm::trunc(e) && libm::fabs(e) < 9.0e15
}

/// Constant folding, identity elimination (0+e, 1·e, e^1, …) and structural
/// cancellation (e−e → 0, e/e → 1). No canonicalization beyond that.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, a) => {
            let a = simplify(a);
            if let Some(c) = a.as_const() {
                if let Some(folded) = fold_unary(*op, c) {
                    return Expr::cst(folded);
                }
            }
            match (op, &a) {
                (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, inner)) => inner.as_ref().clone(),
                _ => Expr::Unary(*op, Box::new(a)),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
                if let Some(folded) = fold_binary(*op, x, y) {
                    return Expr::cst(folded);
                }
            }
            match op {
                BinaryOp::Add => {
                    if a.is_zero() {
                        b
                    } else if b.is_zero() {
                        a
                    } else {
                        Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
                    }
                }
                BinaryOp::Sub => {
                    if b.is_zero() {
                        a
                    } else if a.is_zero() {
                        simplify(&-b)
                    } else if a == b {
                        Expr::cst(0.0)
                    } else {
                        Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
                    }
                }
                BinaryOp::Mul => {
                    if a.is_zero() || b.is_zero() {
                        Expr::cst(0.0)
                    } else if a.is_one() {
                        b
                    } else if b.is_one() {
                        a
                    } else {
                        Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
                    }
                }
                BinaryOp::Div => {
                    if a.is_zero() {
                        Expr::cst(0.0)
                    } else if b.is_one() {
                        a
                    } else if a == b {
                        Expr::cst(1.0)
                    } else {
                        Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b))
                    }
                }
            }
        }
        Expr::Pow(a, e) => {
            let a = simplify(a);
            if *e == 1.0 {
                return a;
            }
            if *e == 0.0 {
                return Expr::cst(1.0);
            }
            if let Some(c) = a.as_const() {
                if !(c < 0.0 && !is_integral(*e)) {
                    let v = libm::pow(c, *e);
                    if v.is_finite() {
                        return Expr::cst(v);
                    }
                }
            }
            Expr::Pow(Box::new(a), *e)
        }
    }
}

fn fold_unary(op: UnaryOp, c: f64) -> Option<f64> {
    let v = match op {
        UnaryOp::Neg => -c,
        UnaryOp::Sqrt => {
            if c < 0.0 {
                return None;
            }
            libm::sqrt(c)
        }
        UnaryOp::Exp => libm::exp(c),
        UnaryOp::Ln => {
            if c <= 0.0 {
                return None;
            }
            libm::log(c)
        }
        UnaryOp::Sin => libm::sin(c),
        UnaryOp::Cos => libm::cos(c),
        UnaryOp::Arcsin => {
            if !(-1.0..=1.0).contains(&c) {
                return None;
            }
            libm::asin(c)
        }
        UnaryOp::Abs => libm::fabs(c),
    };
    v.is_finite().then_some(v)
}

fn fold_binary(op: BinaryOp, x: f64, y: f64) -> Option<f64> {
    let v = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return None;
            }
            x / y
        }
    };
    v.is_finite().then_some(v)
}

impl core::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Add, Box::new(self), Box::new(rhs))
    }
}

impl core::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Sub, Box::new(self), Box::new(rhs))
    }
}

impl core::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Mul, Box::new(self), Box::new(rhs))
    }
}

impl core::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Div, Box::new(self), Box::new(rhs))
    }
}

impl core::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(self))
    }
}

// Printing with minimal parentheses; precedence: +,- (1) < *,/ (2) < unary- (3) < ^ (4).
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if *c < 0.0 => 1,
        Expr::Const(_) | Expr::Var(_) => 5,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        Expr::Unary(_, _) => 5,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        Expr::Pow(_, _) => 4,
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                fmt_child(a, 3, f)
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Add => {
                    fmt_child(a, 1, f)?;
                    write!(f, " + ")?;
                    fmt_child(b, 2, f)
                }
                BinaryOp::Sub => {
                    fmt_child(a, 1, f)?;
                    write!(f, " - ")?;
                    fmt_child(b, 2, f)
                }
                BinaryOp::Mul => {
                    fmt_child(a, 2, f)?;
                    write!(f, "*")?;
                    fmt_child(b, 3, f)
                }
                BinaryOp::Div => {
                    fmt_child(a, 2, f)?;
                    write!(f, "/")?;
                    fmt_child(b, 3, f)
                }
            },
            Expr::Pow(a, e) => {
                fmt_child(a, 5, f)?;
                if *e < 0.0 || !is_integral(*e) {
                    write!(f, "^({e})")
                } else {
                    write!(f, "^{e}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, f64)]) -> Bindings {
        Bindings::from_pairs(pairs)
    }

    #[test]
    fn evaluate_paper_seed_expression() {
        let e = parse("x/sqrt(-2*t)").unwrap();
        let v = e.evaluate(&b(&[("t", -0.5), ("x", 2.0)])).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn evaluate_closed_form_pbs() {
        let e = parse("sqrt(-2 - x^2/(2*t))").unwrap();
        let v = e.evaluate(&b(&[("t", -0.1), ("x", 1.0)])).unwrap();
        assert!((v - 3.0f64.sqrt()).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn evaluate_domain_errors() {
        let e = parse("sqrt(x)").unwrap();
        match e.evaluate(&b(&[("x", -1.0)])) {
            Err(EvalError::Domain { reason: DomainReason::SqrtNegative, .. }) => {}
            other => panic!("expected sqrt domain error, got {other:?}"),
        }
        let e = parse("1/x").unwrap();
        assert!(matches!(
            e.evaluate(&b(&[("x", 0.0)])),
            Err(EvalError::Domain { reason: DomainReason::DivisionByZero, .. })
        ));
        let e = parse("x^0.5").unwrap();
        assert!(matches!(
            e.evaluate(&b(&[("x", -2.0)])),
            Err(EvalError::Domain { reason: DomainReason::NegativeBaseFractionalExponent, .. })
        ));
        let e = parse("u").unwrap();
        assert!(matches!(
            e.evaluate(&Bindings::new()),
            Err(EvalError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn integer_power_of_negative_base() {
        let e = parse("x^3").unwrap();
        assert_eq!(e.evaluate(&b(&[("x", -2.0)])).unwrap(), -8.0);
    }

    #[test]
    fn differentiate_basics() {
        let e = parse("u*u_x^2").unwrap();
        let d = e.differentiate("u");
        let point = b(&[("u", 3.0), ("u_x", 2.0)]);
        assert_eq!(d.evaluate(&point).unwrap(), 4.0);

        let e = parse("u*u_x").unwrap();
        let d = e.differentiate("u_x");
        assert_eq!(d, Expr::var("u"));
    }

    #[test]
    fn differentiate_seed_time_derivative() {
        // d/dt of x/sqrt(-2t) equals x*(-2t)^(-3/2)
        let e = parse("x/sqrt(-2*t)").unwrap();
        let d = e.differentiate("t");
        let reference = parse("x*(-2*t)^(-1.5)").unwrap();
        for &(t, x) in &[(-0.5, 1.0), (-0.1, 2.0), (-2.0, -1.5)] {
            let p = b(&[("t", t), ("x", x)]);
            let got = d.evaluate(&p).unwrap();
            let want = reference.evaluate(&p).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn simplify_identities() {
        let zero = Expr::cst(0.0);
        let x = Expr::var("x");
        assert_eq!(simplify(&(zero.clone() + x.clone())), x);
        assert_eq!(simplify(&(Expr::cst(1.0) * x.clone())), x);
        assert_eq!(simplify(&x.clone().pow(1.0)), x);
        assert_eq!(simplify(&(x.clone() - x.clone())), Expr::cst(0.0));
        assert_eq!(simplify(&(x.clone() / x.clone())), Expr::cst(1.0));
        assert_eq!(simplify(&parse("2^3").unwrap()), Expr::cst(8.0));
    }

    #[test]
    fn substitute_composes() {
        let e = parse("u_x/u_t").unwrap();
        let mut map = BTreeMap::new();
        map.insert("u_x".to_owned(), parse("1/sqrt(-2*t)").unwrap());
        map.insert("u_t".to_owned(), parse("x*(-2*t)^(-1.5)").unwrap());
        let composed = e.substitute(&map);
        let v = composed.evaluate(&b(&[("t", -0.5), ("x", 2.0)])).unwrap();
        // U_x/U_t = -2t/x = 1/2
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn additive_terms_split_signs() {
        let e = parse("a - b + c - -d").unwrap();
        let terms = e.additive_terms();
        assert_eq!(terms.len(), 4);
        let p = b(&[("a", 1.0), ("b", 10.0), ("c", 100.0), ("d", 1000.0)]);
        let vals: Vec<f64> = terms.iter().map(|t| t.evaluate(&p).unwrap()).collect();
        assert_eq!(vals, [1.0, -10.0, 100.0, 1000.0]);
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "u*u_x^2",
            "x/sqrt(-2*t)",
            "sqrt(-2 - x^2/(2*t))",
            "-(a + b)*c",
            "x^(-1.5)",
            "2*t + u_x^(-2)",
            "sin(eta) - eta*cos(eta)",
        ] {
            let e = parse(src).unwrap();
            let printed = format!("{e}");
            let again = parse(&printed).unwrap_or_else(|err| panic!("reparse `{printed}`: {err}"));
            assert_eq!(e, again, "round trip of `{src}` via `{printed}`");
        }
    }
}
