//! Holomorphic expressions: constants, variables, field operations, integer powers and `exp`.
//!
//! There is no conjugation node, so every expression is holomorphic in its variables.
//! The same tree type also carries the sesqui-holomorphic kernel expressions, where the
//! variables `0..n` are the first-slot coordinates and `n..2n` stand for the conjugated
//! second-slot coordinates.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum HoloExpr {
    Const(Complex64),
    Var(usize),
    Neg(Box<HoloExpr>),
    Add(Box<HoloExpr>, Box<HoloExpr>),
    Sub(Box<HoloExpr>, Box<HoloExpr>),
    Mul(Box<HoloExpr>, Box<HoloExpr>),
    Div(Box<HoloExpr>, Box<HoloExpr>),
    Pow(Box<HoloExpr>, i32),
    Exp(Box<HoloExpr>),
}

use HoloExpr::*;

/// How variables are named when printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarNames {
    /// `z1..zn`
    Holo,
    /// `x1..xn` then `conj(y1)..conj(yn)`
    Sesqui { n: usize },
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[allow(clippy::should_implement_trait)]
impl HoloExpr {
    pub fn constant(z: Complex64) -> Self {
        Const(z)
    }

    pub fn var(j: usize) -> Self {
        Var(j)
    }

    pub fn as_const(&self) -> Option<Complex64> {
        match self {
            Const(z) => Some(*z),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Const(z) if *z == c(v))
    }

    // Smart constructors: fold constants and drop neutral elements.

    pub fn neg(a: HoloExpr) -> Self {
        match a {
            Const(z) => Const(-z),
            Neg(inner) => *inner,
            a => Neg(Box::new(a)),
        }
    }

    pub fn add(a: HoloExpr, b: HoloExpr) -> Self {
        match (a, b) {
            (Const(x), Const(y)) => Const(x + y),
            (a, b) if a.is_const(0.0) => b,
            (a, b) if b.is_const(0.0) => a,
            (a, b) => Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: HoloExpr, b: HoloExpr) -> Self {
        match (a, b) {
            (Const(x), Const(y)) => Const(x - y),
            (a, b) if b.is_const(0.0) => a,
            (a, b) if a.is_const(0.0) => Self::neg(b),
            (a, b) => Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: HoloExpr, b: HoloExpr) -> Self {
        match (a, b) {
            (Const(x), Const(y)) => Const(x * y),
            (a, b) if a.is_const(0.0) || b.is_const(0.0) => Const(c(0.0)),
            (a, b) if a.is_const(1.0) => b,
            (a, b) if b.is_const(1.0) => a,
            (a, b) => Mul(Box::new(a), Box::new(b)),
        }
    }

    /// Division; constant folding is skipped when the divisor is a zero constant so
    /// that the pole is reported at evaluation time.
    pub fn div(a: HoloExpr, b: HoloExpr) -> Self {
        match (a, b) {
            (Const(x), Const(y)) if y != c(0.0) => Const(x / y),
            (a, b) if b.is_const(1.0) => a,
            (a, b) if a.is_const(0.0) && !b.is_const(0.0) => Const(c(0.0)),
            (a, b) => Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: HoloExpr, k: i32) -> Self {
        match (a, k) {
            (_, 0) => Const(c(1.0)),
            (a, 1) => a,
            (Const(x), k) if k > 0 || x != c(0.0) => Const(x.powi(k)),
            (a, k) => Pow(Box::new(a), k),
        }
    }

    pub fn exp(a: HoloExpr) -> Self {
        match a {
            Const(x) => Const(x.exp()),
            a => Exp(Box::new(a)),
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Const(_) => None,
            Var(j) => Some(*j),
            Neg(a) | Pow(a, _) | Exp(a) => a.max_var(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn uses_var(&self, j: usize) -> bool {
        match self {
            Const(_) => false,
            Var(i) => *i == j,
            Neg(a) | Pow(a, _) | Exp(a) => a.uses_var(j),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.uses_var(j) || b.uses_var(j),
        }
    }

    /// Re-applies the folding constructors bottom-up.
    pub fn fold(&self) -> HoloExpr {
        match self {
            Const(z) => Const(*z),
            Var(j) => Var(*j),
            Neg(a) => Self::neg(a.fold()),
            Add(a, b) => Self::add(a.fold(), b.fold()),
            Sub(a, b) => Self::sub(a.fold(), b.fold()),
            Mul(a, b) => Self::mul(a.fold(), b.fold()),
            Div(a, b) => Self::div(a.fold(), b.fold()),
            Pow(a, k) => Self::pow(a.fold(), *k),
            Exp(a) => Self::exp(a.fold()),
        }
    }

    pub fn eval(&self, vars: &[Complex64]) -> Result<Complex64> {
        let v = match self {
            Const(z) => *z,
            Var(j) => *vars
                .get(*j)
                .ok_or(Error::DimensionMismatch { expected: j + 1, got: vars.len() })?,
            Neg(a) => -a.eval(vars)?,
            Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Div(a, b) => {
                let den = b.eval(vars)?;
                if den.norm() == 0.0 {
                    return Err(Error::Pole(self.to_string()));
                }
                a.eval(vars)? / den
            }
            Pow(a, k) => {
                let base = a.eval(vars)?;
                if *k < 0 && base.norm() == 0.0 {
                    return Err(Error::Pole(self.to_string()));
                }
                base.powi(*k)
            }
            Exp(a) => a.eval(vars)?.exp(),
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(self.to_string()))
        }
    }

    /// Symbolic complex derivative with respect to variable `j`.
    pub fn derivative(&self, j: usize) -> HoloExpr {
        match self {
            Const(_) => Const(c(0.0)),
            Var(i) => Const(c(if *i == j { 1.0 } else { 0.0 })),
            Neg(a) => Self::neg(a.derivative(j)),
            Add(a, b) => Self::add(a.derivative(j), b.derivative(j)),
            Sub(a, b) => Self::sub(a.derivative(j), b.derivative(j)),
            Mul(a, b) => Self::add(
                Self::mul(a.derivative(j), (**b).clone()),
                Self::mul((**a).clone(), b.derivative(j)),
            ),
            Div(a, b) => {
                // (a'b − ab') / b²
                let num = Self::sub(
                    Self::mul(a.derivative(j), (**b).clone()),
                    Self::mul((**a).clone(), b.derivative(j)),
                );
                Self::div(num, Self::pow((**b).clone(), 2))
            }
            Pow(a, k) => Self::mul(
                Self::mul(Const(c(*k as f64)), Self::pow((**a).clone(), k - 1)),
                a.derivative(j),
            ),
            Exp(a) => Self::mul(self.clone(), a.derivative(j)),
        }
    }

    /// Writes the expression so that parsing it back yields the same tree.
    pub fn display_with(&self, names: VarNames) -> String {
        let mut s = String::new();
        self.write(&mut s, names);
        s
    }

    fn write(&self, out: &mut String, names: VarNames) {
        match self {
            Const(z) => {
                let sign = if z.im.is_sign_negative() { '-' } else { '+' };
                out.push_str(&format!("({:?}{}{:?}i)", z.re, sign, z.im.abs()));
            }
            Var(j) => match names {
                VarNames::Holo => out.push_str(&format!("z{}", j + 1)),
                VarNames::Sesqui { n } if *j < n => out.push_str(&format!("x{}", j + 1)),
                VarNames::Sesqui { n } => out.push_str(&format!("conj(y{})", j - n + 1)),
            },
            Neg(a) => {
                out.push_str("(-");
                a.write(out, names);
                out.push(')');
            }
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                let op = match self {
                    Add(..) => " + ",
                    Sub(..) => " - ",
                    Mul(..) => " * ",
                    _ => " / ",
                };
                out.push('(');
                a.write(out, names);
                out.push_str(op);
                b.write(out, names);
                out.push(')');
            }
            Pow(a, k) => {
                out.push('(');
                a.write(out, names);
                out.push_str(&format!(")^{k}"));
            }
            Exp(a) => {
                out.push_str("exp(");
                a.write(out, names);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for HoloExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(VarNames::Holo))
    }
}

/// A holomorphic function together with its symbolic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloFn {
    expr: HoloExpr,
    grad: Vec<HoloExpr>,
}

impl HoloFn {
    pub fn new(expr: HoloExpr, n: usize) -> Result<Self> {
        if let Some(m) = expr.max_var() {
            if m >= n {
                return Err(Error::DimensionMismatch { expected: n, got: m + 1 });
            }
        }
        let grad = (0..n).map(|j| expr.derivative(j)).collect();
        Ok(Self { expr, grad })
    }

    pub fn expr(&self) -> &HoloExpr {
        &self.expr
    }

    pub fn value(&self, z: &[Complex64]) -> Result<Complex64> {
        self.expr.eval(z)
    }

    pub fn gradient(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.grad.iter().map(|g| g.eval(z)).collect()
    }
}

/// A holomorphic self-map of ℂⁿ given componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloMap {
    components: Vec<HoloFn>,
}

impl HoloMap {
    pub fn new(components: Vec<HoloExpr>, n: usize) -> Result<Self> {
        if components.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: components.len() });
        }
        let components = components.into_iter().map(|e| HoloFn::new(e, n)).collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn exprs(&self) -> impl Iterator<Item = &HoloExpr> {
        self.components.iter().map(|c| c.expr())
    }

    pub fn apply(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.components.iter().map(|c| c.value(z)).collect()
    }

    /// Row-major Jacobian, entry `(l, j)` = ∂Φ_l/∂z_j.
    pub fn jacobian(&self, z: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.components.iter().map(|c| c.gradient(z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        // f(z1, z2) = exp(z1 z2) / (2 + z1)^2 - 3 z2^3
        let f = HoloExpr::sub(
            HoloExpr::div(
                HoloExpr::exp(HoloExpr::mul(Var(0), Var(1))),
                HoloExpr::pow(HoloExpr::add(Const(c(2.0)), Var(0)), 2),
            ),
            HoloExpr::mul(Const(c(3.0)), HoloExpr::pow(Var(1), 3)),
        );
        let p = [z(0.3, -0.2), z(-0.1, 0.4)];
        let h = 1e-6;
        for j in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[j] += h;
            pm[j] -= h;
            let fd = (f.eval(&pp).unwrap() - f.eval(&pm).unwrap()) / (2.0 * h);
            let exact = f.derivative(j).eval(&p).unwrap();
            assert!((fd - exact).norm() < 1e-8, "{fd} vs {exact}");
        }
    }

    #[test]
    fn pole_is_reported() {
        let f = HoloExpr::div(Const(c(1.0)), Var(0));
        assert!(matches!(f.eval(&[z(0.0, 0.0)]), Err(Error::Pole(_))));
        let g = HoloExpr::pow(Var(0), -2);
        assert!(matches!(g.eval(&[z(0.0, 0.0)]), Err(Error::Pole(_))));
    }

    #[test]
    fn folding_removes_neutral_elements() {
        assert_eq!(HoloExpr::mul(Const(c(1.0)), Var(0)), Var(0));
        assert_eq!(HoloExpr::add(Var(0), Const(c(0.0))), Var(0));
        assert_eq!(HoloExpr::pow(Var(2), 0), Const(c(1.0)));
        assert_eq!(Var(0).derivative(1), Const(c(0.0)));
    }

    #[test]
    fn map_dimension_checked() {
        assert!(HoloMap::new(vec![Var(0)], 2).is_err());
        assert!(HoloMap::new(vec![Var(1)], 1).is_err());
        let m = HoloMap::new(vec![HoloExpr::mul(Var(0), Var(1)), Var(0)], 2).unwrap();
        let jac = m.jacobian(&[z(2.0, 0.0), z(3.0, 0.0)]).unwrap();
        assert_eq!(jac[0], vec![z(3.0, 0.0), z(2.0, 0.0)]);
        assert_eq!(jac[1], vec![z(1.0, 0.0), z(0.0, 0.0)]);
    }
}
