//! Exact functions of the two equilibrium multipliers (μ, λ).
//!
//! A [`ScalarFn`] is a finite sum `Σ c · μ^a · λ^b · (ln λ)^d` with rational `c`,
//! `a ≥ 0`, integer `b` and `d ≥ 0`. The set is closed under addition,
//! multiplication, ∂μ, ∂λ, ∫dμ and ∫dλ, which is all the closure generator needs.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::rational::{fmt_rat, int, pow_i, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("division by zero: negative power of lambda evaluated at lambda = 0")]
    DivisionByZero,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("cannot read scalar function: {0}")]
    Parse(String),
}

impl From<ExprError> for ScalarError {
    fn from(e: ExprError) -> Self {
        ScalarError::Parse(e.to_string())
    }
}

/// Exponent triple of one term: μ^mu · λ^lam · (ln λ)^log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exp {
    pub mu: u32,
    pub lam: i32,
    pub log: u32,
}

impl Exp {
    pub const fn new(mu: u32, lam: i32, log: u32) -> Self {
        Exp { mu, lam, log }
    }
}

/// Which of the two scalar variables an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SVar {
    Mu,
    Lam,
}

/// Result of [`ScalarFn::eval`]: exact whenever no logarithm survives.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Rational),
    Float(f64),
}

impl Value {
    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Exact(x) => to_f64(x),
            Value::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(x) => Some(x),
            Value::Float(_) => None,
        }
    }
}

/// Canonical sparse sum of terms; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ScalarFn {
    terms: BTreeMap<Exp, Rational>,
}

impl ScalarFn {
    pub fn zero() -> Self {
        ScalarFn::default()
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        Self::term(c, 0, 0, 0)
    }

    /// Single term `c · μ^a · λ^b · (ln λ)^d`.
    pub fn term(c: Rational, a: u32, b: i32, d: u32) -> Self {
        let mut f = ScalarFn::zero();
        f.add_term(Exp::new(a, b, d), c);
        f
    }

    pub fn mu() -> Self {
        Self::term(Rational::one(), 1, 0, 0)
    }

    pub fn lam() -> Self {
        Self::term(Rational::one(), 0, 1, 0)
    }

    pub fn lam_pow(b: i32) -> Self {
        Self::term(Rational::one(), 0, b, 0)
    }

    pub fn ln_lam() -> Self {
        Self::term(Rational::one(), 0, 0, 1)
    }

    /// `(-1/(2λ))^k`, the recurring weight of the particular solution.
    pub fn minus_half_inv_lam_pow(k: u32) -> Self {
        let c = pow_i(&Rational::new((-1).into(), 2.into()), k as i32).unwrap();
        Self::term(c, 0, -(k as i32), 0)
    }

    fn add_term(&mut self, e: Exp, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exp, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: Exp) -> Rational {
        self.terms.get(&e).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn has_log(&self) -> bool {
        self.terms.keys().any(|e| e.log > 0)
    }

    /// Highest μ exponent, `None` for the zero function.
    pub fn mu_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.mu).max()
    }

    pub fn is_mu_free(&self) -> bool {
        self.terms.keys().all(|e| e.mu == 0)
    }

    /// Returns the rational value if the function is a constant.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                (*e == Exp::new(0, 0, 0)).then(|| c.clone())
            }
            _ => None,
        }
    }

    /// The λ-function multiplying μ^k.
    pub fn mu_coefficient(&self, k: u32) -> ScalarFn {
        let mut out = ScalarFn::zero();
        for (e, c) in &self.terms {
            if e.mu == k {
                out.add_term(Exp::new(0, e.lam, e.log), c.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> ScalarFn {
        if c.is_zero() {
            return ScalarFn::zero();
        }
        ScalarFn {
            terms: self.terms.iter().map(|(e, x)| (*e, x * c)).collect(),
        }
    }

    /// Multiplies by `μ^a λ^b`.
    pub fn shift(&self, a: u32, b: i32) -> ScalarFn {
        ScalarFn {
            terms: self
                .terms
                .iter()
                .map(|(e, x)| (Exp::new(e.mu + a, e.lam + b, e.log), x.clone()))
                .collect(),
        }
    }

    pub fn add(&self, g: &ScalarFn) -> ScalarFn {
        let mut out = self.clone();
        for (e, c) in &g.terms {
            out.add_term(*e, c.clone());
        }
        out
    }

    pub fn sub(&self, g: &ScalarFn) -> ScalarFn {
        let mut out = self.clone();
        for (e, c) in &g.terms {
            out.add_term(*e, -c.clone());
        }
        out
    }

    pub fn mul(&self, g: &ScalarFn) -> ScalarFn {
        let mut out = ScalarFn::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &g.terms {
                out.add_term(
                    Exp::new(e1.mu + e2.mu, e1.lam + e2.lam, e1.log + e2.log),
                    c1 * c2,
                );
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> ScalarFn {
        let mut acc = ScalarFn::one();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact partial derivative.
    pub fn diff(&self, v: SVar) -> ScalarFn {
        let mut out = ScalarFn::zero();
        for (e, c) in &self.terms {
            match v {
                SVar::Mu => {
                    if e.mu > 0 {
                        out.add_term(Exp::new(e.mu - 1, e.lam, e.log), c * int(e.mu as i64));
                    }
                }
                SVar::Lam => {
                    if e.lam != 0 {
                        out.add_term(Exp::new(e.mu, e.lam - 1, e.log), c * int(e.lam as i64));
                    }
                    if e.log > 0 {
                        out.add_term(Exp::new(e.mu, e.lam - 1, e.log - 1), c * int(e.log as i64));
                    }
                }
            }
        }
        out
    }

    pub fn diff_n(&self, v: SVar, n: u32) -> ScalarFn {
        let mut f = self.clone();
        for _ in 0..n {
            if f.is_zero() {
                break;
            }
            f = f.diff(v);
        }
        f
    }

    /// Antiderivative with zero integration constant.
    pub fn integrate(&self, v: SVar) -> ScalarFn {
        let mut out = ScalarFn::zero();
        for (e, c) in &self.terms {
            match v {
                SVar::Mu => {
                    let k = e.mu + 1;
                    out.add_term(Exp::new(k, e.lam, e.log), c / int(k as i64));
                }
                SVar::Lam => integrate_lam_term(&mut out, e.mu, e.lam, e.log, c.clone()),
            }
        }
        out
    }

    /// Evaluates at (μ₀, λ₀). Exact unless a logarithm term is present and λ₀ ≠ 1.
    pub fn eval(&self, mu: &Rational, lam: &Rational) -> Result<Value, ScalarError> {
        let has_log = self.has_log();
        if has_log && !lam.is_positive() {
            return Err(ScalarError::DomainError(format!(
                "ln(lambda) needs lambda > 0, got {}",
                fmt_rat(lam)
            )));
        }
        if lam.is_zero() && self.terms.keys().any(|e| e.lam < 0) {
            return Err(ScalarError::DivisionByZero);
        }
        if !has_log || lam.is_one() {
            let mut acc = Rational::zero();
            for (e, c) in &self.terms {
                if e.log > 0 {
                    // ln 1 = 0
                    continue;
                }
                let m = pow_i(mu, e.mu as i32).unwrap();
                let l = pow_i(lam, e.lam).ok_or(ScalarError::DivisionByZero)?;
                acc += c * m * l;
            }
            return Ok(Value::Exact(acc));
        }
        let (m, l) = (to_f64(mu), to_f64(lam));
        let ln = l.ln();
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            acc += to_f64(c) * m.powi(e.mu as i32) * l.powi(e.lam) * ln.powi(e.log as i32);
        }
        Ok(Value::Float(acc))
    }

    /// Float evaluation at any point of the domain.
    pub fn eval_f64(&self, mu: f64, lam: f64) -> f64 {
        let ln = lam.ln();
        self.terms
            .iter()
            .map(|(e, c)| {
                let lg = if e.log == 0 { 1.0 } else { ln.powi(e.log as i32) };
                to_f64(c) * mu.powi(e.mu as i32) * lam.powi(e.lam) * lg
            })
            .sum()
    }

    /// Converts a parsed expression in `mu`, `lam` and `log`/`ln(lam)`.
    pub fn from_expr(e: &Expr) -> Result<ScalarFn, ScalarError> {
        Ok(match e {
            Expr::Num(x) => ScalarFn::constant(x.clone()),
            Expr::Var(v) => match v.as_str() {
                "mu" => ScalarFn::mu(),
                "lam" | "lambda" => ScalarFn::lam(),
                "log" | "ln" | "L" => ScalarFn::ln_lam(),
                other => return Err(ScalarError::Parse(format!("unknown variable `{other}`"))),
            },
            Expr::Neg(a) => -ScalarFn::from_expr(a)?,
            Expr::Add(a, b) => ScalarFn::from_expr(a)?.add(&ScalarFn::from_expr(b)?),
            Expr::Sub(a, b) => ScalarFn::from_expr(a)?.sub(&ScalarFn::from_expr(b)?),
            Expr::Mul(a, b) => ScalarFn::from_expr(a)?.mul(&ScalarFn::from_expr(b)?),
            Expr::Div(a, b) => {
                let num = ScalarFn::from_expr(a)?;
                let den = ScalarFn::from_expr(b)?;
                num.mul(&den.monomial_inverse().ok_or_else(|| {
                    ScalarError::Parse(format!("cannot divide by `{den}`"))
                })?)
            }
            Expr::Pow(a, k) => {
                let base = ScalarFn::from_expr(a)?;
                if *k >= 0 {
                    base.pow(*k as u32)
                } else {
                    base.monomial_inverse()
                        .ok_or_else(|| ScalarError::Parse(format!("cannot invert `{base}`")))?
                        .pow(k.unsigned_abs())
                }
            }
            Expr::Call(name, arg) => {
                let arg = ScalarFn::from_expr(arg)?;
                if (name == "log" || name == "ln") && arg == ScalarFn::lam() {
                    ScalarFn::ln_lam()
                } else {
                    return Err(ScalarError::Parse(format!(
                        "only ln(lam) is supported, got {name}({arg})"
                    )));
                }
            }
        })
    }

    /// Inverse of a single μ-free, log-free term `c λ^b`.
    fn monomial_inverse(&self) -> Option<ScalarFn> {
        if self.terms.len() != 1 {
            return None;
        }
        let (e, c) = self.terms.iter().next().unwrap();
        (e.mu == 0 && e.log == 0).then(|| ScalarFn::term(c.recip(), 0, -e.lam, 0))
    }
}

// ∫ μ^a λ^b L^d dλ with L = ln λ.
fn integrate_lam_term(out: &mut ScalarFn, a: u32, b: i32, d: u32, c: Rational) {
    if b == -1 {
        out.add_term(Exp::new(a, 0, d + 1), c / int(d as i64 + 1));
        return;
    }
    // λ^{b+1} L^d/(b+1) − d/(b+1) ∫ λ^b L^{d−1}
    let k = int(b as i64 + 1);
    out.add_term(Exp::new(a, b + 1, d), &c / &k);
    if d > 0 {
        integrate_lam_term(out, a, b, d - 1, -(c * int(d as i64)) / k);
    }
}

pub fn sf_combine(f: &ScalarFn, g: &ScalarFn, op: CombineOp) -> ScalarFn {
    match op {
        CombineOp::Add => f.add(g),
        CombineOp::Mul => f.mul(g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineOp {
    Add,
    Mul,
}

pub fn sf_diff(f: &ScalarFn, v: SVar) -> ScalarFn {
    f.diff(v)
}

pub fn sf_integrate(f: &ScalarFn, v: SVar) -> ScalarFn {
    f.integrate(v)
}

pub fn sf_eval(f: &ScalarFn, mu: &Rational, lam: &Rational) -> Result<Value, ScalarError> {
    f.eval(mu, lam)
}

impl Add for &ScalarFn {
    type Output = ScalarFn;
    fn add(self, rhs: &ScalarFn) -> ScalarFn {
        ScalarFn::add(self, rhs)
    }
}

impl Sub for &ScalarFn {
    type Output = ScalarFn;
    fn sub(self, rhs: &ScalarFn) -> ScalarFn {
        ScalarFn::sub(self, rhs)
    }
}

impl Mul for &ScalarFn {
    type Output = ScalarFn;
    fn mul(self, rhs: &ScalarFn) -> ScalarFn {
        ScalarFn::mul(self, rhs)
    }
}

impl Neg for ScalarFn {
    type Output = ScalarFn;
    fn neg(self) -> ScalarFn {
        self.scale(&int(-1))
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            write!(f, "{}", fmt_rat(&mag))?;
            if e.mu > 0 {
                write!(f, " * mu^{}", e.mu)?;
            }
            if e.lam != 0 {
                write!(f, " * lam^{}", e.lam)?;
            }
            if e.log > 0 {
                write!(f, " * log^{}", e.log)?;
            }
        }
        Ok(())
    }
}

impl FromStr for ScalarFn {
    type Err = ScalarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScalarFn::from_expr(&Expr::parse(s)?)
    }
}

impl serde::Serialize for ScalarFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Convenience for tests and examples; panics on malformed text.
pub fn sf(s: &str) -> ScalarFn {
    s.parse().unwrap_or_else(|e| panic!("bad scalar function `{s}`: {e}"))
}
