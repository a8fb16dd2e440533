//! Small rational-function expression language.
//!
//! Used for the text form of [`ScalarFn`](crate::scalar_field::ScalarFn) and for
//! material definitions over `rho` and `T`. Supports `+ - * / ^`, parentheses,
//! integer exponents, rational literals and named variables; symbolic
//! differentiation keeps derivatives exact.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::rational::{int, parse_rat, pow_i, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent must be an integer constant")]
    BadExponent,
    #[error("unsupported function `{0}`")]
    UnknownFunction(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Rational),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(String, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let toks = lex(src)?;
        let mut p = Parser { toks, i: 0 };
        let e = p.expr()?;
        if p.i < p.toks.len() {
            return Err(ExprError::Parse {
                pos: p.toks[p.i].pos,
                msg: "unexpected trailing input".into(),
            });
        }
        Ok(e)
    }

    pub fn num(x: Rational) -> Expr {
        Expr::Num(x)
    }

    /// Names of all variables referenced by the expression.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replaces variables found in `params` by their values.
    pub fn substitute(&self, params: &BTreeMap<String, Rational>) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(v) => match params.get(v) {
                Some(x) => Expr::Num(x.clone()),
                None => self.clone(),
            },
            Expr::Neg(a) => neg(a.substitute(params)),
            Expr::Add(a, b) => add(a.substitute(params), b.substitute(params)),
            Expr::Sub(a, b) => sub(a.substitute(params), b.substitute(params)),
            Expr::Mul(a, b) => mul(a.substitute(params), b.substitute(params)),
            Expr::Div(a, b) => div(a.substitute(params), b.substitute(params)),
            Expr::Pow(a, e) => pow(a.substitute(params), *e),
            Expr::Call(f, a) => Expr::Call(f.clone(), Box::new(a.substitute(params))),
        }
    }

    /// Exact evaluation with every variable bound in `env`.
    pub fn eval(&self, env: &BTreeMap<String, Rational>) -> Result<Rational, ExprError> {
        Ok(match self {
            Expr::Num(x) => x.clone(),
            Expr::Var(v) => env
                .get(v)
                .cloned()
                .ok_or_else(|| ExprError::UnknownVariable(v.clone()))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let d = b.eval(env)?;
                if d.is_zero() {
                    return Err(ExprError::DivisionByZero);
                }
                a.eval(env)? / d
            }
            Expr::Pow(a, e) => pow_i(&a.eval(env)?, *e).ok_or(ExprError::DivisionByZero)?,
            Expr::Call(f, _) => return Err(ExprError::UnknownFunction(f.clone())),
        })
    }

    /// Float evaluation, for numeric material fallbacks.
    pub fn eval_f64(&self, env: &BTreeMap<String, f64>) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(x) => x.to_f64().unwrap_or(f64::NAN),
            Expr::Var(v) => *env
                .get(v)
                .ok_or_else(|| ExprError::UnknownVariable(v.clone()))?,
            Expr::Neg(a) => -a.eval_f64(env)?,
            Expr::Add(a, b) => a.eval_f64(env)? + b.eval_f64(env)?,
            Expr::Sub(a, b) => a.eval_f64(env)? - b.eval_f64(env)?,
            Expr::Mul(a, b) => a.eval_f64(env)? * b.eval_f64(env)?,
            Expr::Div(a, b) => a.eval_f64(env)? / b.eval_f64(env)?,
            Expr::Pow(a, e) => a.eval_f64(env)?.powi(*e),
            Expr::Call(f, a) => match f.as_str() {
                "ln" | "log" => a.eval_f64(env)?.ln(),
                "exp" => a.eval_f64(env)?.exp(),
                _ => return Err(ExprError::UnknownFunction(f.clone())),
            },
        })
    }

    /// Symbolic partial derivative with light constant folding.
    pub fn diff(&self, var: &str) -> Result<Expr, ExprError> {
        Ok(match self {
            Expr::Num(_) => zero(),
            Expr::Var(v) => {
                if v == var {
                    one()
                } else {
                    zero()
                }
            }
            Expr::Neg(a) => neg(a.diff(var)?),
            Expr::Add(a, b) => add(a.diff(var)?, b.diff(var)?),
            Expr::Sub(a, b) => sub(a.diff(var)?, b.diff(var)?),
            Expr::Mul(a, b) => add(
                mul(a.diff(var)?, (**b).clone()),
                mul((**a).clone(), b.diff(var)?),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.diff(var)?, (**b).clone()),
                    mul((**a).clone(), b.diff(var)?),
                );
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, e) => {
                if *e == 0 {
                    zero()
                } else {
                    mul(
                        mul(Expr::Num(int(*e as i64)), pow((**a).clone(), e - 1)),
                        a.diff(var)?,
                    )
                }
            }
            Expr::Call(f, a) => match f.as_str() {
                "ln" | "log" => div(a.diff(var)?, (**a).clone()),
                "exp" => mul(self.clone(), a.diff(var)?),
                _ => return Err(ExprError::UnknownFunction(f.clone())),
            },
        })
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(x) if !x.denom().is_one() || x < &Rational::zero() => 2,
            _ => 5,
        }
    }
}

fn zero() -> Expr {
    Expr::Num(Rational::zero())
}
fn one() -> Expr {
    Expr::Num(Rational::one())
}
fn is_num(e: &Expr, v: i64) -> bool {
    matches!(e, Expr::Num(x) if *x == int(v))
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}
pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (a, b) if is_num(&a, 0) => b,
        (a, b) if is_num(&b, 0) => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}
pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (a, b) if is_num(&b, 0) => a,
        (a, b) if is_num(&a, 0) => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}
pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (a, _) if is_num(&a, 0) => zero(),
        (_, b) if is_num(&b, 0) => zero(),
        (a, b) if is_num(&a, 1) => b,
        (a, b) if is_num(&b, 1) => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}
pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) if !y.is_zero() => Expr::Num(x / y),
        (a, b) if is_num(&a, 0) && !is_num(&b, 0) => zero(),
        (a, b) if is_num(&b, 1) => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}
pub fn pow(a: Expr, e: i32) -> Expr {
    match (a, e) {
        (_, 0) => one(),
        (a, 1) => a,
        (Expr::Num(x), e) if !x.is_zero() || e > 0 => Expr::Num(pow_i(&x, e).unwrap()),
        (a, e) => Expr::Pow(Box::new(a), e),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.prec() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(x) => write!(f, "{}", crate::rational::fmt_rat(x)),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Expr::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            Expr::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            Expr::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, " * ")?;
                wrap(f, b, 3)
            }
            Expr::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, " / ")?;
                wrap(f, b, 3)
            }
            Expr::Pow(a, e) => {
                wrap(f, a, 5)?;
                write!(f, "^{e}")
            }
            Expr::Call(name, a) => write!(f, "{name}({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let text = &src[start..i];
            let text = if text.starts_with('.') {
                format!("0{text}")
            } else {
                text.to_string()
            };
            let x = parse_rat(&text).ok_or_else(|| ExprError::Parse {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push(Token { tok: Tok::Num(x), pos: start });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token { tok: Tok::Op(c), pos: i });
            i += 1;
        } else {
            return Err(ExprError::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.i) {
            Some(Token { tok: Tok::Op(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.i)
            .map(|t| t.pos)
            .unwrap_or_else(|| self.toks.last().map(|t| t.pos + 1).unwrap_or(0))
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.peek_op() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(ExprError::Parse {
                pos: self.pos(),
                msg: format!("expected `{c}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.i += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.i += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.i += 1;
                Ok(neg(self.unary()?))
            }
            Some('+') => {
                self.i += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.i += 1;
            let pos = self.pos();
            let e = self.unary()?;
            let e = e
                .eval(&BTreeMap::new())
                .map_err(|_| ExprError::Parse {
                    pos,
                    msg: "exponent must be an integer constant".into(),
                })?;
            if !e.denom().is_one() {
                return Err(ExprError::BadExponent);
            }
            let e = e.numer().to_i32().ok_or(ExprError::BadExponent)?;
            return Ok(Expr::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        let tok = self.toks.get(self.i).cloned().ok_or(ExprError::Parse {
            pos,
            msg: "unexpected end of input".into(),
        })?;
        self.i += 1;
        match tok.tok {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Ident(name) => {
                if self.peek_op() == Some('(') {
                    self.i += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::Call(name, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op(c) => Err(ExprError::Parse {
                pos: tok.pos,
                msg: format!("unexpected `{c}`"),
            }),
        }
    }
}
