//! Second-order closure in (ρ, T) variables.
//!
//! A material is described by p(ρ,T), ε(ρ,T), φ001(ρ,T), φ011(ρ,T) and their
//! first partials. Everything here is generic over [`Scalar`], so the same
//! formulas run exactly on rationals or approximately on `f64`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::closure_gen::{
    make_closure, moments_at_rest, pairing_weight, ClosureError,
    ClosureResult, FreeInput, PsiFamily,
};
use crate::expr::{Expr, ExprError};
use crate::iso_tensor::{CVar, ConcretePoly, TensorState, SYM_PAIRS};
use crate::rational::{fmt_rat, int, parse_rat, to_f64, Rational};
use crate::scalar_field::{ScalarFn, SVar, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("singular state: {0}")]
    SingularState(String),
    #[error("constraint {label} violated at {state}")]
    ConstraintViolation { label: String, state: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid non-equilibrium fields: {0}")]
    InvalidFields(String),
    #[error("bridge mismatch in {quantity} at state {state}")]
    BridgeMismatch { quantity: String, state: usize },
    #[error("material definition: {0}")]
    Material(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
}

/// Field arithmetic shared by exact and floating evaluation.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_rat(x: &Rational) -> Self;
    fn abs_val(&self) -> Self;
    fn is_positive(&self) -> bool;
    fn as_f64(&self) -> f64;
    /// Zero, or negligible relative to `scale` in floating point.
    fn negligible(&self, scale: &Self, rel: f64) -> bool;

    fn int(n: i64) -> Self {
        Self::from_rat(&int(n))
    }

    fn ratio(n: i64, d: i64) -> Self {
        Self::from_rat(&crate::rational::rat(n, d))
    }

    /// Equality up to `rel` relative tolerance (exact for rationals).
    fn close(&self, other: &Self, rel: f64) -> bool {
        let scale = self.abs_val() + other.abs_val();
        (self.clone() - other.clone()).negligible(&scale, rel)
    }
}

impl Scalar for Rational {
    fn from_rat(x: &Rational) -> Self {
        x.clone()
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn as_f64(&self) -> f64 {
        to_f64(self)
    }
    fn negligible(&self, _scale: &Self, _rel: f64) -> bool {
        self.is_zero()
    }
}

impl Scalar for f64 {
    fn from_rat(x: &Rational) -> Self {
        to_f64(x)
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
    fn is_positive(&self) -> bool {
        *self > 0.0
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn negligible(&self, scale: &Self, rel: f64) -> bool {
        self.abs() <= rel * scale.abs().max(f64::MIN_POSITIVE)
    }
}

/// Equilibrium state (ρ, T).
#[derive(Debug, Clone, PartialEq)]
pub struct EqState<S> {
    pub rho: S,
    pub t: S,
}

impl<S: Scalar> EqState<S> {
    pub fn new(rho: S, t: S) -> Self {
        EqState { rho, t }
    }

    pub fn check(&self) -> Result<(), ThermoError> {
        if !self.rho.is_positive() {
            return Err(ThermoError::InvalidState(format!("rho = {:?} is not positive", self.rho)));
        }
        if !self.t.is_positive() {
            return Err(ThermoError::InvalidState(format!("T = {:?} is not positive", self.t)));
        }
        Ok(())
    }

    /// λ at equilibrium, 1/(2T).
    pub fn lambda(&self) -> S {
        S::int(1) / (S::int(2) * self.t.clone())
    }

    fn describe(&self) -> String {
        format!("rho={}, T={}", self.rho.as_f64(), self.t.as_f64())
    }
}

/// Value and (ρ, T) partials of one state function.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials<S> {
    pub v: S,
    pub rho: S,
    pub t: S,
}

/// The four state functions of a material at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPoint<S> {
    pub p: Partials<S>,
    pub eps: Partials<S>,
    pub phi001: Partials<S>,
    pub phi011: Partials<S>,
}

/// Source of the four equilibrium state functions.
pub trait MaterialModel<S: Scalar> {
    fn point(&self, s: &EqState<S>) -> Result<MaterialPoint<S>, ThermoError>;

    /// Relative tolerance for identity checks (ignored by exact scalars).
    fn tolerance(&self) -> f64 {
        1e-12
    }
}

/// Which of the four state functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MaterialField {
    P,
    Epsilon,
    Phi001,
    Phi011,
}

impl MaterialField {
    pub const ALL: [MaterialField; 4] = [
        MaterialField::P,
        MaterialField::Epsilon,
        MaterialField::Phi001,
        MaterialField::Phi011,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MaterialField::P => "p",
            MaterialField::Epsilon => "epsilon",
            MaterialField::Phi001 => "phi001",
            MaterialField::Phi011 => "phi011",
        }
    }
}

/// Material given by expressions in `rho` and `T`, differentiated symbolically.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMaterial {
    pub exprs: BTreeMap<MaterialField, Expr>,
    pub params: BTreeMap<String, Rational>,
    derivs: BTreeMap<MaterialField, (Expr, Expr)>,
}

impl ExprMaterial {
    pub fn new(
        exprs: BTreeMap<MaterialField, Expr>,
        params: BTreeMap<String, Rational>,
    ) -> Result<Self, ThermoError> {
        let mut bound = BTreeMap::new();
        let mut derivs = BTreeMap::new();
        for f in MaterialField::ALL {
            let e = exprs
                .get(&f)
                .ok_or_else(|| ThermoError::Material(format!("missing `{}`", f.key())))?
                .substitute(&params);
            for v in e.variables() {
                if v != "rho" && v != "T" {
                    return Err(ThermoError::Material(format!(
                        "`{}` uses unknown symbol `{v}`",
                        f.key()
                    )));
                }
            }
            derivs.insert(f, (e.diff("rho")?, e.diff("T")?));
            bound.insert(f, e);
        }
        Ok(ExprMaterial {
            exprs: bound,
            params,
            derivs,
        })
    }

    /// Parses `key = value` lines: the four state functions plus rational
    /// parameters. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ThermoError> {
        let mut exprs = BTreeMap::new();
        let mut params = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ThermoError::Material(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match MaterialField::ALL.iter().find(|f| f.key() == k) {
                Some(f) => {
                    exprs.insert(*f, Expr::parse(v)?);
                }
                None => {
                    let x = parse_rat(v).ok_or_else(|| {
                        ThermoError::Material(format!("line {}: parameter `{k}` is not rational", n + 1))
                    })?;
                    params.insert(k.to_string(), x);
                }
            }
        }
        ExprMaterial::new(exprs, params)
    }

    /// Polytropic ideal gas p = ρT, ε = c_v T with the minimal φ-functions
    /// φ001 = (2c_v + 2)ρT², φ011 = −(6c_v + 12)ρT³.
    pub fn ideal_gas(cv: Rational) -> Self {
        let mut params = BTreeMap::new();
        params.insert("cv".to_string(), cv);
        let mut exprs = BTreeMap::new();
        let parse = |s: &str| Expr::parse(s).expect("built-in expression");
        exprs.insert(MaterialField::P, parse("rho*T"));
        exprs.insert(MaterialField::Epsilon, parse("cv*T"));
        exprs.insert(MaterialField::Phi001, parse("(2*cv + 2)*rho*T^2"));
        exprs.insert(MaterialField::Phi011, parse("-(6*cv + 12)*rho*T^3"));
        ExprMaterial::new(exprs, params).expect("built-in material")
    }
}

impl MaterialModel<Rational> for ExprMaterial {
    fn point(&self, s: &EqState<Rational>) -> Result<MaterialPoint<Rational>, ThermoError> {
        let mut env = BTreeMap::new();
        env.insert("rho".to_string(), s.rho.clone());
        env.insert("T".to_string(), s.t.clone());
        let get = |f: MaterialField| -> Result<Partials<Rational>, ThermoError> {
            let (dr, dt) = &self.derivs[&f];
            Ok(Partials {
                v: self.exprs[&f].eval(&env)?,
                rho: dr.eval(&env)?,
                t: dt.eval(&env)?,
            })
        };
        Ok(MaterialPoint {
            p: get(MaterialField::P)?,
            eps: get(MaterialField::Epsilon)?,
            phi001: get(MaterialField::Phi001)?,
            phi011: get(MaterialField::Phi011)?,
        })
    }
}

impl MaterialModel<f64> for ExprMaterial {
    fn point(&self, s: &EqState<f64>) -> Result<MaterialPoint<f64>, ThermoError> {
        let mut env = BTreeMap::new();
        env.insert("rho".to_string(), s.rho);
        env.insert("T".to_string(), s.t);
        let get = |f: MaterialField| -> Result<Partials<f64>, ThermoError> {
            let (dr, dt) = &self.derivs[&f];
            Ok(Partials {
                v: self.exprs[&f].eval_f64(&env)?,
                rho: dr.eval_f64(&env)?,
                t: dt.eval_f64(&env)?,
            })
        };
        Ok(MaterialPoint {
            p: get(MaterialField::P)?,
            eps: get(MaterialField::Epsilon)?,
            phi001: get(MaterialField::Phi001)?,
            phi011: get(MaterialField::Phi011)?,
        })
    }
}

pub type RealFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Material given by plain functions of (ρ, T). Without explicit partials the
/// derivatives come from central differences with step 2⁻²⁰ relative to the
/// variable, and identity checks loosen to [`NumericMaterial::FD_TOLERANCE`].
pub struct NumericMaterial {
    pub funcs: [RealFn; 4],
    /// Optional exact partials (∂ρ, ∂T) per function, in [`MaterialField::ALL`] order.
    pub partials: Option<[(RealFn, RealFn); 4]>,
}

impl NumericMaterial {
    pub const FD_TOLERANCE: f64 = 1e-6;

    pub fn new(funcs: [RealFn; 4]) -> Self {
        NumericMaterial { funcs, partials: None }
    }
}

fn central(f: &RealFn, rho: f64, t: f64, wrt_rho: bool) -> f64 {
    let scale = if wrt_rho { rho } else { t };
    let h = scale * (-20f64).exp2();
    if wrt_rho {
        (f(rho + h, t) - f(rho - h, t)) / (2.0 * h)
    } else {
        (f(rho, t + h) - f(rho, t - h)) / (2.0 * h)
    }
}

impl MaterialModel<f64> for NumericMaterial {
    fn point(&self, s: &EqState<f64>) -> Result<MaterialPoint<f64>, ThermoError> {
        let get = |i: usize| {
            let f = &self.funcs[i];
            let (dr, dt) = match &self.partials {
                Some(p) => (p[i].0(s.rho, s.t), p[i].1(s.rho, s.t)),
                None => (central(f, s.rho, s.t, true), central(f, s.rho, s.t, false)),
            };
            Partials {
                v: f(s.rho, s.t),
                rho: dr,
                t: dt,
            }
        };
        Ok(MaterialPoint {
            p: get(0),
            eps: get(1),
            phi001: get(2),
            phi011: get(3),
        })
    }

    fn tolerance(&self) -> f64 {
        if self.partials.is_some() {
            1e-12
        } else {
            Self::FD_TOLERANCE
        }
    }
}

/// Material induced by a generated closure: ψ₁ together with the free
/// functions H_{1,0,1,0} and H_{1,1,1,0}.
///
/// ρ = ∂³ψ₁/∂μ³ must be affine in μ (ψ₁ of μ-degree ≤ 4) so that μ(ρ, λ) is
/// explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMaterial {
    pub psi1: ScalarFn,
    pub h1010: ScalarFn,
    pub h1110: ScalarFn,
    /// Constant added to one state function, to build inconsistent materials.
    pub perturb: Option<(MaterialField, Rational)>,
    rho_fn: ScalarFn,
    p_fn: ScalarFn,
    e2_fn: ScalarFn,
    phi001_fn: ScalarFn,
    phi011_fn: ScalarFn,
}

impl PsiMaterial {
    pub fn new(psi1: ScalarFn, h1010: ScalarFn, h1110: ScalarFn) -> Result<Self, ThermoError> {
        let rho_fn = psi1.diff_n(SVar::Mu, 3);
        if rho_fn.mu_degree().unwrap_or(0) > 1 {
            return Err(ThermoError::Material(
                "psi1 must have mu-degree at most 4".into(),
            ));
        }
        let h000 = psi1.diff_n(SVar::Mu, 2);
        let half = ScalarFn::minus_half_inv_lam_pow(1);
        let quarter = ScalarFn::minus_half_inv_lam_pow(2);
        let p_fn = half.mul(&h000);
        let e2_fn = h000.diff(SVar::Lam);
        let phi001_fn = half
            .mul(&psi1)
            .diff(SVar::Mu)
            .diff(SVar::Lam)
            .add(&h1010);
        let phi011_fn = quarter
            .mul(&psi1)
            .diff(SVar::Mu)
            .diff(SVar::Lam)
            .scale(&int(3))
            .add(&h1110);
        Ok(PsiMaterial {
            psi1,
            h1010,
            h1110,
            perturb: None,
            rho_fn,
            p_fn,
            e2_fn,
            phi001_fn,
            phi011_fn,
        })
    }

    /// Material of a generated closure (needs order ≥ 3).
    pub fn from_closure(fam: &PsiFamily, res: &ClosureResult) -> Result<Self, ThermoError> {
        let psi1 = fam
            .get(1)
            .cloned()
            .ok_or_else(|| ThermoError::Material("psi family has no psi1".into()))?;
        PsiMaterial::new(psi1, res.table.get(1, 0, 1, 0), res.table.get(1, 1, 1, 0))
    }

    pub fn with_perturbation(mut self, f: MaterialField, delta: Rational) -> Self {
        self.perturb = Some((f, delta));
        self
    }

    /// μ at equilibrium for (ρ, λ).
    pub fn mu_eq(&self, rho: &Rational, lam: &Rational) -> Result<Rational, ThermoError> {
        if self.rho_fn.is_zero() {
            return Err(ThermoError::InvalidState(
                "rho = 0 for every mu: the psi family carries no density".into(),
            ));
        }
        let a1 = exact(self.rho_fn.mu_coefficient(1).eval(&int(0), lam)?, "rho")?;
        let a0 = exact(self.rho_fn.mu_coefficient(0).eval(&int(0), lam)?, "rho")?;
        if a1.is_zero() {
            return Err(ThermoError::InvalidState(format!(
                "density does not depend on mu at lambda = {}",
                fmt_rat(lam)
            )));
        }
        Ok((rho - a0) / a1)
    }

    fn partials(&self, f: &ScalarFn, mu: &Rational, lam: &Rational, what: &str) -> Result<Partials<Rational>, ThermoError> {
        let ev = |g: &ScalarFn| exact(g.eval(mu, lam).map_err(ClosureError::from)?, what);
        let r_mu = ev(&self.rho_fn.diff(SVar::Mu))?;
        let r_lam = ev(&self.rho_fn.diff(SVar::Lam))?;
        if r_mu.is_zero() {
            return Err(ThermoError::SingularState("d rho / d mu = 0".into()));
        }
        let f_mu = ev(&f.diff(SVar::Mu))?;
        let f_lam = ev(&f.diff(SVar::Lam))?;
        // dλ/dT = −2λ²
        let dlam_dt = -(int(2) * lam * lam);
        Ok(Partials {
            v: ev(f)?,
            rho: &f_mu / &r_mu,
            t: (f_lam - &f_mu * &r_lam / &r_mu) * dlam_dt,
        })
    }
}

fn exact(v: Value, what: &str) -> Result<Rational, ThermoError> {
    match v {
        Value::Exact(x) => Ok(x),
        Value::Float(_) => Err(ClosureError::Inexact(what.into()).into()),
    }
}

impl From<crate::scalar_field::ScalarError> for ThermoError {
    fn from(e: crate::scalar_field::ScalarError) -> Self {
        ThermoError::Closure(ClosureError::Scalar(e))
    }
}

impl MaterialModel<Rational> for PsiMaterial {
    fn point(&self, s: &EqState<Rational>) -> Result<MaterialPoint<Rational>, ThermoError> {
        let lam = s.lambda();
        let mu = self.mu_eq(&s.rho, &lam)?;
        let p = self.partials(&self.p_fn, &mu, &lam, "p")?;
        let e2 = self.partials(&self.e2_fn, &mu, &lam, "epsilon")?;
        // ε = E₂ / (2ρ)
        let two_rho = int(2) * &s.rho;
        let eps = Partials {
            v: &e2.v / &two_rho,
            rho: &e2.rho / &two_rho - &e2.v / (&two_rho * &s.rho),
            t: &e2.t / &two_rho,
        };
        let mut pt = MaterialPoint {
            p,
            eps,
            phi001: self.partials(&self.phi001_fn, &mu, &lam, "phi001")?,
            phi011: self.partials(&self.phi011_fn, &mu, &lam, "phi011")?,
        };
        if let Some((f, d)) = &self.perturb {
            let slot = match f {
                MaterialField::P => &mut pt.p,
                MaterialField::Epsilon => &mut pt.eps,
                MaterialField::Phi001 => &mut pt.phi001,
                MaterialField::Phi011 => &mut pt.phi011,
            };
            slot.v += d;
        }
        Ok(pt)
    }
}

/// Combinations used throughout.
impl<S: Scalar> MaterialPoint<S> {
    /// p/ρ + ε.
    pub fn enthalpy(&self, s: &EqState<S>) -> S {
        self.p.v.clone() / s.rho.clone() + self.eps.v.clone()
    }

    /// T ∂p/∂T − p − ρε.
    fn bracket(&self, s: &EqState<S>) -> S {
        s.t.clone() * self.p.t.clone() - self.p.v.clone() - s.rho.clone() * self.eps.v.clone()
    }

    /// h₄ from ∂φ001/∂T = 2(ε + p/ρ)∂p/∂T − h₄/T².
    pub fn h4(&self, s: &EqState<S>) -> S {
        s.t.clone() * s.t.clone() * (S::int(2) * self.enthalpy(s) * self.p.t.clone() - self.phi001.t.clone())
    }
}

/// Second-order potential coefficients at equilibrium, in (ρ, T) form.
#[derive(Debug, Clone, PartialEq)]
pub struct EqCoefficients<S> {
    pub h000_mumu: S,
    pub h000_mulam: S,
    pub h000_lamlam: S,
    pub h010_mu: S,
    pub h010_lam: S,
    pub h020: S,
    pub h200: S,
    pub h101: S,
    pub h002: S,
    pub phi110: S,
}

pub fn eq_coefficients<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>) -> Result<EqCoefficients<S>, ThermoError> {
    let (rho, t) = (s.rho.clone(), s.t.clone());
    if pt.p.rho.negligible(&pt.p.v.abs_val(), 1e-14) {
        return Err(ThermoError::SingularState("dp/drho = 0".into()));
    }
    let two = S::int(2);
    let four = S::int(4);
    let br = pt.bracket(s);
    let e = pt.enthalpy(s);
    let p = pt.p.v.clone();
    Ok(EqCoefficients {
        h000_mumu: -(rho.clone() * t.clone()) / pt.p.rho.clone(),
        h000_mulam: two.clone() * t.clone() * br.clone() / pt.p.rho.clone(),
        h000_lamlam: -(four.clone() * rho.clone() * t.clone() * t.clone() * pt.eps.t.clone())
            - four.clone() * t.clone() / rho.clone() * br.clone() * br / pt.p.rho.clone(),
        h010_mu: -(rho.clone() * t.clone()),
        h010_lam: -(two.clone() * t.clone() * (p.clone() + rho.clone() * pt.eps.v.clone())),
        h020: -(S::int(3) * p.clone() * t.clone()),
        h200: -(rho.clone() * t.clone()),
        h101: -(two.clone() * t.clone() * (p.clone() + rho.clone() * pt.eps.v.clone())),
        h002: two * pt.h4(s) - four * rho * t.clone() * e.clone() * e,
        phi110: -(S::int(3) * p * t),
    })
}

/// Determinants of the 2×2 (μ, λ) block of ∂²h₀₀₀ and of the 3×3 scalar
/// block bordered by the ∂h₀₁₀ column; the latter equals D.
pub fn scalar_block_determinants<S: Scalar>(c: &EqCoefficients<S>) -> (S, S) {
    let a = c.h000_mumu.clone();
    let b = c.h000_mulam.clone();
    let d = c.h000_lamlam.clone();
    let u = c.h010_mu.clone();
    let v = c.h010_lam.clone();
    let w = c.h020.clone() * S::ratio(5, 9);
    let det2 = a.clone() * d.clone() - b.clone() * b.clone();
    let det3 = a.clone() * (d.clone() * w.clone() - v.clone() * v.clone())
        - b.clone() * (b.clone() * w - v.clone() * u.clone())
        + u.clone() * (b * v - d * u);
    (det2, det3)
}

/// Result of checking one material.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialReport {
    pub probes: usize,
    pub checks: Vec<String>,
    /// h₄ at each probe, for information.
    pub h4: Vec<f64>,
}

pub const MATERIAL_CHECKS: [&str; 5] = ["cris22", "cris25", "z.2", "alfa.5", "gamma.2"];

/// Checks the integrability and compatibility conditions at every probe.
pub fn validate_material<S: Scalar, M: MaterialModel<S>>(
    m: &M,
    probes: &[EqState<S>],
) -> Result<MaterialReport, ThermoError> {
    let tol = m.tolerance();
    let mut h4s = Vec::new();
    for s in probes {
        s.check()?;
        let pt = m.point(s)?;
        let (rho, t) = (s.rho.clone(), s.t.clone());
        let p = pt.p.v.clone();
        let eps = pt.eps.v.clone();
        let e = pt.enthalpy(s);
        let two = S::int(2);
        let six = S::int(6);
        let h4 = pt.h4(s);
        let fail = |label: &str| ThermoError::ConstraintViolation {
            label: label.into(),
            state: s.describe(),
        };

        let rho2 = rho.clone() * rho.clone();
        let check = |label: &str, lhs: Vec<S>, rhs: Vec<S>| -> Result<(), ThermoError> {
            let mut diff = S::int(0);
            let mut scale = S::int(0);
            for x in &lhs {
                diff = diff + x.clone();
                scale = scale + x.abs_val();
            }
            for x in &rhs {
                diff = diff - x.clone();
                scale = scale + x.abs_val();
            }
            if diff.negligible(&scale, tol) {
                Ok(())
            } else {
                Err(fail(label))
            }
        };
        check(
            "cris22",
            vec![pt.eps.rho.clone()],
            vec![p.clone() / rho2.clone(), -(t.clone() * pt.p.t.clone() / rho2)],
        )?;
        check(
            "cris25",
            vec![pt.phi001.rho.clone()],
            vec![two.clone() * e.clone() * pt.p.rho.clone()],
        )?;
        check(
            "z.2",
            vec![pt.phi011.rho.clone()],
            vec![-(six.clone() * (eps.clone() + two.clone() * p.clone() / rho.clone()) * t.clone() * pt.p.rho.clone())],
        )?;
        check(
            "alfa.5",
            vec![pt.phi011.t.clone()],
            vec![
                two.clone() / t.clone() * pt.phi011.v.clone(),
                -(six.clone() * t.clone() * (two.clone() * p.clone() / rho.clone() + eps.clone()) * pt.p.t.clone()),
                S::int(3) * h4.clone() / t.clone(),
                six * p.clone() * e.clone(),
            ],
        )?;
        if pt.p.rho.negligible(&p.abs_val(), 1e-14) {
            return Err(ThermoError::SingularState("dp/drho = 0".into()));
        }
        // ∂φ001/∂λ at fixed μ, rewritten in (ρ, T) partials
        check(
            "gamma.2",
            vec![
                pt.phi001.rho.clone() * two.clone() * t.clone() * pt.bracket(s) / pt.p.rho.clone(),
                -(two.clone() * t.clone() * t.clone() * pt.phi001.t.clone()),
            ],
            vec![two * h4.clone(), -(S::int(4) * rho * t * e.clone() * e)],
        )?;
        h4s.push(h4.as_f64());
    }
    Ok(MaterialReport {
        probes: probes.len(),
        checks: MATERIAL_CHECKS.iter().map(|s| s.to_string()).collect(),
        h4: h4s,
    })
}

/// Scalar material coefficients of the second-order theory.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedCoeffs<S> {
    pub h2: S,
    pub h3: S,
    pub h4: S,
    pub k: S,
    pub d: S,
    pub d1: S,
    pub beta1: S,
    pub beta2: S,
    pub beta3: S,
}

impl<S: Scalar> DerivedCoeffs<S> {
    /// K recomputed from β₃ and h₃.
    pub fn k_from_beta(&self, pt: &MaterialPoint<S>, s: &EqState<S>) -> S {
        (self.beta3.clone() - S::int(4) * self.h3.clone() * pt.enthalpy(s)) / self.h4.clone()
    }
}

/// h₄ and K; needs only the heat-flux sector.
fn heat_sector<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>) -> Result<(S, S), ThermoError> {
    let h4 = pt.h4(s);
    let scale = (s.t.clone() * s.t.clone() * pt.phi001.t.clone()).abs_val()
        + (S::int(2) * s.t.clone() * s.t.clone() * pt.enthalpy(s) * pt.p.t.clone()).abs_val();
    if h4.negligible(&scale, 1e-12) {
        return Err(ThermoError::SingularState("h4 = 0".into()));
    }
    let k = S::ratio(2, 3) / h4.clone()
        * (pt.phi011.v.clone() + S::int(6) * pt.p.v.clone() * s.t.clone() * pt.enthalpy(s));
    Ok((h4, k))
}

/// h₂ and D; needs the dynamic-pressure sector.
fn scalar_sector<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>) -> Result<(S, S), ThermoError> {
    let (rho, t, p) = (s.rho.clone(), s.t.clone(), pt.p.v.clone());
    if pt.eps.t.negligible(&pt.eps.v.abs_val(), 1e-14) {
        return Err(ThermoError::SingularState("d epsilon / dT = 0".into()));
    }
    if pt.p.rho.negligible(&p.abs_val(), 1e-14) {
        return Err(ThermoError::SingularState("dp/drho = 0".into()));
    }
    let a = -(S::ratio(5, 6) * t.clone() * p);
    let b = rho.clone() * t.clone() / S::int(2) * pt.p.rho.clone();
    let c = t.clone() * t.clone() / (S::int(2) * rho.clone()) * pt.p.t.clone() * pt.p.t.clone() / pt.eps.t.clone();
    let h2 = a.clone() + b.clone() + c.clone();
    if h2.negligible(&(a.abs_val() + b.abs_val() + c.abs_val()), 1e-12) {
        return Err(ThermoError::SingularState("h2 = 0".into()));
    }
    let d = S::int(8) * rho.clone() * rho * t.clone() * t.clone() * t * pt.eps.t.clone() * h2.clone() / pt.p.rho.clone();
    Ok((h2, d))
}

fn nonzero_p<S: Scalar>(pt: &MaterialPoint<S>) -> Result<(), ThermoError> {
    if pt.p.v.negligible(&pt.p.v.abs_val(), 0.0) {
        return Err(ThermoError::SingularState("p = 0".into()));
    }
    Ok(())
}

pub fn derived_coeffs<S: Scalar, M: MaterialModel<S>>(m: &M, s: &EqState<S>) -> Result<DerivedCoeffs<S>, ThermoError> {
    s.check()?;
    let pt = m.point(s)?;
    derived_from_point(&pt, s)
}

pub fn derived_from_point<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>) -> Result<DerivedCoeffs<S>, ThermoError> {
    let (h2, d) = scalar_sector(pt, s)?;
    let (h4, k) = heat_sector(pt, s)?;
    let h3 = -(pt.p.v.clone() * s.t.clone());
    let e = pt.enthalpy(s);
    let beta3 = S::ratio(2, 3) * pt.phi011.v.clone();
    let beta2 = (S::int(4) * h2.clone() - S::ratio(10, 3) * h3.clone()) * e + S::ratio(5, 6) * beta3.clone();
    Ok(DerivedCoeffs {
        d1: -(S::int(2) * h4.clone() * s.rho.clone() * s.t.clone()),
        h2,
        h3,
        h4,
        k,
        d,
        beta1: pt.phi001.v.clone(),
        beta2,
        beta3,
    })
}

type Mat3<S> = [[S; 3]; 3];
type Vec3<S> = [S; 3];

/// Dynamic pressure, deviatoric stress and heat flux.
#[derive(Debug, Clone, PartialEq)]
pub struct NonEqFields<S> {
    pub pi: S,
    pub fdev: Mat3<S>,
    pub q: Vec3<S>,
}

impl<S: Scalar> NonEqFields<S> {
    pub fn zero() -> Self {
        NonEqFields {
            pi: S::int(0),
            fdev: std::array::from_fn(|_| std::array::from_fn(|_| S::int(0))),
            q: std::array::from_fn(|_| S::int(0)),
        }
    }

    pub fn check(&self) -> Result<(), ThermoError> {
        let tr = self.fdev[0][0].clone() + self.fdev[1][1].clone() + self.fdev[2][2].clone();
        let scale = self.fdev[0][0].abs_val() + self.fdev[1][1].abs_val() + self.fdev[2][2].abs_val();
        if !tr.negligible(&scale, 1e-12) {
            return Err(ThermoError::InvalidFields("deviatoric stress has nonzero trace".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                if !self.fdev[i][j].close(&self.fdev[j][i], 1e-12) {
                    return Err(ThermoError::InvalidFields("deviatoric stress is not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// First-order deviations of the multipliers from equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeDeviation<S> {
    pub d_mu: S,
    pub d_lam: S,
    pub mu_ll: S,
    pub mu_dev: Mat3<S>,
    pub mu_i: Vec3<S>,
    pub lam_i: Vec3<S>,
}

fn map3<S: Scalar>(m: &Mat3<S>, f: impl Fn(&S) -> S) -> Mat3<S> {
    std::array::from_fn(|i| std::array::from_fn(|j| f(&m[i][j])))
}

fn map_v<S: Scalar>(v: &Vec3<S>, f: impl Fn(&S) -> S) -> Vec3<S> {
    std::array::from_fn(|i| f(&v[i]))
}

fn kron<S: Scalar>(i: usize, j: usize) -> S {
    if i == j {
        S::int(1)
    } else {
        S::int(0)
    }
}

/// μ_<ij>, μ_i, λ_i: the sectors that do not involve π.
fn shear_heat_multipliers<S: Scalar>(
    pt: &MaterialPoint<S>,
    s: &EqState<S>,
    n: &NonEqFields<S>,
) -> Result<(Mat3<S>, Vec3<S>, Vec3<S>), ThermoError> {
    nonzero_p(pt)?;
    let (h4, _) = heat_sector(pt, s)?;
    let pt_ = S::int(2) * pt.p.v.clone() * s.t.clone();
    let e = pt.enthalpy(s);
    Ok((
        map3(&n.fdev, |x| -(x.clone() / pt_.clone())),
        map_v(&n.q, |x| -(S::int(2) / h4.clone() * e.clone() * x.clone())),
        map_v(&n.q, |x| x.clone() / h4.clone()),
    ))
}

pub fn first_order_multipliers<S: Scalar, M: MaterialModel<S>>(
    m: &M,
    s: &EqState<S>,
    n: &NonEqFields<S>,
) -> Result<LagrangeDeviation<S>, ThermoError> {
    s.check()?;
    n.check()?;
    let pt = m.point(s)?;
    first_order_from_point(&pt, s, n)
}

pub fn first_order_from_point<S: Scalar>(
    pt: &MaterialPoint<S>,
    s: &EqState<S>,
    n: &NonEqFields<S>,
) -> Result<LagrangeDeviation<S>, ThermoError> {
    let (_, d) = scalar_sector(pt, s)?;
    let (mu_dev, mu_i, lam_i) = shear_heat_multipliers(pt, s, n)?;
    let (rho, t) = (s.rho.clone(), s.t.clone());
    let t3 = t.clone() * t.clone() * t.clone();
    let pi_d = n.pi.clone() / d;
    let four = S::int(4);
    let d_mu = (-(four.clone() * rho.clone() * rho.clone() * t3.clone() * pt.eps.t.clone())
        - four.clone() * t3.clone() * pt.bracket(s) * pt.p.t.clone() / pt.p.rho.clone())
        * pi_d.clone();
    let d_lam = -(S::int(2) * rho.clone() * t3.clone() * pt.p.t.clone() / pt.p.rho.clone()) * pi_d.clone();
    let mu_ll = four * rho.clone() * rho * t3 * pt.eps.t.clone() / pt.p.rho.clone() * pi_d;
    Ok(LagrangeDeviation {
        d_mu,
        d_lam,
        mu_ll,
        mu_dev,
        mu_i,
        lam_i,
    })
}

/// First-order flux closure.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxClosure<S> {
    /// F̂^{kij}, indexed [k][i][j].
    pub fkij: [Mat3<S>; 3],
    /// Ĝ^{kill}, indexed [k][i], equilibrium part included.
    pub gkill: Mat3<S>,
}

/// δ^{(ij} q^{k)} as the average of the three placements of q.
pub fn sym_delta_q<S: Scalar>(q: &Vec3<S>) -> [Mat3<S>; 3] {
    std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                (kron::<S>(i, j) * q[k].clone() + kron::<S>(j, k) * q[i].clone() + kron::<S>(k, i) * q[j].clone())
                    / S::int(3)
            })
        })
    })
}

/// Coefficient of πδ^{ki} in the first-order Ĝ^{kill}.
fn pi_flux_coeff<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, h2: &S, h4: &S, k: &S) -> S {
    h4.clone() / (S::int(2) * h2.clone()) * (S::ratio(5, 6) * k.clone() - pt.p.t.clone() / (s.rho.clone() * pt.eps.t.clone()))
        + S::int(2) * pt.enthalpy(s)
}

/// Coefficient of F̂^{<ki>} in the first-order Ĝ^{kill}.
fn dev_flux_coeff<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, h4: &S, k: &S) -> S {
    -(h4.clone() * k.clone() / (S::int(2) * pt.p.v.clone() * s.t.clone())) + S::int(2) * pt.enthalpy(s)
}

pub fn flux_closure_first_order<S: Scalar, M: MaterialModel<S>>(
    m: &M,
    s: &EqState<S>,
    n: &NonEqFields<S>,
) -> Result<FluxClosure<S>, ThermoError> {
    s.check()?;
    n.check()?;
    let pt = m.point(s)?;
    flux_from_point(&pt, s, n)
}

pub fn flux_from_point<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, n: &NonEqFields<S>) -> Result<FluxClosure<S>, ThermoError> {
    let (h2, _) = scalar_sector(pt, s)?;
    let mut out = shear_heat_flux(pt, s, n)?;
    let (h4, k) = heat_sector(pt, s)?;
    let c = pi_flux_coeff(pt, s, &h2, &h4, &k) * n.pi.clone();
    for i in 0..3 {
        out.gkill[i][i] = out.gkill[i][i].clone() + c.clone();
    }
    Ok(out)
}

/// Flux closure without the π contribution.
fn shear_heat_flux<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, n: &NonEqFields<S>) -> Result<FluxClosure<S>, ThermoError> {
    nonzero_p(pt)?;
    let (h4, k) = heat_sector(pt, s)?;
    let three_halves_k = S::ratio(3, 2) * k.clone();
    let fkij = sym_delta_q(&n.q).map(|m| map3(&m, |x| three_halves_k.clone() * x.clone()));
    let cd = dev_flux_coeff(pt, s, &h4, &k);
    let gkill = std::array::from_fn(|k_| {
        std::array::from_fn(|i| kron::<S>(k_, i) * pt.phi001.v.clone() + cd.clone() * n.fdev[k_][i].clone())
    });
    Ok(FluxClosure { fkij, gkill })
}

fn frob<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> S {
    let mut acc = S::int(0);
    for i in 0..3 {
        for j in 0..3 {
            acc = acc + a[i][j].clone() * b[i][j].clone();
        }
    }
    acc
}

fn dot3<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> S {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone() + a[2].clone() * b[2].clone()
}

/// The entropy density has no first-order part.
pub fn entropy_first_order<S: Scalar>() -> S {
    S::int(0)
}

/// h^{(2)} = π²/(4h₂) + F̂^{<ij>}F̂_{<ij>}/(4h₃) + q·q/h₄.
pub fn entropy_second_order<S: Scalar, M: MaterialModel<S>>(m: &M, s: &EqState<S>, n: &NonEqFields<S>) -> Result<S, ThermoError> {
    s.check()?;
    n.check()?;
    let pt = m.point(s)?;
    entropy2_from_point(&pt, s, n)
}

pub fn entropy2_from_point<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, n: &NonEqFields<S>) -> Result<S, ThermoError> {
    let (h2, _) = scalar_sector(pt, s)?;
    Ok(n.pi.clone() * n.pi.clone() / (S::int(4) * h2) + shear_heat_entropy(pt, s, n)?)
}

fn shear_heat_entropy<S: Scalar>(pt: &MaterialPoint<S>, s: &EqState<S>, n: &NonEqFields<S>) -> Result<S, ThermoError> {
    nonzero_p(pt)?;
    let (h4, _) = heat_sector(pt, s)?;
    let h3 = -(pt.p.v.clone() * s.t.clone());
    Ok(frob(&n.fdev, &n.fdev) / (S::int(4) * h3) + dot3(&n.q, &n.q) / h4)
}

/// ĥ^k up to second order.
pub fn entropy_flux<S: Scalar, M: MaterialModel<S>>(m: &M, s: &EqState<S>, n: &NonEqFields<S>) -> Result<Vec3<S>, ThermoError> {
    s.check()?;
    n.check()?;
    let pt = m.point(s)?;
    nonzero_p(&pt)?;
    let (h2, _) = scalar_sector(&pt, s)?;
    let (_, k) = heat_sector(&pt, s)?;
    let c_pi = (S::ratio(5, 6) * k.clone() - pt.p.t.clone() / (s.rho.clone() * pt.eps.t.clone())) / (S::int(2) * h2);
    let c_dev = k / (S::int(2) * pt.p.v.clone() * s.t.clone());
    Ok(std::array::from_fn(|i| {
        let mut fq = S::int(0);
        for j in 0..3 {
            fq = fq + n.fdev[i][j].clone() * n.q[j].clone();
        }
        n.q[i].clone() / s.t.clone() + n.pi.clone() * n.q[i].clone() * c_pi.clone() - c_dev.clone() * fq
    }))
}

/// Left side minus right side of the first-order moment relations for a
/// given multiplier deviation; all entries vanish for the true inversion.
pub fn linear_system_residual<S: Scalar>(
    pt: &MaterialPoint<S>,
    s: &EqState<S>,
    dev: &LagrangeDeviation<S>,
    n: &NonEqFields<S>,
) -> Result<Vec<S>, ThermoError> {
    let c = eq_coefficients(pt, s)?;
    let mut out = Vec::new();
    out.push(c.h000_mumu.clone() * dev.d_mu.clone() + c.h000_mulam.clone() * dev.d_lam.clone() + c.h010_mu.clone() * dev.mu_ll.clone());
    for i in 0..3 {
        out.push(c.h200.clone() * dev.mu_i[i].clone() + c.h101.clone() * dev.lam_i[i].clone());
    }
    let iso = c.h010_mu.clone() * dev.d_mu.clone() + c.h010_lam.clone() * dev.d_lam.clone();
    for i in 0..3 {
        for j in 0..3 {
            let mu_full = S::ratio(1, 3) * dev.mu_ll.clone() * kron::<S>(i, j) + dev.mu_dev[i][j].clone();
            let rhs = iso.clone() * kron::<S>(i, j)
                + c.h020.clone() * (S::ratio(1, 3) * dev.mu_ll.clone() * kron::<S>(i, j) + S::ratio(2, 3) * mu_full);
            out.push(rhs - n.pi.clone() * kron::<S>(i, j) - n.fdev[i][j].clone());
        }
    }
    out.push(c.h000_mulam.clone() * dev.d_mu.clone() + c.h000_lamlam.clone() * dev.d_lam.clone() + c.h010_lam.clone() * dev.mu_ll.clone());
    for i in 0..3 {
        out.push(c.h101.clone() * dev.mu_i[i].clone() + c.h002.clone() * dev.lam_i[i].clone() - S::int(2) * n.q[i].clone());
    }
    Ok(out)
}

/// How much of the closure a bridge state could compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BridgeMode {
    /// Every quantity.
    Full,
    /// Dynamic-pressure sector degenerate (D = 0); π is set to zero and the
    /// shear and heat-flux sectors are compared.
    ShearHeat,
    /// Only equilibrium moments and h^{(1)}.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeStateReport {
    pub index: usize,
    pub mode: BridgeMode,
    pub compared: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeReport {
    pub order: u32,
    pub states: Vec<BridgeStateReport>,
}

/// Builds the order-3 closure and its induced material, then compares the
/// explicit second-order formulas against the generated potentials.
pub fn bridge_check(
    fam: &PsiFamily,
    free: &FreeInput,
    states: &[(EqState<Rational>, NonEqFields<Rational>)],
) -> Result<BridgeReport, ThermoError> {
    let res = make_closure(fam, &free.clone().with_default_seeds(3), 3)?;
    let mat = PsiMaterial::from_closure(fam, &res)?;
    bridge_check_with(&mat, &res, states)
}

fn flat_sym(m: &Mat3<Rational>, out: &mut [Rational; 14]) {
    for (n, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        out[4 + n] = m[i][j].clone();
    }
}

/// Bridge comparison for an explicit material and closure.
pub fn bridge_check_with(
    mat: &PsiMaterial,
    res: &ClosureResult,
    states: &[(EqState<Rational>, NonEqFields<Rational>)],
) -> Result<BridgeReport, ThermoError> {
    let hp = res.h_prime.expand();
    let hk = res.h_prime_k.expand();
    let vars = CVar::all14();
    let hess = |p: &ConcretePoly, st: &TensorState| -> Result<Vec<Vec<Rational>>, ThermoError> {
        let mut h = vec![vec![Rational::zero(); 14]; 14];
        for a in 0..14 {
            let da = p.diff(vars[a]);
            for b in a..14 {
                let v = exact(da.diff(vars[b]).eval(st)?, "hessian")?;
                h[a][b] = v.clone();
                h[b][a] = v;
            }
        }
        Ok(h)
    };
    let mut reports = Vec::new();
    for (idx, (s, n0)) in states.iter().enumerate() {
        s.check()?;
        n0.check()?;
        let mismatch = |q: &str| ThermoError::BridgeMismatch {
            quantity: q.into(),
            state: idx,
        };
        let mut compared = Vec::new();
        let lam = s.lambda();
        let mu = mat.mu_eq(&s.rho, &lam)?;
        let st = TensorState::equilibrium(mu, lam);
        let pt = mat.point(s)?;

        // equilibrium moments and fluxes
        let (f, fk) = moments_at_rest(res, &st)?;
        let mut want = [(); 14].map(|_| Rational::zero());
        want[0] = s.rho.clone();
        let p_delta: Mat3<Rational> = std::array::from_fn(|i| std::array::from_fn(|j| kron::<Rational>(i, j) * &pt.p.v));
        flat_sym(&p_delta, &mut want);
        want[10] = int(2) * &s.rho * &pt.eps.v;
        if f != want {
            return Err(mismatch("equilibrium moments"));
        }
        for k in 0..3 {
            let mut wk = [(); 14].map(|_| Rational::zero());
            wk[1 + k] = pt.p.v.clone();
            wk[11 + k] = pt.phi001.v.clone();
            if fk[k] != wk {
                return Err(mismatch("equilibrium fluxes"));
            }
        }
        compared.push("equilibrium moments".to_string());
        compared.push("equilibrium fluxes".to_string());

        let mode = if derived_from_point(&pt, s).is_ok() {
            BridgeMode::Full
        } else if nonzero_p(&pt).is_ok() && heat_sector(&pt, s).is_ok() {
            BridgeMode::ShearHeat
        } else {
            BridgeMode::Equilibrium
        };
        let mut n = n0.clone();
        if mode != BridgeMode::Full {
            n.pi = Rational::zero();
        }

        // moment deviation and the linear response of the potentials
        let mut df = [(); 14].map(|_| Rational::zero());
        let dev_full: Mat3<Rational> = std::array::from_fn(|i| {
            std::array::from_fn(|j| kron::<Rational>(i, j) * &n.pi + &n.fdev[i][j])
        });
        flat_sym(&dev_full, &mut df);
        for i in 0..3 {
            df[11 + i] = int(2) * &n.q[i];
        }
        let h1: Rational = (0..14)
            .map(|a| pairing_weight(a) * st.value(vars[a]) * &df[a])
            .sum();
        if !h1.is_zero() {
            return Err(mismatch("first-order entropy"));
        }
        compared.push("h1".to_string());
        if mode == BridgeMode::Equilibrium {
            reports.push(BridgeStateReport { index: idx, mode, compared });
            continue;
        }

        let j = hess(&hp, &st)?;
        // δF^a = Σ_b w_b H_ab δs_b over stored components
        let jac: Vec<Vec<Rational>> = (0..14)
            .map(|a| (0..14).map(|b| pairing_weight(b) * &j[a][b]).collect())
            .collect();
        let (ds, unique) = solve_linear(jac, df.to_vec()).ok_or_else(|| mismatch("moment inversion"))?;
        if unique != (mode == BridgeMode::Full) {
            return Err(mismatch("singularity"));
        }
        let ds_mat: Mat3<Rational> = std::array::from_fn(|i| {
            std::array::from_fn(|k| ds[crate::galilean::flat_pair(i, k)].clone())
        });
        let tr = &ds_mat[0][0] + &ds_mat[1][1] + &ds_mat[2][2];
        let ds_dev: Mat3<Rational> = std::array::from_fn(|i| {
            std::array::from_fn(|k| &ds_mat[i][k] - kron::<Rational>(i, k) * &tr / int(3))
        });
        let (mu_dev, mu_i, lam_i) = shear_heat_multipliers(&pt, s, &n)?;
        if ds_dev != mu_dev {
            return Err(mismatch("deviatoric multipliers"));
        }
        if ds[1..4] != mu_i[..] || ds[11..14] != lam_i[..] {
            return Err(mismatch("vector multipliers"));
        }
        compared.push("first-order multipliers".to_string());
        if mode == BridgeMode::Full {
            let dev = first_order_from_point(&pt, s, &n)?;
            if ds[0] != dev.d_mu || ds[10] != dev.d_lam || tr != dev.mu_ll {
                return Err(mismatch("scalar multipliers"));
            }
        }

        let flux = if mode == BridgeMode::Full {
            flux_from_point(&pt, s, &n)?
        } else {
            shear_heat_flux(&pt, s, &n)?
        };
        for (k, poly) in hk.iter().enumerate() {
            let hkk = hess(poly, &st)?;
            let resp: Vec<Rational> = (0..14)
                .map(|a| (0..14).map(|b| pairing_weight(b) * &hkk[a][b] * &ds[b]).sum())
                .collect();
            for i in 0..3 {
                for jj in 0..3 {
                    if resp[crate::galilean::flat_pair(i, jj)] != flux.fkij[k][i][jj] {
                        return Err(mismatch("F^kij"));
                    }
                }
            }
            let g: Vec<Rational> = (0..3)
                .map(|i| kron::<Rational>(k, i) * &pt.phi001.v + &resp[11 + i])
                .collect();
            for i in 0..3 {
                let (a, b) = if mode == BridgeMode::Full {
                    (g[i].clone(), flux.gkill[k][i].clone())
                } else {
                    // isotropic part is not determined when D = 0
                    let off = |m: &Rational| if k == i { Rational::zero() } else { m.clone() };
                    (off(&g[i]), off(&flux.gkill[k][i]))
                };
                if a != b {
                    return Err(mismatch("G^kill"));
                }
            }
        }
        if mode != BridgeMode::Full {
            let gdiag = |k: usize, poly: &ConcretePoly| -> Result<Rational, ThermoError> {
                let hkk = hess(poly, &st)?;
                let r: Rational = (0..14).map(|b| pairing_weight(b) * &hkk[11 + k][b] * &ds[b]).sum();
                Ok(r)
            };
            let diag: Vec<Rational> = (0..3).map(|k| gdiag(k, &hk[k])).collect::<Result<_, _>>()?;
            let mean = (&diag[0] + &diag[1] + &diag[2]) / int(3);
            for k in 0..3 {
                let want_dev = &flux.gkill[k][k] - &pt.phi001.v
                    - (&flux.gkill[0][0] + &flux.gkill[1][1] + &flux.gkill[2][2] - int(3) * &pt.phi001.v) / int(3);
                if &diag[k] - &mean != want_dev {
                    return Err(mismatch("G^kill"));
                }
            }
        }
        compared.push("F^kij".to_string());
        compared.push("G^kill".to_string());

        let h2_path: Rational = (0..14).map(|a| pairing_weight(a) * &ds[a] * &df[a]).sum::<Rational>() / int(2);
        let h2_formula = if mode == BridgeMode::Full {
            entropy2_from_point(&pt, s, &n)?
        } else {
            shear_heat_entropy(&pt, s, &n)?
        };
        if h2_path != h2_formula {
            return Err(mismatch("h2"));
        }
        compared.push("h2".to_string());

        reports.push(BridgeStateReport { index: idx, mode, compared });
    }
    Ok(BridgeReport {
        order: res.order,
        states: reports,
    })
}

/// Gaussian elimination over the rationals. Returns one solution (free
/// variables set to zero) and whether it is unique; `None` if inconsistent.
pub fn solve_linear(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<(Vec<Rational>, bool)> {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m {
        let Some(pr) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, pr);
        b.swap(row, pr);
        let inv = a[row][col].recip();
        for c in col..m {
            a[row][c] = &a[row][c] * &inv;
        }
        b[row] = &b[row] * &inv;
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..m {
                    let t = &f * &a[row][c];
                    a[r][c] -= t;
                }
                let t = &f * &b[row];
                b[r] -= t;
            }
        }
        pivots.push(col);
        row += 1;
        if row == n {
            break;
        }
    }
    if (row..n).any(|r| !b[r].is_zero()) {
        return None;
    }
    let mut x = vec![Rational::zero(); m];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = b[r].clone();
    }
    Some((x, pivots.len() == m))
}
