//! Isotropic polynomials in the tensorial multipliers (μ_i, μ_ij, λ_i).
//!
//! An [`IsoScalarPoly`] stores one scalar coefficient per key (p, q, r); the
//! key stands for
//!
//! ```text
//! 1/(p! q! r!) · H_pqr(μ, λ) · δ^(i1..ip h1k1..hqkq j1..jr) μ_i1..μ_ip μ_h1k1..μ_hqkq λ_j1..λ_jr
//! ```
//!
//! where the symmetrized delta is normalized as the *average* over the
//! (2m−1)!! perfect matchings of its 2m indices. With this weight
//! δ^(ab δ^cd) μ_ab μ_cd = ((tr μ)² + 2 μ:μ)/3, so the coefficients of the
//! potential keep their conventional factorial prefactors.
//!
//! [`ConcretePoly`] is the explicit three-dimensional realization: a sparse map
//! from exponent vectors over the 12 independent tensor components to
//! [`ScalarFn`] coefficients. Variables are ordered μ_1..μ_3, μ_11, μ_12,
//! μ_13, μ_22, μ_23, μ_33, λ_1..λ_3. Off-diagonal μ_ij is stored once and
//! appears with its natural multiplicity (μ_12 and μ_21 are the same variable),
//! so evaluation matches full symmetric-matrix contraction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::rational::{double_factorial, factorial, int, rat, Rational};
use crate::scalar_field::{ScalarError, ScalarFn, SVar, Value};

/// Number of independent tensorial components.
pub const NV: usize = 12;

/// Exponent vector over the 12 tensorial components.
pub type Mono = [u8; NV];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("odd number of delta slots ({0})")]
    OddRank(usize),
    #[error("parity violation: key ({p},{q},{r}) is not allowed in a {kind} polynomial")]
    Parity {
        p: u32,
        q: u32,
        r: u32,
        kind: &'static str,
    },
    #[error("matrix is not symmetric")]
    NotSymmetric,
}

/// Index of μ_i in a [`Mono`].
pub const fn mu_vec_idx(i: usize) -> usize {
    i
}

/// Index of μ_ij (either order) in a [`Mono`].
pub const fn mu_mat_idx(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    3 + match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Index of λ_i in a [`Mono`].
pub const fn lam_vec_idx(i: usize) -> usize {
    9 + i
}

/// The six (i ≤ j) pairs in storage order.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Total tensorial order of a monomial (each component counts once).
pub fn mono_order(m: &Mono) -> u32 {
    m.iter().map(|&e| e as u32).sum()
}

fn var_name(idx: usize) -> String {
    match idx {
        0..=2 => format!("mu_{}", idx + 1),
        3..=8 => {
            let (i, j) = SYM_PAIRS[idx - 3];
            format!("mu_{}{}", i + 1, j + 1)
        }
        _ => format!("lam_{}", idx - 8),
    }
}

/// Human-readable monomial, e.g. `mu_1^2*mu_12*lam_3`; `1` for the empty monomial.
pub fn mono_to_string(m: &Mono) -> String {
    let parts: Vec<String> = m
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| {
            if e == 1 {
                var_name(i)
            } else {
                format!("{}^{}", var_name(i), e)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

/// A multiplier variable of the full 14-component set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CVar {
    Mu,
    Lam,
    MuVec(usize),
    MuMat(usize, usize),
    LamVec(usize),
}

impl CVar {
    /// Position in a [`Mono`] for tensorial variables.
    pub fn tensor_index(self) -> Option<usize> {
        match self {
            CVar::Mu | CVar::Lam => None,
            CVar::MuVec(i) => Some(mu_vec_idx(i)),
            CVar::MuMat(i, j) => Some(mu_mat_idx(i, j)),
            CVar::LamVec(i) => Some(lam_vec_idx(i)),
        }
    }

    /// The 14 variables in moment order: μ, μ_i, μ_ij (i ≤ j), λ, λ_i.
    pub fn all14() -> [CVar; 14] {
        let mut out = [CVar::Mu; 14];
        for i in 0..3 {
            out[1 + i] = CVar::MuVec(i);
            out[11 + i] = CVar::LamVec(i);
        }
        for (n, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            out[4 + n] = CVar::MuMat(i, j);
        }
        out[10] = CVar::Lam;
        out
    }
}

/// Values of all multipliers at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorState {
    pub mu: Rational,
    pub lam: Rational,
    pub mu_vec: [Rational; 3],
    pub mu_mat: [[Rational; 3]; 3],
    pub lam_vec: [Rational; 3],
}

impl TensorState {
    /// Equilibrium point: every tensorial multiplier zero.
    pub fn equilibrium(mu: Rational, lam: Rational) -> Self {
        let z = Rational::zero;
        TensorState {
            mu,
            lam,
            mu_vec: [z(), z(), z()],
            mu_mat: std::array::from_fn(|_| [z(), z(), z()]),
            lam_vec: [z(), z(), z()],
        }
    }

    pub fn check_symmetric(&self) -> Result<(), TensorError> {
        for i in 0..3 {
            for j in 0..3 {
                if self.mu_mat[i][j] != self.mu_mat[j][i] {
                    return Err(TensorError::NotSymmetric);
                }
            }
        }
        Ok(())
    }

    /// Value of the tensorial component stored at `idx`.
    pub fn tensor_value(&self, idx: usize) -> &Rational {
        match idx {
            0..=2 => &self.mu_vec[idx],
            3..=8 => {
                let (i, j) = SYM_PAIRS[idx - 3];
                &self.mu_mat[i][j]
            }
            _ => &self.lam_vec[idx - 9],
        }
    }

    pub fn value(&self, v: CVar) -> &Rational {
        match v {
            CVar::Mu => &self.mu,
            CVar::Lam => &self.lam,
            CVar::MuVec(i) => &self.mu_vec[i],
            CVar::MuMat(i, j) => &self.mu_mat[i][j],
            CVar::LamVec(i) => &self.lam_vec[i],
        }
    }

    pub fn set(&mut self, v: CVar, x: Rational) {
        match v {
            CVar::Mu => self.mu = x,
            CVar::Lam => self.lam = x,
            CVar::MuVec(i) => self.mu_vec[i] = x,
            CVar::MuMat(i, j) => {
                self.mu_mat[i][j] = x.clone();
                self.mu_mat[j][i] = x;
            }
            CVar::LamVec(i) => self.lam_vec[i] = x,
        }
    }
}

fn mono_value(m: &Mono, s: &TensorState) -> Rational {
    let mut acc = Rational::one();
    for (i, &e) in m.iter().enumerate() {
        if e > 0 {
            let v = s.tensor_value(i);
            for _ in 0..e {
                acc *= v;
            }
        }
    }
    acc
}

/// Polynomial in the 12 tensorial components with rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TensorPoly {
    terms: BTreeMap<Mono, Rational>,
}

impl TensorPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        let mut p = Self::zero();
        p.add_term([0; NV], Rational::one());
        p
    }

    pub fn var(idx: usize) -> Self {
        let mut m = [0u8; NV];
        m[idx] = 1;
        let mut p = Self::zero();
        p.add_term(m, Rational::one());
        p
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(m).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Rational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_scaled(&mut self, other: &TensorPoly, c: &Rational) {
        for (m, x) in &other.terms {
            self.add_term(*m, x * c);
        }
    }

    pub fn mul(&self, other: &TensorPoly) -> TensorPoly {
        let mut out = TensorPoly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let mut m = *m1;
                for i in 0..NV {
                    m[i] += m2[i];
                }
                out.add_term(m, c1 * c2);
            }
        }
        out
    }

    pub fn eval(&self, s: &TensorState) -> Rational {
        self.terms.iter().map(|(m, c)| c * mono_value(m, s)).sum()
    }
}

/// Polynomial in the tensorial components with [`ScalarFn`] coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConcretePoly {
    terms: BTreeMap<Mono, ScalarFn>,
}

impl ConcretePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `coeff · tp`.
    pub fn from_tensor(tp: &TensorPoly, coeff: &ScalarFn) -> Self {
        let mut out = Self::zero();
        out.add_tensor(tp, coeff);
        out
    }

    /// A scalar function times the empty monomial.
    pub fn constant(f: ScalarFn) -> Self {
        let mut out = Self::zero();
        out.add_term([0; NV], f);
        out
    }

    pub fn add_term(&mut self, m: Mono, f: ScalarFn) {
        if f.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(g) => {
                *g = g.add(&f);
                if g.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, f);
            }
        }
    }

    pub fn add_tensor(&mut self, tp: &TensorPoly, coeff: &ScalarFn) {
        if coeff.is_zero() {
            return;
        }
        for (m, c) in &tp.terms {
            self.add_term(*m, coeff.scale(c));
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

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &ScalarFn)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Mono) -> ScalarFn {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn add(&self, other: &ConcretePoly) -> ConcretePoly {
        let mut out = self.clone();
        for (m, f) in &other.terms {
            out.add_term(*m, f.clone());
        }
        out
    }

    pub fn sub(&self, other: &ConcretePoly) -> ConcretePoly {
        let mut out = self.clone();
        for (m, f) in &other.terms {
            out.add_term(*m, -f.clone());
        }
        out
    }

    pub fn add_assign(&mut self, other: &ConcretePoly) {
        for (m, f) in &other.terms {
            self.add_term(*m, f.clone());
        }
    }

    pub fn scale(&self, c: &Rational) -> ConcretePoly {
        let mut out = Self::zero();
        for (m, f) in &self.terms {
            out.add_term(*m, f.scale(c));
        }
        out
    }

    /// Multiplies every coefficient by a scalar function.
    pub fn mul_scalar(&self, g: &ScalarFn) -> ConcretePoly {
        let mut out = Self::zero();
        for (m, f) in &self.terms {
            out.add_term(*m, f.mul(g));
        }
        out
    }

    /// Multiplies by one tensorial component.
    pub fn mul_var(&self, idx: usize) -> ConcretePoly {
        ConcretePoly {
            terms: self
                .terms
                .iter()
                .map(|(m, f)| {
                    let mut m = *m;
                    m[idx] += 1;
                    (m, f.clone())
                })
                .collect(),
        }
    }

    /// Multiplies by the value of variable `v` (a scalar function for μ, λ).
    pub fn mul_cvar(&self, v: CVar) -> ConcretePoly {
        match v {
            CVar::Mu => self.mul_scalar(&ScalarFn::mu()),
            CVar::Lam => self.mul_scalar(&ScalarFn::lam()),
            other => self.mul_var(other.tensor_index().unwrap()),
        }
    }

    /// Exact partial derivative. Off-diagonal μ_ij follows the symmetric
    /// convention ∂μ_ab/∂μ_ij = δ_a^(i δ_b^j), i.e. half the naive derivative
    /// with respect to the single stored component.
    pub fn diff(&self, v: CVar) -> ConcretePoly {
        match v {
            CVar::Mu => self.map_coeffs(|f| f.diff(SVar::Mu)),
            CVar::Lam => self.map_coeffs(|f| f.diff(SVar::Lam)),
            _ => {
                let idx = v.tensor_index().unwrap();
                let half = matches!(v, CVar::MuMat(i, j) if i != j);
                let mut out = Self::zero();
                for (m, f) in &self.terms {
                    let e = m[idx];
                    if e == 0 {
                        continue;
                    }
                    let mut m2 = *m;
                    m2[idx] -= 1;
                    let c = if half { rat(e as i64, 2) } else { int(e as i64) };
                    out.add_term(m2, f.scale(&c));
                }
                out
            }
        }
    }

    fn map_coeffs(&self, op: impl Fn(&ScalarFn) -> ScalarFn) -> ConcretePoly {
        let mut out = Self::zero();
        for (m, f) in &self.terms {
            out.add_term(*m, op(f));
        }
        out
    }

    /// Keeps monomials of total tensorial order ≤ `max`.
    pub fn truncate(&self, max: u32) -> ConcretePoly {
        ConcretePoly {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| mono_order(m) <= max)
                .map(|(m, f)| (*m, f.clone()))
                .collect(),
        }
    }

    /// Homogeneous part of tensorial order exactly `n`.
    pub fn homogeneous(&self, n: u32) -> ConcretePoly {
        ConcretePoly {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| mono_order(m) == n)
                .map(|(m, f)| (*m, f.clone()))
                .collect(),
        }
    }

    /// First (in monomial order) nonzero term, used for failure reports.
    pub fn first_term(&self) -> Option<(&Mono, &ScalarFn)> {
        self.terms.iter().next()
    }

    /// Value at a full multiplier state.
    pub fn eval(&self, s: &TensorState) -> Result<Value, ScalarError> {
        let mut exact = Rational::zero();
        let mut float: Option<f64> = None;
        for (m, f) in &self.terms {
            let mv = mono_value(m, s);
            if mv.is_zero() {
                continue;
            }
            match f.eval(&s.mu, &s.lam)? {
                Value::Exact(x) => exact += x * mv,
                Value::Float(x) => {
                    *float.get_or_insert(0.0) += x * crate::rational::to_f64(&mv);
                }
            }
        }
        Ok(match float {
            None => Value::Exact(exact),
            Some(x) => Value::Float(x + crate::rational::to_f64(&exact)),
        })
    }
}

impl fmt::Display for ConcretePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", mono_to_string(m), c)?;
        }
        Ok(())
    }
}

/// Derivative of a concrete polynomial; free-function form of [`ConcretePoly::diff`].
pub fn cp_diff(p: &ConcretePoly, v: CVar) -> ConcretePoly {
    p.diff(v)
}

/// Key (p, q, r): numbers of μ_i, μ_ij and λ_i factors.
pub type IsoKey = (u32, u32, u32);

/// Total tensorial order p + q + r of a key.
pub fn key_order(k: &IsoKey) -> u32 {
    k.0 + k.1 + k.2
}

/// Isotropic scalar polynomial; every key has p + r even.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IsoScalarPoly {
    terms: BTreeMap<IsoKey, ScalarFn>,
}

/// Isotropic vector polynomial with one free index; every key has p + r odd.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IsoVectorPoly {
    terms: BTreeMap<IsoKey, ScalarFn>,
}

macro_rules! iso_common {
    ($t:ty, $parity:expr, $kind:expr) => {
        impl $t {
            pub fn new() -> Self {
                Self::default()
            }

            /// Adds `f` to the coefficient of `key`, rejecting keys of the wrong parity.
            pub fn insert(&mut self, key: IsoKey, f: ScalarFn) -> Result<(), TensorError> {
                let (p, q, r) = key;
                if (p + r) % 2 != $parity {
                    return Err(TensorError::Parity { p, q, r, kind: $kind });
                }
                if f.is_zero() {
                    return Ok(());
                }
                let e = self.terms.entry(key).or_default();
                *e = e.add(&f);
                if e.is_zero() {
                    self.terms.remove(&key);
                }
                Ok(())
            }

            pub fn get(&self, key: IsoKey) -> ScalarFn {
                self.terms.get(&key).cloned().unwrap_or_default()
            }

            pub fn terms(&self) -> impl Iterator<Item = (&IsoKey, &ScalarFn)> {
                self.terms.iter()
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

            /// Coefficient-wise sum.
            pub fn add(&self, other: &Self) -> Self {
                let mut out = self.clone();
                for (k, f) in &other.terms {
                    out.insert(*k, f.clone()).expect("parity already checked");
                }
                out
            }

            /// Coefficient-wise ∂/∂μ or ∂/∂λ.
            pub fn diff_scalar(&self, v: SVar) -> Self {
                let mut out = Self::default();
                for (k, f) in &self.terms {
                    out.insert(*k, f.diff(v)).expect("parity already checked");
                }
                out
            }

            /// Drops keys of order above `n`.
            pub fn truncate(&self, n: u32) -> Self {
                Self {
                    terms: self
                        .terms
                        .iter()
                        .filter(|(k, _)| key_order(k) <= n)
                        .map(|(k, f)| (*k, f.clone()))
                        .collect(),
                }
            }
        }
    };
}

iso_common!(IsoScalarPoly, 0, "scalar");
iso_common!(IsoVectorPoly, 1, "vector");

impl IsoScalarPoly {
    pub fn expand(&self) -> ConcretePoly {
        let mut out = ConcretePoly::zero();
        for (&(p, q, r), f) in &self.terms {
            out.add_tensor(&basis_poly(p, q, r, None), f);
        }
        out
    }
}

impl IsoVectorPoly {
    /// The three components k = 1, 2, 3.
    pub fn expand(&self) -> [ConcretePoly; 3] {
        std::array::from_fn(|k| {
            let mut out = ConcretePoly::zero();
            for (&(p, q, r), f) in &self.terms {
                out.add_tensor(&basis_poly(p, q, r, Some(k)), f);
            }
            out
        })
    }
}

/// Structural ∂H/∂μ_k: key (p, q, r) with p ≥ 1 becomes vector key (p−1, q, r)
/// with the same coefficient.
pub fn iso_dmu_k(h: &IsoScalarPoly) -> IsoVectorPoly {
    let mut out = IsoVectorPoly::new();
    for (&(p, q, r), f) in h.terms() {
        if p >= 1 {
            out.insert((p - 1, q, r), f.clone()).expect("parity flips");
        }
    }
    out
}

/// Structural ∂H/∂μ (coefficient-wise).
pub fn iso_dmu(h: &IsoScalarPoly) -> IsoScalarPoly {
    h.diff_scalar(SVar::Mu)
}

/// Expands an isotropic scalar polynomial.
pub fn expand_scalar(h: &IsoScalarPoly) -> ConcretePoly {
    h.expand()
}

/// Expands an isotropic vector polynomial into its three components.
pub fn expand_vector(h: &IsoVectorPoly) -> [ConcretePoly; 3] {
    h.expand()
}

/// All perfect matchings of `2m` slots, in lexicographic order.
///
/// Each matching lists its pairs `(a, b)` with `a < b`, sorted by `a`.
pub fn pairings(m: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(free: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let a = free.remove(0);
        for idx in 0..free.len() {
            let b = free.remove(idx);
            cur.push((a, b));
            rec(free, cur, out);
            cur.pop();
            free.insert(idx, b);
        }
        free.insert(0, a);
    }
    let mut out = Vec::new();
    let mut free: Vec<usize> = (0..2 * m).collect();
    rec(&mut free, &mut Vec::new(), &mut out);
    out
}

/// One connected piece of a contraction graph.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    /// Vector `start` · M_{j1} ⋯ M_{jn} · vector `end`; the flag marks a
    /// matrix entered through its second leg (use the transpose).
    Path {
        start: usize,
        end: usize,
        mats: Vec<(usize, bool)>,
    },
    /// tr(M_{j1} ⋯ M_{jn}).
    Cycle { mats: Vec<(usize, bool)> },
}

/// Decomposes a pairing of `nvec` vector slots followed by `nmat` matrices
/// (two consecutive slots each) into paths and cycles.
fn pieces(nvec: usize, nmat: usize, pairing: &[(usize, usize)]) -> Vec<Piece> {
    let nslots = nvec + 2 * nmat;
    let mut partner = vec![0usize; nslots];
    for &(a, b) in pairing {
        partner[a] = b;
        partner[b] = a;
    }
    let mut seen_vec = vec![false; nvec];
    let mut seen_mat = vec![false; nmat];
    let mut out = Vec::new();
    // Walks from a slot through matrices until a vector slot or `stop_mat` is reached.
    let walk = |mut slot: usize, seen_mat: &mut Vec<bool>, mats: &mut Vec<(usize, bool)>| -> usize {
        loop {
            let next = partner[slot];
            if next < nvec {
                return next;
            }
            let j = (next - nvec) / 2;
            if seen_mat[j] {
                return usize::MAX;
            }
            let leg = (next - nvec) % 2;
            seen_mat[j] = true;
            mats.push((j, leg == 1));
            slot = nvec + 2 * j + (1 - leg);
        }
    };
    for v in 0..nvec {
        if seen_vec[v] {
            continue;
        }
        seen_vec[v] = true;
        let mut mats = Vec::new();
        let end = walk(v, &mut seen_mat, &mut mats);
        seen_vec[end] = true;
        out.push(Piece::Path { start: v, end, mats });
    }
    for j in 0..nmat {
        if seen_mat[j] {
            continue;
        }
        seen_mat[j] = true;
        let mut mats = vec![(j, false)];
        let end = walk(nvec + 2 * j + 1, &mut seen_mat, &mut mats);
        debug_assert_eq!(end, usize::MAX);
        out.push(Piece::Cycle { mats });
    }
    out
}

/// A slot-object for [`sym_delta_contract`].
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    /// Occupies one delta index.
    Vector([Rational; 3]),
    /// Occupies two consecutive delta indices (row, column).
    Matrix([[Rational; 3]; 3]),
}

fn mat_vec(m: &[[Rational; 3]; 3], v: &[Rational; 3], transpose: bool) -> [Rational; 3] {
    std::array::from_fn(|a| {
        (0..3)
            .map(|b| if transpose { &m[b][a] * &v[b] } else { &m[a][b] * &v[b] })
            .sum()
    })
}

/// Full contraction of the normalized symmetrized delta with the given slots.
///
/// The result is the average over all (2m−1)!! matchings of the contracted
/// product; each matching is evaluated by walking its contraction graph.
pub fn sym_delta_contract(slots: &[Slot]) -> Result<Rational, TensorError> {
    let mut vecs: Vec<&[Rational; 3]> = Vec::new();
    let mut mats: Vec<&[[Rational; 3]; 3]> = Vec::new();
    for s in slots {
        match s {
            Slot::Vector(v) => vecs.push(v),
            Slot::Matrix(m) => mats.push(m),
        }
    }
    let rank = vecs.len() + 2 * mats.len();
    if rank % 2 == 1 {
        return Err(TensorError::OddRank(rank));
    }
    // Slot order in `slots` is irrelevant for a fully symmetric delta, so the
    // vectors-then-matrices layout used by `pieces` loses nothing.
    let all = pairings(rank / 2);
    let mut total = Rational::zero();
    for pr in &all {
        let mut prod = Rational::one();
        for piece in pieces(vecs.len(), mats.len(), pr) {
            let val = match piece {
                Piece::Path { start, end, mats: path } => {
                    let mut w: [Rational; 3] = vecs[end].clone();
                    for &(j, tr) in path.iter().rev() {
                        // entering leg 0 means index a of M_ab faces the start side
                        w = mat_vec(mats[j], &w, tr);
                    }
                    (0..3).map(|a| &vecs[start][a] * &w[a]).sum::<Rational>()
                }
                Piece::Cycle { mats: cyc } => {
                    let mut acc = Rational::zero();
                    for a in 0..3 {
                        let mut e: [Rational; 3] = std::array::from_fn(|b| {
                            if a == b {
                                Rational::one()
                            } else {
                                Rational::zero()
                            }
                        });
                        for &(j, tr) in cyc.iter().rev() {
                            e = mat_vec(mats[j], &e, tr);
                        }
                        acc += &e[a];
                    }
                    acc
                }
            };
            prod *= val;
            if prod.is_zero() {
                break;
            }
        }
        total += prod;
    }
    Ok(total / int(all.len() as i64))
}

/// Vector categories in the symbolic expansion.
const CAT_MU: u8 = 0;
const CAT_LAM: u8 = 1;
const CAT_E: u8 = 2;

type BasisKey = (u32, u32, u32, Option<usize>);

fn basis_cache() -> &'static Mutex<HashMap<BasisKey, Arc<TensorPoly>>> {
    static CACHE: OnceLock<Mutex<HashMap<BasisKey, Arc<TensorPoly>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Expanded `1/(p!q!r!) δ^(...) μ^p M^q λ^r` (with free index `k` for vectors).
pub fn basis_poly(p: u32, q: u32, r: u32, k: Option<usize>) -> Arc<TensorPoly> {
    let key = (p, q, r, k);
    if let Some(hit) = basis_cache().lock().unwrap().get(&key) {
        return hit.clone();
    }
    let poly = Arc::new(compute_basis(p, q, r, k));
    basis_cache().lock().unwrap().insert(key, poly.clone());
    poly
}

fn compute_basis(p: u32, q: u32, r: u32, k: Option<usize>) -> TensorPoly {
    let mut cats: Vec<u8> = Vec::new();
    if k.is_some() {
        cats.push(CAT_E);
    }
    cats.extend(std::iter::repeat(CAT_MU).take(p as usize));
    cats.extend(std::iter::repeat(CAT_LAM).take(r as usize));
    let nvec = cats.len();
    let nmat = q as usize;
    let rank = nvec + 2 * nmat;
    assert!(rank % 2 == 0, "odd rank in basis expansion");

    // Group matchings by the multiset of (path ends, length) and cycle lengths.
    let mut sigs: BTreeMap<(Vec<(u8, u8, u32)>, Vec<u32>), i64> = BTreeMap::new();
    let all = pairings(rank / 2);
    for pr in &all {
        let mut paths = Vec::new();
        let mut cycles = Vec::new();
        for piece in pieces(nvec, nmat, pr) {
            match piece {
                Piece::Path { start, end, mats } => {
                    let (a, b) = (cats[start].min(cats[end]), cats[start].max(cats[end]));
                    paths.push((a, b, mats.len() as u32));
                }
                Piece::Cycle { mats } => cycles.push(mats.len() as u32),
            }
        }
        paths.sort();
        cycles.sort();
        *sigs.entry((paths, cycles)).or_insert(0) += 1;
    }

    let sym = SymbolicPieces::new(q, k);
    let mut out = TensorPoly::zero();
    for ((paths, cycles), count) in sigs {
        let mut prod = TensorPoly::one();
        for (a, b, len) in paths {
            prod = prod.mul(&sym.path(a, b, len));
        }
        for len in cycles {
            prod = prod.mul(&sym.trace(len));
        }
        out.add_scaled(&prod, &int(count));
    }
    let norm = int(all.len() as i64) * factorial(p) * factorial(q) * factorial(r);
    let mut scaled = TensorPoly::zero();
    scaled.add_scaled(&out, &norm.recip());
    scaled
}

/// Symbolic vectors and matrix powers for one basis expansion.
struct SymbolicPieces {
    /// M^n for n = 0..=q.
    mpow: Vec<[[TensorPoly; 3]; 3]>,
    k: Option<usize>,
}

impl SymbolicPieces {
    fn new(q: u32, k: Option<usize>) -> Self {
        let m: [[TensorPoly; 3]; 3] =
            std::array::from_fn(|i| std::array::from_fn(|j| TensorPoly::var(mu_mat_idx(i, j))));
        let ident: [[TensorPoly; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| if i == j { TensorPoly::one() } else { TensorPoly::zero() })
        });
        let mut mpow = vec![ident];
        for n in 1..=q as usize {
            let prev = &mpow[n - 1];
            let next: [[TensorPoly; 3]; 3] = std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let mut acc = TensorPoly::zero();
                    for l in 0..3 {
                        acc.add_scaled(&prev[i][l].mul(&m[l][j]), &Rational::one());
                    }
                    acc
                })
            });
            mpow.push(next);
        }
        SymbolicPieces { mpow, k }
    }

    fn vector(&self, cat: u8) -> [TensorPoly; 3] {
        std::array::from_fn(|i| match cat {
            CAT_MU => TensorPoly::var(mu_vec_idx(i)),
            CAT_LAM => TensorPoly::var(lam_vec_idx(i)),
            _ => {
                if Some(i) == self.k {
                    TensorPoly::one()
                } else {
                    TensorPoly::zero()
                }
            }
        })
    }

    fn path(&self, a: u8, b: u8, len: u32) -> TensorPoly {
        let u = self.vector(a);
        let w = self.vector(b);
        let mp = &self.mpow[len as usize];
        let mut acc = TensorPoly::zero();
        for i in 0..3 {
            if u[i].is_zero() {
                continue;
            }
            for j in 0..3 {
                if w[j].is_zero() || mp[i][j].is_zero() {
                    continue;
                }
                acc.add_scaled(&u[i].mul(&mp[i][j]).mul(&w[j]), &Rational::one());
            }
        }
        acc
    }

    fn trace(&self, len: u32) -> TensorPoly {
        let mp = &self.mpow[len as usize];
        let mut acc = TensorPoly::zero();
        for i in 0..3 {
            acc.add_scaled(&mp[i][i], &Rational::one());
        }
        acc
    }
}

/// Number of matchings of 2m slots, (2m−1)!!.
pub fn pairing_count(m: usize) -> Rational {
    double_factorial(2 * m as i64 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_field::sf;

    fn v3(a: i64, b: i64, c: i64) -> [Rational; 3] {
        [int(a), int(b), int(c)]
    }

    #[test]
    fn pairing_counts() {
        assert_eq!(pairings(0), vec![Vec::<(usize, usize)>::new()]);
        assert_eq!(pairings(2).len(), 3);
        assert_eq!(pairings(3).len(), 15);
        for m in 0..=6 {
            assert_eq!(int(pairings(m).len() as i64), pairing_count(m));
        }
    }

    #[test]
    fn pairings_are_perfect_and_distinct() {
        let all = pairings(4);
        let mut seen = std::collections::BTreeSet::new();
        for pr in &all {
            let mut cover = [false; 8];
            for &(a, b) in pr {
                assert!(a < b);
                assert!(!cover[a] && !cover[b]);
                cover[a] = true;
                cover[b] = true;
            }
            assert!(cover.iter().all(|&c| c));
            assert!(seen.insert(pr.clone()));
        }
    }

    #[test]
    fn contract_four_equal_vectors() {
        let l = v3(1, -2, 3);
        let slots = vec![Slot::Vector(l.clone()); 4];
        let ll: Rational = l.iter().map(|x| x * x).sum();
        assert_eq!(sym_delta_contract(&slots).unwrap(), &ll * &ll);
    }

    #[test]
    fn contract_two_matrices() {
        let m = [v3(1, 2, 0), v3(2, -1, 4), v3(0, 4, 3)];
        let slots = vec![Slot::Matrix(m.clone()), Slot::Matrix(m.clone())];
        let tr: Rational = (0..3).map(|i| m[i][i].clone()).sum();
        let mm: Rational = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| &m[i][j] * &m[i][j])
            .sum();
        let want = (&tr * &tr + int(2) * mm) / int(3);
        assert_eq!(sym_delta_contract(&slots).unwrap(), want);
    }

    #[test]
    fn contract_delta_q_component() {
        // δ^(ij q^k) at (1,1,1) with q = e1: basis vectors fill the free slots.
        let e1 = v3(1, 0, 0);
        let slots = vec![Slot::Vector(e1.clone()), Slot::Vector(e1.clone()), Slot::Vector(e1)];
        assert_eq!(sym_delta_contract(&slots), Err(TensorError::OddRank(3)));
        let q = v3(1, 0, 0);
        let s4 = vec![
            Slot::Vector(v3(1, 0, 0)),
            Slot::Vector(v3(1, 0, 0)),
            Slot::Vector(v3(1, 0, 0)),
            Slot::Vector(q),
        ];
        assert_eq!(sym_delta_contract(&s4).unwrap(), int(1));
    }

    #[test]
    fn expand_examples() {
        let mut h = IsoScalarPoly::new();
        h.insert((0, 1, 0), ScalarFn::one()).unwrap();
        let e = h.expand();
        assert_eq!(e.len(), 3);
        for i in 0..3 {
            let mut m = [0u8; NV];
            m[mu_mat_idx(i, i)] = 1;
            assert_eq!(e.coeff(&m), ScalarFn::one());
        }

        let mut h = IsoScalarPoly::new();
        h.insert((2, 0, 0), ScalarFn::one()).unwrap();
        let e = h.expand();
        for i in 0..3 {
            let mut m = [0u8; NV];
            m[mu_vec_idx(i)] = 2;
            assert_eq!(e.coeff(&m), sf("1/2"));
        }
        assert_eq!(e.len(), 3);

        let c = sf("lam^-3 + mu");
        let mut h = IsoScalarPoly::new();
        h.insert((1, 0, 1), c.clone()).unwrap();
        let e = h.expand();
        assert_eq!(e.len(), 3);
        for i in 0..3 {
            let mut m = [0u8; NV];
            m[mu_vec_idx(i)] = 1;
            m[lam_vec_idx(i)] = 1;
            assert_eq!(e.coeff(&m), c);
        }
    }

    #[test]
    fn parity_is_enforced() {
        let mut s = IsoScalarPoly::new();
        assert!(s.insert((1, 0, 0), ScalarFn::one()).is_err());
        assert!(s.insert((1, 2, 1), ScalarFn::one()).is_ok());
        let mut v = IsoVectorPoly::new();
        assert!(v.insert((0, 0, 0), ScalarFn::one()).is_err());
        assert!(v.insert((0, 1, 1), ScalarFn::one()).is_ok());
    }

    #[test]
    fn diff_examples() {
        let mut h = IsoScalarPoly::new();
        h.insert((0, 1, 0), ScalarFn::one()).unwrap();
        let e = h.expand();
        assert_eq!(e.diff(CVar::MuMat(0, 0)), ConcretePoly::constant(ScalarFn::one()));
        assert!(e.diff(CVar::MuMat(0, 1)).is_zero());

        let c = sf("lam^-2");
        let mut h = IsoScalarPoly::new();
        h.insert((1, 0, 1), c.clone()).unwrap();
        let e = h.expand();
        let mut m = [0u8; NV];
        m[mu_vec_idx(0)] = 1;
        m[lam_vec_idx(0)] = 1;
        assert_eq!(e.diff(CVar::Lam).coeff(&m), c.diff(SVar::Lam));
    }

    #[test]
    fn off_diagonal_derivative_is_half() {
        // μ:μ contains 2 μ_12², so ∂/∂μ_12 gives 2 μ_12 under the symmetric convention.
        let mut m = [0u8; NV];
        m[mu_mat_idx(0, 1)] = 2;
        let mut p = ConcretePoly::zero();
        p.add_term(m, sf("2"));
        let d = p.diff(CVar::MuMat(1, 0));
        let mut m1 = [0u8; NV];
        m1[mu_mat_idx(0, 1)] = 1;
        assert_eq!(d.coeff(&m1), sf("2"));
    }

    #[test]
    fn dmu_k_examples() {
        let c = sf("lam^-1");
        let mut h = IsoScalarPoly::new();
        h.insert((1, 0, 1), c.clone()).unwrap();
        h.insert((0, 2, 2), sf("mu")).unwrap();
        let v = iso_dmu_k(&h);
        assert_eq!(v.len(), 1);
        assert_eq!(v.get((0, 0, 1)), c);

        let mut h = IsoScalarPoly::new();
        h.insert((0, 3, 0), sf("mu")).unwrap();
        assert!(iso_dmu_k(&h).is_zero());
    }

    #[test]
    fn mono_labels() {
        let mut m = [0u8; NV];
        m[0] = 2;
        m[mu_mat_idx(1, 0)] = 1;
        m[lam_vec_idx(2)] = 1;
        assert_eq!(mono_to_string(&m), "mu_1^2*mu_12*lam_3");
        assert_eq!(mono_to_string(&[0; NV]), "1");
    }
}
