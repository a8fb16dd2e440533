//! Arbitrary-order generating function H = H₁ + ΔH and its verification.
//!
//! H₁ is the particular solution built from a ψ family (∂ψ_{n+1}/∂μ = ψ_n).
//! ΔH is expanded as Σ μ^s/s! H_{p,q,r,s}(λ); every coefficient reduces to the
//! free functions H_{1,q,r,0}, which are obtained from the seeds H_{1,0,r,0}
//! by integrating upward in q.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::iso_tensor::{
    iso_dmu, iso_dmu_k, key_order, mono_to_string, CVar, ConcretePoly, IsoScalarPoly,
    IsoVectorPoly, TensorError, TensorState,
};
use crate::rational::{double_factorial, factorial, int, rat, Rational};
use crate::scalar_field::{ScalarError, ScalarFn, SVar, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosureError {
    #[error("psi family has depth {have}, order {order} needs {need}")]
    FamilyTooShallow { have: usize, need: usize, order: u32 },
    #[error("missing seed H[1,0,{0},0]")]
    MissingSeed(u32),
    #[error("seed H[1,0,{0},0] depends on mu")]
    SeedNotLambdaOnly(u32),
    #[error("coefficient override H[{0},{1},{2},{3}] has p + r odd")]
    BadOverride(u32, u32, u32, u32),
    #[error("inexact value for {0}: log terms need an exact evaluation point")]
    Inexact(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// ψ_0 … ψ_M with ∂ψ_{n+1}/∂μ = ψ_n.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsiFamily {
    pub psi: Vec<ScalarFn>,
}

impl PsiFamily {
    /// Number of μ-integrations performed (M).
    pub fn depth(&self) -> usize {
        self.psi.len().saturating_sub(1)
    }

    pub fn get(&self, n: usize) -> Option<&ScalarFn> {
        self.psi.get(n)
    }

    /// Family from ψ₁ itself: ψ_0 = ∂ψ₁/∂μ, higher members by integration with
    /// `consts[k]` added to ψ_{k+2}.
    pub fn from_psi1(psi1: &ScalarFn, consts: &[ScalarFn], m: usize) -> PsiFamily {
        let mut psi = vec![psi1.diff(SVar::Mu), psi1.clone()];
        for n in 1..m {
            let c = consts.get(n - 1).cloned().unwrap_or_default();
            let next = psi[n].integrate(SVar::Mu).add(&c);
            psi.push(next);
        }
        psi.truncate(m + 1);
        PsiFamily { psi }
    }
}

/// ψ_0 = h_eq; ψ_{n+1} = ∫ψ_n dμ + consts[n]. Missing constants are zero.
pub fn build_psi_family(h_eq: &ScalarFn, consts: &[ScalarFn], m: usize) -> PsiFamily {
    let mut psi = vec![h_eq.clone()];
    for n in 0..m {
        let c = consts.get(n).cloned().unwrap_or_default();
        let next = psi[n].integrate(SVar::Mu).add(&c);
        psi.push(next);
    }
    PsiFamily { psi }
}

/// Family depth needed by [`build_H1`] at order `n`.
pub fn family_depth_needed(n: u32) -> usize {
    (n / 2) as usize
}

/// Particular solution H₁ truncated to order `n`.
#[allow(non_snake_case)]
pub fn build_H1(fam: &PsiFamily, n: u32) -> Result<IsoScalarPoly, ClosureError> {
    let need = family_depth_needed(n);
    if fam.psi.is_empty() || fam.depth() < need {
        return Err(ClosureError::FamilyTooShallow {
            have: fam.depth(),
            need,
            order: n,
        });
    }
    let mut out = IsoScalarPoly::new();
    for p in 0..=n {
        for q in 0..=(n - p) {
            for r in 0..=(n - p - q) {
                if (p + r) % 2 == 1 {
                    continue;
                }
                let half = (p + r) / 2;
                let m = p + 2 * q + r + 1;
                let weight = double_factorial(m as i64) / int(m as i64);
                let inner = ScalarFn::minus_half_inv_lam_pow(q + half).mul(&fam.psi[half as usize]);
                let coeff = inner.diff_n(SVar::Mu, p).diff_n(SVar::Lam, r).scale(&weight);
                out.insert((p, q, r), coeff)?;
            }
        }
    }
    Ok(out)
}

/// Free data of ΔH: seeds H_{1,0,r,0}(λ) for odd r, integration constants of
/// the upward recursion keyed by (Q, R), and optional explicit overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreeInput {
    pub h_seed: BTreeMap<u32, ScalarFn>,
    pub int_consts: BTreeMap<(u32, u32), Rational>,
    /// Replaces individual table entries after solving; used to build
    /// deliberately inconsistent tables.
    pub overrides: BTreeMap<(u32, u32, u32, u32), ScalarFn>,
}

impl FreeInput {
    /// Every needed seed present and zero.
    pub fn zero(n: u32) -> FreeInput {
        let mut f = FreeInput::default();
        for r in needed_seeds(n) {
            f.h_seed.insert(r, ScalarFn::zero());
        }
        f
    }

    /// Fills absent needed seeds with zero.
    pub fn with_default_seeds(mut self, n: u32) -> FreeInput {
        for r in needed_seeds(n) {
            self.h_seed.entry(r).or_default();
        }
        self
    }
}

/// Odd r whose seed H_{1,0,r,0} enters a table of order `n` (1 + r ≤ n).
pub fn needed_seeds(n: u32) -> Vec<u32> {
    (1..n).step_by(2).collect()
}

/// Solved coefficients H_{p,q,r,s}(λ) up to order N.
///
/// Only the free functions H_{1,q,r,0} are stored; every other entry is
/// produced on demand by the reduction rules, so the zero rules hold by
/// construction unless an override is present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientTable {
    pub order: u32,
    base: BTreeMap<(u32, u32), ScalarFn>,
    overrides: BTreeMap<(u32, u32, u32, u32), ScalarFn>,
}

impl CoefficientTable {
    /// H_{1,q,r,0} as solved (ignores overrides).
    pub fn base(&self, q: u32, r: u32) -> ScalarFn {
        self.base.get(&(q, r)).cloned().unwrap_or_default()
    }

    pub fn base_entries(&self) -> impl Iterator<Item = (&(u32, u32), &ScalarFn)> {
        self.base.iter()
    }

    pub fn overrides(&self) -> impl Iterator<Item = (&(u32, u32, u32, u32), &ScalarFn)> {
        self.overrides.iter()
    }

    /// Sets one entry explicitly.
    pub fn set(&mut self, p: u32, q: u32, r: u32, s: u32, f: ScalarFn) -> Result<(), ClosureError> {
        if (p + r) % 2 == 1 {
            return Err(ClosureError::BadOverride(p, q, r, s));
        }
        self.overrides.insert((p, q, r, s), f);
        Ok(())
    }

    /// H_{p,q,r,s}.
    pub fn get(&self, p: u32, q: u32, r: u32, s: u32) -> ScalarFn {
        if let Some(f) = self.overrides.get(&(p, q, r, s)) {
            return f.clone();
        }
        if (p + r) % 2 == 1 {
            return ScalarFn::zero();
        }
        if p >= 2 {
            return if p % 2 == 0 {
                self.get(0, q + p / 2, r, s + p / 2)
            } else {
                self.get(1, q + (p - 1) / 2, r, s + (p - 1) / 2)
            };
        }
        if p == 0 {
            if s == 0 || r == 0 {
                return ScalarFn::zero();
            }
            let t = s - 1;
            if r >= 2 && 2 * t + 2 <= r {
                return self.base(q + t, r - 2 * t - 1).diff_n(SVar::Lam, 2 * t + 1);
            }
            return ScalarFn::zero();
        }
        if 2 * s < r {
            self.base(q + s, r - 2 * s).diff_n(SVar::Lam, 2 * s)
        } else {
            ScalarFn::zero()
        }
    }

    /// Upper bound (exclusive) on s for nonzero entries with p+q+r ≤ order.
    pub fn s_bound(&self) -> u32 {
        let over = self.overrides.keys().map(|k| k.3 + 1).max().unwrap_or(0);
        (self.order + 2).max(over)
    }
}

/// Solves the coefficient recursions to order `n`.
pub fn solve_delta_coeffs(free: &FreeInput, n: u32) -> Result<CoefficientTable, ClosureError> {
    let mut base = BTreeMap::new();
    for r in needed_seeds(n) {
        let seed = free.h_seed.get(&r).ok_or(ClosureError::MissingSeed(r))?;
        if !seed.is_mu_free() {
            return Err(ClosureError::SeedNotLambdaOnly(r));
        }
        base.insert((0, r), seed.clone());
        let big_r = r + 1;
        let mut q = 0;
        while 1 + (q + 1) + r <= n {
            let prev: &ScalarFn = &base[&(q, r)];
            // ∂λ(λ^R X) = −((2Q+R+1)/2) λ^{R−1} ∂λ H_{1,Q,R−1,0}
            let rhs = prev
                .diff(SVar::Lam)
                .shift(0, big_r as i32 - 1)
                .scale(&rat(-((2 * q + big_r + 1) as i64), 2));
            let c = free
                .int_consts
                .get(&(q, big_r))
                .cloned()
                .unwrap_or_else(Rational::zero);
            let next = rhs
                .integrate(SVar::Lam)
                .add(&ScalarFn::constant(c))
                .shift(0, -(big_r as i32));
            base.insert((q + 1, r), next);
            q += 1;
        }
    }
    let mut table = CoefficientTable {
        order: n,
        base,
        overrides: BTreeMap::new(),
    };
    for (&(p, q, r, s), f) in &free.overrides {
        table.set(p, q, r, s, f.clone())?;
    }
    Ok(table)
}

/// ΔH with H_{p,q,r}(μ, λ) = Σ_s μ^s/s! H_{p,q,r,s}(λ) for p + q + r ≤ N.
#[allow(non_snake_case)]
pub fn assemble_delta_H(table: &CoefficientTable, n: u32) -> IsoScalarPoly {
    let mut out = IsoScalarPoly::new();
    let sb = table.s_bound();
    for p in 0..=n {
        for q in 0..=(n - p) {
            for r in 0..=(n - p - q) {
                if (p + r) % 2 == 1 {
                    continue;
                }
                let mut coeff = ScalarFn::zero();
                for s in 0..sb {
                    let h = table.get(p, q, r, s);
                    if !h.is_zero() {
                        coeff = coeff.add(&h.shift(s, 0).scale(&factorial(s).recip()));
                    }
                }
                out.insert((p, q, r), coeff).expect("parity checked");
            }
        }
    }
    out
}

/// Inputs echoed alongside a closure.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Provenance {
    pub psi: Vec<String>,
    pub seeds: BTreeMap<String, String>,
    pub int_consts: BTreeMap<String, String>,
    pub overrides: BTreeMap<String, String>,
}

/// Generated potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureResult {
    pub h: IsoScalarPoly,
    pub h1: IsoScalarPoly,
    pub delta_h: IsoScalarPoly,
    pub h_prime: IsoScalarPoly,
    pub h_prime_k: IsoVectorPoly,
    pub table: CoefficientTable,
    pub order: u32,
    pub provenance: Provenance,
}

impl ClosureResult {
    /// Closure from an explicit H with no ΔH split.
    pub fn from_h(h: IsoScalarPoly, n: u32) -> ClosureResult {
        let h = h.truncate(n);
        ClosureResult {
            h_prime: iso_dmu(&h),
            h_prime_k: iso_dmu_k(&h),
            h1: h.clone(),
            delta_h: IsoScalarPoly::new(),
            h,
            table: CoefficientTable {
                order: n,
                ..Default::default()
            },
            order: n,
            provenance: Provenance::default(),
        }
    }
}

/// H = H₁ + ΔH with h′ = ∂H/∂μ and h′^k = ∂H/∂μ_k.
pub fn make_closure(fam: &PsiFamily, free: &FreeInput, n: u32) -> Result<ClosureResult, ClosureError> {
    let h1 = build_H1(fam, n)?;
    let table = solve_delta_coeffs(free, n)?;
    let delta_h = assemble_delta_H(&table, n);
    let h = h1.add(&delta_h);
    let provenance = Provenance {
        psi: fam.psi.iter().map(|f| f.to_string()).collect(),
        seeds: free
            .h_seed
            .iter()
            .map(|(r, f)| (format!("H[1,0,{r},0]"), f.to_string()))
            .collect(),
        int_consts: free
            .int_consts
            .iter()
            .map(|((q, r), c)| (format!("const[{q},{r}]"), crate::rational::fmt_rat(c)))
            .collect(),
        overrides: free
            .overrides
            .iter()
            .map(|((p, q, r, s), f)| (format!("H[{p},{q},{r},{s}]"), f.to_string()))
            .collect(),
    };
    Ok(ClosureResult {
        h_prime: iso_dmu(&h),
        h_prime_k: iso_dmu_k(&h),
        h,
        h1,
        delta_h,
        table,
        order: n,
        provenance,
    })
}

/// Outcome of one labelled identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub label: String,
    pub passed: bool,
    /// Number of scalar identities examined.
    pub cases: usize,
    /// Offending monomial or index on failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    pub fn new(label: &str) -> Self {
        CheckResult {
            label: label.into(),
            passed: true,
            cases: 0,
            detail: None,
        }
    }

    /// Records one identity; keeps the first failure.
    pub fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.passed {
            self.passed = false;
            self.detail = Some(detail());
        }
    }

    /// Records that `residual`, truncated to order ≤ `max`, vanishes.
    pub fn record_poly(&mut self, residual: &ConcretePoly, max: i64, context: &str) {
        let tr = if max < 0 {
            ConcretePoly::zero()
        } else {
            residual.truncate(max as u32)
        };
        self.record(tr.is_zero(), || {
            let (m, c) = tr.first_term().unwrap();
            format!("{context} at {}: {c}", mono_to_string(m))
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub order: u32,
    /// Highest tensorial order on which identities are asserted.
    pub truncation: i64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, label: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Expanded polynomial with memoized first and second derivatives.
pub struct DerivCache {
    base: ConcretePoly,
    first: HashMap<CVar, ConcretePoly>,
    second: HashMap<(CVar, CVar), ConcretePoly>,
}

impl DerivCache {
    pub fn new(base: ConcretePoly) -> Self {
        DerivCache {
            base,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    pub fn base(&self) -> &ConcretePoly {
        &self.base
    }

    pub fn d(&mut self, a: CVar) -> ConcretePoly {
        let a = canon(a);
        if let Some(p) = self.first.get(&a) {
            return p.clone();
        }
        let p = self.base.diff(a);
        self.first.insert(a, p.clone());
        p
    }

    pub fn dd(&mut self, a: CVar, b: CVar) -> ConcretePoly {
        let (a, b) = (canon(a), canon(b));
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(p) = self.second.get(&key) {
            return p.clone();
        }
        let p = self.d(key.0).diff(key.1);
        self.second.insert(key, p.clone());
        p
    }
}

fn canon(v: CVar) -> CVar {
    match v {
        CVar::MuMat(i, j) if i > j => CVar::MuMat(j, i),
        other => other,
    }
}

fn delta(i: usize, j: usize) -> bool {
    i == j
}

/// Left side of the vector condition on H (component k, i).
fn master_residual(c: &mut DerivCache, k: usize, i: usize) -> ConcretePoly {
    use CVar::*;
    let mut acc = c.dd(Mu, MuVec(k)).mul_var(MuVec(i).tensor_index().unwrap());
    for j in 0..3 {
        acc.add_assign(&c.dd(Mu, MuMat(k, j)).mul_cvar(MuMat(j, i)).scale(&int(2)));
        acc.add_assign(&c.dd(MuVec(k), MuMat(i, j)).mul_cvar(LamVec(j)).scale(&int(2)));
    }
    acc.add_assign(&c.dd(Mu, MuMat(k, i)).mul_cvar(Lam).scale(&int(2)));
    acc.add_assign(&c.dd(Mu, LamVec(k)).mul_cvar(LamVec(i)));
    if delta(k, i) {
        acc.add_assign(&c.d(Mu));
    }
    acc
}

/// Left side of the redundant scalar-potential condition (component i).
fn redundant_residual(c: &mut DerivCache, i: usize) -> ConcretePoly {
    use CVar::*;
    let mut acc = c.dd(Mu, Mu).mul_cvar(MuVec(i));
    for h in 0..3 {
        let dh = c.dd(Mu, MuVec(h));
        acc.add_assign(&dh.mul_cvar(MuMat(i, h)).scale(&int(2)));
        if h == i {
            acc.add_assign(&dh.mul_cvar(Lam).scale(&int(2)));
        }
        acc.add_assign(&c.dd(Mu, MuMat(h, i)).mul_cvar(LamVec(h)).scale(&int(2)));
    }
    acc.add_assign(&c.dd(Mu, Lam).mul_cvar(LamVec(i)));
    acc
}

fn label_ij(i: usize, j: usize) -> String {
    format!("i={},j={}", i + 1, j + 1)
}

/// Checks every constraint on the generated potentials.
pub fn verify_closure(res: &ClosureResult) -> VerificationReport {
    let n = res.order;
    let max = n as i64 - 2;
    let mut checks = Vec::new();
    let mut hc = DerivCache::new(res.h.expand());
    use CVar::*;

    let mut a = CheckResult::new("eq-9.1a");
    let mut b = CheckResult::new("eq-9.1b");
    let mut cc = CheckResult::new("eq-9.1c");
    let mut d = CheckResult::new("eq-9.1d");
    for i in 0..3 {
        for j in i..3 {
            let r = hc.dd(Mu, MuMat(i, j)).sub(&hc.dd(MuVec(i), MuVec(j)));
            a.record_poly(&r, max, &label_ij(i, j));
        }
        let r = hc.dd(Mu, LamVec(i)).sub(&hc.dd(Lam, MuVec(i)));
        b.record_poly(&r, max, &format!("i={}", i + 1));
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let r = hc.dd(MuVec(k), MuMat(i, j)).sub(&hc.dd(MuVec(i), MuMat(k, j)));
                cc.record_poly(&r, max, &format!("k={},{}", k + 1, label_ij(i, j)));
            }
            let r = hc.dd(MuVec(k), LamVec(i)).sub(&hc.dd(MuVec(i), LamVec(k)));
            d.record_poly(&r, max, &format!("k={},i={}", k + 1, i + 1));
        }
    }
    checks.extend([a, b, cc, d]);

    let mut m = CheckResult::new("eq-9.3");
    for k in 0..3 {
        for i in 0..3 {
            let r = master_residual(&mut hc, k, i);
            m.record_poly(&r, max, &format!("k={},i={}", k + 1, i + 1));
        }
    }
    checks.push(m);

    let mut red = CheckResult::new("eq-9.2a");
    for i in 0..3 {
        let r = redundant_residual(&mut hc, i);
        red.record_poly(&r, max, &format!("i={}", i + 1));
    }
    checks.push(red);

    checks.extend(potential_symmetry_checks(res, max));
    checks.push(property_one(res));
    checks.extend(table_checks(&res.table));

    VerificationReport {
        order: n,
        truncation: max,
        checks,
    }
}

/// Symmetry conditions written on h′ and h′^k.
fn potential_symmetry_checks(res: &ClosureResult, max: i64) -> Vec<CheckResult> {
    use CVar::*;
    let mut hp = DerivCache::new(res.h_prime.expand());
    let mut hk: Vec<DerivCache> = res
        .h_prime_k
        .expand()
        .into_iter()
        .map(DerivCache::new)
        .collect();
    let mut a = CheckResult::new("eq-3.0a");
    let mut b = CheckResult::new("eq-3.0b");
    let mut c = CheckResult::new("eq-3.0c");
    let mut d = CheckResult::new("eq-3.0d");
    let mut e = CheckResult::new("eq-3.0e");
    for i in 0..3 {
        let r = hp.d(MuVec(i)).sub(&hk[i].d(Mu));
        a.record_poly(&r, max, &format!("i={}", i + 1));
        for j in 0..3 {
            let r = hp.d(MuMat(i, j)).sub(&hk[i].d(MuVec(j)));
            b.record_poly(&r, max, &label_ij(i, j));
        }
        let r = hp.d(LamVec(i)).sub(&hk[i].d(Lam));
        c.record_poly(&r, max, &format!("i={}", i + 1));
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let r = hk[k].d(MuMat(i, j)).sub(&hk[i].d(MuMat(k, j)));
                d.record_poly(&r, max, &format!("k={},{}", k + 1, label_ij(i, j)));
            }
            let r = hk[k].d(LamVec(i)).sub(&hk[i].d(LamVec(k)));
            e.record_poly(&r, max, &format!("k={},i={}", k + 1, i + 1));
        }
    }
    vec![a, b, c, d, e]
}

/// Degree bound on the homogeneous parts of ΔH.
fn property_one(res: &ClosureResult) -> CheckResult {
    let mut c = CheckResult::new("property-1");
    let dh = res.delta_h.expand();
    for n in 0..=res.order {
        let part = dh.homogeneous(n);
        if n == 0 {
            c.record(part.is_zero(), || "order 0 part is nonzero".into());
            continue;
        }
        for (m, f) in part.terms() {
            let deg = f.mu_degree().unwrap_or(0);
            c.record(deg < n, || {
                format!("order {n} at {}: mu-degree {deg}", mono_to_string(m))
            });
        }
    }
    c
}

/// Scalar recursions on the coefficient table, over all index sets whose
/// entries have order ≤ N.
pub fn table_checks(t: &CoefficientTable) -> Vec<CheckResult> {
    let n = t.order as i64;
    let sb = t.s_bound();
    let lam = ScalarFn::lam();
    let fits = |o: i64| o <= n;
    let idx = |p: u32, q: u32, r: u32, s: u32| format!("(p,q,r,s)=({p},{q},{r},{s})");
    let zero = |f: &ScalarFn| f.is_zero();
    let nn = t.order;

    let mut c152a = CheckResult::new("eq-15.2a");
    let mut c152b = CheckResult::new("eq-15.2b");
    let mut c171 = CheckResult::new("eq-17.1");
    let mut b3a = CheckResult::new("eq-beta.3a");
    let mut b3b = CheckResult::new("eq-beta.3b");
    let mut b4a = CheckResult::new("eq-beta.4a");
    let mut b4b = CheckResult::new("eq-beta.4b");
    let mut cr1 = CheckResult::new("eq-cris1");
    let mut cr2 = CheckResult::new("eq-cris2");
    let mut cr3 = CheckResult::new("eq-cris3");
    let mut cr5 = CheckResult::new("eq-cris5");
    let mut cr6 = CheckResult::new("eq-cris6");

    for p in 0..=nn {
        for q in 0..=nn {
            for r in 0..=nn {
                let o = (p + q + r) as i64;
                if o > n {
                    continue;
                }
                for s in 0..sb {
                    if (p + r) % 2 == 0 && fits(o + 2) {
                        let lhs = t.get(p, q + 1, r, s + 1);
                        let rhs = t.get(p + 2, q, r, s);
                        c152a.record(lhs == rhs, || idx(p, q, r, s));
                    }
                    if (p + r) % 2 == 1 && fits(o + 1) {
                        let lhs = t.get(p, q, r + 1, s + 1);
                        let rhs = t.get(p + 1, q, r, s).diff(SVar::Lam);
                        c152b.record(lhs == rhs, || idx(p, q, r, s));
                    }
                    if (p + r) % 2 == 0 && fits(o + 1) {
                        let mut v = t.get(p, q, r, s + 1).scale(&int((p + 2 * q + r + 1) as i64));
                        v = v.add(&t.get(p, q + 1, r, s + 1).mul(&lam).scale(&int(2)));
                        if r >= 1 {
                            v = v.add(&t.get(p + 1, q + 1, r - 1, s).scale(&int(2 * r as i64)));
                        }
                        c171.record(zero(&v), || idx(p, q, r, s));
                    }
                    if p == 0 && r % 2 == 1 && fits((q + r + 1) as i64) {
                        let lhs = t.get(0, q, r + 1, s + 1);
                        let rhs = t.get(1, q, r, s).diff(SVar::Lam);
                        b3a.record(lhs == rhs, || idx(0, q, r, s));
                    }
                    if p == 0 && r % 2 == 0 && fits((q + r + 2) as i64) {
                        let lhs = t.get(1, q, r + 1, s + 1);
                        let rhs = t.get(0, q + 1, r, s + 1).diff(SVar::Lam);
                        b3b.record(lhs == rhs, || idx(1, q, r, s));
                    }
                    if p == 0 && r % 2 == 0 && fits((q + r + 1) as i64) {
                        let mut v = t.get(0, q, r, s + 1).scale(&int((2 * q + r + 1) as i64));
                        v = v.add(&t.get(0, q + 1, r, s + 1).mul(&lam).scale(&int(2)));
                        if r >= 1 {
                            v = v.add(&t.get(1, q + 1, r - 1, s).scale(&int(2 * r as i64)));
                        }
                        b4a.record(zero(&v), || idx(0, q, r, s));
                    }
                    if p == 0 && r % 2 == 1 && fits((q + r + 2) as i64) {
                        let mut v = t.get(1, q, r, s + 1).scale(&int((2 * q + r + 2) as i64));
                        v = v.add(&t.get(1, q + 1, r, s + 1).mul(&lam).scale(&int(2)));
                        v = v.add(&t.get(0, q + 2, r - 1, s + 1).scale(&int(2 * r as i64)));
                        b4b.record(zero(&v), || idx(1, q, r, s));
                    }
                    if p == 0 && q == 0 && r == 0 {
                        cr1.record(zero(&t.get(0, 0, 0, s)), || idx(0, 0, 0, s));
                    }
                    if p == 0 && s == 0 && r % 2 == 0 {
                        cr2.record(zero(&t.get(0, q, r, 0)), || idx(0, q, r, 0));
                    }
                    if p == 0 && r == 0 {
                        cr3.record(zero(&t.get(0, q, 0, s)), || idx(0, q, 0, s));
                    }
                    if p == 1 && r % 2 == 1 && 2 * s > r {
                        cr5.record(zero(&t.get(1, q, r, s)), || idx(1, q, r, s));
                    }
                    if p == 0 && r >= 2 && r % 2 == 0 && 2 * s >= r {
                        cr6.record(zero(&t.get(0, q, r, s + 1)), || idx(0, q, r, s + 1));
                    }
                }
            }
        }
    }
    vec![c152a, c152b, c171, b3a, b3b, b4a, b4b, cr1, cr2, cr3, cr5, cr6]
}

/// One exact value per multiplier, in moment order (μ, μ_i, μ_ij i ≤ j, λ, λ_i).
pub type Flat14 = [Rational; 14];

fn exact(v: Value, what: &str) -> Result<Rational, ClosureError> {
    match v {
        Value::Exact(x) => Ok(x),
        Value::Float(_) => Err(ClosureError::Inexact(what.into())),
    }
}

fn gradient(p: &ConcretePoly, state: &TensorState, what: &str) -> Result<Flat14, ClosureError> {
    let vars = CVar::all14();
    let mut out: Flat14 = std::array::from_fn(|_| Rational::zero());
    for (a, v) in vars.iter().enumerate() {
        out[a] = exact(p.diff(*v).eval(state)?, what)?;
    }
    Ok(out)
}

/// Moments F̂^A = ∂h′/∂μ_A and fluxes F̂^{kA} = ∂h′^k/∂μ_A at `state`.
pub fn moments_at_rest(
    res: &ClosureResult,
    state: &TensorState,
) -> Result<(Flat14, [Flat14; 3]), ClosureError> {
    state.check_symmetric()?;
    let f = gradient(&res.h_prime.expand(), state, "moments")?;
    let [a, b, c] = res.h_prime_k.expand();
    Ok((
        f,
        [
            gradient(&a, state, "fluxes")?,
            gradient(&b, state, "fluxes")?,
            gradient(&c, state, "fluxes")?,
        ],
    ))
}

/// Weight of component `a` in the multiplier–moment pairing μ_A F^A
/// (off-diagonal μ_ij appear twice in the full contraction).
pub fn pairing_weight(a: usize) -> Rational {
    match CVar::all14()[a] {
        CVar::MuMat(i, j) if i != j => int(2),
        _ => Rational::one(),
    }
}

/// Entropy density h = μ_A F^A − h′.
pub fn entropy_from_potential(res: &ClosureResult, state: &TensorState) -> Result<Rational, ClosureError> {
    state.check_symmetric()?;
    let hp = res.h_prime.expand();
    let f = gradient(&hp, state, "entropy")?;
    let vars = CVar::all14();
    let mut acc = -exact(hp.eval(state)?, "entropy")?;
    for a in 0..14 {
        acc += pairing_weight(a) * state.value(vars[a]) * &f[a];
    }
    Ok(acc)
}

/// Keys of the third-order h′ layout, in display order.
pub const SECOND_ORDER_H_KEYS: [(u32, u32, u32); 10] = [
    (0, 0, 0),
    (0, 1, 0),
    (2, 0, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 0, 2),
    (2, 1, 0),
    (1, 1, 1),
    (0, 3, 0),
    (0, 1, 2),
];

/// Order of a key.
pub fn order_of(key: (u32, u32, u32)) -> u32 {
    key_order(&key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_field::sf;

    #[test]
    fn psi_family_examples() {
        let f = build_psi_family(&sf("mu"), &[ScalarFn::zero()], 1);
        assert_eq!(f.psi[1], sf("1/2 * mu^2"));
        let f = build_psi_family(&sf("mu^2 * lam^-1"), &[sf("lam^3")], 1);
        assert_eq!(f.psi[1], sf("1/3 * mu^3 * lam^-1 + lam^3"));
        assert_eq!(f.psi[1].diff(SVar::Mu), f.psi[0]);
        let f = build_psi_family(&ScalarFn::zero(), &[], 3);
        assert!(f.psi.iter().all(|p| p.is_zero()));
    }

    #[test]
    fn h1_low_terms() {
        let fam = PsiFamily::from_psi1(&sf("mu^4 * lam^-1"), &[], 2);
        let h1 = build_H1(&fam, 4).unwrap();
        assert_eq!(h1.get((0, 0, 0)), fam.psi[0]);
        assert_eq!(h1.get((0, 1, 0)), sf("-1/2 * lam^-1").mul(&fam.psi[0]));
        let want = sf("-1/2 * lam^-1").mul(&fam.psi[1]).diff_n(SVar::Mu, 2);
        assert_eq!(h1.get((2, 0, 0)), want);
    }

    #[test]
    fn shallow_family_rejected() {
        let fam = build_psi_family(&sf("mu"), &[], 1);
        assert!(matches!(build_H1(&fam, 4), Err(ClosureError::FamilyTooShallow { .. })));
        assert!(build_H1(&fam, 3).is_ok());
    }

    #[test]
    fn log_seed_recursion() {
        let mut free = FreeInput::zero(3);
        free.h_seed.insert(1, sf("lam^-1"));
        free.int_consts.insert((0, 2), rat(2, 5));
        let t = solve_delta_coeffs(&free, 3).unwrap();
        assert_eq!(t.get(1, 1, 1, 0), sf("3/2 * lam^-2 * log + 2/5 * lam^-2"));
    }

    #[test]
    fn missing_seed() {
        let free = FreeInput::default();
        assert_eq!(solve_delta_coeffs(&free, 2), Err(ClosureError::MissingSeed(1)));
        assert!(solve_delta_coeffs(&free, 1).is_ok());
    }

    #[test]
    fn zero_rules_and_vanishing_branches() {
        let mut free = FreeInput::zero(5);
        free.h_seed.insert(1, sf("lam^3 + 2 * lam^-2"));
        free.h_seed.insert(3, sf("lam^-4"));
        let t = solve_delta_coeffs(&free, 5).unwrap();
        for s in 0..6 {
            assert!(t.get(0, 0, 0, s).is_zero());
            for r in (1..5).step_by(2) {
                if 2 * s > r {
                    assert!(t.get(1, 0, r, s).is_zero());
                }
            }
        }
    }

    #[test]
    fn delta_h_from_log_seed() {
        let mut free = FreeInput::zero(3);
        free.h_seed.insert(1, sf("lam^-1"));
        let t = solve_delta_coeffs(&free, 3).unwrap();
        let dh = assemble_delta_H(&t, 3);
        assert_eq!(dh.get((1, 0, 1)), sf("lam^-1"));
        assert!(dh.get((0, 0, 0)).is_zero());
        assert!(assemble_delta_H(&CoefficientTable::default(), 3).is_zero());
    }

    #[test]
    fn generated_closure_verifies() {
        let fam = PsiFamily::from_psi1(&sf("mu^4 * lam^-1 + mu^2 * lam^2"), &[sf("lam")], 2);
        let mut free = FreeInput::zero(4);
        free.h_seed.insert(1, sf("lam^-2"));
        free.h_seed.insert(3, sf("lam"));
        free.int_consts.insert((0, 2), int(3));
        let res = make_closure(&fam, &free, 4).unwrap();
        let rep = verify_closure(&res);
        assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
    }

    #[test]
    fn tampered_entry_names_a_monomial() {
        let fam = PsiFamily::from_psi1(&sf("mu^4 * lam^-1"), &[], 2);
        let mut free = FreeInput::zero(4);
        free.h_seed.insert(1, sf("lam^-1"));
        let good = solve_delta_coeffs(&free, 4).unwrap();
        free.overrides.insert((1, 1, 1, 0), good.get(1, 1, 1, 0).add(&ScalarFn::one()));
        let res = make_closure(&fam, &free, 4).unwrap();
        let rep = verify_closure(&res);
        let bad = rep.check("eq-17.1").unwrap();
        assert!(!bad.passed);
        assert!(bad.detail.as_deref().unwrap().contains("(0,0,2,0)"));
        assert!(rep.failures().any(|c| c.label == "eq-9.3"));
    }

    #[test]
    fn equilibrium_moments() {
        let fam = PsiFamily::from_psi1(&sf("mu^4 * lam^-1"), &[], 1);
        let res = make_closure(&fam, &FreeInput::zero(3), 3).unwrap();
        let st = TensorState::equilibrium(int(1), int(1));
        let (f, fk) = moments_at_rest(&res, &st).unwrap();
        assert_eq!(f[0], int(24));
        for i in 1..4 {
            assert!(f[i].is_zero());
        }
        assert_eq!(f[4], f[7]);
        assert!(f[5].is_zero());
        assert!(fk.iter().all(|row| row[0].is_zero()));
    }

    #[test]
    fn entropy_of_constant_potential() {
        let mut h = IsoScalarPoly::new();
        h.insert((0, 0, 0), sf("5 * mu")).unwrap();
        let res = ClosureResult::from_h(h, 2);
        let st = TensorState::equilibrium(int(3), int(2));
        assert_eq!(entropy_from_potential(&res, &st).unwrap(), int(-5));
    }
}
