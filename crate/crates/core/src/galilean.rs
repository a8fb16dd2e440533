//! Velocity dependence of moments and multipliers.
//!
//! Flattened 14-vectors are ordered (F, F^i, F^ij with i ≤ j, G, G^i). Symmetric
//! components are stored once; the matrix columns for off-diagonal F̂^ab carry
//! the sum of both tensor entries, and the multiplier pairing weights
//! off-diagonal μ_ij by 2.

use num_traits::{One, Zero};

use crate::closure_gen::{CheckResult, ClosureResult, VerificationReport};
use crate::iso_tensor::{CVar, ConcretePoly, TensorState, SYM_PAIRS};
use crate::rational::{int, Rational};
use crate::scalar_field::Value;

pub type Velocity3 = [Rational; 3];
pub type Mat14 = [[Rational; 14]; 14];

fn zero3() -> [Rational; 3] {
    std::array::from_fn(|_| Rational::zero())
}

fn zero33() -> [[Rational; 3]; 3] {
    std::array::from_fn(|_| zero3())
}

fn dot(a: &[Rational; 3], b: &[Rational; 3]) -> Rational {
    (0..3).map(|i| &a[i] * &b[i]).sum()
}

fn kd(i: usize, j: usize) -> Rational {
    if i == j {
        Rational::one()
    } else {
        Rational::zero()
    }
}

/// Position of the symmetric pair (i, j) in a flattened vector.
pub fn flat_pair(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    4 + SYM_PAIRS.iter().position(|&p| p == (a, b)).unwrap()
}

/// The 14 moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVec14 {
    pub f: Rational,
    pub f_i: [Rational; 3],
    pub f_ij: [[Rational; 3]; 3],
    pub g: Rational,
    pub g_i: [Rational; 3],
}

impl MomentVec14 {
    pub fn zero() -> Self {
        MomentVec14 {
            f: Rational::zero(),
            f_i: zero3(),
            f_ij: zero33(),
            g: Rational::zero(),
            g_i: zero3(),
        }
    }

    pub fn to_flat(&self) -> [Rational; 14] {
        let mut out: [Rational; 14] = std::array::from_fn(|_| Rational::zero());
        out[0] = self.f.clone();
        for i in 0..3 {
            out[1 + i] = self.f_i[i].clone();
            out[11 + i] = self.g_i[i].clone();
        }
        for (n, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            out[4 + n] = self.f_ij[i][j].clone();
        }
        out[10] = self.g.clone();
        out
    }

    pub fn from_flat(x: &[Rational; 14]) -> Self {
        let mut m = MomentVec14::zero();
        m.f = x[0].clone();
        for i in 0..3 {
            m.f_i[i] = x[1 + i].clone();
            m.g_i[i] = x[11 + i].clone();
        }
        for (n, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            m.f_ij[i][j] = x[4 + n].clone();
            m.f_ij[j][i] = x[4 + n].clone();
        }
        m.g = x[10].clone();
        m
    }
}

/// The 14 Lagrange multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeVec14 {
    pub mu: Rational,
    pub mu_i: [Rational; 3],
    pub mu_ij: [[Rational; 3]; 3],
    pub lam: Rational,
    pub lam_i: [Rational; 3],
}

impl LagrangeVec14 {
    pub fn to_flat(&self) -> [Rational; 14] {
        MomentVec14 {
            f: self.mu.clone(),
            f_i: self.mu_i.clone(),
            f_ij: self.mu_ij.clone(),
            g: self.lam.clone(),
            g_i: self.lam_i.clone(),
        }
        .to_flat()
    }

    pub fn from_flat(x: &[Rational; 14]) -> Self {
        let m = MomentVec14::from_flat(x);
        LagrangeVec14 {
            mu: m.f,
            mu_i: m.f_i,
            mu_ij: m.f_ij,
            lam: m.g,
            lam_i: m.g_i,
        }
    }

    pub fn from_state(s: &TensorState) -> Self {
        LagrangeVec14 {
            mu: s.mu.clone(),
            mu_i: s.mu_vec.clone(),
            mu_ij: s.mu_mat.clone(),
            lam: s.lam.clone(),
            lam_i: s.lam_vec.clone(),
        }
    }

    pub fn to_state(&self) -> TensorState {
        TensorState {
            mu: self.mu.clone(),
            lam: self.lam.clone(),
            mu_vec: self.mu_i.clone(),
            mu_mat: self.mu_ij.clone(),
            lam_vec: self.lam_i.clone(),
        }
    }
}

/// Weight of flattened component `a` in μ_A F^A.
pub fn flat_weight(a: usize) -> Rational {
    crate::closure_gen::pairing_weight(a)
}

/// F^A = X^A_B(v) F̂^B, written out block by block.
pub fn recompose_moments(hat: &MomentVec14, v: &Velocity3) -> MomentVec14 {
    let v2 = dot(v, v);
    let vf = dot(v, &hat.f_i);
    let mut out = MomentVec14::zero();
    out.f = hat.f.clone();
    for i in 0..3 {
        out.f_i[i] = &v[i] * &hat.f + &hat.f_i[i];
        for j in 0..3 {
            out.f_ij[i][j] =
                &v[i] * &v[j] * &hat.f + &v[i] * &hat.f_i[j] + &v[j] * &hat.f_i[i] + &hat.f_ij[i][j];
        }
    }
    out.g = &v2 * &hat.f + int(2) * &vf + &hat.g;
    for i in 0..3 {
        let mut gi = &v2 * &v[i] * &hat.f + &v2 * &hat.f_i[i] + int(2) * &v[i] * &vf;
        for b in 0..3 {
            gi += int(2) * &hat.f_ij[i][b] * &v[b];
        }
        gi += &v[i] * &hat.g + &hat.g_i[i];
        out.g_i[i] = gi;
    }
    out
}

/// v^i = F^i / F.
pub fn velocity_from_moments(m: &MomentVec14) -> Option<Velocity3> {
    if m.f.is_zero() {
        return None;
    }
    Some(std::array::from_fn(|i| &m.f_i[i] / &m.f))
}

/// The flattened 14×14 matrix X(v).
pub fn x_matrix(v: &Velocity3) -> Mat14 {
    let mut x: Mat14 = std::array::from_fn(|_| std::array::from_fn(|_| Rational::zero()));
    for b in 0..14 {
        let mut e: [Rational; 14] = std::array::from_fn(|_| Rational::zero());
        e[b] = Rational::one();
        let col = recompose_moments(&MomentVec14::from_flat(&e), v).to_flat();
        for a in 0..14 {
            x[a][b] = col[a].clone();
        }
    }
    x
}

pub fn mat_mul(a: &Mat14, b: &Mat14) -> Mat14 {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (0..14)
                .filter(|&k| !a[i][k].is_zero() && !b[k][j].is_zero())
                .map(|k| &a[i][k] * &b[k][j])
                .sum()
        })
    })
}

pub fn identity14() -> Mat14 {
    std::array::from_fn(|i| std::array::from_fn(|j| kd(i, j)))
}

/// Flattened covector product μ_B X^B_A, honoring the pairing weights.
pub fn covector_times(m: &[Rational; 14], x: &Mat14) -> [Rational; 14] {
    std::array::from_fn(|a| {
        let s: Rational = (0..14).map(|b| flat_weight(b) * &m[b] * &x[b][a]).sum();
        s / flat_weight(a)
    })
}

/// Multipliers seen from a frame moving with velocity `v`:
/// the explicit component form of m·X(v).
pub fn transform_lagrange(m: &LagrangeVec14, v: &Velocity3) -> LagrangeVec14 {
    let v2 = dot(v, v);
    let lv = dot(&m.lam_i, v);
    let mut mu = &m.mu + dot(&m.mu_i, v) + &m.lam * &v2 + &lv * &v2;
    for i in 0..3 {
        for j in 0..3 {
            mu += &m.mu_ij[i][j] * &v[i] * &v[j];
        }
    }
    let mu_i: [Rational; 3] = std::array::from_fn(|h| {
        let mut x = &m.mu_i[h] + int(2) * &m.lam * &v[h] + &m.lam_i[h] * &v2 + int(2) * &lv * &v[h];
        for i in 0..3 {
            x += int(2) * &m.mu_ij[i][h] * &v[i];
        }
        x
    });
    let mu_ij: [[Rational; 3]; 3] = std::array::from_fn(|h| {
        std::array::from_fn(|k| &m.mu_ij[h][k] + &m.lam_i[h] * &v[k] + &m.lam_i[k] * &v[h])
    });
    LagrangeVec14 {
        mu,
        mu_i,
        mu_ij,
        lam: &m.lam + &lv,
        lam_i: m.lam_i.clone(),
    }
}

/// Right-hand sides of the velocity-derivative table: ∂m^a/∂v^i expressed
/// through m^a itself, for m^a = transform_lagrange(m^r, −v).
pub fn derivative_table(m: &LagrangeVec14, i: usize) -> LagrangeVec14 {
    let two = int(2);
    LagrangeVec14 {
        mu: -m.mu_i[i].clone(),
        mu_i: std::array::from_fn(|h| -(&two * &m.mu_ij[i][h]) - &two * &m.lam * kd(h, i)),
        mu_ij: std::array::from_fn(|h| {
            std::array::from_fn(|k| -(&m.lam_i[h] * kd(k, i)) - &m.lam_i[k] * kd(h, i))
        }),
        lam: -m.lam_i[i].clone(),
        lam_i: zero3(),
    }
}

/// ∂/∂v^i of transform_lagrange(m, −v) at `v`, by a five-point central
/// difference with unit step (exact for the cubic dependence on v).
pub fn velocity_derivative(m: &LagrangeVec14, v: &Velocity3, i: usize) -> LagrangeVec14 {
    let at = |t: i64| {
        let mut w = v.clone();
        w[i] += int(t);
        let neg: Velocity3 = std::array::from_fn(|k| -w[k].clone());
        transform_lagrange(m, &neg).to_flat()
    };
    let (m2, m1, p1, p2) = (at(-2), at(-1), at(1), at(2));
    let d: [Rational; 14] = std::array::from_fn(|a| {
        (&m2[a] - int(8) * &m1[a] + int(8) * &p1[a] - &p2[a]) / int(12)
    });
    LagrangeVec14::from_flat(&d)
}

/// Left side of the invariance condition on h′ (component i).
pub fn h_prime_residual(hp: &ConcretePoly, i: usize) -> ConcretePoly {
    invariance_terms(hp, i)
}

fn invariance_terms(p: &ConcretePoly, i: usize) -> ConcretePoly {
    use CVar::*;
    let two = int(2);
    let mut acc = p.diff(Mu).mul_cvar(MuVec(i));
    for h in 0..3 {
        let dh = p.diff(MuVec(h));
        acc.add_assign(&dh.mul_cvar(MuMat(i, h)).scale(&two));
        if h == i {
            acc.add_assign(&dh.mul_cvar(Lam).scale(&two));
        }
        acc.add_assign(&p.diff(MuMat(h, i)).mul_cvar(LamVec(h)).scale(&two));
    }
    acc.add_assign(&p.diff(Lam).mul_cvar(LamVec(i)));
    acc
}

/// Left side of the invariance condition on h′^k (components k, i).
pub fn h_prime_k_residual(hp: &ConcretePoly, hk: &ConcretePoly, k: usize, i: usize) -> ConcretePoly {
    let mut acc = invariance_terms(hk, i);
    if k == i {
        acc.add_assign(hp);
    }
    acc
}

fn value_is_zero(v: &Value) -> bool {
    match v {
        Value::Exact(x) => x.is_zero(),
        Value::Float(x) => x.abs() < 1e-9,
    }
}

/// Checks both invariance conditions as polynomial identities up to order
/// N−2 and at every supplied state, plus the velocity-derivative table.
pub fn verify_galilean(res: &ClosureResult, states: &[TensorState]) -> VerificationReport {
    let max = res.order as i64 - 2;
    let hp = res.h_prime.expand();
    let hk = res.h_prime_k.expand();
    let mut c1 = CheckResult::new("eq-7.3a");
    let mut c2 = CheckResult::new("eq-7.3b");
    let trunc = |p: &ConcretePoly| {
        if max < 0 {
            ConcretePoly::zero()
        } else {
            p.truncate(max as u32)
        }
    };
    for i in 0..3 {
        let r = h_prime_residual(&hp, i);
        c1.record_poly(&r, max, &format!("i={}", i + 1));
        let tr = trunc(&r);
        for (n, s) in states.iter().enumerate() {
            let ok = tr.eval(s).map(|v| value_is_zero(&v)).unwrap_or(false);
            c1.record(ok, || format!("i={} at state {n}", i + 1));
        }
        for k in 0..3 {
            let r = h_prime_k_residual(&hp, &hk[k], k, i);
            c2.record_poly(&r, max, &format!("k={},i={}", k + 1, i + 1));
            let tr = trunc(&r);
            for (n, s) in states.iter().enumerate() {
                let ok = tr.eval(s).map(|v| value_is_zero(&v)).unwrap_or(false);
                c2.record(ok, || format!("k={},i={} at state {n}", k + 1, i + 1));
            }
        }
    }
    let mut c3 = CheckResult::new("eq-7.2");
    let spot: Velocity3 = [crate::rational::rat(1, 2), crate::rational::rat(-1, 3), int(1)];
    for (n, s) in states.iter().enumerate() {
        let m = LagrangeVec14::from_state(s);
        for v in [zero3(), spot.clone()] {
            let neg: Velocity3 = std::array::from_fn(|k| -v[k].clone());
            let ma = transform_lagrange(&m, &neg);
            for i in 0..3 {
                let num = velocity_derivative(&m, &v, i);
                let want = derivative_table(&ma, i);
                c3.record(num.to_flat() == want.to_flat(), || {
                    format!("state {n}, v^{}", i + 1)
                });
            }
        }
    }
    VerificationReport {
        order: res.order,
        truncation: max,
        checks: vec![c1, c2, c3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn v(a: Rational, b: Rational, c: Rational) -> Velocity3 {
        [a, b, c]
    }

    #[test]
    fn x_at_zero_is_identity() {
        assert_eq!(x_matrix(&zero3()), identity14());
    }

    #[test]
    fn inverse_and_composition() {
        let a = v(int(1), int(-2), rat(1, 3));
        let na = v(int(-1), int(2), rat(-1, 3));
        assert_eq!(mat_mul(&x_matrix(&na), &x_matrix(&a)), identity14());
        let u = v(int(1), int(0), int(0));
        let w = v(int(0), int(1), int(0));
        let uw = v(int(1), int(1), int(0));
        assert_eq!(mat_mul(&x_matrix(&u), &x_matrix(&w)), x_matrix(&uw));
    }

    #[test]
    fn recompose_hand_example() {
        let mut hat = MomentVec14::zero();
        hat.f = int(2);
        for i in 0..3 {
            hat.f_ij[i][i] = int(1);
        }
        hat.g = int(6);
        let out = recompose_moments(&hat, &v(int(1), int(0), int(0)));
        assert_eq!(out.f, int(2));
        assert_eq!(out.f_i, v(int(2), int(0), int(0)));
        assert_eq!(out.f_ij[0][0], int(3));
        assert_eq!(out.f_ij[1][1], int(1));
        assert_eq!(out.f_ij[2][2], int(1));
        assert_eq!(out.g, int(8));
        assert_eq!(out.g_i, v(int(10), int(0), int(0)));
        assert_eq!(velocity_from_moments(&out), Some(v(int(1), int(0), int(0))));
    }

    #[test]
    fn lagrange_transform_matches_matrix() {
        let m = LagrangeVec14 {
            mu: rat(1, 2),
            mu_i: v(int(1), int(-1), rat(2, 3)),
            mu_ij: [
                v(int(1), rat(1, 2), int(0)),
                v(rat(1, 2), int(-2), int(3)),
                v(int(0), int(3), rat(1, 5)),
            ],
            lam: int(2),
            lam_i: v(int(-1), rat(1, 4), int(2)),
        };
        let vel = v(rat(1, 3), int(2), int(-1));
        let direct = transform_lagrange(&m, &vel);
        assert_eq!(direct.to_flat(), covector_times(&m.to_flat(), &x_matrix(&vel)));
        assert_eq!(direct.lam_i, m.lam_i);
        let back = transform_lagrange(&direct, &std::array::from_fn(|k| -vel[k].clone()));
        assert_eq!(back, m);
        assert_eq!(transform_lagrange(&m, &zero3()), m);
    }

    #[test]
    fn pairing_is_frame_invariant() {
        // μ_A F^A is unchanged when both sides move with the frame.
        let m = LagrangeVec14 {
            mu: int(1),
            mu_i: v(int(2), int(0), int(-1)),
            mu_ij: [v(int(1), int(2), int(0)), v(int(2), int(1), int(1)), v(int(0), int(1), int(3))],
            lam: rat(1, 2),
            lam_i: v(int(1), int(1), int(-2)),
        };
        let hat: [Rational; 14] = std::array::from_fn(|a| int(a as i64 - 5));
        let vel = v(int(1), rat(-1, 2), int(2));
        let f = recompose_moments(&MomentVec14::from_flat(&hat), &vel).to_flat();
        let mh = transform_lagrange(&m, &vel).to_flat();
        let mf = m.to_flat();
        let lhs: Rational = (0..14).map(|a| flat_weight(a) * &mf[a] * &f[a]).sum();
        let rhs: Rational = (0..14).map(|a| flat_weight(a) * &mh[a] * &hat[a]).sum();
        assert_eq!(lhs, rhs);
    }
}
