//! Seeded random rationals with small denominators.

use num_bigint::BigInt;
use rand::Rng;

use crate::closure_gen::{family_depth_needed, needed_seeds, solve_delta_coeffs, FreeInput, PsiFamily};
use crate::iso_tensor::{TensorState, SYM_PAIRS};
use crate::rational::{int, Rational};
use crate::scalar_field::ScalarFn;

/// Uniform rational n/d with 1 ≤ d ≤ `max_den` and |n/d| ≤ `bound`.
pub fn rational<R: Rng + ?Sized>(rng: &mut R, max_den: i64, bound: i64) -> Rational {
    let d = rng.gen_range(1..=max_den);
    let n = rng.gen_range(-bound * d..=bound * d);
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Strictly positive rational in (0, `bound`].
pub fn positive<R: Rng + ?Sized>(rng: &mut R, max_den: i64, bound: i64) -> Rational {
    let d = rng.gen_range(1..=max_den);
    let n = rng.gen_range(1..=bound * d);
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn vec3<R: Rng + ?Sized>(rng: &mut R, max_den: i64, bound: i64) -> [Rational; 3] {
    std::array::from_fn(|_| rational(rng, max_den, bound))
}

/// Random multiplier state with λ > 0 and a symmetric μ_ij.
pub fn tensor_state<R: Rng + ?Sized>(rng: &mut R, max_den: i64) -> TensorState {
    let mut s = TensorState::equilibrium(rational(rng, max_den, 2), positive(rng, max_den, 2));
    s.mu_vec = vec3(rng, max_den, 1);
    s.lam_vec = vec3(rng, max_den, 1);
    for &(i, j) in &SYM_PAIRS {
        let x = rational(rng, max_den, 1);
        s.mu_mat[i][j] = x.clone();
        s.mu_mat[j][i] = x;
    }
    s
}

/// Random symmetric traceless matrix.
pub fn traceless<R: Rng + ?Sized>(rng: &mut R, max_den: i64, bound: i64) -> [[Rational; 3]; 3] {
    let mut m: [[Rational; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| int(0)));
    for &(i, j) in &SYM_PAIRS {
        if (i, j) == (2, 2) {
            continue;
        }
        let x = rational(rng, max_den, bound);
        m[i][j] = x.clone();
        m[j][i] = x;
    }
    m[2][2] = -(&m[0][0] + &m[1][1]);
    m
}

/// Random nonzero Laurent polynomial in λ (`terms` terms, exponents in −3..=3).
pub fn lambda_poly<R: Rng + ?Sized>(rng: &mut R, terms: usize) -> ScalarFn {
    loop {
        let mut f = ScalarFn::zero();
        for _ in 0..terms {
            let c = rational(rng, 4, 3);
            f = f.add(&ScalarFn::term(c, 0, rng.gen_range(-3..=3), 0));
        }
        if !f.is_zero() {
            return f;
        }
    }
}

/// Random polynomial ψ₁ with μ-degree ≤ 5 and family deep enough for order `n`.
pub fn psi_family<R: Rng + ?Sized>(rng: &mut R, n: u32) -> PsiFamily {
    let mut psi1 = ScalarFn::zero();
    while psi1.mu_degree().unwrap_or(0) < 3 {
        let c = rational(rng, 4, 3);
        psi1 = psi1.add(&ScalarFn::term(c, rng.gen_range(0..=5), rng.gen_range(-3..=2), 0));
    }
    let m = family_depth_needed(n).max(1);
    let consts: Vec<ScalarFn> = (1..m).map(|_| lambda_poly(rng, 2)).collect();
    PsiFamily::from_psi1(&psi1, &consts, m)
}

/// Random seeds and integration constants for order `n` whose solved table
/// is free of logarithms.
pub fn free_input<R: Rng + ?Sized>(rng: &mut R, n: u32) -> FreeInput {
    loop {
        let mut f = FreeInput::default();
        for r in needed_seeds(n) {
            f.h_seed.insert(r, lambda_poly(rng, 2));
            let mut q = 0;
            while q + r + 2 <= n {
                if rng.gen_bool(0.5) {
                    f.int_consts.insert((q, r + 1), rational(rng, 4, 2));
                }
                q += 1;
            }
        }
        match solve_delta_coeffs(&f, n) {
            Ok(t) if !t.base_entries().any(|(_, g)| g.has_log()) => return f,
            _ => continue,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{Signed, Zero};
    use rand::SeedableRng;

    #[test]
    fn bounds_hold() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let x = rational(&mut rng, 64, 3);
            assert!(*x.denom() <= BigInt::from(64));
            assert!(x.abs() <= int(3));
            assert!(positive(&mut rng, 64, 2).is_positive());
            let m = traceless(&mut rng, 8, 1);
            assert!((&m[0][0] + &m[1][1] + &m[2][2]).is_zero());
            tensor_state(&mut rng, 64).check_symmetric().unwrap();
        }
        for n in 2..6 {
            let fam = psi_family(&mut rng, n);
            assert!(fam.depth() >= crate::closure_gen::family_depth_needed(n));
            let t = solve_delta_coeffs(&free_input(&mut rng, n), n).unwrap();
            assert!(!t.base_entries().any(|(_, g)| g.has_log()));
        }
    }
}
