use closure14_core::galilean::*;
use closure14_core::rational::{int, Rational};
use closure14_core::sample;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn neg(v: &Velocity3) -> Velocity3 {
    std::array::from_fn(|i| -v[i].clone())
}

fn sum(u: &Velocity3, w: &Velocity3) -> Velocity3 {
    std::array::from_fn(|i| &u[i] + &w[i])
}

#[test]
fn matrices_form_an_abelian_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id = identity14();
    assert_eq!(x_matrix(&[int(0), int(0), int(0)]), id);
    for _ in 0..100 {
        let u = sample::vec3(&mut rng, 64, 3);
        let w = sample::vec3(&mut rng, 64, 3);
        let (xu, xw) = (x_matrix(&u), x_matrix(&w));
        assert_eq!(mat_mul(&x_matrix(&neg(&u)), &xu), id);
        assert_eq!(mat_mul(&xu, &xw), x_matrix(&sum(&u, &w)));
        assert_eq!(mat_mul(&xu, &xw), mat_mul(&xw, &xu));
    }
}

#[test]
fn multiplier_transform_is_the_covector_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let m = LagrangeVec14::from_state(&sample::tensor_state(&mut rng, 16));
        let v = sample::vec3(&mut rng, 16, 2);
        let t = transform_lagrange(&m, &v);
        assert_eq!(t.to_flat(), covector_times(&m.to_flat(), &x_matrix(&v)));
        assert_eq!(t.lam_i, m.lam_i);
        assert_eq!(transform_lagrange(&t, &neg(&v)), m);
    }
}

#[test]
fn moments_recompose_and_pairing_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let mut hat = MomentVec14::from_flat(&std::array::from_fn(|_| sample::rational(&mut rng, 16, 3)));
        hat.f = sample::positive(&mut rng, 16, 3);
        hat.f_i = std::array::from_fn(|_| Rational::zero());
        let v = sample::vec3(&mut rng, 16, 2);
        let f = recompose_moments(&hat, &v);
        assert_eq!(velocity_from_moments(&f), Some(v.clone()));
        assert_eq!(f.to_flat(), {
            let x = x_matrix(&v);
            let h = hat.to_flat();
            std::array::from_fn::<Rational, 14, _>(|a| (0..14).map(|b| &x[a][b] * &h[b]).sum())
        });
        // μ_A F^A is frame independent
        let m = LagrangeVec14::from_state(&sample::tensor_state(&mut rng, 16));
        let rel = transform_lagrange(&m, &v);
        let pair = |m: &[Rational; 14], f: &[Rational; 14]| -> Rational {
            (0..14).map(|a| flat_weight(a) * &m[a] * &f[a]).sum()
        };
        assert_eq!(pair(&m.to_flat(), &f.to_flat()), pair(&rel.to_flat(), &hat.to_flat()));
    }
}
