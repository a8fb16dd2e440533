use closure14_core::closure_gen::{make_closure, solve_delta_coeffs, verify_closure};
use closure14_core::galilean::verify_galilean;
use closure14_core::iso_tensor::TensorState;
use closure14_core::rational::rat;
use closure14_core::sample;
use closure14_core::thermo14::{derived_coeffs, EqState, ExprMaterial};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("make_closure");
    g.sample_size(10);
    for n in [3u32, 4, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let fam = sample::psi_family(&mut rng, n);
        let free = sample::free_input(&mut rng, n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| make_closure(black_box(&fam), black_box(&free), n).unwrap())
        });
    }
    g.finish();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let free = sample::free_input(&mut rng, 6);
    c.bench_function("solve_delta_coeffs/6", |b| b.iter(|| solve_delta_coeffs(black_box(&free), 6).unwrap()));
}

fn verification(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    for n in [3u32, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + n as u64);
        let fam = sample::psi_family(&mut rng, n);
        let res = make_closure(&fam, &sample::free_input(&mut rng, n), n).unwrap();
        let states: Vec<TensorState> = (0..2).map(|_| sample::tensor_state(&mut rng, 16)).collect();
        g.bench_with_input(BenchmarkId::new("closure", n), &res, |b, res| b.iter(|| verify_closure(res)));
        g.bench_with_input(BenchmarkId::new("galilean", n), &res, |b, res| {
            b.iter(|| verify_galilean(res, &states))
        });
    }
    g.finish();
}

fn expansion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let fam = sample::psi_family(&mut rng, 4);
    let res = make_closure(&fam, &sample::free_input(&mut rng, 4), 4).unwrap();
    c.bench_function("expand/h_prime/4", |b| b.iter(|| res.h_prime.expand()));
    c.bench_function("expand/h_prime_k/4", |b| b.iter(|| res.h_prime_k.expand()));
}

fn thermo(c: &mut Criterion) {
    let m = ExprMaterial::ideal_gas(rat(5, 2));
    let s = EqState::new(rat(3, 2), rat(7, 5));
    c.bench_function("derived_coeffs/ideal_gas", |b| b.iter(|| derived_coeffs(&m, black_box(&s)).unwrap()));
}

criterion_group!(benches, generation, verification, expansion, thermo);
criterion_main!(benches);
