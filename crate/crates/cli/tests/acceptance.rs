//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use closure14_core::closure_gen::{
    build_H1, make_closure, solve_delta_coeffs, table_checks, verify_closure, ClosureResult,
    FreeInput, PsiFamily,
};
use closure14_core::galilean::{identity14, mat_mul, verify_galilean, x_matrix, Velocity3};
use closure14_core::iso_tensor::{key_order, TensorState};
use closure14_core::rational::{int, rat, Rational};
use closure14_core::sample;
use closure14_core::scalar_field::{sf, SVar, ScalarFn};
use closure14_core::thermo14::{
    bridge_check, derived_coeffs, entropy_flux, entropy_second_order, first_order_multipliers,
    flux_closure_first_order, BridgeMode, EqState, ExprMaterial, NonEqFields, ThermoError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(t < limit, || format!("{what} took {:.2?}, limit {limit:?}", t))
}

fn neg(v: &Velocity3) -> Velocity3 {
    std::array::from_fn(|i| -v[i].clone())
}

fn galilean_group() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id = identity14();
    for n in 0..100 {
        let u = sample::vec3(&mut rng, 64, 3);
        let w = sample::vec3(&mut rng, 64, 3);
        let sum: Velocity3 = std::array::from_fn(|i| &u[i] + &w[i]);
        let xu = x_matrix(&u);
        ensure(mat_mul(&x_matrix(&neg(&u)), &xu) == id, || format!("inverse fails for pair {n}"))?;
        ensure(mat_mul(&xu, &x_matrix(&w)) == x_matrix(&sum), || format!("composition fails for pair {n}"))?;
    }
    within(start.elapsed(), Duration::from_secs(1), "100 pairs")?;
    Ok("100 pairs, exact".into())
}

fn particular_solution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut slowest = Duration::ZERO;
    for f in 0..5 {
        let start = Instant::now();
        let fam = sample::psi_family(&mut rng, 4);
        let h = build_H1(&fam, 4).map_err(|e| format!("family {f}: {e}"))?;
        let rep = verify_closure(&ClosureResult::from_h(h, 4));
        for label in ["eq-9.1a", "eq-9.1b", "eq-9.1c", "eq-9.1d", "eq-9.3"] {
            let c = rep.check(label).ok_or(format!("{label} not run"))?;
            ensure(c.passed && c.cases > 0, || format!("family {f} {label}: {:?}", c.detail))?;
        }
        ensure(rep.truncation == 2, || format!("truncation {}", rep.truncation))?;
        let t = start.elapsed();
        within(t, Duration::from_secs(30), "one family")?;
        slowest = slowest.max(t);
    }
    Ok(format!("5 families at N=4, slowest {slowest:.2?}"))
}

/// Closures shared by the recursion, Property 1 and Galilean criteria.
struct Generated {
    closures: Vec<ClosureResult>,
}

fn generate_closures() -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut closures = Vec::new();
    for n in 2..=5 {
        let fam = sample::psi_family(&mut rng, n);
        let free = sample::free_input(&mut rng, n);
        closures.push(make_closure(&fam, &free, n).expect("closure"));
    }
    Generated { closures }
}

fn recursion_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let labels = [
        "eq-15.2a", "eq-15.2b", "eq-17.1", "eq-beta.3a", "eq-beta.4a", "eq-cris1", "eq-cris2",
        "eq-cris3", "eq-cris5", "eq-cris6",
    ];
    for s in 0..5 {
        let free = sample::free_input(&mut rng, 5);
        let table = solve_delta_coeffs(&free, 5).map_err(|e| format!("seed {s}: {e}"))?;
        let checks = table_checks(&table);
        for c in &checks {
            ensure(c.passed, || format!("seed {s} {}: {:?}", c.label, c.detail))?;
        }
        for l in &labels {
            ensure(checks.iter().any(|c| c.label == **l), || format!("{l} not checked"))?;
        }
        let fam = sample::psi_family(&mut rng, 5);
        let res = make_closure(&fam, &free, 5).map_err(|e| format!("seed {s}: {e}"))?;
        let rep = verify_closure(&res);
        ensure(rep.passed(), || format!("seed {s}: {:?}", rep.failures().collect::<Vec<_>>()))?;
        ensure(rep.truncation == 3, || format!("truncation {}", rep.truncation))?;
    }
    Ok("5 seeds at N=5, table and full closure exact".into())
}

fn property_one(g: &Generated) -> Outcome {
    let mut parts = 0;
    for res in &g.closures {
        let dh = res.delta_h.expand();
        for k in 0..=res.order {
            for (key, f) in dh.homogeneous(k).terms() {
                let deg = f.mu_degree().unwrap_or(0);
                ensure(k >= 1 && deg + 1 <= k, || {
                    format!("N={} order {k} key {key:?} has mu-degree {deg}", res.order)
                })?;
                parts += 1;
            }
        }
    }
    Ok(format!("N=2..5, {parts} terms scanned"))
}

fn mutate(res: &ClosureResult, rng: &mut ChaCha8Rng) -> ClosureResult {
    let mut out = res.clone();
    let max = res.order - 2;
    let bump = ScalarFn::term(rat(rng.gen_range(1..=5), rng.gen_range(1..=3)), 1, rng.gen_range(-2..=2), 0);
    let parity = if rng.gen_bool(0.5) { 0 } else { 1 };
    let keys: Vec<_> = (0..=max)
        .flat_map(|p| (0..=max).flat_map(move |q| (0..=max).map(move |r| (p, q, r))))
        .filter(|k| key_order(k) + parity <= max && (k.0 + k.2) % 2 == parity)
        .collect();
    let k = keys[rng.gen_range(0..keys.len())];
    if parity == 0 {
        out.h_prime.insert(k, bump).unwrap();
    } else {
        out.h_prime_k.insert(k, bump).unwrap();
    }
    out
}

fn galilean_conditions(g: &Generated) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let states: Vec<TensorState> = (0..2).map(|_| sample::tensor_state(&mut rng, 16)).collect();
    for res in &g.closures {
        let rep = verify_galilean(res, &states);
        ensure(rep.passed(), || format!("N={}: {:?}", res.order, rep.failures().collect::<Vec<_>>()))?;
    }
    let base = g.closures.iter().find(|r| r.order == 4).expect("N=4 closure");
    let mut detected = 0;
    for _ in 0..20 {
        if !verify_galilean(&mutate(base, &mut rng), &states).passed() {
            detected += 1;
        }
    }
    ensure(detected == 20, || format!("{detected}/20 mutations detected"))?;
    Ok(format!("{} closures zero residual, 20/20 mutations detected", g.closures.len()))
}

fn log_seed() -> Outcome {
    let mut free = FreeInput::zero(4);
    free.h_seed.insert(1, sf("lam^-1"));
    free.int_consts.insert((0, 2), rat(-7, 3));
    let t = solve_delta_coeffs(&free, 4).map_err(|e| e.to_string())?;
    let h1110 = t.get(1, 1, 1, 0);
    ensure(h1110 == sf("3/2*lam^-2*log - 7/3*lam^-2"), || format!("H1110 = {h1110}"))?;
    let lam = sf("lam");
    let lam2 = sf("lam^2");
    let first = lam2
        .mul(&h1110)
        .diff(SVar::Lam)
        .add(&lam.mul(&t.get(1, 0, 1, 0).diff(SVar::Lam)).scale(&rat(3, 2)));
    let second = lam2
        .mul(&t.get(1, 2, 1, 0))
        .diff(SVar::Lam)
        .add(&lam.mul(&h1110.diff(SVar::Lam)).scale(&rat(5, 2)));
    ensure(first.is_zero() && second.is_zero(), || "identity residual nonzero".into())?;
    Ok(format!("H1110 = {h1110}"))
}

fn closed_forms() -> Outcome {
    let r = rat;
    let m = ExprMaterial::ideal_gas(r(5, 2));
    let s = EqState::new(int(1), int(1));
    let c = derived_coeffs(&m, &s).map_err(|e| e.to_string())?;
    let got = [c.h2, c.h3, c.h4, c.d, c.k];
    let want = [r(-2, 15), int(-1), int(-7), r(-8, 3), r(4, 7)];
    ensure(got == want, || format!("coefficients {got:?}"))?;

    let heat = NonEqFields { q: [int(1), int(0), int(0)], ..NonEqFields::zero() };
    let f = flux_closure_first_order(&m, &s, &heat).map_err(|e| e.to_string())?;
    ensure(f.fkij[0][0][0] == r(6, 7), || format!("F111 = {}", f.fkij[0][0][0]))?;

    let mut shear = NonEqFields::<Rational>::zero();
    shear.fdev[0][1] = int(1);
    shear.fdev[1][0] = int(1);
    let h2 = entropy_second_order(&m, &s, &shear).map_err(|e| e.to_string())?;
    ensure(h2 == r(-1, 2), || format!("h(2) = {h2}"))?;

    let both = NonEqFields { pi: int(1), q: [int(1), int(0), int(0)], ..NonEqFields::zero() };
    let flux = entropy_flux(&m, &s, &both).map_err(|e| e.to_string())?;
    ensure(flux == [r(5, 7), int(0), int(0)], || format!("flux {flux:?}"))?;
    Ok("diatomic gas at rho=T=1 exact".into())
}

fn bridge_states(seed: u64) -> Vec<(EqState<Rational>, NonEqFields<Rational>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10)
        .map(|_| {
            let s = EqState::new(sample::positive(&mut rng, 16, 3), sample::positive(&mut rng, 16, 3));
            let n = NonEqFields {
                pi: sample::rational(&mut rng, 8, 1),
                fdev: sample::traceless(&mut rng, 8, 1),
                q: sample::vec3(&mut rng, 8, 1),
            };
            (s, n)
        })
        .collect()
}

fn bridge() -> Outcome {
    let start = Instant::now();
    let mut modes = Vec::new();
    for (i, (psi1, seed)) in [
        ("mu^4*lam^(-1)", "lam"),
        ("mu^4*lam^(-2)", "lam"),
        ("mu^4*lam", "lam^2"),
        ("mu^4*lam^(-3)/2", "3*lam^(-2)"),
    ]
    .into_iter()
    .enumerate()
    {
        let fam = PsiFamily::from_psi1(&sf(psi1), &[], 1);
        let mut free = FreeInput::zero(3);
        free.h_seed.insert(1, sf(seed));
        let rep = bridge_check(&fam, &free, &bridge_states(80 + i as u64)).map_err(|e| format!("{psi1}: {e}"))?;
        ensure(rep.states.len() == 10, || format!("{psi1}: {} states", rep.states.len()))?;
        for st in &rep.states {
            ensure(st.mode != BridgeMode::Equilibrium, || format!("{psi1}: state {} equilibrium only", st.index))?;
            ensure(st.compared.iter().any(|c| c == "h2"), || format!("{psi1}: h2 not compared"))?;
        }
        modes.push(format!("{psi1}:{:?}", rep.states[0].mode));
    }
    within(start.elapsed(), Duration::from_secs(60), "bridge")?;
    Ok(format!("4 families x 10 states [{}]", modes.join(", ")))
}

fn degeneracy() -> Outcome {
    let m = ExprMaterial::ideal_gas(rat(3, 2));
    let s = EqState::new(int(1), int(1));
    let n = NonEqFields { pi: int(1), ..NonEqFields::zero() };
    let a = derived_coeffs(&m, &s);
    let b = first_order_multipliers(&m, &s, &n);
    ensure(matches!(a, Err(ThermoError::SingularState(_))), || format!("derived_coeffs: {a:?}"))?;
    ensure(matches!(b, Err(ThermoError::SingularState(_))), || format!("first_order_multipliers: {b:?}"))?;
    Ok("SingularState from both entry points".into())
}

fn cli_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("closure14-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let psi = dir.join("psi.txt");
    let free = dir.join("free.txt");
    std::fs::write(&psi, "psi1 = mu^4*lam^-1\n").map_err(|e| e.to_string())?;
    std::fs::write(&free, "seed.1 = lam^-2\n").map_err(|e| e.to_string())?;
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_closure14"))
            .args(["verify", "--order", "4", "--seed", "2024", "--psi"])
            .arg(&psi)
            .arg("--free")
            .arg(&free)
            .output()
    };
    let a = run().map_err(|e| e.to_string())?;
    let b = run().map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(a.status.success(), || format!("exit {:?}", a.status.code()))?;
    ensure(a.stdout == b.stdout, || "reports differ".into())?;
    Ok(format!("{} bytes identical", a.stdout.len()))
}

fn main() -> ExitCode {
    let generated = std::cell::OnceCell::new();
    let shared = || generated.get_or_init(generate_closures);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("galilean group", Box::new(galilean_group)),
        ("particular solution", Box::new(particular_solution)),
        ("recursion soundness", Box::new(recursion_soundness)),
        ("property 1", Box::new(|| property_one(shared()))),
        ("galilean conditions", Box::new(|| galilean_conditions(shared()))),
        ("log seed", Box::new(log_seed)),
        ("closed forms", Box::new(closed_forms)),
        ("bridge", Box::new(bridge)),
        ("degeneracy", Box::new(degeneracy)),
        ("cli determinism", Box::new(cli_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let t = start.elapsed();
        match out {
            Ok(d) => println!("PASS {:>2} {name} ({t:.2?}): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({t:.2?}): {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
