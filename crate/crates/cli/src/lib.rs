//! Batch front end: reads configuration files, runs generation, verification
//! or closure evaluation and writes a line-delimited JSON report.

pub mod config;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use closure14_core::closure_gen::{
    make_closure, verify_closure, ClosureError, ClosureResult, FreeInput, SECOND_ORDER_H_KEYS,
};
use closure14_core::galilean::{
    identity14, mat_mul, recompose_moments, transform_lagrange, verify_galilean, x_matrix,
    LagrangeVec14, Velocity3,
};
use closure14_core::iso_tensor::{key_order, IsoKey, TensorState};
use closure14_core::sample;
use closure14_core::thermo14::{
    bridge_check, derived_coeffs, entropy_flux, entropy_second_order, first_order_multipliers,
    flux_closure_first_order, validate_material, EqState, ExprMaterial, MaterialModel,
    NonEqFields, Scalar, ThermoError, MATERIAL_CHECKS,
};
use closure14_core::{ExprError, Rational};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};
use thiserror::Error;

use config::PsiSpec;
use report::{Emit, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "closure14", version, about = "Generate and verify 14-moment closures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the coefficient table and write h′, h′^k.
    Generate(RunArgs),
    /// Generate, then check every constraint and the Galilean conditions.
    Verify(RunArgs),
    /// Evaluate the second-order closure of a material (or of a ψ-model).
    Closure2(RunArgs),
    /// Apply frame changes to moments and multipliers.
    Transform(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Closure order N.
    #[arg(long)]
    pub order: Option<u32>,
    /// ψ specification file.
    #[arg(long)]
    pub psi: Option<PathBuf>,
    /// Free-function file (seeds, integration constants, overrides).
    #[arg(long)]
    pub free: Option<PathBuf>,
    /// Material definition file.
    #[arg(long)]
    pub material: Option<PathBuf>,
    /// JSON state list.
    #[arg(long)]
    pub states: Option<PathBuf>,
    /// Report destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for sampled evaluation states.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of sampled states when no state file is given.
    #[arg(long, default_value_t = 3)]
    pub samples: usize,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn need<'a, T>(x: &'a Option<T>, flag: &str, cmd: &str) -> Result<&'a T, CliError> {
    x.as_ref()
        .ok_or_else(|| CliError::Config(format!("`{cmd}` needs --{flag}")))
}

fn order(a: &RunArgs, cmd: &str) -> Result<u32, CliError> {
    let n = *need(&a.order, "order", cmd)?;
    if n == 0 {
        return Err(CliError::Config("--order must be at least 1".into()));
    }
    Ok(n)
}

fn free_input(a: &RunArgs, n: u32) -> Result<FreeInput, CliError> {
    let f = match &a.free {
        Some(p) => config::parse_free(&read(p)?)?,
        None => FreeInput::default(),
    };
    Ok(f.with_default_seeds(n))
}

fn closure(a: &RunArgs, cmd: &str) -> Result<(u32, PsiSpec, ClosureResult), CliError> {
    let n = order(a, cmd)?;
    let spec = PsiSpec::parse(&read(need(&a.psi, "psi", cmd)?)?)?;
    let free = free_input(a, n)?;
    let res = make_closure(&spec.family(n), &free, n).map_err(|e| match e {
        ClosureError::BadOverride(..) | ClosureError::SeedNotLambdaOnly(_) | ClosureError::MissingSeed(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Config(format!("generation failed: {other}")),
    })?;
    Ok((n, spec, res))
}

fn closure_input(a: &RunArgs, n: u32, spec: &PsiSpec, res: &ClosureResult) -> Json {
    json!({
        "order": n,
        "psi": spec.echo(),
        "free": res.provenance,
        "seed": a.seed,
    })
}

/// Every admissible key of order ≤ `max` with the given parity of p + r.
fn keys(max: u32, parity: u32) -> Vec<IsoKey> {
    let mut out = Vec::new();
    for o in 0..=max {
        for p in 0..=o {
            for q in 0..=(o - p) {
                let r = o - p - q;
                if (p + r) % 2 == parity {
                    out.push((p, q, r));
                }
            }
        }
    }
    out
}

fn key_json(k: &IsoKey) -> Json {
    json!([k.0, k.1, k.2])
}

fn generate(a: &RunArgs) -> Result<Report, CliError> {
    let (n, spec, res) = closure(a, "generate")?;
    let mut rep = Report::new("generate", closure_input(a, n, &spec, &res));
    for (&(q, r), f) in res.table.base_entries() {
        let label = if q == 0 { "eq-cris11" } else { "eq-cris12a" };
        rep.push(
            "table",
            label,
            json!({ "index": [1, q, r, 0], "value": f.to_string() }),
        );
    }
    for (&(p, q, r, s), f) in res.table.overrides() {
        rep.push(
            "table",
            "override",
            json!({ "index": [p, q, r, s], "value": f.to_string() }),
        );
    }
    let mut scalar_keys = keys(n, 0);
    if n == 3 {
        scalar_keys = SECOND_ORDER_H_KEYS.to_vec();
    }
    for k in scalar_keys {
        rep.push(
            "coefficient",
            "eq-cris9",
            json!({ "potential": "h_prime", "key": key_json(&k), "order": key_order(&k),
                    "value": res.h_prime.get(k).to_string() }),
        );
    }
    for k in keys(n.saturating_sub(1), 1) {
        rep.push(
            "coefficient",
            "eq-cris10",
            json!({ "potential": "h_prime_k", "key": key_json(&k), "order": key_order(&k) + 1,
                    "value": res.h_prime_k.get(k).to_string() }),
        );
    }
    Ok(rep)
}

fn tensor_state_json(s: &TensorState) -> Json {
    json!({
        "mu": s.mu.emit(),
        "lam": s.lam.emit(),
        "mu_i": s.mu_vec.emit(),
        "mu_ij": s.mu_mat.emit(),
        "lam_i": s.lam_vec.emit(),
    })
}

fn verify(a: &RunArgs) -> Result<Report, CliError> {
    let (n, spec, res) = closure(a, "verify")?;
    let states = match &a.states {
        Some(p) => config::parse_tensor_states(&read(p)?)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..a.samples).map(|_| sample::tensor_state(&mut rng, 64)).collect()
        }
    };
    let mut rep = Report::new("verify", closure_input(a, n, &spec, &res));
    rep.push(
        "states",
        "eq-7.3",
        json!({ "states": states.iter().map(tensor_state_json).collect::<Vec<_>>() }),
    );
    rep.verification(&verify_closure(&res), "closure");
    rep.verification(&verify_galilean(&res, &states), "galilean");
    Ok(rep)
}

fn thermo_label(e: &ThermoError) -> String {
    match e {
        ThermoError::ConstraintViolation { label, .. } => format!("eq-{label}"),
        ThermoError::SingularState(_) => "eq-cris31".into(),
        ThermoError::BridgeMismatch { .. } => "eq-p.2q".into(),
        _ => "input".into(),
    }
}

fn emit3<S: Scalar + Emit>(m: &[[S; 3]; 3]) -> Json {
    Json::Array(m.iter().map(|r| Json::Array(r.iter().map(Emit::emit).collect())).collect())
}

/// Evaluates every second-order quantity at one state.
fn closure2_state<S: Scalar + Emit, M: MaterialModel<S>>(
    m: &M,
    s: &EqState<S>,
    n: &NonEqFields<S>,
    idx: usize,
    rep: &mut Report,
) -> Result<(), ThermoError> {
    let c = derived_coeffs(m, s)?;
    for (name, label, v) in [
        ("h2", "eq-cris31", &c.h2),
        ("h3", "eq-ag.2", &c.h3),
        ("h4", "eq-cris27", &c.h4),
        ("K", "eq-af.3", &c.k),
        ("D", "eq-cris31", &c.d),
        ("D1", "eq-beta.22", &c.d1),
        ("beta1", "eq-cris26", &c.beta1),
        ("beta2", "eq-al.1", &c.beta2),
        ("beta3", "eq-al.2", &c.beta3),
    ] {
        rep.push("value", label, json!({ "state": idx, "name": name, "value": v.emit() }));
    }
    let d = first_order_multipliers(m, s, n)?;
    for (name, v) in [("d_mu", &d.d_mu), ("d_lam", &d.d_lam), ("mu_ll", &d.mu_ll)] {
        rep.push("value", "eq-ae.1", json!({ "state": idx, "name": name, "value": v.emit() }));
    }
    rep.push("value", "eq-ad.2", json!({ "state": idx, "name": "mu_dev", "value": emit3(&d.mu_dev) }));
    rep.push("value", "eq-af.1", json!({ "state": idx, "name": "mu_i", "value": d.mu_i.emit() }));
    rep.push("value", "eq-af.1", json!({ "state": idx, "name": "lam_i", "value": d.lam_i.emit() }));
    let f = flux_closure_first_order(m, s, n)?;
    let fkij: Vec<Json> = f.fkij.iter().map(emit3).collect();
    rep.push("value", "eq-ai.2", json!({ "state": idx, "name": "F_kij", "value": fkij }));
    rep.push("value", "eq-af.3", json!({ "state": idx, "name": "G_kill", "value": emit3(&f.gkill) }));
    let h2 = entropy_second_order(m, s, n)?;
    rep.push("value", "eq-ag.1", json!({ "state": idx, "name": "h2_entropy", "value": h2.emit() }));
    let hk = entropy_flux(m, s, n)?;
    rep.push("value", "eq-ai.1", json!({ "state": idx, "name": "entropy_flux", "value": hk.emit() }));
    Ok(())
}

fn needs_float(m: &ExprMaterial, s: &EqState<Rational>) -> bool {
    matches!(
        MaterialModel::<Rational>::point(m, s),
        Err(ThermoError::Expr(ExprError::UnknownFunction(_)))
    )
}

fn to_f64_state(s: &EqState<Rational>, n: &NonEqFields<Rational>) -> (EqState<f64>, NonEqFields<f64>) {
    let f = |x: &Rational| <f64 as Scalar>::from_rat(x);
    (
        EqState::new(f(&s.rho), f(&s.t)),
        NonEqFields {
            pi: f(&n.pi),
            fdev: std::array::from_fn(|i| std::array::from_fn(|j| f(&n.fdev[i][j]))),
            q: std::array::from_fn(|i| f(&n.q[i])),
        },
    )
}

fn closure2(a: &RunArgs) -> Result<Report, CliError> {
    let states = config::parse_eq_states(&read(need(&a.states, "states", "closure2")?)?)?;
    if let Some(p) = &a.psi {
        let spec = PsiSpec::parse(&read(p)?)?;
        let free = free_input(a, 3)?;
        let mut rep = Report::new("closure2", json!({ "psi": spec.echo(), "bridge": true, "states": states.len() }));
        match bridge_check(&spec.family(3), &free, &states) {
            Ok(b) => {
                for s in &b.states {
                    rep.push(
                        "check",
                        "eq-p.2q",
                        json!({ "passed": true, "state": s.index, "mode": s.mode, "compared": s.compared }),
                    );
                }
            }
            Err(e) => rep.fail(&thermo_label(&e), json!({ "message": e.to_string() })),
        }
        return Ok(rep);
    }
    let text = read(need(&a.material, "material", "closure2")?)?;
    let m = ExprMaterial::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let echo: serde_json::Map<String, Json> = m
        .exprs
        .iter()
        .map(|(k, e)| (k.key().to_string(), Json::String(format!("{e}"))))
        .collect();
    let mut rep = Report::new("closure2", json!({ "material": echo, "states": states.len() }));
    let float = states.iter().any(|(s, _)| needs_float(&m, s));
    let validation = if float {
        let probes: Vec<EqState<f64>> = states.iter().map(|(s, n)| to_f64_state(s, n).0).collect();
        validate_material(&m, &probes)
    } else {
        let probes: Vec<EqState<Rational>> = states.iter().map(|(s, _)| s.clone()).collect();
        validate_material(&m, &probes)
    };
    match validation {
        Ok(_) => {
            for l in MATERIAL_CHECKS {
                rep.push("check", &format!("eq-{l}"), json!({ "passed": true, "exact": !float }));
            }
        }
        Err(e) => rep.fail(&thermo_label(&e), json!({ "message": e.to_string() })),
    }
    for (i, (s, n)) in states.iter().enumerate() {
        let r = if float {
            let (sf, nf) = to_f64_state(s, n);
            closure2_state(&m, &sf, &nf, i, &mut rep)
        } else {
            closure2_state(&m, s, n, i, &mut rep)
        };
        if let Err(e) = r {
            rep.fail(&thermo_label(&e), json!({ "state": i, "message": e.to_string() }));
        }
    }
    Ok(rep)
}

fn neg(v: &Velocity3) -> Velocity3 {
    std::array::from_fn(|i| -v[i].clone())
}

fn transform(a: &RunArgs) -> Result<Report, CliError> {
    let cases = config::parse_transform_cases(&read(need(&a.states, "states", "transform")?)?)?;
    let mut rep = Report::new("transform", json!({ "cases": cases.len() }));
    for (i, c) in cases.iter().enumerate() {
        let group = mat_mul(&x_matrix(&neg(&c.v)), &x_matrix(&c.v)) == identity14();
        if !group {
            rep.fail("eq-4.2", json!({ "case": i }));
        }
        if let Some(m) = &c.moments {
            for a in 0..3 {
                for b in 0..3 {
                    if m.f_ij[a][b] != m.f_ij[b][a] {
                        return Err(CliError::Config(format!("case {i}: F_ij is not symmetric")));
                    }
                }
            }
            let f = recompose_moments(m, &c.v);
            let back = recompose_moments(&f, &neg(&c.v));
            rep.push(
                "value",
                "eq-3.2",
                json!({ "case": i, "name": "moments", "value": f.to_flat().emit(), "round_trip": back == *m }),
            );
            if back != *m {
                rep.fail("eq-5.1", json!({ "case": i, "name": "moments" }));
            }
        }
        if let Some(m) = &c.multipliers {
            let t = transform_lagrange(m, &c.v);
            let back: LagrangeVec14 = transform_lagrange(&t, &neg(&c.v));
            rep.push(
                "value",
                "eq-7.1",
                json!({ "case": i, "name": "multipliers", "value": t.to_flat().emit(), "round_trip": back == *m }),
            );
            if back != *m {
                rep.fail("eq-5.1", json!({ "case": i, "name": "multipliers" }));
            }
        }
    }
    Ok(rep)
}

/// Runs one command and writes its report; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (args, result) = match &cli.command {
        Command::Generate(a) => (a, generate(a)),
        Command::Verify(a) => (a, verify(a)),
        Command::Closure2(a) => (a, closure2(a)),
        Command::Transform(a) => (a, transform(a)),
    };
    let rep = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("closure14: {e}");
            return EXIT_CONFIG;
        }
    };
    let written = match &args.out {
        Some(p) => fs::File::create(p).and_then(|mut f| {
            let ok = rep.clone().finish(&mut f)?;
            f.flush()?;
            Ok(ok)
        }),
        None => rep.clone().finish(&mut std::io::stdout().lock()),
    };
    match written {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("closure14: failed checks: {}", rep.failures().join(", "));
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("closure14: cannot write report: {e}");
            EXIT_CONFIG
        }
    }
}
