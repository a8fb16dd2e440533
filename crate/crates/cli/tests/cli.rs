use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_closure14"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn closure14")
}

fn lines(out: &Output) -> Vec<Json> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn summary(ls: &[Json]) -> &Json {
    let last = ls.last().unwrap();
    assert_eq!(last["kind"], "summary");
    last
}

fn value<'a>(ls: &'a [Json], name: &str, state: u64) -> &'a Json {
    &ls.iter()
        .find(|l| l["kind"] == "value" && l["name"] == name && l["state"] == state)
        .unwrap_or_else(|| panic!("no value {name} for state {state}"))["value"]
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_order_three_lists_second_order_keys() {
    let d = TempDir::new().unwrap();
    let psi = write(d.path(), "psi.txt", "psi1 = mu^4*lam^-1\n");
    let free = write(d.path(), "free.txt", "seed.1 = lam^-2\n");
    let out = run(&["generate", "--order", "3", "--psi", p(&psi), "--free", p(&free)]);
    assert_eq!(out.status.code(), Some(0));
    let ls = lines(&out);
    assert_eq!(ls[0]["kind"], "header");
    assert_eq!(ls[0]["input"]["order"], 3);
    let h: Vec<_> = ls.iter().filter(|l| l["label"] == "eq-cris9").collect();
    assert_eq!(h.len(), 10);
    assert!(ls.iter().any(|l| l["label"] == "eq-cris10"));
    assert_eq!(summary(&ls)["passed"], true);
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let d = TempDir::new().unwrap();
    let psi = write(d.path(), "psi.txt", "psi1 = mu^4*lam^-1\n");
    let free = write(d.path(), "free.txt", "seed.1 = lam^-2\n");
    let args = ["verify", "--order", "4", "--psi", p(&psi), "--free", p(&free), "--seed", "11"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["verify", "--order", "4", "--psi", p(&psi), "--free", p(&free), "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn out_flag_writes_the_same_report() {
    let d = TempDir::new().unwrap();
    let psi = write(d.path(), "psi.txt", "psi1 = mu^4*lam^-1\n");
    let dest = d.path().join("r.jsonl");
    let a = run(&["verify", "--order", "3", "--psi", p(&psi)]);
    let b = run(&["verify", "--order", "3", "--psi", p(&psi), "--out", p(&dest)]);
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(fs::read(&dest).unwrap(), a.stdout);
}

#[test]
fn tampered_table_fails_with_exit_one() {
    let d = TempDir::new().unwrap();
    let psi = write(d.path(), "psi.txt", "psi1 = mu^4*lam^-1\n");
    let free = write(d.path(), "free.txt", "seed.1 = lam^-1\noverride.1.1.1.0 = 1\n");
    let out = run(&["verify", "--order", "4", "--psi", p(&psi), "--free", p(&free)]);
    assert_eq!(out.status.code(), Some(1));
    let ls = lines(&out);
    let s = summary(&ls);
    assert_eq!(s["passed"], false);
    let failures: Vec<&str> = s["failures"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(failures.contains(&"eq-17.1"), "{failures:?}");
}

#[test]
fn closure2_diatomic_values() {
    let d = TempDir::new().unwrap();
    let gas = write(
        d.path(),
        "gas.txt",
        "cv = 5/2\np = rho*T\nepsilon = cv*T\nphi001 = 7*rho*T^2\nphi011 = -27*rho*T^3\n",
    );
    let states = write(d.path(), "s.json", r#"[{"rho":1,"T":1,"pi":1,"q":[1,0,0]}]"#);
    let out = run(&["closure2", "--material", p(&gas), "--states", p(&states)]);
    assert_eq!(out.status.code(), Some(0));
    let ls = lines(&out);
    for (name, want) in [
        ("h2", "-2/15"),
        ("h3", "-1"),
        ("h4", "-7"),
        ("D", "-8/3"),
        ("K", "4/7"),
        ("D1", "14"),
        ("beta3", "-18"),
        ("beta2", "-26/5"),
    ] {
        assert_eq!(value(&ls, name, 0), want, "{name}");
    }
    assert_eq!(value(&ls, "entropy_flux", 0), &serde_json::json!(["5/7", "0", "0"]));
}

#[test]
fn closure2_transcendental_material_uses_floats() {
    let d = TempDir::new().unwrap();
    let gas = write(
        d.path(),
        "gas.txt",
        "cv = 5/2\np = rho*T\nepsilon = cv*T + ln(T) - ln(T)\nphi001 = 7*rho*T^2\nphi011 = -27*rho*T^3\n",
    );
    let states = write(d.path(), "s.json", r#"[{"rho":1,"T":2}]"#);
    let out = run(&["closure2", "--material", p(&gas), "--states", p(&states)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ls = lines(&out);
    let k = value(&ls, "K", 0).as_f64().unwrap();
    assert!((k - 4.0 / 7.0).abs() < 1e-9);
}

#[test]
fn closure2_monatomic_is_singular() {
    let d = TempDir::new().unwrap();
    let gas = write(
        d.path(),
        "gas.txt",
        "cv = 3/2\np = rho*T\nepsilon = cv*T\nphi001 = 5*rho*T^2\nphi011 = -21*rho*T^3\n",
    );
    let states = write(d.path(), "s.json", r#"[{"rho":1,"T":1}]"#);
    let out = run(&["closure2", "--material", p(&gas), "--states", p(&states)]);
    assert_eq!(out.status.code(), Some(1));
    let ls = lines(&out);
    assert!(ls.iter().any(|l| l["kind"] == "error" && l["label"] == "eq-cris31"));
}

#[test]
fn closure2_bridge_modes() {
    let d = TempDir::new().unwrap();
    let states = write(d.path(), "s.json", r#"[{"rho":1,"T":1,"pi":1,"q":[1,0,0]}]"#);
    let free = write(d.path(), "free.txt", "seed.1 = lam\n");
    for (psi1, mode) in [("mu^4*lam^-2", "full"), ("mu^4*lam^-1", "shear-heat")] {
        let psi = write(d.path(), "psi.txt", &format!("psi1 = {psi1}\n"));
        let out = run(&["closure2", "--psi", p(&psi), "--free", p(&free), "--states", p(&states)]);
        assert_eq!(out.status.code(), Some(0));
        let ls = lines(&out);
        let c = ls.iter().find(|l| l["label"] == "eq-p.2q").unwrap();
        assert_eq!(c["mode"], mode);
        assert_eq!(c["passed"], true);
    }
}

#[test]
fn transform_at_rest_is_identity() {
    let d = TempDir::new().unwrap();
    let cases = write(
        d.path(),
        "t.json",
        r#"[{"v":[0,0,0],"moments":{"F":2,"F_ij":[[1,0,0],[0,1,0],[0,0,1]],"G":6},"multipliers":{"mu":1,"lam":"1/2"}}]"#,
    );
    let out = run(&["transform", "--states", p(&cases)]);
    assert_eq!(out.status.code(), Some(0));
    let ls = lines(&out);
    let m = ls.iter().find(|l| l["name"] == "moments").unwrap();
    assert_eq!(m["round_trip"], true);
    let want: Vec<&str> = vec!["2", "0", "0", "0", "1", "0", "0", "1", "0", "1", "6", "0", "0", "0"];
    assert_eq!(m["value"], serde_json::json!(want));
}

#[test]
fn configuration_errors_exit_two() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(&["verify", "--order", "3"]).status.code(), Some(2));
    let missing = d.path().join("missing.txt");
    assert_eq!(run(&["verify", "--order", "3", "--psi", p(&missing)]).status.code(), Some(2));
    let bad = write(d.path(), "psi.txt", "psi1 = mu^4*(lam\n");
    assert_eq!(run(&["generate", "--order", "3", "--psi", p(&bad)]).status.code(), Some(2));
    let states = write(d.path(), "s.json", r#"[{"rho":-1,"T":1}]"#);
    let gas = write(d.path(), "g.txt", "p = rho*T\nepsilon = T\nphi001 = rho\nphi011 = rho\n");
    let out = run(&["closure2", "--material", p(&gas), "--states", p(&states)]);
    assert_ne!(out.status.code(), Some(0));
}
