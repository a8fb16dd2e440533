//! Input file formats.
//!
//! ψ, free-input and material files are `key = value` text with `#` comments.
//! State lists are JSON arrays; rationals may be written as integers or as
//! `"num/den"` strings.

use std::collections::BTreeMap;

use closure14_core::closure_gen::{family_depth_needed, build_psi_family, FreeInput, PsiFamily};
use closure14_core::galilean::{LagrangeVec14, MomentVec14, Velocity3};
use closure14_core::iso_tensor::TensorState;
use closure14_core::rational::{int, parse_rat, Rational};
use closure14_core::thermo14::{EqState, NonEqFields};
use closure14_core::ScalarFn;
use serde_json::Value as Json;

use crate::CliError;

fn err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `(line number, key, value)` for every non-blank line.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn scalar(line: usize, v: &str) -> Result<ScalarFn, CliError> {
    v.parse()
        .map_err(|e| err(format!("line {line}: {e}")))
}

fn rational(line: usize, v: &str) -> Result<Rational, CliError> {
    parse_rat(v).ok_or_else(|| err(format!("line {line}: `{v}` is not a rational number")))
}

/// Parsed ψ specification.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSpec {
    /// Either ψ₁ or the equilibrium potential ψ₀.
    pub psi1: Option<ScalarFn>,
    pub psi0: Option<ScalarFn>,
    /// Integration constants, keyed by the index of the ψ they are added to.
    pub consts: BTreeMap<usize, ScalarFn>,
}

impl PsiSpec {
    /// Keys: `psi1` or `psi0` (exactly one), and `cN` for the λ-function added
    /// when integrating up to ψ_N.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut spec = PsiSpec {
            psi1: None,
            psi0: None,
            consts: BTreeMap::new(),
        };
        for (line, k, v) in key_values(text)? {
            match k.as_str() {
                "psi1" => spec.psi1 = Some(scalar(line, &v)?),
                "psi0" => spec.psi0 = Some(scalar(line, &v)?),
                _ => {
                    let n: usize = k
                        .strip_prefix('c')
                        .and_then(|d| d.parse().ok())
                        .ok_or_else(|| err(format!("line {line}: unknown key `{k}`")))?;
                    let f = scalar(line, &v)?;
                    if !f.is_mu_free() {
                        return Err(err(format!("line {line}: `{k}` must not depend on mu")));
                    }
                    spec.consts.insert(n, f);
                }
            }
        }
        match (&spec.psi1, &spec.psi0) {
            (Some(_), Some(_)) => Err(err("give either psi1 or psi0, not both")),
            (None, None) => Err(err("missing psi1 (or psi0)")),
            (Some(_), None) if spec.consts.keys().any(|&n| n < 2) => {
                Err(err("with psi1 given, constants start at c2"))
            }
            (None, Some(_)) if spec.consts.contains_key(&0) => Err(err("constants start at c1")),
            _ => Ok(spec),
        }
    }

    /// Family deep enough for order `n`.
    pub fn family(&self, n: u32) -> PsiFamily {
        let m = family_depth_needed(n).max(1);
        let c = |i: usize| self.consts.get(&i).cloned().unwrap_or_default();
        match (&self.psi1, &self.psi0) {
            (Some(p1), _) => {
                let consts: Vec<ScalarFn> = (2..=m).map(c).collect();
                PsiFamily::from_psi1(p1, &consts, m)
            }
            (None, Some(p0)) => {
                let consts: Vec<ScalarFn> = (1..=m).map(c).collect();
                build_psi_family(p0, &consts, m)
            }
            (None, None) => unreachable!("checked in parse"),
        }
    }

    pub fn echo(&self) -> Json {
        let mut m = serde_json::Map::new();
        if let Some(p) = &self.psi1 {
            m.insert("psi1".into(), p.to_string().into());
        }
        if let Some(p) = &self.psi0 {
            m.insert("psi0".into(), p.to_string().into());
        }
        for (n, f) in &self.consts {
            m.insert(format!("c{n}"), f.to_string().into());
        }
        Json::Object(m)
    }
}

/// Keys: `seed.R` (H_{1,0,R,0}), `const.Q.R` (integration constant of
/// H_{1,Q,R−1,0}) and `override.P.Q.R.S` (replaces one table entry).
pub fn parse_free(text: &str) -> Result<FreeInput, CliError> {
    let mut f = FreeInput::default();
    for (line, k, v) in key_values(text)? {
        let parts: Vec<&str> = k.split('.').collect();
        let nums: Result<Vec<u32>, _> = parts[1..].iter().map(|p| p.parse::<u32>()).collect();
        let nums = nums.map_err(|_| err(format!("line {line}: bad indices in `{k}`")))?;
        match (parts[0], nums.as_slice()) {
            ("seed", [r]) => {
                f.h_seed.insert(*r, scalar(line, &v)?);
            }
            ("const", [q, r]) => {
                f.int_consts.insert((*q, *r), rational(line, &v)?);
            }
            ("override", [p, q, r, s]) => {
                f.overrides.insert((*p, *q, *r, *s), scalar(line, &v)?);
            }
            _ => return Err(err(format!("line {line}: unknown key `{k}`"))),
        }
    }
    Ok(f)
}

pub fn rat_json(v: &Json, what: &str) -> Result<Rational, CliError> {
    match v {
        Json::String(s) => parse_rat(s).ok_or_else(|| err(format!("{what}: `{s}` is not rational"))),
        Json::Number(n) => n
            .as_i64()
            .map(int)
            .ok_or_else(|| err(format!("{what}: write non-integers as \"num/den\" strings"))),
        _ => Err(err(format!("{what}: expected a number"))),
    }
}

fn field<'a>(obj: &'a Json, key: &str) -> Option<&'a Json> {
    obj.get(key)
}

fn vec3_json(v: Option<&Json>, what: &str) -> Result<[Rational; 3], CliError> {
    match v {
        None => Ok([int(0), int(0), int(0)]),
        Some(Json::Array(a)) if a.len() == 3 => {
            let mut out = [int(0), int(0), int(0)];
            for (i, x) in a.iter().enumerate() {
                out[i] = rat_json(x, what)?;
            }
            Ok(out)
        }
        Some(_) => Err(err(format!("{what}: expected 3 numbers"))),
    }
}

fn mat3_json(v: Option<&Json>, what: &str) -> Result<[[Rational; 3]; 3], CliError> {
    match v {
        None => Ok(std::array::from_fn(|_| [int(0), int(0), int(0)])),
        Some(Json::Array(rows)) if rows.len() == 3 => {
            let mut out: [[Rational; 3]; 3] = std::array::from_fn(|_| [int(0), int(0), int(0)]);
            for (i, row) in rows.iter().enumerate() {
                out[i] = vec3_json(Some(row), what)?;
            }
            Ok(out)
        }
        Some(_) => Err(err(format!("{what}: expected a 3x3 array"))),
    }
}

fn scalar_json(v: Option<&Json>, what: &str, default: Option<Rational>) -> Result<Rational, CliError> {
    match (v, default) {
        (Some(x), _) => rat_json(x, what),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(err(format!("missing `{what}`"))),
    }
}

fn array(text: &str) -> Result<Vec<Json>, CliError> {
    match serde_json::from_str(text) {
        Ok(Json::Array(a)) => Ok(a),
        Ok(_) => Err(err("state file must hold a JSON array")),
        Err(e) => Err(err(format!("state file: {e}"))),
    }
}

/// `[{"rho": .., "T": .., "pi": .., "q": [..], "fdev": [[..]]}, ..]`
pub fn parse_eq_states(text: &str) -> Result<Vec<(EqState<Rational>, NonEqFields<Rational>)>, CliError> {
    array(text)?
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let what = |k: &str| format!("state {i}: {k}");
            let s = EqState::new(
                scalar_json(field(o, "rho"), &what("rho"), None)?,
                scalar_json(field(o, "T"), &what("T"), None)?,
            );
            let n = NonEqFields {
                pi: scalar_json(field(o, "pi"), &what("pi"), Some(int(0)))?,
                fdev: mat3_json(field(o, "fdev"), &what("fdev"))?,
                q: vec3_json(field(o, "q"), &what("q"))?,
            };
            Ok((s, n))
        })
        .collect()
}

fn lagrange_json(o: &Json, what: &str) -> Result<LagrangeVec14, CliError> {
    Ok(LagrangeVec14 {
        mu: scalar_json(field(o, "mu"), &format!("{what}.mu"), Some(int(0)))?,
        mu_i: vec3_json(field(o, "mu_i"), &format!("{what}.mu_i"))?,
        mu_ij: mat3_json(field(o, "mu_ij"), &format!("{what}.mu_ij"))?,
        lam: scalar_json(field(o, "lam"), &format!("{what}.lam"), None)?,
        lam_i: vec3_json(field(o, "lam_i"), &format!("{what}.lam_i"))?,
    })
}

/// `[{"mu": .., "lam": .., "mu_i": [..], "mu_ij": [[..]], "lam_i": [..]}, ..]`
pub fn parse_tensor_states(text: &str) -> Result<Vec<TensorState>, CliError> {
    array(text)?
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let s = lagrange_json(o, &format!("state {i}"))?.to_state();
            s.check_symmetric()
                .map_err(|e| err(format!("state {i}: {e}")))?;
            Ok(s)
        })
        .collect()
}

/// One frame change request.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformCase {
    pub v: Velocity3,
    pub multipliers: Option<LagrangeVec14>,
    pub moments: Option<MomentVec14>,
}

/// `[{"v": [..], "multipliers": {..}, "moments": {"F": .., "F_i": [..],
/// "F_ij": [[..]], "G": .., "G_i": [..]}}, ..]`
pub fn parse_transform_cases(text: &str) -> Result<Vec<TransformCase>, CliError> {
    array(text)?
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let what = format!("case {i}");
            let v = vec3_json(field(o, "v"), &format!("{what}.v"))?;
            let multipliers = field(o, "multipliers")
                .map(|m| lagrange_json(m, &format!("{what}.multipliers")))
                .transpose()?;
            let moments = field(o, "moments")
                .map(|m| -> Result<MomentVec14, CliError> {
                    Ok(MomentVec14 {
                        f: scalar_json(field(m, "F"), &format!("{what}.F"), Some(int(0)))?,
                        f_i: vec3_json(field(m, "F_i"), &format!("{what}.F_i"))?,
                        f_ij: mat3_json(field(m, "F_ij"), &format!("{what}.F_ij"))?,
                        g: scalar_json(field(m, "G"), &format!("{what}.G"), Some(int(0)))?,
                        g_i: vec3_json(field(m, "G_i"), &format!("{what}.G_i"))?,
                    })
                })
                .transpose()?;
            Ok(TransformCase { v, multipliers, moments })
        })
        .collect()
}
