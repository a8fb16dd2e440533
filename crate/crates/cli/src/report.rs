//! Line-delimited JSON reports.

use std::io::Write;

use closure14_core::closure_gen::{CheckResult, VerificationReport};
use closure14_core::rational::{fmt_rat, Rational};
use serde_json::{json, Map, Value as Json};

/// A value that can be written into a report.
pub trait Emit {
    fn emit(&self) -> Json;
}

impl Emit for Rational {
    fn emit(&self) -> Json {
        Json::String(fmt_rat(self))
    }
}

impl Emit for f64 {
    fn emit(&self) -> Json {
        json!(self)
    }
}

impl<T: Emit, const N: usize> Emit for [T; N] {
    fn emit(&self) -> Json {
        Json::Array(self.iter().map(Emit::emit).collect())
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    lines: Vec<Json>,
    failed: Vec<String>,
}

impl Report {
    pub fn new(command: &str, input: Json) -> Self {
        let mut r = Report::default();
        r.push(
            "header",
            "config",
            json!({
                "tool": "closure14",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "input": input,
            }),
        );
        r
    }

    /// Adds a line; `fields` must be a JSON object.
    pub fn push(&mut self, kind: &str, label: &str, fields: Json) {
        let mut m = Map::new();
        m.insert("kind".into(), kind.into());
        m.insert("label".into(), label.into());
        if let Json::Object(f) = fields {
            m.extend(f);
        }
        self.lines.push(Json::Object(m));
    }

    pub fn check(&mut self, c: &CheckResult, extra: Json) {
        let mut f = json!({ "passed": c.passed, "cases": c.cases });
        if let Some(d) = &c.detail {
            f["detail"] = d.clone().into();
        }
        if let Json::Object(e) = extra {
            f.as_object_mut().unwrap().extend(e);
        }
        if !c.passed {
            self.failed.push(c.label.clone());
        }
        self.push("check", &c.label, f);
    }

    pub fn verification(&mut self, rep: &VerificationReport, source: &str) {
        for c in &rep.checks {
            self.check(c, json!({ "source": source, "truncation": rep.truncation }));
        }
    }

    /// Records a failure that is not a [`CheckResult`].
    pub fn fail(&mut self, label: &str, fields: Json) {
        self.failed.push(label.to_string());
        self.push("error", label, fields);
    }

    pub fn passed(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn failures(&self) -> &[String] {
        &self.failed
    }

    pub fn lines(&self) -> &[Json] {
        &self.lines
    }

    /// Appends the summary line and writes everything.
    pub fn finish(mut self, out: &mut dyn Write) -> std::io::Result<bool> {
        let passed = self.passed();
        let failures = self.failed.clone();
        self.push("summary", "summary", json!({ "passed": passed, "failures": failures }));
        for l in &self.lines {
            writeln!(out, "{}", serde_json::to_string(l).expect("report line"))?;
        }
        Ok(passed)
    }
}
