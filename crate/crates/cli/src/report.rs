use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Number, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Why a run stopped early; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Malformed or inconsistent input (exit status 2).
    Input(String),
    /// A computation that could not be completed or certified (exit status 1).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<mcotype::Error> for Failure {
    fn from(e: mcotype::Error) -> Self {
        use mcotype::Error as E;
        match e {
            E::InvalidInput(_)
            | E::DimensionMismatch { .. }
            | E::NotReversible { .. }
            | E::NotNested { .. } => Failure::Input(e.to_string()),
            E::NotMartingale { .. } | E::Numerical(_) | E::Violation(_) => {
                Failure::Runtime(e.to_string())
            }
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// A float as JSON, with non-finite values written as strings.
pub fn float(x: f64) -> Value {
    match Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None if x.is_nan() => Value::String("nan".into()),
        None if x > 0.0 => Value::String("inf".into()),
        None => Value::String("-inf".into()),
    }
}

/// Serializes through an intermediate tree that keeps infinities, so they can be written as `"inf"`.
pub fn to_json<S: Serialize + ?Sized>(v: &S) -> Value {
    convert(serde_value::to_value(v).expect("report values are serializable"))
}

fn convert(v: serde_value::Value) -> Value {
    use serde_value::Value as V;
    match v {
        V::Bool(b) => Value::Bool(b),
        V::U8(x) => x.into(),
        V::U16(x) => x.into(),
        V::U32(x) => x.into(),
        V::U64(x) => x.into(),
        V::I8(x) => x.into(),
        V::I16(x) => x.into(),
        V::I32(x) => x.into(),
        V::I64(x) => x.into(),
        V::F32(x) => float(x as f64),
        V::F64(x) => float(x),
        V::Char(c) => Value::String(c.to_string()),
        V::String(s) => Value::String(s),
        V::Unit | V::Option(None) => Value::Null,
        V::Option(Some(b)) | V::Newtype(b) => convert(*b),
        V::Seq(items) => Value::Array(items.into_iter().map(convert).collect()),
        V::Bytes(b) => Value::Array(b.into_iter().map(Value::from).collect()),
        V::Map(m) => Value::Object(
            m.into_iter()
                .map(|(k, v)| {
                    let key = match convert(k) {
                        Value::String(s) => s,
                        other => other.to_string(),
                    };
                    (key, convert(v))
                })
                .collect(),
        ),
    }
}

/// A named invariant evaluated by a command.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(id: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a command produces.
pub struct Report {
    pub command: &'static str,
    pub inputs: Value,
    pub result: Value,
    pub checks: Vec<Check>,
    pub summary: Vec<(String, Value)>,
}

impl Report {
    pub fn new(command: &'static str, inputs: Value) -> Self {
        Self {
            command,
            inputs,
            result: Value::Null,
            checks: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn check(&mut self, id: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(id, passed, detail));
    }

    pub fn metric(&mut self, name: impl Into<String>, value: Value) {
        self.summary.push((name.into(), value));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.id.as_str())
            .collect()
    }

    pub fn to_json(&self, seed: u64, tol: Option<f64>) -> Value {
        let mut top = Map::new();
        top.insert("command".into(), json!(self.command));
        top.insert("version".into(), json!(VERSION));
        top.insert("seed".into(), json!(seed));
        top.insert("tol".into(), tol.map_or(Value::Null, float));
        top.insert("inputs".into(), self.inputs.clone());
        top.insert("result".into(), self.result.clone());
        top.insert("checks".into(), to_json(&self.checks));
        top.insert("passed".into(), json!(self.passed()));
        Value::Object(top)
    }

    pub fn to_csv(&self) -> Outcome<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Runtime(format!("writing CSV: {e}"));
        w.write_record(["command", "metric", "value"]).map_err(io)?;
        for (name, value) in &self.summary {
            let cell = match value {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            w.write_record([self.command, name.as_str(), cell.as_str()])
                .map_err(io)?;
        }
        for c in &self.checks {
            w.write_record([
                self.command,
                format!("check:{}", c.id).as_str(),
                if c.passed { "pass" } else { "fail" },
            ])
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Failure::Runtime(format!("writing CSV: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))
    }

    /// Writes `path` (JSON) and the CSV summary next to it, or prints the JSON when `path` is `None`.
    pub fn emit(&self, seed: u64, tol: Option<f64>, path: Option<&Path>) -> Outcome<()> {
        let text = serde_json::to_string_pretty(&self.to_json(seed, tol))
            .expect("JSON values serialize")
            + "\n";
        match path {
            None => print!("{text}"),
            Some(p) => {
                let io =
                    |e: std::io::Error| Failure::Runtime(format!("writing {}: {e}", p.display()));
                std::fs::write(p, text).map_err(io)?;
                std::fs::write(p.with_extension("csv"), self.to_csv()?).map_err(io)?;
            }
        }
        Ok(())
    }
}
