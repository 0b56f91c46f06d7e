use std::path::Path;

use mcotype::markov::{generate, ChainKind, ChainSpec, ReversibleChain};
use mcotype::metric::{FiniteMetricSpace, SpacePoint, SpaceSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::report::{Failure, Outcome};

/// Reads an argument that is either inline JSON or the path of a JSON file.
pub fn load(what: &str, arg: &str) -> Outcome<Value> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(Path::new(arg))
            .map_err(|e| Failure::Input(format!("{what}: cannot read {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{what}: malformed JSON: {e}")))
}

/// Deserializes `value`, naming the offending field on failure.
pub fn decode<T: DeserializeOwned>(what: &str, value: Value) -> Outcome<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Failure::Input(format!("{what}: field `{path}`: {}", e.into_inner()))
    })
}

/// Reports produced by this tool wrap their payload in `result`; accept both forms.
fn unwrap_report(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("result") => {
            m.remove("result").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Where a chain comes from: a JSON document or a named generator.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ChainSource {
    Json { chain: Value },
    Generated { kind: String, n: usize, seed: u64 },
}

impl ChainSource {
    pub fn resolve(
        chain: Option<&str>,
        kind: Option<&str>,
        n: Option<usize>,
        seed: u64,
    ) -> Outcome<Self> {
        match (chain, kind) {
            (Some(arg), None) => Ok(Self::Json {
                chain: unwrap_report(load("chain", arg)?),
            }),
            (None, Some(kind)) => {
                let n = n.ok_or_else(|| Failure::Input("--generate needs --n".into()))?;
                Ok(Self::Generated {
                    kind: kind.to_string(),
                    n,
                    seed,
                })
            }
            (Some(_), Some(_)) => Err(Failure::Input(
                "give either --chain or --generate, not both".into(),
            )),
            (None, None) => Err(Failure::Input(
                "a chain is required (--chain or --generate)".into(),
            )),
        }
    }

    pub fn build(&self) -> Outcome<ReversibleChain<f64>> {
        match self {
            Self::Json { chain } => {
                let spec: ChainSpec = decode("chain", chain.clone())?;
                Ok(ReversibleChain::from_spec(&spec)?)
            }
            Self::Generated { kind, n, seed } => {
                let kind: ChainKind = kind.parse()?;
                Ok(generate(kind, *n, *seed)?)
            }
        }
    }
}

pub fn space(
    arg: Option<&str>,
    default_dim: usize,
) -> Outcome<(SpaceSpec, FiniteMetricSpace<f64>)> {
    let spec: SpaceSpec = match arg {
        Some(a) => decode("space", load("space", a)?)?,
        None => SpaceSpec::Euclidean { dim: default_dim },
    };
    let space = FiniteMetricSpace::from_spec(&spec)?;
    Ok((spec, space))
}

/// Point configurations: `{"x": [...], "y": [...]}` with `y` optional.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub x: Vec<SpacePoint<f64>>,
    #[serde(default)]
    pub y: Option<Vec<SpacePoint<f64>>>,
}

pub fn config(arg: &str) -> Outcome<Config> {
    decode("config", load("config", arg)?)
}

/// An extension problem on a finite subset of a metric space with a Euclidean target.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionSpec {
    pub source: SpaceSpec,
    /// Dimension of the Euclidean target.
    pub target_dim: usize,
    pub points: Vec<SpacePoint<f64>>,
    /// Indices into `points` where the map is prescribed.
    pub anchors: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    /// Optional weight matrix for `hcert`, indexed like `anchors` followed by the free points.
    #[serde(default)]
    pub h: Option<Vec<Vec<f64>>>,
}

pub fn extension(arg: &str) -> Outcome<ExtensionSpec> {
    decode("instance", load("instance", arg)?)
}

pub fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Outcome<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Failure::Input(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}
