//! Constructor parameters: schemas, values and argument binding.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Resource request such as `gdx=300|azur=100`: cluster name to node count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest(pub Vec<(String, String)>);

impl ResourceRequest {
    /// Parse the `key=value|key=value` literal form.
    pub fn parse(text: &str) -> Option<Self> {
        if !text.contains('=') {
            return None;
        }
        text.split('|')
            .map(|part| {
                let (k, v) = part.split_once('=')?;
                let (k, v) = (k.trim(), v.trim());
                (!k.is_empty()).then(|| (k.to_string(), v.to_string()))
            })
            .collect::<Option<Vec<_>>>()
            .map(ResourceRequest)
    }

    /// Sum of all requested counts.
    pub fn total(&self) -> Result<u64, String> {
        self.0
            .iter()
            .map(|(k, v)| {
                v.parse::<u64>()
                    .map_err(|_| format!("count for `{k}` is not a number: `{v}`"))
            })
            .sum()
    }

    pub fn to_literal(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("|")
    }

    /// `oargridsub` request syntax: `gdx:rdef=/nodes=300,azur:rdef=/nodes=100`.
    pub fn to_oargrid(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}:rdef=/nodes={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_oargrid(text: &str) -> Option<Self> {
        text.split(',')
            .map(|part| {
                let (cluster, count) = part.split_once(":rdef=/nodes=")?;
                Some((cluster.to_string(), count.to_string()))
            })
            .collect::<Option<Vec<_>>>()
            .map(ResourceRequest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Int,
    Path,
    Resources,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::String => "string",
            ParamType::Int => "int",
            ParamType::Path => "path",
            ParamType::Resources => "resources",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamValue {
    Str(String),
    Int(i64),
    Path(String),
    Resources(ResourceRequest),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Str(_) => "string",
            ParamValue::Int(_) => "int",
            ParamValue::Path(_) => "path",
            ParamValue::Resources(_) => "resources",
        }
    }

    /// Text substituted for `${param}` in scripts.
    pub fn render(&self) -> String {
        match self {
            ParamValue::Str(s) | ParamValue::Path(s) => s.clone(),
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Resources(r) => r.to_oargrid(),
        }
    }

    pub fn coerce(self, ty: ParamType) -> Result<ParamValue, ParamValue> {
        match (ty, self) {
            (ParamType::String, ParamValue::Str(s) | ParamValue::Path(s)) => Ok(ParamValue::Str(s)),
            (ParamType::String, ParamValue::Int(i)) => Ok(ParamValue::Str(i.to_string())),
            (ParamType::Int, v @ ParamValue::Int(_)) => Ok(v),
            (ParamType::Path, v @ ParamValue::Path(_)) => Ok(v),
            (ParamType::Path, ParamValue::Str(s)) => Ok(ParamValue::Path(s)),
            (ParamType::Resources, v @ ParamValue::Resources(_)) => Ok(v),
            (_, v) => Err(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
    /// Interface of the artifact this parameter names a producer of (e.g. `NodeList`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub produces: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumes: Option<String>,
}

impl ParamSpec {
    pub fn new(name: &str, ty: ParamType) -> Self {
        ParamSpec {
            name: name.to_string(),
            ty,
            default: None,
            produces: None,
            consumes: None,
        }
    }

    pub fn with_default(mut self, value: ParamValue) -> Self {
        self.default = Some(value);
        self
    }

    pub fn consuming(mut self, interface: &str) -> Self {
        self.consumes = Some(interface.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArgError {
    #[error("expected {min}..={max} arguments, found {found}")]
    Count { min: usize, max: usize, found: usize },
    #[error("argument `{param}` expects {expected}, found {found}")]
    Type {
        param: String,
        expected: ParamType,
        found: &'static str,
    },
}

/// Named, type-checked constructor arguments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Args(IndexMap<String, ParamValue>);

impl Args {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn text(&self, name: &str) -> Option<String> {
        self.get(name).map(ParamValue::render)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            ParamValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bind positional values to a schema, filling trailing defaults.
pub fn bind_args(params: &[ParamSpec], values: Vec<ParamValue>) -> Result<Args, ArgError> {
    let min = params.iter().take_while(|p| p.default.is_none()).count();
    let required = params.iter().filter(|p| p.default.is_none()).count();
    let min = min.max(required);
    if values.len() < min || values.len() > params.len() {
        return Err(ArgError::Count {
            min,
            max: params.len(),
            found: values.len(),
        });
    }
    let mut args = Args::new();
    let mut values = values.into_iter();
    for p in params {
        let value = match values.next() {
            Some(v) => v.coerce(p.ty).map_err(|v| ArgError::Type {
                param: p.name.clone(),
                expected: p.ty,
                found: v.type_name(),
            })?,
            None => p.default.clone().expect("count checked above"),
        };
        args.0.insert(p.name.clone(), value);
    }
    Ok(args)
}
