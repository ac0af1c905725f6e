//! Personality data files.
//!
//! A personality is a TOML document:
//!
//! ```toml
//! kind = "Jre"
//! category = "software"          # node | infra | software | service
//! provides = ["Jre"]
//!
//! [[params]]
//! name = "root"
//! type = "path"                  # string | int | path | resources
//!
//! [[requires]]
//! name = "shell"
//! interface = "Shell"
//!
//! [scripts]
//! unless_exists = "${root}"      # install is skipped when this path exists
//! start = [{ set_var = { name = "JAVA_HOME", value = "${root}" } }]
//! ```
//!
//! Node kinds carry `components` (default slots), `bindings`
//! (`client.port -> server`) and `exports` instead of scripts.
//! `${param}` and `${id}` are substituted in every script field.

use std::collections::BTreeSet;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::Deserialize;

use super::params::{ParamSpec, ParamType, ParamValue, ResourceRequest};
use super::registry::{Category, KindSpec, NodeTemplate, SlotDefault, TemplateBinding};
use super::scripted::{Native, Scripted, Scripts};
use crate::component::{Inert, PortSpec};
use crate::stdlib::Step;

pub(crate) const BUNDLED: &[(&str, &str)] = &[
    (
        "grid5000_node.toml",
        include_str!("../../personalities/grid5000_node.toml"),
    ),
    ("jre.toml", include_str!("../../personalities/jre.toml")),
    ("openccm.toml", include_str!("../../personalities/openccm.toml")),
    (
        "openccm_nameservice.toml",
        include_str!("../../personalities/openccm_nameservice.toml"),
    ),
    (
        "openccm_dcimanager.toml",
        include_str!("../../personalities/openccm_dcimanager.toml"),
    ),
    (
        "openccm_dci_node.toml",
        include_str!("../../personalities/openccm_dci_node.toml"),
    ),
    ("oargrid.toml", include_str!("../../personalities/oargrid.toml")),
    ("kadeploy.toml", include_str!("../../personalities/kadeploy.toml")),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PersonalityError {
    #[error("{origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("{origin}: {reason}")]
    Invalid { origin: String, reason: String },
    #[error("{origin}: {reason}")]
    Io { origin: String, reason: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: String,
    category: Category,
    #[serde(default)]
    description: String,
    #[serde(default)]
    provides: Vec<String>,
    #[serde(default)]
    bindings: Vec<String>,
    native: Option<Native>,
    #[serde(default)]
    params: Vec<RawParam>,
    #[serde(default)]
    requires: Vec<PortSpec>,
    #[serde(default)]
    components: IndexMap<String, RawSlot>,
    #[serde(default)]
    exports: IndexMap<String, String>,
    #[serde(default)]
    scripts: Option<Scripts>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    ty: ParamType,
    default: Option<toml::Value>,
    produces: Option<String>,
    consumes: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlot {
    kind: String,
    #[serde(default)]
    args: Vec<toml::Value>,
}

fn value(v: &toml::Value, ty: Option<ParamType>) -> Result<ParamValue, String> {
    match (v, ty) {
        (toml::Value::Integer(i), _) => Ok(ParamValue::Int(*i)),
        (toml::Value::String(s), Some(ParamType::Resources)) => ResourceRequest::parse(s)
            .map(ParamValue::Resources)
            .ok_or_else(|| format!("`{s}` is not a resource request")),
        (toml::Value::String(s), Some(ParamType::Path)) => Ok(ParamValue::Path(s.clone())),
        (toml::Value::String(s), _) if s.starts_with('~') => Ok(ParamValue::Path(s.clone())),
        (toml::Value::String(s), _) => Ok(ParamValue::Str(s.clone())),
        (other, _) => Err(format!("unsupported value `{other}`")),
    }
}

/// `${name}` placeholders in `text`, or the unterminated remainder.
pub(crate) fn placeholders(text: &str) -> Result<Vec<&str>, &str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(at) = rest.find("${") {
        let tail = &rest[at + 2..];
        let end = tail.find('}').ok_or(&rest[at..])?;
        out.push(&tail[..end]);
        rest = &tail[end + 1..];
    }
    Ok(out)
}

fn script_fields(step: &Step) -> Vec<String> {
    let mut fields = Vec::new();
    step.map_text(|t| {
        fields.push(t.to_string());
        t.to_string()
    });
    fields
}

pub fn load_str(text: &str, origin: &str) -> Result<KindSpec, PersonalityError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| PersonalityError::Parse {
        origin: origin.to_string(),
        reason: e.to_string(),
    })?;
    let invalid = |reason: String| PersonalityError::Invalid {
        origin: origin.to_string(),
        reason,
    };

    let mut params = Vec::with_capacity(raw.params.len());
    for p in &raw.params {
        let default = p
            .default
            .as_ref()
            .map(|v| value(v, Some(p.ty)))
            .transpose()
            .map_err(|e| invalid(format!("param `{}`: {e}", p.name)))?;
        let default = default
            .map(|d| {
                d.coerce(p.ty).map_err(|d| {
                    invalid(format!(
                        "param `{}` default is {}, declared {}",
                        p.name,
                        d.type_name(),
                        p.ty
                    ))
                })
            })
            .transpose()?;
        params.push(ParamSpec {
            name: p.name.clone(),
            ty: p.ty,
            default,
            produces: p.produces.clone(),
            consumes: p.consumes.clone(),
        });
    }
    let mut seen = BTreeSet::new();
    for p in &params {
        if !seen.insert(p.name.as_str()) {
            return Err(invalid(format!("param `{}` declared twice", p.name)));
        }
    }
    if let Some(i) = params.iter().position(|p| p.default.is_some()) {
        if let Some(p) = params[i..].iter().find(|p| p.default.is_none()) {
            return Err(invalid(format!(
                "param `{}` without default follows a defaulted one",
                p.name
            )));
        }
    }

    let is_node = raw.category == Category::Node;
    let has_template =
        !raw.components.is_empty() || !raw.bindings.is_empty() || !raw.exports.is_empty();
    if has_template && !is_node {
        return Err(invalid(
            "components, bindings and exports are only allowed on node kinds".into(),
        ));
    }
    if is_node && raw.scripts.is_some() {
        return Err(invalid("node kinds have no scripts".into()));
    }
    if matches!(raw.category, Category::Root | Category::Group) {
        return Err(invalid(format!(
            "category `{}` is reserved for built-in kinds",
            raw.category
        )));
    }

    let template = if is_node {
        let mut t = NodeTemplate::default();
        for (slot, s) in &raw.components {
            let args = s
                .args
                .iter()
                .map(|v| value(v, None))
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(format!("component `{slot}`: {e}")))?;
            t.defaults.insert(
                slot.clone(),
                SlotDefault {
                    kind: s.kind.clone(),
                    args,
                },
            );
        }
        for b in &raw.bindings {
            t.bindings.push(
                TemplateBinding::parse(b)
                    .ok_or_else(|| invalid(format!("binding `{b}` is not `client.port -> server`")))?,
            );
        }
        t.exports = raw.exports.clone();
        Some(t)
    } else {
        None
    };

    let scripts = raw.scripts.unwrap_or_default();
    let mut known: BTreeSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    known.insert("id");
    let all_steps = scripts
        .install
        .iter()
        .chain(&scripts.start)
        .chain(&scripts.stop)
        .chain(&scripts.uninstall);
    let mut texts: Vec<String> = all_steps.flat_map(script_fields).collect();
    texts.extend(scripts.unless_exists.clone());
    for p in &params {
        if let Some(ParamValue::Str(s) | ParamValue::Path(s)) = &p.default {
            texts.push(s.clone());
        }
    }
    for t in &texts {
        let names = placeholders(t).map_err(|r| invalid(format!("unterminated `{r}`")))?;
        if let Some(n) = names.iter().find(|n| !known.contains(*n)) {
            return Err(invalid(format!("unknown placeholder `${{{n}}}`")));
        }
    }

    if raw.native == Some(Native::Reservation) {
        if !params.iter().any(|p| p.ty == ParamType::Resources) {
            return Err(invalid("reservation kinds need a resources param".into()));
        }
        if !params.iter().any(|p| p.produces.is_some()) {
            return Err(invalid(
                "reservation kinds need a param naming the produced node list".into(),
            ));
        }
    }

    let factory: super::registry::Factory = if is_node {
        Arc::new(|_| Ok(Box::new(Inert)))
    } else {
        let kind = raw.kind.clone();
        let scripts = Arc::new(scripts);
        let native = raw.native;
        let schema = params.clone();
        Arc::new(move |args| {
            Ok(Box::new(Scripted::new(
                &kind,
                &schema,
                args,
                scripts.clone(),
                native,
            )))
        })
    };

    let mut spec = KindSpec::new(&raw.kind, raw.category, factory);
    spec.description = raw.description;
    spec.params = params;
    spec.provides = raw.provides;
    spec.requires = raw.requires;
    spec.template = template;
    Ok(spec)
}
