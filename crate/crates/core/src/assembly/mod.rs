//! From an expanded configuration to a validated component graph and its
//! staged deployment plan.

mod descriptor;
mod plan;
mod validate;

pub use descriptor::{
    generate, AssemblyDescriptor, ComponentDecl, CompositeDecl, GenerateError, ServiceDecl,
};
pub use plan::{plan, plan_inverse, DeploymentPlan, Mode, PlanAction, PlanError, Stage, StageKind, Unit};
pub use validate::{located, span_for, validate, Diagnostic};

use serde::Serialize;

use crate::component::{Assembly, BindError, Component, ComponentId, Composite};
use crate::personality::Registry;
use crate::stdlib::ServiceError;

#[derive(Debug, thiserror::Error)]
pub enum InstantiateError {
    #[error("`{component}`: unknown kind `{kind}`")]
    UnknownKind { component: ComponentId, kind: String },
    #[error("`{component}`: {source}")]
    Factory {
        component: ComponentId,
        #[source]
        source: ServiceError,
    },
    #[error(transparent)]
    Bind(#[from] BindError),
}

/// Build live components for every declaration.
pub fn instantiate(
    desc: &AssemblyDescriptor,
    registry: &Registry,
) -> Result<Assembly, InstantiateError> {
    let mut asm = Assembly::new();
    for (id, decl) in &desc.components {
        let spec = registry
            .get(&decl.kind)
            .ok_or_else(|| InstantiateError::UnknownKind {
                component: id.clone(),
                kind: decl.kind.clone(),
            })?;
        let behavior = spec
            .instantiate(&decl.args)
            .map_err(|source| InstantiateError::Factory {
                component: id.clone(),
                source,
            })?;
        let mut c = Component::new(id.clone(), &decl.kind, behavior)
            .with_provides(decl.provides.iter().cloned())
            .with_requires(decl.requires.clone());
        if let Some(n) = &decl.node {
            c = c.with_node(n.clone());
        }
        asm.add_component(c)?;
    }
    for (id, c) in &desc.composites {
        asm.add_composite(Composite {
            id: id.clone(),
            kind: c.kind.clone(),
            children: c.children.clone(),
            exports: c.exports.clone(),
            provides: c.provides.clone(),
        })?;
    }
    for b in &desc.bindings {
        asm.bind(&b.client, &b.port, &b.server)?;
    }
    Ok(asm)
}

#[derive(Serialize)]
struct Emitted<'a> {
    descriptor: &'a AssemblyDescriptor,
    plan: &'a DeploymentPlan,
}

/// Pretty JSON of descriptor and plan; field and entry order are stable.
pub fn emit_json(desc: &AssemblyDescriptor, plan: &DeploymentPlan) -> String {
    let mut out = serde_json::to_string_pretty(&Emitted {
        descriptor: desc,
        plan,
    })
    .expect("descriptor serializes");
    out.push('\n');
    out
}
