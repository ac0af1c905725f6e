use std::collections::{BTreeMap, BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::Serialize;

use crate::component::{Binding, ComponentId, NodeRef, PortSpec};
use crate::dsl::{EBlock, ECtor, EEntry, EValue, ExpandedConfig, Span};
use crate::personality::{ArgError, Args, Category, KindSpec, ParamValue, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentDecl {
    pub kind: String,
    pub category: Category,
    pub args: Args,
    pub provides: Vec<String>,
    pub requires: Vec<PortSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompositeDecl {
    pub kind: String,
    pub category: Category,
    pub children: Vec<ComponentId>,
    pub exports: BTreeMap<String, ComponentId>,
    pub provides: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceDecl {
    pub id: ComponentId,
    /// Parallel group the service belongs to; `None` means sequential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<ComponentId>,
}

/// Fully expanded graph of component instances and bindings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AssemblyDescriptor {
    pub name: String,
    pub kind: String,
    /// In declaration order.
    pub components: IndexMap<ComponentId, ComponentDecl>,
    pub composites: IndexMap<ComponentId, CompositeDecl>,
    pub bindings: Vec<Binding>,
    pub services: Vec<ServiceDecl>,
    pub node_assignment: IndexMap<ComponentId, ComponentId>,
    #[serde(skip)]
    pub spans: HashMap<ComponentId, Span>,
}

impl AssemblyDescriptor {
    pub fn span_of(&self, id: &ComponentId) -> Option<&Span> {
        self.spans.get(id)
    }

    pub fn is_node(&self, id: &str) -> bool {
        self.composites
            .get(id)
            .is_some_and(|c| c.category == Category::Node)
    }

    /// Primitive components behind a component or composite id.
    pub fn primitives(&self, id: &str) -> Vec<ComponentId> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        self.collect_primitives(id, &mut out, &mut seen);
        out
    }

    fn collect_primitives(
        &self,
        id: &str,
        out: &mut Vec<ComponentId>,
        seen: &mut BTreeSet<ComponentId>,
    ) {
        if let Some((cid, _)) = self.components.get_key_value(id) {
            if seen.insert(cid.clone()) {
                out.push(cid.clone());
            }
        } else if let Some(c) = self.composites.get(id) {
            for child in &c.children {
                self.collect_primitives(child.as_str(), out, seen);
            }
        }
    }

    /// `client -> server` over primitive components, in binding order.
    pub fn dependency_edges(&self) -> Vec<(ComponentId, ComponentId)> {
        let mut edges = Vec::new();
        let mut cache: HashMap<&ComponentId, Vec<ComponentId>> = HashMap::new();
        for b in &self.bindings {
            let servers = cache
                .entry(&b.server)
                .or_insert_with(|| self.primitives(b.server.as_str()));
            for s in servers.iter() {
                edges.push((b.client.clone(), s.clone()));
            }
        }
        edges
    }

    pub fn binding(&self, client: &str, port: &str) -> Option<&Binding> {
        self.bindings
            .iter()
            .find(|b| b.client.as_str() == client && b.port == port)
    }

    /// Interfaces a binding target offers.
    pub fn provides(&self, id: &str) -> Option<BTreeSet<String>> {
        if let Some(c) = self.components.get(id) {
            Some(c.provides.iter().cloned().collect())
        } else {
            self.composites.get(id).map(|c| c.provides.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("{span}: unknown kind `{kind}`")]
    UnknownKind { span: Span, kind: String },
    #[error("{span}: `{kind}`: {source}")]
    ArityMismatch {
        span: Span,
        kind: String,
        #[source]
        source: ArgError,
    },
    #[error("{span}: `{kind}` is a {found} kind; {expected} expected here")]
    WrongCategory {
        span: Span,
        kind: String,
        found: Category,
        expected: &'static str,
    },
    #[error("{span}: `{name}` is not allowed here: {reason}")]
    UnexpectedEntry {
        span: Span,
        name: String,
        reason: &'static str,
    },
    #[error("{span}: `{kind}` has no port `{port}`")]
    UnknownPort {
        span: Span,
        kind: String,
        port: String,
    },
    #[error("{span}: `{path}` is not a component")]
    NotAComponent { span: Span, path: String },
    #[error("{span}: `{path}` is not a declared node")]
    DanglingNodeRef { span: Span, path: String },
}

impl GenerateError {
    pub fn span(&self) -> &Span {
        match self {
            GenerateError::UnknownKind { span, .. }
            | GenerateError::ArityMismatch { span, .. }
            | GenerateError::WrongCategory { span, .. }
            | GenerateError::UnexpectedEntry { span, .. }
            | GenerateError::UnknownPort { span, .. }
            | GenerateError::NotAComponent { span, .. }
            | GenerateError::DanglingNodeRef { span, .. } => span,
        }
    }
}

struct PendingBinding {
    client: ComponentId,
    port: String,
    server: String,
    span: Span,
}

struct Generator<'a> {
    registry: &'a Registry,
    desc: AssemblyDescriptor,
    pending: Vec<PendingBinding>,
    /// Node composite to its hostname slot target, for ordinals.
    hostname_of: Vec<(ComponentId, Option<ComponentId>)>,
}

fn ctor_span_kind(e: &EEntry) -> Option<&ECtor> {
    match &e.value {
        EValue::Ctor(c) => Some(c),
        _ => None,
    }
}

impl<'a> Generator<'a> {
    fn spec(&self, ctor: &ECtor) -> Result<&'a KindSpec, GenerateError> {
        self.registry
            .get(&ctor.kind)
            .ok_or_else(|| GenerateError::UnknownKind {
                span: ctor.span.clone(),
                kind: ctor.kind.clone(),
            })
    }

    fn args(&self, spec: &KindSpec, ctor: &ECtor) -> Result<Args, GenerateError> {
        let values: Vec<ParamValue> = ctor.args.iter().map(|a| a.value.clone()).collect();
        spec.bind_args(values)
            .map_err(|source| GenerateError::ArityMismatch {
                span: ctor.span.clone(),
                kind: ctor.kind.clone(),
                source,
            })
    }

    fn add_component(
        &mut self,
        id: ComponentId,
        spec: &KindSpec,
        args: Args,
        node: Option<NodeRef>,
        span: &Span,
    ) {
        self.desc.spans.insert(id.clone(), span.clone());
        self.desc.components.insert(
            id,
            ComponentDecl {
                kind: spec.name.clone(),
                category: spec.category,
                args,
                provides: spec.provides.clone(),
                requires: spec.requires.clone(),
                node,
            },
        );
    }

    fn nodes(&mut self, block: &EBlock) -> Result<(), GenerateError> {
        // Shared components first, so node slots can refer to them
        // whatever the declaration order.
        for e in block.iter() {
            let Some(ctor) = ctor_span_kind(e) else {
                return Err(GenerateError::UnexpectedEntry {
                    span: e.span.clone(),
                    name: e.name.clone(),
                    reason: "entries of `nodes` are node or component constructors",
                });
            };
            let spec = self.spec(ctor)?;
            match spec.category {
                Category::Node => {}
                Category::Infra | Category::Software => {
                    if ctor.block.is_some() {
                        return Err(GenerateError::UnexpectedEntry {
                            span: ctor.span.clone(),
                            name: e.name.clone(),
                            reason: "only node kinds take a block",
                        });
                    }
                    let args = self.args(spec, ctor)?;
                    let id = ComponentId::new(format!("nodes/{}", e.name));
                    self.add_component(id, spec, args, None, &e.span);
                }
                found => {
                    return Err(GenerateError::WrongCategory {
                        span: ctor.span.clone(),
                        kind: ctor.kind.clone(),
                        found,
                        expected: "a node or infrastructure kind",
                    })
                }
            }
        }
        for e in block.iter() {
            let ctor = ctor_span_kind(e).expect("checked above");
            let spec = self.spec(ctor)?;
            if spec.category == Category::Node {
                self.node(e, ctor, spec)?;
            }
        }
        Ok(())
    }

    fn node(&mut self, e: &EEntry, ctor: &ECtor, spec: &KindSpec) -> Result<(), GenerateError> {
        let node_id = ComponentId::new(format!("nodes/{}", e.name));
        let template = spec.template.clone().unwrap_or_default();
        let empty = EBlock::default();
        let slots_block = ctor.block.as_ref().unwrap_or(&empty);
        if !ctor.args.is_empty() {
            self.args(spec, ctor)?;
        }
        let node_ref = NodeRef {
            composite: node_id.clone(),
            ordinal: None,
        };

        // slot name -> (target id, owned)
        let mut slots: IndexMap<String, (ComponentId, bool)> = IndexMap::new();
        for s in slots_block.iter() {
            match &s.value {
                EValue::Ctor(c) => {
                    let sspec = self.spec(c)?;
                    if !matches!(sspec.category, Category::Infra | Category::Software) {
                        return Err(GenerateError::WrongCategory {
                            span: c.span.clone(),
                            kind: c.kind.clone(),
                            found: sspec.category,
                            expected: "an infrastructure or software kind",
                        });
                    }
                    if c.block.is_some() {
                        return Err(GenerateError::UnexpectedEntry {
                            span: c.span.clone(),
                            name: s.name.clone(),
                            reason: "node slots take no block",
                        });
                    }
                    let args = self.args(sspec, c)?;
                    let id = node_id.child(&s.name);
                    self.add_component(id.clone(), sspec, args, Some(node_ref.clone()), &s.span);
                    slots.insert(s.name.clone(), (id, true));
                }
                EValue::Ref { path, span } => {
                    if !self.desc.components.contains_key(path.as_str()) {
                        return Err(GenerateError::NotAComponent {
                            span: span.clone(),
                            path: path.clone(),
                        });
                    }
                    slots.insert(s.name.clone(), (ComponentId::new(path.clone()), false));
                }
                _ => {
                    return Err(GenerateError::UnexpectedEntry {
                        span: s.span.clone(),
                        name: s.name.clone(),
                        reason: "node slots are constructors or references",
                    })
                }
            }
        }
        for (slot, default) in &template.defaults {
            if slots.contains_key(slot) {
                continue;
            }
            let dspec = self
                .registry
                .get(&default.kind)
                .ok_or_else(|| GenerateError::UnknownKind {
                    span: ctor.span.clone(),
                    kind: default.kind.clone(),
                })?;
            let args = dspec.bind_args(default.args.clone()).map_err(|source| {
                GenerateError::ArityMismatch {
                    span: ctor.span.clone(),
                    kind: default.kind.clone(),
                    source,
                }
            })?;
            let id = node_id.child(slot);
            self.add_component(id.clone(), dspec, args, Some(node_ref.clone()), &ctor.span);
            slots.insert(slot.clone(), (id, true));
        }

        let mut bound: BTreeSet<(ComponentId, String)> = BTreeSet::new();
        for tb in &template.bindings {
            let Some((server, _)) = slots.get(&tb.server).cloned() else {
                continue;
            };
            for (slot, (client, owned)) in &slots {
                if !owned || !tb.matches(slot) || *client == server {
                    continue;
                }
                let decl = &self.desc.components[client];
                let Some(port) = decl.requires.iter().find(|p| p.name == tb.port) else {
                    continue;
                };
                if tb.client == "*" {
                    let offers = self
                        .desc
                        .provides(server.as_str())
                        .is_some_and(|p| p.contains(&port.interface));
                    if !offers {
                        continue;
                    }
                }
                if bound.insert((client.clone(), tb.port.clone())) {
                    self.desc.bindings.push(Binding {
                        client: client.clone(),
                        port: tb.port.clone(),
                        server: server.clone(),
                        interface: port.interface.clone(),
                    });
                }
            }
        }

        let mut exports = BTreeMap::new();
        let mut provides: BTreeSet<String> = spec.provides.iter().cloned().collect();
        provides.insert("Node".into());
        for (iface, slot) in &template.exports {
            if let Some((target, _)) = slots.get(slot) {
                exports.insert(iface.clone(), target.clone());
                provides.insert(iface.clone());
            }
        }
        let mut children: Vec<ComponentId> = Vec::new();
        for (target, _) in slots.values() {
            if !children.contains(target) {
                children.push(target.clone());
            }
        }
        let hostname = slots
            .get("hostname")
            .filter(|(_, owned)| !owned)
            .map(|(t, _)| t.clone());
        self.hostname_of.push((node_id.clone(), hostname));
        self.desc.spans.insert(node_id.clone(), e.span.clone());
        self.desc.composites.insert(
            node_id,
            CompositeDecl {
                kind: spec.name.clone(),
                category: Category::Node,
                children,
                exports,
                provides,
            },
        );
        Ok(())
    }

    fn service(
        &mut self,
        id: ComponentId,
        e: &EEntry,
        ctor: &ECtor,
        spec: &KindSpec,
        group: Option<ComponentId>,
    ) -> Result<(), GenerateError> {
        let args = self.args(spec, ctor)?;
        self.add_component(id.clone(), spec, args, None, &e.span);
        if let Some(block) = &ctor.block {
            for p in block.iter() {
                let EValue::Ref { path, span } = &p.value else {
                    return Err(GenerateError::UnexpectedEntry {
                        span: p.span.clone(),
                        name: p.name.clone(),
                        reason: "service ports are bound with references",
                    });
                };
                if !spec.requires.iter().any(|r| r.name == p.name) {
                    return Err(GenerateError::UnknownPort {
                        span: p.span.clone(),
                        kind: spec.name.clone(),
                        port: p.name.clone(),
                    });
                }
                self.pending.push(PendingBinding {
                    client: id.clone(),
                    port: p.name.clone(),
                    server: path.clone(),
                    span: span.clone(),
                });
            }
        }
        self.desc.services.push(ServiceDecl { id, group });
        Ok(())
    }

    fn services(&mut self, block: &EBlock) -> Result<(), GenerateError> {
        for e in block.iter() {
            let Some(ctor) = ctor_span_kind(e) else {
                return Err(GenerateError::UnexpectedEntry {
                    span: e.span.clone(),
                    name: e.name.clone(),
                    reason: "entries of `services` are service or group constructors",
                });
            };
            let spec = self.spec(ctor)?;
            let id = ComponentId::new(format!("services/{}", e.name));
            match spec.category {
                Category::Service => self.service(id, e, ctor, spec, None)?,
                Category::Group => {
                    let mut members = Vec::new();
                    for m in ctor.block.iter().flat_map(EBlock::iter) {
                        let Some(mc) = ctor_span_kind(m) else {
                            return Err(GenerateError::UnexpectedEntry {
                                span: m.span.clone(),
                                name: m.name.clone(),
                                reason: "group members are service constructors",
                            });
                        };
                        let mspec = self.spec(mc)?;
                        if mspec.category != Category::Service {
                            return Err(GenerateError::WrongCategory {
                                span: mc.span.clone(),
                                kind: mc.kind.clone(),
                                found: mspec.category,
                                expected: "a service kind (groups do not nest)",
                            });
                        }
                        let mid = id.child(&m.name);
                        self.service(mid.clone(), m, mc, mspec, Some(id.clone()))?;
                        members.push(mid);
                    }
                    self.desc.spans.insert(id.clone(), e.span.clone());
                    self.desc.composites.insert(
                        id,
                        CompositeDecl {
                            kind: spec.name.clone(),
                            category: Category::Group,
                            children: members,
                            exports: BTreeMap::new(),
                            provides: BTreeSet::new(),
                        },
                    );
                }
                found => {
                    return Err(GenerateError::WrongCategory {
                        span: ctor.span.clone(),
                        kind: ctor.kind.clone(),
                        found,
                        expected: "a service or group kind",
                    })
                }
            }
        }
        Ok(())
    }

    fn resolve_pending(&mut self) -> Result<(), GenerateError> {
        for p in std::mem::take(&mut self.pending) {
            let is_component = self.desc.components.contains_key(p.server.as_str())
                || self.desc.composites.contains_key(p.server.as_str());
            if p.port == "node" && !self.desc.is_node(&p.server) {
                return Err(GenerateError::DanglingNodeRef {
                    span: p.span,
                    path: p.server,
                });
            }
            if !is_component {
                return Err(GenerateError::NotAComponent {
                    span: p.span,
                    path: p.server,
                });
            }
            let interface = self.desc.components[&p.client]
                .requires
                .iter()
                .find(|r| r.name == p.port)
                .map(|r| r.interface.clone())
                .expect("port checked when recorded");
            let server = ComponentId::new(p.server);
            if p.port == "node" {
                self.desc
                    .node_assignment
                    .insert(p.client.clone(), server.clone());
            }
            self.desc.bindings.push(Binding {
                client: p.client,
                port: p.port,
                server,
                interface,
            });
        }
        Ok(())
    }

    /// Node ordinal: position among the nodes sharing one hostname resolver.
    fn assign_ordinals(&mut self) {
        let mut counters: HashMap<ComponentId, usize> = HashMap::new();
        for (node, host) in std::mem::take(&mut self.hostname_of) {
            let Some(host) = host else { continue };
            let counter = counters.entry(host).or_default();
            let ordinal = *counter;
            *counter += 1;
            let children = self.desc.composites[&node].children.clone();
            for c in children {
                if let Some(decl) = self.desc.components.get_mut(&c) {
                    if let Some(n) = decl.node.as_mut().filter(|n| n.composite == node) {
                        n.ordinal = Some(ordinal);
                    }
                }
            }
        }
    }

    /// Bind each node-list consumer to the service producing the same path.
    fn bind_producers(&mut self) {
        let mut producers: Vec<(String, String, ComponentId)> = Vec::new();
        for (id, decl) in &self.desc.components {
            let Some(spec) = self.registry.get(&decl.kind) else {
                continue;
            };
            for p in &spec.params {
                if let (Some(iface), Some(v)) = (&p.produces, decl.args.get(&p.name)) {
                    producers.push((iface.clone(), v.render(), id.clone()));
                }
            }
        }
        let mut new = Vec::new();
        for (id, decl) in &self.desc.components {
            let Some(spec) = self.registry.get(&decl.kind) else {
                continue;
            };
            for p in &spec.params {
                let (Some(iface), Some(v)) = (&p.consumes, decl.args.get(&p.name)) else {
                    continue;
                };
                let Some(port) = decl.requires.iter().find(|r| &r.interface == iface) else {
                    continue;
                };
                let path = v.render();
                if let Some((_, _, producer)) = producers
                    .iter()
                    .find(|(i, pp, _)| i == iface && *pp == path)
                {
                    new.push(Binding {
                        client: id.clone(),
                        port: port.name.clone(),
                        server: producer.clone(),
                        interface: iface.clone(),
                    });
                }
            }
        }
        self.desc.bindings.extend(new);
    }
}

/// Compile an expanded configuration into a descriptor.
pub fn generate(
    config: &ExpandedConfig,
    registry: &Registry,
) -> Result<AssemblyDescriptor, GenerateError> {
    let root = registry
        .get(&config.kind)
        .ok_or_else(|| GenerateError::UnknownKind {
            span: config.span.clone(),
            kind: config.kind.clone(),
        })?;
    if root.category != Category::Root {
        return Err(GenerateError::WrongCategory {
            span: config.span.clone(),
            kind: config.kind.clone(),
            found: root.category,
            expected: "a deployment root kind",
        });
    }
    let mut g = Generator {
        registry,
        desc: AssemblyDescriptor {
            name: config.name.clone(),
            kind: config.kind.clone(),
            ..AssemblyDescriptor::default()
        },
        pending: Vec::new(),
        hostname_of: Vec::new(),
    };
    for e in config.body.iter() {
        let block = match (&e.value, e.name.as_str()) {
            (EValue::Block(b), "nodes" | "services") => b,
            _ => {
                return Err(GenerateError::UnexpectedEntry {
                    span: e.span.clone(),
                    name: e.name.clone(),
                    reason: "a configuration holds `nodes = { ... }` and `services = { ... }`",
                })
            }
        };
        match e.name.as_str() {
            "nodes" => g.nodes(block)?,
            _ => g.services(block)?,
        }
    }
    g.resolve_pending()?;
    g.assign_ordinals();
    g.bind_producers();
    Ok(g.desc)
}
