use std::collections::{BTreeSet, HashMap};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::descriptor::AssemblyDescriptor;
use crate::component::ComponentId;
use crate::dsl::Span;
use crate::personality::Category;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// Members of one strongly connected component, in declaration order.
    Cycle { members: Vec<ComponentId> },
    UnboundPort { component: ComponentId, port: String },
    InterfaceMismatch {
        client: ComponentId,
        port: String,
        server: ComponentId,
        interface: String,
    },
    UnknownServer {
        client: ComponentId,
        port: String,
        server: ComponentId,
    },
    DanglingNodeRef { service: ComponentId, node: ComponentId },
    /// Two members of a parallel group are connected by a binding path.
    ParallelDependency {
        group: ComponentId,
        client: ComponentId,
        server: ComponentId,
    },
}

impl Diagnostic {
    /// Component the diagnostic is anchored on, for span lookup.
    pub fn subject(&self) -> &ComponentId {
        match self {
            Diagnostic::Cycle { members } => &members[0],
            Diagnostic::UnboundPort { component, .. } => component,
            Diagnostic::InterfaceMismatch { client, .. }
            | Diagnostic::UnknownServer { client, .. } => client,
            Diagnostic::DanglingNodeRef { service, .. } => service,
            Diagnostic::ParallelDependency { client, .. } => client,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Cycle { members } => {
                let names: Vec<&str> = members.iter().map(ComponentId::as_str).collect();
                write!(f, "dependency cycle: {}", names.join(" -> "))
            }
            Diagnostic::UnboundPort { component, port } => {
                write!(f, "mandatory port `{component}.{port}` is unbound")
            }
            Diagnostic::InterfaceMismatch {
                client,
                port,
                server,
                interface,
            } => write!(
                f,
                "`{server}` does not provide `{interface}` required by `{client}.{port}`"
            ),
            Diagnostic::UnknownServer {
                client,
                port,
                server,
            } => write!(f, "`{client}.{port}` is bound to unknown `{server}`"),
            Diagnostic::DanglingNodeRef { service, node } => {
                write!(f, "`{service}` is assigned to `{node}`, which is not a declared node")
            }
            Diagnostic::ParallelDependency {
                group,
                client,
                server,
            } => write!(
                f,
                "`{client}` depends on `{server}` inside parallel group `{group}`"
            ),
        }
    }
}

/// Diagnostic with the source location of its subject, when known.
pub fn located(desc: &AssemblyDescriptor, d: &Diagnostic) -> String {
    match desc.span_of(d.subject()) {
        Some(span) => format!("{span}: {d}"),
        None => d.to_string(),
    }
}

pub(crate) struct Graph {
    pub graph: DiGraph<ComponentId, ()>,
    pub index: HashMap<ComponentId, NodeIndex>,
}

pub(crate) fn graph(desc: &AssemblyDescriptor) -> Graph {
    let mut graph = DiGraph::new();
    let mut index = HashMap::new();
    for id in desc.components.keys() {
        index.insert(id.clone(), graph.add_node(id.clone()));
    }
    for (c, s) in desc.dependency_edges() {
        if let (Some(&a), Some(&b)) = (index.get(&c), index.get(&s)) {
            graph.update_edge(a, b, ());
        }
    }
    Graph { graph, index }
}

fn cycles(desc: &AssemblyDescriptor, g: &Graph) -> Vec<Diagnostic> {
    let order: HashMap<&ComponentId, usize> =
        desc.components.keys().enumerate().map(|(i, k)| (k, i)).collect();
    let mut out: Vec<Vec<ComponentId>> = tarjan_scc(&g.graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || g.graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut members: Vec<ComponentId> =
                scc.into_iter().map(|n| g.graph[n].clone()).collect();
            members.sort_by_key(|m| order[m]);
            members
        })
        .collect();
    out.sort_by_key(|m| order[&m[0]]);
    out.into_iter()
        .map(|members| Diagnostic::Cycle { members })
        .collect()
}

fn reach(g: &Graph, from: NodeIndex) -> BTreeSet<NodeIndex> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(n) = stack.pop() {
        for m in g.graph.neighbors(n) {
            if seen.insert(m) {
                stack.push(m);
            }
        }
    }
    seen
}

/// Every problem found, in a stable order. Empty means the descriptor can
/// be planned and instantiated.
pub fn validate(desc: &AssemblyDescriptor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (id, decl) in &desc.components {
        for port in &decl.requires {
            let Some(b) = desc.binding(id.as_str(), &port.name) else {
                if !port.optional {
                    out.push(Diagnostic::UnboundPort {
                        component: id.clone(),
                        port: port.name.clone(),
                    });
                }
                continue;
            };
            match desc.provides(b.server.as_str()) {
                None => out.push(Diagnostic::UnknownServer {
                    client: id.clone(),
                    port: port.name.clone(),
                    server: b.server.clone(),
                }),
                Some(p) if !p.contains(&port.interface) => {
                    out.push(Diagnostic::InterfaceMismatch {
                        client: id.clone(),
                        port: port.name.clone(),
                        server: b.server.clone(),
                        interface: port.interface.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    for (service, node) in &desc.node_assignment {
        if !desc.is_node(node.as_str()) {
            out.push(Diagnostic::DanglingNodeRef {
                service: service.clone(),
                node: node.clone(),
            });
        }
    }
    let g = graph(desc);
    out.extend(cycles(desc, &g));
    for (gid, group) in desc
        .composites
        .iter()
        .filter(|(_, c)| c.category == Category::Group)
    {
        let members: Vec<NodeIndex> = group
            .children
            .iter()
            .filter_map(|m| g.index.get(m).copied())
            .collect();
        for &a in &members {
            let reachable = reach(&g, a);
            for &b in &members {
                if a != b && reachable.contains(&b) {
                    out.push(Diagnostic::ParallelDependency {
                        group: gid.clone(),
                        client: g.graph[a].clone(),
                        server: g.graph[b].clone(),
                    });
                }
            }
        }
    }
    out
}

/// Whether a diagnostic comes with a source span.
pub fn span_for<'a>(desc: &'a AssemblyDescriptor, d: &Diagnostic) -> Option<&'a Span> {
    desc.span_of(d.subject())
}
