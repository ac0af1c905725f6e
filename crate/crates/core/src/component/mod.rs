//! Component model: lifecycle state machine, provided and required
//! interfaces, bindings, and composites whose children may be shared.

mod journal;
mod lifecycle;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::Instant;

use chrono::Utc;
use indexmap::IndexMap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use journal::{parse_journal, replay, Journal, JournalError, JournalRecord, Outcome};
pub use lifecycle::{path, LifecycleAction, LifecycleState, UnknownLifecycleName};

use crate::stdlib::{
    Environment, HostnameService, Meter, PortService, ProtocolService, ServiceError,
    ShellService, TransferService, UserService,
};

/// Path-like unique component name, e.g. `nodes/node-3/jre`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        ComponentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `nodes/node-3` joined with `jre` gives `nodes/node-3/jre`.
    pub fn child(&self, name: &str) -> ComponentId {
        ComponentId(format!("{}/{}", self.0, name))
    }

    /// Last path segment.
    pub fn name(&self) -> &str {
        self.0.rsplit('/').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId(s.to_string())
    }
}

impl From<String> for ComponentId {
    fn from(s: String) -> Self {
        ComponentId(s)
    }
}

impl Borrow<str> for ComponentId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A client port: the component requires `interface` through `name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub interface: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

impl PortSpec {
    pub fn required(name: &str, interface: &str) -> Self {
        PortSpec {
            name: name.to_string(),
            interface: interface.to_string(),
            optional: false,
        }
    }

    pub fn optional(name: &str, interface: &str) -> Self {
        PortSpec {
            optional: true,
            ..PortSpec::required(name, interface)
        }
    }
}

/// Node composite a component is deployed within, and the node's ordinal
/// among the nodes sharing a dynamic hostname resolver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub composite: ComponentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub client: ComponentId,
    pub port: String,
    pub server: ComponentId,
    pub interface: String,
}

/// Lifecycle implementation of one component kind, plus whatever business
/// interfaces the kind serves to its clients.
pub trait Behavior: Send + Sync {
    fn perform(&self, action: LifecycleAction, ctx: &Ctx<'_>) -> Result<(), ServiceError>;

    fn as_hostname(&self) -> Option<&(dyn HostnameService + 'static)> {
        None
    }
    fn as_port(&self) -> Option<&(dyn PortService + 'static)> {
        None
    }
    fn as_user(&self) -> Option<&(dyn UserService + 'static)> {
        None
    }
    fn as_protocol(&self) -> Option<&(dyn ProtocolService + 'static)> {
        None
    }
    fn as_shell(&self) -> Option<&(dyn ShellService + 'static)> {
        None
    }
    fn as_transfer(&self) -> Option<&(dyn TransferService + 'static)> {
        None
    }
}

/// Behavior with no effect; used for kinds that only exist to carry bindings.
#[derive(Debug, Default, Clone, Copy)]
pub struct Inert;

impl Behavior for Inert {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }
}

pub struct Component {
    id: ComponentId,
    kind: String,
    provides: BTreeSet<String>,
    requires: Vec<PortSpec>,
    node: Option<NodeRef>,
    state: Mutex<LifecycleState>,
    behavior: Box<dyn Behavior>,
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Component")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("state", &*self.state.lock())
            .finish_non_exhaustive()
    }
}

impl Component {
    pub fn new(id: impl Into<ComponentId>, kind: &str, behavior: Box<dyn Behavior>) -> Self {
        Component {
            id: id.into(),
            kind: kind.to_string(),
            provides: BTreeSet::new(),
            requires: Vec::new(),
            node: None,
            state: Mutex::new(LifecycleState::Uninstalled),
            behavior,
        }
    }

    pub fn with_provides<I, S>(mut self, interfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.provides.extend(interfaces.into_iter().map(Into::into));
        self
    }

    pub fn with_requires(mut self, ports: Vec<PortSpec>) -> Self {
        self.requires = ports;
        self
    }

    pub fn with_node(mut self, node: NodeRef) -> Self {
        self.node = Some(node);
        self
    }

    pub fn id(&self) -> &ComponentId {
        &self.id
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn provides(&self) -> &BTreeSet<String> {
        &self.provides
    }

    pub fn requires(&self) -> &[PortSpec] {
        &self.requires
    }

    pub fn node(&self) -> Option<&NodeRef> {
        self.node.as_ref()
    }

    pub fn state(&self) -> LifecycleState {
        *self.state.lock()
    }

    pub fn behavior(&self) -> &dyn Behavior {
        self.behavior.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composite {
    pub id: ComponentId,
    pub kind: String,
    /// Children in declaration order; a child may belong to several composites.
    pub children: Vec<ComponentId>,
    /// Composite-level interface name to the child serving it.
    pub exports: BTreeMap<String, ComponentId>,
    pub provides: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("unknown component `{0}`")]
    UnknownComponent(ComponentId),
    #[error("duplicate component id `{0}`")]
    DuplicateId(ComponentId),
    #[error("`{client}` has no client port `{port}`")]
    UnknownPort { client: ComponentId, port: String },
    #[error("port `{client}.{port}` is already bound")]
    PortAlreadyBound { client: ComponentId, port: String },
    #[error("`{server}` does not provide `{interface}` required by `{client}.{port}`")]
    InterfaceMismatch {
        client: ComponentId,
        port: String,
        server: ComponentId,
        interface: String,
    },
    #[error("`{0}` cannot be bound to itself")]
    SelfBinding(ComponentId),
    #[error("composite membership cycle through `{0}`")]
    MembershipCycle(ComponentId),
}

#[derive(Debug, thiserror::Error)]
pub enum LifecycleError {
    #[error("unknown component `{0}`")]
    UnknownComponent(ComponentId),
    #[error("`{action}` is not legal for `{component}` in state {state}")]
    IllegalTransition {
        component: ComponentId,
        state: LifecycleState,
        action: LifecycleAction,
    },
    #[error("mandatory port `{component}.{port}` is unbound")]
    UnboundPort { component: ComponentId, port: String },
    #[error("`{component}` depends on `{dependency}`, which is {state}")]
    DependencyNotStarted {
        component: ComponentId,
        dependency: ComponentId,
        state: LifecycleState,
    },
    #[error("{action} of `{component}` failed: {source}")]
    ActionFailed {
        component: ComponentId,
        action: LifecycleAction,
        #[source]
        source: ServiceError,
    },
}

impl LifecycleError {
    pub fn component(&self) -> &ComponentId {
        match self {
            LifecycleError::UnknownComponent(c) => c,
            LifecycleError::IllegalTransition { component, .. }
            | LifecycleError::UnboundPort { component, .. }
            | LifecycleError::DependencyNotStarted { component, .. }
            | LifecycleError::ActionFailed { component, .. } => component,
        }
    }
}

/// Reported to observers for every attempted action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEvent {
    pub component: ComponentId,
    pub action: LifecycleAction,
    pub outcome: Outcome,
    pub millis: u64,
}

enum Target<'a> {
    Component(usize),
    Composite(&'a Composite),
}

/// Live set of components, composites and bindings.
#[derive(Debug, Default)]
pub struct Assembly {
    components: Vec<Component>,
    by_id: HashMap<ComponentId, usize>,
    composites: IndexMap<ComponentId, Composite>,
    bindings: Vec<Binding>,
    bound: HashMap<(usize, String), usize>,
    journal: Journal,
}

impl Assembly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_component(&mut self, component: Component) -> Result<(), BindError> {
        if self.by_id.contains_key(&component.id) || self.composites.contains_key(&component.id)
        {
            return Err(BindError::DuplicateId(component.id));
        }
        self.by_id
            .insert(component.id.clone(), self.components.len());
        self.components.push(component);
        Ok(())
    }

    pub fn add_composite(&mut self, composite: Composite) -> Result<(), BindError> {
        if self.by_id.contains_key(&composite.id) || self.composites.contains_key(&composite.id)
        {
            return Err(BindError::DuplicateId(composite.id));
        }
        for child in composite.children.iter().chain(composite.exports.values()) {
            if child == &composite.id {
                return Err(BindError::MembershipCycle(child.clone()));
            }
            if !self.by_id.contains_key(child) && !self.composites.contains_key(child) {
                return Err(BindError::UnknownComponent(child.clone()));
            }
        }
        // Children must already exist, so membership is acyclic by construction.
        self.composites.insert(composite.id.clone(), composite);
        Ok(())
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.by_id.get(id).map(|&i| &self.components[i])
    }

    pub fn composite(&self, id: &str) -> Option<&Composite> {
        self.composites.get(id)
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.iter()
    }

    pub fn composites(&self) -> impl Iterator<Item = &Composite> {
        self.composites.values()
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn binding(&self, client: &str, port: &str) -> Option<&Binding> {
        let idx = *self.by_id.get(client)?;
        self.bound
            .get(&(idx, port.to_string()))
            .map(|&b| &self.bindings[b])
    }

    pub fn bind(
        &mut self,
        client: &ComponentId,
        port: &str,
        server: &ComponentId,
    ) -> Result<&Binding, BindError> {
        let ci = *self
            .by_id
            .get(client)
            .ok_or_else(|| BindError::UnknownComponent(client.clone()))?;
        let spec = self.components[ci]
            .requires
            .iter()
            .find(|p| p.name == port)
            .ok_or_else(|| BindError::UnknownPort {
                client: client.clone(),
                port: port.to_string(),
            })?;
        if client == server {
            return Err(BindError::SelfBinding(client.clone()));
        }
        let key = (ci, port.to_string());
        if self.bound.contains_key(&key) {
            return Err(BindError::PortAlreadyBound {
                client: client.clone(),
                port: port.to_string(),
            });
        }
        let provides = if let Some(&si) = self.by_id.get(server) {
            self.components[si].provides.contains(&spec.interface)
        } else if let Some(c) = self.composites.get(server) {
            c.provides.contains(&spec.interface)
        } else {
            return Err(BindError::UnknownComponent(server.clone()));
        };
        if !provides {
            return Err(BindError::InterfaceMismatch {
                client: client.clone(),
                port: port.to_string(),
                server: server.clone(),
                interface: spec.interface.clone(),
            });
        }
        let binding = Binding {
            client: client.clone(),
            port: port.to_string(),
            server: server.clone(),
            interface: spec.interface.clone(),
        };
        self.bound.insert(key, self.bindings.len());
        self.bindings.push(binding);
        Ok(self.bindings.last().expect("just pushed"))
    }

    fn target(&self, id: &str) -> Option<Target<'_>> {
        if let Some(&i) = self.by_id.get(id) {
            Some(Target::Component(i))
        } else {
            self.composites.get(id).map(Target::Composite)
        }
    }

    /// Primitive components reachable through a binding target, composites
    /// flattened to their children.
    fn primitives_of(&self, id: &str, out: &mut Vec<usize>) {
        match self.target(id) {
            Some(Target::Component(i)) => {
                if !out.contains(&i) {
                    out.push(i)
                }
            }
            Some(Target::Composite(c)) => {
                for child in &c.children {
                    self.primitives_of(child.as_str(), out);
                }
            }
            None => {}
        }
    }

    /// Dependency edges `client -> server` over primitive components.
    pub fn dependency_edges(&self) -> Vec<(ComponentId, ComponentId)> {
        let mut edges = Vec::new();
        for b in &self.bindings {
            let mut servers = Vec::new();
            self.primitives_of(b.server.as_str(), &mut servers);
            for s in servers {
                edges.push((b.client.clone(), self.components[s].id.clone()));
            }
        }
        edges
    }

    pub fn status(&self) -> BTreeMap<ComponentId, LifecycleState> {
        self.components
            .iter()
            .map(|c| (c.id.clone(), c.state()))
            .collect()
    }

    /// Overwrite states, e.g. when resuming from persisted state. Unknown ids are ignored.
    pub fn restore_states(&self, states: &BTreeMap<ComponentId, LifecycleState>) {
        for (id, s) in states {
            if let Some(c) = self.component(id.as_str()) {
                *c.state.lock() = *s;
            }
        }
    }

    /// Swap the behavior of a component (failure injection, instrumentation).
    pub fn replace_behavior(
        &mut self,
        id: &str,
        behavior: Box<dyn Behavior>,
    ) -> Result<Box<dyn Behavior>, BindError> {
        let i = *self
            .by_id
            .get(id)
            .ok_or_else(|| BindError::UnknownComponent(id.into()))?;
        Ok(std::mem::replace(&mut self.components[i].behavior, behavior))
    }

    fn index(&self, id: &str) -> Result<usize, LifecycleError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| LifecycleError::UnknownComponent(id.into()))
    }

    pub fn transition(
        &self,
        id: &str,
        action: LifecycleAction,
        env: &Environment,
    ) -> Result<LifecycleState, LifecycleError> {
        self.transition_observed(id, action, env, &mut |_| {})
    }

    pub fn transition_observed(
        &self,
        id: &str,
        action: LifecycleAction,
        env: &Environment,
        observer: &mut dyn FnMut(&ActionEvent),
    ) -> Result<LifecycleState, LifecycleError> {
        let idx = self.index(id)?;
        self.run_action(idx, action, env, observer)
    }

    fn run_action(
        &self,
        idx: usize,
        action: LifecycleAction,
        env: &Environment,
        observer: &mut dyn FnMut(&ActionEvent),
    ) -> Result<LifecycleState, LifecycleError> {
        let c = &self.components[idx];
        // Held for the whole action: one writer per component.
        let mut state = c.state.lock();
        let next = state
            .apply(action)
            .ok_or_else(|| LifecycleError::IllegalTransition {
                component: c.id.clone(),
                state: *state,
                action,
            })?;
        for port in c.requires.iter().filter(|p| !p.optional) {
            if !self.bound.contains_key(&(idx, port.name.clone())) {
                return Err(LifecycleError::UnboundPort {
                    component: c.id.clone(),
                    port: port.name.clone(),
                });
            }
        }
        if matches!(action, LifecycleAction::Install | LifecycleAction::Start) {
            self.check_dependencies(idx)?;
        }

        let meter = Meter::new(format!("{}#{}", c.id, action));
        let began = Instant::now();
        let ctx = Ctx {
            assembly: self,
            component: c,
            env,
            meter: &meter,
        };
        let result = c.behavior.perform(action, &ctx);
        let millis = if env.is_virtual() {
            meter.units()
        } else {
            began.elapsed().as_millis() as u64
        };
        let outcome = if result.is_ok() {
            Outcome::Ok
        } else {
            Outcome::Fail
        };
        self.journal.append(JournalRecord {
            timestamp: Utc::now(),
            component: c.id.clone(),
            action,
            outcome,
            millis,
        });
        observer(&ActionEvent {
            component: c.id.clone(),
            action,
            outcome,
            millis,
        });
        match result {
            Ok(()) => {
                *state = next;
                Ok(next)
            }
            Err(source) => Err(LifecycleError::ActionFailed {
                component: c.id.clone(),
                action,
                source,
            }),
        }
    }

    fn check_dependencies(&self, idx: usize) -> Result<(), LifecycleError> {
        let c = &self.components[idx];
        for port in &c.requires {
            let Some(&b) = self.bound.get(&(idx, port.name.clone())) else {
                continue;
            };
            let mut servers = Vec::new();
            self.primitives_of(self.bindings[b].server.as_str(), &mut servers);
            for s in servers {
                let dep = &self.components[s];
                let state = dep.state();
                if state != LifecycleState::Started {
                    return Err(LifecycleError::DependencyNotStarted {
                        component: c.id.clone(),
                        dependency: dep.id.clone(),
                        state,
                    });
                }
            }
        }
        Ok(())
    }

    /// `members` reordered so each comes after the members it is bound to.
    fn servers_first(&self, members: &[usize]) -> Vec<usize> {
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(p, &m)| (m, p)).collect();
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); members.len()];
        for b in &self.bindings {
            let Some(&client) = self.by_id.get(b.client.as_str()).and_then(|c| pos.get(c)) else {
                continue;
            };
            let mut servers = Vec::new();
            self.primitives_of(b.server.as_str(), &mut servers);
            for s in servers.iter().filter_map(|s| pos.get(s)) {
                if *s != client {
                    deps[client].insert(*s);
                }
            }
        }
        let mut placed = vec![false; members.len()];
        let mut order = Vec::with_capacity(members.len());
        while order.len() < members.len() {
            // On a cycle fall back to the first unplaced member.
            let next = (0..members.len())
                .find(|&p| !placed[p] && deps[p].iter().all(|&d| placed[d]))
                .or_else(|| (0..members.len()).find(|&p| !placed[p]))
                .expect("unplaced member");
            placed[next] = true;
            order.push(members[next]);
        }
        order
    }

    /// Drive a component to `target` along the unique shortest path.
    /// On failure the component stays in the last state reached.
    pub fn ensure(
        &self,
        id: &str,
        target: LifecycleState,
        env: &Environment,
    ) -> Result<Vec<LifecycleAction>, LifecycleError> {
        self.ensure_observed(id, target, env, &mut |_| {})
    }

    pub fn ensure_observed(
        &self,
        id: &str,
        target: LifecycleState,
        env: &Environment,
        observer: &mut dyn FnMut(&ActionEvent),
    ) -> Result<Vec<LifecycleAction>, LifecycleError> {
        let idx = self.index(id)?;
        let actions = path(self.components[idx].state(), target);
        for &a in &actions {
            self.run_action(idx, a, env, observer)?;
        }
        Ok(actions)
    }

    /// Ensure every child of a composite, servers before their clients going
    /// up and the reverse going down; declaration order breaks ties. Shared
    /// children already at the target are reported with an empty action list.
    pub fn ensure_composite(
        &self,
        id: &str,
        target: LifecycleState,
        env: &Environment,
    ) -> Result<Vec<(ComponentId, Vec<LifecycleAction>)>, LifecycleError> {
        let composite = self
            .composites
            .get(id)
            .ok_or_else(|| LifecycleError::UnknownComponent(id.into()))?;
        let mut members = Vec::new();
        self.primitives_of(composite.id.as_str(), &mut members);
        let mut members = self.servers_first(&members);
        if target == LifecycleState::Uninstalled {
            members.reverse();
        }
        let mut done = Vec::with_capacity(members.len());
        for i in members {
            let cid = self.components[i].id.clone();
            let actions = self.ensure(cid.as_str(), target, env)?;
            done.push((cid, actions));
        }
        Ok(done)
    }
}

/// What a behavior sees while one of its lifecycle actions or business
/// methods runs.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    assembly: &'a Assembly,
    component: &'a Component,
    env: &'a Environment,
    meter: &'a Meter,
}

/// A collaborator's business interface together with the collaborator's own context.
pub struct Service<'a, T: ?Sized + 'static> {
    pub ctx: Ctx<'a>,
    pub svc: &'a T,
}

impl<'a> Ctx<'a> {
    pub fn id(&self) -> &'a ComponentId {
        &self.component.id
    }

    pub fn component(&self) -> &'a Component {
        self.component
    }

    pub fn assembly(&self) -> &'a Assembly {
        self.assembly
    }

    pub fn env(&self) -> &'a Environment {
        self.env
    }

    pub fn meter(&self) -> &'a Meter {
        self.meter
    }

    pub fn node_ordinal(&self) -> Option<usize> {
        self.component.node.as_ref().and_then(|n| n.ordinal)
    }

    /// Resolve a binding target to the primitive serving `interface`.
    fn serving(&self, id: &str, interface: &str) -> Option<&'a Component> {
        match self.assembly.target(id)? {
            Target::Component(i) => Some(&self.assembly.components[i]),
            Target::Composite(c) => {
                let child = c.exports.get(interface)?;
                self.serving(child.as_str(), interface)
            }
        }
    }

    /// The collaborator bound on `port`, or, when that port is absent or
    /// unbound, the child exported as `interface` by the node composite
    /// bound on `node`.
    pub fn collaborator(&self, port: &str, interface: &str) -> Option<&'a Component> {
        let id = self.component.id.as_str();
        if let Some(b) = self.assembly.binding(id, port) {
            return self.serving(b.server.as_str(), interface);
        }
        let node = self.assembly.binding(id, "node")?;
        self.serving(node.server.as_str(), interface)
    }

    fn lookup<T: ?Sized + 'static>(
        &self,
        port: &str,
        interface: &str,
        pick: impl Fn(&'a dyn Behavior) -> Option<&'a T>,
    ) -> Result<Option<Service<'a, T>>, ServiceError> {
        let Some(peer) = self.collaborator(port, interface) else {
            return Ok(None);
        };
        let state = peer.state();
        if state != LifecycleState::Started {
            return Err(ServiceError::NotStarted {
                component: peer.id.to_string(),
                state,
            });
        }
        let svc = pick(peer.behavior.as_ref()).ok_or_else(|| ServiceError::MissingCollaborator {
            component: self.component.id.to_string(),
            interface: interface.to_string(),
        })?;
        Ok(Some(Service {
            ctx: Ctx {
                component: peer,
                ..*self
            },
            svc,
        }))
    }

    fn require<T: ?Sized + 'static>(
        &self,
        found: Result<Option<Service<'a, T>>, ServiceError>,
        interface: &str,
    ) -> Result<Service<'a, T>, ServiceError> {
        found?.ok_or_else(|| ServiceError::MissingCollaborator {
            component: self.component.id.to_string(),
            interface: interface.to_string(),
        })
    }

    pub fn hostname(&self) -> Result<Service<'a, dyn HostnameService>, ServiceError> {
        self.require(self.lookup("hostname", "Hostname", |b| b.as_hostname()), "Hostname")
    }

    pub fn port(&self) -> Result<Option<Service<'a, dyn PortService>>, ServiceError> {
        self.lookup("port", "Port", |b| b.as_port())
    }

    pub fn user(&self) -> Result<Option<Service<'a, dyn UserService>>, ServiceError> {
        self.lookup("user", "User", |b| b.as_user())
    }

    pub fn protocol(&self) -> Result<Service<'a, dyn ProtocolService>, ServiceError> {
        self.require(self.lookup("protocol", "Protocol", |b| b.as_protocol()), "Protocol")
    }

    pub fn shell(&self) -> Result<Service<'a, dyn ShellService>, ServiceError> {
        self.require(self.lookup("shell", "Shell", |b| b.as_shell()), "Shell")
    }

    pub fn transfer(&self) -> Result<Option<Service<'a, dyn TransferService>>, ServiceError> {
        self.lookup("transfer", "Transfer", |b| b.as_transfer())
    }
}
