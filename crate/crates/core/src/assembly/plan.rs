use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::descriptor::AssemblyDescriptor;
use crate::component::{ComponentId, LifecycleState};
use crate::personality::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    /// A service the infrastructure depends on, with what it needs.
    Reservation,
    SharedInfra,
    NodePrep,
    Service,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanAction {
    pub component: ComponentId,
    pub target: LifecycleState,
}

/// Actions that always run in order on one worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub actions: Vec<PlanAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    pub label: String,
    pub mode: Mode,
    pub units: Vec<Unit>,
}

impl Stage {
    pub fn actions(&self) -> impl Iterator<Item = &PlanAction> {
        self.units.iter().flat_map(|u| u.actions.iter())
    }

    pub fn action_count(&self) -> usize {
        self.units.iter().map(|u| u.actions.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub stages: Vec<Stage>,
}

impl DeploymentPlan {
    pub fn actions(&self) -> impl Iterator<Item = &PlanAction> {
        self.stages.iter().flat_map(Stage::actions)
    }

    pub fn len(&self) -> usize {
        self.stages.iter().map(Stage::action_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("dependency cycle among {}", join(.remaining))]
    CyclicDependency { remaining: Vec<ComponentId> },
    #[error("`{client}` depends on `{server}` inside parallel group `{group}`")]
    ParallelDependency {
        group: ComponentId,
        client: ComponentId,
        server: ComponentId,
    },
}

fn join(ids: &[ComponentId]) -> String {
    ids.iter().map(ComponentId::as_str).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitKind {
    Shared,
    Node,
    Service,
}

struct PUnit {
    id: String,
    kind: UnitKind,
    members: Vec<usize>,
    deps: BTreeSet<usize>,
}

struct Planner<'a> {
    desc: &'a AssemblyDescriptor,
    units: Vec<PUnit>,
    unit_of: Vec<usize>,
    /// Component-level edges, by component index.
    edges: Vec<Vec<usize>>,
    done: Vec<bool>,
}

enum Item {
    Single(usize),
    Group(ComponentId, Vec<usize>),
}

impl<'a> Planner<'a> {
    fn new(desc: &'a AssemblyDescriptor) -> Self {
        let index: HashMap<&ComponentId, usize> =
            desc.components.keys().enumerate().map(|(i, k)| (k, i)).collect();
        let services: BTreeSet<&ComponentId> = desc.services.iter().map(|s| &s.id).collect();
        let mut owners: HashMap<&ComponentId, Vec<&ComponentId>> = HashMap::new();
        for (cid, c) in &desc.composites {
            if c.category == Category::Node {
                for child in &c.children {
                    owners.entry(child).or_default().push(cid);
                }
            }
        }

        let mut units: Vec<PUnit> = Vec::new();
        let mut by_key: HashMap<String, usize> = HashMap::new();
        let mut unit_of = vec![0; desc.components.len()];
        for (i, (id, decl)) in desc.components.iter().enumerate() {
            let (key, kind) = if services.contains(id) {
                (id.to_string(), UnitKind::Service)
            } else {
                let owner = decl.node.as_ref().map(|n| &n.composite).filter(|n| {
                    owners.get(id).is_some_and(|o| o.len() == 1 && o[0] == *n)
                });
                match owner {
                    Some(n) => (n.to_string(), UnitKind::Node),
                    None => (id.to_string(), UnitKind::Shared),
                }
            };
            let u = *by_key.entry(key.clone()).or_insert_with(|| {
                units.push(PUnit {
                    id: key,
                    kind,
                    members: Vec::new(),
                    deps: BTreeSet::new(),
                });
                units.len() - 1
            });
            units[u].members.push(i);
            unit_of[i] = u;
        }
        let mut edges = vec![Vec::new(); desc.components.len()];
        for (c, s) in desc.dependency_edges() {
            let (a, b) = (index[&c], index[&s]);
            if !edges[a].contains(&b) {
                edges[a].push(b);
            }
            if unit_of[a] != unit_of[b] {
                units[unit_of[a]].deps.insert(unit_of[b]);
            } else if a == b {
                units[unit_of[a]].deps.insert(unit_of[a]);
            }
        }
        let done = vec![false; units.len()];
        Planner {
            desc,
            units,
            unit_of,
            edges,
            done,
        }
    }

    fn ready(&self, u: usize) -> bool {
        !self.done[u] && self.units[u].deps.iter().all(|&d| self.done[d])
    }

    fn remaining(&self) -> Vec<ComponentId> {
        self.units
            .iter()
            .enumerate()
            .filter(|(u, _)| !self.done[*u])
            .flat_map(|(_, unit)| unit.members.iter())
            .map(|&i| self.id(i).clone())
            .collect()
    }

    fn id(&self, i: usize) -> &ComponentId {
        self.desc.components.get_index(i).expect("index in range").0
    }

    /// Members of a unit ordered so servers come before clients, ties
    /// broken by declaration order.
    fn order_members(&self, u: usize) -> Result<Vec<usize>, PlanError> {
        let members = &self.units[u].members;
        let set: BTreeSet<usize> = members.iter().copied().collect();
        let mut pending: BTreeSet<usize> = set.clone();
        let mut out = Vec::with_capacity(members.len());
        while !pending.is_empty() {
            let next = pending.iter().copied().find(|&m| {
                self.edges[m]
                    .iter()
                    .all(|d| !set.contains(d) || !pending.contains(d))
            });
            let Some(next) = next else {
                return Err(PlanError::CyclicDependency {
                    remaining: pending.iter().map(|&i| self.id(i).clone()).collect(),
                });
            };
            pending.remove(&next);
            out.push(next);
        }
        Ok(out)
    }

    fn unit(&self, u: usize) -> Result<Unit, PlanError> {
        Ok(Unit {
            id: self.units[u].id.clone(),
            actions: self
                .order_members(u)?
                .into_iter()
                .map(|i| PlanAction {
                    component: self.id(i).clone(),
                    target: LifecycleState::Started,
                })
                .collect(),
        })
    }

    fn stage(
        &mut self,
        kind: StageKind,
        label: String,
        mode: Mode,
        units: &[usize],
    ) -> Result<Stage, PlanError> {
        let mut out = Vec::with_capacity(units.len());
        for &u in units {
            out.push(self.unit(u)?);
            self.done[u] = true;
        }
        Ok(Stage {
            kind,
            label,
            mode,
            units: out,
        })
    }

    /// Service units some infrastructure unit depends on.
    fn early_services(&self) -> Vec<usize> {
        let mut early = BTreeSet::new();
        let mut seen = vec![false; self.units.len()];
        let mut stack: Vec<usize> = (0..self.units.len())
            .filter(|&u| self.units[u].kind != UnitKind::Service)
            .collect();
        while let Some(u) = stack.pop() {
            for &d in &self.units[u].deps {
                if self.units[d].kind == UnitKind::Service {
                    early.insert(d);
                }
                if !seen[d] {
                    seen[d] = true;
                    stack.push(d);
                }
            }
        }
        early.into_iter().collect()
    }

    /// Undone dependency closure of `root`, dependencies first.
    fn closure(&self, root: usize) -> Result<Vec<usize>, PlanError> {
        fn visit(
            p: &Planner<'_>,
            u: usize,
            state: &mut [u8],
            out: &mut Vec<usize>,
        ) -> Result<(), PlanError> {
            match state[u] {
                2 => return Ok(()),
                1 => {
                    return Err(PlanError::CyclicDependency {
                        remaining: p.remaining(),
                    })
                }
                _ => {}
            }
            state[u] = 1;
            for &d in &p.units[u].deps {
                if !p.done[d] {
                    visit(p, d, state, out)?;
                }
            }
            state[u] = 2;
            out.push(u);
            Ok(())
        }
        let mut state = vec![0u8; self.units.len()];
        let mut out = Vec::new();
        visit(self, root, &mut state, &mut out)?;
        Ok(out)
    }

    fn items(&self) -> Vec<Item> {
        let index: HashMap<&ComponentId, usize> = self
            .desc
            .components
            .keys()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let mut items: Vec<Item> = Vec::new();
        let mut groups: HashMap<&ComponentId, usize> = HashMap::new();
        for s in &self.desc.services {
            let u = self.unit_of[index[&s.id]];
            match &s.group {
                None => items.push(Item::Single(u)),
                Some(g) => match groups.get(g) {
                    Some(&at) => {
                        if let Item::Group(_, members) = &mut items[at] {
                            members.push(u);
                        }
                    }
                    None => {
                        groups.insert(g, items.len());
                        items.push(Item::Group(g.clone(), vec![u]));
                    }
                },
            }
        }
        items
    }

    fn group_ready(&self, group: &ComponentId, members: &[usize]) -> Result<bool, PlanError> {
        for &m in members {
            let mut seen = BTreeSet::new();
            let mut stack = vec![m];
            while let Some(u) = stack.pop() {
                for &d in &self.units[u].deps {
                    if !seen.insert(d) {
                        continue;
                    }
                    if members.contains(&d) {
                        return Err(PlanError::ParallelDependency {
                            group: group.clone(),
                            client: ComponentId::new(self.units[m].id.clone()),
                            server: ComponentId::new(self.units[d].id.clone()),
                        });
                    }
                    stack.push(d);
                }
            }
        }
        Ok(members.iter().all(|&m| self.ready(m)))
    }

    fn run(mut self) -> Result<DeploymentPlan, PlanError> {
        let early = self.early_services();
        let items = self.items();
        let mut stages = Vec::new();
        while self.done.iter().any(|d| !d) {
            if let Some(&e) = early.iter().find(|&&e| !self.done[e]) {
                let units = self.closure(e)?;
                let label = format!("reservation {}", self.units[e].id);
                stages.push(self.stage(StageKind::Reservation, label, Mode::Sequential, &units)?);
                continue;
            }
            let ready_of = |p: &Self, kind: UnitKind| -> Vec<usize> {
                (0..p.units.len())
                    .filter(|&u| p.units[u].kind == kind && p.ready(u))
                    .collect()
            };
            let shared = ready_of(&self, UnitKind::Shared);
            if !shared.is_empty() {
                stages.push(self.stage(
                    StageKind::SharedInfra,
                    "shared-infra".into(),
                    Mode::Sequential,
                    &shared,
                )?);
                continue;
            }
            let nodes = ready_of(&self, UnitKind::Node);
            if !nodes.is_empty() {
                stages.push(self.stage(
                    StageKind::NodePrep,
                    "node-prep".into(),
                    Mode::Parallel,
                    &nodes,
                )?);
                continue;
            }
            let mut emitted = false;
            for item in &items {
                match item {
                    Item::Single(u) if self.ready(*u) => {
                        let label = format!("service {}", self.units[*u].id);
                        stages.push(self.stage(
                            StageKind::Service,
                            label,
                            Mode::Sequential,
                            &[*u],
                        )?);
                        emitted = true;
                    }
                    Item::Group(g, members)
                        if !self.done[members[0]] && self.group_ready(g, members)? =>
                    {
                        stages.push(self.stage(
                            StageKind::Group,
                            format!("group {g}"),
                            Mode::Parallel,
                            members,
                        )?);
                        emitted = true;
                    }
                    _ => {}
                }
                if emitted {
                    break;
                }
            }
            if !emitted {
                return Err(PlanError::CyclicDependency {
                    remaining: self.remaining(),
                });
            }
        }
        Ok(DeploymentPlan { stages })
    }
}

/// Build the deployment plan: every component driven to Started, servers
/// always before their clients.
pub fn plan(desc: &AssemblyDescriptor) -> Result<DeploymentPlan, PlanError> {
    Planner::new(desc).run()
}

fn invert(target: LifecycleState) -> LifecycleState {
    match target {
        LifecycleState::Started => LifecycleState::Uninstalled,
        LifecycleState::Uninstalled => LifecycleState::Started,
        LifecycleState::Installed => LifecycleState::Installed,
    }
}

/// The undeployment plan: stages, units and actions reversed.
pub fn plan_inverse(plan: &DeploymentPlan) -> DeploymentPlan {
    DeploymentPlan {
        stages: plan
            .stages
            .iter()
            .rev()
            .map(|s| Stage {
                kind: s.kind,
                label: s.label.clone(),
                mode: s.mode,
                units: s
                    .units
                    .iter()
                    .rev()
                    .map(|u| Unit {
                        id: u.id.clone(),
                        actions: u
                            .actions
                            .iter()
                            .rev()
                            .map(|a| PlanAction {
                                component: a.component.clone(),
                                target: invert(a.target),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}
