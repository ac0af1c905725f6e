mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use gridforge::assembly::{
    emit_json, generate, plan, plan_inverse, validate, AssemblyDescriptor, Diagnostic,
    GenerateError, Mode, PlanError, StageKind,
};
use gridforge::component::{Binding, ComponentId, LifecycleState, PortSpec};
use gridforge::personality::{Category, Registry};
use proptest::prelude::*;

use common::probe;

fn generate_text(text: &str) -> Result<AssemblyDescriptor, GenerateError> {
    let config = gridforge::dsl::load([("t.gdf", text)]).unwrap_or_else(|e| panic!("{e}"));
    generate(&config, &Registry::builtin())
}

#[test]
fn listing_generates_every_component() {
    let desc = common::compile(&common::listing()).descriptor;
    let per_node = ["user", "protocol", "port", "shell", "transfer", "jre", "openccm"];
    assert_eq!(desc.components.len(), 1 + 501 * per_node.len() + 2 + 500);
    for slot in per_node {
        assert!(desc.components.contains_key(&ComponentId::from(format!("nodes/node-250/{slot}").as_str())));
    }
    let nodes = desc
        .composites
        .values()
        .filter(|c| c.category == Category::Node)
        .count();
    assert_eq!(nodes, 501);
    let node = &desc.composites[&ComponentId::from("nodes/node-42")];
    assert!(node.children.contains(&ComponentId::from("nodes/hostname")));
    assert_eq!(node.exports["Shell"], ComponentId::from("nodes/node-42/shell"));
    let servers = &desc.composites[&ComponentId::from("services/servers")];
    assert_eq!(servers.category, Category::Group);
    assert_eq!(servers.children.len(), 500);
    assert_eq!(
        desc.node_assignment[&ComponentId::from("services/servers/server-9")],
        ComponentId::from("nodes/node-9")
    );
    let ordinal = desc.components[&ComponentId::from("nodes/node-42/protocol")]
        .node
        .as_ref()
        .unwrap()
        .ordinal;
    assert_eq!(ordinal, Some(42));
}

#[test]
fn listing_bindings_follow_the_template() {
    let desc = common::compile(&common::listing()).descriptor;
    let server = |client: &str, port: &str| desc.binding(client, port).map(|b| b.server.to_string());
    let p = "nodes/node-3/protocol";
    assert_eq!(server(p, "hostname").as_deref(), Some("nodes/hostname"));
    assert_eq!(server(p, "port").as_deref(), Some("nodes/node-3/port"));
    assert_eq!(server(p, "user").as_deref(), Some("nodes/node-3/user"));
    assert_eq!(server("nodes/node-3/shell", "protocol").as_deref(), Some(p));
    assert_eq!(server("nodes/node-3/openccm", "jre").as_deref(), Some("nodes/node-3/jre"));
    assert_eq!(server("services/dci", "ns").as_deref(), Some("services/ns"));
    assert_eq!(server("services/ns", "node").as_deref(), Some("nodes/node-0"));
    assert!(validate(&desc).is_empty());
}

#[test]
fn reservation_feeds_the_shared_hostname() {
    let desc = common::compile(&common::combined()).descriptor;
    let b = desc.binding("nodes/hostname", "source").expect("producer bound");
    assert_eq!(b.server.as_str(), "services/reservation");
    let oar = desc.composites[&id("nodes/oar_server")].children.len();
    assert_eq!(desc.components.len(), 4010 + oar + 1);
}

#[test]
fn generator_errors_carry_spans() {
    let base = common::small(2);
    let cases: [(&str, &str, fn(&GenerateError) -> bool); 5] = [
        ("Jre(/opt/java)", "Jvm(/opt/java)", |e| matches!(e, GenerateError::UnknownKind { .. })),
        ("Jre(/opt/java)", "Jre(/opt/java,a,b,c)", |e| matches!(e, GenerateError::ArityMismatch { .. })),
        ("Jre(/opt/java)", "OpenCCM.NameService", |e| matches!(e, GenerateError::WrongCategory { .. })),
        (
            "ns = services/ns\n",
            "ns = services/ns\n      bogus = services/ns\n",
            |e| matches!(e, GenerateError::UnknownPort { port, .. } if port == "bogus"),
        ),
        (
            "ns = OpenCCM.NameService { node = nodes/node-0 }",
            "ns = OpenCCM.NameService { node = services/dci }",
            |e| matches!(e, GenerateError::DanglingNodeRef { path, .. } if path == "services/dci"),
        ),
    ];
    for (from, to, check) in cases {
        assert!(base.contains(from), "{from}");
        let text = base.replacen(from, to, 1);
        let before = text[..text.find(to).unwrap()].matches('\n').count();
        let line = (before + to.trim_end().matches('\n').count()) as u32 + 1;
        let err = generate_text(&text).expect_err(to);
        assert!(check(&err), "{to}: {err}");
        assert_eq!(err.span().line, line, "{err}");
    }
}

fn small_desc() -> AssemblyDescriptor {
    common::descriptor(&common::small(3))
}

fn id(s: &str) -> ComponentId {
    ComponentId::from(s)
}

#[test]
fn validation_reports_each_problem() {
    let mut d = small_desc();
    d.bindings.retain(|b| !(b.client == id("services/dci") && b.port == "ns"));
    assert_eq!(
        validate(&d),
        [Diagnostic::UnboundPort {
            component: id("services/dci"),
            port: "ns".into()
        }]
    );

    let mut d = small_desc();
    for b in d.bindings.iter_mut().filter(|b| b.client == id("services/dci") && b.port == "ns") {
        b.server = id("nodes/node-0/jre");
    }
    assert!(matches!(&validate(&d)[..], [Diagnostic::InterfaceMismatch { interface, .. }] if interface == "NameService"));

    let mut d = small_desc();
    for b in d.bindings.iter_mut().filter(|b| b.client == id("services/dci") && b.port == "ns") {
        b.server = id("services/nope");
    }
    assert!(matches!(&validate(&d)[..], [Diagnostic::UnknownServer { .. }]));

    let mut d = small_desc();
    d.node_assignment.insert(id("services/dci"), id("services/ns"));
    assert_eq!(
        validate(&d),
        [Diagnostic::DanglingNodeRef {
            service: id("services/dci"),
            node: id("services/ns")
        }]
    );

    let mut d = small_desc();
    add_edge(&mut d, "services/ns", "services/dci", "DCIManager");
    assert_eq!(
        validate(&d),
        [Diagnostic::Cycle {
            members: vec![id("services/ns"), id("services/dci")]
        }]
    );
    assert!(matches!(plan(&d), Err(PlanError::CyclicDependency { .. })));

    let mut d = small_desc();
    add_edge(&mut d, "services/servers/server-2", "services/servers/server-1", "DCINode");
    assert_eq!(
        validate(&d),
        [Diagnostic::ParallelDependency {
            group: id("services/servers"),
            client: id("services/servers/server-2"),
            server: id("services/servers/server-1"),
        }]
    );
    assert!(matches!(plan(&d), Err(PlanError::ParallelDependency { .. })));
}

fn add_edge(d: &mut AssemblyDescriptor, client: &str, server: &str, iface: &str) {
    let port = format!("p-{}", server.rsplit('/').next().unwrap());
    d.components
        .get_mut(&id(client))
        .unwrap()
        .requires
        .push(PortSpec::required(&port, iface));
    d.bindings.push(Binding {
        client: id(client),
        port,
        server: id(server),
        interface: iface.into(),
    });
}

#[test]
fn listing_plan_shape() {
    let p = common::compile(&common::listing()).plan;
    let kinds: Vec<StageKind> = p.stages.iter().map(|s| s.kind).collect();
    use StageKind::*;
    assert_eq!(kinds, [SharedInfra, NodePrep, Service, Service, Group]);
    assert_eq!(p.stages[1].units.len(), 501);
    assert_eq!(p.stages[1].mode, Mode::Parallel);
    assert_eq!(p.stages[1].action_count(), 501 * 7);
    assert_eq!(p.stages[4].units.len(), 500);
    assert_eq!(p.len(), 4010);
    assert!(p.actions().all(|a| a.target == LifecycleState::Started));
}

#[test]
fn combined_plan_reserves_first() {
    let p = common::compile(&common::combined()).plan;
    use StageKind::*;
    let shape: Vec<(StageKind, usize, usize)> = p
        .stages
        .iter()
        .map(|s| (s.kind, s.units.len(), s.action_count()))
        .collect();
    assert_eq!(
        shape,
        [
            (Reservation, 2, 5),
            (SharedInfra, 1, 1),
            (NodePrep, 501, 3507),
            (Service, 1, 1),
            (Service, 1, 1),
            (Group, 500, 500),
        ]
    );
    let first: Vec<&str> = p.stages[0].actions().map(|a| a.component.as_str()).collect();
    assert_eq!(first.last(), Some(&"services/reservation"));
    assert_eq!(p.stages[0].label, "reservation services/reservation");
}

#[test]
fn node_units_respect_local_dependencies() {
    let c = common::compile(&common::listing());
    let edges = c.descriptor.dependency_edges();
    for unit in &c.plan.stages[1].units {
        let pos: HashMap<&ComponentId, usize> =
            unit.actions.iter().enumerate().map(|(i, a)| (&a.component, i)).collect();
        for (client, server) in &edges {
            if let (Some(a), Some(b)) = (pos.get(client), pos.get(server)) {
                assert!(b < a, "{server} after {client} in {}", unit.id);
            }
        }
    }
}

#[test]
fn inverse_reverses_and_inverts() {
    let p = common::compile(&common::listing()).plan;
    let inv = plan_inverse(&p);
    assert_eq!(plan_inverse(&inv), p);
    let fwd: Vec<&ComponentId> = p.actions().map(|a| &a.component).collect();
    let back: Vec<&ComponentId> = inv.actions().map(|a| &a.component).collect();
    assert_eq!(back, fwd.into_iter().rev().collect::<Vec<_>>());
    assert!(inv.actions().all(|a| a.target == LifecycleState::Uninstalled));
    assert_eq!(inv.stages[0].kind, StageKind::Group);
}

#[test]
fn emitted_plan_matches_golden() {
    let c = common::compile(&common::sources(&[("small.gdf", &common::small(3))]));
    let json = emit_json(&c.descriptor, &c.plan);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/small3.json");
    if std::env::var_os("GRIDFORGE_BLESS").is_some() {
        std::fs::write(path, &json).unwrap();
    }
    let golden = std::fs::read_to_string(path).expect("golden file; run with GRIDFORGE_BLESS=1");
    assert_eq!(json, golden);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["plan"]["stages"].as_array().unwrap().len(), 5);
}

/// Random DAG over `n` services: edges only point to lower indices.
fn dag(max: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|c| (0..c).map(move |s| (c, s))).collect();
        let k = pairs.len();
        (Just(n), prop::collection::vec(any::<bool>(), k)).prop_map(move |(n, keep)| {
            let edges = pairs
                .iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(e, _)| *e)
                .collect();
            (n, edges)
        })
    })
}

/// Transitive closure by repeated relaxation.
fn reachability(n: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut r: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(c, s) in edges {
        r[c].insert(s);
    }
    loop {
        let mut changed = false;
        for v in 0..n {
            let extra: BTreeSet<usize> = r[v].iter().flat_map(|&w| r[w].clone()).collect();
            for w in extra {
                changed |= r[v].insert(w);
            }
        }
        if !changed {
            return r;
        }
    }
}

fn index_of(id: &ComponentId) -> usize {
    id.as_str().rsplit('c').next().unwrap().parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn plan_order_is_one_of_the_topological_orders((n, edges) in dag(7)) {
        let desc = probe::descriptor(n, &edges, &[]);
        let p = plan(&desc).unwrap();
        let order: Vec<usize> = p.actions().map(|a| index_of(&a.component)).collect();
        let all = common::all_topological_orders(n, &edges);
        prop_assert!(all.contains(&order), "{order:?} not among {} orders", all.len());
    }

    #[test]
    fn plan_is_complete_and_ordered((n, edges) in dag(12), group_mask in any::<u16>()) {
        let group: Vec<usize> = (0..n).filter(|i| group_mask >> i & 1 == 1).collect();
        let groups = if group.len() > 1 { vec![group.clone()] } else { vec![] };
        let desc = probe::descriptor(n, &edges, &groups);
        let reach = reachability(n, &edges);
        let dependent = group.iter().any(|&a| group.iter().any(|&b| reach[a].contains(&b)));
        let result = plan(&desc);
        if groups.is_empty() || !dependent {
            let p = result.unwrap();
            let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
            for (stage, s) in p.stages.iter().enumerate() {
                for a in s.actions() {
                    prop_assert_eq!(a.target, LifecycleState::Started);
                    prop_assert!(seen.insert(index_of(&a.component), stage).is_none());
                }
            }
            prop_assert_eq!(seen.len(), n);
            for &(c, s) in &edges {
                prop_assert!(seen[&s] < seen[&c], "server {s} not staged before client {c}");
            }
            for s in p.stages.iter().filter(|s| s.mode == Mode::Parallel) {
                let members: Vec<usize> = s.actions().map(|a| index_of(&a.component)).collect();
                for &a in &members {
                    for &b in &members {
                        prop_assert!(!reach[a].contains(&b));
                    }
                }
            }
            prop_assert_eq!(plan_inverse(&plan_inverse(&p)), p);
        } else {
            let is_parallel_dependency = matches!(result, Err(PlanError::ParallelDependency { .. }));
            prop_assert!(is_parallel_dependency);
            let flagged = validate(&desc)
                .iter()
                .any(|d| matches!(d, Diagnostic::ParallelDependency { .. }));
            prop_assert!(flagged);
        }
    }
}
