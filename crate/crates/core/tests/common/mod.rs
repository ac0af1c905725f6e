#![allow(dead_code)]

use gridforge::assembly::{self, AssemblyDescriptor, DeploymentPlan};
use gridforge::personality::Registry;
use gridforge::pipeline::{self, Compiled, Loaded};

pub const LISTING: &str = include_str!("../fixtures/listing.gdf");
pub const RESERVATION: &str = include_str!("../fixtures/reservation.gdf");

pub fn sources(parts: &[(&str, &str)]) -> Vec<(String, String)> {
    parts
        .iter()
        .map(|(n, t)| (n.to_string(), t.to_string()))
        .collect()
}

pub fn listing() -> Vec<(String, String)> {
    sources(&[("listing.gdf", LISTING)])
}

pub fn combined() -> Vec<(String, String)> {
    sources(&[("listing.gdf", LISTING), ("reservation.gdf", RESERVATION)])
}

pub fn compile(srcs: &[(String, String)]) -> Compiled {
    pipeline::compile(srcs, &Registry::builtin()).unwrap_or_else(|e| panic!("{e}"))
}

pub fn load(srcs: &[(String, String)]) -> Loaded {
    pipeline::load(srcs, &Registry::builtin()).unwrap_or_else(|e| panic!("{e}"))
}

pub fn descriptor(text: &str) -> AssemblyDescriptor {
    let config = gridforge::dsl::load([("t.gdf", text)]).unwrap_or_else(|e| panic!("{e}"));
    assembly::generate(&config, &Registry::builtin()).unwrap_or_else(|e| panic!("{e}"))
}

pub fn plan_of(text: &str) -> DeploymentPlan {
    assembly::plan(&descriptor(text)).unwrap_or_else(|e| panic!("{e}"))
}

/// Config with `n` nodes sharing a pre-provisioned node list.
pub fn small(n: usize) -> String {
    let top = n.saturating_sub(1);
    format!(
        "D = OpenCCM.Deployment {{
  nodes = {{
    hostname = DynamicHost(~/nodelist)
    apply FOR(i,0,{top}) {{
      node-%{{i}} = Grid5000_NODE {{
        hostname = nodes/hostname
        user = User(u, ~/.ssh/id_rsa)
        jre = Jre(/opt/java)
        openccm = OpenCCM(/opt/OpenCCM,/opt/JacORB)
      }}
    }}
  }}
  services = {{
    ns = OpenCCM.NameService {{ node = nodes/node-0 }}
    dci = OpenCCM.DCIManager(DCI) {{
      ns = services/ns
      node = nodes/node-0
    }}
    servers = ParallelRunner {{
      apply FOR(i,1,{top}) {{
        server-%{{i}} = OpenCCM.DCI_NODE(NM_%{{i}}) {{
          dci = services/dci
          node = nodes/node-%{{i}}
        }}
      }}
    }}
  }}
}}
"
    )
}

pub mod probe {
    use std::collections::{BTreeMap, BTreeSet};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use gridforge::assembly::{AssemblyDescriptor, ComponentDecl, ServiceDecl};
    use gridforge::component::{
        Assembly, Behavior, Binding, Component, ComponentId, Ctx, LifecycleAction, PortSpec,
    };
    use gridforge::personality::{Args, Category};
    use gridforge::simgrid::{Fleet, SimClockConfig, SimTransport};
    use gridforge::stdlib::{Environment, MemFs, ServiceError};
    use parking_lot::Mutex;

    /// Counters shared by every probe of one assembly.
    #[derive(Default)]
    pub struct Probes {
        pub calls: AtomicUsize,
        pub active: AtomicUsize,
        pub peak: AtomicUsize,
        pub fail: Mutex<BTreeSet<String>>,
    }

    /// Charges `latency` virtual units per action; fails for ids in `fail`.
    pub struct Probe {
        pub latency: u64,
        pub shared: Arc<Probes>,
    }

    impl Behavior for Probe {
        fn perform(&self, _: LifecycleAction, ctx: &Ctx<'_>) -> Result<(), ServiceError> {
            let s = &self.shared;
            s.calls.fetch_add(1, Ordering::SeqCst);
            let now = s.active.fetch_add(1, Ordering::SeqCst) + 1;
            s.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::yield_now();
            ctx.meter().charge(self.latency);
            s.active.fetch_sub(1, Ordering::SeqCst);
            if s.fail.lock().contains(ctx.id().as_str()) {
                return Err(ServiceError::Injected(ctx.id().to_string()));
            }
            Ok(())
        }
    }

    /// Service-only descriptor: `c0..c(n-1)`, `edges` as `(client, server)`,
    /// `groups` listing members of parallel groups.
    pub fn descriptor(n: usize, edges: &[(usize, usize)], groups: &[Vec<usize>]) -> AssemblyDescriptor {
        let mut desc = AssemblyDescriptor {
            name: "Probe".into(),
            kind: "Deployment".into(),
            ..AssemblyDescriptor::default()
        };
        let mut group_of: BTreeMap<usize, usize> = BTreeMap::new();
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                group_of.insert(m, g);
            }
        }
        let id = |i: usize| match group_of.get(&i) {
            Some(g) => ComponentId::new(format!("services/g{g}/c{i}")),
            None => ComponentId::new(format!("services/c{i}")),
        };
        for i in 0..n {
            let requires = edges
                .iter()
                .filter(|(c, _)| *c == i)
                .map(|(_, s)| PortSpec::required(&format!("d{s}"), "Probe"))
                .collect();
            desc.components.insert(
                id(i),
                ComponentDecl {
                    kind: "Probe".into(),
                    category: Category::Service,
                    args: Args::new(),
                    provides: vec!["Probe".into()],
                    requires,
                    node: None,
                },
            );
            desc.services.push(ServiceDecl {
                id: id(i),
                group: group_of
                    .get(&i)
                    .map(|g| ComponentId::new(format!("services/g{g}"))),
            });
        }
        for (g, members) in groups.iter().enumerate() {
            desc.composites.insert(
                ComponentId::new(format!("services/g{g}")),
                gridforge::assembly::CompositeDecl {
                    kind: "ParallelRunner".into(),
                    category: Category::Group,
                    children: members.iter().map(|&m| id(m)).collect(),
                    exports: Default::default(),
                    provides: Default::default(),
                },
            );
        }
        for &(c, s) in edges {
            desc.bindings.push(Binding {
                client: id(c),
                port: format!("d{s}"),
                server: id(s),
                interface: "Probe".into(),
            });
        }
        desc
    }

    /// Live assembly of probes for a descriptor's components and bindings.
    pub fn assembly(desc: &AssemblyDescriptor, latency: u64) -> (Assembly, Arc<Probes>) {
        let shared = Arc::new(Probes::default());
        let mut asm = Assembly::new();
        for (id, decl) in &desc.components {
            asm.add_component(
                Component::new(
                    id.clone(),
                    &decl.kind,
                    Box::new(Probe {
                        latency,
                        shared: shared.clone(),
                    }),
                )
                .with_provides(decl.provides.iter().cloned())
                .with_requires(decl.requires.clone()),
            )
            .unwrap();
        }
        for b in &desc.bindings {
            asm.bind(&b.client, &b.port, &b.server).unwrap();
        }
        (asm, shared)
    }

    /// Virtual-time environment with no nodes.
    pub fn virtual_env() -> Environment {
        Environment::new(
            Arc::new(SimTransport::new(Arc::new(Fleet::create(0, SimClockConfig::default())))),
            Arc::new(MemFs::new()),
        )
    }

    /// Replace every behavior of a live assembly with probes.
    pub fn probe_all(asm: &mut Assembly, latency: u64) -> Arc<Probes> {
        let shared = Arc::new(Probes::default());
        let ids: Vec<ComponentId> = asm.components().map(|c| c.id().clone()).collect();
        for id in ids {
            asm.replace_behavior(
                id.as_str(),
                Box::new(Probe {
                    latency,
                    shared: shared.clone(),
                }),
            )
            .unwrap();
        }
        shared
    }
}

/// Every topological order of `n` nodes where each `(client, server)` edge
/// puts the server first.
pub fn all_topological_orders(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn go(
        n: usize,
        edges: &[(usize, usize)],
        placed: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if placed.len() == n {
            out.push(placed.clone());
            return;
        }
        for v in 0..n {
            if used[v] {
                continue;
            }
            let ready = edges.iter().all(|&(c, s)| c != v || used[s]);
            if ready {
                used[v] = true;
                placed.push(v);
                go(n, edges, placed, used, out);
                placed.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(n, edges, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
