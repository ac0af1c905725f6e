//! Configuration sources to a live, planned assembly, plus the backends it
//! runs against.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::assembly::{
    generate, instantiate, located, plan, validate, AssemblyDescriptor, DeploymentPlan,
    GenerateError, InstantiateError, PlanError,
};
use crate::component::Assembly;
use crate::dsl::{self, DslError, ExpandedConfig};
use crate::personality::{Category, Registry};
use crate::simgrid::{Fleet, SimClockConfig, SimTransport};
use crate::stdlib::{Environment, HostFs, LocalTransport, MemFs, RealFs, SshTransport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
}

impl PipelineError {
    /// Configuration is at fault rather than the environment.
    pub fn is_diagnostic(&self) -> bool {
        !matches!(self, PipelineError::Io { .. } | PipelineError::Instantiate(_))
    }
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub config: ExpandedConfig,
    pub descriptor: AssemblyDescriptor,
    pub plan: DeploymentPlan,
}

pub fn read_sources<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<(String, String)>, PipelineError> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let name = p.display().to_string();
            std::fs::read_to_string(p)
                .map(|text| (name.clone(), text))
                .map_err(|source| PipelineError::Io { path: name, source })
        })
        .collect()
}

/// Parse, merge, expand, generate, validate and plan.
pub fn compile(sources: &[(String, String)], registry: &Registry) -> Result<Compiled, PipelineError> {
    let config = dsl::load(sources.iter().map(|(n, t)| (n.as_str(), t.as_str())))?;
    let descriptor = generate(&config, registry)?;
    let diagnostics = validate(&descriptor);
    if !diagnostics.is_empty() {
        return Err(PipelineError::Invalid(
            diagnostics.iter().map(|d| located(&descriptor, d)).collect(),
        ));
    }
    let plan = plan(&descriptor)?;
    Ok(Compiled {
        config,
        descriptor,
        plan,
    })
}

/// Compiled configuration with its live assembly and the time taken to
/// get there (the loading overhead, excluded from deployment time).
pub struct Loaded {
    pub compiled: Compiled,
    pub assembly: Assembly,
    pub overhead: Duration,
}

pub fn load(sources: &[(String, String)], registry: &Registry) -> Result<Loaded, PipelineError> {
    let began = Instant::now();
    let compiled = compile(sources, registry)?;
    let assembly = instantiate(&compiled.descriptor, registry)?;
    Ok(Loaded {
        compiled,
        assembly,
        overhead: began.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Sim,
    Local,
    Ssh,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(TransportKind::Sim),
            "local" => Ok(TransportKind::Local),
            "ssh" => Ok(TransportKind::Ssh),
            other => Err(format!("unknown transport `{other}` (sim, local, ssh)")),
        }
    }
}

/// Simulated grid matching a descriptor.
#[derive(Clone)]
pub struct SimWorld {
    pub fleet: Arc<Fleet>,
    pub fs: Arc<MemFs>,
}

impl SimWorld {
    pub fn environment(&self) -> Environment {
        Environment::new(
            Arc::new(SimTransport::new(self.fleet.clone())),
            self.fs.clone(),
        )
    }
}

/// Build a fleet with one reservable node per dynamically named node
/// composite and every static host added. Node lists that no service in
/// the descriptor produces are written up front so the deployment can
/// resolve hostnames without a reservation.
pub fn sim_world(desc: &AssemblyDescriptor, registry: &Registry, clock: SimClockConfig) -> SimWorld {
    let consumers: Vec<(&str, String, &str)> = desc
        .components
        .iter()
        .filter_map(|(id, decl)| {
            let spec = registry.get(&decl.kind)?;
            let param = spec.params.iter().find(|p| p.consumes.is_some())?;
            let iface = param.consumes.as_deref()?;
            let path = decl.args.get(&param.name)?.render();
            Some((id.as_str(), path, iface))
        })
        .collect();
    let dynamic_nodes = desc
        .composites
        .values()
        .filter(|c| c.category == Category::Node)
        .filter(|c| {
            c.children
                .iter()
                .any(|ch| consumers.iter().any(|(id, _, _)| *id == ch.as_str()))
        })
        .count();
    let mut fleet = Fleet::create(dynamic_nodes, clock);
    for decl in desc.components.values() {
        if decl.kind == "StaticHost" {
            if let Some(h) = decl.args.text("hostname") {
                fleet.add_host(&h);
            }
        }
    }
    let fs = MemFs::new();
    for (id, path, iface) in &consumers {
        let produced = desc
            .bindings
            .iter()
            .any(|b| b.client.as_str() == *id && b.interface == *iface);
        if !produced {
            let mut text = fleet.pool().join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            fs.write(path, &text).expect("in-memory write");
        }
    }
    SimWorld {
        fleet: Arc::new(fleet),
        fs: Arc::new(fs),
    }
}

/// Environment for the real transports, rooted at the user's home.
pub fn real_environment(kind: TransportKind) -> Environment {
    let fs = RealFs::from_env();
    let home = fs.home().to_string();
    match kind {
        TransportKind::Ssh => Environment::new(Arc::new(SshTransport::new(&home)), Arc::new(fs)),
        _ => Environment::new(Arc::new(LocalTransport::default()), Arc::new(fs)),
    }
}
