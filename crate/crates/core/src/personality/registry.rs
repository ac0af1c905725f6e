use std::fmt;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::data::{self, PersonalityError};
use super::params::{bind_args, ArgError, Args, ParamSpec, ParamValue};
use crate::component::{Behavior, Inert, PortSpec};
use crate::stdlib::{self, ServiceError};

/// Where a kind may appear in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// Top-level deployment block.
    Root,
    /// Node composite template such as `Grid5000_NODE`.
    Node,
    /// Service grouping tag such as `ParallelRunner`.
    Group,
    /// Fundamental deployment component (hostname, protocol, shell, ...).
    Infra,
    /// Software installed on a node (JRE, middleware).
    Software,
    /// Service started on a node.
    Service,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Root => "root",
            Category::Node => "node",
            Category::Group => "group",
            Category::Infra => "infra",
            Category::Software => "software",
            Category::Service => "service",
        })
    }
}

pub type Factory = Arc<dyn Fn(&Args) -> Result<Box<dyn Behavior>, ServiceError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDefault {
    pub kind: String,
    #[serde(default)]
    pub args: Vec<ParamValue>,
}

/// `client.port -> server`, slots named within one node; client `*` means
/// every slot that has the port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBinding {
    pub client: String,
    pub port: String,
    pub server: String,
}

impl TemplateBinding {
    pub fn parse(text: &str) -> Option<Self> {
        let (left, server) = text.split_once("->")?;
        let (client, port) = left.trim().split_once('.')?;
        let (client, port, server) = (client.trim(), port.trim(), server.trim());
        if client.is_empty() || port.is_empty() || server.is_empty() {
            return None;
        }
        Some(TemplateBinding {
            client: client.into(),
            port: port.into(),
            server: server.into(),
        })
    }

    pub fn matches(&self, slot: &str) -> bool {
        self.client == "*" || self.client == slot
    }
}

impl fmt::Display for TemplateBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} -> {}", self.client, self.port, self.server)
    }
}

/// Infrastructure stack of a node kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTemplate {
    /// Slots filled when the configuration leaves them out.
    pub defaults: IndexMap<String, SlotDefault>,
    pub bindings: Vec<TemplateBinding>,
    /// Interface exported by the node composite to the slot serving it.
    pub exports: IndexMap<String, String>,
}

#[derive(Clone)]
pub struct KindSpec {
    pub name: String,
    pub category: Category,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub provides: Vec<String>,
    pub requires: Vec<PortSpec>,
    pub template: Option<NodeTemplate>,
    pub factory: Factory,
}

impl fmt::Debug for KindSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KindSpec")
            .field("name", &self.name)
            .field("category", &self.category)
            .field("params", &self.params)
            .field("provides", &self.provides)
            .field("requires", &self.requires)
            .finish_non_exhaustive()
    }
}

impl KindSpec {
    pub fn new(name: &str, category: Category, factory: Factory) -> Self {
        KindSpec {
            name: name.to_string(),
            category,
            description: String::new(),
            params: Vec::new(),
            provides: Vec::new(),
            requires: Vec::new(),
            template: None,
            factory,
        }
    }

    /// A kind whose behavior does nothing.
    pub fn inert(name: &str, category: Category) -> Self {
        KindSpec::new(name, category, Arc::new(|_| Ok(Box::new(Inert))))
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn param(mut self, p: ParamSpec) -> Self {
        self.params.push(p);
        self
    }

    pub fn provide(mut self, interface: &str) -> Self {
        self.provides.push(interface.to_string());
        self
    }

    pub fn require(mut self, port: PortSpec) -> Self {
        self.requires.push(port);
        self
    }

    pub fn bind_args(&self, values: Vec<ParamValue>) -> Result<Args, ArgError> {
        bind_args(&self.params, values)
    }

    pub fn instantiate(&self, args: &Args) -> Result<Box<dyn Behavior>, ServiceError> {
        (self.factory)(args)
    }
}

/// Kind name to specification. Immutable once built; lookups are concurrent-safe.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    kinds: IndexMap<String, KindSpec>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Standard library, root and group kinds, and the bundled personalities.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        for k in stdlib::kinds() {
            r.register(k);
        }
        r.register(
            KindSpec::inert("Deployment", Category::Root).describe("Generic deployment root."),
        );
        r.register(
            KindSpec::inert("OpenCCM.Deployment", Category::Root)
                .describe("Deployment root for OpenCCM configurations."),
        );
        r.register(
            KindSpec::inert("ParallelRunner", Category::Group)
                .describe("Members are deployed as one parallel stage."),
        );
        for (name, text) in data::BUNDLED {
            let spec = data::load_str(text, name).expect("bundled personality is valid");
            r.register(spec);
        }
        r
    }

    /// Add or replace a kind.
    pub fn register(&mut self, spec: KindSpec) {
        self.kinds.insert(spec.name.clone(), spec);
    }

    pub fn get(&self, name: &str) -> Option<&KindSpec> {
        self.kinds.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.kinds.contains_key(name)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &KindSpec> {
        self.kinds.values()
    }

    pub fn load_str(&mut self, text: &str, origin: &str) -> Result<&KindSpec, PersonalityError> {
        let spec = data::load_str(text, origin)?;
        let name = spec.name.clone();
        self.register(spec);
        Ok(&self.kinds[&name])
    }

    pub fn load_file(&mut self, path: &Path) -> Result<&KindSpec, PersonalityError> {
        let text = std::fs::read_to_string(path).map_err(|e| PersonalityError::Io {
            origin: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.load_str(&text, &path.display().to_string())
    }

    /// Load every `*.toml` file of a directory in file-name order.
    pub fn load_dir(&mut self, dir: &Path) -> Result<Vec<String>, PersonalityError> {
        let io = |e: std::io::Error| PersonalityError::Io {
            origin: dir.display().to_string(),
            reason: e.to_string(),
        };
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "toml") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut loaded = Vec::new();
        for p in paths {
            loaded.push(self.load_file(&p)?.name.clone());
        }
        Ok(loaded)
    }
}
