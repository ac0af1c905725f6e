use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::Mutex;

use super::env::{Credential, HostFs, NodeAccess, UserAccess};
use super::step::{Output, Step};
use super::{
    sh, HostnameService, PortService, ProtocolService, ServiceError, ShellService,
    TransferService, UserService,
};
use crate::component::{Behavior, Ctx, LifecycleAction, PortSpec};
use crate::personality::{Args, Category, KindSpec, ParamSpec, ParamType, ParamValue};

pub const DEFAULT_SSH_PORT: u16 = 22;

fn text(args: &Args, name: &str) -> String {
    args.text(name).unwrap_or_default()
}

pub struct StaticHost {
    host: String,
}

impl StaticHost {
    pub fn new(host: &str) -> Self {
        StaticHost { host: host.into() }
    }
}

impl Behavior for StaticHost {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_hostname(&self) -> Option<&(dyn HostnameService + 'static)> {
        Some(self)
    }
}

impl HostnameService for StaticHost {
    fn hostname(&self, _: Option<usize>, _: &dyn HostFs) -> Result<String, ServiceError> {
        Ok(self.host.clone())
    }
}

/// Hostnames read from a node list file, one per line, indexed by node
/// ordinal. Each index is read once and remembered until the next start
/// or uninstall.
pub struct DynamicHost {
    nodelist: String,
    memo: Mutex<BTreeMap<usize, String>>,
}

impl DynamicHost {
    pub fn new(nodelist: &str) -> Self {
        DynamicHost {
            nodelist: nodelist.into(),
            memo: Mutex::default(),
        }
    }

    pub fn nodelist(&self) -> &str {
        &self.nodelist
    }
}

impl Behavior for DynamicHost {
    fn perform(&self, action: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        if matches!(action, LifecycleAction::Start | LifecycleAction::Uninstall) {
            self.memo.lock().clear();
        }
        Ok(())
    }

    fn as_hostname(&self) -> Option<&(dyn HostnameService + 'static)> {
        Some(self)
    }
}

impl HostnameService for DynamicHost {
    fn hostname(&self, ordinal: Option<usize>, fs: &dyn HostFs) -> Result<String, ServiceError> {
        let index = ordinal.unwrap_or(0);
        let mut memo = self.memo.lock();
        if let Some(h) = memo.get(&index) {
            return Ok(h.clone());
        }
        let contents =
            fs.read_to_string(&self.nodelist)
                .map_err(|_| ServiceError::NodeListMissing {
                    path: self.nodelist.clone(),
                })?;
        let hosts: Vec<&str> = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let host = hosts
            .get(index)
            .ok_or_else(|| ServiceError::IndexOutOfRange {
                path: self.nodelist.clone(),
                index,
                available: hosts.len(),
            })?
            .to_string();
        memo.insert(index, host.clone());
        Ok(host)
    }
}

pub struct PortValue(pub u16);

impl Behavior for PortValue {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_port(&self) -> Option<&(dyn PortService + 'static)> {
        Some(self)
    }
}

impl PortService for PortValue {
    fn port(&self) -> u16 {
        self.0
    }
}

pub struct User {
    access: UserAccess,
}

impl User {
    /// A credential starting with `~`, `/` or `.` is a key file, any other
    /// non-empty credential a password.
    pub fn new(login: &str, credential: &str) -> Self {
        let credential = if credential.is_empty() {
            None
        } else if credential.starts_with(['~', '/', '.']) {
            Some(Credential::KeyFile(credential.into()))
        } else {
            Some(Credential::Password(credential.into()))
        };
        User {
            access: UserAccess {
                login: login.into(),
                credential,
            },
        }
    }
}

impl Behavior for User {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_user(&self) -> Option<&(dyn UserService + 'static)> {
        Some(self)
    }
}

impl UserService for User {
    fn access(&self) -> UserAccess {
        self.access.clone()
    }
}

/// Reaches the node through the environment's transport, addressed by the
/// bound hostname, port (22 when unbound) and user.
#[derive(Default)]
pub struct SshProtocol;

impl Behavior for SshProtocol {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_protocol(&self) -> Option<&(dyn ProtocolService + 'static)> {
        Some(self)
    }
}

impl ProtocolService for SshProtocol {
    fn access(&self, me: &Ctx<'_>) -> Result<NodeAccess, ServiceError> {
        let hostname = me.hostname()?;
        let host = hostname
            .svc
            .hostname(me.node_ordinal(), me.env().host_fs())?;
        let port = me.port()?.map_or(DEFAULT_SSH_PORT, |p| p.svc.port());
        let user = me.user()?.map(|u| u.svc.access());
        Ok(NodeAccess { host, port, user })
    }

    fn send(&self, me: &Ctx<'_>, payload: &str) -> Result<Output, ServiceError> {
        let access = self.access(me)?;
        me.env().transport().send(&access, payload, me.meter())
    }
}

/// Declared for completeness; every action fails.
pub struct Unimplemented(&'static str);

impl Behavior for Unimplemented {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Err(ServiceError::NotImplemented(self.0.into()))
    }
}

/// POSIX sh dialect; each `execute` is one session over the bound protocol.
#[derive(Default)]
pub struct ShShell;

impl Behavior for ShShell {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_shell(&self) -> Option<&(dyn ShellService + 'static)> {
        Some(self)
    }
}

impl ShellService for ShShell {
    fn render(&self, steps: &[Step]) -> Result<String, ServiceError> {
        Ok(sh::render(steps)?)
    }

    fn execute(&self, me: &Ctx<'_>, steps: &[Step]) -> Result<Output, ServiceError> {
        if steps.is_empty() {
            return Ok(Output::default());
        }
        let script = self.render(steps)?;
        let protocol = me.protocol()?;
        protocol.svc.send(&protocol.ctx, &script)
    }
}

/// Fetches with a `Fetch` step run through the bound shell; destinations
/// already present are left alone.
#[derive(Default)]
pub struct FileTransfer;

impl Behavior for FileTransfer {
    fn perform(&self, _: LifecycleAction, _: &Ctx<'_>) -> Result<(), ServiceError> {
        Ok(())
    }

    fn as_transfer(&self) -> Option<&(dyn TransferService + 'static)> {
        Some(self)
    }
}

impl TransferService for FileTransfer {
    fn fetch(&self, me: &Ctx<'_>, url: &str, dest: &str) -> Result<Vec<Step>, ServiceError> {
        let steps = vec![Step::fetch(url, dest)];
        let shell = me.shell()?;
        match shell.svc.execute(&shell.ctx, &steps) {
            Ok(_) => Ok(steps),
            Err(e @ (ServiceError::RemoteError { .. } | ServiceError::Render(_))) => {
                Err(ServiceError::FetchFailed {
                    url: url.into(),
                    dest: dest.into(),
                    reason: e.to_string(),
                })
            }
            Err(e) => Err(e),
        }
    }
}

/// Environment variable set on the node while started.
pub struct Variable {
    name: String,
    value: String,
}

impl Variable {
    pub fn new(name: &str, value: &str) -> Result<Self, ServiceError> {
        if !sh::is_var_name(name) {
            return Err(ServiceError::BadArgument(format!(
                "`{name}` is not a variable name"
            )));
        }
        Ok(Variable {
            name: name.into(),
            value: value.into(),
        })
    }
}

impl Behavior for Variable {
    fn perform(&self, action: LifecycleAction, ctx: &Ctx<'_>) -> Result<(), ServiceError> {
        let steps = match action {
            LifecycleAction::Start => vec![Step::set_var(&self.name, &self.value)],
            LifecycleAction::Stop => vec![Step::unset_var(&self.name)],
            _ => return Ok(()),
        };
        let shell = ctx.shell()?;
        shell.svc.execute(&shell.ctx, &steps).map(drop)
    }
}

fn unimplemented_kind(name: &'static str, provides: &str) -> KindSpec {
    KindSpec::new(
        name,
        Category::Infra,
        Arc::new(move |_| Ok(Box::new(Unimplemented(name)))),
    )
    .describe("Declared but not implemented.")
    .provide(provides)
}

/// Specifications of the standard library kinds.
pub fn kinds() -> Vec<KindSpec> {
    let transfer = |name: &str| {
        KindSpec::new(name, Category::Infra, Arc::new(|_| Ok(Box::new(FileTransfer))))
            .describe("Fetch files onto the node through its shell.")
            .provide("Transfer")
            .require(PortSpec::required("shell", "Shell"))
    };
    vec![
        KindSpec::new(
            "StaticHost",
            Category::Infra,
            Arc::new(|a| Ok(Box::new(StaticHost::new(&text(a, "hostname"))))),
        )
        .describe("Fixed hostname.")
        .param(ParamSpec::new("hostname", ParamType::String))
        .provide("Hostname"),
        KindSpec::new(
            "DynamicHost",
            Category::Infra,
            Arc::new(|a| Ok(Box::new(DynamicHost::new(&text(a, "nodelist"))))),
        )
        .describe("Hostname taken from a node list file by node ordinal.")
        .param(ParamSpec::new("nodelist", ParamType::Path).consuming("NodeList"))
        .provide("Hostname")
        .require(PortSpec::optional("source", "NodeList")),
        KindSpec::new(
            "Port",
            Category::Infra,
            Arc::new(|a| {
                let v = a.int("port").unwrap_or_default();
                let port = u16::try_from(v)
                    .ok()
                    .filter(|p| *p != 0)
                    .ok_or_else(|| ServiceError::BadArgument(format!("port {v} out of range")))?;
                Ok(Box::new(PortValue(port)))
            }),
        )
        .describe("Internet port.")
        .param(ParamSpec::new("port", ParamType::Int))
        .provide("Port"),
        KindSpec::new(
            "User",
            Category::Infra,
            Arc::new(|a| Ok(Box::new(User::new(&text(a, "login"), &text(a, "credential"))))),
        )
        .describe("Login with an optional password or key file.")
        .param(ParamSpec::new("login", ParamType::String))
        .param(
            ParamSpec::new("credential", ParamType::String)
                .with_default(ParamValue::Str(String::new())),
        )
        .provide("User"),
        KindSpec::new("SSH", Category::Infra, Arc::new(|_| Ok(Box::new(SshProtocol))))
            .describe("Secure shell protocol; port 22 unless bound.")
            .provide("Protocol")
            .require(PortSpec::required("hostname", "Hostname"))
            .require(PortSpec::optional("port", "Port"))
            .require(PortSpec::optional("user", "User")),
        unimplemented_kind("Telnet", "Protocol"),
        KindSpec::new("SH", Category::Infra, Arc::new(|_| Ok(Box::new(ShShell))))
            .describe("POSIX sh dialect.")
            .provide("Shell")
            .require(PortSpec::required("protocol", "Protocol")),
        unimplemented_kind("CSH", "Shell"),
        unimplemented_kind("WindowsCmd", "Shell"),
        transfer("HttpTransfer"),
        transfer("FileTransfer"),
        unimplemented_kind("Scp", "Transfer"),
        unimplemented_kind("Rsync", "Transfer"),
        KindSpec::new(
            "Variable",
            Category::Infra,
            Arc::new(|a| Ok(Box::new(Variable::new(&text(a, "name"), &text(a, "value"))?))),
        )
        .describe("Environment variable set while started.")
        .param(ParamSpec::new("name", ParamType::String))
        .param(ParamSpec::new("value", ParamType::String))
        .provide("Variable")
        .require(PortSpec::required("shell", "Shell")),
    ]
}
