//! Reusable deployment components: hostname, port, user, protocol, shell,
//! variable and file transfer, plus the step abstraction and transports
//! they share.

mod env;
mod kinds;
pub mod sh;
mod step;

use crate::component::{Ctx, LifecycleState};

pub use env::{
    classify_ssh_failure, expand_home, Credential, Environment, HostFs, LocalTransport, MemFs,
    Meter, NodeAccess, NullTransport, RealFs, SshTransport, Transport, UserAccess,
};
pub use kinds::{
    kinds, DynamicHost, FileTransfer, PortValue, ShShell, SshProtocol, StaticHost, User, Variable,
    DEFAULT_SSH_PORT,
};
pub use step::{Output, Step};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("node list `{path}` does not exist (has the reservation run?)")]
    NodeListMissing { path: String },
    #[error("node list `{path}` has {available} entries, node index {index} requested")]
    IndexOutOfRange {
        path: String,
        index: usize,
        available: usize,
    },
    #[error("connection to `{host}` failed: {reason}")]
    ConnectFailed { host: String, reason: String },
    #[error("authentication on `{host}` failed: {reason}")]
    AuthFailed { host: String, reason: String },
    #[error("remote command exited with status {status}: {output}")]
    RemoteError { status: i32, output: String },
    #[error("fetching `{url}` to `{dest}` failed: {reason}")]
    FetchFailed {
        url: String,
        dest: String,
        reason: String,
    },
    #[error("`{0}` is declared but not implemented")]
    NotImplemented(String),
    #[error("`{component}` is {state}; its business interface needs it started")]
    NotStarted {
        component: String,
        state: LifecycleState,
    },
    #[error("`{component}` has no collaborator providing `{interface}`")]
    MissingCollaborator { component: String, interface: String },
    #[error("reservation failed: {0}")]
    ReservationFailed(String),
    #[error("reservation granted {granted} nodes, {requested} requested")]
    InsufficientNodes { requested: u64, granted: u64 },
    #[error("cannot render steps: {0}")]
    Render(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("injected failure: {0}")]
    Injected(String),
}

impl From<sh::ShError> for ServiceError {
    fn from(e: sh::ShError) -> Self {
        ServiceError::Render(e.to_string())
    }
}

/// `Hostname` interface: return or compute the host of a node.
pub trait HostnameService: Send + Sync {
    fn hostname(&self, ordinal: Option<usize>, fs: &dyn HostFs) -> Result<String, ServiceError>;
}

/// `Port` interface.
pub trait PortService: Send + Sync {
    fn port(&self) -> u16;
}

/// `User` interface: login plus credential.
pub trait UserService: Send + Sync {
    fn access(&self) -> UserAccess;
}

/// `Protocol` interface: send a rendered session to the remote host.
pub trait ProtocolService: Send + Sync {
    fn access(&self, me: &Ctx<'_>) -> Result<NodeAccess, ServiceError>;
    fn send(&self, me: &Ctx<'_>, payload: &str) -> Result<Output, ServiceError>;
}

/// `Shell` interface: execute steps as one session in the shell's dialect.
pub trait ShellService: Send + Sync {
    fn render(&self, steps: &[Step]) -> Result<String, ServiceError>;
    fn execute(&self, me: &Ctx<'_>, steps: &[Step]) -> Result<Output, ServiceError>;
}

/// `Transfer` interface: bring a file onto the node.
pub trait TransferService: Send + Sync {
    fn fetch(&self, me: &Ctx<'_>, url: &str, dest: &str) -> Result<Vec<Step>, ServiceError>;
}
