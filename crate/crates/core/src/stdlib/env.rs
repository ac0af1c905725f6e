//! Execution environment: the transport backend that carries rendered
//! sessions to nodes, and the orchestrator-side filesystem holding node lists.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::step::Output;
use super::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Credential {
    Password(String),
    KeyFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccess {
    pub login: String,
    pub credential: Option<Credential>,
}

/// Everything a transport needs to reach one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAccess {
    pub host: String,
    pub port: u16,
    pub user: Option<UserAccess>,
}

/// Cost accumulator for one lifecycle action. Virtual transports charge
/// time units here; `key` and the session counter seed deterministic jitter.
#[derive(Debug)]
pub struct Meter {
    key: String,
    units: AtomicU64,
    sessions: AtomicU64,
}

impl Meter {
    pub fn new(key: impl Into<String>) -> Self {
        Meter {
            key: key.into(),
            units: AtomicU64::new(0),
            sessions: AtomicU64::new(0),
        }
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn charge(&self, units: u64) {
        self.units.fetch_add(units, Ordering::Relaxed);
    }

    pub fn units(&self) -> u64 {
        self.units.load(Ordering::Relaxed)
    }

    /// Index of the session about to start (0-based).
    pub fn next_session(&self) -> u64 {
        self.sessions.fetch_add(1, Ordering::Relaxed)
    }

    pub fn sessions(&self) -> u64 {
        self.sessions.load(Ordering::Relaxed)
    }
}

pub trait Transport: Send + Sync {
    fn name(&self) -> &str;

    /// Deliver one rendered session to the node and capture its output.
    /// A non-zero exit status is reported as [`ServiceError::RemoteError`].
    fn send(&self, access: &NodeAccess, script: &str, meter: &Meter)
        -> Result<Output, ServiceError>;

    /// Durations are virtual time units charged to the meter rather than wall time.
    fn is_virtual(&self) -> bool {
        false
    }
}

/// Filesystem of the machine running the orchestrator.
pub trait HostFs: Send + Sync {
    fn home(&self) -> &str;
    fn read_to_string(&self, path: &str) -> io::Result<String>;
    fn write(&self, path: &str, contents: &str) -> io::Result<()>;

    /// Expand a leading `~`.
    fn expand(&self, path: &str) -> String {
        expand_home(self.home(), path)
    }
}

pub fn expand_home(home: &str, path: &str) -> String {
    if path == "~" {
        home.to_string()
    } else if let Some(rest) = path.strip_prefix("~/") {
        format!("{}/{}", home.trim_end_matches('/'), rest)
    } else {
        path.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct RealFs {
    home: String,
}

impl RealFs {
    pub fn new(home: impl AsRef<Path>) -> Self {
        RealFs {
            home: home.as_ref().to_string_lossy().into_owned(),
        }
    }

    /// Rooted at `$HOME`.
    pub fn from_env() -> Self {
        RealFs::new(std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| "/".into()))
    }
}

impl HostFs for RealFs {
    fn home(&self) -> &str {
        &self.home
    }

    fn read_to_string(&self, path: &str) -> io::Result<String> {
        std::fs::read_to_string(self.expand(path))
    }

    fn write(&self, path: &str, contents: &str) -> io::Result<()> {
        let path = PathBuf::from(self.expand(path));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, contents)
    }
}

/// In-memory host filesystem used with the simulated grid.
#[derive(Debug, Default)]
pub struct MemFs {
    home: String,
    files: Mutex<BTreeMap<String, String>>,
}

impl MemFs {
    pub const HOME: &'static str = "/home/sim";

    pub fn new() -> Self {
        MemFs {
            home: Self::HOME.to_string(),
            files: Mutex::default(),
        }
    }

    pub fn from_snapshot(files: BTreeMap<String, String>) -> Self {
        MemFs {
            home: Self::HOME.to_string(),
            files: Mutex::new(files),
        }
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.files.lock().clone()
    }

    pub fn exists(&self, path: &str) -> bool {
        self.files.lock().contains_key(&self.expand(path))
    }
}

impl HostFs for MemFs {
    fn home(&self) -> &str {
        &self.home
    }

    fn read_to_string(&self, path: &str) -> io::Result<String> {
        self.files
            .lock()
            .get(&self.expand(path))
            .cloned()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, path.to_string()))
    }

    fn write(&self, path: &str, contents: &str) -> io::Result<()> {
        self.files
            .lock()
            .insert(self.expand(path), contents.to_string());
        Ok(())
    }
}

/// Transport for environments with no nodes attached; every send fails.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullTransport;

impl Transport for NullTransport {
    fn name(&self) -> &str {
        "none"
    }

    fn send(&self, access: &NodeAccess, _: &str, _: &Meter) -> Result<Output, ServiceError> {
        Err(ServiceError::ConnectFailed {
            host: access.host.clone(),
            reason: "no transport configured".into(),
        })
    }
}

fn run_script(mut cmd: Command, script: &str, host: &str) -> Result<std::process::Output, ServiceError> {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| ServiceError::ConnectFailed {
            host: host.to_string(),
            reason: e.to_string(),
        })?;
    if let Some(mut stdin) = child.stdin.take() {
        stdin
            .write_all(script.as_bytes())
            .map_err(|e| ServiceError::Io(e.to_string()))?;
    }
    child
        .wait_with_output()
        .map_err(|e| ServiceError::Io(e.to_string()))
}

fn finish(out: std::process::Output) -> Result<Output, ServiceError> {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let status = out.status.code().unwrap_or(-1);
    if status == 0 {
        Ok(Output { status, stdout })
    } else {
        let mut output = stdout;
        output.push_str(&String::from_utf8_lossy(&out.stderr));
        Err(ServiceError::RemoteError { status, output })
    }
}

/// Runs every session with the local `sh`, whatever the target host.
#[derive(Debug, Clone)]
pub struct LocalTransport {
    shell: String,
}

impl Default for LocalTransport {
    fn default() -> Self {
        LocalTransport { shell: "sh".into() }
    }
}

impl Transport for LocalTransport {
    fn name(&self) -> &str {
        "local"
    }

    fn send(&self, access: &NodeAccess, script: &str, _: &Meter) -> Result<Output, ServiceError> {
        let mut cmd = Command::new(&self.shell);
        cmd.arg("-s");
        finish(run_script(cmd, script, &access.host)?)
    }
}

/// Shells out to the system OpenSSH client; the script is fed to a remote `sh -s`.
#[derive(Debug, Clone)]
pub struct SshTransport {
    program: String,
    home: String,
}

impl SshTransport {
    pub fn new(home: &str) -> Self {
        SshTransport {
            program: "ssh".into(),
            home: home.to_string(),
        }
    }

    /// Use another client binary with the same command line as `ssh`.
    pub fn with_program(mut self, program: impl Into<String>) -> Self {
        self.program = program.into();
        self
    }

    /// Arguments passed to the client for `access`.
    pub fn arguments(&self, access: &NodeAccess) -> Vec<String> {
        let mut args = vec![
            "-p".to_string(),
            access.port.to_string(),
            "-o".to_string(),
            "BatchMode=yes".to_string(),
        ];
        let mut destination = access.host.clone();
        if let Some(user) = &access.user {
            if let Some(Credential::KeyFile(key)) = &user.credential {
                // ssh wants the private half of a key pair.
                let key = key.strip_suffix(".pub").unwrap_or(key);
                args.push("-i".into());
                args.push(expand_home(&self.home, key));
            }
            destination = format!("{}@{}", user.login, access.host);
        }
        args.push(destination);
        args.extend(["sh".to_string(), "-s".to_string()]);
        args
    }
}

/// OpenSSH exits with 255 for its own failures; the message tells
/// authentication problems apart from connection problems.
pub fn classify_ssh_failure(host: &str, stderr: &str) -> ServiceError {
    let lower = stderr.to_ascii_lowercase();
    if lower.contains("permission denied")
        || lower.contains("authentication failed")
        || lower.contains("too many authentication failures")
    {
        ServiceError::AuthFailed {
            host: host.to_string(),
            reason: stderr.trim().to_string(),
        }
    } else {
        ServiceError::ConnectFailed {
            host: host.to_string(),
            reason: stderr.trim().to_string(),
        }
    }
}

impl Transport for SshTransport {
    fn name(&self) -> &str {
        "ssh"
    }

    fn send(&self, access: &NodeAccess, script: &str, _: &Meter) -> Result<Output, ServiceError> {
        let password = access.user.as_ref().and_then(|u| match &u.credential {
            Some(Credential::Password(p)) => Some(p.clone()),
            _ => None,
        });
        let mut cmd = match password {
            Some(p) => {
                let mut cmd = Command::new("sshpass");
                cmd.arg("-e").arg(&self.program).env("SSHPASS", p);
                cmd
            }
            None => Command::new(&self.program),
        };
        cmd.args(self.arguments(access));
        let out = run_script(cmd, script, &access.host)?;
        if out.status.code() == Some(255) {
            return Err(classify_ssh_failure(
                &access.host,
                &String::from_utf8_lossy(&out.stderr),
            ));
        }
        finish(out)
    }
}

/// Transport plus host filesystem shared by every action of a run.
#[derive(Clone)]
pub struct Environment {
    transport: Arc<dyn Transport>,
    host_fs: Arc<dyn HostFs>,
}

impl Environment {
    pub fn new(transport: Arc<dyn Transport>, host_fs: Arc<dyn HostFs>) -> Self {
        Environment { transport, host_fs }
    }

    /// No nodes reachable, in-memory host filesystem.
    pub fn detached() -> Self {
        Environment::new(Arc::new(NullTransport), Arc::new(MemFs::new()))
    }

    pub fn transport(&self) -> &dyn Transport {
        self.transport.as_ref()
    }

    pub fn host_fs(&self) -> &dyn HostFs {
        self.host_fs.as_ref()
    }

    pub fn is_virtual(&self) -> bool {
        self.transport.is_virtual()
    }
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("transport", &self.transport.name())
            .field("home", &self.host_fs.home())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn home_expansion() {
        assert_eq!(expand_home("/home/u", "~/nodelist"), "/home/u/nodelist");
        assert_eq!(expand_home("/home/u/", "~/a/b"), "/home/u/a/b");
        assert_eq!(expand_home("/home/u", "/etc/x"), "/etc/x");
    }

    #[test]
    fn ssh_arguments() {
        let t = SshTransport::new("/home/u");
        let access = NodeAccess {
            host: "node-1".into(),
            port: 22,
            user: Some(UserAccess {
                login: "aflissi".into(),
                credential: Some(Credential::KeyFile("~/.ssh/id_rsa.pub".into())),
            }),
        };
        assert_eq!(
            t.arguments(&access),
            [
                "-p", "22", "-o", "BatchMode=yes", "-i", "/home/u/.ssh/id_rsa",
                "aflissi@node-1", "sh", "-s"
            ]
        );
    }

    #[test]
    fn ssh_failure_classes() {
        assert!(matches!(
            classify_ssh_failure("h", "aflissi@h: Permission denied (publickey)."),
            ServiceError::AuthFailed { .. }
        ));
        assert!(matches!(
            classify_ssh_failure("h", "ssh: connect to host h port 22: Connection refused"),
            ServiceError::ConnectFailed { .. }
        ));
    }

    #[test]
    fn local_transport_runs_sh() {
        let t = LocalTransport::default();
        let access = NodeAccess {
            host: "localhost".into(),
            port: 22,
            user: None,
        };
        let m = Meter::new("t");
        let out = t.send(&access, "echo hello\n", &m).unwrap();
        assert_eq!(out.stdout, "hello\n");
        let err = t.send(&access, "exit 4\n", &m).unwrap_err();
        assert!(matches!(err, ServiceError::RemoteError { status: 4, .. }));
    }

    #[test]
    fn mem_fs_expands_home() {
        let fs = MemFs::new();
        fs.write("~/nodelist", "a\n").unwrap();
        assert_eq!(fs.read_to_string("/home/sim/nodelist").unwrap(), "a\n");
        assert!(fs.read_to_string("~/other").is_err());
    }
}
