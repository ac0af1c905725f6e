use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::personality::ResourceRequest;
use crate::stdlib::{sh, Output, Step};

/// What a step can observe and change on a node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub env: BTreeMap<String, String>,
    pub files: BTreeSet<String>,
    pub processes: BTreeSet<String>,
}

impl NodeState {
    fn has_path(&self, path: &str) -> bool {
        let prefix = format!("{}/", path.trim_end_matches('/'));
        self.files.contains(path) || self.files.iter().any(|f| f.starts_with(&prefix))
    }

    fn remove_tree(&mut self, path: &str) {
        let prefix = format!("{}/", path.trim_end_matches('/'));
        self.files.retain(|f| f != path && !f.starts_with(&prefix));
    }
}

/// Grid-level facts a node command may need (the reservation frontend
/// hands out fleet hosts).
pub trait World {
    /// Up to `n` hosts available for reservation.
    fn reserve(&self, n: u64) -> Vec<String>;
}

/// A world with nothing to reserve.
pub struct Isolated;

impl World for Isolated {
    fn reserve(&self, _: u64) -> Vec<String> {
        Vec::new()
    }
}

/// Result of one step: exit status and standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

impl StepResult {
    fn ok() -> Self {
        StepResult::status(0)
    }

    fn status(status: i32) -> Self {
        StepResult {
            status,
            stdout: String::new(),
            stderr: String::new(),
        }
    }

    fn fail(status: i32, stderr: impl Into<String>) -> Self {
        StepResult {
            status,
            stdout: String::new(),
            stderr: stderr.into(),
        }
    }
}

/// In-memory node: environment, file set, process set, and the log of
/// every step applied. A failing step leaves the state untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimNode {
    id: String,
    state: NodeState,
    log: Vec<Step>,
}

/// Substitute `$NAME` and `${NAME}` outside single quotes.
fn expand_vars(command: &str, env: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(command.len());
    let mut chars = command.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '\'' => {
                quoted = !quoted;
                out.push(c);
            }
            '\\' if !quoted => {
                out.push(c);
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            }
            '$' if !quoted => {
                let braced = chars.peek() == Some(&'{');
                if braced {
                    chars.next();
                }
                let mut name = String::new();
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        name.push(n);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if braced {
                    if chars.peek() == Some(&'}') {
                        chars.next();
                    } else {
                        out.push_str("${");
                        out.push_str(&name);
                        continue;
                    }
                }
                if name.is_empty() {
                    out.push('$');
                } else if let Some(v) = env.get(&name) {
                    out.push_str(v);
                }
            }
            c => out.push(c),
        }
    }
    out
}

impl SimNode {
    pub fn new(id: impl Into<String>) -> Self {
        SimNode {
            id: id.into(),
            state: NodeState::default(),
            log: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    pub fn env(&self) -> &BTreeMap<String, String> {
        &self.state.env
    }

    pub fn files(&self) -> &BTreeSet<String> {
        &self.state.files
    }

    pub fn processes(&self) -> &BTreeSet<String> {
        &self.state.processes
    }

    pub fn log(&self) -> &[Step] {
        &self.log
    }

    /// Rebuild a node by applying `log` to an empty state.
    pub fn replay(id: &str, log: &[Step], world: &dyn World) -> SimNode {
        let mut node = SimNode::new(id);
        for step in log {
            node.apply(step, world);
        }
        node
    }

    /// Apply one step and record it in the log.
    pub fn apply(&mut self, step: &Step, world: &dyn World) -> StepResult {
        self.log.push(step.clone());
        let st = &mut self.state;
        match step {
            Step::SetVar { name, value } => {
                st.env.insert(name.clone(), value.clone());
                StepResult::ok()
            }
            Step::UnsetVar { name } => {
                st.env.remove(name);
                StepResult::ok()
            }
            Step::AppendPath { value } => {
                let path = match st.env.get("PATH") {
                    Some(p) if !p.is_empty() => format!("{p}:{value}"),
                    _ => value.clone(),
                };
                st.env.insert("PATH".into(), path);
                StepResult::ok()
            }
            Step::RemovePath { value } => {
                if let Some(p) = st.env.get("PATH") {
                    let kept: Vec<&str> = p.split(':').filter(|e| e != value).collect();
                    if kept.is_empty() {
                        st.env.remove("PATH");
                    } else {
                        st.env.insert("PATH".into(), kept.join(":"));
                    }
                }
                StepResult::ok()
            }
            Step::Fetch { dest, .. } => {
                st.files.insert(dest.clone());
                StepResult::ok()
            }
            Step::Exec { command } => self.exec(command, world),
            Step::StartProcess { name, .. } => {
                self.state.processes.insert(name.clone());
                StepResult::ok()
            }
            Step::StopProcess { name } => {
                if self.state.processes.remove(name) {
                    StepResult::ok()
                } else {
                    StepResult::fail(1, format!("kill: no process `{name}`"))
                }
            }
            Step::Remove { path } => {
                self.state.remove_tree(path);
                StepResult::ok()
            }
        }
    }

    fn exec(&mut self, command: &str, world: &dyn World) -> StepResult {
        let expanded = expand_vars(command, &self.state.env);
        let Some(words) = sh::split_words(&expanded) else {
            return StepResult::fail(2, "syntax error: unterminated quote");
        };
        let args: Vec<&str> = words.iter().map(String::as_str).collect();
        let st = &mut self.state;
        match args.as_slice() {
            [] | ["true" | ":", ..] => StepResult::ok(),
            ["false", ..] => StepResult::status(1),
            ["exit"] => StepResult::ok(),
            ["exit", n] => StepResult::status(n.parse().unwrap_or(2)),
            ["echo", rest @ ..] => StepResult {
                status: 0,
                stdout: format!("{}\n", rest.join(" ")),
                stderr: String::new(),
            },
            ["sleep", ..] => StepResult::ok(),
            ["mkdir", "-p", paths @ ..] | ["touch", paths @ ..] => {
                st.files.extend(paths.iter().map(|p| p.to_string()));
                StepResult::ok()
            }
            ["mkdir", paths @ ..] => {
                if let Some(p) = paths.iter().find(|p| st.has_path(p)) {
                    return StepResult::fail(1, format!("mkdir: `{p}` exists"));
                }
                st.files.extend(paths.iter().map(|p| p.to_string()));
                StepResult::ok()
            }
            ["test", "-e", p] | ["[", "-e", p, "]"] => {
                StepResult::status(if st.has_path(p) { 0 } else { 1 })
            }
            ["tar", "-xzf", archive, "-C", dir] => {
                if !st.files.contains(*archive) {
                    return StepResult::fail(2, format!("tar: {archive}: cannot open"));
                }
                if !st.has_path(dir) {
                    return StepResult::fail(2, format!("tar: {dir}: no such directory"));
                }
                StepResult::ok()
            }
            ["rm", "-rf" | "-f" | "-r", paths @ ..] => {
                for p in paths.iter().filter(|p| **p != "--") {
                    st.remove_tree(p);
                }
                StepResult::ok()
            }
            ["oargridsub", request] => match ResourceRequest::parse_oargrid(request)
                .and_then(|r| r.total().ok())
            {
                Some(n) => {
                    let mut stdout = String::new();
                    for host in world.reserve(n) {
                        stdout.push_str(&host);
                        stdout.push('\n');
                    }
                    StepResult {
                        status: 0,
                        stdout,
                        stderr: String::new(),
                    }
                }
                None => StepResult::fail(1, format!("oargridsub: bad request `{request}`")),
            },
            ["oargriddel", ..] => StepResult::ok(),
            [cmd, ..] => StepResult::fail(127, format!("{cmd}: command not found")),
        }
    }

    /// Apply a session, stopping at the first failing step.
    pub fn run_session(&mut self, steps: &[Step], world: &dyn World) -> Output {
        let mut stdout = String::new();
        for step in steps {
            let r = self.apply(step, world);
            stdout.push_str(&r.stdout);
            if r.status != 0 {
                stdout.push_str(&r.stderr);
                return Output {
                    status: r.status,
                    stdout,
                };
            }
        }
        Output { status: 0, stdout }
    }
}
