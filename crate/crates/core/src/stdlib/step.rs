use serde::{Deserialize, Serialize};

/// Transport-independent unit of deployment work, rendered to a shell
/// dialect by a Shell component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    SetVar { name: String, value: String },
    UnsetVar { name: String },
    AppendPath { value: String },
    RemovePath { value: String },
    Fetch { url: String, dest: String },
    Exec { command: String },
    StartProcess { name: String, command: String },
    StopProcess { name: String },
    Remove { path: String },
}

impl Step {
    pub fn set_var(name: &str, value: &str) -> Self {
        Step::SetVar {
            name: name.into(),
            value: value.into(),
        }
    }

    pub fn unset_var(name: &str) -> Self {
        Step::UnsetVar { name: name.into() }
    }

    pub fn append_path(value: &str) -> Self {
        Step::AppendPath {
            value: value.into(),
        }
    }

    pub fn remove_path(value: &str) -> Self {
        Step::RemovePath {
            value: value.into(),
        }
    }

    pub fn fetch(url: &str, dest: &str) -> Self {
        Step::Fetch {
            url: url.into(),
            dest: dest.into(),
        }
    }

    pub fn exec(command: &str) -> Self {
        Step::Exec {
            command: command.into(),
        }
    }

    pub fn start_process(name: &str, command: &str) -> Self {
        Step::StartProcess {
            name: name.into(),
            command: command.into(),
        }
    }

    pub fn stop_process(name: &str) -> Self {
        Step::StopProcess { name: name.into() }
    }

    pub fn remove(path: &str) -> Self {
        Step::Remove { path: path.into() }
    }

    pub fn is_fetch(&self) -> bool {
        matches!(self, Step::Fetch { .. })
    }

    /// Apply `f` to every text field, e.g. for parameter substitution.
    pub fn map_text(&self, mut f: impl FnMut(&str) -> String) -> Step {
        match self {
            Step::SetVar { name, value } => Step::SetVar {
                name: f(name),
                value: f(value),
            },
            Step::UnsetVar { name } => Step::UnsetVar { name: f(name) },
            Step::AppendPath { value } => Step::AppendPath { value: f(value) },
            Step::RemovePath { value } => Step::RemovePath { value: f(value) },
            Step::Fetch { url, dest } => Step::Fetch {
                url: f(url),
                dest: f(dest),
            },
            Step::Exec { command } => Step::Exec {
                command: f(command),
            },
            Step::StartProcess { name, command } => Step::StartProcess {
                name: f(name),
                command: f(command),
            },
            Step::StopProcess { name } => Step::StopProcess { name: f(name) },
            Step::Remove { path } => Step::Remove { path: f(path) },
        }
    }
}

/// Exit status and captured standard output of a session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub status: i32,
    pub stdout: String,
}

impl Output {
    pub fn success(stdout: impl Into<String>) -> Self {
        Output {
            status: 0,
            stdout: stdout.into(),
        }
    }
}
