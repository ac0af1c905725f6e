use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gridforge::assembly::AssemblyDescriptor;
use gridforge::component::{ComponentId, LifecycleState};
use gridforge::simgrid::FleetSnapshot;

pub const STATE_DIR_ENV: &str = "GRIDFORGE_STATE_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    pub fleet: FleetSnapshot,
    pub host_files: BTreeMap<String, String>,
}

/// What survives between invocations for one deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub name: String,
    pub descriptor_hash: String,
    pub transport: String,
    pub states: BTreeMap<ComponentId, LifecycleState>,
    pub journal: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimState>,
}

pub fn state_dir() -> PathBuf {
    std::env::var_os(STATE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".gridforge"))
}

pub fn descriptor_hash(desc: &AssemblyDescriptor) -> String {
    let json = serde_json::to_vec(desc).expect("descriptor serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn file_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn state_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{}.state.json", file_name(name)))
}

pub fn load(dir: &Path, name: &str) -> Result<Option<StateFile>> {
    let path = state_path(dir, name);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?,
        )),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub fn save(dir: &Path, state: &StateFile) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = state_path(dir, &state.name);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(state)?)
        .with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn all(dir: &Path) -> Result<Vec<StateFile>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("listing {}", dir.display())),
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.to_string_lossy().ends_with(".state.json") {
            let text = fs::read_to_string(&path)?;
            out.push(
                serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?,
            );
        }
    }
    out.sort_by(|a: &StateFile, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Exclusive lock on one deployment's state, released on drop.
pub struct Lock {
    path: PathBuf,
    _file: File,
}

impl Lock {
    pub fn acquire(dir: &Path, name: &str) -> Result<Lock> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.lock", file_name(name)));
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(Lock { path, _file: file }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another invocation (remove {} if it is stale)",
                name,
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
