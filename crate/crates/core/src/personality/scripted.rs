//! Behavior of data-file personalities: per-action step scripts run through
//! the node's shell, fetches routed through the transfer component.

use std::sync::Arc;

use indexmap::IndexMap;
use serde::Deserialize;

use super::params::{Args, ParamSpec, ParamType, ParamValue, ResourceRequest};
use crate::component::{Behavior, Ctx, LifecycleAction};
use crate::stdlib::{sh, Output, ServiceError, Step};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scripts {
    /// Install is skipped when this path exists on the node.
    #[serde(default)]
    pub unless_exists: Option<String>,
    #[serde(default)]
    pub install: Vec<Step>,
    #[serde(default)]
    pub start: Vec<Step>,
    #[serde(default)]
    pub stop: Vec<Step>,
    #[serde(default)]
    pub uninstall: Vec<Step>,
}

impl Scripts {
    pub fn for_action(&self, action: LifecycleAction) -> &[Step] {
        match action {
            LifecycleAction::Install => &self.install,
            LifecycleAction::Start => &self.start,
            LifecycleAction::Stop => &self.stop,
            LifecycleAction::Uninstall => &self.uninstall,
        }
    }
}

/// Engine-side code attached to a personality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Native {
    /// Start output lists granted hosts, written to the produced node list;
    /// stop truncates it.
    Reservation,
}

pub fn substitute(text: &str, vars: &IndexMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find("${") {
        out.push_str(&rest[..at]);
        let tail = &rest[at + 2..];
        match tail.find('}') {
            Some(end) => {
                let name = &tail[..end];
                match vars.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push_str("${");
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &tail[end + 1..];
            }
            None => {
                out.push_str(&rest[at..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

struct Reservation {
    request: ResourceRequest,
    nodelist: String,
}

pub struct Scripted {
    kind: String,
    vars: IndexMap<String, String>,
    scripts: Arc<Scripts>,
    reservation: Option<Reservation>,
}

impl Scripted {
    pub fn new(
        kind: &str,
        schema: &[ParamSpec],
        args: &Args,
        scripts: Arc<Scripts>,
        native: Option<Native>,
    ) -> Self {
        // Defaults may refer to earlier params.
        let mut vars = IndexMap::new();
        for (name, value) in args.iter() {
            let text = substitute(&value.render(), &vars);
            vars.insert(name.clone(), text);
        }
        let reservation = (native == Some(Native::Reservation)).then(|| {
            let request = schema
                .iter()
                .find(|p| p.ty == ParamType::Resources)
                .and_then(|p| match args.get(&p.name) {
                    Some(ParamValue::Resources(r)) => Some(r.clone()),
                    _ => None,
                })
                .unwrap_or(ResourceRequest(Vec::new()));
            let nodelist = schema
                .iter()
                .find(|p| p.produces.is_some())
                .and_then(|p| vars.get(&p.name).cloned())
                .unwrap_or_default();
            Reservation { request, nodelist }
        });
        Scripted {
            kind: kind.to_string(),
            vars,
            scripts,
            reservation,
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    fn vars_for(&self, ctx: &Ctx<'_>) -> IndexMap<String, String> {
        let mut vars = self.vars.clone();
        vars.insert("id".into(), ctx.id().to_string());
        vars
    }

    fn steps(&self, action: LifecycleAction, ctx: &Ctx<'_>) -> Vec<Step> {
        let vars = self.vars_for(ctx);
        self.scripts
            .for_action(action)
            .iter()
            .map(|s| s.map_text(|t| substitute(t, &vars)))
            .collect()
    }

    fn reserve(&self, ctx: &Ctx<'_>, r: &Reservation, steps: &[Step]) -> Result<(), ServiceError> {
        let requested = r
            .request
            .total()
            .map_err(ServiceError::BadArgument)?;
        let out = run(ctx, steps).map_err(reservation_failure)?;
        let hosts: Vec<&str> = out
            .stdout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let granted = hosts.len() as u64;
        if granted < requested {
            return Err(ServiceError::InsufficientNodes { requested, granted });
        }
        let mut text = hosts.join("\n");
        text.push('\n');
        ctx.env()
            .host_fs()
            .write(&r.nodelist, &text)
            .map_err(|e| ServiceError::Io(e.to_string()))
    }

    fn release(&self, ctx: &Ctx<'_>, r: &Reservation, steps: &[Step]) -> Result<(), ServiceError> {
        run(ctx, steps).map_err(reservation_failure)?;
        ctx.env()
            .host_fs()
            .write(&r.nodelist, "")
            .map_err(|e| ServiceError::Io(e.to_string()))
    }
}

fn reservation_failure(e: ServiceError) -> ServiceError {
    match e {
        ServiceError::RemoteError { .. }
        | ServiceError::ConnectFailed { .. }
        | ServiceError::AuthFailed { .. } => ServiceError::ReservationFailed(e.to_string()),
        other => other,
    }
}

/// Whether `path` exists on the node, probed through the shell.
pub fn exists_on_node(ctx: &Ctx<'_>, path: &str) -> Result<bool, ServiceError> {
    let shell = ctx.shell()?;
    let probe = [Step::exec(&format!("test -e {}", sh::quote(path)))];
    match shell.svc.execute(&shell.ctx, &probe) {
        Ok(_) => Ok(true),
        Err(ServiceError::RemoteError { status: 1, .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Run a script as shell sessions. With a transfer component bound, each
/// fetch goes through it and the steps between fetches form their own
/// sessions; otherwise the whole script is one session.
pub fn run(ctx: &Ctx<'_>, steps: &[Step]) -> Result<Output, ServiceError> {
    if steps.is_empty() {
        return Ok(Output::default());
    }
    let transfer = if steps.iter().any(Step::is_fetch) {
        ctx.transfer()?
    } else {
        None
    };
    let shell = ctx.shell()?;
    let Some(transfer) = transfer else {
        return shell.svc.execute(&shell.ctx, steps);
    };
    let mut last = Output::default();
    let mut pending: Vec<Step> = Vec::new();
    for step in steps {
        if let Step::Fetch { url, dest } = step {
            if !pending.is_empty() {
                last = shell.svc.execute(&shell.ctx, &pending)?;
                pending.clear();
            }
            transfer.svc.fetch(&transfer.ctx, url, dest)?;
        } else {
            pending.push(step.clone());
        }
    }
    if !pending.is_empty() {
        last = shell.svc.execute(&shell.ctx, &pending)?;
    }
    Ok(last)
}

impl Behavior for Scripted {
    fn perform(&self, action: LifecycleAction, ctx: &Ctx<'_>) -> Result<(), ServiceError> {
        let steps = self.steps(action, ctx);
        match (action, &self.reservation) {
            (LifecycleAction::Install, _) => {
                if let Some(guard) = &self.scripts.unless_exists {
                    let path = substitute(guard, &self.vars_for(ctx));
                    if exists_on_node(ctx, &path)? {
                        log::debug!("{}: `{path}` present, install skipped", ctx.id());
                        return Ok(());
                    }
                }
                run(ctx, &steps).map(drop)
            }
            (LifecycleAction::Start, Some(r)) => self.reserve(ctx, r, &steps),
            (LifecycleAction::Stop, Some(r)) => self.release(ctx, r, &steps),
            _ => run(ctx, &steps).map(drop),
        }
    }
}
