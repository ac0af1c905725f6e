mod common;

use std::os::unix::fs::PermissionsExt;
use std::sync::Arc;

use gridforge::assembly::instantiate;
use gridforge::component::{
    Assembly, Behavior, Component, Ctx, LifecycleAction, LifecycleState, PortSpec,
};
use gridforge::personality::Registry;
use gridforge::simgrid::{Fleet, SimClockConfig, SimTransport};
use gridforge::stdlib::{
    Credential, Environment, LocalTransport, MemFs, Meter, NodeAccess, ServiceError, SshTransport,
    Step, Transport, UserAccess,
};
use parking_lot::Mutex;
use proptest::prelude::*;

type Check = dyn Fn(&Ctx<'_>) -> Result<String, ServiceError> + Send + Sync;

/// Runs `check` on Start and Stop and keeps what it returned.
struct Hook {
    check: Box<Check>,
    seen: Arc<Mutex<Vec<Result<String, ServiceError>>>>,
}

impl Behavior for Hook {
    fn perform(&self, action: LifecycleAction, ctx: &Ctx<'_>) -> Result<(), ServiceError> {
        if matches!(action, LifecycleAction::Start | LifecycleAction::Stop) {
            let r = (self.check)(ctx);
            self.seen.lock().push(r.clone());
            r.map(drop)?;
        }
        Ok(())
    }
}

const NODE: &str = "T = OpenCCM.Deployment {
  nodes = {
    n = Grid5000_NODE {
      hostname = StaticHost(localhost)
      user = User(me, secret)
      transfer = FileTransfer
    }
  }
}
";

/// The node above plus a hook bound to it; the node is started.
fn node_with_hook(
    env: &Environment,
    check: impl Fn(&Ctx<'_>) -> Result<String, ServiceError> + Send + Sync + 'static,
) -> (Assembly, Arc<Mutex<Vec<Result<String, ServiceError>>>>) {
    let desc = common::descriptor(NODE);
    let mut asm = instantiate(&desc, &Registry::builtin()).unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    asm.add_component(
        Component::new(
            "hook",
            "Hook",
            Box::new(Hook {
                check: Box::new(check),
                seen: seen.clone(),
            }),
        )
        .with_requires(vec![PortSpec::required("node", "Node")]),
    )
    .unwrap();
    asm.bind(&"hook".into(), "node", &"nodes/n".into()).unwrap();
    asm.ensure_composite("nodes/n", LifecycleState::Started, env).unwrap();
    (asm, seen)
}

fn sim_env(fleet: &Arc<Fleet>) -> Environment {
    Environment::new(Arc::new(SimTransport::new(fleet.clone())), Arc::new(MemFs::new()))
}

fn localhost_fleet() -> Arc<Fleet> {
    let mut fleet = Fleet::create(0, SimClockConfig::default());
    fleet.add_host("localhost");
    Arc::new(fleet)
}

#[test]
fn collaborators_resolve_through_the_node() {
    let fleet = localhost_fleet();
    let env = sim_env(&fleet);
    let (asm, seen) = node_with_hook(&env, |ctx| {
        let host = ctx.hostname()?;
        let name = host.svc.hostname(host.ctx.node_ordinal(), ctx.env().host_fs())?;
        assert!(ctx.port()?.is_none());
        let protocol = ctx.protocol()?;
        let access = protocol.svc.access(&protocol.ctx)?;
        assert_eq!(
            access,
            NodeAccess {
                host: "localhost".into(),
                port: 22,
                user: Some(UserAccess {
                    login: "me".into(),
                    credential: Some(Credential::Password("secret".into())),
                }),
            }
        );
        Ok(name)
    });
    asm.ensure("hook", LifecycleState::Started, &env).unwrap();
    assert_eq!(seen.lock().as_slice(), [Ok("localhost".to_string())]);
}

#[test]
fn business_calls_need_a_started_collaborator() {
    let fleet = localhost_fleet();
    let env = sim_env(&fleet);
    let (asm, seen) = node_with_hook(&env, |ctx| ctx.shell().map(|_| String::new()));
    asm.ensure("hook", LifecycleState::Started, &env).unwrap();
    asm.ensure("nodes/n/shell", LifecycleState::Installed, &env).unwrap();
    assert!(asm.ensure("hook", LifecycleState::Installed, &env).is_err());
    assert!(matches!(
        seen.lock().as_slice(),
        [Ok(_), Err(ServiceError::NotStarted { state: LifecycleState::Installed, .. })]
    ));
}

#[test]
fn shell_sessions_change_the_node() {
    let fleet = localhost_fleet();
    let env = sim_env(&fleet);
    let (asm, seen) = node_with_hook(&env, |ctx| {
        let shell = ctx.shell()?;
        let out = shell.svc.execute(
            &shell.ctx,
            &[Step::set_var("A", "1"), Step::append_path("/opt/a/bin"), Step::exec("echo $A")],
        )?;
        Ok(out.stdout)
    });
    asm.ensure("hook", LifecycleState::Started, &env).unwrap();
    assert_eq!(seen.lock().as_slice(), [Ok("1\n".to_string())]);
    let node = fleet.node("localhost").unwrap();
    assert_eq!(node.env()["A"], "1");
    assert_eq!(node.env()["PATH"], "/opt/a/bin");
}

#[test]
fn file_urls_are_fetched_once() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.txt");
    let dest = dir.path().join("dest.txt");
    std::fs::write(&src, "payload\n").unwrap();
    let url = format!("file://{}", src.display());
    let dest_s = dest.display().to_string();
    let env = Environment::new(Arc::new(LocalTransport::default()), Arc::new(MemFs::new()));
    let (asm, seen) = node_with_hook(&env, move |ctx| {
        let t = ctx.transfer()?.expect("transfer slot");
        let steps = t.svc.fetch(&t.ctx, &url, &dest_s)?;
        Ok(format!("{steps:?}"))
    });
    asm.ensure("hook", LifecycleState::Started, &env).unwrap();
    assert!(seen.lock()[0].is_ok());
    assert_eq!(std::fs::read_to_string(&dest).unwrap(), "payload\n");
    // Present destinations are not fetched again.
    std::fs::remove_file(&src).unwrap();
    asm.ensure("hook", LifecycleState::Installed, &env).unwrap();
    asm.ensure("hook", LifecycleState::Started, &env).unwrap();
    assert!(seen.lock().iter().all(|r| r.is_ok()));
    assert_eq!(seen.lock().len(), 3);
}

#[test]
fn failed_fetch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let url = format!("file://{}/missing", dir.path().display());
    let dest = format!("{}/out", dir.path().display());
    let env = Environment::new(Arc::new(LocalTransport::default()), Arc::new(MemFs::new()));
    let (asm, seen) = node_with_hook(&env, move |ctx| {
        let t = ctx.transfer()?.expect("transfer slot");
        t.svc.fetch(&t.ctx, &url, &dest).map(|_| String::new())
    });
    assert!(asm.ensure("hook", LifecycleState::Started, &env).is_err());
    assert!(matches!(seen.lock()[0], Err(ServiceError::FetchFailed { .. })));
}

fn fake_client(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path.display().to_string()
}

fn access(credential: Option<Credential>) -> NodeAccess {
    NodeAccess {
        host: "node.example".into(),
        port: 2222,
        user: Some(UserAccess {
            login: "alice".into(),
            credential,
        }),
    }
}

#[test]
fn ssh_command_line() {
    let ssh = SshTransport::new("/home/alice");
    let args = ssh.arguments(&access(Some(Credential::KeyFile("~/.ssh/id_rsa.pub".into()))));
    assert_eq!(
        args,
        [
            "-p",
            "2222",
            "-o",
            "BatchMode=yes",
            "-i",
            "/home/alice/.ssh/id_rsa",
            "alice@node.example",
            "sh",
            "-s"
        ]
    );
    let bare = ssh.arguments(&NodeAccess {
        host: "h".into(),
        port: 22,
        user: None,
    });
    assert_eq!(bare, ["-p", "22", "-o", "BatchMode=yes", "h", "sh", "-s"]);
}

#[test]
fn ssh_failures_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let key = Some(Credential::KeyFile("~/.ssh/id_rsa".into()));
    let meter = Meter::new("t");
    let denied = fake_client(
        dir.path(),
        "denied",
        "echo 'alice@node.example: Permission denied (publickey).' >&2; exit 255",
    );
    let err = SshTransport::new("/home/alice")
        .with_program(denied)
        .send(&access(key.clone()), "true\n", &meter)
        .unwrap_err();
    assert!(matches!(err, ServiceError::AuthFailed { ref host, .. } if host == "node.example"), "{err}");
    let refused = fake_client(
        dir.path(),
        "refused",
        "echo 'ssh: connect to host node.example port 2222: Connection refused' >&2; exit 255",
    );
    let err = SshTransport::new("/home/alice")
        .with_program(refused)
        .send(&access(key.clone()), "true\n", &meter)
        .unwrap_err();
    assert!(matches!(err, ServiceError::ConnectFailed { .. }), "{err}");
    // A client that runs the script locally, as a reachable node would.
    let through = fake_client(dir.path(), "through", "exec sh -s");
    let out = SshTransport::new("/home/alice")
        .with_program(through.clone())
        .send(&access(key.clone()), "echo hi\n", &meter)
        .unwrap();
    assert_eq!(out.stdout, "hi\n");
    let err = SshTransport::new("/home/alice")
        .with_program(through)
        .send(&access(key), "exit 3\n", &meter)
        .unwrap_err();
    assert!(matches!(err, ServiceError::RemoteError { status: 3, .. }));
}

#[test]
fn missing_client_is_a_connect_failure() {
    let err = SshTransport::new("/home/alice")
        .with_program("/nonexistent/ssh-client")
        .send(&access(None), "true\n", &Meter::new("t"))
        .unwrap_err();
    assert!(matches!(err, ServiceError::ConnectFailed { .. }));
}

/// Steps both backends understand; `@D` stands for a scratch directory.
fn equivalence_step() -> impl Strategy<Value = Step> {
    let var = prop_oneof![Just("A"), Just("B"), Just("C")];
    let sub = prop_oneof![Just("x"), Just("x/y"), Just("z")];
    prop_oneof![
        (var.clone(), "[a-z0-9]{0,5}").prop_map(|(n, v)| Step::set_var(n, &v)),
        var.prop_map(Step::unset_var),
        Just(Step::exec("echo $A $B ${C}")),
        Just(Step::append_path("/opt/tool/bin")),
        Just(Step::exec("true")),
        Just(Step::exec("false")),
        sub.clone().prop_map(|s| Step::exec(&format!("mkdir -p @D/{s}"))),
        sub.clone().prop_map(|s| Step::exec(&format!("test -e @D/{s}"))),
        sub.prop_map(|s| Step::exec(&format!("rm -rf @D/{s}"))),
    ]
}

fn outcome(r: Result<gridforge::stdlib::Output, ServiceError>) -> (i32, Option<String>) {
    match r {
        Ok(o) => (0, Some(o.stdout)),
        Err(ServiceError::RemoteError { status, .. }) => (status, None),
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_and_local_shells_agree(steps in prop::collection::vec(equivalence_step(), 0..10)) {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display().to_string();
        let steps: Vec<Step> = steps.iter().map(|s| s.map_text(|t| t.replace("@D", &d))).collect();
        let script = gridforge::stdlib::sh::render(&steps).unwrap();
        let local = LocalTransport::default().send(&access(None), &script, &Meter::new("l"));
        let to_sim = NodeAccess { host: "localhost".into(), port: 22, user: None };
        let sim = SimTransport::new(localhost_fleet()).send(&to_sim, &script, &Meter::new("s"));
        prop_assert_eq!(outcome(local), outcome(sim), "{}", script);
    }
}
