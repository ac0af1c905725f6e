use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LISTING: &str = include_str!("../../core/tests/fixtures/listing.gdf");

const SMALL: &str = "D = OpenCCM.Deployment {
  nodes = {
    hostname = DynamicHost(~/nodelist)
    apply FOR(i,0,2) {
      node-%{i} = Grid5000_NODE {
        hostname = nodes/hostname
        jre = Jre(/opt/java)
      }
    }
  }
  services = {
    ns = OpenCCM.NameService { node = nodes/node-0 }
    dci = OpenCCM.DCIManager(DCI) {
      ns = services/ns
      node = nodes/node-0
    }
  }
}
";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn state_dir(&self) -> PathBuf {
        self.dir.path().join("state")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_gridforge"))
            .args(args)
            .env("GRIDFORGE_STATE_DIR", self.state_dir())
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "status {:?}\n{}", out.status, text(&out.stderr));
    text(&out.stdout)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_of_the_listing() {
    let sb = Sandbox::new();
    let cfg = sb.file("listing.gdf", LISTING);
    let out = ok(&sb.run(&["plan", "-c", s(&cfg), "--transport", "sim"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "MyDeployment: 4010 components, 5 stages, 4010 actions");
    assert!(lines[2].contains("node-prep [parallel] 501 units"));
    assert!(lines[3].contains("service services/ns"));
    assert!(lines[4].contains("service services/dci"));
    assert!(lines[5].contains("group services/servers [parallel] 500 units"));
}

#[test]
fn plan_leaves_no_trace() {
    let sb = Sandbox::new();
    let cfg = sb.file("small.gdf", SMALL);
    let emit = sb.dir.path().join("out.json");
    for transport in ["sim", "local", "ssh"] {
        ok(&sb.run(&["plan", "-c", s(&cfg), "--transport", transport]));
    }
    assert!(!sb.state_dir().exists());
    ok(&sb.run(&["plan", "-c", s(&cfg), "--emit", s(&emit)]));
    assert!(!sb.state_dir().exists());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&emit).unwrap()).unwrap();
    assert_eq!(json["descriptor"]["name"], "D");
    assert!(json["plan"]["stages"].is_array());
}

#[test]
fn deploy_then_undeploy() {
    let sb = Sandbox::new();
    let cfg = sb.file("small.gdf", SMALL);
    let up = ok(&sb.run(&["deploy", "-c", s(&cfg)]));
    assert!(up.starts_with("deployed D: "), "{up}");
    let status = ok(&sb.run(&["status", "-c", s(&cfg)]));
    assert!(status.lines().skip(1).all(|l| l.ends_with(" started")), "{status}");
    ok(&sb.run(&["undeploy", "-c", s(&cfg)]));
    let status = ok(&sb.run(&["status"]));
    let first = status.lines().next().unwrap();
    assert!(first.starts_with("D: 0 started, 0 installed, "), "{first}");
    assert!(status.lines().skip(1).all(|l| l.ends_with(" uninstalled")), "{status}");
}

#[test]
fn second_deploy_does_nothing() {
    let sb = Sandbox::new();
    let cfg = sb.file("small.gdf", SMALL);
    let first = ok(&sb.run(&["deploy", "-c", s(&cfg)]));
    assert!(!first.contains(": 0 actions"), "{first}");
    let second = ok(&sb.run(&["deploy", "-c", s(&cfg)]));
    assert!(second.starts_with("deployed D: 0 actions"), "{second}");
}

#[test]
fn dangling_reference_exits_2() {
    let sb = Sandbox::new();
    let bad = sb.file(
        "bad.gdf",
        "X = D {\n  nodes = { n-0 = N }\n  services = {\n    s = S { node = nodes/n-1 }\n  }\n}\n",
    );
    let out = sb.run(&["deploy", "-c", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("bad.gdf:4:"), "{err}");
    assert!(err.contains("nodes/n-1"), "{err}");
}

#[test]
fn missing_file_is_a_plain_failure() {
    let sb = Sandbox::new();
    let out = sb.run(&["plan", "-c", "nowhere.gdf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("nowhere.gdf"));
}

#[test]
fn dry_run_and_metrics() {
    let sb = Sandbox::new();
    let cfg = sb.file("small.gdf", SMALL);
    let listed = ok(&sb.run(&["deploy", "-c", s(&cfg), "--dry-run"]));
    assert!(listed.lines().any(|l| l == "services/dci -> started"), "{listed}");
    assert!(!sb.state_dir().join("D.state.json").exists());
    let metrics = sb.dir.path().join("m.csv");
    ok(&sb.run(&["deploy", "-c", s(&cfg), "--metrics", s(&metrics)]));
    let csv = std::fs::read_to_string(&metrics).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "stage,mode,actions,wall_ms");
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 4));
}

#[test]
fn bench_prints_csv() {
    let sb = Sandbox::new();
    let out = ok(&sb.run(&["bench", "--sizes", "1,3,5", "--max-workers", "2"]));
    let rows: Vec<Vec<u64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(out.lines().next(), Some("n_nodes,overhead_ms,effective_ms"));
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [1, 3, 5]);
    assert!(rows.windows(2).all(|w| w[0][2] <= w[1][2]));

    let template = sb.file(
        "t.gdf",
        "T = Deployment {\n  nodes = {\n    apply FOR(i,0,${last}) {\n      n-%{i} = Grid5000_NODE {\n        hostname = StaticHost(h-%{i})\n        jre = Jre(/opt/j)\n      }\n    }\n  }\n}\n",
    );
    let csv = sb.dir.path().join("b.csv");
    ok(&sb.run(&["bench", "-c", s(&template), "--sizes", "2,4", "-o", s(&csv)]));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn failing_stage_exits_3() {
    let sb = Sandbox::new();
    let kinds = sb.dir.path().join("kinds");
    std::fs::create_dir(&kinds).unwrap();
    std::fs::write(
        kinds.join("broken.toml"),
        "kind = \"Broken\"\ncategory = \"software\"\n\n[[requires]]\nname = \"shell\"\ninterface = \"Shell\"\n\n[scripts]\ninstall = [{ exec = { command = \"frobnicate\" } }]\n",
    )
    .unwrap();
    let cfg = sb.file(
        "b.gdf",
        "B = Deployment {\n  nodes = {\n    n = Grid5000_NODE {\n      hostname = StaticHost(h)\n      broken = Broken\n    }\n  }\n}\n",
    );
    let out = sb.run(&["--personalities", s(&kinds), "deploy", "-c", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("nodes/n/broken"));
}
