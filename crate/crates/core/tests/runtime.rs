mod common;

use std::collections::HashMap;
use std::sync::atomic::Ordering;

use gridforge::assembly::{plan, plan_inverse};
use gridforge::component::{LifecycleAction, LifecycleState};
use gridforge::personality::Registry;
use gridforge::pipeline::sim_world;
use gridforge::runtime::{execute, status, ExecOptions, RuntimeError};
use gridforge::simgrid::SimClockConfig;
use proptest::prelude::*;

use common::probe;

#[test]
fn sequential_chain_adds_latencies() {
    let desc = probe::descriptor(3, &[(1, 0), (2, 1)], &[]);
    let (asm, shared) = probe::assembly(&desc, 5);
    let p = plan(&desc).unwrap();
    let report = execute(&p, &asm, &probe::virtual_env(), ExecOptions::workers(8)).unwrap();
    assert_eq!(report.performed(), 6);
    assert_eq!(shared.calls.load(Ordering::SeqCst), 6);
    assert!(report.virtual_time);
    // Install and Start each cost 5, three services in a row.
    assert_eq!(report.total_ms, 3 * 10);
    assert_eq!(report.peak_workers, 1);
}

#[test]
fn independent_group_runs_in_one_step() {
    let desc = probe::descriptor(8, &[], &[(0..8).collect()]);
    let p = plan(&desc).unwrap();
    assert_eq!(p.stages.len(), 1);
    for (workers, want) in [(8, 10), (4, 20), (3, 30), (1, 80)] {
        let (asm, shared) = probe::assembly(&desc, 5);
        let report = execute(&p, &asm, &probe::virtual_env(), ExecOptions::workers(workers)).unwrap();
        assert_eq!(report.total_ms, want, "{workers} workers");
        assert!(report.peak_workers <= workers);
        assert!(shared.peak.load(Ordering::SeqCst) <= workers);
    }
}

#[test]
fn concurrency_never_exceeds_the_bound() {
    let desc = probe::descriptor(40, &[], &[(0..40).collect()]);
    let p = plan(&desc).unwrap();
    for workers in [1, 2, 5, 16] {
        let (asm, shared) = probe::assembly(&desc, 1);
        let opts = ExecOptions {
            interleave_seed: Some(workers as u64),
            ..ExecOptions::workers(workers)
        };
        let report = execute(&p, &asm, &probe::virtual_env(), opts).unwrap();
        assert_eq!(report.performed(), 80);
        assert!(shared.peak.load(Ordering::SeqCst) <= workers);
        assert!(report.peak_workers <= workers);
    }
}

#[test]
fn dry_run_touches_nothing() {
    let desc = probe::descriptor(4, &[(1, 0)], &[vec![2, 3]]);
    let (asm, shared) = probe::assembly(&desc, 3);
    let p = plan(&desc).unwrap();
    let opts = ExecOptions {
        dry_run: true,
        ..ExecOptions::workers(4)
    };
    let report = execute(&p, &asm, &probe::virtual_env(), opts).unwrap();
    assert_eq!(shared.calls.load(Ordering::SeqCst), 0);
    assert_eq!(report.performed(), 0);
    assert_eq!(report.planned.len(), 4);
    assert!(status(&asm).values().all(|s| *s == LifecycleState::Uninstalled));
}

#[test]
fn zero_workers_is_rejected() {
    let desc = probe::descriptor(1, &[], &[]);
    let (asm, _) = probe::assembly(&desc, 0);
    let err = execute(&plan(&desc).unwrap(), &asm, &probe::virtual_env(), ExecOptions::workers(0));
    assert!(matches!(err, Err(RuntimeError::NoWorkers)));
}

fn small_loaded(n: usize) -> (gridforge::pipeline::Loaded, gridforge::stdlib::Environment) {
    let loaded = common::load(&common::sources(&[("small.gdf", &common::small(n))]));
    let world = sim_world(&loaded.compiled.descriptor, &Registry::builtin(), SimClockConfig::default());
    let env = world.environment();
    (loaded, env)
}

#[test]
fn status_follows_deployment() {
    let (loaded, env) = small_loaded(4);
    assert!(status(&loaded.assembly).values().all(|s| *s == LifecycleState::Uninstalled));
    let report = execute(&loaded.compiled.plan, &loaded.assembly, &env, ExecOptions::workers(4)).unwrap();
    assert_eq!(report.performed(), 2 * loaded.assembly.len());
    assert!(status(&loaded.assembly).values().all(|s| *s == LifecycleState::Started));
    let again = execute(&loaded.compiled.plan, &loaded.assembly, &env, ExecOptions::workers(4)).unwrap();
    assert_eq!(again.performed(), 0);
    let inverse = plan_inverse(&loaded.compiled.plan);
    let down = execute(&inverse, &loaded.assembly, &env, ExecOptions::workers(4)).unwrap();
    assert_eq!(down.performed(), 2 * loaded.assembly.len());
    assert!(status(&loaded.assembly).values().all(|s| *s == LifecycleState::Uninstalled));
}

#[test]
fn failure_stops_before_dependents() {
    let (mut loaded, env) = small_loaded(4);
    let shared = probe::probe_all(&mut loaded.assembly, 1);
    shared.fail.lock().insert("services/dci".into());
    let err = execute(&loaded.compiled.plan, &loaded.assembly, &env, ExecOptions::workers(4)).unwrap_err();
    let RuntimeError::StageFailed { label, report, .. } = &err else {
        panic!("{err}")
    };
    assert_eq!(label, "service services/dci");
    let failure = report.failure.as_ref().unwrap();
    assert_eq!(failure.component.as_str(), "services/dci");
    let st = status(&loaded.assembly);
    assert_eq!(st["services/ns"], LifecycleState::Started);
    assert_eq!(st["services/dci"], LifecycleState::Uninstalled);
    for i in 1..4 {
        let server = format!("services/servers/server-{i}");
        assert_eq!(st[server.as_str()], LifecycleState::Uninstalled);
    }
    assert!(st
        .iter()
        .filter(|(id, _)| id.as_str().starts_with("nodes/"))
        .all(|(_, s)| *s == LifecycleState::Started));
    let failed: Vec<_> = report.actions.iter().filter(|a| !a.ok).collect();
    assert_eq!(failed.len(), 1);
}

#[test]
fn parallel_failure_lets_siblings_finish() {
    let desc = probe::descriptor(6, &[], &[(0..6).collect()]);
    let (asm, shared) = probe::assembly(&desc, 1);
    shared.fail.lock().insert("services/g0/c2".into());
    let err = execute(&plan(&desc).unwrap(), &asm, &probe::virtual_env(), ExecOptions::workers(6)).unwrap_err();
    let report = err.report().unwrap();
    assert_eq!(report.failure.as_ref().unwrap().component.as_str(), "services/g0/c2");
    // No unit was left half way: each is either untouched or complete.
    for (_, s) in status(&asm) {
        assert_ne!(s, LifecycleState::Installed);
    }
    assert_eq!(shared.active.load(Ordering::SeqCst), 0);
}

#[test]
fn seeded_runs_are_reproducible() {
    let run = |seed: u64| {
        let (loaded, env) = small_loaded(6);
        let opts = ExecOptions {
            interleave_seed: Some(seed),
            ..ExecOptions::workers(3)
        };
        execute(&loaded.compiled.plan, &loaded.assembly, &env, opts).unwrap()
    };
    let a = run(11);
    let b = run(11);
    assert_eq!(a.total_ms, b.total_ms);
    assert_eq!(a.stages, b.stages);
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.metrics_csv(), b.metrics_csv());
}

#[test]
fn metrics_have_one_row_per_stage() {
    let (loaded, env) = small_loaded(3);
    let report = execute(&loaded.compiled.plan, &loaded.assembly, &env, ExecOptions::workers(2)).unwrap();
    let csv = report.metrics_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "stage,mode,actions,wall_ms");
    assert_eq!(lines.len(), 1 + loaded.compiled.plan.stages.len());
    assert!(lines[2].starts_with("1,parallel,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interleavings_keep_servers_first(
        n in 2usize..10,
        raw in prop::collection::vec((0usize..10, 0usize..10), 0..14),
        seed in any::<u64>(),
        workers in 1usize..6,
    ) {
        let edges: Vec<(usize, usize)> = raw
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|(a, b)| a > b)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let independent: Vec<usize> = (0..n).filter(|v| edges.iter().all(|(a, b)| a != v && b != v)).collect();
        let groups = if independent.len() > 1 { vec![independent] } else { vec![] };
        let desc = probe::descriptor(n, &edges, &groups);
        let (asm, _) = probe::assembly(&desc, 1);
        let opts = ExecOptions { interleave_seed: Some(seed), ..ExecOptions::workers(workers) };
        execute(&plan(&desc).unwrap(), &asm, &probe::virtual_env(), opts).unwrap();
        let journal = asm.journal().snapshot();
        let at: HashMap<(String, LifecycleAction), usize> = journal
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.component.to_string(), r.action), i))
            .collect();
        for (client, server) in desc.dependency_edges() {
            let started = at[&(server.to_string(), LifecycleAction::Start)];
            let installed = at[&(client.to_string(), LifecycleAction::Install)];
            prop_assert!(started < installed, "{server} started after {client} installed");
        }
    }
}
