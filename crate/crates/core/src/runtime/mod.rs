//! Plan execution: sequential stages in order, parallel stages on a bounded
//! worker pool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{DeploymentPlan, Mode, PlanAction, Stage, Unit};
use crate::component::{
    ActionEvent, Assembly, ComponentId, LifecycleAction, LifecycleError, LifecycleState, Outcome,
};
use crate::stdlib::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub max_workers: usize,
    pub dry_run: bool,
    /// Shuffles parallel dispatch order and inserts yields between actions.
    pub interleave_seed: Option<u64>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            max_workers: 1,
            dry_run: false,
            interleave_seed: None,
        }
    }
}

impl ExecOptions {
    pub fn workers(max_workers: usize) -> Self {
        ExecOptions {
            max_workers,
            ..ExecOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionRecord {
    pub stage: usize,
    pub component: ComponentId,
    pub action: LifecycleAction,
    pub ok: bool,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub label: String,
    pub mode: Mode,
    pub actions: usize,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub stage: usize,
    pub component: ComponentId,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecutionReport {
    pub actions: Vec<ActionRecord>,
    pub stages: Vec<StageRecord>,
    /// Actions a dry run would have driven.
    pub planned: Vec<PlanAction>,
    pub total_ms: u64,
    pub failure: Option<Failure>,
    /// Durations are virtual time units rather than wall milliseconds.
    pub virtual_time: bool,
    pub peak_workers: usize,
}

impl ExecutionReport {
    pub fn performed(&self) -> usize {
        self.actions.len()
    }

    /// Per-stage CSV: `stage,mode,actions,wall_ms`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("stage,mode,actions,wall_ms\n");
        for s in &self.stages {
            let mode = match s.mode {
                Mode::Sequential => "sequential",
                Mode::Parallel => "parallel",
            };
            let _ = writeln!(out, "{},{},{},{}", s.index, mode, s.actions, s.duration_ms);
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("max workers must be at least 1")]
    NoWorkers,
    #[error("stage {stage} ({label}) failed: {source}")]
    StageFailed {
        stage: usize,
        label: String,
        #[source]
        source: LifecycleError,
        report: Box<ExecutionReport>,
    },
}

impl RuntimeError {
    pub fn report(&self) -> Option<&ExecutionReport> {
        match self {
            RuntimeError::StageFailed { report, .. } => Some(report),
            RuntimeError::NoWorkers => None,
        }
    }
}

struct UnitOutcome {
    records: Vec<ActionRecord>,
    cost: u64,
    error: Option<LifecycleError>,
}

fn record(stage: usize, e: &ActionEvent) -> ActionRecord {
    ActionRecord {
        stage,
        component: e.component.clone(),
        action: e.action,
        ok: e.outcome == Outcome::Ok,
        duration_ms: e.millis,
    }
}

fn run_unit(
    asm: &Assembly,
    env: &Environment,
    stage: usize,
    unit: &Unit,
    mut jiggle: impl FnMut(),
) -> UnitOutcome {
    let mut out = UnitOutcome {
        records: Vec::new(),
        cost: 0,
        error: None,
    };
    for a in &unit.actions {
        jiggle();
        let mut observer = |e: &ActionEvent| {
            out.cost += e.millis;
            out.records.push(record(stage, e));
        };
        if let Err(e) = asm.ensure_observed(a.component.as_str(), a.target, env, &mut observer) {
            out.error = Some(e);
            break;
        }
    }
    out
}

/// Makespan of units dispatched in order to the earliest free worker.
fn list_schedule(costs: &[u64], workers: usize) -> u64 {
    let mut free = vec![0u64; workers.max(1).min(costs.len().max(1))];
    for &c in costs {
        let (i, _) = free
            .iter()
            .enumerate()
            .min_by_key(|(_, &t)| t)
            .expect("at least one worker");
        free[i] += c;
    }
    free.into_iter().max().unwrap_or(0)
}

struct Runner<'a> {
    asm: &'a Assembly,
    env: &'a Environment,
    opts: ExecOptions,
    rng: Option<ChaCha8Rng>,
    peak: usize,
}

impl Runner<'_> {
    fn sequential(&mut self, index: usize, stage: &Stage) -> (Vec<UnitOutcome>, u64) {
        let began = Instant::now();
        let mut outcomes = Vec::new();
        for unit in &stage.units {
            let o = run_unit(self.asm, self.env, index, unit, || {});
            let failed = o.error.is_some();
            outcomes.push(o);
            if failed {
                break;
            }
        }
        self.peak = self.peak.max(1);
        let wall = began.elapsed().as_millis() as u64;
        let cost = if self.env.is_virtual() {
            outcomes.iter().map(|o| o.cost).sum()
        } else {
            wall
        };
        (outcomes, cost)
    }

    fn parallel(&mut self, index: usize, stage: &Stage) -> (Vec<UnitOutcome>, u64) {
        let began = Instant::now();
        let n = stage.units.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut seeds: Vec<u64> = vec![0; n];
        if let Some(rng) = self.rng.as_mut() {
            order.shuffle(rng);
            for s in seeds.iter_mut() {
                *s = rng.random();
            }
        }
        let workers = self.opts.max_workers.min(n).max(1);
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<UnitOutcome>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let shuffled = self.rng.is_some();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= n {
                        break;
                    }
                    let u = order[k];
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let mut jr = ChaCha8Rng::seed_from_u64(seeds[u]);
                    let o = run_unit(self.asm, self.env, index, &stage.units[u], || {
                        if shuffled {
                            for _ in 0..jr.random_range(0..4) {
                                std::thread::yield_now();
                            }
                        }
                    });
                    active.fetch_sub(1, Ordering::SeqCst);
                    if o.error.is_some() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    *slots[u].lock() = Some(o);
                });
            }
        });
        self.peak = self.peak.max(peak.load(Ordering::SeqCst));
        let wall = began.elapsed().as_millis() as u64;
        let outcomes: Vec<UnitOutcome> = slots.into_iter().filter_map(|s| s.into_inner()).collect();
        let cost = if self.env.is_virtual() {
            let costs: Vec<u64> = outcomes.iter().map(|o| o.cost).collect();
            list_schedule(&costs, self.opts.max_workers)
        } else {
            wall
        };
        (outcomes, cost)
    }
}

/// Drive every action of `plan` through the lifecycle engine.
pub fn execute(
    plan: &DeploymentPlan,
    asm: &Assembly,
    env: &Environment,
    opts: ExecOptions,
) -> Result<ExecutionReport, RuntimeError> {
    if opts.max_workers == 0 {
        return Err(RuntimeError::NoWorkers);
    }
    let mut report = ExecutionReport {
        virtual_time: env.is_virtual(),
        ..ExecutionReport::default()
    };
    if opts.dry_run {
        report.planned = plan.actions().cloned().collect();
        report.stages = plan
            .stages
            .iter()
            .enumerate()
            .map(|(index, s)| StageRecord {
                index,
                label: s.label.clone(),
                mode: s.mode,
                actions: 0,
                duration_ms: 0,
            })
            .collect();
        return Ok(report);
    }
    let began = Instant::now();
    let mut runner = Runner {
        asm,
        env,
        opts,
        rng: opts.interleave_seed.map(ChaCha8Rng::seed_from_u64),
        peak: 0,
    };
    for (index, stage) in plan.stages.iter().enumerate() {
        let (outcomes, cost) = match stage.mode {
            Mode::Sequential => runner.sequential(index, stage),
            Mode::Parallel => runner.parallel(index, stage),
        };
        let mut performed = 0;
        let mut error = None;
        for o in outcomes {
            performed += o.records.len();
            report.actions.extend(o.records);
            if error.is_none() {
                error = o.error;
            }
        }
        report.stages.push(StageRecord {
            index,
            label: stage.label.clone(),
            mode: stage.mode,
            actions: performed,
            duration_ms: cost,
        });
        report.peak_workers = runner.peak;
        if let Some(source) = error {
            report.total_ms = total(&report, began, env);
            report.failure = Some(Failure {
                stage: index,
                component: source.component().clone(),
                error: source.to_string(),
            });
            return Err(RuntimeError::StageFailed {
                stage: index,
                label: stage.label.clone(),
                source,
                report: Box::new(report),
            });
        }
    }
    report.total_ms = total(&report, began, env);
    Ok(report)
}

fn total(report: &ExecutionReport, began: Instant, env: &Environment) -> u64 {
    if env.is_virtual() {
        report.stages.iter().map(|s| s.duration_ms).sum()
    } else {
        began.elapsed().as_millis() as u64
    }
}

/// Snapshot of every component's state.
pub fn status(asm: &Assembly) -> BTreeMap<ComponentId, LifecycleState> {
    asm.status()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_scheduling() {
        assert_eq!(list_schedule(&[10; 8], 8), 10);
        assert_eq!(list_schedule(&[10; 8], 3), 30);
        assert_eq!(list_schedule(&[], 4), 0);
        assert_eq!(list_schedule(&[5, 3, 3], 2), 6);
    }
}
