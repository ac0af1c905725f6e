mod state;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridforge::assembly::{emit_json, plan_inverse, DeploymentPlan, Mode};
use gridforge::component::LifecycleState;
use gridforge::personality::Registry;
use gridforge::pipeline::{self, Loaded, PipelineError, SimWorld, TransportKind};
use gridforge::runtime::{self, ExecOptions, ExecutionReport, RuntimeError};
use gridforge::simgrid::{
    measure_scaling, scaling_csv, ConfigTemplate, Fleet, OpenCcmTemplate, SimClockConfig,
    TextTemplate,
};
use gridforge::stdlib::{Environment, MemFs};

use state::{Lock, SimState, StateFile};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_STAGE_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "gridforge", version, about = "Component-based deployment over node fleets")]
struct Cli {
    /// Extra personality files (.toml) to load before compiling.
    #[arg(long, global = true, value_name = "DIR")]
    personalities: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a configuration and print its staged plan.
    Plan {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Transport::Sim)]
        transport: Transport,
        /// Write descriptor and plan as JSON.
        #[arg(long, value_name = "FILE")]
        emit: Option<PathBuf>,
        /// List every unit and action.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Drive every component to Started.
    Deploy(RunArgs),
    /// Drive every component back to Uninstalled.
    Undeploy(RunArgs),
    /// Print component states recorded by earlier runs.
    Status {
        #[arg(short = 'c', long = "config", value_name = "FILE")]
        config: Vec<PathBuf>,
    },
    /// Deploy a template at several sizes on the simulated grid.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; repeat to add fragments.
    #[arg(short = 'c', long = "config", value_name = "FILE", required = true)]
    config: Vec<PathBuf>,
}

#[derive(Args)]
struct ClockArgs {
    /// Seed of the simulated jitter and of parallel dispatch order; 0 disables both.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated units charged per session.
    #[arg(long, default_value_t = 10)]
    connect_latency: u64,
    /// Simulated units charged per step.
    #[arg(long, default_value_t = 1)]
    step_latency: u64,
}

impl ClockArgs {
    fn clock(&self) -> SimClockConfig {
        SimClockConfig {
            connect_latency: self.connect_latency,
            step_latency: self.step_latency,
            jitter_seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Transport::Sim)]
    transport: Transport,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    max_workers: u64,
    #[command(flatten)]
    clock: ClockArgs,
    /// Per-stage CSV `stage,mode,actions,wall_ms`.
    #[arg(long, value_name = "FILE")]
    metrics: Option<PathBuf>,
    /// List the actions without running them.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Template with `${n}` and `${last}` placeholders; the bundled
    /// OpenCCM template when omitted.
    #[arg(short = 'c', long = "config", value_name = "FILE")]
    config: Option<PathBuf>,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100,110,120,130,140,150,160,170,180,190,200")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    max_workers: u64,
    /// Start servers one after another instead of in a parallel group.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    clock: ClockArgs,
    /// Write the CSV here instead of stdout.
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Sim,
    Local,
    Ssh,
}

impl Transport {
    fn kind(self) -> TransportKind {
        match self {
            Transport::Sim => TransportKind::Sim,
            Transport::Local => TransportKind::Local,
            Transport::Ssh => TransportKind::Ssh,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Transport::Sim => "sim",
            Transport::Local => "local",
            Transport::Ssh => "ssh",
        }
    }
}

/// Error carrying its exit code.
struct Exit(u8, anyhow::Error);

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit(EXIT_FAILURE, e)
    }
}

fn registry(dir: Option<&Path>) -> Result<Registry> {
    let mut r = Registry::builtin();
    if let Some(dir) = dir {
        r.load_dir(dir)
            .with_context(|| format!("loading personalities from {}", dir.display()))?;
    }
    Ok(r)
}

fn load(config: &[PathBuf], registry: &Registry) -> Result<Loaded, Exit> {
    let sources = pipeline::read_sources(config).map_err(|e| Exit(EXIT_FAILURE, e.into()))?;
    pipeline::load(&sources, registry).map_err(|e| {
        let code = if e.is_diagnostic() {
            EXIT_INVALID
        } else {
            EXIT_FAILURE
        };
        Exit(code, e.into())
    })
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Sequential => "sequential",
        Mode::Parallel => "parallel",
    }
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn put(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn render_plan(name: &str, components: usize, plan: &DeploymentPlan, verbose: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{name}: {components} components, {} stages, {} actions",
        plan.stages.len(),
        plan.len()
    );
    for (i, s) in plan.stages.iter().enumerate() {
        let _ = writeln!(
            out,
            "stage {i}: {} [{}] {} units, {} actions",
            s.label,
            mode_name(s.mode),
            s.units.len(),
            s.action_count()
        );
        if verbose {
            for u in &s.units {
                let actions: Vec<String> = u
                    .actions
                    .iter()
                    .map(|a| format!("{}->{}", a.component, a.target))
                    .collect();
                let _ = writeln!(out, "  {}: {}", u.id, actions.join(" "));
            }
        }
    }
    out
}

fn cmd_plan(
    config: &[PathBuf],
    registry: &Registry,
    emit: Option<&Path>,
    verbose: bool,
) -> Result<(), Exit> {
    let sources = pipeline::read_sources(config).map_err(|e| Exit(EXIT_FAILURE, e.into()))?;
    let compiled = pipeline::compile(&sources, registry).map_err(|e: PipelineError| {
        let code = if e.is_diagnostic() {
            EXIT_INVALID
        } else {
            EXIT_FAILURE
        };
        Exit(code, e.into())
    })?;
    put(&render_plan(
        &compiled.descriptor.name,
        compiled.descriptor.components.len(),
        &compiled.plan,
        verbose,
    ))?;
    if let Some(path) = emit {
        std::fs::write(path, emit_json(&compiled.descriptor, &compiled.plan))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

struct Backend {
    env: Environment,
    sim: Option<SimWorld>,
}

fn backend(
    transport: Transport,
    loaded: &Loaded,
    registry: &Registry,
    clock: SimClockConfig,
    saved: Option<&StateFile>,
) -> Backend {
    match transport {
        Transport::Sim => {
            let world = match saved.and_then(|s| s.sim.clone()) {
                Some(sim) => SimWorld {
                    fleet: Arc::new(Fleet::from_snapshot(sim.fleet)),
                    fs: Arc::new(MemFs::from_snapshot(sim.host_files)),
                },
                None => pipeline::sim_world(&loaded.compiled.descriptor, registry, clock),
            };
            Backend {
                env: world.environment(),
                sim: Some(world),
            }
        }
        other => Backend {
            env: pipeline::real_environment(other.kind()),
            sim: None,
        },
    }
}

fn summarize(verb: &str, name: &str, report: &ExecutionReport, loaded: &Loaded) -> Result<()> {
    let unit = if report.virtual_time { "units" } else { "ms" };
    put(&format!(
        "{verb} {name}: {} actions in {} stages, effective {} {unit}, overhead {} ms\n",
        report.performed(),
        report.stages.len(),
        report.total_ms,
        loaded.overhead.as_millis()
    ))
}

fn cmd_run(args: &RunArgs, registry: &Registry, undeploy: bool) -> Result<(), Exit> {
    let loaded = load(&args.config.config, registry)?;
    let desc = &loaded.compiled.descriptor;
    let plan = if undeploy {
        plan_inverse(&loaded.compiled.plan)
    } else {
        loaded.compiled.plan.clone()
    };
    let opts = ExecOptions {
        max_workers: args.max_workers as usize,
        dry_run: args.dry_run,
        interleave_seed: (args.clock.seed != 0).then_some(args.clock.seed),
    };
    if args.dry_run {
        let env = Environment::detached();
        let report = runtime::execute(&plan, &loaded.assembly, &env, opts)
            .map_err(|e| Exit(EXIT_FAILURE, e.into()))?;
        let mut out = String::new();
        for a in &report.planned {
            let _ = writeln!(out, "{} -> {}", a.component, a.target);
        }
        let _ = writeln!(out, "dry run: {} actions, no behavior invoked", report.planned.len());
        put(&out)?;
        return Ok(());
    }

    let dir = state::state_dir();
    let _lock = Lock::acquire(&dir, &desc.name)?;
    let hash = state::descriptor_hash(desc);
    let saved = state::load(&dir, &desc.name)?;
    if let Some(s) = &saved {
        if s.descriptor_hash != hash {
            return Err(Exit(
                EXIT_FAILURE,
                anyhow::anyhow!(
                    "recorded state of {} belongs to a different configuration; undeploy it with the original configuration or remove {}",
                    desc.name,
                    state::state_path(&dir, &desc.name).display()
                ),
            ));
        }
        if s.transport != args.transport.name() {
            return Err(Exit(
                EXIT_FAILURE,
                anyhow::anyhow!(
                    "{} was deployed with transport {}, not {}",
                    desc.name,
                    s.transport,
                    args.transport.name()
                ),
            ));
        }
        loaded.assembly.restore_states(&s.states);
    }
    let backend = backend(
        args.transport,
        &loaded,
        registry,
        args.clock.clock(),
        saved.as_ref(),
    );
    let result = runtime::execute(&plan, &loaded.assembly, &backend.env, opts);

    let mut journal = saved.map(|s| s.journal).unwrap_or_default();
    journal.extend(loaded.assembly.journal().export().lines().map(str::to_string));
    let record = StateFile {
        name: desc.name.clone(),
        descriptor_hash: hash,
        transport: args.transport.name().into(),
        states: loaded.assembly.status(),
        journal,
        sim: backend.sim.as_ref().map(|w| SimState {
            fleet: w.fleet.snapshot(),
            host_files: w.fs.snapshot(),
        }),
    };
    state::save(&dir, &record)?;

    let report = match &result {
        Ok(r) => r,
        Err(e) => e.report().expect("execution started"),
    };
    if let Some(path) = &args.metrics {
        std::fs::write(path, report.metrics_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    match result {
        Ok(report) => {
            let verb = if undeploy { "undeployed" } else { "deployed" };
            summarize(verb, &desc.name, &report, &loaded)?;
            Ok(())
        }
        Err(e @ RuntimeError::StageFailed { .. }) => Err(Exit(EXIT_STAGE_FAILED, e.into())),
        Err(e) => Err(Exit(EXIT_FAILURE, e.into())),
    }
}

fn render_states(name: &str, states: impl Iterator<Item = (String, LifecycleState)>) -> String {
    let mut counts = [0usize; 3];
    let mut lines = String::new();
    for (id, s) in states {
        counts[s as usize] += 1;
        let _ = writeln!(lines, "{id} {s}");
    }
    format!(
        "{name}: {} started, {} installed, {} uninstalled\n{lines}",
        counts[LifecycleState::Started as usize],
        counts[LifecycleState::Installed as usize],
        counts[LifecycleState::Uninstalled as usize]
    )
}

fn cmd_status(config: &[PathBuf], registry: &Registry) -> Result<(), Exit> {
    let dir = state::state_dir();
    if config.is_empty() {
        let all = state::all(&dir)?;
        if all.is_empty() {
            put(&format!("no recorded deployments in {}\n", dir.display()))?;
        }
        let mut out = String::new();
        for s in all {
            out.push_str(&render_states(
                &s.name,
                s.states.into_iter().map(|(k, v)| (k.to_string(), v)),
            ));
        }
        put(&out)?;
        return Ok(());
    }
    let loaded = load(config, registry)?;
    let desc = &loaded.compiled.descriptor;
    let saved = state::load(&dir, &desc.name)?;
    if let Some(s) = &saved {
        if s.descriptor_hash == state::descriptor_hash(desc) {
            loaded.assembly.restore_states(&s.states);
        } else {
            eprintln!("warning: recorded state belongs to a different configuration");
        }
    }
    put(&render_states(
        &desc.name,
        runtime::status(&loaded.assembly)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
    ))?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs, registry: &Registry) -> Result<(), Exit> {
    let template: Box<dyn ConfigTemplate> = match &args.config {
        Some(path) => Box::new(TextTemplate(
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )),
        None => Box::new(OpenCcmTemplate {
            parallel: !args.sequential,
        }),
    };
    if args.sizes.is_empty() {
        return Err(anyhow::anyhow!("no sizes given").into());
    }
    let points = measure_scaling(
        template.as_ref(),
        &args.sizes,
        args.clock.clock(),
        args.max_workers as usize,
        registry,
    )
    .map_err(|e| {
        let code = match &e {
            gridforge::simgrid::BenchError::Pipeline { source, .. } if source.is_diagnostic() => {
                EXIT_INVALID
            }
            gridforge::simgrid::BenchError::Runtime { .. } => EXIT_STAGE_FAILED,
            _ => EXIT_FAILURE,
        };
        Exit(code, e.into())
    })?;
    let csv = scaling_csv(&points);
    match &args.output {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))?,
        None => put(&csv)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Exit> {
    let registry = registry(cli.personalities.as_deref())?;
    match &cli.command {
        Command::Plan {
            config,
            transport: _,
            emit,
            verbose,
        } => cmd_plan(&config.config, &registry, emit.as_deref(), *verbose),
        Command::Deploy(args) => cmd_run(args, &registry, false),
        Command::Undeploy(args) => cmd_run(args, &registry, true),
        Command::Status { config } => cmd_status(config, &registry),
        Command::Bench(args) => cmd_bench(args, &registry),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
