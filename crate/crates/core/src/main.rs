use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use fixflow::analysis::{estimate_cost, render_report, AnalysisData, CostPlan, Report, ReportSpec, SubsetRun};
use fixflow::crowd::{Microtask, DEFAULT_BATCH_SIZE};
use fixflow::demo::{self, DemoConfig, DemoData};
use fixflow::evaluation::{evaluate_outputs, evaluation_task, write_records_csv, Measure};
use fixflow::events::{Clock, EventBody, EventLog, EventSink, SharedLog};
use fixflow::fix::{execute_workflow, instance_image, Annotator, AnnotatorSource, RunContext, RunRef};
use fixflow::metrics::ReferenceSet;
use fixflow::pipeline::{PipelineDefinition, PortRef};
use fixflow::project::{Project, DATA_DIR_ENV, LOG_FILE, REPORTS_DIR};
use fixflow::service::{self, http, QueueAnnotator, TaskQueue, TaskService};
use fixflow::{Error, Result};

#[derive(Parser)]
#[command(name = "fixflow", version, about = "Simulate component fixes in ML pipelines and measure their effect")]
struct Cli {
    /// Data directory holding the dataset, pipeline file, event log and reports.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "fixflow-data")]
    data_dir: PathBuf,
    /// Stamp log records with wall-clock milliseconds instead of sequence numbers.
    #[arg(long, global = true)]
    wall_clock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a pipeline file: graph, fixes and workflows.
    Validate { pipeline: PathBuf },
    /// Run a fix workflow over the dataset.
    Run(RunArgs),
    /// Collect human evaluations of a workflow's final outputs.
    Evaluate(EvaluateArgs),
    /// Render an analysis report from the event log.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Serve microtasks to live annotators over HTTP.
    Serve(ServeArgs),
    /// Estimate crowdsourcing cost from a plan file.
    Cost { plan: PathBuf },
    /// Synthetic captioning dataset.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Rebuild runs and reports from a log and check the logged report hashes.
    Replay {
        log: PathBuf,
        /// Write the rebuilt reports here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    workflow: String,
    /// oracle, sim:<epsilon>:<seed>, or queue (with `serve`).
    #[arg(long, default_value = "oracle")]
    annotator: AnnotatorSource,
    /// Seeds caption shuffling in rerank tasks (defaults to the dataset seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these instance ids.
    #[arg(long, value_delimiter = ',')]
    instances: Vec<String>,
    /// With `--annotator queue`: port of the task service started for the run.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// With `--annotator queue`: seconds to wait for each fix round.
    #[arg(long, default_value_t = 86_400)]
    timeout: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    workflow: String,
    #[arg(long, default_value = "oracle")]
    annotator: AnnotatorSource,
    #[arg(long, default_value_t = fixflow::crowd::DEFAULT_EVALUATION_RESPONSES)]
    responses: u32,
    /// Also write the quality records as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Analyze {
    /// Satisfaction and measure means of one workflow.
    Summary {
        #[arg(long)]
        workflow: String,
    },
    /// Before/after comparison against a baseline workflow.
    Compare {
        #[arg(long, default_value = demo::BASELINE)]
        baseline: String,
        #[arg(long)]
        after: String,
    },
    /// Instances whose quality dropped after the fixes.
    Nonmono {
        #[arg(long, default_value = demo::BASELINE)]
        baseline: String,
        #[arg(long)]
        after: String,
        #[arg(long, default_value = "general")]
        measure: Measure,
    },
    /// Pairwise interaction of fixes over subset workflows.
    Entangle {
        #[arg(long, default_value = demo::BASELINE)]
        baseline: String,
        /// Subset workflows; their fixes come from the pipeline file.
        /// Defaults to every subset of the demo's objects/commonsense/rerank fixes.
        #[arg(long, value_delimiter = ',')]
        workflows: Vec<String>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        measure: Option<Measure>,
    },
    /// Detector precision/recall, caption pruning and reranker statistics.
    ComponentState {
        #[arg(long, default_value = demo::COMPLETE)]
        workflow: String,
        #[arg(long, default_value = demo::DETECTOR_WORDS)]
        detector: PortRef,
    },
    /// Automatic caption scores of a workflow's final outputs.
    Metrics {
        #[arg(long)]
        workflow: String,
    },
    /// Crowdsourcing cost of a plan file.
    Cost { plan: PathBuf },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Seconds a queue-backed fix round waits for workers.
    #[arg(long, default_value_t = 86_400)]
    timeout: u64,
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Write a synthetic dataset, ground truth and pipeline file.
    Generate {
        #[arg(long, default_value_t = 200)]
        scenes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Optional TOML with non-default demo settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every workflow, evaluate, and write all reports. Starts a fresh log.
    RunAll {
        #[arg(long, default_value = "oracle")]
        annotator: AnnotatorSource,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn clock(cli: &Cli) -> Clock {
    if cli.wall_clock {
        Clock::System
    } else {
        Clock::Logical
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let clock = clock(&cli);
    let dir = cli.data_dir.clone();
    match cli.command {
        Command::Validate { pipeline } => validate(&pipeline),
        Command::Run(args) => run(&dir, clock, args).map(|_| ExitCode::SUCCESS),
        Command::Evaluate(args) => evaluate(&dir, clock, args).map(|_| ExitCode::SUCCESS),
        Command::Analyze(a) => analyze(&dir, clock, a).map(|_| ExitCode::SUCCESS),
        Command::Serve(args) => serve(&dir, clock, args).map(|_| ExitCode::SUCCESS),
        Command::Cost { plan } => {
            let report = render_report("cost", &ReportSpec::Cost { plan: load_plan(&plan)? }, &AnalysisData::default())?;
            print!("{}", report.text);
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo(DemoCommand::Generate { scenes, seed, config }) => {
            let mut c = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))?;
                    toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
                }
                None => DemoConfig::default(),
            };
            c.scenes = scenes;
            c.seed = seed;
            let data = DemoData::generate(&c);
            data.save(&dir)?;
            println!("wrote {} scenes to {}", data.scenes.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo(DemoCommand::RunAll { annotator }) => run_all(&dir, clock, annotator).map(|_| ExitCode::SUCCESS),
        Command::Replay { log, out } => replay(&log, out.as_deref()).map(|_| ExitCode::SUCCESS),
    }
}

fn validate(path: &Path) -> Result<ExitCode> {
    let def = PipelineDefinition::load(path)?;
    let problems = def.check();
    if problems.is_empty() {
        let order = def.graph.topological_order()?;
        println!(
            "ok: `{}` with {} components ({}), {} fixes, {} workflows",
            def.name,
            def.graph.components.len(),
            order.join(" -> "),
            def.fixes.len(),
            def.workflows.len()
        );
        Ok(ExitCode::SUCCESS)
    } else {
        for p in &problems {
            println!("invalid: {p}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn open_log(dir: &Path, clock: Clock) -> Result<EventLog> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    EventLog::open(&dir.join(LOG_FILE), clock)
}

fn run(dir: &Path, clock: Clock, args: RunArgs) -> Result<()> {
    let project = Project::load(dir)?;
    let workflow = project.definition.workflow(&args.workflow)?;
    let ctx = RunContext {
        seed: args.seed.unwrap_or(project.seed),
        ..RunContext::default()
    };
    let instances: Vec<_> = project
        .instances
        .iter()
        .filter(|i| args.instances.is_empty() || args.instances.contains(&i.id))
        .collect();
    let log = open_log(dir, clock)?;
    let mut sink = SharedLog::new(log);
    let mut annotator: Box<dyn Annotator> = match args.annotator {
        AnnotatorSource::Queue => {
            let service = TaskService::new(TaskQueue::default(), sink.clone());
            let mut state = http::AppState::new(service.clone());
            state.reports_dir = Some(dir.join(REPORTS_DIR));
            let addr = SocketAddr::new(args.bind, args.port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Parse(e.to_string()))?;
            let listener = rt
                .block_on(tokio::net::TcpListener::bind(addr))
                .map_err(|e| Error::Parse(format!("bind {addr}: {e}")))?;
            std::thread::spawn(move || {
                if let Err(e) = rt.block_on(http::serve_on(state, listener)) {
                    log::error!("task service stopped: {e}");
                }
            });
            println!("waiting for workers on http://{addr}");
            Box::new(QueueAnnotator::new(service, Duration::from_secs(args.timeout)))
        }
        source => Box::new(demo::annotator_for(source, project.truth.clone())?),
    };
    let mut done = 0;
    for inst in instances {
        let run = execute_workflow(&project.pipeline, inst, &workflow, annotator.as_mut(), &mut sink, &ctx)?;
        if !run.complete {
            warn!("run `{}` stopped early", run.run.id());
        }
        done += 1;
    }
    sink.lock().flush()?;
    println!("ran `{}` on {done} instances; log at {}", args.workflow, dir.join(LOG_FILE).display());
    Ok(())
}

/// Replays the project log.
fn logged_state(dir: &Path) -> Result<service::ReplayState> {
    let path = dir.join(LOG_FILE);
    if !path.exists() {
        return Ok(service::ReplayState::default());
    }
    service::replay_file(&path)
}

fn evaluate(dir: &Path, clock: Clock, args: EvaluateArgs) -> Result<()> {
    let project = Project::load(dir)?;
    let state = logged_state(dir)?;
    // latest run per instance
    let mut latest = std::collections::BTreeMap::new();
    for run in state.data.runs_of(&args.workflow) {
        latest.insert(run.run.instance_id.clone(), run);
    }
    if latest.is_empty() {
        return Err(Error::InvalidWorkflow(format!("no logged runs of `{}`; use `run` first", args.workflow)));
    }
    let tasks: Vec<(RunRef, Microtask)> = latest
        .values()
        .map(|run| {
            let caption = run.after_output().and_then(|o| o.best_caption()).unwrap_or("");
            (
                run.run.clone(),
                evaluation_task(&run.run, instance_image(run.last()), caption, args.responses),
            )
        })
        .collect();
    let mut annotator = demo::annotator_for(args.annotator, project.truth.clone())?;
    let mut log = open_log(dir, clock)?;
    let records = evaluate_outputs(&tasks, &mut annotator, &mut log)?;
    log.flush()?;
    let summary = fixflow::evaluation::partition_dataset(&records)?;
    println!(
        "`{}`: {} instances, {} satisfactory ({:.2}%)",
        args.workflow, summary.n, summary.satisfactory, summary.pct_satisfactory
    );
    if let Some(path) = args.csv {
        let rows: Vec<(String, _)> = records.into_iter().map(|r| (args.workflow.clone(), r)).collect();
        let f = std::fs::File::create(&path).map_err(|e| Error::io(path, e))?;
        write_records_csv(f, &rows)?;
    }
    Ok(())
}

fn load_plan(path: &Path) -> Result<CostPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let plan = CostPlan::from_toml(&text)?;
    estimate_cost(&plan.rows)
}

fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (ext, body) in [("csv", &report.csv), ("txt", &report.text)] {
        let path = dir.join(format!("{}.{ext}", report.name));
        std::fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn analyze(dir: &Path, clock: Clock, a: Analyze) -> Result<()> {
    let state = logged_state(dir)?;
    let (name, spec) = match a {
        Analyze::Summary { workflow } => (format!("summary-{workflow}"), ReportSpec::Summary { workflow_id: workflow }),
        Analyze::Compare { baseline, after } => (format!("compare-{after}"), ReportSpec::Compare { baseline, after }),
        Analyze::Nonmono {
            baseline,
            after,
            measure,
        } => (
            format!("nonmono-{after}"),
            ReportSpec::NonMonotonic {
                baseline,
                after,
                measure,
            },
        ),
        Analyze::Entangle {
            baseline,
            workflows,
            threshold,
            measure,
        } => {
            let subsets = if workflows.is_empty() {
                demo::entanglement_subsets()
                    .into_iter()
                    .filter(|s| !s.is_empty())
                    .map(|s| SubsetRun {
                        fixes: s.iter().map(|f| f.to_string()).collect(),
                        workflow_id: demo::subset_workflow(&s),
                    })
                    .collect()
            } else {
                let def = PipelineDefinition::load(&dir.join(demo::PIPELINE_FILE))?;
                workflows
                    .iter()
                    .map(|w| {
                        Ok(SubsetRun {
                            fixes: def.workflow(w)?.fixes.into_iter().map(|f| f.id).collect(),
                            workflow_id: w.clone(),
                        })
                    })
                    .collect::<Result<_>>()?
            };
            (
                "entanglement".to_string(),
                ReportSpec::Entanglement {
                    baseline,
                    subsets,
                    threshold,
                    measure,
                },
            )
        }
        Analyze::ComponentState { workflow, detector } => (
            "component-state".to_string(),
            ReportSpec::ComponentState {
                workflow_id: workflow,
                detector,
            },
        ),
        Analyze::Metrics { workflow } => {
            let project = Project::load(dir)?;
            let references = project
                .instances
                .iter()
                .filter(|i| state.data.runs_of(&workflow).any(|r| r.run.instance_id == i.id))
                .map(|i| ReferenceSet::new(i.id.clone(), i.references.clone().unwrap_or_default()))
                .collect::<Result<Vec<_>>>()?;
            (
                format!("metrics-{workflow}"),
                ReportSpec::Metrics {
                    workflow_id: workflow,
                    references,
                },
            )
        }
        Analyze::Cost { plan } => ("cost".to_string(), ReportSpec::Cost { plan: load_plan(&plan)? }),
    };
    let report = render_report(&name, &spec, &state.data)?;
    write_report(&dir.join(REPORTS_DIR), &report)?;
    let mut log = open_log(dir, clock)?;
    log.emit(EventBody::ReportRef {
        name: name.clone(),
        sha256: report.sha256(),
        spec,
    })?;
    log.flush()?;
    print!("{}", report.text);
    info!("report `{name}` written to {}", dir.join(REPORTS_DIR).display());
    Ok(())
}

fn serve(dir: &Path, clock: Clock, args: ServeArgs) -> Result<()> {
    let log = SharedLog::new(open_log(dir, clock)?);
    let service = TaskService::new(TaskQueue::new(args.batch_size)?, log);
    let mut state = http::AppState::new(service);
    match Project::load(dir) {
        Ok(p) => state.project = Some(Arc::new(p)),
        Err(e) => warn!("no project in {} ({e}); workflow runs are disabled", dir.display()),
    }
    state.reports_dir = Some(dir.join(REPORTS_DIR));
    state.queue_timeout = Duration::from_secs(args.timeout);
    let addr = SocketAddr::new(args.bind, args.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Parse(e.to_string()))?;
    println!("serving on http://{addr}");
    rt.block_on(http::serve(state, addr))
        .map_err(|e| Error::Parse(format!("server: {e}")))
}

fn run_all(dir: &Path, clock: Clock, source: AnnotatorSource) -> Result<()> {
    let data = DemoData::load(dir)?;
    let mut log = EventLog::create(&dir.join(LOG_FILE), clock)?;
    let out = demo::run_all(&data, source, &mut log, Some(&dir.join(REPORTS_DIR)))?;
    log.flush()?;
    println!("{:<28} {:>10} {:>14}", "workflow", "instances", "satisfactory");
    for wf in &data.definition.workflows {
        if let Some(s) = out.summaries.get(&wf.id) {
            println!("{:<28} {:>10} {:>13.2}%", wf.id, s.n, s.pct_satisfactory);
        }
    }
    println!("{} reports in {}", out.reports.len(), dir.join(REPORTS_DIR).display());
    Ok(())
}

fn replay(path: &Path, out: Option<&Path>) -> Result<()> {
    let state = service::replay_file(path)?;
    println!(
        "{} runs, {} evaluation tasks, {} quality records, {} reports verified",
        state.data.runs.len(),
        state.evaluations.len(),
        state.data.records.values().map(|m| m.len()).sum::<usize>(),
        state.reports.len()
    );
    if let Some(dir) = out {
        for r in &state.reports {
            write_report(dir, &r.report)?;
        }
    }
    Ok(())
}
