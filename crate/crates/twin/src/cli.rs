//! Command-line interface. Exit codes: 0 success, 1 validation or usage
//! failure, 2 internal error.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaintwin_core::analytics::CentralityMeasure;
use chaintwin_core::feedback::{NewPrediction, ParamId};
use chaintwin_core::graph::{NodeId, Tick, WeightKey};
use chaintwin_core::kpi::KpiReport;
use chaintwin_core::optimizer::FlowPlan;
use chaintwin_core::simulation::{Scenario, ScenarioPatch};
use chaintwin_core::{EdgeId, LayerKind, SourceKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::Config;
use crate::engine::{
    BatchReport, Engine, GraphQuery, PathAlgorithm, PathQuery, PlanSource, RunMode, RunRecord, RunRequest, StressQuery,
    WhatIfRequest,
};
use crate::error::{EngineError, Result};
use crate::stream::event_lines;
use crate::tables;

#[derive(Debug, Parser)]
#[command(name = "chaintwin", version, about = "Supply-chain digital twin")]
pub struct Cli {
    /// Data directory [env: CHAINTWIN_DATA_DIR; default: twin-data]
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Configuration file [default: <data-dir>/twin.toml]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data directory.
    Init,
    /// Bootstrap nodes and edges from CSV tables.
    LoadGraph {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Tick the elements become valid at.
        #[arg(long, default_value_t = 0)]
        tick: Tick,
    },
    /// Ingest newline-delimited JSON events; `-` reads standard input.
    Ingest {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Source::Iot)]
        source: Source,
        /// Events per journaled batch.
        #[arg(long, default_value_t = 1000)]
        batch_size: usize,
    },
    /// Register or list scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Simulate a scenario and write its trace.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Flow plan to execute: a plan file or the id of an optimize run.
        #[arg(long)]
        plan: Option<String>,
        /// Directory receiving trace.json and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan flows with min-cost flow and execute the plan.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
        /// File receiving the plan.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a scenario with a patched copy.
    Whatif {
        /// Registered scenario id or scenario file.
        #[arg(long)]
        base: String,
        /// Scenario patch file (JSON).
        #[arg(long)]
        patch: PathBuf,
        #[arg(long)]
        horizon: Tick,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        snapshot_tick: Option<Tick>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural analytics on a snapshot.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
        #[command(flatten)]
        graph: GraphArgs,
        /// File receiving the JSON result instead of standard output.
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// KPI report of a completed run.
    Report {
        /// Run id; the newest completed run by default.
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        from: Option<Tick>,
        #[arg(long)]
        to: Option<Tick>,
        /// Window length for a per-window table.
        #[arg(long)]
        stride: Option<Tick>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graph snapshot as JSON.
    Snapshot {
        #[arg(long)]
        tick: Option<Tick>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alerts after a cursor, or acknowledge one.
    #[command(subcommand)]
    Alerts(AlertsCmd),
    /// Calibration state, or acknowledge a falsified parameter.
    #[command(subcommand)]
    Calibration(CalibrationCmd),
    /// Record predictions from a JSON file holding one or a list.
    Predict { file: PathBuf },
    /// List runs, or show one.
    Runs {
        id: Option<String>,
        /// Print the run's trace instead of its record.
        #[arg(long, requires = "id", conflicts_with = "plan")]
        trace: bool,
        /// Print the run's flow plan instead of its record.
        #[arg(long, requires = "id")]
        plan: bool,
    },
    /// Data directory summary.
    Status,
    /// Serve the HTTP API.
    Serve {
        /// Address to bind [env: CHAINTWIN_BIND]
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Source {
    Iot,
    Erp,
    Logistics,
}

impl From<Source> for SourceKind {
    fn from(s: Source) -> Self {
        match s {
            Source::Iot => SourceKind::Iot,
            Source::Erp => SourceKind::Erp,
            Source::Logistics => SourceKind::Logistics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Registered scenario id or scenario file (registered on use).
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    horizon: Tick,
    /// Seed of every random draw.
    #[arg(long)]
    seed: u64,
    /// Timeline tick to simulate; the newest by default.
    #[arg(long)]
    snapshot_tick: Option<Tick>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Snapshot tick; the newest by default.
    #[arg(long, global = true)]
    tick: Option<Tick>,
    /// Restrict to one layer.
    #[arg(long, global = true, value_parser = parse_layer)]
    layer: Option<LayerKind>,
}

fn parse_layer(s: &str) -> std::result::Result<LayerKind, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Register a scenario file.
    Register {
        file: PathBuf,
    },
    List,
    Show {
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    Centrality {
        #[arg(long, default_value = "betweenness")]
        measure: String,
        #[arg(long)]
        top_k: Option<usize>,
    },
    Communities,
    Paths {
        #[arg(long, value_enum, default_value_t = Algorithm::Dijkstra)]
        algorithm: Algorithm,
        #[arg(long)]
        src: Option<String>,
        #[arg(long)]
        dst: Option<String>,
        /// cost, time or carbon.
        #[arg(long, default_value = "cost")]
        weight: String,
    },
    /// Rank elements by the impact of removing them.
    Stress {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        horizon: Tick,
        #[arg(long)]
        seed: u64,
        /// Node ids to remove one at a time; every node by default.
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        edges: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Algorithm {
    Dijkstra,
    BellmanFord,
    FloydWarshall,
}

#[derive(Debug, Subcommand)]
pub enum AlertsCmd {
    List {
        #[arg(long, default_value_t = 0)]
        since: u64,
        #[arg(long, default_value_t = 100)]
        limit: usize,
    },
    Ack {
        id: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum CalibrationCmd {
    Show,
    /// Acknowledge `subject/measure`.
    Ack {
        param: String,
    },
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => EngineError::Malformed(format!("no such file {}", path.display())),
        _ => EngineError::io(format!("reading {}", path.display()), e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| EngineError::Malformed(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| EngineError::Internal(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| EngineError::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| EngineError::io(format!("writing {}", path.display()), e))
}

/// Writes JSON to `out`, or to standard output.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let bytes = to_json(value)?;
    match out {
        Some(p) => write_out(p, &bytes),
        None => io::stdout()
            .write_all(&bytes)
            .map_err(|e| EngineError::io("writing standard output", e)),
    }
}

/// A scenario argument naming an existing file registers that file.
fn scenario_id(engine: &mut Engine, arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        let s: Scenario = read_json(path)?;
        engine.register_scenario(s)
    } else {
        engine.scenario(arg)?;
        Ok(arg.to_string())
    }
}

/// The deterministic part of a run record: no run id.
#[derive(Debug, Serialize)]
struct RunReport<'a> {
    scenario: &'a str,
    mode: RunMode,
    horizon: Tick,
    seed: u64,
    snapshot_tick: Tick,
    summary: &'a Option<chaintwin_core::simulation::TraceSummary>,
    cost: &'a Option<crate::engine::RunCost>,
    kpis: &'a Option<KpiReport>,
}

impl<'a> RunReport<'a> {
    fn of(r: &'a RunRecord) -> Self {
        Self {
            scenario: &r.request.scenario,
            mode: r.request.mode,
            horizon: r.request.horizon,
            seed: r.request.seed,
            snapshot_tick: r.snapshot_tick,
            summary: &r.summary,
            cost: &r.cost,
            kpis: &r.kpis,
        }
    }
}

fn print_run(r: &RunRecord) {
    println!(
        "run {} ({:?}) of scenario `{}`",
        r.id, r.request.mode, r.request.scenario
    );
    println!(
        "  horizon {}  seed {}  snapshot tick {}",
        r.request.horizon, r.request.seed, r.snapshot_tick
    );
    if let Some(c) = &r.cost {
        println!("  realized cost J      {:.6}", c.realized);
        if let Some(p) = c.planned {
            println!("  planned cost J^      {p:.6}");
        }
        if let Some(n) = c.network_objective {
            println!("  network objective    {n:.6}");
        }
        if let Some(d) = c.discrepancy {
            println!("  discrepancy J - J^   {d:.6}");
        }
        println!("  plan violations      {}", c.violations);
    }
    if let Some(k) = &r.kpis {
        println!("  service level        {:.4}", k.service_level);
        println!("  fill rate            {:.4}", k.fill_rate);
        println!("  demand / unmet       {} / {}", k.demand, k.unmet);
        println!("  carbon               {:.4}", k.carbon.total);
    }
}

fn print_batch(b: &BatchReport) {
    println!(
        "events {}: accepted {}, parked {}, dropped {}, rejected {}; deltas {}, alerts {}",
        b.total,
        b.accepted,
        b.parked,
        b.dropped,
        b.rejected,
        b.deltas,
        b.alerts.len()
    );
}

fn kpi_table(rows: &[KpiReport]) -> String {
    let mut s = String::from("from\tto\tservice\tfill\tdemand\tunmet\tcost\tcarbon\tmean_lead\n");
    for k in rows {
        let lead = k.lead_time.mean.map_or("-".to_string(), |m| format!("{m:.3}"));
        s.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{:.4}\t{:.4}\t{}\n",
            k.window.from,
            k.window.to,
            k.service_level,
            k.fill_rate,
            k.demand,
            k.unmet,
            k.total_cost,
            k.carbon.total,
            lead
        ));
    }
    s
}

fn run_request(engine: &mut Engine, a: &RunArgs, mode: RunMode, plan: Option<PlanSource>) -> Result<RunRequest> {
    Ok(RunRequest {
        scenario: scenario_id(engine, &a.scenario)?,
        mode,
        horizon: a.horizon,
        seed: a.seed,
        snapshot_tick: a.snapshot_tick,
        plan,
    })
}

fn execute(cli: Cli) -> Result<()> {
    let bind = match &cli.command {
        Command::Serve { bind } => bind.clone(),
        _ => None,
    };
    let config = Config::resolve(cli.config.as_deref(), cli.data_dir.as_deref(), bind.as_deref())?;
    match cli.command {
        Command::Init => {
            let dir = Engine::init(&config)?;
            println!("initialized {}", dir.display());
            Ok(())
        }
        Command::Serve { .. } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| EngineError::io("starting runtime", e))?;
            rt.block_on(crate::api::serve(config))
        }
        command => {
            let mut engine = Engine::open(config)?;
            dispatch(&mut engine, command)
        }
    }
}

fn dispatch(engine: &mut Engine, command: Command) -> Result<()> {
    match command {
        Command::Init | Command::Serve { .. } => unreachable!("handled before opening"),
        Command::LoadGraph { nodes, edges, tick } => {
            let n = tables::read_nodes(
                File::open(&nodes).map_err(|e| EngineError::io(format!("opening {}", nodes.display()), e))?,
            )?;
            let e = tables::read_edges(
                File::open(&edges).map_err(|e| EngineError::io(format!("opening {}", edges.display()), e))?,
            )?;
            let r = engine.load_graph(n, e, tick)?;
            println!("loaded {} nodes and {} edges at tick {}", r.nodes, r.edges, r.tick);
        }
        Command::Ingest {
            file,
            source,
            batch_size,
        } => {
            let text = if file.as_os_str() == "-" {
                io::read_to_string(io::stdin()).map_err(|e| EngineError::io("reading standard input", e))?
            } else {
                String::from_utf8(read_file(&file)?)
                    .map_err(|e| EngineError::Malformed(format!("{} is not UTF-8: {e}", file.display())))?
            };
            let lines = event_lines(&text);
            let mut total = BatchReport::default();
            let size = batch_size.max(1);
            for (k, chunk) in lines.chunks(size).enumerate() {
                let b = engine.ingest(source.into(), chunk.to_vec())?;
                total.total += b.total;
                total.accepted += b.accepted;
                total.parked += b.parked;
                total.dropped += b.dropped;
                total.rejected += b.rejected;
                total.deltas += b.deltas;
                total.alerts.extend(b.alerts);
                for r in &b.rejections {
                    eprintln!("rejected event {}: {}", k * size + r.line, r.reason);
                }
            }
            print_batch(&total);
        }
        Command::Scenario(ScenarioCmd::Register { file }) => {
            let s: Scenario = read_json(&file)?;
            println!("registered {}", engine.register_scenario(s)?);
        }
        Command::Scenario(ScenarioCmd::Show { id }) => emit(engine.scenario(&id)?, None)?,
        Command::Scenario(ScenarioCmd::List) => {
            for (id, s) in engine.scenarios() {
                println!("{id}\t{} disturbances", s.disturbances.len());
            }
        }
        Command::Simulate { run, plan, out } => {
            let plan = match plan {
                None => None,
                Some(p) if Path::new(&p).is_file() => {
                    Some(PlanSource::Inline(Box::new(read_json::<FlowPlan>(Path::new(&p))?)))
                }
                Some(id) => Some(PlanSource::Run(id)),
            };
            let req = run_request(engine, &run, RunMode::Simulate, plan)?;
            let record = engine.run(req)?;
            if let Some(dir) = out {
                write_out(&dir.join("trace.json"), &to_json(&engine.run_trace(&record.id)?)?)?;
                write_out(&dir.join("report.json"), &to_json(&RunReport::of(&record))?)?;
            }
            print_run(&record);
        }
        Command::Optimize { run, out } => {
            let req = run_request(engine, &run, RunMode::Optimize, None)?;
            let record = engine.run(req)?;
            if let Some(path) = out {
                write_out(&path, &to_json(&engine.run_plan(&record.id)?)?)?;
            }
            print_run(&record);
        }
        Command::Whatif {
            base,
            patch,
            horizon,
            seed,
            snapshot_tick,
            out,
        } => {
            let base = scenario_id(engine, &base)?;
            let patch: ScenarioPatch = read_json(&patch)?;
            let doc = engine.whatif(&WhatIfRequest {
                base,
                patch,
                horizon,
                seed,
                snapshot_tick,
            })?;
            emit(&doc, out.as_deref())?;
        }
        Command::Analyze { what, graph, out } => {
            let q = GraphQuery {
                tick: graph.tick,
                layer: graph.layer,
            };
            let out = out.as_deref();
            match what {
                AnalyzeCmd::Centrality { measure, top_k } => {
                    let m: CentralityMeasure = measure.parse().map_err(EngineError::from)?;
                    emit(&engine.centrality(&q, m, top_k), out)?;
                }
                AnalyzeCmd::Communities => emit(&engine.communities(&q)?, out)?,
                AnalyzeCmd::Paths {
                    algorithm,
                    src,
                    dst,
                    weight,
                } => {
                    let weight: WeightKey = weight.parse().map_err(EngineError::Malformed)?;
                    let algorithm = match algorithm {
                        Algorithm::Dijkstra => PathAlgorithm::Dijkstra,
                        Algorithm::BellmanFord => PathAlgorithm::BellmanFord,
                        Algorithm::FloydWarshall => PathAlgorithm::FloydWarshall,
                    };
                    let p = PathQuery {
                        algorithm,
                        src: src.map(NodeId::from),
                        dst: dst.map(NodeId::from),
                        weight,
                    };
                    emit(&engine.paths(&q, &p)?, out)?;
                }
                AnalyzeCmd::Stress {
                    scenario,
                    horizon,
                    seed,
                    nodes,
                    edges,
                } => {
                    let s = StressQuery {
                        scenario: scenario_id(engine, &scenario)?,
                        horizon,
                        seed,
                        nodes: nodes.into_iter().map(NodeId::from).collect(),
                        edges: edges.into_iter().map(EdgeId::from).collect(),
                    };
                    emit(&engine.stress(&q, &s)?, out)?;
                }
            }
        }
        Command::Report {
            run,
            from,
            to,
            stride,
            format,
            out,
        } => {
            let rows = match stride {
                Some(stride) => engine.kpi_series(run.as_deref(), stride)?,
                None => vec![engine.kpis(run.as_deref(), from, to)?],
            };
            match format {
                Format::Json if stride.is_some() => emit(&crate::api::Items { items: rows }, out.as_deref())?,
                Format::Json => emit(&rows[0], out.as_deref())?,
                Format::Table => {
                    let table = kpi_table(&rows);
                    match out {
                        Some(p) => write_out(&p, table.as_bytes())?,
                        None => print!("{table}"),
                    }
                }
            }
        }
        Command::Snapshot { tick, out } => emit(&engine.snapshot_doc(tick), out.as_deref())?,
        Command::Alerts(AlertsCmd::List { since, limit }) => emit(&engine.alerts_since(since, limit), None)?,
        Command::Alerts(AlertsCmd::Ack { id }) => emit(&engine.acknowledge_alert(id)?, None)?,
        Command::Calibration(CalibrationCmd::Show) => emit(&engine.calibration_doc(), None)?,
        Command::Calibration(CalibrationCmd::Ack { param }) => {
            let (subject, measure) = param
                .rsplit_once('/')
                .ok_or_else(|| EngineError::Malformed(format!("`{param}` is not `subject/measure`")))?;
            emit(&engine.acknowledge_param(ParamId::new(subject, measure))?, None)?;
        }
        Command::Predict { file } => {
            let value: serde_json::Value = read_json(&file)?;
            let list: Vec<NewPrediction> = match value {
                serde_json::Value::Array(_) => serde_json::from_value(value),
                other => serde_json::from_value(other).map(|p| vec![p]),
            }
            .map_err(|e| EngineError::Malformed(format!("{}: {e}", file.display())))?;
            for p in list {
                println!("prediction {}", engine.record_prediction(p)?);
            }
        }
        Command::Runs {
            id: Some(id),
            trace: true,
            ..
        } => emit(&engine.run_trace(&id)?, None)?,
        Command::Runs {
            id: Some(id),
            plan: true,
            ..
        } => emit(&engine.run_plan(&id)?, None)?,
        Command::Runs { id: Some(id), .. } => emit(engine.run_record(&id)?, None)?,
        Command::Runs { id: None, .. } => {
            for r in engine.runs() {
                println!("{}\t{:?}\t{:?}\t{}", r.id, r.status, r.request.mode, r.request.scenario);
            }
        }
        Command::Status => emit(&engine.status(), None)?,
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}
