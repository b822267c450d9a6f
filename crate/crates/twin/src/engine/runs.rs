//! Scenario registry, the run registry and what-if comparisons.

use std::fs;

use chaintwin_core::graph::{GraphSnapshot, Tick};
use chaintwin_core::ingestion::Severity;
use chaintwin_core::kpi::{compute_kpis, KpiDelta, KpiReport, KpiWindow};
use chaintwin_core::optimizer::{optimize, validate_plan, FlowPlan};
use chaintwin_core::simulation::{
    evaluate_cost, run_on_snapshot, what_if, CostModel, PolicySpec, Scenario, ScenarioPatch, SimConfig, SimTrace,
    TraceSummary,
};
use serde::{Deserialize, Serialize};

use super::{check_id, Engine};
use crate::error::{EngineError, Result};
use crate::store::{write_atomic, RUN_DIR, SCENARIO_DIR};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Greedy policy, or the given plan when one is supplied.
    #[default]
    Simulate,
    /// Plan with min-cost flow, then execute the plan.
    Optimize,
}

/// A plan given by the id of an earlier optimize run, or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    Run(String),
    Inline(Box<FlowPlan>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub scenario: String,
    #[serde(default)]
    pub mode: RunMode,
    pub horizon: Tick,
    #[serde(default)]
    pub seed: u64,
    /// Timeline tick simulated; the newest tick when absent.
    #[serde(default)]
    pub snapshot_tick: Option<Tick>,
    #[serde(default)]
    pub plan: Option<PlanSource>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCost {
    /// Cost of the simulated trace.
    pub realized: f64,
    /// Objective the executed plan promised.
    pub planned: Option<f64>,
    /// Min-cost-flow objective on the time-expanded network.
    pub network_objective: Option<f64>,
    /// `realized − planned`.
    pub discrepancy: Option<f64>,
    /// Planned flows clipped during execution.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub status: RunStatus,
    pub request: RunRequest,
    pub snapshot_tick: Tick,
    pub summary: Option<TraceSummary>,
    pub kpis: Option<KpiReport>,
    pub cost: Option<RunCost>,
    pub error: Option<String>,
}

/// Everything a run needs, detached from the engine so it can execute
/// without holding it.
#[derive(Clone, Debug)]
pub struct RunJob {
    pub id: String,
    pub request: RunRequest,
    pub snapshot: GraphSnapshot,
    pub scenario: Scenario,
    pub plan: Option<FlowPlan>,
    pub cost: CostModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub trace: SimTrace,
    pub plan: Option<FlowPlan>,
    pub kpis: KpiReport,
    pub cost: RunCost,
}

impl RunJob {
    pub fn config(&self) -> SimConfig {
        let mut c = SimConfig::new(self.request.horizon, self.request.seed);
        c.snapshot_tick = self.snapshot.tick();
        c
    }

    /// Pure: the same job always produces the same output.
    pub fn execute(&self) -> Result<RunOutput> {
        let config = self.config();
        let (s, g, cost) = (&self.scenario, &self.snapshot, &self.cost);
        let (trace, plan, run_cost) = match (self.request.mode, &self.plan) {
            (RunMode::Simulate, None) => {
                let trace = run_on_snapshot(g, s, &config, &PolicySpec::Greedy)?;
                let realized = evaluate_cost(&trace, cost)?.total;
                let cost = RunCost {
                    realized,
                    planned: None,
                    network_objective: None,
                    discrepancy: None,
                    violations: 0,
                };
                (trace, None, cost)
            }
            (RunMode::Simulate, Some(plan)) => {
                let v = validate_plan(plan, g, s, &config, cost)?;
                let cost = RunCost {
                    realized: v.realized,
                    planned: Some(v.planned),
                    network_objective: None,
                    discrepancy: Some(v.discrepancy),
                    violations: v.violations.len(),
                };
                (v.trace, None, cost)
            }
            (RunMode::Optimize, _) => {
                let planned = optimize(g, s, self.request.horizon, cost)?;
                let v = validate_plan(&planned.plan, g, s, &config, cost)?;
                let cost = RunCost {
                    realized: v.realized,
                    planned: Some(v.planned),
                    network_objective: Some(planned.network_objective),
                    discrepancy: Some(v.discrepancy),
                    violations: v.violations.len(),
                };
                (v.trace, Some(planned.plan), cost)
            }
        };
        let kpis = compute_kpis(&trace, g, cost, KpiWindow::full(self.request.horizon))?;
        Ok(RunOutput {
            trace,
            plan,
            kpis,
            cost: run_cost,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    /// Registered scenario id.
    pub base: String,
    #[serde(default)]
    pub patch: ScenarioPatch,
    pub horizon: Tick,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshot_tick: Option<Tick>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfDoc {
    pub base: String,
    pub horizon: Tick,
    pub seed: u64,
    pub snapshot_tick: Tick,
    pub base_kpis: KpiReport,
    pub patched_kpis: KpiReport,
    pub delta: KpiDelta,
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| EngineError::Internal(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

impl Engine {
    pub fn scenarios(&self) -> impl Iterator<Item = (&String, &Scenario)> {
        self.scenarios.iter()
    }

    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios
            .get(id)
            .ok_or_else(|| EngineError::not_found("scenario", id))
    }

    /// Registers `scenario` under its name. Registering an identical
    /// document again is a no-op; a different document under a taken name
    /// is a conflict.
    pub fn register_scenario(&mut self, scenario: Scenario) -> Result<String> {
        let id = scenario.name.clone();
        check_id("scenario", &id)?;
        scenario.validate(&self.timeline.latest(), 0)?;
        if let Some(existing) = self.scenarios.get(&id) {
            if *existing == scenario {
                return Ok(id);
            }
            return Err(EngineError::Conflict(format!(
                "scenario `{id}` is registered with a different body"
            )));
        }
        let path = self.dir.join(SCENARIO_DIR).join(format!("{id}.json"));
        write_atomic(&path, &to_json(&scenario)?)?;
        self.scenarios.insert(id.clone(), scenario);
        Ok(id)
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.values()
    }

    pub fn run_record(&self, id: &str) -> Result<&RunRecord> {
        self.runs.get(id).ok_or_else(|| EngineError::not_found("run", id))
    }

    /// Whether the request fits the synchronous budget.
    pub fn fits_sync_budget(&self, horizon: Tick, snapshot_tick: Option<Tick>) -> bool {
        let tick = snapshot_tick.unwrap_or_else(|| self.timeline.max_tick());
        let b = &self.config.budgets;
        horizon <= b.sync_max_horizon && self.timeline.snapshot_at(tick).node_count() <= b.sync_max_nodes
    }

    /// Validates a request and registers it as running.
    pub fn prepare_run(&mut self, request: RunRequest) -> Result<RunJob> {
        let scenario = self.scenario(&request.scenario)?.clone();
        if request.mode == RunMode::Optimize && request.plan.is_some() {
            return Err(EngineError::Malformed("optimize runs compute their own plan".into()));
        }
        let tick = request.snapshot_tick.unwrap_or_else(|| self.timeline.max_tick());
        let snapshot = self.timeline.snapshot_at(tick);
        scenario.validate(&snapshot, request.horizon)?;
        let plan = match &request.plan {
            None => None,
            Some(PlanSource::Inline(p)) => Some((**p).clone()),
            Some(PlanSource::Run(id)) => Some(self.run_plan(id)?),
        };
        let n = self
            .runs
            .keys()
            .filter_map(|k| k.strip_prefix("run-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        let id = format!("run-{:06}", n + 1);
        let record = RunRecord {
            id: id.clone(),
            status: RunStatus::Running,
            request: request.clone(),
            snapshot_tick: tick,
            summary: None,
            kpis: None,
            cost: None,
            error: None,
        };
        self.persist_run(&record)?;
        self.runs.insert(id.clone(), record);
        Ok(RunJob {
            id,
            request,
            snapshot,
            scenario,
            plan,
            cost: self.config.cost.clone(),
        })
    }

    /// Stores the outcome of a job and raises the run alert.
    pub fn finish_run(&mut self, job: &RunJob, outcome: Result<RunOutput>) -> Result<RunRecord> {
        let mut record = self.run_record(&job.id)?.clone();
        match outcome {
            Ok(out) => {
                let base = self.dir.join(RUN_DIR);
                write_atomic(&base.join(format!("{}.trace.json", job.id)), &to_json(&out.trace)?)?;
                write_atomic(
                    &base.join(format!("{}.snapshot.json", job.id)),
                    &to_json(&job.snapshot)?,
                )?;
                if let Some(plan) = &out.plan {
                    write_atomic(&base.join(format!("{}.plan.json", job.id)), &to_json(plan)?)?;
                }
                record.status = RunStatus::Completed;
                record.summary = Some(out.trace.summary.clone());
                let below = out.kpis.demand > 0 && out.kpis.service_level < self.config.run_alerts.service_level_below;
                if below {
                    let message = format!(
                        "run {} of `{}` served {} of {} units on time (service level {:.4})",
                        job.id, job.request.scenario, out.kpis.on_time, out.kpis.demand, out.kpis.service_level
                    );
                    self.raise(
                        "unmet_demand",
                        &job.id,
                        record.snapshot_tick,
                        Severity::Critical,
                        message,
                    )?;
                }
                record.kpis = Some(out.kpis);
                record.cost = Some(out.cost);
            }
            Err(e) => {
                record.status = RunStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        self.persist_run(&record)?;
        self.runs.insert(record.id.clone(), record.clone());
        Ok(record)
    }

    /// Prepare, execute and finish in one call.
    pub fn run(&mut self, request: RunRequest) -> Result<RunRecord> {
        let job = self.prepare_run(request)?;
        let outcome = job.execute();
        let failed = outcome.as_ref().err().map(|e| (e.is_validation(), e.to_string()));
        let record = self.finish_run(&job, outcome)?;
        match failed {
            Some((true, msg)) => Err(EngineError::invariant("run_failed", msg)),
            Some((false, msg)) => Err(EngineError::Internal(msg)),
            None => Ok(record),
        }
    }

    fn persist_run(&self, record: &RunRecord) -> Result<()> {
        let path = self.dir.join(RUN_DIR).join(format!("{}.run.json", record.id));
        write_atomic(&path, &to_json(record)?)
    }

    fn run_file(&self, id: &str, kind: &str) -> Result<Vec<u8>> {
        self.run_record(id)?;
        let path = self.dir.join(RUN_DIR).join(format!("{id}.{kind}.json"));
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => EngineError::not_found("run artifact", format!("{id}.{kind}")),
            _ => EngineError::io(format!("reading {}", path.display()), e),
        })
    }

    pub fn run_plan(&self, id: &str) -> Result<FlowPlan> {
        serde_json::from_slice(&self.run_file(id, "plan")?).map_err(|e| EngineError::Internal(e.to_string()))
    }

    pub fn run_trace(&self, id: &str) -> Result<SimTrace> {
        serde_json::from_slice(&self.run_file(id, "trace")?).map_err(|e| EngineError::Internal(e.to_string()))
    }

    pub fn run_snapshot(&self, id: &str) -> Result<GraphSnapshot> {
        serde_json::from_slice(&self.run_file(id, "snapshot")?).map_err(|e| EngineError::Internal(e.to_string()))
    }

    /// Base scenario and base plus patch on the same snapshot and seed.
    pub fn whatif(&self, req: &WhatIfRequest) -> Result<WhatIfDoc> {
        if !self.fits_sync_budget(req.horizon, req.snapshot_tick) {
            return Err(EngineError::invariant(
                "whatif_budget",
                format!(
                    "what-if runs synchronously only up to horizon {} and {} nodes; submit a run instead",
                    self.config.budgets.sync_max_horizon, self.config.budgets.sync_max_nodes
                ),
            ));
        }
        let base = self.scenario(&req.base)?;
        let tick = req.snapshot_tick.unwrap_or_else(|| self.timeline.max_tick());
        let mut config = SimConfig::new(req.horizon, req.seed);
        config.snapshot_tick = tick;
        let snapshot = self.timeline.snapshot_at(tick);
        base.patched(&req.patch).validate(&snapshot, req.horizon)?;
        let w = what_if(
            &self.timeline,
            base,
            &req.patch,
            &config,
            &PolicySpec::Greedy,
            &self.config.cost,
        )?;
        Ok(WhatIfDoc {
            base: req.base.clone(),
            horizon: req.horizon,
            seed: req.seed,
            snapshot_tick: tick,
            base_kpis: w.base_kpis,
            patched_kpis: w.patched_kpis,
            delta: w.delta,
        })
    }
}
