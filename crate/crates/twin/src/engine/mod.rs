//! The engine handle: one per data directory.
//!
//! Every mutation is journaled before it is applied. Opening a data
//! directory replays the journal into fresh state, which recomputes
//! ingestion and recalibration deterministically from the raw batches.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chaintwin_core::feedback::{CalibrationState, Discrepancy, NewPrediction, ParamId, PredictionStore};
use chaintwin_core::graph::{DeltaOp, Tick};
use chaintwin_core::ingestion::{AlertEvent, BatchOutcome, Pipeline, Rejection, Severity};
use chaintwin_core::simulation::Scenario;
use chaintwin_core::{EdgeRecord, EntityNode, SourceKind, Timeline};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, CONFIG_FILE};
use crate::error::{EngineError, Result};
use crate::store::{
    write_atomic, DirLock, Entry, Journal, LoggedWriter, Recovery, AUDIT_FILE, JOURNAL_FILE, RUN_DIR, SCENARIO_DIR,
};

mod query;
mod runs;

pub use query::{
    CalibrationDoc, GraphQuery, Page, ParamDoc, PathAlgorithm, PathQuery, PathsDoc, SnapshotDoc, StressQuery,
};
pub use runs::{
    PlanSource, RunCost, RunJob, RunMode, RunOutput, RunRecord, RunRequest, RunStatus, WhatIfDoc, WhatIfRequest,
};

/// Result of one ingested batch. `accepted + parked + dropped + rejected`
/// equals `total`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub accepted: usize,
    pub parked: usize,
    pub dropped: usize,
    pub rejected: usize,
    /// Graph deltas committed, recalibration included.
    pub deltas: usize,
    pub parked_by_reason: BTreeMap<String, usize>,
    pub dropped_by_reason: BTreeMap<String, usize>,
    pub rejections: Vec<Rejection>,
    pub alerts: Vec<AlertEvent>,
    pub discrepancies: Vec<Discrepancy>,
    pub falsified: Vec<ParamId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edges: usize,
    pub tick: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusDoc {
    pub data_dir: PathBuf,
    pub journal_entries: u64,
    pub deltas: usize,
    pub nodes: usize,
    pub edges: usize,
    pub max_tick: Tick,
    pub horizon: Tick,
    pub alerts: usize,
    pub scenarios: usize,
    pub runs: usize,
    pub snapshot_hash: String,
    pub recovery: Recovery,
}

pub struct Engine {
    config: Config,
    dir: PathBuf,
    _lock: DirLock,
    journal: Journal,
    timeline: Timeline,
    pipeline: Pipeline,
    predictions: PredictionStore,
    calibration: CalibrationState,
    scenarios: BTreeMap<String, Scenario>,
    runs: BTreeMap<String, RunRecord>,
    audit: BufWriter<File>,
    recovery: Recovery,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Identifiers double as file names.
pub(crate) fn check_id(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(EngineError::Malformed(format!(
            "{kind} id `{id}` must be 1-128 characters of [A-Za-z0-9._-] not starting with `.`"
        )))
    }
}

impl Engine {
    /// Creates the data directory layout. Existing content is kept.
    pub fn init(config: &Config) -> Result<PathBuf> {
        let dir = &config.data_dir;
        for d in [dir.clone(), dir.join(SCENARIO_DIR), dir.join(RUN_DIR)] {
            fs::create_dir_all(&d).map_err(|e| EngineError::io(format!("creating {}", d.display()), e))?;
        }
        let cfg = dir.join(CONFIG_FILE);
        if !cfg.exists() {
            write_atomic(&cfg, config.to_toml().as_bytes())?;
        }
        Journal::create(&dir.join(JOURNAL_FILE))?;
        Ok(dir.clone())
    }

    pub fn open(config: Config) -> Result<Self> {
        let dir = config.data_dir.clone();
        let journal_path = dir.join(JOURNAL_FILE);
        if !journal_path.exists() {
            return Err(EngineError::NotInitialized(dir));
        }
        let lock = DirLock::acquire(&dir)?;
        let (journal, entries, recovery) = Journal::open(&journal_path)?;
        let audit_path = dir.join(AUDIT_FILE);
        let audit = File::create(&audit_path)
            .map(BufWriter::new)
            .map_err(|e| EngineError::io(format!("creating {}", audit_path.display()), e))?;
        let mut engine = Engine {
            pipeline: Pipeline::new(config.ingest.clone()),
            calibration: CalibrationState::new(config.calibration.clone()),
            config,
            dir,
            _lock: lock,
            journal,
            timeline: Timeline::new(),
            predictions: PredictionStore::new(),
            scenarios: BTreeMap::new(),
            runs: BTreeMap::new(),
            audit,
            recovery,
        };
        for (i, entry) in entries.into_iter().enumerate() {
            engine.apply(entry).map_err(|e| EngineError::Corrupt {
                line: i + 1,
                reason: format!("replay failed: {e}"),
            })?;
        }
        engine.flush_audit()?;
        engine.load_scenarios()?;
        engine.load_runs()?;
        log::info!(
            "opened {} with {} journal entries",
            engine.dir.display(),
            engine.recovery.entries
        );
        Ok(engine)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn calibration(&self) -> &CalibrationState {
        &self.calibration
    }

    pub fn predictions(&self) -> &PredictionStore {
        &self.predictions
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    /// Number of alerts raised so far; also the cursor of the newest one.
    pub fn alert_cursor(&self) -> u64 {
        self.pipeline.alerts.len() as u64
    }

    /// SHA-256 of the canonical JSON of the latest snapshot.
    pub fn snapshot_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.timeline.latest()).expect("snapshot serializes");
        hex(&Sha256::digest(bytes))
    }

    /// SHA-256 over the full delta log.
    pub fn log_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in self.timeline.deltas() {
            h.update(serde_json::to_vec(d).expect("delta serializes"));
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    pub fn status(&self) -> StatusDoc {
        let latest = self.timeline.latest();
        StatusDoc {
            data_dir: self.dir.clone(),
            journal_entries: self.journal.len(),
            deltas: self.timeline.len(),
            nodes: latest.node_count(),
            edges: latest.edge_count(),
            max_tick: self.timeline.max_tick(),
            horizon: self.timeline.horizon(),
            alerts: self.pipeline.alerts.len(),
            scenarios: self.scenarios.len(),
            runs: self.runs.len(),
            snapshot_hash: self.snapshot_hash(),
            recovery: self.recovery.clone(),
        }
    }

    /// Applies a journaled entry to in-memory state.
    fn apply(&mut self, entry: Entry) -> Result<Option<BatchReport>> {
        match entry {
            Entry::Delta { delta } => {
                self.timeline.apply_prepared(delta)?;
                Ok(None)
            }
            Entry::Batch { source, lines } => {
                self.claim_open_predictions();
                let out = self
                    .pipeline
                    .ingest_lines(lines.iter().map(String::as_str), source, &mut self.timeline)?;
                self.after_batch(out).map(Some)
            }
            Entry::Retry => {
                self.claim_open_predictions();
                let out = self.pipeline.retry_waiting(&mut self.timeline)?;
                self.after_batch(out).map(Some)
            }
            Entry::Predict { prediction } => {
                self.predictions.record_prediction(prediction)?;
                Ok(None)
            }
            Entry::Alert {
                rule,
                subject,
                tick,
                severity,
                message,
            } => {
                self.pipeline
                    .alerts
                    .raise(&rule, &subject, tick, severity, message, false);
                Ok(None)
            }
            Entry::AckAlert { id } => {
                self.pipeline
                    .alerts
                    .acknowledge(id)
                    .map_err(|_| EngineError::not_found("alert", id.to_string()))?;
                Ok(None)
            }
            Entry::AckParam { param } => {
                self.calibration.acknowledge(&param)?;
                Ok(None)
            }
        }
    }

    /// Observations answering an open prediction reach the graph through
    /// recalibration only.
    fn claim_open_predictions(&mut self) {
        self.pipeline.loader.claimed = self
            .predictions
            .open()
            .map(|p| (p.subject.clone(), p.measure.clone(), p.target_tick))
            .collect();
    }

    /// Journals `entry`, then applies it.
    fn commit(&mut self, entry: Entry) -> Result<Option<BatchReport>> {
        self.journal.append(&entry)?;
        let out = self.apply(entry);
        self.journal.sync()?;
        self.flush_audit()?;
        out
    }

    /// The feedback cycle that follows every batch: reconcile, recalibrate,
    /// falsify, expire.
    fn after_batch(&mut self, out: BatchOutcome) -> Result<BatchReport> {
        let mut report = BatchReport {
            total: out.total(),
            accepted: out.accepted,
            parked: out.parked,
            dropped: out.dropped,
            rejected: out.rejected,
            deltas: out.deltas.len(),
            rejections: out.rejections,
            alerts: out.alerts,
            ..BatchReport::default()
        };
        for p in &out.parked_events {
            *report.parked_by_reason.entry(p.reason.as_str().into()).or_default() += 1;
        }
        for p in &out.parked_records {
            *report.parked_by_reason.entry(p.reason.as_str().into()).or_default() += 1;
        }
        for d in &out.dropped_events {
            *report.dropped_by_reason.entry(d.reason.as_str().into()).or_default() += 1;
        }
        let skipped = out.dropped - out.dropped_events.len();
        if skipped > 0 {
            report.dropped_by_reason.insert("already-applied".into(), skipped);
        }

        let observed: Vec<_> = out.records.into_iter().filter(|r| !r.imputed).collect();
        // Claimed observations write no delta, so the newest observation can
        // lie past the timeline's last delta.
        let now = observed
            .iter()
            .map(|r| r.observed_tick)
            .chain([self.timeline.max_tick(), self.timeline.horizon()])
            .max()
            .unwrap_or_default();
        let discrepancies = self
            .predictions
            .reconcile(&observed, &self.calibration.config.tolerances);
        if !discrepancies.is_empty() {
            report.deltas += self
                .calibration
                .recalibrate(&mut self.timeline, &discrepancies, now)?
                .len();
            if self.config.falsify_each_cycle {
                let before: Vec<ParamId> = self.frozen();
                for id in self.calibration.falsify().falsified {
                    if before.contains(&id) {
                        continue;
                    }
                    let message = format!("{id} falsified; smoothing frozen until acknowledged");
                    if let Some(a) = self.pipeline.alerts.raise(
                        "parameter_falsified",
                        &id.to_string(),
                        now,
                        Severity::Warning,
                        message,
                        false,
                    ) {
                        report.alerts.push(a.clone());
                    }
                    report.falsified.push(id);
                }
            }
        }
        report.discrepancies = discrepancies;
        for p in self.predictions.expire(now, self.config.prediction_lateness) {
            let subject = format!("{}/{}", p.subject, p.measure);
            let message = format!("prediction {} for tick {} expired unobserved", p.id, p.target_tick);
            if let Some(a) = self.pipeline.alerts.raise(
                "prediction_expired",
                &subject,
                p.target_tick,
                Severity::Info,
                message,
                false,
            ) {
                report.alerts.push(a.clone());
            }
        }
        Ok(report)
    }

    fn frozen(&self) -> Vec<ParamId> {
        self.calibration
            .params()
            .filter(|(_, p)| p.falsified)
            .map(|(id, _)| id.clone())
            .collect()
    }

    fn flush_audit(&mut self) -> Result<()> {
        for entry in self.calibration.drain_audit() {
            let line = serde_json::to_string(&entry).map_err(|e| EngineError::Internal(e.to_string()))?;
            writeln!(self.audit, "{line}").map_err(|e| EngineError::io("writing audit log", e))?;
        }
        self.audit.flush().map_err(|e| EngineError::io("writing audit log", e))
    }

    /// Adds bootstrap nodes and edges at `tick`.
    pub fn load_graph(&mut self, nodes: Vec<EntityNode>, edges: Vec<EdgeRecord>, tick: Tick) -> Result<LoadReport> {
        let report = LoadReport {
            nodes: nodes.len(),
            edges: edges.len(),
            tick,
        };
        let mut writer = LoggedWriter {
            journal: &mut self.journal,
            timeline: &mut self.timeline,
        };
        use chaintwin_core::ingestion::DeltaWriter;
        let ops = nodes
            .into_iter()
            .map(|node| DeltaOp::AddNode { node })
            .chain(edges.into_iter().map(|edge| DeltaOp::AddEdge { edge }));
        let result = ops
            .map(|op| writer.commit(tick, op, None).map(drop))
            .collect::<std::result::Result<Vec<()>, _>>();
        self.journal.sync()?;
        result?;
        Ok(report)
    }

    /// Journals and ingests one batch of newline-delimited JSON events.
    pub fn ingest(&mut self, source: SourceKind, lines: Vec<String>) -> Result<BatchReport> {
        let report = self.commit(Entry::Batch { source, lines })?;
        Ok(report.expect("batches report"))
    }

    /// Re-runs events parked because their subject was unknown.
    pub fn retry_waiting(&mut self) -> Result<BatchReport> {
        let report = self.commit(Entry::Retry)?;
        Ok(report.expect("retries report"))
    }

    pub fn record_prediction(&mut self, prediction: NewPrediction) -> Result<u64> {
        let duplicate = self.predictions.open().any(|p| {
            p.subject == prediction.subject
                && p.measure == prediction.measure
                && p.target_tick == prediction.target_tick
        });
        if duplicate {
            return Err(EngineError::Conflict(format!(
                "an open prediction already exists for {}/{} at tick {}",
                prediction.subject, prediction.measure, prediction.target_tick
            )));
        }
        self.commit(Entry::Predict { prediction })?;
        Ok(self.predictions.counts().issued)
    }

    pub fn alerts_since(&self, since: u64, limit: usize) -> Page<AlertEvent> {
        let items: Vec<AlertEvent> = self.pipeline.alerts.since(since).iter().take(limit).cloned().collect();
        let next = items.last().map(|a| a.id).filter(|&id| id < self.alert_cursor());
        Page { items, next }
    }

    pub fn acknowledge_alert(&mut self, id: u64) -> Result<AlertEvent> {
        if self.pipeline.alerts.get(id).is_none() {
            return Err(EngineError::not_found("alert", id.to_string()));
        }
        self.commit(Entry::AckAlert { id })?;
        Ok(self.pipeline.alerts.get(id).expect("checked").clone())
    }

    pub fn acknowledge_param(&mut self, param: ParamId) -> Result<ParamDoc> {
        if self.calibration.param(&param).is_none() {
            return Err(EngineError::not_found("parameter", param.to_string()));
        }
        self.commit(Entry::AckParam { param: param.clone() })?;
        Ok(ParamDoc::of(&param, self.calibration.param(&param).expect("checked")))
    }

    /// Raises an engine alert unless its `(rule, subject, tick)` exists.
    fn raise(
        &mut self,
        rule: &str,
        subject: &str,
        tick: Tick,
        severity: Severity,
        message: String,
    ) -> Result<Option<AlertEvent>> {
        let exists = self
            .pipeline
            .alerts
            .all()
            .iter()
            .any(|a| a.rule == rule && a.subject == subject && a.tick == tick);
        if exists {
            return Ok(None);
        }
        self.commit(Entry::Alert {
            rule: rule.into(),
            subject: subject.into(),
            tick,
            severity,
            message,
        })?;
        Ok(self.pipeline.alerts.all().last().cloned())
    }

    fn load_scenarios(&mut self) -> Result<()> {
        for (id, bytes) in read_dir_json(&self.dir.join(SCENARIO_DIR), ".json")? {
            let s: Scenario = serde_json::from_slice(&bytes)
                .map_err(|e| EngineError::Internal(format!("scenario file {id}: {e}")))?;
            self.scenarios.insert(id, s);
        }
        Ok(())
    }

    fn load_runs(&mut self) -> Result<()> {
        for (id, bytes) in read_dir_json(&self.dir.join(RUN_DIR), ".run.json")? {
            let mut r: RunRecord =
                serde_json::from_slice(&bytes).map_err(|e| EngineError::Internal(format!("run file {id}: {e}")))?;
            if r.status == RunStatus::Running {
                r.status = RunStatus::Failed;
                r.error = Some("interrupted by shutdown".into());
            }
            self.runs.insert(id, r);
        }
        Ok(())
    }
}

/// `(stem, contents)` of every file in `dir` ending in `suffix`, by name.
fn read_dir_json(dir: &Path, suffix: &str) -> Result<Vec<(String, Vec<u8>)>> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(EngineError::io(format!("listing {}", dir.display()), e)),
    };
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| EngineError::io(format!("listing {}", dir.display()), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(suffix) else {
            continue;
        };
        if stem.contains('.') && suffix == ".json" {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| EngineError::io(format!("reading {name}"), e))?;
        out.push((stem.to_string(), bytes));
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests;
