//! Extract, transform and load of telemetry events.
//!
//! [`extract`] parses newline-delimited JSON into [`RawEvent`]s,
//! [`transform`] deduplicates, imputes gaps, normalizes units and checks
//! ranges, and [`Loader::load`] turns the surviving [`CleanRecord`]s into
//! graph deltas and threshold alerts. [`Pipeline`] chains the three and
//! carries the state that spans batches.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{DeltaOp, EdgeId, EdgeRecord, EntityNode, GraphDelta, GraphError, NodeId, Tick, Timeline};
use crate::provenance::{Provenance, SourceKind};

mod alerts;
mod extract;
mod load;
mod transform;

pub use alerts::{AlertBook, AlertEvent, AlertRule, Comparator, Severity, UnknownAlert};
pub use extract::{extract, Extracted, RawEvent, RawValue, Rejection};
pub use load::{Loaded, Loader, ParkedRecord};
pub use transform::{
    canonical_measure, delta_for, normalize_unit, transform, CleanRecord, DropReason, Dropped, Imputation, ParkReason,
    Parked, SubjectKind, TransformConfig, TransformState, Transformed, ValueRange,
};

/// Read access to the newest version of graph entities.
pub trait GraphReader {
    fn head_node(&self, id: &NodeId) -> Option<&EntityNode>;
    fn head_edge(&self, id: &EdgeId) -> Option<&EdgeRecord>;
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CommitError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("storage: {0}")]
    Storage(String),
}

/// Destination of graph deltas. A persistent writer stores the delta
/// before applying it.
pub trait DeltaWriter: GraphReader {
    fn horizon(&self) -> Tick;
    fn advance_horizon(&mut self, tick: Tick);
    fn commit(&mut self, tick: Tick, op: DeltaOp, provenance: Option<Provenance>) -> Result<GraphDelta, CommitError>;
}

impl GraphReader for Timeline {
    fn head_node(&self, id: &NodeId) -> Option<&EntityNode> {
        Timeline::head_node(self, id)
    }

    fn head_edge(&self, id: &EdgeId) -> Option<&EdgeRecord> {
        Timeline::head_edge(self, id)
    }
}

impl DeltaWriter for Timeline {
    fn horizon(&self) -> Tick {
        Timeline::horizon(self)
    }

    fn advance_horizon(&mut self, tick: Tick) {
        Timeline::advance_horizon(self, tick);
    }

    fn commit(&mut self, tick: Tick, op: DeltaOp, provenance: Option<Provenance>) -> Result<GraphDelta, CommitError> {
        Ok(self.append(tick, op, provenance)?.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default = "AlertRule::defaults")]
    pub rules: Vec<AlertRule>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            transform: TransformConfig::default(),
            rules: AlertRule::defaults(),
        }
    }
}

/// Result of one batch. `accepted + parked + dropped + rejected` equals the
/// number of input lines (or events).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub accepted: usize,
    pub parked: usize,
    pub dropped: usize,
    pub rejected: usize,
    pub deltas: Vec<GraphDelta>,
    pub alerts: Vec<AlertEvent>,
    pub rejections: Vec<Rejection>,
    pub dropped_events: Vec<Dropped>,
    pub parked_events: Vec<Parked>,
    pub parked_records: Vec<ParkedRecord>,
    pub observations: Vec<CleanRecord>,
    /// Every record that passed transform, in order.
    pub records: Vec<CleanRecord>,
}

impl BatchOutcome {
    pub fn total(&self) -> usize {
        self.accepted + self.parked + self.dropped + self.rejected
    }
}

/// Extract, transform and load with state carried across batches.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub transform: TransformState,
    pub loader: Loader,
    pub alerts: AlertBook,
    seq: u64,
    /// Events waiting for their subject to appear.
    waiting: Vec<RawEvent>,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self::new(PipelineConfig::default())
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            transform: TransformState::new(config.transform),
            loader: Loader::new(config.rules),
            alerts: AlertBook::new(),
            seq: 0,
            waiting: Vec::new(),
        }
    }

    /// Next intake sequence number.
    pub fn next_seq(&self) -> u64 {
        self.seq
    }

    pub fn waiting(&self) -> &[RawEvent] {
        &self.waiting
    }

    pub fn ingest_lines<'a>(
        &mut self,
        lines: impl IntoIterator<Item = &'a str>,
        source: SourceKind,
        writer: &mut dyn DeltaWriter,
    ) -> Result<BatchOutcome, CommitError> {
        let extracted = extract(lines, source, &mut self.seq);
        let mut out = self.ingest_events(extracted.events, writer)?;
        out.rejected = extracted.rejections.len();
        out.rejections = extracted.rejections;
        Ok(out)
    }

    /// Events must already be numbered in intake order.
    pub fn ingest_events(
        &mut self,
        events: Vec<RawEvent>,
        writer: &mut dyn DeltaWriter,
    ) -> Result<BatchOutcome, CommitError> {
        if let Some(last) = events.last() {
            self.seq = self.seq.max(last.received_seq + 1);
        }
        let t = transform(events, &mut self.transform, writer);
        let loaded = self.loader.load(t.records.clone(), writer, &mut self.alerts)?;
        self.waiting.extend(
            t.parked
                .iter()
                .filter(|p| p.reason == ParkReason::UnknownSubject)
                .map(|p| p.event.clone()),
        );
        let committed = self.transform.committed_watermark();
        writer.advance_horizon(committed);
        Ok(BatchOutcome {
            accepted: t.records.len() - loaded.parked.len() - loaded.skipped,
            parked: t.parked.len() + loaded.parked.len(),
            dropped: t.dropped.len() + loaded.skipped,
            rejected: 0,
            deltas: loaded.deltas,
            alerts: loaded.alerts,
            rejections: Vec::new(),
            dropped_events: t.dropped,
            parked_events: t.parked,
            parked_records: loaded.parked,
            observations: loaded.observations,
            records: t.records,
        })
    }

    /// Re-runs events parked for an unknown subject.
    pub fn retry_waiting(&mut self, writer: &mut dyn DeltaWriter) -> Result<BatchOutcome, CommitError> {
        let events = core::mem::take(&mut self.waiting);
        self.ingest_events(events, writer)
    }
}
