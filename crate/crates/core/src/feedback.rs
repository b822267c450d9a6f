//! Prediction tracking, reconciliation against observations, and parameter
//! recalibration by exponential smoothing.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{DeltaOp, EdgeField, EdgeId, GraphDelta, NodeField, NodeId, Tick};
use crate::ingestion::{CleanRecord, CommitError, DeltaWriter, GraphReader};
use crate::num::round;

/// A calibrated quantity: one measure of one node or edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub subject: String,
    pub measure: String,
}

impl ParamId {
    pub fn new(subject: &str, measure: &str) -> Self {
        Self {
            subject: subject.to_string(),
            measure: measure.to_string(),
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject, self.measure)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("an open prediction already exists for {subject}/{measure} at tick {target_tick}")]
    DuplicateOpenPrediction {
        subject: String,
        measure: String,
        target_tick: Tick,
    },
    #[error("no calibration state for {0}")]
    UnknownParameter(ParamId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Open,
    Closed,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewPrediction {
    pub issued_tick: Tick,
    pub target_tick: Tick,
    pub subject: String,
    pub measure: String,
    pub predicted: f64,
    /// Plan or run that produced the value.
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub issued_tick: Tick,
    pub target_tick: Tick,
    pub subject: String,
    pub measure: String,
    pub predicted: f64,
    pub provenance: String,
    pub status: PredictionStatus,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionCounts {
    pub issued: u64,
    pub closed: u64,
    pub expired: u64,
    pub open: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    Absolute(f64),
    /// Fraction of the predicted magnitude.
    Relative(f64),
}

impl Tolerance {
    pub fn allowed(self, predicted: f64) -> f64 {
        match self {
            Tolerance::Absolute(a) => a,
            Tolerance::Relative(r) => r * predicted.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceTable {
    pub measures: BTreeMap<String, Tolerance>,
    /// Used for measures absent from the table.
    pub fallback: Tolerance,
}

impl Default for ToleranceTable {
    fn default() -> Self {
        let measures = [
            ("transit_time", Tolerance::Absolute(1.0)),
            ("lead_time", Tolerance::Absolute(1.0)),
            ("inventory", Tolerance::Relative(0.05)),
            ("cost_per_unit", Tolerance::Relative(0.01)),
            ("price", Tolerance::Relative(0.01)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            measures,
            fallback: Tolerance::Relative(0.01),
        }
    }
}

impl ToleranceTable {
    pub fn get(&self, measure: &str) -> Tolerance {
        self.measures.get(measure).copied().unwrap_or(self.fallback)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub prediction_id: u64,
    pub subject: String,
    pub measure: String,
    pub target_tick: Tick,
    pub predicted: f64,
    pub observed: f64,
    /// `observed − predicted`.
    pub residual: f64,
    /// Absolute tolerance applied.
    pub tolerance: f64,
    pub flagged: bool,
}

/// Open predictions keyed by `(subject, measure, target tick)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionStore {
    open: BTreeMap<(String, String, Tick), PredictionRecord>,
    next_id: u64,
    counts: PredictionCounts,
}

impl PredictionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_prediction(&mut self, p: NewPrediction) -> Result<u64, FeedbackError> {
        let key = (p.subject.clone(), p.measure.clone(), p.target_tick);
        if self.open.contains_key(&key) {
            return Err(FeedbackError::DuplicateOpenPrediction {
                subject: p.subject,
                measure: p.measure,
                target_tick: p.target_tick,
            });
        }
        self.next_id += 1;
        let id = self.next_id;
        self.open.insert(
            key,
            PredictionRecord {
                id,
                issued_tick: p.issued_tick,
                target_tick: p.target_tick,
                subject: p.subject,
                measure: p.measure,
                predicted: p.predicted,
                provenance: p.provenance,
                status: PredictionStatus::Open,
            },
        );
        self.counts.issued += 1;
        self.counts.open += 1;
        Ok(id)
    }

    pub fn open(&self) -> impl Iterator<Item = &PredictionRecord> {
        self.open.values()
    }

    pub fn counts(&self) -> PredictionCounts {
        self.counts
    }

    /// Closes every open prediction matched by an observation of the same
    /// subject, measure and tick. Unmatched observations are ignored.
    pub fn reconcile(&mut self, observations: &[CleanRecord], tolerances: &ToleranceTable) -> Vec<Discrepancy> {
        let mut out = Vec::new();
        for obs in observations {
            let key = (obs.subject.clone(), obs.measure.clone(), obs.observed_tick);
            let Some(mut p) = self.open.remove(&key) else { continue };
            p.status = PredictionStatus::Closed;
            self.counts.open -= 1;
            self.counts.closed += 1;
            let residual = obs.value - p.predicted;
            let tolerance = tolerances.get(&p.measure).allowed(p.predicted);
            out.push(Discrepancy {
                prediction_id: p.id,
                subject: p.subject,
                measure: p.measure,
                target_tick: p.target_tick,
                predicted: p.predicted,
                observed: obs.value,
                residual,
                tolerance,
                flagged: residual.abs() > tolerance,
            });
        }
        out
    }

    /// Expires predictions whose target tick plus `lateness` is before
    /// `now`.
    pub fn expire(&mut self, now: Tick, lateness: Tick) -> Vec<PredictionRecord> {
        let due: Vec<_> = self
            .open
            .iter()
            .filter(|(_, p)| p.target_tick.saturating_add(lateness) < now)
            .map(|(k, _)| k.clone())
            .collect();
        due.into_iter()
            .map(|k| {
                let mut p = self.open.remove(&k).expect("collected above");
                p.status = PredictionStatus::Expired;
                self.counts.open -= 1;
                self.counts.expired += 1;
                p
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Smoothing factor in `(0, 1]`.
    pub alpha: f64,
    pub alpha_by_measure: BTreeMap<String, f64>,
    /// Residuals kept per parameter.
    pub window: usize,
    pub min_samples: usize,
    /// Flagged fraction at or above which a parameter is falsified.
    pub threshold: f64,
    pub tolerances: ToleranceTable,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            alpha_by_measure: BTreeMap::new(),
            window: 10,
            min_samples: 5,
            threshold: 0.6,
            tolerances: ToleranceTable::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tick: Tick,
    pub residual: f64,
    pub flagged: bool,
    /// Observed no later than predicted plus tolerance.
    pub on_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    /// Unrounded smoothed value.
    pub estimate: f64,
    pub history: VecDeque<Sample>,
    pub falsified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditEntry {
    Discrepancy(Discrepancy),
    Update {
        tick: Tick,
        param: ParamId,
        old: f64,
        new: f64,
        /// Value written to the graph; `None` when unchanged.
        committed: Option<f64>,
    },
    Clamped {
        param: ParamId,
        raw: f64,
        clamped: f64,
    },
    Frozen {
        param: ParamId,
    },
    Falsified {
        param: ParamId,
        flagged: usize,
        samples: usize,
    },
    Acknowledged {
        param: ParamId,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FalsifyReport {
    /// Every parameter currently falsified, including earlier ones.
    pub falsified: Vec<ParamId>,
    /// Parameters with fewer samples than the minimum, with their count.
    pub insufficient: Vec<(ParamId, usize)>,
}

/// Graph field a measure maps to, for parameters that recalibration may
/// rewrite. State measures such as inventory are not parameters.
#[derive(Clone, Debug, PartialEq)]
enum Field {
    Node(NodeField),
    Edge(EdgeField),
}

impl Field {
    fn of(reader: &dyn GraphReader, p: &ParamId) -> Option<Field> {
        if reader.head_edge(&EdgeId::from(p.subject.as_str())).is_some() {
            let f = match p.measure.as_str() {
                "transit_time" => EdgeField::TransitTime,
                "cost_per_unit" => EdgeField::CostPerUnit,
                "capacity" => EdgeField::Capacity,
                "reliability" => EdgeField::Reliability,
                "carbon_per_unit" => EdgeField::CarbonPerUnit,
                _ => return None,
            };
            Some(Field::Edge(f))
        } else if reader.head_node(&NodeId::from(p.subject.as_str())).is_some() {
            let f = match p.measure.as_str() {
                "lead_time" => NodeField::LeadTime,
                "capacity" => NodeField::Capacity,
                "demand" => NodeField::DemandRate,
                "reliability" => NodeField::Reliability,
                "carbon_intensity" => NodeField::CarbonIntensity,
                _ => return None,
            };
            Some(Field::Node(f))
        } else {
            None
        }
    }

    fn current(&self, reader: &dyn GraphReader, subject: &str) -> Option<f64> {
        match self {
            Field::Node(f) => f.get(reader.head_node(&NodeId::from(subject))?),
            Field::Edge(f) => Some(reader.head_edge(&EdgeId::from(subject))?.weights.get(*f)),
        }
    }

    fn integer(&self) -> bool {
        matches!(
            self,
            Field::Node(NodeField::LeadTime | NodeField::Capacity | NodeField::DemandRate)
                | Field::Edge(EdgeField::TransitTime | EdgeField::Capacity)
        )
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Field::Edge(EdgeField::TransitTime) => (1.0, f64::INFINITY),
            Field::Edge(EdgeField::Reliability) | Field::Node(NodeField::Reliability) => (0.0, 1.0),
            Field::Edge(EdgeField::CostPerUnit) => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }

    fn op(&self, subject: &str, value: f64) -> DeltaOp {
        match self {
            Field::Node(f) => DeltaOp::SetNodeAttr {
                node: NodeId::from(subject),
                field: f.clone(),
                value,
            },
            Field::Edge(f) => DeltaOp::SetEdgeWeight {
                edge: EdgeId::from(subject),
                field: *f,
                value,
            },
        }
    }
}

/// Per-parameter smoothing state, residual windows and the audit trail.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub config: CalibrationConfig,
    params: BTreeMap<ParamId, ParamState>,
    audit: Vec<AuditEntry>,
}

impl CalibrationState {
    pub fn new(config: CalibrationConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn alpha_for(&self, measure: &str) -> f64 {
        self.config
            .alpha_by_measure
            .get(measure)
            .copied()
            .unwrap_or(self.config.alpha)
    }

    pub fn param(&self, id: &ParamId) -> Option<&ParamState> {
        self.params.get(id)
    }

    pub fn params(&self) -> impl Iterator<Item = (&ParamId, &ParamState)> {
        self.params.iter()
    }

    /// Smoothed value if the parameter has been calibrated, else the value
    /// in the graph.
    pub fn predict(&self, reader: &dyn GraphReader, subject: &str, measure: &str) -> Option<f64> {
        let id = ParamId::new(subject, measure);
        if let Some(p) = self.params.get(&id) {
            return Some(p.estimate);
        }
        Field::of(reader, &id)?.current(reader, subject)
    }

    /// Audit entries recorded since the last call.
    pub fn drain_audit(&mut self) -> Vec<AuditEntry> {
        core::mem::take(&mut self.audit)
    }

    fn state_for(&mut self, reader: &dyn GraphReader, d: &Discrepancy) -> &mut ParamState {
        let id = ParamId::new(&d.subject, &d.measure);
        self.params.entry(id.clone()).or_insert_with(|| {
            let estimate = Field::of(reader, &id)
                .and_then(|f| f.current(reader, &d.subject))
                .unwrap_or(d.predicted);
            ParamState {
                estimate,
                history: VecDeque::new(),
                falsified: false,
            }
        })
    }

    /// Smooths each parameter towards its observations and writes one delta
    /// per parameter whose graph value changes. Frozen parameters only
    /// record residuals. Edge reliability follows the on-time fraction of
    /// the transit-time window.
    pub fn recalibrate(
        &mut self,
        writer: &mut dyn DeltaWriter,
        discrepancies: &[Discrepancy],
        tick: Tick,
    ) -> Result<Vec<GraphDelta>, CommitError> {
        let window = self.config.window.max(1);
        let mut touched: BTreeSet<ParamId> = BTreeSet::new();
        for d in discrepancies {
            self.audit.push(AuditEntry::Discrepancy(d.clone()));
            let alpha = self.alpha_for(&d.measure);
            let st = self.state_for(writer, d);
            st.history.push_back(Sample {
                tick: d.target_tick,
                residual: d.residual,
                flagged: d.flagged,
                on_time: d.residual <= d.tolerance,
            });
            while st.history.len() > window {
                st.history.pop_front();
            }
            let id = ParamId::new(&d.subject, &d.measure);
            if st.falsified {
                self.audit.push(AuditEntry::Frozen { param: id });
                continue;
            }
            st.estimate += alpha * (d.observed - st.estimate);
            touched.insert(id);
        }

        let mut deltas = Vec::new();
        for id in &touched {
            let Some(field) = Field::of(writer, id) else { continue };
            let estimate = self.params[id].estimate;
            if let Some(delta) = self.write(writer, id, &field, estimate, tick)? {
                deltas.push(delta);
            }
            if id.measure == "transit_time" && matches!(field, Field::Edge(_)) {
                let rel_id = ParamId::new(&id.subject, "reliability");
                if self.params.get(&rel_id).is_some_and(|p| p.falsified) {
                    continue;
                }
                let hist = &self.params[id].history;
                let fraction = hist.iter().filter(|s| s.on_time).count() as f64 / hist.len() as f64;
                if let Some(delta) =
                    self.write(writer, &rel_id, &Field::Edge(EdgeField::Reliability), fraction, tick)?
                {
                    deltas.push(delta);
                }
            }
        }
        Ok(deltas)
    }

    /// Rounds, clamps and commits `value` unless it equals the graph value.
    fn write(
        &mut self,
        writer: &mut dyn DeltaWriter,
        id: &ParamId,
        field: &Field,
        value: f64,
        tick: Tick,
    ) -> Result<Option<GraphDelta>, CommitError> {
        let raw = if field.integer() { round(value) } else { value };
        let (lo, hi) = field.bounds();
        let target = raw.clamp(lo, hi);
        if target != raw {
            self.audit.push(AuditEntry::Clamped {
                param: id.clone(),
                raw,
                clamped: target,
            });
        }
        let old = field.current(writer, &id.subject).unwrap_or(f64::NAN);
        let changed = old != target;
        self.audit.push(AuditEntry::Update {
            tick,
            param: id.clone(),
            old,
            new: value,
            committed: changed.then_some(target),
        });
        if !changed {
            return Ok(None);
        }
        writer.commit(tick, field.op(&id.subject, target), None).map(Some)
    }

    /// Marks parameters whose flagged fraction reaches the threshold.
    /// Parameters below the minimum sample count are reported, not judged.
    pub fn falsify(&mut self) -> FalsifyReport {
        let mut report = FalsifyReport::default();
        for (id, st) in &mut self.params {
            let n = st.history.len();
            if st.falsified {
                report.falsified.push(id.clone());
                continue;
            }
            if n < self.config.min_samples {
                report.insufficient.push((id.clone(), n));
                continue;
            }
            let flagged = st.history.iter().filter(|s| s.flagged).count();
            if flagged as f64 / n as f64 >= self.config.threshold {
                st.falsified = true;
                self.audit.push(AuditEntry::Falsified {
                    param: id.clone(),
                    flagged,
                    samples: n,
                });
                report.falsified.push(id.clone());
            }
        }
        report
    }

    /// Operator review done: the parameter resumes smoothing with an empty
    /// window.
    pub fn acknowledge(&mut self, id: &ParamId) -> Result<(), FeedbackError> {
        let st = self
            .params
            .get_mut(id)
            .ok_or_else(|| FeedbackError::UnknownParameter(id.clone()))?;
        st.falsified = false;
        st.history.clear();
        self.audit.push(AuditEntry::Acknowledged { param: id.clone() });
        Ok(())
    }
}

/// Pluggable one-step forecaster.
pub trait Forecaster {
    fn observe(&mut self, value: f64);
    fn forecast(&self) -> Option<f64>;
}

/// Simple exponential smoothing: `level ← level + α·(x − level)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSmoothing {
    pub alpha: f64,
    pub level: Option<f64>,
}

impl ExponentialSmoothing {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, level: None }
    }
}

impl Forecaster for ExponentialSmoothing {
    fn observe(&mut self, value: f64) {
        self.level = Some(match self.level {
            Some(l) => l + self.alpha * (value - l),
            None => value,
        });
    }

    fn forecast(&self) -> Option<f64> {
        self.level
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeRecord, EntityKind, EntityNode, Timeline, WeightVector};
    use crate::ingestion::SubjectKind;
    use crate::provenance::{Provenance, SourceKind};

    fn prediction(target: Tick, predicted: f64) -> NewPrediction {
        NewPrediction {
            issued_tick: 0,
            target_tick: target,
            subject: "E1".into(),
            measure: "transit_time".into(),
            predicted,
            provenance: "run-1".into(),
        }
    }

    fn observation(tick: Tick, value: f64) -> CleanRecord {
        CleanRecord {
            subject: "E1".into(),
            subject_kind: SubjectKind::Edge,
            measure: "transit_time".into(),
            value,
            observed_tick: tick,
            provenance: Provenance {
                source: SourceKind::Logistics,
                source_event_id: alloc::format!("o{tick}"),
            },
            imputed: false,
            imputation: None,
        }
    }

    fn timeline(transit: Tick) -> Timeline {
        let mut tl = Timeline::new();
        tl.add_node(0, EntityNode::new("A", EntityKind::Warehouse)).unwrap();
        tl.add_node(0, EntityNode::new("B", EntityKind::Warehouse)).unwrap();
        let w = WeightVector {
            transit_time: transit,
            capacity: 10,
            ..WeightVector::default()
        };
        tl.add_edge(0, EdgeRecord::material("E1", "A", "B", w)).unwrap();
        tl
    }

    #[test]
    fn duplicate_open_prediction_is_refused() {
        let mut store = PredictionStore::new();
        assert_eq!(store.record_prediction(prediction(7, 4.0)), Ok(1));
        assert!(matches!(
            store.record_prediction(prediction(7, 5.0)),
            Err(FeedbackError::DuplicateOpenPrediction { .. })
        ));
        assert_eq!(store.record_prediction(prediction(8, 4.0)), Ok(2));
    }

    #[test]
    fn reconcile_flags_by_tolerance() {
        let mut store = PredictionStore::new();
        store.record_prediction(prediction(7, 4.0)).unwrap();
        store.record_prediction(prediction(8, 4.0)).unwrap();
        let tol = ToleranceTable::default();
        let d = store.reconcile(&[observation(7, 8.0), observation(8, 4.0), observation(9, 1.0)], &tol);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].residual, 4.0);
        assert!(d[0].flagged);
        assert!(!d[1].flagged);
        assert!(store.reconcile(&[observation(7, 8.0)], &tol).is_empty());
        let c = store.counts();
        assert_eq!((c.issued, c.closed, c.open), (2, 2, 0));
    }

    #[test]
    fn expiry_accounts_every_prediction() {
        let mut store = PredictionStore::new();
        store.record_prediction(prediction(3, 4.0)).unwrap();
        store.record_prediction(prediction(30, 4.0)).unwrap();
        let gone = store.expire(20, 10);
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].status, PredictionStatus::Expired);
        let c = store.counts();
        assert_eq!(c.issued, c.closed + c.expired + c.open);
    }

    fn discrepancy(predicted: f64, observed: f64) -> Discrepancy {
        Discrepancy {
            prediction_id: 1,
            subject: "E1".into(),
            measure: "transit_time".into(),
            target_tick: 1,
            predicted,
            observed,
            residual: observed - predicted,
            tolerance: 1.0,
            flagged: (observed - predicted).abs() > 1.0,
        }
    }

    #[test]
    fn smoothing_half_way() {
        let mut tl = timeline(4);
        let mut cal = CalibrationState::new(CalibrationConfig {
            alpha: 0.5,
            ..CalibrationConfig::default()
        });
        let deltas = cal.recalibrate(&mut tl, &[discrepancy(4.0, 8.0)], 1).unwrap();
        assert_eq!(tl.head_edge(&"E1".into()).unwrap().weights.transit_time, 6);
        // Transit and reliability (flagged late arrival: 0 of 1 on time).
        assert_eq!(deltas.len(), 2);
        assert_eq!(tl.head_edge(&"E1".into()).unwrap().weights.reliability, 0.0);
    }

    #[test]
    fn unchanged_value_is_suppressed() {
        let mut tl = timeline(4);
        let mut cal = CalibrationState::default();
        let deltas = cal.recalibrate(&mut tl, &[discrepancy(4.0, 4.0)], 1).unwrap();
        // Reliability 1.0 already: nothing written.
        assert!(deltas.is_empty());
    }

    #[test]
    fn clamping_is_logged() {
        let mut tl = timeline(1);
        let mut cal = CalibrationState::new(CalibrationConfig {
            alpha: 1.0,
            ..CalibrationConfig::default()
        });
        let mut d = discrepancy(1.0, 0.2);
        d.measure = "transit_time".into();
        cal.recalibrate(&mut tl, &[d], 1).unwrap();
        assert_eq!(tl.head_edge(&"E1".into()).unwrap().weights.transit_time, 1);
        assert!(cal
            .drain_audit()
            .iter()
            .any(|a| matches!(a, AuditEntry::Clamped { .. })));
    }

    #[test]
    fn falsification_boundary_and_freeze() {
        let mut tl = timeline(4);
        let mut cal = CalibrationState::default();
        let mut ds = alloc::vec![discrepancy(4.0, 9.0); 3];
        ds.extend([discrepancy(4.0, 4.0), discrepancy(4.0, 4.0)]);
        cal.recalibrate(&mut tl, &ds[..4], 1).unwrap();
        let r = cal.falsify();
        assert_eq!(r.insufficient, [(ParamId::new("E1", "transit_time"), 4)]);
        cal.recalibrate(&mut tl, &ds[4..], 2).unwrap();
        let r = cal.falsify();
        assert_eq!(r.falsified, [ParamId::new("E1", "transit_time")]);
        let before = cal.param(&ParamId::new("E1", "transit_time")).unwrap().estimate;
        cal.recalibrate(&mut tl, &[discrepancy(4.0, 20.0)], 3).unwrap();
        assert_eq!(cal.param(&ParamId::new("E1", "transit_time")).unwrap().estimate, before);
        cal.acknowledge(&ParamId::new("E1", "transit_time")).unwrap();
        assert!(cal.falsify().falsified.is_empty());
    }

    #[test]
    fn exponential_smoothing_forecaster() {
        let mut f = ExponentialSmoothing::new(0.5);
        assert_eq!(f.forecast(), None);
        f.observe(4.0);
        f.observe(8.0);
        assert_eq!(f.forecast(), Some(6.0));
    }
}
