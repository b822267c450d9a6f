use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::alerts::{AlertBook, AlertEvent, AlertRule, Severity};
use super::transform::{delta_for, CleanRecord, ParkReason};
use super::{CommitError, DeltaWriter};
use crate::graph::{GraphDelta, GraphError, Tick};
use crate::provenance::Provenance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParkedRecord {
    pub record: CleanRecord,
    pub reason: ParkReason,
    pub detail: alloc::string::String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Loaded {
    pub deltas: Vec<GraphDelta>,
    pub alerts: Vec<AlertEvent>,
    pub parked: Vec<ParkedRecord>,
    /// Records with no graph field (edge measures outside the weight
    /// vector) or claimed by the feedback loop; kept for reconciliation
    /// only.
    pub observations: Vec<CleanRecord>,
    /// Records whose provenance was already applied.
    pub skipped: usize,
}

/// Turns clean records into graph deltas and evaluates alert rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loader {
    pub rules: Vec<AlertRule>,
    /// `(subject, measure, tick)` keys whose measured values update the
    /// graph only through recalibration, such as those of open predictions.
    #[serde(default)]
    pub claimed: BTreeSet<(String, String, Tick)>,
    applied: BTreeSet<Provenance>,
}

impl Default for Loader {
    fn default() -> Self {
        Self::new(AlertRule::defaults())
    }
}

impl Loader {
    pub fn new(rules: Vec<AlertRule>) -> Self {
        Self {
            rules,
            claimed: BTreeSet::new(),
            applied: BTreeSet::new(),
        }
    }

    pub fn applied_count(&self) -> usize {
        self.applied.len()
    }

    fn evaluate(&self, record: &CleanRecord, book: &mut AlertBook, out: &mut Vec<AlertEvent>) {
        for rule in self.rules.iter().filter(|r| r.measure == record.measure) {
            if !rule.comparator.holds(record.value, rule.threshold) {
                continue;
            }
            let message = format!(
                "{} {} = {} {} {}{}",
                record.subject,
                record.measure,
                record.value,
                rule.comparator.symbol(),
                rule.threshold,
                if record.imputed { " (imputed)" } else { "" }
            );
            if let Some(a) = book.raise(
                &rule.name,
                &record.subject,
                record.observed_tick,
                rule.severity,
                message,
                record.imputed,
            ) {
                out.push(a.clone());
            }
        }
    }

    /// Applies records in order. Replaying a record with an applied
    /// provenance is a no-op.
    pub fn load(
        &mut self,
        records: Vec<CleanRecord>,
        writer: &mut dyn DeltaWriter,
        book: &mut AlertBook,
    ) -> Result<Loaded, CommitError> {
        let mut out = Loaded::default();
        for record in records {
            if self.applied.contains(&record.provenance) {
                out.skipped += 1;
                continue;
            }
            let horizon = writer.horizon();
            if record.observed_tick < horizon {
                let detail = format!("tick {} precedes horizon {}", record.observed_tick, horizon);
                if let Some(a) = book.raise(
                    "stale_tick",
                    &record.subject,
                    record.observed_tick,
                    Severity::Info,
                    format!("{} {}: {}", record.subject, record.measure, detail),
                    record.imputed,
                ) {
                    out.alerts.push(a.clone());
                }
                out.parked.push(ParkedRecord {
                    record,
                    reason: ParkReason::StaleTick,
                    detail,
                });
                continue;
            }
            let key = (record.subject.clone(), record.measure.clone(), record.observed_tick);
            let claimed = !record.imputed && self.claimed.contains(&key);
            let Some(op) = delta_for(&record).filter(|_| !claimed) else {
                self.evaluate(&record, book, &mut out.alerts);
                out.observations.push(record);
                continue;
            };
            match writer.commit(record.observed_tick, op, Some(record.provenance.clone())) {
                Ok(delta) => {
                    self.applied.insert(record.provenance.clone());
                    out.deltas.push(delta);
                    self.evaluate(&record, book, &mut out.alerts);
                }
                Err(CommitError::Graph(e)) => {
                    let reason = match e {
                        GraphError::StaleTick { .. } => ParkReason::StaleTick,
                        _ => ParkReason::Invalid,
                    };
                    out.parked.push(ParkedRecord {
                        record,
                        reason,
                        detail: e.to_string(),
                    });
                }
                Err(e @ CommitError::Storage(_)) => return Err(e),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityKind, EntityNode, Timeline};
    use crate::ingestion::transform::SubjectKind;
    use crate::provenance::SourceKind;

    fn record(id: &str, tick: u64, measure: &str, value: f64) -> CleanRecord {
        CleanRecord {
            subject: "W1".into(),
            subject_kind: SubjectKind::Node,
            measure: measure.into(),
            value,
            observed_tick: tick,
            provenance: Provenance {
                source: SourceKind::Iot,
                source_event_id: id.into(),
            },
            imputed: false,
            imputation: None,
        }
    }

    fn timeline() -> Timeline {
        let mut tl = Timeline::new();
        tl.add_node(0, EntityNode::new("W1", EntityKind::Warehouse).with_inventory(10))
            .unwrap();
        tl
    }

    #[test]
    fn low_inventory_raises_critical_alert() {
        let mut tl = timeline();
        let mut book = AlertBook::new();
        let mut loader = Loader::default();
        let out = loader
            .load(alloc::vec![record("a", 2, "inventory", 3.0)], &mut tl, &mut book)
            .unwrap();
        assert_eq!(out.deltas.len(), 1);
        assert_eq!(out.alerts[0].rule, "low_inventory");
        assert_eq!(out.alerts[0].severity, Severity::Critical);
        assert_eq!(tl.head_node(&"W1".into()).unwrap().state.inventory, 3);
    }

    #[test]
    fn replay_is_a_no_op() {
        let mut tl = timeline();
        let mut book = AlertBook::new();
        let mut loader = Loader::default();
        let batch = alloc::vec![record("a", 2, "inventory", 30.0), record("b", 3, "temperature", 4.0)];
        loader.load(batch.clone(), &mut tl, &mut book).unwrap();
        let before = tl.len();
        let again = loader.load(batch, &mut tl, &mut book).unwrap();
        assert!(again.deltas.is_empty());
        assert_eq!(again.skipped, 2);
        assert_eq!(tl.len(), before);
    }

    #[test]
    fn stale_record_is_parked_with_info_alert() {
        let mut tl = timeline();
        tl.advance_horizon(5);
        let mut book = AlertBook::new();
        let out = Loader::default()
            .load(alloc::vec![record("a", 2, "inventory", 30.0)], &mut tl, &mut book)
            .unwrap();
        assert_eq!(out.parked[0].reason, ParkReason::StaleTick);
        assert_eq!(out.alerts[0].severity, Severity::Info);
    }

    #[test]
    fn claimed_measures_are_observed_not_written() {
        let mut tl = timeline();
        let mut book = AlertBook::new();
        let mut loader = Loader::default();
        loader.claimed.insert(("W1".into(), "lead_time".into(), 2));
        let batch = alloc::vec![record("a", 2, "lead_time", 6.0), record("b", 3, "lead_time", 7.0)];
        let out = loader.load(batch, &mut tl, &mut book).unwrap();
        assert_eq!(out.observations.len(), 1);
        assert_eq!(out.observations[0].observed_tick, 2);
        assert_eq!(out.deltas.len(), 1);
        assert_eq!(tl.head_node(&"W1".into()).unwrap().attrs.lead_time, Some(7));
    }

    #[test]
    fn empty_batch_changes_nothing() {
        let mut tl = timeline();
        let mut book = AlertBook::new();
        let out = Loader::default().load(Vec::new(), &mut tl, &mut book).unwrap();
        assert_eq!(out, Loaded::default());
    }
}
