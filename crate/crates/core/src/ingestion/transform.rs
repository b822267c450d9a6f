use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::extract::RawEvent;
use super::GraphReader;
use crate::graph::{DeltaOp, EdgeField, EdgeId, NodeField, NodeId, Tick};
use crate::num::is_whole;
use crate::provenance::{Provenance, SourceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Node,
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Last observation carried forward.
    Locf,
    /// The subject's declared default.
    Default,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub subject: String,
    pub subject_kind: SubjectKind,
    /// Canonical measure name.
    pub measure: String,
    /// Normalized to the measure's canonical unit.
    pub value: f64,
    pub observed_tick: Tick,
    pub provenance: Provenance,
    pub imputed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputation: Option<Imputation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Duplicate,
    Range,
    NoBasis,
    Unit,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Duplicate => "duplicate",
            DropReason::Range => "range",
            DropReason::NoBasis => "no-basis",
            DropReason::Unit => "unit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParkReason {
    UnknownSubject,
    /// Older than the source's lateness window.
    Late,
    /// Before the committed horizon of the timeline.
    StaleTick,
    /// The graph refused the resulting delta.
    Invalid,
}

impl ParkReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ParkReason::UnknownSubject => "unknown-subject",
            ParkReason::Late => "late",
            ParkReason::StaleTick => "stale-tick",
            ParkReason::Invalid => "invalid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub event: RawEvent,
    pub reason: DropReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parked {
    pub event: RawEvent,
    pub reason: ParkReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transformed {
    pub records: Vec<CleanRecord>,
    pub dropped: Vec<Dropped>,
    pub parked: Vec<Parked>,
}

/// Closed validity interval of a measure; `None` bounds are open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    /// Values must be whole numbers.
    #[serde(default)]
    pub integer: bool,
}

impl ValueRange {
    pub const fn new(min: Option<f64>, max: Option<f64>, integer: bool) -> Self {
        Self { min, max, integer }
    }

    pub fn admits(&self, v: f64) -> bool {
        v.is_finite()
            && self.min.is_none_or(|m| v >= m)
            && self.max.is_none_or(|m| v <= m)
            && (!self.integer || is_whole(v))
    }
}

/// Maps alternative measure names onto the canonical ones.
pub fn canonical_measure(measure: &str) -> &str {
    match measure {
        "cost" => "cost_per_unit",
        "demand_rate" => "demand",
        "carbon" => "carbon_per_unit",
        "lead" => "lead_time",
        "transit" => "transit_time",
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dimension {
    Count,
    Temperature,
    Ticks,
    Other,
}

fn dimension(measure: &str) -> Dimension {
    match measure {
        "inventory" | "backlog" | "demand" | "capacity" => Dimension::Count,
        "temperature" => Dimension::Temperature,
        "transit_time" | "lead_time" => Dimension::Ticks,
        _ => Dimension::Other,
    }
}

/// Static unit registry: converts `value` in `unit` to the canonical unit of
/// the measure (units, °C, ticks).
pub fn normalize_unit(measure: &str, value: f64, unit: Option<&str>) -> Option<f64> {
    let Some(unit) = unit else { return Some(value) };
    let unit = unit.to_ascii_lowercase();
    match (dimension(measure), unit.as_str()) {
        (Dimension::Count, "unit" | "units" | "each" | "ea") => Some(value),
        (Dimension::Count, "dozen" | "dz") => Some(value * 12.0),
        (Dimension::Count, "gross") => Some(value * 144.0),
        (Dimension::Temperature, "c" | "celsius" | "degc") => Some(value),
        (Dimension::Temperature, "f" | "fahrenheit" | "degf") => Some((value - 32.0) * 5.0 / 9.0),
        (Dimension::Temperature, "k" | "kelvin") => Some(value - 273.15),
        (Dimension::Ticks, "tick" | "ticks") => Some(value),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Ticks an event may trail the newest tick of its source.
    pub lateness: Tick,
    pub ranges: BTreeMap<String, ValueRange>,
    /// Declared defaults per subject and measure, used when no prior
    /// observation exists.
    pub defaults: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        let ranges = [
            ("inventory", ValueRange::new(Some(0.0), None, true)),
            ("backlog", ValueRange::new(Some(0.0), None, true)),
            ("demand", ValueRange::new(Some(0.0), None, true)),
            ("capacity", ValueRange::new(Some(0.0), None, true)),
            ("reliability", ValueRange::new(Some(0.0), Some(1.0), false)),
            ("temperature", ValueRange::new(Some(-100.0), Some(200.0), false)),
            ("transit_time", ValueRange::new(Some(1.0), None, true)),
            ("lead_time", ValueRange::new(Some(0.0), None, true)),
            ("price", ValueRange::new(Some(0.0), None, false)),
            ("carbon_per_unit", ValueRange::new(Some(0.0), None, false)),
            ("carbon_intensity", ValueRange::new(Some(0.0), None, false)),
            ("disruption_flag", ValueRange::new(Some(0.0), Some(1.0), true)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            lateness: 10,
            ranges,
            defaults: BTreeMap::new(),
        }
    }
}

/// Mutable state carried between batches: dedup keys, last observations
/// and the newest tick seen per source.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransformState {
    pub config: TransformConfig,
    seen: BTreeSet<(SourceKind, String)>,
    last: BTreeMap<(String, String), f64>,
    newest: BTreeMap<SourceKind, Tick>,
}

impl TransformState {
    pub fn new(config: TransformConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn last_value(&self, subject: &str, measure: &str) -> Option<f64> {
        self.last.get(&(subject.to_string(), measure.to_string())).copied()
    }

    /// Lowest tick the source still accepts.
    pub fn watermark(&self, source: SourceKind) -> Tick {
        self.newest
            .get(&source)
            .map_or(0, |t| t.saturating_sub(self.config.lateness))
    }

    /// Lowest watermark across the sources seen so far. Nothing earlier
    /// can still arrive in order, so the timeline horizon may move here.
    pub fn committed_watermark(&self) -> Tick {
        self.newest
            .values()
            .min()
            .map_or(0, |t| t.saturating_sub(self.config.lateness))
    }

    fn default_for(&self, subject: &str, measure: &str) -> Option<f64> {
        self.config.defaults.get(subject)?.get(measure).copied()
    }
}

fn subject_kind(graph: &dyn GraphReader, subject: &str) -> Option<SubjectKind> {
    if graph.head_node(&NodeId::from(subject)).is_some() {
        Some(SubjectKind::Node)
    } else if graph.head_edge(&EdgeId::from(subject)).is_some() {
        Some(SubjectKind::Edge)
    } else {
        None
    }
}

/// Validates, deduplicates, imputes and normalizes events in intake order.
/// Events about unknown subjects are parked before they consume their
/// dedup key, so a retry after the subject appears is accepted.
pub fn transform(events: Vec<RawEvent>, state: &mut TransformState, graph: &dyn GraphReader) -> Transformed {
    let mut out = Transformed::default();
    for event in events {
        let Some(kind) = subject_kind(graph, &event.subject) else {
            out.parked.push(Parked {
                event,
                reason: ParkReason::UnknownSubject,
                detail: None,
            });
            continue;
        };
        if !state.seen.insert((event.source, event.source_event_id.clone())) {
            out.dropped.push(Dropped {
                event,
                reason: DropReason::Duplicate,
            });
            continue;
        }
        if event.observed_tick < state.watermark(event.source) {
            out.parked.push(Parked {
                event,
                reason: ParkReason::Late,
                detail: None,
            });
            continue;
        }
        let newest = state.newest.entry(event.source).or_insert(event.observed_tick);
        *newest = (*newest).max(event.observed_tick);

        let measure = canonical_measure(&event.measure).to_string();
        let key = (event.subject.clone(), measure.clone());
        let (value, imputation) = match event.value {
            Some(raw) => match normalize_unit(&measure, raw.as_f64(), event.unit.as_deref()) {
                Some(v) => (v, None),
                None => {
                    out.dropped.push(Dropped {
                        event,
                        reason: DropReason::Unit,
                    });
                    continue;
                }
            },
            None => match state.last.get(&key) {
                Some(&v) => (v, Some(Imputation::Locf)),
                None => match state.default_for(&event.subject, &measure) {
                    Some(v) => (v, Some(Imputation::Default)),
                    None => {
                        out.dropped.push(Dropped {
                            event,
                            reason: DropReason::NoBasis,
                        });
                        continue;
                    }
                },
            },
        };
        let in_range = state.config.ranges.get(&measure).is_none_or(|r| r.admits(value));
        if !in_range || !value.is_finite() {
            out.dropped.push(Dropped {
                event,
                reason: DropReason::Range,
            });
            continue;
        }
        state.last.insert(key, value);
        out.records.push(CleanRecord {
            subject: event.subject,
            subject_kind: kind,
            measure,
            value,
            observed_tick: event.observed_tick,
            provenance: Provenance {
                source: event.source,
                source_event_id: event.source_event_id,
            },
            imputed: imputation.is_some(),
            imputation,
        });
    }
    out
}

/// Delta operation for a record, or `None` for observation-only measures.
pub fn delta_for(record: &CleanRecord) -> Option<DeltaOp> {
    match record.subject_kind {
        SubjectKind::Node => {
            let field = match record.measure.as_str() {
                "inventory" => NodeField::Inventory,
                "backlog" => NodeField::Backlog,
                "capacity" => NodeField::Capacity,
                "lead_time" => NodeField::LeadTime,
                "demand" => NodeField::DemandRate,
                "reliability" => NodeField::Reliability,
                "carbon_intensity" => NodeField::CarbonIntensity,
                other => NodeField::Custom(other.to_string()),
            };
            Some(DeltaOp::SetNodeAttr {
                node: NodeId::from(record.subject.as_str()),
                field,
                value: record.value,
            })
        }
        SubjectKind::Edge => {
            let field = match record.measure.as_str() {
                "cost_per_unit" => EdgeField::CostPerUnit,
                "transit_time" => EdgeField::TransitTime,
                "capacity" => EdgeField::Capacity,
                "reliability" => EdgeField::Reliability,
                "carbon_per_unit" => EdgeField::CarbonPerUnit,
                _ => return None,
            };
            Some(DeltaOp::SetEdgeWeight {
                edge: EdgeId::from(record.subject.as_str()),
                field,
                value: record.value,
            })
        }
    }
}
